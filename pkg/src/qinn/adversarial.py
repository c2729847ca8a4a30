"""FGSM attack generation and the attack-vs-defense evaluation protocol.

Threat model: the attacker has full access to the deployed model's loss
function, but dropout is part of the deployed model, so on a defended
network every loss evaluation draws a fresh mask realization. The attack
gradient is therefore estimated from stochastic loss queries (central
differences, one fresh realization per evaluation); on an undefended
network this estimate coincides with the exact backprop gradient, which is
what the fast path computes. The defender answers each attacked query
through its own independent realization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError
from .models import Model
from .seeding import rng_for
from .tensor import Tensor, cross_entropy_loss


@dataclass
class AttackConfig:
    epsilons: tuple[float, ...] = (0.0, 0.05, 0.1, 0.15, 0.2)
    clamp: tuple[float, float] = (0.0, 1.0)
    dropout_p: float = 0.0
    seed: int = 0

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        if any(e < 0 for e in eps):
            raise ConfigurationError(f"negative epsilon in {eps}")
        if list(eps) != sorted(eps) or not eps or eps[0] != 0.0:
            raise ConfigurationError(
                f"epsilon grid must be ascending and start at 0, got {eps}")
        self.epsilons = eps
        if not 0.0 <= self.dropout_p <= 1.0:
            raise ConfigurationError(
                f"dropout_p must sit in [0,1], got {self.dropout_p}")


@dataclass
class RobustnessCurve:
    rows: list[dict] = field(default_factory=list)  # {p, epsilon, accuracy}
    n_samples: int = 0

    def accuracy(self, p: float, epsilon: float) -> float:
        for row in self.rows:
            if row["p"] == p and row["epsilon"] == epsilon:
                return row["accuracy"]
        raise KeyError(f"no row for p={p}, epsilon={epsilon}")


def input_gradient(model: Model, images: np.ndarray, labels: np.ndarray,
                   dropout_p: float = 0.0,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """d(loss)/d(input) through a single network realization."""
    x = Tensor(images, requires_grad=True)
    logits = model.forward(x, dropout_p=dropout_p, rng=rng)
    loss = cross_entropy_loss(logits, labels)
    loss.backward()
    return x.grad


def attack_gradient_through_dropout(model: Model, images: np.ndarray,
                                    labels: np.ndarray, p: float,
                                    seed: int) -> np.ndarray:
    """Exact loss gradient through one fresh dropout realization.

    This is the white-box gradient an attacker would get if it could pin a
    single realization of the defense. ``evaluate_robustness`` instead uses
    ``loss_query_gradient`` for p > 0, because the deployed stochastic model
    resamples its mask on every loss evaluation.
    """
    rng = rng_for(seed, "attack-mask") if p > 0.0 else None
    return input_gradient(model, images, labels, dropout_p=p, rng=rng)


def _batch_losses(model: Model, images: np.ndarray, labels: np.ndarray,
                  dropout_p: float, rng) -> np.ndarray:
    logits = model.forward(Tensor(images), dropout_p=dropout_p, rng=rng).data
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    return lse - z[np.arange(len(labels)), labels]


def loss_query_gradient(model: Model, images: np.ndarray, labels: np.ndarray,
                        p: float, seed: int, step: float = 1e-4) -> np.ndarray:
    """Central-difference gradient estimate through the deployed loss.

    Each loss evaluation draws its own mask realization, exactly as the
    deployed defense behaves, so for p > 0 the per-element signs decay into
    realization noise. For p = 0 the loss is deterministic and the estimate
    matches the true gradient.
    """
    rng = rng_for(seed, "loss-queries")
    n = len(labels)
    flat = images.reshape(n, -1)
    grad = np.zeros_like(flat)
    for col in range(flat.shape[1]):
        shifted = flat.copy()
        shifted[:, col] += step
        plus = _batch_losses(model, shifted.reshape(images.shape), labels,
                             p, rng if p > 0.0 else None)
        shifted[:, col] -= 2.0 * step
        minus = _batch_losses(model, shifted.reshape(images.shape), labels,
                              p, rng if p > 0.0 else None)
        grad[:, col] = (plus - minus) / (2.0 * step)
    return grad.reshape(images.shape)


def fgsm_step(images: np.ndarray, grad: np.ndarray, epsilon: float,
              clamp: tuple[float, float] = (0.0, 1.0)) -> np.ndarray:
    if epsilon < 0.0:
        raise ConfigurationError(
            f"epsilon must be non-negative, got {epsilon}; the attack only "
            f"increases the loss")
    return np.clip(images + epsilon * np.sign(grad), clamp[0], clamp[1])


def fgsm(model: Model, images: np.ndarray, labels: np.ndarray,
         epsilon: float, dropout_p: float = 0.0, seed: int = 0,
         clamp: tuple[float, float] = (0.0, 1.0)) -> np.ndarray:
    """x* = clamp(x + epsilon sign(grad_x L)); epsilon 0 returns x exactly."""
    if epsilon < 0.0:
        raise ConfigurationError(f"epsilon must be non-negative, got {epsilon}")
    if epsilon == 0.0:
        return images.copy()
    grad = attack_gradient_through_dropout(model, images, labels,
                                           dropout_p, seed)
    return fgsm_step(images, grad, epsilon, clamp)


def evaluate_robustness(model: Model, images: np.ndarray, labels: np.ndarray,
                        config: AttackConfig) -> RobustnessCurve:
    """Accuracy per epsilon under the configured defense probability.

    The attack direction is computed once per sample (exact gradient for
    p = 0, stochastic loss queries for p > 0) and scaled over the epsilon
    grid. Each sample draws one defender realization shared across the grid,
    so the epsilon = 0 column equals clean accuracy under the same defense.
    """
    if len(labels) == 0:
        raise DataError("empty dataset")
    p = config.dropout_p
    curve = RobustnessCurve(n_samples=len(labels))
    if p == 0.0:
        grad = input_gradient(model, images, labels)
    else:
        grad = loss_query_gradient(model, images, labels, p, config.seed)
    for epsilon in config.epsilons:
        attacked = images.copy() if epsilon == 0.0 else \
            fgsm_step(images, grad, epsilon, config.clamp)
        if p == 0.0:
            correct = int((model.predict(attacked) == labels).sum())
        else:
            correct = 0
            for i in range(len(labels)):
                defend_rng = rng_for(config.seed, "defend", i)
                logits = model.forward(Tensor(attacked[i:i + 1]), dropout_p=p,
                                       rng=defend_rng)
                correct += int(logits.data.argmax(axis=1)[0] == labels[i])
        curve.rows.append({"p": p, "epsilon": epsilon,
                           "accuracy": correct / len(labels)})
    return curve
