"""Seeded training loop with best-epoch selection on test loss."""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import DataError, NumericError
from .models import Model
from .optim import Adam
from .seeding import rng_for
from .tensor import Tensor, cross_entropy_loss


@dataclass
class TrainReport:
    seed: int
    epochs: int
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    test_loss: list[float] = field(default_factory=list)
    test_acc: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_test_acc: float = 0.0
    best_test_loss: float = float("inf")
    wall_clock: float = 0.0
    checksum: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def parameter_checksum(model: Model) -> str:
    digest = hashlib.sha256()
    for p in model.parameters():
        digest.update(p.data.astype("<f8").tobytes())
    return digest.hexdigest()


def evaluate(model: Model, images: np.ndarray, labels: np.ndarray,
             batch_size: int = 256) -> tuple[float, float]:
    """(mean cross-entropy, accuracy) over a dataset, dropout off."""
    losses, correct = [], 0
    for start in range(0, len(labels), batch_size):
        xb = images[start:start + batch_size]
        yb = labels[start:start + batch_size]
        logits = model.forward(Tensor(xb))
        losses.append(cross_entropy_loss(logits, yb).item() * len(yb))
        correct += int((logits.data.argmax(axis=1) == yb).sum())
    return sum(losses) / len(labels), correct / len(labels)


def train(model: Model, train_images: np.ndarray, train_labels: np.ndarray,
          test_images: np.ndarray, test_labels: np.ndarray, epochs: int,
          seed: int, batch_size: int = 32, lr: float = 1e-3,
          restore_best: bool = True, dropout_p: float = 0.0) -> TrainReport:
    """Adam training; the headline accuracy is taken at the minimum-test-loss
    epoch, and (by default) those parameters are restored at the end.

    ``dropout_p`` co-trains the model under its own defense noise (a fresh
    mask per batch forward), which keeps deployment-time dropout from costing
    clean accuracy; evaluation always runs with dropout off.
    """
    if len(train_labels) == 0 or len(test_labels) == 0:
        raise DataError("empty dataset")
    n_classes = model.spec.classes
    for name, labels in (("train", train_labels), ("test", test_labels)):
        if labels.min() < 0 or labels.max() >= n_classes:
            raise DataError(f"{name} labels exceed class count {n_classes}")

    started = time.perf_counter()
    report = TrainReport(seed=seed, epochs=epochs)
    optimizer = Adam(model.parameters(), lr=lr)
    best_params = [p.data.copy() for p in model.parameters()]
    mask_rng = rng_for(seed, "train-mask") if dropout_p > 0.0 else None

    def snapshot_test(epoch: int):
        loss, acc = evaluate(model, test_images, test_labels)
        report.test_loss.append(loss)
        report.test_acc.append(acc)
        if loss < report.best_test_loss:
            report.best_test_loss = loss
            report.best_test_acc = acc
            report.best_epoch = epoch
            for stored, p in zip(best_params, model.parameters()):
                stored[...] = p.data

    if epochs == 0:
        snapshot_test(0)
        loss, acc = evaluate(model, train_images, train_labels)
        report.train_loss.append(loss)
        report.train_acc.append(acc)
    for epoch in range(epochs):
        order = rng_for(seed, "shuffle", epoch).permutation(len(train_labels))
        epoch_loss, epoch_correct = 0.0, 0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            xb, yb = train_images[idx], train_labels[idx]
            logits = model.forward(Tensor(xb), dropout_p=dropout_p,
                                   rng=mask_rng)
            loss = cross_entropy_loss(logits, yb)
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(f"training loss diverged at epoch {epoch}")
            epoch_loss += value * len(yb)
            epoch_correct += int((logits.data.argmax(axis=1) == yb).sum())
            loss.backward()
            optimizer.step()
        report.train_loss.append(epoch_loss / len(order))
        report.train_acc.append(epoch_correct / len(order))
        snapshot_test(epoch)

    if restore_best:
        for stored, p in zip(best_params, model.parameters()):
            p.data = stored.copy()
    report.wall_clock = time.perf_counter() - started
    report.checksum = parameter_checksum(model)
    return report
