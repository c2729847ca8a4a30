"""Weights generated from small angle banks via r-subset trigonometric products.

A layer with fan-in ``K`` does not store ``K`` free weights per neuron.
Instead each neuron owns ``N`` trainable angles, and weight ``k`` is the
product of sines and cosines of the ``k``-th lexicographic r-subset of those
angles: position 1 of the sorted subset contributes a sine, position 2 a
cosine, alternating. All weights therefore live in [-1, 1], and distinct
subsets are orthogonal in the first moment over the angle cube.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import comb
from pathlib import Path

import numpy as np

from .errors import CapacityError, ConfigurationError
from .seeding import rng_for
from .tensor import Tensor, _accumulate, _make


# ---------------------------------------------------------------------------
# combination bookkeeping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CombinationSpec:
    """Which r-subsets of N angles form the first ``count`` weights."""

    n_pool: int
    subset_size: int
    count: int

    def __post_init__(self):
        if self.subset_size < 1 or self.n_pool < 1:
            raise ConfigurationError(
                f"need positive pool and subset sizes, got N={self.n_pool}, "
                f"r={self.subset_size}")
        if self.subset_size > self.n_pool:
            raise ConfigurationError(
                f"subset size r={self.subset_size} exceeds pool N={self.n_pool}")
        if self.count > self.capacity:
            raise CapacityError(
                f"requested {self.count} weights but C({self.n_pool},"
                f"{self.subset_size}) = {self.capacity}")
        if self.count < 1:
            raise ConfigurationError(f"count must be positive, got {self.count}")

    @property
    def capacity(self) -> int:
        return comb(self.n_pool, self.subset_size)

    def subset(self, k: int) -> tuple[int, ...]:
        """The k-th r-subset of {0..N-1} in lexicographic order (unranking)."""
        if not 0 <= k < self.count:
            raise IndexError(f"combination index {k} out of range [0, {self.count})")
        out = []
        rem = k
        start = 0
        for pos in range(self.subset_size):
            for v in range(start, self.n_pool):
                block = comb(self.n_pool - v - 1, self.subset_size - pos - 1)
                if rem < block:
                    out.append(v)
                    start = v + 1
                    break
                rem -= block
        return tuple(out)

    def index(self, subset) -> int:
        """Lexicographic rank of a sorted r-subset (inverse of ``subset``)."""
        subset = tuple(subset)
        if len(subset) != self.subset_size or list(subset) != sorted(set(subset)):
            raise ConfigurationError(f"not a sorted {self.subset_size}-subset: {subset}")
        rank = 0
        start = 0
        for pos, v in enumerate(subset):
            for u in range(start, v):
                rank += comb(self.n_pool - u - 1, self.subset_size - pos - 1)
            start = v + 1
        return rank

    def subsets_array(self) -> np.ndarray:
        """All ``count`` subsets as an int array of shape (count, r)."""
        out = np.empty((self.count, self.subset_size), dtype=np.int64)
        for k in range(self.count):
            out[k] = self.subset(k)
        return out


def enumerate_combination(spec: CombinationSpec, k: int) -> tuple[int, ...]:
    """Functional alias for ``CombinationSpec.subset``."""
    return spec.subset(k)


# ---------------------------------------------------------------------------
# angle banks and single-weight evaluation
# ---------------------------------------------------------------------------

@dataclass
class AngleBank:
    """Trainable angles of one output neuron plus their gradient slot."""

    theta: np.ndarray
    grad: np.ndarray | None = None

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.ndim != 1:
            raise ConfigurationError("angle bank must be a flat vector")
        if not np.all(np.isfinite(self.theta)):
            raise ConfigurationError("angle bank contains non-finite values")

    def __len__(self) -> int:
        return self.theta.shape[0]


def init_angles(n: int, rng: np.random.Generator) -> np.ndarray:
    """Angles uniform on (-pi, pi], the integration domain of the moments."""
    return -rng.uniform(-np.pi, np.pi, size=n)


def _factors(theta: np.ndarray, subset) -> np.ndarray:
    idx = np.asarray(subset, dtype=np.int64)
    vals = theta[idx]
    out = np.empty_like(vals)
    out[0::2] = np.sin(vals[0::2])  # positions 1,3,... of the sorted subset
    out[1::2] = np.cos(vals[1::2])
    return out


def weight_value(bank: AngleBank, subset) -> float:
    """Product of alternating sin/cos over the sorted subset; |w| <= 1."""
    return float(np.prod(_factors(bank.theta, subset)))


def weight_gradient(bank: AngleBank, subset, angle_index: int) -> float:
    """d(weight)/d(theta[angle_index]); zero when the angle is not used."""
    subset = tuple(subset)
    if angle_index not in subset:
        return 0.0
    pos = subset.index(angle_index)
    f = _factors(bank.theta, subset)
    theta_i = bank.theta[angle_index]
    deriv = np.cos(theta_i) if pos % 2 == 0 else -np.sin(theta_i)
    others = np.prod(np.delete(f, pos))
    return float(others * deriv)


# ---------------------------------------------------------------------------
# dropout
# ---------------------------------------------------------------------------

@dataclass
class DropoutMask:
    """Per-factor drop flags for one materialization of the weights."""

    p: float
    dropped: np.ndarray
    seed: int | None = None


def apply_dropout(spec: CombinationSpec, p: float, seed: int,
                  n_banks: int = 1) -> DropoutMask:
    """Sample independent drop flags for every trig factor of every weight."""
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"dropout probability must sit in [0,1], got {p}")
    rng = rng_for(seed, "trig-dropout")
    shape = (n_banks, spec.count, spec.subset_size)
    dropped = rng.random(shape) < p
    return DropoutMask(p=p, dropped=dropped, seed=seed)


def masked_weight_value(bank: AngleBank, subset, dropped_row: np.ndarray) -> float:
    """Weight with dropped factors replaced by one."""
    f = _factors(bank.theta, subset)
    return float(np.prod(np.where(dropped_row, 1.0, f)))


# ---------------------------------------------------------------------------
# vectorized layer materialization with gradient linkage
# ---------------------------------------------------------------------------

def _factor_tables(thetas: np.ndarray, subsets: np.ndarray,
                   dropped: np.ndarray | None):
    """(factors, dfactors) of shape (fan_out, count, r)."""
    gathered = thetas[:, subsets]  # (fan_out, count, r)
    sin_pos = (np.arange(subsets.shape[1]) % 2 == 0)
    s, c = np.sin(gathered), np.cos(gathered)
    f = np.where(sin_pos, s, c)
    df = np.where(sin_pos, c, -s)
    if dropped is not None:
        f = np.where(dropped, 1.0, f)
        df = np.where(dropped, 0.0, df)
    return f, df


def materialize_layer(banks: Tensor, spec: CombinationSpec, fan_in: int,
                      mask: DropoutMask | None = None) -> Tensor:
    """Weight matrix (fan_out, fan_in); row n comes from angle bank n.

    Each entry is the trig product for its lexicographic subset, optionally
    with masked factors forced to one. The result participates in the
    autodiff graph: backward accumulates into ``banks.grad``.
    """
    if banks.ndim != 2:
        raise ConfigurationError(f"banks must be (fan_out, N), got {banks.shape}")
    fan_out, n_pool = banks.shape
    if n_pool != spec.n_pool:
        raise ConfigurationError(
            f"bank width {n_pool} does not match pool size {spec.n_pool}")
    if fan_in > spec.capacity:
        raise CapacityError(
            f"fan_in {fan_in} exceeds C({spec.n_pool},{spec.subset_size}) = "
            f"{spec.capacity}; increase N or r")
    sub = spec.subsets_array()[:fan_in]
    dropped = None
    if mask is not None:
        dropped = mask.dropped[:, :fan_in, :]
        if dropped.shape != (fan_out, fan_in, sub.shape[1]):
            raise ConfigurationError(
                f"mask shape {mask.dropped.shape} does not cover "
                f"({fan_out}, {fan_in}, {sub.shape[1]})")
    f, df = _factor_tables(banks.data, sub, dropped)
    weights = f.prod(axis=-1)

    def backward(g):
        r = sub.shape[1]
        left = np.ones_like(f)
        right = np.ones_like(f)
        for p in range(1, r):
            left[..., p] = left[..., p - 1] * f[..., p - 1]
            right[..., r - 1 - p] = right[..., r - p] * f[..., r - p]
        contrib = g[..., None] * left * right * df
        flat_idx = (np.arange(fan_out)[:, None, None] * spec.n_pool
                    + sub[None, :, :])
        gtheta = np.zeros(fan_out * spec.n_pool)
        np.add.at(gtheta, flat_idx.ravel(), contrib.ravel())
        _accumulate(banks, gtheta.reshape(fan_out, spec.n_pool))

    return _make(weights, (banks,), backward)


# ---------------------------------------------------------------------------
# moment integrals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentEstimate:
    value: float
    standard_error: float | None
    method: str


def moment_integral(spec: CombinationSpec, k: int, k_prime: int, order: int = 1,
                    nodes_per_dim: int | None = None,
                    mc_samples: int = 200_000, seed: int = 0) -> MomentEstimate:
    """Estimate the s-th joint moment of two weights over [-pi, pi]^N.

    For N <= 6 a tensor-product rule on uniform periodic nodes is used; it
    integrates the (trigonometric-polynomial) integrand exactly once the node
    count exceeds the per-angle degree. Larger pools fall back to Monte Carlo
    with a reported standard error.
    """
    if order < 1:
        raise ConfigurationError(f"moment order must be >= 1, got {order}")
    sub_k = np.asarray(spec.subset(k))
    sub_kp = np.asarray(spec.subset(k_prime))
    n = spec.n_pool

    def integrand(theta):
        # theta: (points, N)
        f = _factor_tables(theta, np.stack([sub_k, sub_kp]), None)[0]
        w = f.prod(axis=-1)  # (points, 2)
        return (w[:, 0] ** order) * (w[:, 1] ** order)

    if n <= 6:
        m = nodes_per_dim or max(8, 4 * order + 2)
        nodes = -np.pi + 2.0 * np.pi * (np.arange(m) + 0.5) / m
        grids = np.meshgrid(*([nodes] * n), indexing="ij")
        theta = np.stack([g.ravel() for g in grids], axis=-1)
        total = integrand(theta).sum()
        value = total * (2.0 * np.pi / m) ** n
        return MomentEstimate(float(value), None, "quadrature")

    rng = rng_for(seed, "moment-mc")
    theta = rng.uniform(-np.pi, np.pi, size=(mc_samples, n))
    vals = integrand(theta)
    volume = (2.0 * np.pi) ** n
    value = float(vals.mean() * volume)
    stderr = float(vals.std(ddof=1) / np.sqrt(mc_samples) * volume)
    return MomentEstimate(value, stderr, "monte-carlo")


def first_moment_reference(spec: CombinationSpec, k: int, k_prime: int) -> float:
    """Closed-form first joint moment: 2^(N-r) pi^N when k == k', else 0."""
    if k == k_prime:
        return 2.0 ** (spec.n_pool - spec.subset_size) * np.pi ** spec.n_pool
    return 0.0


# ---------------------------------------------------------------------------
# bank serialization
# ---------------------------------------------------------------------------

def save_banks(path, thetas: np.ndarray, spec: CombinationSpec, fan_in: int,
               seed: int | None = None) -> None:
    """JSON header line followed by little-endian float64 angles."""
    thetas = np.asarray(thetas, dtype=np.float64)
    header = {"N": spec.n_pool, "r": spec.subset_size, "fan_in": fan_in,
              "fan_out": int(thetas.shape[0]), "seed": seed}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(thetas.astype("<f8").tobytes())


def load_banks(path) -> tuple[np.ndarray, dict]:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl].decode("utf-8"))
    thetas = np.frombuffer(raw[nl + 1:], dtype="<f8").astype(np.float64)
    thetas = thetas.reshape(header["fan_out"], header["N"])
    return thetas, header
