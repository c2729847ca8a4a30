"""Distribution of pre-activations z = sum_i w_i x_i under constrained vs.
uniform weights: histogram estimates, KL divergence, (N, r) sweeps, and the
decay/linearity fits used to quantify expressibility and trainability.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ConfigurationError, DataError
from .seeding import rng_for
from .trigweights import CombinationSpec, _factor_tables

DEFAULT_BINS = 201
DEFAULT_RANGE = (-40.0, 40.0)
_CHUNK_ELEMENTS = 1 << 25


@dataclass
class DistributionEstimate:
    edges: np.ndarray
    probs: np.ndarray
    n_samples: int
    delta: float  # standard deviation of the raw samples

    @classmethod
    def from_samples(cls, samples: np.ndarray, bins: int = DEFAULT_BINS,
                     hist_range: tuple[float, float] = DEFAULT_RANGE):
        counts, edges = np.histogram(samples, bins=bins, range=hist_range)
        probs = counts / counts.sum()
        return cls(edges=edges, probs=probs, n_samples=samples.size,
                   delta=float(samples.std()))


def sample_z(source: str, n_samples: int, seed: int, dim: int = 1000,
             n_pool: int | None = None, subset_size: int | None = None,
             fixed_bank: bool = False) -> np.ndarray:
    """Draw z = w . x with fresh x ~ U(-1,1)^dim per sample.

    ``uniform`` redraws w ~ U(-1,1)^dim per sample. ``constrained`` builds w
    from the first ``dim`` lexicographic subsets of a fresh angle bank per
    sample (or one shared bank when ``fixed_bank`` is set).
    """
    rng = rng_for(seed, "sample-z", source, dim)
    if source == "uniform":
        out = np.empty(n_samples)
        chunk = max(1, _CHUNK_ELEMENTS // (2 * dim))
        for start in range(0, n_samples, chunk):
            b = min(chunk, n_samples - start)
            w = rng.uniform(-1.0, 1.0, (b, dim))
            x = rng.uniform(-1.0, 1.0, (b, dim))
            out[start:start + b] = (w * x).sum(axis=1)
        return out
    if source != "constrained":
        raise ConfigurationError(f"unknown weight source {source!r}")
    if n_pool is None or subset_size is None:
        raise ConfigurationError("constrained source needs n_pool and subset_size")
    spec = CombinationSpec(n_pool, subset_size, count=dim)  # CapacityError if short
    subsets = spec.subsets_array()
    out = np.empty(n_samples)
    shared = -rng.uniform(-np.pi, np.pi, (1, n_pool)) if fixed_bank else None
    chunk = max(1, _CHUNK_ELEMENTS // (dim * subset_size))
    for start in range(0, n_samples, chunk):
        b = min(chunk, n_samples - start)
        theta = shared.repeat(b, axis=0) if fixed_bank \
            else -rng.uniform(-np.pi, np.pi, (b, n_pool))
        weights = _factor_tables(theta, subsets, None)[0].prod(axis=-1)
        x = rng.uniform(-1.0, 1.0, (b, dim))
        out[start:start + b] = (weights * x).sum(axis=1)
    return out


def kl_divergence(p: DistributionEstimate, q: DistributionEstimate,
                  floor: float = 1e-12) -> float:
    """sum_z p(z) log(p(z)/q(z)) in nats over a shared binning.

    Empty baseline bins are floored so the sum stays finite; p = q gives
    exactly zero.
    """
    if p.edges.shape != q.edges.shape or not np.array_equal(p.edges, q.edges):
        raise ConfigurationError("estimates use different binnings")
    support = p.probs > 0.0
    q_eff = np.where(q.probs > 0.0, q.probs, floor)
    return float(np.sum(p.probs[support]
                        * np.log(p.probs[support] / q_eff[support])))


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepCell:
    n_pool: int
    subset_size: int
    kl: float
    delta: float
    n_samples: int
    seed: int

    @property
    def kl_inv(self) -> float:
        return 1.0 / self.kl

    @property
    def delta_inv(self) -> float:
        return 1.0 / self.delta


@dataclass
class SweepResult:
    cells: list[SweepCell] = field(default_factory=list)
    dim: int = 1000
    baseline_delta: float = 0.0

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(c, name) for c in self.cells])

    def rows(self) -> list[dict]:
        return [{"N": c.n_pool, "r": c.subset_size, "kl": c.kl,
                 "kl_inv": c.kl_inv, "delta": c.delta,
                 "delta_inv": c.delta_inv, "samples": c.n_samples,
                 "seed": c.seed} for c in self.cells]


def sweep(cells: list[tuple[int, int]], samples: int, seed: int,
          dim: int = 1000, bins: int = DEFAULT_BINS,
          hist_range: tuple[float, float] = DEFAULT_RANGE,
          fixed_bank: bool = False) -> SweepResult:
    """KL (vs. the shared uniform baseline) and delta per (N, r) cell."""
    from math import comb
    bad = [(n, r) for n, r in cells if r > n or comb(n, r) < dim]
    if bad:
        raise CapacityError(
            f"cells {bad} cannot supply {dim} weights (need C(N,r) >= dim)")
    baseline = DistributionEstimate.from_samples(
        sample_z("uniform", samples, seed, dim=dim), bins, hist_range)
    result = SweepResult(dim=dim, baseline_delta=baseline.delta)
    for n_pool, subset_size in cells:
        cell_seed = int(rng_for(seed, "cell", n_pool, subset_size)
                        .integers(2 ** 62))
        z = sample_z("constrained", samples, cell_seed, dim=dim,
                     n_pool=n_pool, subset_size=subset_size,
                     fixed_bank=fixed_bank)
        est = DistributionEstimate.from_samples(z, bins, hist_range)
        result.cells.append(SweepCell(
            n_pool=n_pool, subset_size=subset_size,
            kl=kl_divergence(est, baseline), delta=est.delta,
            n_samples=samples, seed=cell_seed))
    return result


# ---------------------------------------------------------------------------
# fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    amplitude: float
    base: float
    offset: float
    sse: float

    def predict(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        return self.amplitude * self.base ** (-r) + self.offset


def _decay_sse(base: float, r: np.ndarray, y: np.ndarray,
               nonneg_amplitude: bool) -> tuple[float, float, float]:
    """Profile out (amplitude, offset) at fixed base; returns (sse, a, c)."""
    x = base ** (-r)
    design = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    if nonneg_amplitude and coef[0] < 0.0:
        coef = np.array([0.0, y.mean()])
    fitted = design @ coef
    return float(((fitted - y) ** 2).sum()), float(coef[0]), float(coef[1])


def fit_decay(r_values, y_values, nonneg_amplitude: bool = False,
              base_range: tuple[float, float] = (1.02, 16.0)) -> DecayFit:
    """Least-squares geometric decay y = a * base^(-r) + c.

    The offset lets the fit follow curves that flatten above zero; on exact
    offset-free data a/b^r the recovered base equals b to machine precision.
    The base is profiled by ternary search with (a, c) solved linearly.
    """
    r = np.asarray(r_values, dtype=np.float64)
    y = np.asarray(y_values, dtype=np.float64)
    if r.size < 4:
        raise DataError(f"need >= 4 points for the decay fit, got {r.size}")
    if np.any(y <= 0.0):
        raise DataError("decay fit needs strictly positive values")
    lo, hi = base_range
    for _ in range(300):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if _decay_sse(m1, r, y, nonneg_amplitude)[0] <= \
                _decay_sse(m2, r, y, nonneg_amplitude)[0]:
            hi = m2
        else:
            lo = m1
    base = 0.5 * (lo + hi)
    sse, amplitude, offset = _decay_sse(base, r, y, nonneg_amplitude)
    return DecayFit(amplitude=amplitude, base=base, offset=offset, sse=sse)


def fit_linear(x_values, y_values) -> tuple[float, float, float]:
    """Ordinary least squares; returns (slope, intercept, R^2)."""
    x = np.asarray(x_values, dtype=np.float64)
    y = np.asarray(y_values, dtype=np.float64)
    if x.size < 4:
        raise DataError(f"need >= 4 points for the linear fit, got {x.size}")
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(((y - fitted) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


def compare_trainability_fits(r_values, y_values) -> dict:
    """Residuals of a linear model vs. the vanishing-gradient alternative.

    The exponential alternative is geometric suppression y = a/base^r + c
    with a >= 0 and base > 1 (the barren-plateau shape); growth in r
    therefore has to be carried by the linear model.
    """
    r = np.asarray(r_values, dtype=np.float64)
    y = np.asarray(y_values, dtype=np.float64)
    slope, intercept, r2 = fit_linear(r, y)
    sse_linear = float(((slope * r + intercept - y) ** 2).sum())
    decay = fit_decay(r, y, nonneg_amplitude=True)
    return {"slope": slope, "intercept": intercept, "r_squared": r2,
            "sse_linear": sse_linear, "sse_exponential": decay.sse,
            "exp_amplitude": decay.amplitude, "exp_base": decay.base,
            "exp_offset": decay.offset,
            "linear_beats_exponential": sse_linear < decay.sse}
