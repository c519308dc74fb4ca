"""Row sampling probability distributions and with-replacement sampling plans.

Four distributions are supported: uniform, leverage score, shrinked leverage
(a convex mix of the first two), and the variance-optimal distribution that
minimizes the trace of the subsampling term of the estimator's unconditional
variance. A drawn plan stores row indices plus the 1/sqrt(tau*pi) rescaling
weights, which is all a solver needs; the sampling and rescaling operators
are never materialized as dense tubal matrices.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDistribution, DimensionMismatch, RankDeficient
from .tensor import as_tensor, default_rank_tol, thin_t_svd

PROB_SUM_TOL = 1e-12

# Relative floor below which an optimal-distribution radicand is treated as an
# exact zero; the hat-matrix complement rounds to +-eps at leverage one.
_RADICAND_REL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SamplingDistribution:
    """Row sampling probabilities over the n horizontal slices of a design.

    `leverage` carries the raw leverage scores h_i when the distribution was
    derived from them, for diagnostics.
    """

    kind: str
    probs: np.ndarray
    alpha: float | None = None
    leverage: np.ndarray | None = None

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size < 1:
            raise ValueError(f"probabilities must be a nonempty vector, got {probs.shape}")
        if (probs < 0).any():
            raise ValueError("probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        if self.kind in ("unif", "slev") and not (probs > 0).all():
            raise ValueError(f"{self.kind} probabilities must be strictly positive")
        object.__setattr__(self, "probs", probs)

    @property
    def n(self) -> int:
        return self.probs.size


@dataclass(frozen=True, eq=False)
class SamplingPlan:
    """tau i.i.d. with-replacement row draws and their rescaling weights."""

    tau: int
    indices: np.ndarray
    weights: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        indices = np.asarray(self.indices, dtype=np.int64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if indices.shape != (self.tau,) or weights.shape != (self.tau,):
            raise ValueError("indices and weights must both have length tau")
        if not np.isfinite(weights).all() or (weights <= 0).any():
            raise ValueError("weights must be positive and finite")
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "weights", weights)


def uniform_probs(n: int) -> SamplingDistribution:
    """Equal probability 1/n for every row."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return SamplingDistribution(kind="unif", probs=np.full(n, 1.0 / n))


def _design_fourier_factors(x):
    """DFT-domain left singular factor of a design, with full-rank validation.

    Returns (uhat, xhat, leverage) where uhat is the (n, p, l) complex stack
    of left singular vectors per slice and leverage the spatial row scores.
    Raises RankDeficient when any DFT slice has column rank below p.
    """
    x = as_tensor(x, "design")
    n, p, l = x.shape
    if n < p:
        raise DimensionMismatch(f"design must have n >= p, got {x.shape}")
    svd = thin_t_svd(x)
    tol = default_rank_tol((n, p), float(svd.slice_singular_values.max(initial=0.0)))
    if svd.rank < p or (svd.slice_singular_values[p - 1, :] <= tol).any():
        bad = (
            int(np.argmin(svd.slice_singular_values[p - 1, :])) + 1
            if svd.rank == p
            else None
        )
        where = f" (DFT slice {bad} of {l})" if bad is not None else ""
        raise RankDeficient(f"design does not have rank {p} in every DFT slice{where}")
    uhat = np.fft.fft(svd.u, axis=2)
    leverage = (np.abs(uhat) ** 2).sum(axis=1).mean(axis=1)
    return uhat, np.fft.fft(x, axis=2), leverage


def leverage_probs(x) -> SamplingDistribution:
    """Probabilities proportional to the row leverage scores h_i.

    h_i is the squared Frobenius norm of row i of the left singular factor;
    the scores sum to p, so pi_i = h_i / p.
    """
    _, _, leverage = _design_fourier_factors(x)
    p = np.asarray(x).shape[1]
    return SamplingDistribution(kind="lev", probs=leverage / p, leverage=leverage)


def shrinked_leverage_probs(x, alpha: float) -> SamplingDistribution:
    """Convex mix alpha * leverage + (1 - alpha) * uniform, strictly positive."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    lev = leverage_probs(x)
    probs = alpha * lev.probs + (1.0 - alpha) / lev.n
    return SamplingDistribution(kind="slev", probs=probs, alpha=alpha, leverage=lev.leverage)


def optimal_probs(x) -> SamplingDistribution:
    """Distribution minimizing the trace of the variance sandwich middle factor.

    pi_i is proportional to sqrt of the slice-averaged product of the
    hat-matrix complement and the squared row norm in the DFT domain. The
    radicand is mathematically nonnegative but can round negative at leverage
    one, so it is clamped at zero; rows whose radicand is zero in every slice
    get probability zero. When every row degenerates this way (the design
    interpolates any response exactly) DegenerateDistribution is raised and
    the caller must fall back to another distribution.
    """
    uhat, xhat, leverage = _design_fourier_factors(x)
    row_u = (np.abs(uhat) ** 2).sum(axis=1)
    row_x = (np.abs(xhat) ** 2).sum(axis=1)
    radicand = ((1.0 - row_u) * row_x).mean(axis=1)
    radicand = np.maximum(radicand, 0.0)
    radicand[radicand <= _RADICAND_REL_TOL * row_x.mean(axis=1)] = 0.0
    weights = np.sqrt(radicand)
    total = weights.sum()
    if total <= 0.0:
        raise DegenerateDistribution(
            "all rows have unit leverage in every DFT slice; "
            "the optimal distribution is undefined"
        )
    return SamplingDistribution(kind="opt", probs=weights / total, leverage=leverage)


def coherence(u) -> float:
    """mu coherence of a partially orthogonal tubal matrix: (n*l/p) * max row score."""
    u = as_tensor(u, "orthonormal factor")
    n, p, l = u.shape
    mu = float(n * l / p * (u**2).sum(axis=(1, 2)).max())
    if mu < l * (1.0 - 1e-9):
        raise ValueError(
            f"coherence {mu} below its lower bound {l}; input is not partially orthogonal"
        )
    return mu


def draw_plan(dist: SamplingDistribution, tau: int, seed) -> SamplingPlan:
    """Draw tau i.i.d. rows with replacement, deterministically from `seed`.

    Uses inverse-CDF binary search over the positive-probability rows, so a
    zero-probability row can never be selected. Weight t is
    1/sqrt(tau * pi_{i_t}).
    """
    if tau < 1:
        raise ValueError("tau must be at least 1")
    probs = dist.probs
    support = np.flatnonzero(probs > 0)
    cum = np.cumsum(probs[support])
    cum[-1] = 1.0  # cumsum may land an ulp under 1
    rng = np.random.default_rng(seed)
    positions = np.searchsorted(cum, rng.random(tau), side="right")
    indices = support[positions]
    weights = 1.0 / np.sqrt(tau * probs[indices])
    return SamplingPlan(tau=tau, indices=indices, weights=weights, seed=seed)


def all_rows_plan(n: int) -> SamplingPlan:
    """Degenerate plan visiting every row exactly once with unit weights.

    Equivalent to solving the full problem; useful as a sanity anchor.
    """
    return SamplingPlan(tau=n, indices=np.arange(n), weights=np.ones(n), seed=None)


def write_distribution_csv(dist: SamplingDistribution, fh) -> None:
    """Write (index, prob) rows; indices are 1-based."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["index", "prob"])
    for i, prob in enumerate(dist.probs, start=1):
        writer.writerow([i, f"{prob:.17g}"])


def write_plan_csv(plan: SamplingPlan, fh) -> None:
    """Write (t, index, weight) rows; t and indices are 1-based."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["t", "index", "weight"])
    for t, (idx, w) in enumerate(zip(plan.indices, plan.weights), start=1):
        writer.writerow([t, int(idx) + 1, f"{w:.17g}"])
