"""Exact and row-subsampled tensor least squares.

The overdetermined problem min_B ||Y - X * B||_F^2 decouples into one complex
matrix least-squares problem per DFT slice. Only the first l//2 + 1 slices
are solved; the rest follow by conjugate symmetry. The subsampled solver
gathers and rescales rows of the already-transformed slices: the sampling
and rescaling operators act on the first frontal slice only, so row
selection commutes with the tube DFT.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, RankDeficient, SketchRankDeficient
from .sampling import SamplingPlan
from .tensor import (
    _fill_conjugate,
    _is_self_conjugate,
    _num_independent_slices,
    as_tensor,
    default_rank_tol,
    from_fourier,
)


def validate_design(design):
    """Check n >= p and column rank p in every DFT slice.

    Returns (design, design_fourier, slice_singular_values); raises
    RankDeficient when any slice is short of rank p, naming the slice.
    """
    x = as_tensor(design, "design")
    n, p, l = x.shape
    if n < p:
        raise DimensionMismatch(f"design must have n >= p, got {x.shape}")
    xhat = np.fft.fft(x, axis=2)
    svals = np.empty((p, l))
    for k in range(_num_independent_slices(l)):
        a = xhat[:, :, k].real if _is_self_conjugate(k, l) else xhat[:, :, k]
        svals[:, k] = np.linalg.svd(a, compute_uv=False)
    for k in range(_num_independent_slices(l), l):
        svals[:, k] = svals[:, l - k]
    tol = default_rank_tol((n, p), float(svals.max(initial=0.0)))
    smallest = svals[p - 1, :]
    if (smallest <= tol).any():
        k_bad = int(np.argmin(smallest)) + 1
        raise RankDeficient(f"design does not have rank {p} in DFT slice {k_bad} of {l}")
    return x, xhat, svals


class TlsProblem:
    """A validated overdetermined tensor least-squares instance.

    Requires n >= p and column rank p in every DFT slice of the design, so
    the normal-equations inverse exists. The design's DFT and per-slice
    singular values are computed once and shared across responses.
    """

    def __init__(self, design, response):
        x, xhat, svals = validate_design(design)
        self.design = x
        self.design_fourier = xhat
        self.design_singular_values = svals
        self._set_response(response)

    def _set_response(self, response):
        y = as_tensor(response, "response")
        n, p, l = self.design.shape
        if y.shape != (n, 1, l):
            raise DimensionMismatch(
                f"response shape {y.shape} does not match design {self.design.shape}; "
                f"expected ({n}, 1, {l})"
            )
        self.response = y
        self.response_fourier = np.fft.fft(y, axis=2)

    def with_response(self, response) -> "TlsProblem":
        """Same design (validation and DFT reused), different response."""
        other = copy.copy(self)
        other._set_response(response)
        return other

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.design.shape


@dataclass(frozen=True, eq=False)
class TlsSolution:
    """A solver output: the coefficient tensor, its objective value, and how it was made."""

    b: np.ndarray
    objective: float
    method: str
    plan: SamplingPlan | None = None


def objective(prob: TlsProblem, b) -> float:
    """Residual objective ||Y - X * B||_F^2, evaluated in the DFT domain."""
    b = as_tensor(b, "solution")
    n, p, l = prob.shape
    if b.shape != (p, 1, l):
        raise DimensionMismatch(f"solution shape {b.shape}; expected ({p}, 1, {l})")
    bhat = np.fft.fft(b, axis=2)
    fitted = np.einsum("ipk,pjk->ijk", prob.design_fourier, bhat)
    resid = prob.response_fourier - fitted
    # Parseval: spatial squared norm equals the slice-summed norm over l.
    return float((resid.real**2 + resid.imag**2).sum() / l)


def solve_ols(prob: TlsProblem) -> TlsSolution:
    """Exact least-squares solution via one SVD-based slice solve per independent slice."""
    n, p, l = prob.shape
    bhat = np.empty((p, 1, l), dtype=np.complex128)
    for k in range(_num_independent_slices(l)):
        if _is_self_conjugate(k, l):
            a = prob.design_fourier[:, :, k].real
            rhs = prob.response_fourier[:, :, k].real
        else:
            a = prob.design_fourier[:, :, k]
            rhs = prob.response_fourier[:, :, k]
        bhat[:, :, k] = np.linalg.lstsq(a, rhs, rcond=None)[0]
    _fill_conjugate(bhat)
    b = from_fourier(bhat)
    return TlsSolution(b=b, objective=objective(prob, b), method="ols")


def solve_subsampled(prob: TlsProblem, plan: SamplingPlan) -> TlsSolution:
    """Weighted least squares on the rows named by `plan`.

    Row t of the sketch is row plan.indices[t] of the data scaled by
    plan.weights[t]. Each independent DFT slice is solved with an SVD-based
    factorization rather than explicit normal equations; forming the inverse
    would square the slice condition numbers.
    """
    n, p, l = prob.shape
    if plan.tau < p:
        raise ValueError(f"plan has tau={plan.tau} < p={p}")
    if plan.indices.min() < 0 or plan.indices.max() >= n:
        raise ValueError("plan indices fall outside the design's rows")
    w = plan.weights[:, None, None]
    xs = prob.design_fourier[plan.indices, :, :] * w
    ys = prob.response_fourier[plan.indices, :, :] * w
    bhat = np.empty((p, 1, l), dtype=np.complex128)
    for k in range(_num_independent_slices(l)):
        if _is_self_conjugate(k, l):
            a, rhs = xs[:, :, k].real, ys[:, :, k].real
        else:
            a, rhs = xs[:, :, k], ys[:, :, k]
        sol, _, rank, _ = np.linalg.lstsq(a, rhs, rcond=None)
        if rank < p:
            raise SketchRankDeficient(
                f"sketched design has rank {rank} < {p} in DFT slice {k + 1} of {l}",
                slice_index=k + 1,
            )
        bhat[:, :, k] = sol
    _fill_conjugate(bhat)
    b = from_fourier(bhat)
    return TlsSolution(b=b, objective=objective(prob, b), method="subsampled", plan=plan)


def tau_lower_bound(p: int, l: int, beta: float, eps: float) -> int:
    """Sample size above which the residual guarantee holds with probability 0.7.

    Computes ceil(440 * p^2 * l^2 / (beta * eps)). The constant is loose by
    orders of magnitude compared with practical sample sizes; treat this as a
    reference value, not an operating requirement.
    """
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    if p < 1 or l < 1:
        raise ValueError("p and l must be at least 1")
    return math.ceil(440.0 * p * p * l * l / (beta * eps))
