"""Closed-form first-order variance diagnostics for the subsampled estimator.

Both formulas here come from linearizing the estimator in the random sampling
weights around their mean; the Taylor remainder is deliberately dropped and
its size is validated by the Monte-Carlo acceptance checks instead. The
conditional form fixes the observed response and captures the sampling
randomness only; the unconditional form also integrates over the model
noise, whose variance sigma^2 must be supplied.

Each result is a T-symmetric, T-positive-semidefinite p-by-p tubal matrix;
its tubal trace (the mean of the DFT-slice traces) equals the total variance
of the vectorized estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ZeroProbabilityRow
from .sampling import SamplingDistribution
from .tensor import (
    _fill_conjugate,
    _is_self_conjugate,
    _num_independent_slices,
    as_tensor,
    from_fourier,
    fro_norm,
    t_product,
)
from .solver import TlsProblem, solve_ols, validate_design

# Rows whose numerator is this far (relative) below the largest are treated
# as exact zeros when paired with a zero sampling probability.
_ZERO_ROW_TOL = 1e-10

_SPECIALIZATION_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class VarianceReport:
    """First-order variance terms for one distribution at one sample size.

    `conditional` is the sampling-only covariance given the response;
    `unconditional` additionally integrates over model noise and is only
    present when sigma2 was supplied. Traces are tubal traces.
    """

    kind: str
    tau: int
    conditional: np.ndarray | None = None
    unconditional: np.ndarray | None = None
    trace_conditional: float | None = None
    trace_unconditional: float | None = None
    sigma2: float | None = None


def trace_t(a) -> float:
    """Tubal trace: the mean of the traces of the DFT slices.

    Equals the trace of the first frontal slice of a real tubal matrix.
    """
    a = as_tensor(a, "square tubal matrix")
    n, p, l = a.shape
    if n != p:
        raise DimensionMismatch(f"trace needs a square tubal matrix, got {a.shape}")
    ahat = np.fft.fft(a, axis=2)
    return float(np.einsum("iik->", ahat).real / l)


def _gram_inverses(xhat) -> np.ndarray:
    """Inverse of the slice Gram matrices, as a (p, p, l) complex stack.

    Computed as the pseudoinverse of the Hermitian product per slice; the
    design is validated to full slice rank beforehand, so this is a true
    inverse.
    """
    n, p, l = xhat.shape
    g = np.empty((p, p, l), dtype=np.complex128)
    for k in range(_num_independent_slices(l)):
        a = xhat[:, :, k].real if _is_self_conjugate(k, l) else xhat[:, :, k]
        g[:, :, k] = np.linalg.pinv(a.conj().T @ a)
    _fill_conjugate(g)
    return g


def _sandwich(xhat, g, middle) -> np.ndarray:
    """Assemble G * X^H diag(middle_k) X * G per slice and transform back.

    `middle` is a real (n, l) array of nonnegative row weights per slice, so
    every slice of the result is Hermitian positive semidefinite.
    """
    n, p, l = xhat.shape
    out = np.empty((p, p, l), dtype=np.complex128)
    for k in range(_num_independent_slices(l)):
        a = xhat[:, :, k]
        core = a.conj().T @ (middle[:, k : k + 1] * a)
        out[:, :, k] = g[:, :, k] @ core @ g[:, :, k]
    _fill_conjugate(out)
    return from_fourier(out)


def _hat_complements(xhat, g) -> np.ndarray:
    """Per-slice complements 1 - x_i G x_i^H of the hat-matrix diagonal, (n, l) real."""
    n, p, l = xhat.shape
    comp = np.empty((n, l))
    for k in range(l):
        a = xhat[:, :, k]
        comp[:, k] = 1.0 - np.einsum("ij,jm,im->i", a, g[:, :, k], a.conj()).real
    return comp


def _row_weights(numerators, probs, what: str) -> np.ndarray:
    """Divide per-row numerators by probabilities, policing zero-probability rows.

    A zero-probability row is only legal when its numerator is zero to
    rounding; then the row contributes nothing. Otherwise the first-order
    formulas are meaningless and ZeroProbabilityRow is raised.
    """
    scale = float(np.abs(numerators).max(initial=0.0))
    zero = probs <= 0.0
    if zero.any():
        live = np.abs(numerators[zero]).max(axis=-1) > _ZERO_ROW_TOL * max(1.0, scale)
        if live.any():
            i = int(np.flatnonzero(zero)[np.argmax(live)]) + 1
            raise ZeroProbabilityRow(
                f"row {i} has zero sampling probability but a nonzero {what}"
            )
    out = np.zeros_like(numerators)
    np.divide(numerators, probs[:, None], out=out, where=~zero[:, None])
    return out


def conditional_variance(prob: TlsProblem, dist: SamplingDistribution, tau: int) -> np.ndarray:
    """Sampling-conditional covariance of the subsampled estimator, first order.

    The residual of the exact solution enters through its per-row energy;
    each row is inflated by 1/(tau * pi_i). Under the uniform and leverage
    distributions the formula collapses to the n/tau and (p/tau)/h_i forms,
    which are recomputed and asserted against the general expression.
    """
    if tau < 1:
        raise ValueError("tau must be at least 1")
    n, p, l = prob.shape
    ols = solve_ols(prob)
    resid = prob.response - t_product(prob.design, ols.b)
    ehat = np.fft.fft(resid, axis=2)[:, 0, :]
    energy = ehat.real**2 + ehat.imag**2  # (n, l)
    xhat = prob.design_fourier
    g = _gram_inverses(xhat)
    middle = _row_weights(energy, dist.probs, "residual") / tau
    out = _sandwich(xhat, g, middle)
    _assert_conditional_specialization(out, xhat, g, energy, dist, tau, n, p)
    return out


def _assert_conditional_specialization(general, xhat, g, energy, dist, tau, n, p):
    if dist.kind == "unif":
        special = _sandwich(xhat, g, (n / tau) * energy)
    elif dist.kind == "lev" and dist.leverage is not None:
        special = _sandwich(xhat, g, (p / tau) * energy / dist.leverage[:, None])
    else:
        return
    scale = max(1.0, float(np.abs(general).max()))
    assert np.abs(general - special).max() <= _SPECIALIZATION_TOL * scale, (
        f"{dist.kind} specialization deviates from the general conditional formula"
    )


def ols_variance(design, sigma2: float) -> np.ndarray:
    """Covariance of the exact estimator under i.i.d. noise: sigma^2 (X^T * X)^-1."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    _, xhat, _ = _design_state(design)
    return from_fourier(sigma2 * _gram_inverses(xhat))


def _design_state(design):
    if isinstance(design, TlsProblem):
        return design.design, design.design_fourier, design.design_singular_values
    return validate_design(design)


def unconditional_variance(
    design, dist: SamplingDistribution, tau: int, sigma2: float
) -> np.ndarray:
    """Noise-integrated covariance of the subsampled estimator, first order.

    Sum of the exact estimator's covariance and a sampling penalty that
    scales with sigma^2/tau and inflates each row's hat-matrix complement by
    1/pi_i. Accepts a design tensor or a TlsProblem (the response is unused).
    Uniform and leverage specializations are asserted as in the conditional
    form.
    """
    if tau < 1:
        raise ValueError("tau must be at least 1")
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    x, xhat, _ = _design_state(design)
    n, p, l = x.shape
    g = _gram_inverses(xhat)
    comp = _hat_complements(xhat, g)
    middle = _row_weights(comp, dist.probs, "hat-matrix complement") * (sigma2 / tau)
    penalty = _sandwich(xhat, g, middle)
    base = from_fourier(sigma2 * g)
    out = base + penalty
    if dist.kind == "unif":
        special = base + _sandwich(xhat, g, (n * sigma2 / tau) * comp)
    elif dist.kind == "lev" and dist.leverage is not None:
        special = base + _sandwich(
            xhat, g, (p * sigma2 / tau) * comp / dist.leverage[:, None]
        )
    else:
        special = None
    if special is not None:
        scale = max(1.0, float(np.abs(out).max()))
        assert np.abs(out - special).max() <= _SPECIALIZATION_TOL * scale, (
            f"{dist.kind} specialization deviates from the general unconditional formula"
        )
    return out


def sandwich_middle_trace(design, probs) -> float:
    """Tubal trace of the middle factor of the unconditional sandwich.

    This is sum_i (1/pi_i) * mean_k complement_i(k) * ||row_i(k)||^2, the
    quantity the optimal distribution provably minimizes over the simplex.
    Rows with zero probability must have a zero numerator.
    """
    x, xhat, _ = _design_state(design)
    probs = np.asarray(probs, dtype=np.float64)
    n = x.shape[0]
    if probs.shape != (n,):
        raise DimensionMismatch(f"probabilities shape {probs.shape}; expected ({n},)")
    g = _gram_inverses(xhat)
    comp = _hat_complements(xhat, g)
    row_norms = (np.abs(xhat) ** 2).sum(axis=1)  # (n, l)
    numerators = (comp * row_norms).mean(axis=1)
    weighted = _row_weights(numerators[:, None], probs, "sandwich numerator")
    return float(weighted.sum())


def variance_report(
    prob: TlsProblem,
    dist: SamplingDistribution,
    tau: int,
    sigma2: float | None = None,
) -> VarianceReport:
    """Bundle the conditional and (when sigma2 is given) unconditional terms."""
    cond = conditional_variance(prob, dist, tau)
    uncond = None
    if sigma2 is not None:
        uncond = unconditional_variance(prob, dist, tau, sigma2)
    return VarianceReport(
        kind=dist.kind,
        tau=tau,
        conditional=cond,
        unconditional=uncond,
        trace_conditional=trace_t(cond),
        trace_unconditional=None if uncond is None else trace_t(uncond),
        sigma2=sigma2,
    )


def estimator_spread(estimates) -> float:
    """Mean squared Frobenius distance of estimates from their sample mean.

    Matches the tubal trace of the empirical covariance, so it is directly
    comparable with trace_t of the closed-form variance terms.
    """
    stack = np.stack([as_tensor(b, "estimate") for b in estimates])
    if stack.shape[0] < 2:
        raise ValueError("need at least two estimates")
    centered = stack - stack.mean(axis=0)
    return float((centered**2).sum() / stack.shape[0])
