"""Variance formulas against a spatial-domain tubal-algebra oracle."""

import numpy as np
import pytest

import tlsq
from tlsq.errors import DimensionMismatch, ZeroProbabilityRow
from tlsq.stats import (
    conditional_variance,
    estimator_spread,
    ols_variance,
    sandwich_middle_trace,
    trace_t,
    unconditional_variance,
    variance_report,
)


def rand(shape, seed):
    return np.random.default_rng(seed).standard_normal(shape)


def make_problem(n=50, p=3, l=3, seed=0):
    x = rand((n, p, l), seed)
    y = rand((n, 1, l), seed + 1)
    return tlsq.TlsProblem(x, y)


def unit_tube_diag(values, l):
    """f-diagonal tubal matrix whose tube (i, i) is values[i] times the unit tube."""
    v = np.zeros((len(values), 1, l))
    v[:, 0, 0] = values
    return tlsq.f_diag(v)


def conditional_oracle(prob, probs, tau):
    """Spatial-domain evaluation of the sampling-conditional covariance."""
    x = prob.design
    n, p, l = x.shape
    xt = tlsq.t_transpose(x)
    gram_inv = tlsq.t_pinv(tlsq.t_product(xt, x))
    resid = prob.response - tlsq.t_product(x, tlsq.solve_ols(prob).b)
    e_diag = tlsq.f_diag(resid)
    weights = unit_tube_diag(1.0 / (tau * probs), l)
    a = tlsq.t_product(tlsq.t_product(gram_inv, xt), e_diag)
    return tlsq.t_product(
        tlsq.t_product(a, weights), tlsq.t_transpose(a)
    )


def hat_complement_tubes(x):
    """Tubes 1 - x_i * (X^T X)^{-1} * x_i^T as an (n, 1, l) tensor."""
    n, p, l = x.shape
    gram_inv = tlsq.t_pinv(tlsq.t_product(tlsq.t_transpose(x), x))
    out = np.zeros((n, 1, l))
    out[:, 0, 0] = 1.0
    for i in range(n):
        row = x[i : i + 1, :, :]
        hat = tlsq.t_product(tlsq.t_product(row, gram_inv), tlsq.t_transpose(row))
        out[i : i + 1, 0, :] -= hat[0, 0, :]
    return out


def unconditional_oracle(x, probs, tau, sigma2):
    """Spatial-domain evaluation of the noise-integrated covariance."""
    n, p, l = x.shape
    xt = tlsq.t_transpose(x)
    gram_inv = tlsq.t_pinv(tlsq.t_product(xt, x))
    comp = hat_complement_tubes(x)
    middle = tlsq.f_diag(comp / probs[:, None, None])
    a = tlsq.t_product(gram_inv, xt)
    sandwich = tlsq.t_product(tlsq.t_product(a, middle), tlsq.t_transpose(a))
    return sigma2 * gram_inv + (sigma2 / tau) * sandwich


class TestTrace:
    def test_identity(self):
        assert abs(trace_t(tlsq.identity(5, 3)) - 5.0) <= 1e-12

    def test_equals_first_slice_trace(self):
        a = rand((4, 4, 5), 2)
        assert abs(trace_t(a) - np.trace(a[:, :, 0])) <= 1e-12

    def test_block_circulant_cross_check(self):
        a = rand((3, 3, 4), 3)
        assert abs(np.trace(tlsq.bcirc(a)) - 4 * np.trace(a[:, :, 0])) <= 1e-10

    def test_requires_square(self):
        with pytest.raises(DimensionMismatch):
            trace_t(rand((3, 2, 2), 4))


class TestConditionalVariance:
    def test_consistent_system_vanishes(self):
        x = rand((20, 3, 2), 5)
        b0 = rand((3, 1, 2), 6)
        prob = tlsq.TlsProblem(x, tlsq.t_product(x, b0))
        out = conditional_variance(prob, tlsq.uniform_probs(20), tau=10)
        assert np.abs(out).max() <= 1e-16

    @pytest.mark.parametrize("kind", ["unif", "lev", "slev", "opt"])
    def test_matches_spatial_oracle(self, kind):
        prob = make_problem(seed=7)
        dist = tlsq.experiments.build_distribution(prob.design, kind, 0.8)
        out = conditional_variance(prob, dist, tau=25)
        oracle = conditional_oracle(prob, dist.probs, 25)
        assert np.abs(out - oracle).max() <= 1e-10 * max(1.0, np.abs(oracle).max())

    def test_symmetry_and_positive_semidefiniteness(self):
        prob = make_problem(seed=8)
        out = conditional_variance(prob, tlsq.leverage_probs(prob.design), tau=30)
        assert np.abs(tlsq.t_transpose(out) - out).max() <= 1e-8
        blocks = tlsq.to_fourier(out)
        for k in range(out.shape[2]):
            herm = (blocks[:, :, k] + blocks[:, :, k].conj().T) / 2
            assert np.linalg.eigvalsh(herm).min() >= -1e-8

    def test_halved_by_doubling_tau(self):
        prob = make_problem(seed=9)
        dist = tlsq.uniform_probs(50)
        assert np.array_equal(
            conditional_variance(prob, dist, tau=40),
            conditional_variance(prob, dist, tau=20) / 2,
        )

    def test_zero_probability_with_residual_rejected(self):
        prob = make_problem(seed=10)
        probs = np.zeros(50)
        probs[: 49] = 1.0 / 49
        probs[-1] = 1.0 - probs[:49].sum()
        probs[0] = probs[0] + probs[-1]
        probs[-1] = 0.0
        dist = tlsq.SamplingDistribution(kind="custom", probs=probs / probs.sum())
        with pytest.raises(ZeroProbabilityRow):
            conditional_variance(prob, dist, tau=20)


class TestSpecializedForms:
    def test_uniform_conditional_form(self):
        prob = make_problem(n=40, p=3, l=3, seed=11)
        n, tau = 40, 30
        general = conditional_variance(prob, tlsq.uniform_probs(n), tau)
        x = prob.design
        xt = tlsq.t_transpose(x)
        gram_inv = tlsq.t_pinv(tlsq.t_product(xt, x))
        resid = prob.response - tlsq.t_product(x, tlsq.solve_ols(prob).b)
        e_diag = tlsq.f_diag(resid)
        a = tlsq.t_product(tlsq.t_product(gram_inv, xt), e_diag)
        specialized = (n / tau) * tlsq.t_product(a, tlsq.t_transpose(a))
        assert np.abs(general - specialized).max() <= 1e-10 * max(1.0, np.abs(general).max())

    def test_leverage_conditional_form(self):
        prob = make_problem(n=40, p=3, l=3, seed=12)
        tau = 30
        dist = tlsq.leverage_probs(prob.design)
        general = conditional_variance(prob, dist, tau)
        x = prob.design
        xt = tlsq.t_transpose(x)
        gram_inv = tlsq.t_pinv(tlsq.t_product(xt, x))
        resid = prob.response - tlsq.t_product(x, tlsq.solve_ols(prob).b)
        e_diag = tlsq.f_diag(resid)
        inv_scores = unit_tube_diag(1.0 / dist.leverage, 3)
        a = tlsq.t_product(tlsq.t_product(gram_inv, xt), e_diag)
        specialized = (3 / tau) * tlsq.t_product(
            tlsq.t_product(a, inv_scores), tlsq.t_transpose(a)
        )
        assert np.abs(general - specialized).max() <= 1e-10 * max(1.0, np.abs(general).max())

    def test_uniform_unconditional_form(self):
        x = rand((35, 3, 3), 13)
        n, tau, sigma2 = 35, 25, 2.0
        general = unconditional_variance(x, tlsq.uniform_probs(n), tau, sigma2)
        xt = tlsq.t_transpose(x)
        gram_inv = tlsq.t_pinv(tlsq.t_product(xt, x))
        middle = tlsq.f_diag(hat_complement_tubes(x))
        a = tlsq.t_product(gram_inv, xt)
        specialized = sigma2 * gram_inv + (n * sigma2 / tau) * tlsq.t_product(
            tlsq.t_product(a, middle), tlsq.t_transpose(a)
        )
        assert np.abs(general - specialized).max() <= 1e-10 * max(1.0, np.abs(general).max())

    def test_leverage_unconditional_form(self):
        x = rand((35, 3, 3), 14)
        tau, sigma2 = 25, 2.0
        dist = tlsq.leverage_probs(x)
        general = unconditional_variance(x, dist, tau, sigma2)
        xt = tlsq.t_transpose(x)
        gram_inv = tlsq.t_pinv(tlsq.t_product(xt, x))
        comp = hat_complement_tubes(x) / dist.leverage[:, None, None]
        a = tlsq.t_product(gram_inv, xt)
        specialized = sigma2 * gram_inv + (3 * sigma2 / tau) * tlsq.t_product(
            tlsq.t_product(a, tlsq.f_diag(comp)), tlsq.t_transpose(a)
        )
        assert np.abs(general - specialized).max() <= 1e-10 * max(1.0, np.abs(general).max())


class TestUnconditionalVariance:
    def test_square_design_reduces_to_exact_covariance(self):
        x = rand((4, 4, 3), 15) + 2.0 * tlsq.identity(4, 3)
        out = unconditional_variance(x, tlsq.uniform_probs(4), tau=12, sigma2=1.5)
        base = ols_variance(x, 1.5)
        assert np.abs(out - base).max() <= 1e-10 * max(1.0, np.abs(base).max())

    @pytest.mark.parametrize("kind", ["unif", "lev", "slev", "opt"])
    def test_matches_spatial_oracle(self, kind):
        x = rand((30, 3, 3), 16)
        dist = tlsq.experiments.build_distribution(x, kind, 0.8)
        if (dist.probs == 0).any():
            pytest.skip("oracle would divide by zero")
        out = unconditional_variance(x, dist, tau=20, sigma2=1.3)
        oracle = unconditional_oracle(x, dist.probs, 20, 1.3)
        assert np.abs(out - oracle).max() <= 1e-9 * max(1.0, np.abs(oracle).max())

    def test_penalty_scales_exactly_with_inverse_tau(self):
        x = rand((30, 3, 3), 17)
        dist = tlsq.uniform_probs(30)
        base = ols_variance(x, 1.5)
        p1 = unconditional_variance(x, dist, tau=50, sigma2=1.5) - base
        p2 = unconditional_variance(x, dist, tau=100, sigma2=1.5) - base
        assert np.abs(p2 - p1 / 2).max() <= 1e-14 * max(1.0, np.abs(p1).max())

    def test_trace_exceeds_exact_estimator_variance(self):
        x = rand((30, 3, 3), 18)
        out = unconditional_variance(x, tlsq.uniform_probs(30), tau=20, sigma2=1.0)
        assert trace_t(out) > trace_t(ols_variance(x, 1.0))

    def test_hat_complement_components_within_unit_interval(self):
        from tlsq.stats import _gram_inverses, _hat_complements

        x = rand((40, 3, 4), 19)
        xh = np.fft.fft(x, axis=2)
        comp = _hat_complements(xh, _gram_inverses(xh))
        assert comp.min() >= -1e-10
        assert comp.max() <= 1.0 + 1e-10

    def test_optimal_beats_uniform_and_leverage(self):
        for seed in range(5):
            x = rand((30, 3, 4), 20 + seed)
            t_opt = trace_t(unconditional_variance(x, tlsq.optimal_probs(x), 30, 1.0))
            t_unif = trace_t(unconditional_variance(x, tlsq.uniform_probs(30), 30, 1.0))
            t_lev = trace_t(unconditional_variance(x, tlsq.leverage_probs(x), 30, 1.0))
            assert t_opt <= min(t_unif, t_lev) + 1e-12

    def test_sigma2_domain(self):
        x = rand((10, 2, 2), 26)
        with pytest.raises(ValueError):
            unconditional_variance(x, tlsq.uniform_probs(10), 5, 0.0)

    def test_gram_inverse_matches_svd_route(self):
        from tlsq.stats import _gram_inverses

        x = rand((25, 3, 3), 27)
        direct = tlsq.from_fourier(_gram_inverses(np.fft.fft(x, axis=2)))
        svd = tlsq.thin_t_svd(x)
        sinv2 = tlsq.t_pinv(tlsq.t_product(svd.s, svd.s))
        via_svd = tlsq.t_product(tlsq.t_product(svd.v, sinv2), tlsq.t_transpose(svd.v))
        assert np.abs(direct - via_svd).max() <= 1e-9 * max(1.0, np.abs(direct).max())


class TestZeroProbabilityPolicy:
    def leverage_one_design(self, n=12, l=3):
        # last row is the only support of column 2, so its leverage is one in
        # every DFT slice and both formulas assign it zero weight
        tube = np.array([1.0, 0.4, 0.2])[:l]
        x = np.zeros((n, 2, l))
        x[: n - 1, 0, :] = rand((n - 1, 1, 1), 28)[:, 0, :] * tube
        x[n - 1, 1, :] = tube
        return x

    def test_optimal_zero_probability_row_tolerated(self):
        x = self.leverage_one_design()
        dist = tlsq.optimal_probs(x)
        assert dist.probs[-1] == 0.0
        out = unconditional_variance(x, dist, tau=10, sigma2=1.0)
        assert np.isfinite(out).all()

    def test_unconditional_zero_probability_with_weight_rejected(self):
        x = rand((12, 2, 2), 29)
        probs = np.zeros(12)
        probs[:6] = 1.0 / 6
        dist = tlsq.SamplingDistribution(kind="custom", probs=probs)
        with pytest.raises(ZeroProbabilityRow):
            unconditional_variance(x, dist, tau=10, sigma2=1.0)


class TestMiddleTrace:
    def test_matches_direct_summation(self):
        x = rand((20, 3, 3), 30)
        probs = tlsq.leverage_probs(x).probs
        xh = np.fft.fft(x, axis=2)
        total = 0.0
        for k in range(3):
            a = xh[:, :, k]
            hat = np.diag(a @ np.linalg.inv(a.conj().T @ a) @ a.conj().T).real
            total += ((1 - hat) * (np.abs(a) ** 2).sum(axis=1) / probs).sum()
        assert abs(sandwich_middle_trace(x, probs) - total / 3) <= 1e-8 * abs(total / 3)

    def test_optimal_attains_minimum_over_simplex(self):
        rng = np.random.default_rng(31)
        x = rng.standard_normal((25, 3, 3))
        best = sandwich_middle_trace(x, tlsq.optimal_probs(x).probs)
        for _ in range(200):
            assert best <= sandwich_middle_trace(x, rng.dirichlet(np.ones(25))) + 1e-10


class TestReportAndSpread:
    def test_report_bundles_both_terms(self):
        prob = make_problem(seed=32)
        dist = tlsq.uniform_probs(50)
        report = variance_report(prob, dist, tau=20, sigma2=2.0)
        assert report.kind == "unif" and report.tau == 20
        assert report.trace_conditional == trace_t(report.conditional)
        assert report.trace_unconditional == trace_t(report.unconditional)
        partial = variance_report(prob, dist, tau=20)
        assert partial.unconditional is None and partial.trace_unconditional is None

    def test_spread_matches_trace_of_empirical_covariance(self):
        rng = np.random.default_rng(33)
        draws = [rng.standard_normal((3, 1, 2)) for _ in range(40)]
        stack = np.stack([d.ravel() for d in draws])
        cov = np.cov(stack.T, bias=True)
        assert abs(estimator_spread(draws) - np.trace(cov)) <= 1e-10
