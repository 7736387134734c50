import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from pladelay import snc
from pladelay.attacks import sybil_success_dist, tagged_schedule
from pladelay.channel import sample_channel, snr_moments
from pladelay.pla import impersonation_params, missed_detection_rate, threshold_for_fa
from pladelay.snc import (
    DeterministicSnr,
    GammaApproxParams,
    KernelTable,
    ServiceModel,
    SncScenario,
    baseline_scenario,
    delay_bound,
    delay_guarantee,
    disassoc_scenario,
    gamma_approx_params,
    log_mellin_g,
    mean_log2_snr,
    mellin_arrival_const,
    mellin_g,
    mellin_g_oracle,
    mellin_service_baseline,
    mellin_service_disassoc,
    mellin_service_sybil,
    steady_kernel,
    utilization_arrival_rate,
)
from pladelay.specfun import ConvergenceError, DomainError, RealTolerance


@pytest.fixture(scope="module")
def all_params(grid):
    out = []
    for dev in grid.ids:
        for k_db in (0.0, 6.0):
            for corr in (0.0, 0.5):
                dep = grid.with_(rice_k=10 ** (k_db / 10), corr=corr)
                out.append(gamma_approx_params(snr_moments(dep.stats(dev))))
    return out


@pytest.fixture(scope="module")
def d12_law(d12):
    return gamma_approx_params(snr_moments(d12))


@pytest.fixture(scope="module")
def d12_service(d12_law):
    return ServiceModel(1e-2, tagged_schedule(9, 1e-2).nk_pmf, d12_law)


def _gauss_legendre_oracle(s, p, n=400):
    """Second scheme: Gauss-Legendre on a truncated range in the variable sqrt(x)."""
    hi = math.sqrt(p.k_g + 40 * math.sqrt(2 * p.k_g) + 80)
    t, wts = np.polynomial.legendre.leggauss(n)
    y = 0.5 * hi * (t + 1)
    x = y**2
    f = (1 + p.alpha_g * x) ** (s - 1) * stats.chi2.pdf(x, p.k_g) * 2 * y
    return 0.5 * hi * float(np.dot(wts, f))


class TestGammaApprox:
    def test_examples(self):
        p = gamma_approx_params((1.0, 1.0))
        assert (p.alpha_g, p.k_g) == (0.5, 2.0)
        for k in (0.7, 3.0, 11.5):
            assert gamma_approx_params((2.5, 2 * 2.5**2 / k)).k_g == pytest.approx(k, rel=1e-14)

    def test_errors(self):
        with pytest.raises(DomainError):
            gamma_approx_params((1.0, 0.0))
        with pytest.raises(DomainError):
            gamma_approx_params((0.0, 1.0))
        with pytest.raises(DomainError):
            GammaApproxParams(-1.0, 2.0)

    def test_matches_moments(self, d12):
        mean, var = snr_moments(d12)
        p = gamma_approx_params((mean, var))
        assert p.alpha_g * p.k_g == pytest.approx(mean)
        assert 2 * p.alpha_g**2 * p.k_g == pytest.approx(var)

    def test_offset_variant_differs(self, d12):
        m = snr_moments(d12)
        a, b = gamma_approx_params(m), gamma_approx_params(m, offset_variant=True)
        assert b.k_g == pytest.approx((1 + m[0]) ** 2 / (m[1] / 2))
        assert a != b

    def test_variant_oracle_distance(self, d12, rng):
        # The moment-matched default reproduces E[(1 + gamma)**-1] of the true SNR better.
        h = sample_channel(d12, rng, 10**6)
        target = np.mean(1 / (1 + np.sum(np.abs(h) ** 2, axis=1)))
        m = snr_moments(d12, exact=True)
        err = [abs(mellin_g_oracle(0.0, gamma_approx_params(m, v)) / target - 1) for v in (False, True)]
        assert err[0] < err[1]

    def test_deterministic_law(self):
        law = snc.snr_law((10.0, 0.0))
        assert isinstance(law, DeterministicSnr)
        assert mellin_g(2.5, law) == pytest.approx(11.0**1.5)
        assert mean_log2_snr(law) == pytest.approx(math.log2(11))
        assert utilization_arrival_rate(0.3, 5.0) == pytest.approx(1.5)


class TestMellinG:
    def test_normalization_all_devices(self, all_params):
        for p in all_params:
            assert mellin_g(1.0, p) == pytest.approx(1.0, abs=1e-6)
            assert mellin_g(2.0, p) == pytest.approx(1 + p.alpha_g * p.k_g, rel=1e-6)

    @pytest.mark.parametrize("s,a,k", [(1.5, 0.8, 6.0), (0.3, 2.0, 10.0), (-2.0, 1.0, 12.0), (2.7, 5.0, 30.0)])
    def test_examples_against_quadrature(self, s, a, k):
        p = GammaApproxParams(a, k)
        assert mellin_g(s, p, method="series") == pytest.approx(mellin_g_oracle(s, p), rel=1e-5)

    def test_oracle_examples(self):
        assert mellin_g_oracle(1.0, GammaApproxParams(0.7, 5.0)) == pytest.approx(1.0, rel=1e-10)
        assert mellin_g_oracle(2.0, GammaApproxParams(0.5, 4.0)) == pytest.approx(3.0, rel=1e-10)

    def test_oracle_second_scheme(self):
        p = GammaApproxParams(2.0, 10.0)
        assert mellin_g_oracle(0.3, p) == pytest.approx(_gauss_legendre_oracle(0.3, p), rel=1e-8)

    def test_oracle_grid_all_devices(self, all_params):
        s = np.linspace(0.2, 3.0, 15)
        for p in all_params:
            series = mellin_g(s, p, method="series")
            ref = [mellin_g_oracle(v, p) for v in s]
            np.testing.assert_allclose(series, ref, rtol=1e-4)

    def test_vectorized_matches_scalar(self, d12_law):
        s = np.array([[-40.0, 0.5], [1.0, 2.0]])
        out = mellin_g(s, d12_law)
        assert out.shape == (2, 2)
        assert out[0, 0] == pytest.approx(mellin_g(-40.0, d12_law), rel=1e-13)

    def test_nonconvergence_raises(self):
        with pytest.raises(ConvergenceError):
            mellin_g(0.5, GammaApproxParams(1.0, 3.0), RealTolerance(1e-10, 20), method="series")

    def test_cancellation_raises_in_strict_mode(self, d12_law):
        with pytest.raises(ConvergenceError):
            mellin_g(-3000.0, d12_law, method="series")

    @pytest.mark.parametrize("s", [-3000.0, -400.0, -60.0, -12.0])
    @pytest.mark.parametrize("a,k", [(0.2, 4.5), (3.0, 20.0), (100.0, 106.0), (100.0, 4.5)])
    def test_negative_s_log_accuracy(self, s, a, k):
        mp = pytest.importorskip("mpmath")
        mp.mp.dps = 40
        x = mp.mpf(1) / (2 * a)
        ref = (k / 2) * mp.log(x) + mp.log(mp.hyperu(k / 2, k / 2 + s, x))
        assert log_mellin_g(s, GammaApproxParams(a, k)) == pytest.approx(float(ref), abs=1e-7)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.2, 3.0), st.floats(0.1, 50.0), st.floats(8.0, 60.0))
    def test_series_vs_quadrature_property(self, s, a, k):
        p = GammaApproxParams(a, k)
        assert mellin_g(s, p) == pytest.approx(mellin_g_oracle(s, p), rel=1e-6)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.1, 50.0), st.floats(5.0, 60.0), st.floats(-5.0, 2.0), st.floats(-5.0, 2.0))
    def test_log_convex_in_s(self, a, k, s1, s2):
        p = GammaApproxParams(a, k)
        lm = log_mellin_g(np.array([s1, 0.5 * (s1 + s2), s2]), p)
        assert lm[1] <= 0.5 * (lm[0] + lm[2]) + 1e-9


class TestServiceAndArrival:
    def test_baseline_examples(self, d12_law):
        assert mellin_service_baseline(1.0, 1e-2, 288, d12_law) == pytest.approx(1.0, abs=1e-9)
        for s in (0.2, 0.9, 1.5):
            assert mellin_service_baseline(s, 1.0, 288, d12_law) == 1.0

    def test_point_mass_reduction(self, d12_law):
        s = np.array([0.9, 0.99, 1.2])
        np.testing.assert_allclose(
            mellin_service_sybil(s, 1e-2, {144: 1.0}, d12_law), mellin_service_baseline(s, 1e-2, 144, d12_law), rtol=1e-12
        )

    def test_sybil_at_one(self, d12_law):
        assert mellin_service_sybil(1.0, 1e-2, {288: 0.3, 144: 0.7}, d12_law) == pytest.approx(1.0, abs=1e-9)
        with pytest.raises(DomainError):
            mellin_service_sybil(0.5, 1e-2, {288: 0.3}, d12_law)

    def test_disassoc_examples(self):
        assert mellin_service_disassoc(0.5, 0.0, 1, 0.42) == 0.42
        assert mellin_service_disassoc(0.5, 1.0, 4, 0.42) == 1.0
        assert mellin_service_disassoc(0.5, 0.3439, 4, 0.9) == pytest.approx(0.6561 * 0.9**4 + 0.3439)
        assert mellin_service_disassoc(0.5, 0.3439, 4, 0.9) == pytest.approx(0.77436721, abs=1e-12)

    def test_arrival_examples(self):
        assert mellin_arrival_const(1.0, 7.0) == 1.0
        assert mellin_arrival_const(3.0, 0.0) == 1.0
        assert mellin_arrival_const(1.01, 100.0) == pytest.approx(math.e, rel=1e-12)
        assert mellin_arrival_const(1.01, 25.0, timescale=4) == pytest.approx(math.e, rel=1e-12)
        with pytest.raises(DomainError):
            mellin_arrival_const(1.0, -1.0)

    @pytest.mark.parametrize("s", [0.99, 0.999])
    def test_baseline_against_frame_mc(self, s, d12_law, rng):
        # Frames drawn from the approximate SNR law isolate the transform itself.
        n = 10**6
        gamma = d12_law.alpha_g * rng.chisquare(d12_law.k_g, n)
        served = rng.random(n) >= 1e-2
        vals = np.exp((s - 1) * np.where(served, 288 * np.log2(1 + gamma), 0.0))
        est, se = vals.mean(), vals.std() / math.sqrt(n)
        assert abs(mellin_service_baseline(s, 1e-2, 288, d12_law) - est) < 4 * se

    def test_baseline_against_channel_mc(self, d12, d12_law, rng):
        # With the true Rice SNR the approximation error shows; it stays small.
        n = 10**6
        gamma = np.sum(np.abs(sample_channel(d12, rng, n)) ** 2, axis=1)
        est = np.mean(np.exp((0.999 - 1) * 288 * np.log2(1 + gamma)))
        assert mellin_service_baseline(0.999, 0.0, 288, d12_law) == pytest.approx(est, rel=2e-2)

    def test_sybil_against_frame_mc(self, grid, d12_law, sybil_pool, rng):
        t = threshold_for_fa(1e-2, 4)
        eve = grid.stats("D4")
        md = [missed_detection_rate(t, impersonation_params(grid.stats(j), eve)) for j in sybil_pool[:4]]
        pmf = tagged_schedule(9, 1e-2, sybil_success_dist(md)).nk_pmf
        n = 10**6
        others = rng.binomial(8, 0.99, n) + (rng.random((n, 4)) < md).sum(axis=1)
        nk = 288 // (others + 1)
        gamma = d12_law.alpha_g * rng.chisquare(d12_law.k_g, n)
        served = rng.random(n) >= 1e-2
        vals = np.exp(-0.02 * np.where(served, nk * np.log2(1 + gamma), 0.0))
        est, se = vals.mean(), vals.std() / math.sqrt(n)
        assert abs(mellin_service_sybil(0.98, 1e-2, pmf, d12_law) - est) < 4 * se

    def test_utilization_against_mc(self, d12, d12_service, rng):
        n = 10**6
        gamma = np.sum(np.abs(sample_channel(d12, rng, n)) ** 2, axis=1)
        nk = 288 // (rng.binomial(8, 0.99, n) + 1)
        served = rng.random(n) >= 1e-2
        mc_mean = np.mean(np.where(served, nk * np.log2(1 + gamma), 0.0))
        alpha = utilization_arrival_rate(0.9, d12_service)
        assert alpha == pytest.approx(0.9 * mc_mean, rel=5e-3)

    def test_mean_log2_against_quadrature(self, d12_law):
        p = d12_law
        ref, _ = integrate.quad(lambda x: np.log2(1 + p.alpha_g * x) * stats.chi2.pdf(x, p.k_g), 0, np.inf, limit=200)
        assert mean_log2_snr(p) == pytest.approx(ref, rel=1e-8)

    def test_utilization_domain(self, d12_service):
        assert utilization_arrival_rate(1e-12, d12_service) == pytest.approx(0.0, abs=1e-8)
        for u in (0.0, 1.0, 1.5):
            with pytest.raises(DomainError):
                utilization_arrival_rate(u, d12_service)
        with pytest.raises(DomainError):
            utilization_arrival_rate(0.5, 0.0)


@pytest.fixture(scope="module")
def base(d12_service):
    return baseline_scenario(d12_service, utilization_arrival_rate(0.5, d12_service))


class TestKernel:
    def test_scenario_checks_normalization(self):
        with pytest.raises(DomainError):
            SncScenario(lambda s: 2.0 * s, lambda s: 1.0)
        with pytest.raises(DomainError):
            SncScenario(lambda s: 1.0, lambda s: 1.0, timescale=0)

    def test_examples(self, base, d12_service):
        unstable = baseline_scenario(d12_service, 2.0 * d12_service.mean_rate())
        assert steady_kernel(1e-3, 3, unstable) == math.inf
        s = 0.5 * KernelTable(base).s_max
        prod = float(base.stability_product(s))
        assert steady_kernel(s, 0, base) == pytest.approx(1 / (1 - prod))
        ms = float(d12_service.mellin(1 - s))
        assert steady_kernel(s, 10, base) == pytest.approx(ms**10 / (1 - prod), rel=1e-12)
        assert steady_kernel(1.5 * KernelTable(base).s_max, 10, base) == math.inf

    def test_table_matches_direct_kernel(self, base):
        table = KernelTable(base)
        for s in (1e-4, 0.01, 0.5 * table.s_max):
            assert math.exp(table.log_kernel(s, 7)) == pytest.approx(steady_kernel(s, 7, base), rel=1e-10)

    def test_convex_in_s(self, base):
        table = KernelTable(base)
        rng = np.random.default_rng(3)
        for _ in range(200):
            a, b = sorted(rng.uniform(1e-4, table.s_max * 0.999, 2))
            vals = [steady_kernel(x, 5, base) for x in (a, 0.5 * (a + b), b)]
            assert vals[1] <= 0.5 * (vals[0] + vals[2]) * (1 + 1e-9)

    def test_bound_is_grid_minimum(self, base):
        table = KernelTable(base)
        res = table.bound(10)
        dense = np.geomspace(1e-6, table.s_max, 20000, endpoint=False)
        assert res.raw_kernel <= np.exp(np.min(table.log_kernel(dense, 10))) * (1 + 1e-9)
        assert 0 < res.s_star < table.s_max

    def test_stability_edge(self, base):
        table = KernelTable(base)
        assert base.stability_product(table.s_max * (1 - 1e-9)) < 1
        assert base.stability_product(table.s_max * (1 + 1e-6)) >= 1

    def test_monotone_in_w(self, base):
        b = [r.bound for r in snc.delay_curve(range(0, 40), base)]
        assert all(0 <= x <= 1 for x in b)
        assert np.all(np.diff(b) <= 1e-15)
        assert b[-1] < 1e-12

    def test_monotone_in_alpha(self, d12_service):
        prev = np.zeros(12)
        for u in (0.2, 0.4, 0.6, 0.8, 0.95):
            sc = baseline_scenario(d12_service, utilization_arrival_rate(u, d12_service))
            cur = np.array([r.bound for r in snc.delay_curve(range(12), sc)])
            assert np.all(cur >= prev - 1e-15)
            prev = cur

    def test_guarantee(self, base):
        assert delay_guarantee(1.0, base) == 0
        eps = [1e-1, 1e-3, 1e-6, 1e-9]
        w = [delay_guarantee(e, base) for e in eps]
        assert w == sorted(w)
        table = KernelTable(base)
        for e, x in zip(eps, w):
            assert table.bound(x).bound <= e
            assert x == 0 or table.bound(x - 1).bound > e
        with pytest.raises(DomainError):
            delay_guarantee(0.0, base)

    def test_unstable_at_full_utilization(self, d12_service):
        sc = baseline_scenario(d12_service, 1.0001 * d12_service.mean_rate())
        res = delay_bound(3, sc)
        assert not res.stable and res.bound == 1.0
        assert delay_guarantee(1e-6, sc) == snc.UNBOUNDED

    def test_disassoc_timescale(self, d12_service):
        alpha = utilization_arrival_rate(0.5, d12_service)
        sc = disassoc_scenario(d12_service, alpha, 0.01, 4)
        assert sc.timescale == 4
        assert delay_guarantee(1e-6, sc) % 4 == 0
        none = disassoc_scenario(d12_service, alpha, 0.0, 1)
        base = baseline_scenario(d12_service, alpha)
        assert delay_bound(5, none).bound == pytest.approx(delay_bound(5, base).bound, rel=1e-9)

    def test_blocking_hurts(self, d12_service):
        alpha = utilization_arrival_rate(0.5, d12_service)
        w = [delay_guarantee(1e-6, disassoc_scenario(d12_service, alpha, p, 4)) for p in (0.0, 0.01, 0.05)]
        assert w == sorted(w) and w[0] < w[-1]
