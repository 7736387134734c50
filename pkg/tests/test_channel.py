import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pladelay.channel import (
    ArrayConfig,
    Deployment,
    GeometryError,
    PathLossModel,
    angle_of_arrival,
    correlation_matrix,
    covariance_factor,
    device_stats,
    grid_positions,
    position_from_polar,
    sample_channel,
    snr_moments,
    spatial_signature,
    square_grid_deployment,
)
from pladelay.pla import discriminant
from pladelay.specfun import DomainError, chi2_cdf


class TestArray:
    def test_invariants(self):
        with pytest.raises(DomainError):
            ArrayConfig(n_rx=0)
        with pytest.raises(DomainError):
            ArrayConfig(delta_r=0)
        with pytest.raises(DomainError):
            ArrayConfig(orientation=(1.0, 1.0))

    def test_broadside_signature(self):
        np.testing.assert_allclose(spatial_signature(0.0, ArrayConfig(n_rx=4)), np.full(4, 0.5))

    def test_endfire_signature(self):
        e = spatial_signature(1.0, ArrayConfig(n_rx=2, delta_r=0.5))
        np.testing.assert_allclose(e, np.array([1, -1]) / math.sqrt(2), atol=1e-15)

    def test_signature_elementwise(self):
        arr = ArrayConfig(n_rx=8, delta_r=0.5)
        z = np.exp(-2j * np.pi * 0.5)
        ref = np.array([z ** (n * 0.5) for n in range(8)]) / math.sqrt(8)
        np.testing.assert_allclose(spatial_signature(0.5, arr), ref, atol=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(-1, 1), st.integers(1, 32), st.floats(0.05, 3.0))
    def test_signature_unit_norm(self, omega, n, delta):
        e = spatial_signature(omega, ArrayConfig(n_rx=n, delta_r=delta))
        assert np.linalg.norm(e) == pytest.approx(1.0, abs=1e-12)

    def test_signature_domain(self):
        with pytest.raises(DomainError):
            spatial_signature(1.5, ArrayConfig())


class TestGeometry:
    def test_grid_layout(self):
        pts = grid_positions()
        assert len(pts) == 24
        assert pts[3] == (0.0, 20.0)
        assert pts[11] == (10.0, 10.0)

    def test_upper_right_quadrant(self, grid):
        quad = {d for d, (x, y) in grid.devices.items() if x >= 10 and y >= 10}
        assert quad == {"D12", "D13", "D14", "D17", "D18", "D19", "D22", "D23", "D24"}

    def test_aoa_along_axis(self):
        arr = ArrayConfig()
        assert angle_of_arrival((1.0, -1.0), arr) == pytest.approx(0.0, abs=1e-7)
        assert angle_of_arrival((1.0, 1.0), arr) == pytest.approx(math.pi / 2)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.5, 100), st.floats(0.0, math.pi))
    def test_polar_round_trip(self, d, phi):
        arr = ArrayConfig()
        pos = position_from_polar(d, phi, arr)
        assert math.hypot(*pos) == pytest.approx(d)
        assert angle_of_arrival(pos, arr) == pytest.approx(phi, abs=1e-6)

    def test_origin_rejected(self):
        with pytest.raises(GeometryError):
            device_stats((0.0, 0.0), 1.0, ArrayConfig(), PathLossModel())
        with pytest.raises(GeometryError):
            Deployment(devices={"A": (0.0, 0.0)})

    def test_duplicate_position_rejected(self):
        with pytest.raises(GeometryError):
            Deployment(devices={"A": (1.0, 2.0), "B": (1.0, 2.0)})


class TestDeviceStats:
    def test_broadside_mean(self):
        arr = ArrayConfig(n_rx=4)
        pos = position_from_polar(10.0, math.pi / 2, arr)
        st_ = device_stats(pos, 4.0, arr, PathLossModel())
        assert st_.dir_cosine == pytest.approx(0.0, abs=1e-12)
        a = math.sqrt(st_.power * 4 * 4.0 / 5.0)
        phase = np.exp(-2j * np.pi * 10.0 / arr.wavelength)
        np.testing.assert_allclose(st_.mean, a * phase * np.full(4, 0.5), atol=1e-12)

    def test_pure_los_limit(self):
        st_ = device_stats((3.0, 4.0), 1e12, ArrayConfig(), PathLossModel())
        assert np.trace(st_.covariance).real == pytest.approx(0.0, abs=1e-10)
        assert np.vdot(st_.mean, st_.mean).real == pytest.approx(st_.power * 4, rel=1e-10)

    def test_hand_computed(self):
        st_ = device_stats((20.0, 20.0), 10**0.6, ArrayConfig(), PathLossModel(p0=1.0, beta=3.0))
        assert st_.distance == pytest.approx(math.sqrt(800))
        assert st_.power == pytest.approx(800**-0.75)

    def test_full_exponent(self):
        pl = PathLossModel(p0=2.0, beta=3.0, exponent="full")
        assert pl.power(10.0) == pytest.approx(2.0e-3)

    @pytest.mark.parametrize("rice_db", [0.0, 6.0])
    @pytest.mark.parametrize("corr", [0.0, 0.5])
    def test_normalization_all_devices(self, rice_db, corr):
        dep = square_grid_deployment(rice_k=10 ** (rice_db / 10), corr=corr)
        for dev in dep.ids:
            s = dep.stats(dev)
            k = s.rice_k
            tr = np.trace(s.covariance).real
            mm = np.vdot(s.mean, s.mean).real
            assert mm == pytest.approx(s.power * 4 * k / (k + 1), rel=1e-10)
            assert tr == pytest.approx(s.power * 4 / (k + 1), rel=1e-10)
            assert tr + mm == pytest.approx(s.power * 4, rel=1e-10)
            assert np.allclose(s.covariance, s.covariance.conj().T)
            assert np.linalg.eigvalsh(s.covariance).min() >= -1e-12

    def test_edge_snr(self, grid):
        far = max(grid.ids, key=lambda d: math.hypot(*grid.devices[d]))
        assert 10 * math.log10(grid.stats(far).power) == pytest.approx(15.0)

    def test_stats_read_only(self, d12):
        with pytest.raises(ValueError):
            d12.mean[0] = 0


class TestSampling:
    def test_zero_covariance_returns_mean(self, rng):
        st_ = device_stats((3.0, 4.0), math.inf, ArrayConfig(), PathLossModel())
        h = sample_channel(st_, rng, 5)
        np.testing.assert_array_equal(h, np.broadcast_to(st_.mean, h.shape))

    def test_power_normalization(self, d12, rng):
        h = sample_channel(d12, rng, 10**6)
        assert np.mean(np.sum(np.abs(h) ** 2, axis=1)) == pytest.approx(d12.power * 4, rel=0.01)

    def test_correlated_entry(self, rng):
        arr = ArrayConfig(n_rx=4)
        st_ = device_stats((10.0, 5.0), 10**0.6, arr, PathLossModel(p0=50.0), corr=0.5)
        n = 10**6
        h = sample_channel(st_, rng, n) - st_.mean
        prod = h[:, 0] * h[:, 1].conj()
        est = prod.mean().real
        ref = st_.power / (st_.rice_k + 1) * 0.5
        assert abs(est - ref) < 3 * prod.real.std() / math.sqrt(n)

    def test_factor_rejects_indefinite(self):
        with pytest.raises(np.linalg.LinAlgError):
            covariance_factor(np.diag([1.0, -0.1]))

    def test_factor_clamps_roundoff(self):
        cov = correlation_matrix(6, 0.999999)
        f = covariance_factor(cov)
        np.testing.assert_allclose(f @ f.conj().T, cov, atol=1e-10)

    def test_discriminant_quantiles(self, d12, rng):
        # Legitimate draws through the discriminant follow chi2 with 2 N_Rx dof.
        n = 10**6
        d = discriminant(d12.mean, d12.covariance, sample_channel(d12, rng, n))
        for q in (1e-2, 1e-3):
            x = np.quantile(d, 1 - q)
            p = 1 - chi2_cdf(8, x)
            assert abs(p - q) < 3 * math.sqrt(q * (1 - q) / n)


class TestSnrMoments:
    def test_nlos_scalar(self):
        st_ = device_stats(position_from_polar(1.0, 1.0, ArrayConfig(n_rx=1)), 0.0, ArrayConfig(n_rx=1), PathLossModel())
        assert snr_moments(st_) == pytest.approx((1.0, 1.0))

    def test_pure_los(self):
        st_ = device_stats((3.0, 4.0), math.inf, ArrayConfig(), PathLossModel())
        mean, var = snr_moments(st_)
        assert mean == pytest.approx(np.vdot(st_.mean, st_.mean).real)
        assert var == 0.0

    def test_against_monte_carlo(self, rng):
        # The exact variance carries 2 m^H S m; the default keeps one copy.
        arr = ArrayConfig(n_rx=4)
        pos = position_from_polar(1.0, 1.1, arr)
        st_ = device_stats(pos, 10**0.6, arr, PathLossModel(p0=0.2), corr=0.5)
        g = np.concatenate([np.sum(np.abs(sample_channel(st_, rng, 10**6)) ** 2, axis=1) for _ in range(10)])
        mean, var_approx = snr_moments(st_)
        _, var_exact = snr_moments(st_, exact=True)
        assert g.mean() == pytest.approx(mean, rel=2e-3)
        assert g.var() == pytest.approx(var_exact, rel=5e-3)
        assert var_approx < 0.8 * var_exact

    @pytest.mark.slow
    def test_mean_per_device(self, grid, rng):
        for dev in grid.ids:
            s = grid.stats(dev)
            g = np.concatenate([np.sum(np.abs(sample_channel(s, rng, 10**6)) ** 2, axis=1) for _ in range(10)])
            assert g.mean() == pytest.approx(snr_moments(s)[0], rel=5e-3)
