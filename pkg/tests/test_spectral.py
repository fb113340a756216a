import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import bridge_basis, bridge_lambdas, brute_force_coefficients
from pcn_anneal import (
    CovarianceSpectrum,
    DimensionError,
    GridField,
    ResolutionError,
    SpectralField,
    apply_C_power,
    brownian_bridge_spectrum,
    sobolev_norm,
    to_grid,
    to_spectral,
    trace_hr,
)

# magnitudes below 1e-100 would underflow when squared
finite = st.floats(-10, 10).filter(lambda v: v == 0.0 or abs(v) > 1e-100)


def coeff_arrays(max_n=24):
    return st.integers(1, max_n).flatmap(lambda n: arrays(np.float64, n, elements=finite))


class TestSpectralField:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            SpectralField(np.array([1.0, np.nan]))

    def test_rejects_empty_and_matrix(self):
        with pytest.raises(ValueError):
            SpectralField(np.array([]))
        with pytest.raises(ValueError):
            SpectralField(np.ones((2, 2)))

    def test_coefficients_are_read_only(self):
        x = SpectralField(np.arange(3.0))
        with pytest.raises(ValueError):
            x.coeffs[0] = 5.0

    def test_mismatched_addition(self):
        with pytest.raises(DimensionError):
            SpectralField.zeros(3) + SpectralField.zeros(4)

    def test_basis_bounds(self):
        assert SpectralField.basis(2, 3).coeffs.tolist() == [0.0, 1.0, 0.0]
        with pytest.raises(DimensionError):
            SpectralField.basis(4, 3)


class TestSobolevNorm:
    def test_basis_vector(self):
        assert sobolev_norm(SpectralField.basis(3, 5), 1.0) == pytest.approx(3.0, abs=1e-15)

    @pytest.mark.parametrize("r", [-1.0, 0.0, 0.25, 2.0])
    def test_zero(self, r):
        assert sobolev_norm(SpectralField.zeros(7), r) == 0.0

    def test_two_mode_sum(self):
        x = SpectralField(np.array([1.0, 0.5]))
        assert sobolev_norm(x, 0.5) == pytest.approx(np.sqrt(1.5), abs=1e-15)
        assert sobolev_norm(x, 0.5) == pytest.approx(1.224745, abs=1e-6)

    def test_vectorised_rows(self):
        rows = np.array([[3.0, 4.0], [0.0, 1.0]])
        np.testing.assert_allclose(sobolev_norm(rows, 0.0), [5.0, 1.0])

    @given(coeff_arrays(), st.floats(0, 2), st.floats(0, 2))
    def test_monotone_in_r(self, c, r1, r2):
        lo, hi = sorted((r1, r2))
        x = SpectralField(c)
        assert sobolev_norm(x, lo) <= sobolev_norm(x, hi) * (1 + 1e-12) + 1e-300

    @given(coeff_arrays(), finite)
    def test_homogeneous(self, c, a):
        x = SpectralField(c)
        assert sobolev_norm(x * a, 0.3) == pytest.approx(abs(a) * sobolev_norm(x, 0.3), rel=1e-12, abs=1e-300)


class TestApplyCPower:
    @given(coeff_arrays())
    def test_power_zero_is_identity(self, c):
        spec = brownian_bridge_spectrum(c.size)
        np.testing.assert_array_equal(apply_C_power(SpectralField(c), spec, 0.0).coeffs, c)

    def test_bridge_first_mode(self):
        spec = brownian_bridge_spectrum(4)
        y = apply_C_power(SpectralField.basis(1, 4), spec, 1.0)
        assert y.coeffs[0] == pytest.approx(1 / np.pi**2, rel=1e-15)
        assert y.coeffs[0] == pytest.approx(0.101321, abs=1e-6)

    @given(coeff_arrays(), st.floats(-1, 1), st.floats(-1, 1))
    def test_group_law(self, c, p, q):
        spec = brownian_bridge_spectrum(c.size)
        x = SpectralField(c)
        two = apply_C_power(apply_C_power(x, spec, p), spec, q).coeffs
        one = apply_C_power(x, spec, p + q).coeffs
        np.testing.assert_allclose(two, one, rtol=1e-12, atol=1e-300)

    def test_half_powers_cancel(self):
        spec = brownian_bridge_spectrum(32)
        x = SpectralField(np.random.default_rng(0).standard_normal(32))
        back = apply_C_power(apply_C_power(x, spec, -0.5), spec, 0.5)
        np.testing.assert_allclose(back.coeffs, x.coeffs, rtol=1e-14)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            apply_C_power(SpectralField.zeros(3), brownian_bridge_spectrum(4), 1.0)


class TestTrace:
    def test_two_modes(self):
        spec = brownian_bridge_spectrum(8)
        assert trace_hr(spec, 0.0, 2) == pytest.approx(1.25 / np.pi**2, rel=1e-14)
        assert trace_hr(spec, 0.0, 2) == pytest.approx(0.126651, abs=1e-6)

    def test_single_mode(self):
        spec = CovarianceSpectrum.power_law(5, 1.5, amplitude=0.7)
        assert trace_hr(spec, 0.0, 1) == pytest.approx(0.49, rel=1e-15)

    def test_partial_sum_near_one_sixth(self):
        assert abs(trace_hr(brownian_bridge_spectrum(100), 0.0) - 1 / 6) / (1 / 6) < 0.01

    @pytest.mark.parametrize("r", [0.0, 0.1, 0.25, 0.4])
    def test_monotone(self, r):
        spec = brownian_bridge_spectrum(64)
        by_n = [trace_hr(spec, r, n) for n in range(1, 65)]
        assert np.all(np.diff(by_n) > 0)
        assert trace_hr(spec, r + 0.05) > trace_hr(spec, r)

    def test_bounds(self):
        spec = brownian_bridge_spectrum(4)
        with pytest.raises(DimensionError):
            trace_hr(spec, 0.0, 5)
        with pytest.raises(DimensionError):
            trace_hr(spec, 0.0, 0)


class TestCovarianceSpectrum:
    def test_bridge_values(self):
        spec = brownian_bridge_spectrum(10)
        assert spec.lambdas[0] == pytest.approx(0.318310, abs=1e-6)
        assert spec.lambdas[9] == pytest.approx(0.0318310, abs=1e-7)
        np.testing.assert_allclose(spec.lambdas, bridge_lambdas(10), rtol=1e-15)
        np.testing.assert_allclose(spec.lambdas * np.arange(1, 11), 1 / np.pi, rtol=1e-14)

    def test_kappa_below_half(self):
        with pytest.raises(ValueError, match="kappa"):
            CovarianceSpectrum(np.ones(3), 0.5)

    def test_decay_band_violation(self):
        lam = bridge_lambdas(10)
        lam[7] *= 3.0
        with pytest.raises(ValueError, match="lambda_8"):
            CovarianceSpectrum(lam, 1.0)

    def test_non_positive(self):
        with pytest.raises(ValueError):
            CovarianceSpectrum(np.array([1.0, 0.0]), 1.0)

    def test_truncate(self):
        spec = brownian_bridge_spectrum(16).truncate(4)
        assert spec.n_modes == 4
        with pytest.raises(DimensionError):
            spec.truncate(5)


class TestGridTransforms:
    def test_zero(self):
        assert np.all(to_grid(SpectralField.zeros(8)).samples == 0.0)

    def test_first_mode_at_midpoint(self):
        g = to_grid(SpectralField.basis(1, 8), m=32)
        assert g.samples[16] == pytest.approx(np.sqrt(2.0), abs=1e-14)
        assert g.samples[0] == 0.0 and g.samples[-1] == 0.0

    def test_synthesis_matches_direct_sum(self):
        c = np.random.default_rng(1).standard_normal(12)
        g = to_grid(SpectralField(c), m=48)
        direct = sum(c[j - 1] * bridge_basis(j, g.s) for j in range(1, 13))
        np.testing.assert_allclose(g.samples, direct, atol=1e-13)

    def test_round_trip(self):
        c = np.random.default_rng(2).standard_normal(64)
        back = to_spectral(to_grid(SpectralField(c), m=256), 64)
        assert np.max(np.abs(back.coeffs - c)) < 1e-10

    def test_analysis_matches_brute_force(self):
        s = np.linspace(0, 1, 257)
        g = s * (1 - s) * np.exp(s)
        np.testing.assert_allclose(to_spectral(GridField(g), 20).coeffs,
                                   brute_force_coefficients(g, 20), atol=1e-14)

    def test_sine_projection(self):
        s = np.linspace(0, 1, 257)
        one = to_spectral(GridField(bridge_basis(1, s)), 8).coeffs
        np.testing.assert_allclose(one, np.eye(8)[0], atol=1e-10)
        two = to_spectral(GridField(bridge_basis(2, s)), 1).coeffs
        assert abs(two[0]) < 1e-10

    def test_zero_grid(self):
        assert np.all(to_spectral(GridField(np.zeros(65)), 16).coeffs == 0.0)

    def test_resolution_policy(self):
        with pytest.raises(ResolutionError):
            to_grid(SpectralField.zeros(16), m=31)
        with pytest.raises(ResolutionError):
            to_spectral(GridField(np.zeros(33)), 17)

    def test_boundary_enforced(self):
        with pytest.raises(ValueError):
            GridField(np.array([1.0, 0.5, 0.0]))

    @settings(max_examples=25)
    @given(arrays(np.float64, 8, elements=st.floats(-3, 3)))
    def test_parseval(self, c):
        # trapezoid of x^2 on the grid against sum x_j^2; exact for m >= 2N
        g = to_grid(SpectralField(c), m=64)
        quad = GridField(g.samples**2).integral()
        assert quad == pytest.approx(float(c @ c), rel=1e-10, abs=1e-12)

    def test_csv_round_trip(self, tmp_path):
        g = to_grid(SpectralField(np.random.default_rng(3).standard_normal(5)), m=20)
        text = g.to_csv(tmp_path / "g.csv")
        assert text.endswith("\n") and "\r" not in text
        np.testing.assert_array_equal(GridField.from_csv(tmp_path / "g.csv").samples, g.samples)
