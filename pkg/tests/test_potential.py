import numpy as np
import pytest

from oracles import LAMBDA_FIG, double_well_value
from pcn_anneal import (
    DiagonalQuadratic,
    DimensionError,
    DoubleWell,
    SpectralField,
    ZeroPotential,
    brownian_bridge_spectrum,
    check_domain,
    drift,
    psi_grad_spectral,
    psi_value,
    sobolev_norm,
    taylor_remainder_check,
    to_grid,
)

POTENTIALS = [ZeroPotential(), DiagonalQuadratic(0.0), DiagonalQuadratic(0.25), DoubleWell(1.0),
              DoubleWell(LAMBDA_FIG)]


def random_in_ball(rng, n, radius, s):
    """Random field with ||x||_s uniform-ish in [0, radius]."""
    x = rng.standard_normal(n) / np.arange(1, n + 1)
    return x * rng.uniform(0, radius) / sobolev_norm(x, s)


class TestValues:
    @pytest.mark.parametrize("lam", [1.0, 5.0, LAMBDA_FIG])
    def test_double_well_at_zero(self, lam):
        assert psi_value(DoubleWell(lam), SpectralField.zeros(16)) == pytest.approx(lam / 4, rel=1e-15)

    @pytest.mark.parametrize("lam", [1.0, LAMBDA_FIG])
    def test_double_well_on_sine(self, lam):
        # grid values sin(pi s): (lam/4) int cos^4 = 3 lam / 32
        x = SpectralField.basis(1, 16) * (1 / np.sqrt(2))
        assert psi_value(DoubleWell(lam), x) == pytest.approx(3 * lam / 32, rel=1e-12)

    def test_double_well_matches_grid_oracle(self):
        rng = np.random.default_rng(0)
        x = SpectralField(rng.standard_normal(24) / np.arange(1, 25))
        g = to_grid(x).samples
        assert psi_value(DoubleWell(3.0), x) == pytest.approx(double_well_value(g, 3.0), rel=1e-13)

    def test_diagonal_quadratic(self):
        assert psi_value(DiagonalQuadratic(0.0), SpectralField(np.array([1.0, 1.0]))) == 1.0

    def test_batched_rows(self):
        rows = np.random.default_rng(1).standard_normal((5, 8))
        for p in POTENTIALS:
            np.testing.assert_allclose(p.value(rows), [p.value(r) for r in rows], rtol=1e-13)

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            DoubleWell(0.0)
        with pytest.raises(ValueError):
            DoubleWell(1.0, grid_factor=1)
        with pytest.raises(ValueError):
            DiagonalQuadratic(-0.1)


class TestGradient:
    def test_double_well_zero(self):
        g = psi_grad_spectral(DoubleWell(LAMBDA_FIG), SpectralField.zeros(8))
        assert np.all(g.coeffs == 0.0)

    def test_diagonal_quadratic_weights(self):
        g = psi_grad_spectral(DiagonalQuadratic(1.0), SpectralField.basis(2, 4))
        np.testing.assert_array_equal(g.coeffs, [0.0, 4.0, 0.0, 0.0])

    @pytest.mark.parametrize("p", POTENTIALS, ids=repr)
    def test_central_differences(self, p):
        rng = np.random.default_rng(2)
        eps = 1e-5
        for _ in range(100):
            x = rng.standard_normal(32)
            h = rng.standard_normal(32)
            x /= np.linalg.norm(x)
            h /= np.linalg.norm(h)
            fd = (p.value(x + eps * h) - p.value(x - eps * h)) / (2 * eps)
            an = float(p.grad(x) @ h)
            assert abs(fd - an) <= 1e-5 * max(1.0, abs(an))


class TestDrift:
    def test_zero_potential(self):
        x = SpectralField(np.random.default_rng(3).standard_normal(10))
        d = drift(ZeroPotential(), brownian_bridge_spectrum(10), x)
        np.testing.assert_array_equal(d.coeffs, -x.coeffs)

    def test_double_well_origin(self):
        d = drift(DoubleWell(LAMBDA_FIG), brownian_bridge_spectrum(16), SpectralField.zeros(16))
        assert np.all(d.coeffs == 0.0)

    def test_diagonal_quadratic_first_mode(self):
        d = drift(DiagonalQuadratic(0.0), brownian_bridge_spectrum(4), SpectralField.basis(1, 4))
        assert d.coeffs[0] == pytest.approx(-(1 + 1 / np.pi**2), rel=1e-15)
        assert d.coeffs[0] == pytest.approx(-1.101321, abs=1e-6)
        assert np.all(d.coeffs[1:] == 0.0)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            drift(ZeroPotential(), brownian_bridge_spectrum(4), SpectralField.zeros(5))

    @pytest.mark.parametrize("radius", [1.0, 2.0])
    def test_local_lipschitz_witness(self, radius):
        p, spec, s = DoubleWell(LAMBDA_FIG), brownian_bridge_spectrum(32), 0.25
        rng = np.random.default_rng(4)
        ratios = []
        for _ in range(300):
            x = SpectralField(random_in_ball(rng, 32, radius, s))
            y = SpectralField(random_in_ball(rng, 32, radius, s))
            ratios.append(sobolev_norm(drift(p, spec, x) - drift(p, spec, y), s) / sobolev_norm(x - y, s))
        # drift = -x - C grad Psi; the identity part alone contributes 1
        assert 1.0 - 1e-9 < max(ratios) < 1.0 + 10 * LAMBDA_FIG * radius**2


class TestTaylorRemainder:
    def test_same_point(self):
        x = SpectralField(np.ones(4))
        assert taylor_remainder_check(DoubleWell(1.0), x, x) == 0.0

    @pytest.mark.parametrize("s", [0.0, 0.25, 1.0])
    def test_quadratic_exact_half(self, s):
        rng = np.random.default_rng(5)
        p = DiagonalQuadratic(s)
        for _ in range(20):
            x, y = SpectralField(rng.standard_normal(12)), SpectralField(rng.standard_normal(12))
            assert taylor_remainder_check(p, x, y) == pytest.approx(0.5, rel=1e-10)

    def test_double_well_bounded_on_ball(self):
        p, s = DoubleWell(LAMBDA_FIG), 0.25
        rng = np.random.default_rng(6)
        ratios = [taylor_remainder_check(p, SpectralField(random_in_ball(rng, 32, 2.0, s)),
                                         SpectralField(random_in_ball(rng, 32, 2.0, s)), s)
                  for _ in range(1000)]
        k_max = max(ratios)
        assert np.isfinite(k_max)
        # shrinking the separation must not push the ratio beyond the recorded maximum
        x = SpectralField(random_in_ball(rng, 32, 2.0, s))
        h = random_in_ball(rng, 32, 1.0, s)
        small = [taylor_remainder_check(p, x, x + SpectralField(h * eps), s) for eps in 10.0 ** -np.arange(1, 6)]
        assert max(small) <= 1.5 * max(k_max, small[0])
        assert np.ptp(small[1:]) < 0.1 * small[1]


class TestGrowthAndDomain:
    def test_quadratic_growth_constant(self):
        p = DiagonalQuadratic(0.25)
        rng = np.random.default_rng(7)
        for _ in range(200):
            x = random_in_ball(rng, 16, 5.0, 0.25)
            assert p.value(x) <= 0.5 * (1 + sobolev_norm(x, 0.25) ** 2)

    def test_double_well_local_growth(self):
        p = DoubleWell(LAMBDA_FIG)
        rng = np.random.default_rng(8)
        ks = [p.value(x) / (1 + sobolev_norm(x, 0.25) ** 2)
              for x in (random_in_ball(rng, 32, 5.0, 0.25) for _ in range(200))]
        assert np.isfinite(max(ks))

    def test_domain(self):
        spec = brownian_bridge_spectrum(8)
        check_domain(DoubleWell(1.0), spec)
        check_domain(DiagonalQuadratic(0.0), spec)
        with pytest.raises(ValueError):
            check_domain(DiagonalQuadratic(0.5), spec)
