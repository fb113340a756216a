import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pcn_anneal import (
    DiagnosticReport,
    DiagonalQuadratic,
    DimensionError,
    DomainError,
    PcnParams,
    QvSeries,
    RngStream,
    SpectralField,
    Trajectory,
    ZeroPotential,
    accepted_moves_gap,
    all_accepted_qv,
    brownian_bridge_spectrum,
    fit_order,
    fluid_limit_sup_error,
    invariance_surrogates,
    quadratic_variation,
    qv_additivity_residual,
    qv_series,
    run,
    sample_prior,
)
from pcn_anneal import experiments


def synthetic_trajectory(flags, delta=0.01, n=4):
    k = len(flags)
    return Trajectory(delta, np.arange(k + 1), np.zeros((k + 1, n)), np.asarray(flags, dtype=bool),
                      np.ones(k), brownian_bridge_spectrum(n))


class TestQuadraticVariation:
    def test_zero(self):
        assert quadratic_variation(SpectralField.zeros(8), brownian_bridge_spectrum(8)) == 0.0

    def test_unit_summands(self):
        spec = brownian_bridge_spectrum(32)
        assert quadratic_variation(SpectralField(spec.lambdas), spec) == pytest.approx(1.0, rel=1e-15)

    @given(arrays(np.float64, 16, elements=st.floats(-10, 10)), st.floats(-10, 10))
    def test_homogeneity(self, c, a):
        spec = brownian_bridge_spectrum(16)
        x = SpectralField(c)
        assert quadratic_variation(x * a, spec) == pytest.approx(a * a * quadratic_variation(x, spec),
                                                                   rel=1e-12, abs=1e-300)

    @pytest.mark.parametrize("n_qv", [16, 256])
    def test_prior_mean_and_spread(self, n_qv):
        tau = 0.3
        spec = brownian_bridge_spectrum(n_qv)
        rng = RngStream(1)
        v = np.array([quadratic_variation(sample_prior(spec, tau=tau, rng=rng), spec) for _ in range(1000)])
        assert abs(v.mean() - tau) <= 3 * v.std(ddof=1) / math.sqrt(v.size)
        # chi-square spread tau sqrt(2/n), checked to 15 percent
        assert v.std(ddof=1) == pytest.approx(tau * math.sqrt(2 / n_qv), rel=0.15)

    def test_mode_limits(self):
        spec = brownian_bridge_spectrum(8)
        with pytest.raises(DimensionError):
            quadratic_variation(SpectralField.zeros(8), spec, 9)
        with pytest.raises(DimensionError):
            quadratic_variation(SpectralField.zeros(8), spec, 0)


class TestAdditivity:
    def test_alpha_zero(self):
        spec = brownian_bridge_spectrum(8)
        assert qv_additivity_residual(SpectralField(np.ones(8)), 0.0, spec, 8, RngStream()) == 0.0

    def test_concentration(self):
        spec = brownian_bridge_spectrum(10_000)
        x = SpectralField.zeros(10_000)
        res = [qv_additivity_residual(x, 1.0, spec, 10_000, RngStream(2, t)) for t in range(100)]
        assert sum(r <= 0.05 for r in res) >= 99

    def test_origin_residual_is_qv_deviation(self):
        # from x = 0 the residual is |V(xi) - 1| for the same draw xi
        spec = brownian_bridge_spectrum(1000)
        r0 = qv_additivity_residual(SpectralField.zeros(1000), 1.0, spec, 1000, RngStream(3))
        xi = sample_prior(spec, tau=1.0, rng=RngStream(3))
        assert r0 == pytest.approx(abs(quadratic_variation(xi, spec) - 1.0), rel=1e-12)


class TestQvSeries:
    def test_starts_at_zero(self):
        spec = brownian_bridge_spectrum(16)
        traj = run(SpectralField.zeros(16), ZeroPotential(), PcnParams(0.01, 0.1, spec), 100)
        assert qv_series(traj).values[0] == 0.0

    def test_zero_potential_tracks_closed_form(self):
        n, tau, delta = 1024, 0.1, 1e-3
        spec = brownian_bridge_spectrum(n)
        traj = run(SpectralField.zeros(n), ZeroPotential(), PcnParams(delta, tau, spec), 2000, stride=10,
                   rng=RngStream(4))
        series = qv_series(traj)
        closed = all_accepted_qv(0.0, tau, delta, traj.steps)
        assert np.max(np.abs(series.values - closed)) <= 3 * math.sqrt(2 / n) * tau

    def test_shorter_qv_window(self):
        spec = brownian_bridge_spectrum(8)
        traj = run(SpectralField(spec.lambdas), ZeroPotential(), PcnParams(0.01, 0.1, spec), 10)
        assert qv_series(traj, n_qv=4).n_qv == 4
        with pytest.raises(DimensionError):
            qv_series(traj, n_qv=9)

    def test_validation(self):
        with pytest.raises(ValueError):
            QvSeries(np.array([0.0, 0.0]), np.array([1.0, 1.0]), 2)
        with pytest.raises(ValueError):
            QvSeries(np.array([0.0, 1.0]), np.array([1.0, -1.0]), 2)


class TestFluidSupError:
    @staticmethod
    def closed_series(delta, tau=0.1, horizon=3.0):
        k = np.arange(int(round(horizon / delta)) + 1)
        return QvSeries(k * delta, all_accepted_qv(0.0, tau, delta, k), 1)

    def test_closed_form_small_gap(self):
        tau = 0.1
        err = fluid_limit_sup_error(self.closed_series(1e-4), tau, 3.0)
        assert err <= 1e-3 * tau

    def test_closed_form_converges(self):
        deltas = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4]
        errs = [fluid_limit_sup_error(self.closed_series(d), 0.1, 3.0) for d in deltas]
        assert fit_order(zip(deltas, errs)).slope > 0.5

    def test_equilibrium(self):
        s = QvSeries(np.linspace(0, 3, 31), np.full(31, 0.1), 1)
        assert fluid_limit_sup_error(s, 0.1, 3.0) == 0.0

    def test_horizon_beyond_series(self):
        with pytest.raises(ValueError):
            fluid_limit_sup_error(QvSeries(np.array([0.0, 1.0]), np.zeros(2), 1), 0.1, 2.0)


class TestAcceptedGap:
    def test_zero_potential(self):
        spec = brownian_bridge_spectrum(8)
        traj = run(SpectralField.zeros(8), ZeroPotential(), PcnParams(0.01, 1.0, spec), 500)
        assert accepted_moves_gap(traj) == 0.0

    def test_all_rejected(self):
        assert accepted_moves_gap(synthetic_trajectory([False] * 250, delta=0.004)) == pytest.approx(1.0)

    @given(st.lists(st.booleans(), min_size=1, max_size=200))
    def test_bounds(self, flags):
        gap = accepted_moves_gap(synthetic_trajectory(flags))
        assert 0.0 <= gap <= 0.01 * len(flags) + 1e-15

    def test_suite_trend(self):
        rep = experiments.accepted_gap_suite()
        assert rep.passed["decreasing"] and rep.passed["zero_potential_exact"]


class TestFitOrder:
    @given(st.floats(-3, 3), st.floats(-5, 5))
    def test_exact_lines(self, slope, intercept):
        x = np.logspace(-4, -1, 6)
        fit = fit_order(zip(x, np.exp(intercept) * x**slope))
        assert fit.slope == pytest.approx(slope, abs=1e-9)
        assert fit.residual < 1e-9

    @pytest.mark.parametrize("order", [1.0, 0.5])
    def test_pinned_orders(self, order):
        d = 2.0 ** -np.arange(4, 11)
        fit = fit_order(zip(d, 3.0 * d**order))
        assert abs(fit.slope - order) < 1e-12

    def test_noisy_half_order(self):
        rng = np.random.default_rng(5)
        d = 2.0 ** -np.arange(4, 11)
        e = d**0.5 * (1 + 0.1 * rng.standard_normal(d.size))
        assert 0.4 <= fit_order(zip(d, e)).slope <= 0.6

    def test_too_few_points(self):
        with pytest.raises(DomainError):
            fit_order([(0.1, 1.0), (0.01, 0.1)])

    def test_non_positive(self):
        with pytest.raises(DomainError):
            fit_order([(0.1, 1.0), (0.01, 0.0), (0.001, 0.1)])


class TestInvarianceSurrogates:
    @staticmethod
    def chain(pot, delta, n=16, horizon=1.0, seed=0):
        spec = brownian_bridge_spectrum(n)
        p = PcnParams(delta, 1.0, spec)
        x0 = sample_prior(spec, rng=RngStream(seed, 99))
        return p, run(x0, pot, p, int(round(horizon / delta)), stride=1, rng=RngStream(seed))

    def test_zero_potential_trace(self):
        p, traj = self.chain(ZeroPotential(), 1e-3)
        rep = invariance_surrogates(ZeroPotential(), p, traj, 1.0, mean="limit")
        trace, _, _, se = rep.residuals
        assert trace <= 3 * se

    def test_lindeberg_silent_for_large_epsilon(self):
        p, traj = self.chain(DiagonalQuadratic(), 1e-2)
        rep = invariance_surrogates(DiagonalQuadratic(), p, traj, 1e6, mean="limit")
        assert rep.residuals[2] == 0.0

    def test_needs_unstrided(self):
        spec = brownian_bridge_spectrum(4)
        p = PcnParams(0.01, 1.0, spec)
        traj = run(SpectralField.zeros(4), ZeroPotential(), p, 20, stride=5)
        with pytest.raises(ValueError):
            invariance_surrogates(ZeroPotential(), p, traj, 1.0)

    def test_pair_beyond_modes(self):
        p, traj = self.chain(ZeroPotential(), 1e-2, n=4)
        with pytest.raises(DimensionError):
            invariance_surrogates(ZeroPotential(), p, traj, 1.0, pairs=((5, 5),), mean="limit")

    def test_suite_trend(self):
        rep = experiments.invariance_suite()
        assert rep.ok, rep.as_dict()


class TestReports:
    def test_json_shape(self):
        rep = DiagnosticReport("demo", {"a": np.float64(1.5), "b": np.arange(2)}, [0.1, 0.2],
                               fit_order([(1, 1), (2, 2), (4, 4)]), {"ok": np.True_}, ["x", "y"])
        d = json.loads(rep.to_json())
        assert set(d) == {"name", "parameters", "residuals", "residual_labels", "fit", "pass"}
        assert d["parameters"] == {"a": 1.5, "b": [0, 1]}
        assert d["pass"] == {"ok": True}
        assert d["fit"]["slope"] == pytest.approx(1.0)

    def test_ok_requires_all_flags(self):
        assert not DiagnosticReport("x", passed={"a": True, "b": False}).ok

    @pytest.mark.parametrize("suite", ["apriori_suite", "zero_potential_suite", "noise_trace_suite"])
    def test_verify_suites_pass(self, suite):
        rep = getattr(experiments, suite)()
        assert rep.ok, rep.as_dict()
