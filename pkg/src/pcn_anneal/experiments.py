"""Figure reproductions and verification suites shared by the CLI and the tests.

Every function is deterministic given its seed and returns plain arrays or
:class:`DiagnosticReport` objects with pass flags evaluated against fixed bands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .annealing import (
    TauScalingResult,
    euler_lagrange_solutions,
    l2_error_series,
    plateau_test,
    tau_scaling_experiment,
)
from .diagnostics import (
    DiagnosticReport,
    accepted_moves_gap,
    apriori_bound_witness,
    fit_order,
    fluid_limit_sup_error,
    invariance_surrogates,
    qv_additivity_residual,
    qv_series,
)
from .gaussian import RngStream, brownian_bridge_spectrum, sample_prior
from .pcn import (
    PcnParams,
    acceptance_errors,
    baracc_identity,
    drift_estimate,
    noise_covariance,
    run,
    simulate,
)
from .potential import DiagonalQuadratic, DoubleWell, Potential, ZeroPotential, drift
from .sde import SdeParams, em_run, fluid_ode_solution
from .spectral import SpectralField, sobolev_norm, trace_hr

__all__ = [
    "LAMBDA_FIG",
    "RATE_DELTAS",
    "DRIFT_TAU",
    "ACCEPT_TAU",
    "Fig2Result",
    "Fig4Result",
    "fig2_run",
    "fig3_run",
    "fig4_run",
    "drift_order",
    "acceptance_order",
    "identity_suite",
    "stationarity_suite",
    "qv_additivity_suite",
    "noise_trace_suite",
    "accepted_gap_suite",
    "invariance_suite",
    "apriori_suite",
    "zero_potential_suite",
]

LAMBDA_FIG = 2.0 * math.pi**2
RATE_DELTAS = tuple(2.0**-k for k in range(4, 11))
# Temperatures for the rate fits.  With x = e_1 the sqrt(delta) parts of the
# two drift components cancel near tau ~ 5, while for E|1 - alpha| the order
# delta correction changes sign near tau ~ 6.6; each fit sits away from the
# point where its own leading term vanishes or is swamped.
DRIFT_TAU = 80.0
ACCEPT_TAU = 6.0
FIG3_TAUS = (1e-3, 3e-3, 1e-2, 3e-2, 1e-1)


# --- figures -----------------------------------------------------------------

@dataclass
class Fig2Result:
    steps: np.ndarray
    error: np.ndarray
    initial: float
    plateau_mean: float
    plateau_ok: bool
    below_initial: float
    acceptance: float


def fig2_run(lam: float = LAMBDA_FIG, tau: float = 1e-2, delta: float = 1e-2, n_modes: int = 64,
             n_steps: int = 10_000, seed: int = 0, m_el: int = 512, stride: int = 10,
             burn_in: float = 0.5) -> Fig2Result:
    """One chain from zero; L^2 error to the nearest nonzero minimiser along the run."""
    spec = brownian_bridge_spectrum(n_modes)
    sols = euler_lagrange_solutions(lam, m_el)
    traj = run(SpectralField.zeros(n_modes), DoubleWell(lam), PcnParams(delta, tau, spec), n_steps,
               stride=stride, rng=RngStream(seed, 0))
    err = l2_error_series(traj.states, sols)
    keep = traj.steps >= burn_in * n_steps
    ok = plateau_test(err[keep])[0]
    return Fig2Result(traj.steps, err, float(err[0]), float(err[keep].mean()), ok,
                      float(np.mean(err[keep] < err[0])), float(traj.flags.mean()))


def fig3_run(lam: float = LAMBDA_FIG, taus=FIG3_TAUS, delta_ratio: float = 1.0, horizon: float = 100.0,
             n_replicas: int = 8, seed: int = 0, n_modes: int = 64, m_el: int = 512) -> TauScalingResult:
    """Plateau error against tau with ``delta = delta_ratio * tau`` and a common horizon."""
    taus = np.asarray(taus, dtype=float)
    deltas = np.minimum(delta_ratio * taus, 0.49)
    steps = np.ceil(horizon / deltas).astype(int)
    return tau_scaling_experiment(lam, taus, deltas, steps, n_replicas, seed, n_modes, m_el)


@dataclass
class Fig4Result:
    times: np.ndarray
    v_delta: np.ndarray
    v_ode: np.ndarray
    sup_error: float
    final: float
    acceptance: float


def fig4_run(lam: float = LAMBDA_FIG, tau: float = 0.1, delta: float = 1e-3, n_modes: int = 256,
             horizon: float = 10.0, seed: int = 0, sup_horizon: float = 3.0) -> Fig4Result:
    """Quadratic variation of one chain from zero against the fluid-limit ODE."""
    spec = brownian_bridge_spectrum(n_modes)
    n_steps = int(round(horizon / delta))
    traj = run(SpectralField.zeros(n_modes), DoubleWell(lam), PcnParams(delta, tau, spec), n_steps,
               stride=1, rng=RngStream(seed, 0))
    series = qv_series(traj, spec)
    ode = fluid_ode_solution(float(series.values[0]), tau, series.times)
    return Fig4Result(series.times, series.values, ode, fluid_limit_sup_error(series, tau, sup_horizon),
                      float(series(horizon)), float(traj.flags.mean()))


# --- rate lemmas --------------------------------------------------------------

def drift_order(n_modes: int = 256, tau: float = DRIFT_TAU, deltas=RATE_DELTAS, n_mc: int = 100_000,
                seed: int = 1, x: SpectralField | None = None, band=(0.4, 0.6)) -> DiagnosticReport:
    """Order of ``||d^delta(x) - d(x)||`` for the s = 0 quadratic at ``||x|| = 1``."""
    spec = brownian_bridge_spectrum(n_modes)
    pot = DiagonalQuadratic(0.0)
    x = SpectralField.basis(1, n_modes) if x is None else x
    exact = drift(pot, spec, x)
    errs, ses, acc = [], [], []
    for i, d in enumerate(deltas):
        params = PcnParams(d, tau, spec)
        est = drift_estimate(pot, params, x, n_mc, RngStream(seed, i), s=0.0)
        errs.append(sobolev_norm(est.value - exact, 0.0))
        ses.append(est.stderr)
        acc.append(acceptance_errors(pot, params, x, 20_000, RngStream(seed, 1000 + i)).mean_alpha)
    fit = fit_order(zip(deltas, errs))
    return DiagnosticReport(
        name="drift_order",
        parameters={"n_modes": n_modes, "tau": tau, "deltas": list(deltas), "n_mc": n_mc, "seed": seed,
                    "x_norm": sobolev_norm(x, 0.0), "stderr": ses, "mean_acceptance": acc, "band": list(band)},
        residuals=errs,
        labels=[f"delta={d:g}" for d in deltas],
        fit=fit,
        passed={"slope_in_band": band[0] <= fit.slope <= band[1]},
    )


def acceptance_order(n_modes: int = 256, tau: float = ACCEPT_TAU, deltas=RATE_DELTAS, n_mc: int = 100_000,
                     seed: int = 2, lin_band=(0.85, 1.15), rej_band=(0.35, 0.65)) -> tuple[DiagnosticReport, DiagnosticReport]:
    """Orders of ``E|alpha - alpha_bar|`` and ``E|1 - alpha|`` at x = e_1."""
    spec = brownian_bridge_spectrum(n_modes)
    pot = DiagonalQuadratic(0.0)
    x = SpectralField.basis(1, n_modes)
    lin, rej, lin_se, rej_se, acc = [], [], [], [], []
    for i, d in enumerate(deltas):
        ae = acceptance_errors(pot, PcnParams(d, tau, spec), x, n_mc, RngStream(seed, i))
        lin.append(ae.linearisation)
        rej.append(ae.rejection)
        lin_se.append(ae.linearisation_se)
        rej_se.append(ae.rejection_se)
        acc.append(ae.mean_alpha)
    base = {"n_modes": n_modes, "tau": tau, "deltas": list(deltas), "n_mc": n_mc, "seed": seed,
            "mean_acceptance": acc}
    f1 = fit_order(zip(deltas, lin))
    f2 = fit_order(zip(deltas, rej))
    r1 = DiagnosticReport("linearised_acceptance_order", {**base, "stderr": lin_se, "band": list(lin_band)},
                          lin, f1, {"slope_in_band": lin_band[0] <= f1.slope <= lin_band[1]},
                          [f"delta={d:g}" for d in deltas])
    r2 = DiagnosticReport("rejection_order", {**base, "stderr": rej_se, "band": list(rej_band)},
                          rej, f2, {"slope_in_band": rej_band[0] <= f2.slope <= rej_band[1]},
                          [f"delta={d:g}" for d in deltas])
    return r1, r2


def identity_suite(n_modes: int = 64, delta: float = 1e-2, tau: float = 1.0, n_mc: int = 100_000,
                   seed: int = 3) -> DiagnosticReport:
    """``sqrt(2 tau/delta) mean(alpha_bar xi) = -C grad Psi`` within 3 standard errors."""
    spec = brownian_bridge_spectrum(n_modes)
    e1 = SpectralField.basis(1, n_modes)
    draw = sample_prior(spec, n_modes, 1.0, RngStream(seed, 999))
    mixed = SpectralField(np.where(np.arange(n_modes) < 3, 0.5, 0.0))
    xs = {"e1": e1, "prior_draw": draw, "mixed": mixed}
    pots: dict[str, Potential] = {"diagonal_quadratic": DiagonalQuadratic(0.0), "double_well": DoubleWell(LAMBDA_FIG)}
    res, labels, passed, ses = [], [], {}, []
    i = 0
    for pn, pot in pots.items():
        params = PcnParams(delta, tau, spec)
        for xn, x in xs.items():
            chk = baracc_identity(pot, x, params, n_mc, RngStream(seed, i))
            i += 1
            res.append(chk.residual)
            ses.append(chk.stderr)
            labels.append(f"{pn}/{xn}")
            passed[f"{pn}/{xn}"] = chk.residual <= 3.0 * chk.stderr
    return DiagnosticReport("identity", {"n_modes": n_modes, "delta": delta, "tau": tau, "n_mc": n_mc,
                                         "seed": seed, "stderr": ses}, res, None, passed, labels)


def _replica_variances(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-mode variance from ``(T, R, N)`` samples: replica time-averages of x^2."""
    per_rep = (samples**2).mean(axis=0)
    R = per_rep.shape[0]
    return per_rep.mean(axis=0), per_rep.std(axis=0, ddof=1) / math.sqrt(R)


def stationarity_suite(n_modes: int = 32, s: float = 0.25, tau: float = 1.0, n_replicas: int = 1000,
                       delta: float = 0.05, dt: float = 1e-3, burn_in: float = 5.0, window: float = 10.0,
                       seed: int = 4, n_check: int = 10, rel_tol: float = 0.05) -> DiagnosticReport:
    """Long-run per-mode variances of pCN and Euler-Maruyama against ``tau l^2 / (1 + l^2 j^2s)``."""
    spec = brownian_bridge_spectrum(n_modes)
    pot = DiagonalQuadratic(s)
    lam = spec.lambdas
    j = np.arange(1, n_modes + 1, dtype=float)
    target = tau * lam**2 / (1.0 + lam**2 * j ** (2 * s))
    # both runs start from N(0, tau C) and sample the state every 0.1 time units
    x0 = np.stack([sample_prior(spec, n_modes, tau, RngStream(seed, 10_000 + r)).coeffs
                   for r in range(n_replicas)])
    n_burn, n_win = int(round(burn_in / delta)), int(round(window / delta))
    ens = simulate(x0, pot, spec, delta, tau, n_burn + n_win, RngStream.replicas(seed, n_replicas),
                   stride=max(1, int(round(0.1 / delta))))
    pcn_samples = ens.states[ens.steps > n_burn]
    v_pcn, se_pcn = _replica_variances(pcn_samples)
    n_burn_e, n_win_e = int(round(burn_in / dt)), int(round(window / dt))
    steps, snaps = em_run(x0, pot, spec, SdeParams(dt, tau, n_modes), n_burn_e + n_win_e,
                          RngStream.replicas(seed, n_replicas, offset=n_replicas),
                          stride=max(1, int(round(0.1 / dt))))
    v_em, se_em = _replica_variances(snaps[steps > n_burn_e])
    k = slice(0, n_check)
    rel_pcn = np.abs(v_pcn[k] / target[k] - 1.0)
    rel_em = np.abs(v_em[k] / target[k] - 1.0)
    z = np.abs(v_pcn[k] - v_em[k]) / np.hypot(se_pcn[k], se_em[k])
    return DiagnosticReport(
        "stationarity",
        {"n_modes": n_modes, "s": s, "tau": tau, "n_replicas": n_replicas, "delta": delta, "dt": dt,
         "burn_in": burn_in, "window": window, "seed": seed, "target": target[k], "pcn": v_pcn[k],
         "pcn_stderr": se_pcn[k], "em": v_em[k], "em_stderr": se_em[k], "z": z,
         "acceptance": float(ens.flags.mean())},
        list(rel_pcn) + list(rel_em),
        None,
        {"pcn_within_5pct": bool(np.all(rel_pcn <= rel_tol)), "em_within_5pct": bool(np.all(rel_em <= rel_tol)),
         "pcn_em_agree": bool(np.all(z <= 3.0))},
        [f"pcn_mode{i + 1}" for i in range(n_check)] + [f"em_mode{i + 1}" for i in range(n_check)],
    )


def qv_additivity_suite(n_trials: int = 100, sizes=(100, 1000, 10_000), seed: int = 5,
                        tol: float = 0.05, min_pass: int = 99, band=(-0.65, -0.35)) -> DiagnosticReport:
    """Residual of ``V(x + xi) = V(x) + 1`` at x = 0 across trial draws and truncation sizes."""
    means = []
    passes = 0
    for n in sizes:
        spec = brownian_bridge_spectrum(n)
        x = SpectralField.zeros(n)
        r = np.array([qv_additivity_residual(x, 1.0, spec, n, RngStream(seed, n * 1000 + t))
                      for t in range(n_trials)])
        means.append(float(r.mean()))
        if n == max(sizes):
            passes = int(np.count_nonzero(r <= tol))
    fit = fit_order(zip(sizes, means))
    return DiagnosticReport(
        "qv_additivity",
        {"n_trials": n_trials, "sizes": list(sizes), "seed": seed, "tol": tol, "passes_at_largest": passes,
         "band": list(band)},
        means, fit,
        {"concentration": passes >= min_pass, "slope_in_band": band[0] <= fit.slope <= band[1]},
        [f"n_qv={n}" for n in sizes],
    )


def noise_trace_suite(n_modes: int = 64, tau: float = 1.0, deltas=(1e-2, 1e-3, 1e-4), n_mc: int = 100_000,
                      seed: int = 6, n_trace: int = 10) -> DiagnosticReport:
    """Noise covariance of the s = 0 quadratic at x = e_1: trace vs its C reference, diagonal trend."""
    spec = brownian_bridge_spectrum(n_modes)
    pot = DiagonalQuadratic(0.0)
    x = SpectralField.basis(1, n_modes)
    ref_trace = trace_hr(spec, 0.0, n_trace)
    diag_err, tr, tr_se = [], [], []
    for i, d in enumerate(deltas):
        nc = noise_covariance(pot, PcnParams(d, tau, spec), x, n_mc, RngStream(seed, i), n_modes=n_trace)
        diag_err.append(float(np.max(np.abs(np.diag(nc.matrix) - np.diag(nc.reference)))))
        t = float(np.trace(nc.matrix))
        # the 10-mode trace error is bounded by the per-entry standard errors added in quadrature
        tr.append(t)
        tr_se.append(float(np.sqrt(np.sum(np.diag(nc.stderr) ** 2))))
    last_ok = abs(tr[-1] - ref_trace) <= 3.0 * tr_se[-1]
    trend = all(diag_err[i + 1] <= diag_err[i] + 3 * tr_se[i] for i in range(len(deltas) - 1))
    return DiagnosticReport(
        "noise_covariance",
        {"n_modes": n_modes, "tau": tau, "deltas": list(deltas), "n_mc": n_mc, "seed": seed,
         "trace": tr, "trace_stderr": tr_se, "reference_trace": ref_trace},
        diag_err, None, {"trace_at_smallest_delta": last_ok, "diagonal_error_trend": trend},
        [f"delta={d:g}" for d in deltas],
    )


def accepted_gap_suite(n_modes: int = 32, tau: float = 0.1, deltas=(1e-2, 1e-3, 1e-4), horizon: float = 1.0,
                       n_replicas: int = 50, seed: int = 7, start: float = 2.0) -> DiagnosticReport:
    """Replica-mean gap ``sup_k delta (k - t(k))`` shrinking as delta decreases (s = 0 quadratic).

    Chains start at ``start * e_1``, away from equilibrium, so that rejections are frequent.
    """
    spec = brownian_bridge_spectrum(n_modes)
    pot = DiagonalQuadratic(0.0)
    x0 = start * SpectralField.basis(1, n_modes)
    gaps, ses = [], []
    for i, d in enumerate(deltas):
        n_steps = int(round(horizon / d))
        ens = simulate(x0, pot, spec, d, tau, n_steps, RngStream.replicas(seed, n_replicas, offset=i * n_replicas),
                       stride=n_steps)
        per = np.array([accepted_moves_gap(ens.trajectory(r, spec)) for r in range(n_replicas)])
        gaps.append(float(per.mean()))
        ses.append(float(per.std(ddof=1) / math.sqrt(n_replicas)))
    zero = run(x0, ZeroPotential(), PcnParams(deltas[0], tau, spec), 200, rng=RngStream(seed, 10_000))
    # non-increasing within noise at every refinement, strictly smaller overall
    dec = all(gaps[i + 1] <= gaps[i] + 3 * math.hypot(ses[i], ses[i + 1]) for i in range(len(gaps) - 1))
    dec = dec and gaps[-1] < gaps[0] - 3 * math.hypot(ses[0], ses[-1])
    return DiagnosticReport(
        "accepted_moves_gap",
        {"n_modes": n_modes, "tau": tau, "deltas": list(deltas), "horizon": horizon, "n_replicas": n_replicas,
         "seed": seed, "start": start, "stderr": ses, "zero_potential_gap": accepted_moves_gap(zero)},
        gaps, None,
        {"decreasing": dec, "zero_potential_exact": accepted_moves_gap(zero) == 0.0},
        [f"delta={d:g}" for d in deltas],
    )


def invariance_suite(n_modes: int = 16, tau: float = 1.0, deltas=(1e-2, 1e-3, 1e-4), horizon: float = 1.0,
                     epsilon: float = 1.0, seed: int = 8, n_inner: int = 1000) -> DiagnosticReport:
    """Finite-delta martingale conditions for the s = 0 quadratic; trace residual should fall with delta.

    The conditional mean increment uses ``n_inner`` proposals per step at the
    largest delta and the limiting drift ``delta d(x)`` at the smaller ones,
    where its error is below the Monte Carlo noise of the sums.
    """
    spec = brownian_bridge_spectrum(n_modes)
    pot = DiagonalQuadratic(0.0)
    x0 = sample_prior(spec, n_modes, tau, RngStream(seed, 999))
    r1, r2, r3, se = [], [], [], []
    for i, d in enumerate(deltas):
        params = PcnParams(d, tau, spec)
        traj = run(x0, pot, params, int(round(horizon / d)), stride=1, rng=RngStream(seed, i))
        mode = "mc" if i == 0 else "limit"
        rep = invariance_surrogates(pot, params, traj, epsilon, n_inner=n_inner,
                                    rng=RngStream(seed, 100 + i), mean=mode)
        r1.append(rep.residuals[0]); r2.append(rep.residuals[1]); r3.append(rep.residuals[2])
        se.append(rep.residuals[3])
    trend = all(r1[i + 1] <= r1[i] + 3 * math.hypot(se[i], se[i + 1]) for i in range(len(r1) - 1))
    return DiagnosticReport(
        "invariance_surrogates",
        {"n_modes": n_modes, "tau": tau, "deltas": list(deltas), "horizon": horizon, "epsilon": epsilon,
         "seed": seed, "covariance_pairs": r2, "lindeberg": r3, "trace_stderr": se},
        r1, None, {"trace_residual_trend": trend, "lindeberg_small": r3[-1] <= 1e-2},
        [f"delta={d:g}" for d in deltas],
    )


def apriori_suite(n_modes: int = 32, tau: float = 1.0, deltas=(1e-2, 1e-3, 1e-4), horizon: float = 1.0,
                  n_replicas: int = 20, seed: int = 9) -> DiagnosticReport:
    spec = brownian_bridge_spectrum(n_modes)
    x0 = sample_prior(spec, n_modes, tau, RngStream(seed, 999))
    return apriori_bound_witness(DiagonalQuadratic(0.0), spec, tau, x0, horizon, deltas, n_replicas, seed, s=0.0)


def zero_potential_suite(n_modes: int = 32, delta: float = 1e-2, tau: float = 1.0, n_mc: int = 100_000,
                         seed: int = 10) -> DiagnosticReport:
    """Degenerate checks where the chain is the exact OU proposal."""
    spec = brownian_bridge_spectrum(n_modes)
    pot = ZeroPotential()
    params = PcnParams(delta, tau, spec)
    x = sample_prior(spec, n_modes, tau, RngStream(seed, 999))
    est = drift_estimate(pot, params, x, n_mc, RngStream(seed, 0))
    exact = (params.contraction - 1.0) / delta * x.coeffs
    drift_err = float(np.max(np.abs(est.value.coeffs - exact)))
    nc = noise_covariance(pot, params, x, n_mc, RngStream(seed, 1), n_modes=5)
    cov_z = float(np.max(np.abs(nc.matrix - nc.reference) / np.maximum(nc.stderr, 1e-300)))
    ident = baracc_identity(pot, x, params, n_mc, RngStream(seed, 2))
    traj = run(x, pot, params, 500, stride=1, rng=RngStream(seed, 3))
    inv = invariance_surrogates(pot, params, traj, 1.0, rng=RngStream(seed, 4), n_inner=1000)
    return DiagnosticReport(
        "zero_potential",
        {"n_modes": n_modes, "delta": delta, "tau": tau, "n_mc": n_mc, "seed": seed,
         "identity_stderr": ident.stderr, "trace_stderr": inv.residuals[3]},
        [drift_err, cov_z, ident.residual, inv.residuals[0]],
        None,
        {"drift_exact": drift_err <= 1e-12 * (1 + float(np.max(np.abs(exact)))),
         "covariance_within_4se": cov_z <= 4.0,
         "identity_within_3se": ident.residual <= 3 * ident.stderr,
         "trace_within_3se": inv.residuals[0] <= 3 * inv.residuals[3],
         "all_accepted": bool(traj.flags.all())},
        ["drift_max_abs", "covariance_max_z", "identity", "trace_residual"],
    )
