"""Quadratic variation, fluid-limit comparison, accepted-move accounting,
invariance-principle surrogates and log-log order fits."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .gaussian import RngStream, sample_prior
from .pcn import PcnParams, Trajectory, drift_estimate, qv_partial, simulate
from .potential import Potential
from .sde import fluid_ode_solution
from .spectral import CovarianceSpectrum, DimensionError, SpectralField, sobolev_norm, sobolev_weights, trace_hr

__all__ = [
    "DomainError",
    "QvSeries",
    "OrderFit",
    "DiagnosticReport",
    "quadratic_variation",
    "qv_additivity_residual",
    "qv_series",
    "fluid_limit_sup_error",
    "accepted_moves_gap",
    "invariance_surrogates",
    "apriori_bound_witness",
    "drift_growth_constant",
    "fit_order",
]

DEFAULT_PAIRS = ((1, 1), (1, 2), (2, 2), (5, 5))


class DomainError(ValueError):
    """Argument outside the domain where the quantity is defined."""


# --- quadratic variation -----------------------------------------------------

def quadratic_variation(x: SpectralField, spec: CovarianceSpectrum, n_qv: int | None = None) -> float:
    """``V_n(x) = n^-1 sum_{j<=n} x_j^2 / lambda_j^2`` on the first ``n_qv`` modes."""
    n = x.n_modes if n_qv is None else int(n_qv)
    if n > x.n_modes or n > spec.n_modes:
        raise DimensionError(f"n_qv = {n} exceeds the {min(x.n_modes, spec.n_modes)} available modes")
    if n < 1:
        raise DimensionError("n_qv must be at least 1")
    return qv_partial(x.coeffs[:n], spec.lambdas)


def qv_additivity_residual(x: SpectralField, alpha: float, spec: CovarianceSpectrum, n_qv: int,
                           rng: RngStream) -> float:
    """``|V(x + alpha xi) - V(x) - alpha^2|`` for one draw ``xi ~ N(0, C)``."""
    if alpha == 0:
        return 0.0
    xi = sample_prior(spec, x.n_modes, 1.0, rng)
    y = SpectralField(x.coeffs + alpha * xi.coeffs)
    return abs(quadratic_variation(y, spec, n_qv) - quadratic_variation(x, spec, n_qv) - alpha * alpha)


@dataclass(frozen=True)
class QvSeries:
    """``v(t_k) = V_n(x^k)`` at the snapshot times; linear in between."""

    times: np.ndarray
    values: np.ndarray
    n_qv: int

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1 or t.size < 1:
            raise ValueError("times and values must be matching one-dimensional arrays")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(v < 0):
            raise ValueError("quadratic variation values must be non-negative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    @property
    def end(self) -> float:
        return float(self.times[-1])


def qv_series(traj: Trajectory, spec: CovarianceSpectrum | None = None, n_qv: int | None = None) -> QvSeries:
    spec = traj.spec if spec is None else spec
    n = traj.states.shape[1] if n_qv is None else int(n_qv)
    if n > traj.states.shape[1]:
        raise DimensionError(f"n_qv = {n} exceeds the {traj.states.shape[1]} recorded modes")
    return QvSeries(traj.times, qv_partial(traj.states[:, :n], spec.lambdas), n)


def fluid_limit_sup_error(series: QvSeries, tau: float, horizon: float) -> float:
    """``sup_{t <= horizon} |v(t) - (tau + (v(0) - tau) e^-2t)|`` over the snapshot times."""
    if horizon > series.end * (1 + 1e-12):
        raise ValueError(f"horizon {horizon} beyond the series end {series.end}")
    t = series.times[series.times <= horizon]
    if t[-1] < horizon:
        t = np.append(t, horizon)
    ode = fluid_ode_solution(float(series.values[0]), tau, t)
    return float(np.max(np.abs(series(t) - ode)))


def accepted_moves_gap(traj: Trajectory) -> float:
    """``max_k delta (k - t(k))`` where ``t(k)`` counts accepted moves among the first k."""
    k = np.arange(traj.n_steps + 1)
    return float(traj.delta * np.max(k - traj.accepted_counts))


# --- reports and fits --------------------------------------------------------

@dataclass(frozen=True)
class OrderFit:
    log_x: np.ndarray
    log_y: np.ndarray
    slope: float
    intercept: float
    residual: float
    """Root-mean-square deviation of the log-ordinates from the line."""

    def as_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "residual": self.residual}


def fit_order(points: Iterable[tuple[float, float]]) -> OrderFit:
    """Least-squares line through ``(log scale, log error)``; the slope is the order."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be (scale, error) pairs")
    if pts.shape[0] < 3:
        raise DomainError(f"an order fit needs at least 3 points, got {pts.shape[0]}")
    if np.any(~np.isfinite(pts)) or np.any(pts <= 0):
        raise DomainError("scales and errors must be finite and strictly positive")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    slope, intercept = np.polyfit(lx, ly, 1)
    res = math.sqrt(float(np.mean((ly - (slope * lx + intercept)) ** 2)))
    return OrderFit(lx, ly, float(slope), float(intercept), res)


@dataclass
class DiagnosticReport:
    """Named set of residuals with an optional order fit and pass flags."""

    name: str
    parameters: dict = field(default_factory=dict)
    residuals: list = field(default_factory=list)
    fit: OrderFit | None = None
    passed: dict = field(default_factory=dict)
    labels: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "parameters": _jsonable(self.parameters),
            "residuals": [float(r) for r in self.residuals],
            "residual_labels": list(self.labels),
            "fit": None if self.fit is None else self.fit.as_dict(),
            "pass": {k: bool(v) for k, v in self.passed.items()},
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.as_dict(), **kw)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# --- invariance-principle surrogates ----------------------------------------

def _martingale_increments(p: Potential, params: PcnParams, traj: Trajectory, n_inner: int,
                           rng: RngStream | None, mean: str) -> np.ndarray:
    X = traj.states
    inc = X[1:] - X[:-1]
    d = params.delta
    if mean == "limit":
        m = d * (-X[:-1] - params.spec.lambdas**2 * p.grad(X[:-1]))
    elif mean == "mc":
        rng = RngStream() if rng is None else rng
        m = np.empty_like(inc)
        for k in range(inc.shape[0]):
            m[k] = d * drift_estimate(p, params, SpectralField(X[k]), n_inner, rng).value.coeffs
    else:
        raise ValueError(f"unknown mean-increment mode {mean!r}")
    return (inc - m) / params.noise_scale


def invariance_surrogates(p: Potential, params: PcnParams, traj: Trajectory, epsilon: float,
                          pairs: Sequence[tuple[int, int]] = DEFAULT_PAIRS, n_inner: int = 1000,
                          rng: RngStream | None = None, s: float | None = None,
                          mean: str = "mc") -> DiagnosticReport:
    """Finite-delta versions of the three martingale conditions along one chain.

    ``Gamma^k = (x^{k+1} - x^k - E[x^{k+1} - x^k | x^k]) / sqrt(2 tau delta)``
    with the conditional mean estimated by ``n_inner`` proposals per step
    (``mean="mc"``) or replaced by ``delta d(x^k)`` (``mean="limit"``).

    Residuals, all relative to ``T Trace_{H^s}(C_s)``:

    1. ``|delta sum ||Gamma^k||_s^2 - T Trace|``;
    2. ``max`` over ``pairs`` of ``|delta sum G_i G_j - T <phi_i^, C_s phi_j^>_s|`` with ``G_i = i^s Gamma_i``;
    3. the Lindeberg sum ``delta sum ||Gamma^k||_s^2 1{||Gamma^k||_s^2 >= epsilon / delta}``.
    """
    if not traj.unstrided:
        raise ValueError("invariance surrogates need a trajectory recorded with stride 1")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    s = p.s_exp if s is None else s
    G = _martingale_increments(p, params, traj, n_inner, rng, mean)
    K, N = G.shape
    d = params.delta
    T = K * d
    trace = trace_hr(params.spec, s, N)
    scale = T * trace
    sq = (sobolev_weights(N, s) * G * G).sum(axis=1)
    r1 = abs(d * sq.sum() - scale) / scale
    se1 = float(np.std(sq, ddof=1) / (math.sqrt(K) * trace)) if K > 1 else float("nan")
    lam = params.spec.lambdas
    worst = 0.0
    for i, j in pairs:
        if max(i, j) > N:
            raise DimensionError(f"pair {(i, j)} exceeds {N} modes")
        gi = i**s * G[:, i - 1]
        gj = j**s * G[:, j - 1]
        ref = T * (i ** (2 * s) * lam[i - 1] ** 2 if i == j else 0.0)
        worst = max(worst, abs(d * float(gi @ gj) - ref) / scale)
    r3 = d * float(sq[sq >= epsilon / d].sum()) / scale
    return DiagnosticReport(
        name="invariance_surrogates",
        parameters={"delta": d, "tau": params.tau, "n_steps": K, "epsilon": epsilon, "s": s,
                    "pairs": [list(q) for q in pairs], "mean": mean, "n_inner": n_inner,
                    "potential": p.label},
        residuals=[r1, worst, r3, se1],
        labels=["trace", "covariance_pairs", "lindeberg", "trace_stderr"],
    )


def apriori_bound_witness(p: Potential, spec: CovarianceSpectrum, tau: float, x0: SpectralField,
                          horizon: float, deltas: Sequence[float], n_replicas: int, seed: int,
                          s: float | None = None) -> DiagnosticReport:
    """``delta sum_{k delta <= T} ||x^k||_s^2`` averaged over replicas, for each delta.

    Passes when no refinement raises the mean by more than three combined
    standard errors.
    """
    s = p.s_exp if s is None else s
    means, ses = [], []
    for i, d in enumerate(deltas):
        n_steps = int(round(horizon / d))
        rngs = RngStream.replicas(seed, n_replicas, offset=i * n_replicas)
        ens = simulate(x0, p, spec, d, tau, n_steps, rngs, stride=1)
        vals = d * (sobolev_norm(ens.states, s) ** 2).sum(axis=0)
        means.append(float(vals.mean()))
        ses.append(float(vals.std(ddof=1) / math.sqrt(n_replicas)) if n_replicas > 1 else 0.0)
    ok = all(means[i + 1] <= means[i] + 3 * math.hypot(ses[i], ses[i + 1]) for i in range(len(means) - 1))
    return DiagnosticReport(
        name="apriori_bound",
        parameters={"deltas": list(deltas), "tau": tau, "horizon": horizon, "n_replicas": n_replicas,
                    "seed": seed, "s": s, "potential": p.label, "stderr": ses},
        residuals=means,
        labels=[f"delta={d:g}" for d in deltas],
        passed={"non_increasing": ok},
    )


def drift_growth_constant(p: Potential, params: PcnParams, xs: Sequence[SpectralField], n_mc: int,
                          rng: RngStream, s: float | None = None) -> DiagnosticReport:
    """Ratios ``||d^delta(x)||_s / (1 + ||x||_s)``; their maximum is the recorded constant."""
    s = p.s_exp if s is None else s
    ratios = []
    for x in xs:
        est = drift_estimate(p, params, x, n_mc, rng, s=s)
        ratios.append(sobolev_norm(est.value, s) / (1.0 + sobolev_norm(x, s)))
    return DiagnosticReport(
        name="drift_growth",
        parameters={"delta": params.delta, "tau": params.tau, "n_mc": n_mc, "s": s,
                    "norms": [sobolev_norm(x, s) for x in xs], "K": max(ratios)},
        residuals=ratios,
        labels=[f"x{i}" for i in range(len(xs))],
    )
