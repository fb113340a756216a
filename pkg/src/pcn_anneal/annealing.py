"""Simulated annealing with the pCN kernel and the double-well reference problem.

The reference minimisers solve ``x'' + lam x (1 - x^2) = 0`` with
``x(0) = x(1) = 0``; for ``lam > pi^2`` a positive and a negative branch
bifurcate from the zero solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq, root_scalar

from .diagnostics import DomainError, OrderFit, fit_order
from .gaussian import RngStream
from .pcn import PcnParams, Trajectory, run, simulate
from .potential import DoubleWell, Potential
from .spectral import CovarianceSpectrum, SpectralField, synthesize, trapezoid

__all__ = [
    "CoolingSchedule",
    "ElSolution",
    "TauScalingResult",
    "anneal",
    "energy",
    "euler_lagrange_solutions",
    "shoot",
    "l2_error_to_minimizer",
    "l2_error_series",
    "plateau_test",
    "tau_scaling_experiment",
]

RK4_SUBSTEPS = 10_000
_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class CoolingSchedule:
    """Temperature sequence ``tau_k``.

    ``fixed``: ``tau0``; ``geometric``: ``tau0 rho^k``; ``logarithmic``:
    ``c / log(k + 2)``.  Values are floored at the smallest normal double so
    they stay strictly positive.
    """

    kind: str = "geometric"
    tau0: float = 1.0
    rho: float = 0.999
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in ("fixed", "geometric", "logarithmic"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not self.tau0 > 0:
            raise ValueError("tau0 must be positive")
        if self.kind == "geometric" and not 0.0 < self.rho < 1.0:
            raise ValueError("geometric rate rho must lie in (0, 1)")
        if self.kind == "logarithmic" and not self.c > 0:
            raise ValueError("logarithmic constant c must be positive")

    def taus(self, n_steps: int) -> np.ndarray:
        k = np.arange(n_steps, dtype=float)
        if self.kind == "fixed":
            out = np.full(n_steps, self.tau0)
        elif self.kind == "geometric":
            out = self.tau0 * np.exp(k * math.log(self.rho))
        else:
            out = self.c / np.log(k + 2.0)
        return np.maximum(out, _TINY)

    def __call__(self, k: int) -> float:
        return float(self.taus(k + 1)[-1])


def energy(p: Potential, spec: CovarianceSpectrum, x: SpectralField | np.ndarray) -> float | np.ndarray:
    """``J(x) = 1/2 ||C^-1/2 x||^2 + Psi(x)``."""
    c = x.coeffs if isinstance(x, SpectralField) else np.asarray(x, dtype=float)
    n = c.shape[-1]
    out = 0.5 * np.sum((c / spec.lambdas[:n]) ** 2, axis=-1) + p.value(c)
    return float(out) if np.ndim(out) == 0 else out


def anneal(p: Potential, spec: CovarianceSpectrum, schedule: CoolingSchedule, delta: float, n_steps: int,
           initial: SpectralField, rng: RngStream, stride: int = 10) -> tuple[SpectralField, Trajectory]:
    """pCN with ``tau = tau_k`` at step k; a fixed schedule gives the plain chain."""
    taus = schedule.taus(n_steps)
    params = PcnParams(delta, float(taus[0]), spec)
    traj = run(initial, p, params, n_steps, stride=stride, rng=rng, tau=taus)
    traj.meta["schedule"] = schedule
    return traj.final, traj


# --- Euler-Lagrange reference solutions --------------------------------------

def _rk4_terminal(a: np.ndarray, lam: float, n_sub: int, record: int = 0):
    """Integrate ``x'' = -lam x (1 - x^2)`` from ``(0, a)`` to s = 1 for each slope."""
    h = 1.0 / n_sub
    x = np.zeros_like(a, dtype=float)
    v = np.array(a, dtype=float)
    path = [x.copy()] if record else None
    every = n_sub // record if record else 0

    def f(x):
        return -lam * x * (1.0 - x * x)

    for i in range(n_sub):
        k1x, k1v = v, f(x)
        k2x, k2v = v + 0.5 * h * k1v, f(x + 0.5 * h * k1x)
        k3x, k3v = v + 0.5 * h * k2v, f(x + 0.5 * h * k2x)
        k4x, k4v = v + h * k3v, f(x + h * k3x)
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        if record and (i + 1) % every == 0:
            path.append(x.copy())
    return (x, np.array(path)) if record else x


def _rk4_scalar(a: float, lam: float, n_sub: int, record: int = 0):
    """Single-shot version of :func:`_rk4_terminal` on Python floats; much faster per step."""
    h = 1.0 / n_sub
    h2, h6 = 0.5 * h, h / 6.0
    x, v = 0.0, float(a)
    every = n_sub // record if record else 0
    path = [0.0] if record else None
    for i in range(n_sub):
        k1v = -lam * x * (1.0 - x * x)
        x2 = x + h2 * v
        v2 = v + h2 * k1v
        k2v = -lam * x2 * (1.0 - x2 * x2)
        x3 = x + h2 * v2
        v3 = v + h2 * k2v
        k3v = -lam * x3 * (1.0 - x3 * x3)
        x4 = x + h * v3
        v4 = v + h * k3v
        k4v = -lam * x4 * (1.0 - x4 * x4)
        x = x + h6 * (v + 2.0 * v2 + 2.0 * v3 + v4)
        v = v + h6 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        if record and (i + 1) % every == 0:
            path.append(x)
    return (x, np.array(path)) if record else x


def _slope(amp, lam):
    # energy conservation: a^2 = lam (A^2 - A^4 / 2) for turning point A
    return np.sqrt(lam * (amp * amp - 0.5 * amp**4))


def shoot(lam: float, n_sub: int = RK4_SUBSTEPS) -> float | None:
    """Initial slope of the positive single-hump solution, or ``None`` if there is none.

    The shot is parametrised by its turning-point amplitude ``A`` in (0, 1),
    scanned with clustering towards the separatrix ``A = 1``.  The single hump
    is the largest-amplitude sign change of ``x(1)``, refined by the secant
    method.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    amps = np.unique(np.concatenate([np.linspace(1e-4, 0.1, 50),
                                     1.0 - np.logspace(math.log10(0.9), -14, 400)]))
    end = _rk4_terminal(_slope(amps, lam), lam, n_sub // 10)
    sign = np.flatnonzero(np.sign(end[:-1]) * np.sign(end[1:]) < 0)
    if sign.size == 0:
        return None
    lo, hi = amps[sign[-1]], amps[sign[-1] + 1]

    def g(amp):
        return _rk4_scalar(float(_slope(amp, lam)), lam, n_sub)

    sol = root_scalar(g, method="secant", x0=lo, x1=hi, xtol=1e-13, maxiter=50)
    amp = sol.root
    if not (sol.converged and lo - (hi - lo) <= amp <= min(hi + (hi - lo), 1.0)):
        # the coarse scan bracket can be off by the coarse-integration error; widen once
        amp = brentq(g, max(lo - (hi - lo), 0.0), min(hi + (hi - lo), 1.0), xtol=1e-13)
    return float(_slope(amp, lam))


def _bvp_newton(x0: np.ndarray, lam: float, tol: float, max_iter: int = 30) -> np.ndarray:
    """Newton iteration on the centred-difference system with zero boundary values."""
    m = x0.size - 1
    h2inv = float(m * m)
    x = x0.copy()
    x[0] = x[-1] = 0.0
    ab = np.empty((3, m - 1))
    for _ in range(max_iter):
        xi = x[1:-1]
        F = (x[2:] - 2.0 * xi + x[:-2]) * h2inv + lam * xi * (1.0 - xi * xi)
        if np.max(np.abs(F)) <= tol:
            break
        ab[0, :] = h2inv
        ab[2, :] = h2inv
        ab[1, :] = -2.0 * h2inv + lam * (1.0 - 3.0 * xi * xi)
        x[1:-1] = xi - solve_banded((1, 1), ab, F)
    return x


def _bvp_residual(x: np.ndarray, lam: float) -> float:
    m = x.size - 1
    xi = x[1:-1]
    r = (x[2:] - 2.0 * xi + x[:-2]) * (m * m) + lam * xi * (1.0 - xi * xi)
    return float(np.max(np.abs(r))) if r.size else 0.0


@dataclass(frozen=True)
class ElSolution:
    """Grid solution of the discrete boundary-value problem on ``s_i = i/m``."""

    values: np.ndarray
    branch: str
    residual: float
    lam: float
    slope: float = 0.0
    """Initial slope from the continuous shooting problem."""

    def __post_init__(self):
        if self.branch not in ("zero", "positive", "negative"):
            raise ValueError(f"unknown branch {self.branch!r}")
        v = np.array(self.values, dtype=float)
        if v[0] != 0.0 or v[-1] != 0.0:
            raise ValueError("boundary values must vanish")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.values.size - 1

    @property
    def s(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.m + 1)

    @property
    def amplitude(self) -> float:
        return float(np.max(np.abs(self.values)))

    def energy(self) -> float:
        """``int 1/2 x'^2 + lam/4 (x^2 - 1)^2`` with forward differences and the trapezoid rule."""
        dx = np.diff(self.values) * self.m
        return 0.5 * float(np.mean(dx * dx)) + 0.25 * self.lam * trapezoid((self.values**2 - 1.0) ** 2)


def euler_lagrange_solutions(lam: float, m: int = 512) -> list[ElSolution]:
    """Zero branch always; the positive and negated branch when ``lam > pi^2`` admits them."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if m < 64:
        raise ValueError("grid needs m >= 64")
    zero = ElSolution(np.zeros(m + 1), "zero", 0.0, lam)
    a = shoot(lam)
    if a is None:
        return [zero]
    # the RK4 path at the grid nodes seeds Newton on the discrete problem
    n_sub = m * math.ceil(RK4_SUBSTEPS / m)
    x_cont = _rk4_scalar(a, lam, n_sub, record=m)[1]
    path = _bvp_newton(x_cont, lam, 1e-12 * (1.0 + lam))
    pos = ElSolution(path, "positive", _bvp_residual(path, lam), lam, a)
    neg = ElSolution(-path, "negative", _bvp_residual(-path, lam), lam, -a)
    return [zero, pos, neg]


def _nonzero(sols: Sequence[ElSolution]) -> list[ElSolution]:
    out = [s for s in sols if s.branch != "zero"]
    if not out:
        raise DomainError("no nonzero Euler-Lagrange branch to compare against")
    return out


def l2_error_series(states: np.ndarray, sols: Sequence[ElSolution]) -> np.ndarray:
    """Distance to the nearest nonzero branch for every row of ``states`` (..., N)."""
    branches = _nonzero(sols)
    m = branches[0].m
    g = synthesize(states, m)
    d = [np.sqrt(trapezoid((g - b.values) ** 2)) for b in branches]
    return np.min(np.stack(d), axis=0)


def l2_error_to_minimizer(x: SpectralField, sols: Sequence[ElSolution]) -> float:
    """Trapezoid-rule L^2 distance from ``x`` to the nearest nonzero branch."""
    return float(l2_error_series(x.coeffs, sols))


# --- plateau test and tau scaling --------------------------------------------

def _quarter_change(tail: np.ndarray, n_batches: int) -> tuple[np.ndarray, np.ndarray]:
    """Fitted change across the batch means of ``tail`` (T, ...) and its regression stderr."""
    usable = (tail.shape[0] // n_batches) * n_batches
    means = tail[-usable:].reshape((n_batches, -1) + tail.shape[1:]).mean(axis=1)
    idx = np.arange(n_batches, dtype=float)
    ic = idx - idx.mean()
    sxx = float(ic @ ic)
    slope = np.tensordot(ic, means - means.mean(axis=0), axes=(0, 0)) / sxx
    fitted = means.mean(axis=0) + np.multiply.outer(ic, slope)
    rss = ((means - fitted) ** 2).sum(axis=0)
    span = n_batches - 1
    return slope * span, np.sqrt(rss / (n_batches - 2) / sxx) * span, means.mean(axis=0)


def plateau_test(series: np.ndarray, n_batches: int = 10, rel_tol: float = 0.05) -> tuple[bool, float, float]:
    """Last-quarter trend test on batch means.

    The final quarter of ``series`` is cut into ``n_batches`` batches and their
    means are regressed on the batch index; ``change`` is the fitted drift
    across the quarter.  For a 2-D ``(time, replica)`` array the change is
    fitted per replica and its standard error is taken across the independent
    replicas; for a single series it is the regression standard error.  The run
    counts as plateaued when ``|change|`` is within three standard errors or
    within ``rel_tol`` of the mean level.  Returns ``(passed, change, stderr)``.
    """
    e = np.asarray(series, dtype=float)
    tail = e[-(e.shape[0] // 4):]
    if tail.shape[0] < 2 * n_batches:
        raise ValueError("series too short for the last-quarter trend test")
    change, se, level = _quarter_change(tail, n_batches)
    if e.ndim == 2 and e.shape[1] > 1:
        R = e.shape[1]
        change, se, level = change.mean(), change.std(ddof=1) / math.sqrt(R), level.mean()
    change, se, level = float(change), float(se), float(level)
    ok = abs(change) <= max(3.0 * se, rel_tol * abs(level))
    return bool(ok), change, se


@dataclass
class TauScalingResult:
    taus: np.ndarray
    mean_error: np.ndarray
    stderr: np.ndarray
    plateaued: np.ndarray
    fit: OrderFit | None
    acceptance: np.ndarray
    meta: dict = field(default_factory=dict)


def tau_scaling_experiment(lam: float, taus: Sequence[float], delta: float | Sequence[float],
                           n_steps: int | Sequence[int], n_replicas: int, seed: int, n_modes: int = 64,
                           m_el: int = 512, burn_in: float = 0.5, n_snapshots: int = 1000) -> TauScalingResult:
    """Mean plateau L^2 error to the nearest minimiser as a function of ``tau``.

    Every temperature runs ``n_replicas`` chains from zero on the Brownian-bridge
    prior.  The first ``burn_in`` fraction of each run is discarded, the
    remaining errors are averaged per replica, and the replica means are
    averaged.  Points whose replica-averaged series fails the last-quarter
    trend test are flagged and left out of the fit.  About ``n_snapshots``
    states per run enter the statistics.
    """
    from .gaussian import brownian_bridge_spectrum

    taus = np.asarray(taus, dtype=float)
    deltas = np.broadcast_to(np.asarray(delta, dtype=float), taus.shape)
    steps = np.broadcast_to(np.asarray(n_steps, dtype=int), taus.shape)
    spec = brownian_bridge_spectrum(n_modes)
    pot = DoubleWell(lam)
    sols = euler_lagrange_solutions(lam, m_el)
    means, ses, flags, acc = [], [], [], []
    for i, (t, d, n) in enumerate(zip(taus, deltas, steps)):
        rngs = RngStream.replicas(seed, n_replicas, offset=i * n_replicas)
        stride = max(1, int(n) // n_snapshots)
        ens = simulate(np.zeros(n_modes), pot, spec, float(d), float(t), int(n), rngs, stride=stride)
        err = l2_error_series(ens.states, sols)
        keep = ens.steps >= burn_in * n
        per_rep = err[keep].mean(axis=0)
        means.append(float(per_rep.mean()))
        ses.append(float(per_rep.std(ddof=1) / math.sqrt(n_replicas)) if n_replicas > 1 else 0.0)
        flags.append(plateau_test(err[keep])[0])
        acc.append(float(ens.flags.mean()))
    means, ses, flags = np.array(means), np.array(ses), np.array(flags)
    good = flags & (means > 0)
    fit = fit_order(zip(taus[good], means[good])) if np.count_nonzero(good) >= 3 else None
    return TauScalingResult(taus, means, ses, flags, fit, np.array(acc),
                            {"lambda": lam, "delta": deltas.tolist(), "n_steps": steps.tolist(),
                             "n_replicas": n_replicas, "seed": seed, "n_modes": n_modes})
