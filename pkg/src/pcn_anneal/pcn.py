"""Preconditioned Crank-Nicolson Metropolis-Hastings chain on N retained modes.

The kernel proposes ``y = (1 - 2 delta)^(1/2) x + sqrt(2 delta tau) xi`` with
``xi ~ N(0, C)`` and accepts with probability ``1 ^ exp(-(Psi(y) - Psi(x))/tau)``.
Besides the chain itself the module holds Monte Carlo estimators for the
one-step drift, the noise covariance and the linearised acceptance.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .gaussian import RngStream, sample_prior
from .potential import Potential
from .spectral import CovarianceSpectrum, DimensionError, SpectralField, sobolev_norm, sobolev_weights

__all__ = [
    "PcnParams",
    "ChainState",
    "Trajectory",
    "Ensemble",
    "propose",
    "acceptance_prob",
    "init_state",
    "step",
    "run",
    "simulate",
    "interpolate",
    "empirical_drift",
    "drift_estimate",
    "approx_acceptance",
    "acceptance_errors",
    "empirical_noise_covariance",
    "noise_covariance",
    "baracc_identity_residual",
    "baracc_identity",
    "qv_partial",
]

# exp(-745) is the smallest positive double
_LOG_FLOOR = -745.0
_CHUNK_ELEMS = 1 << 22


@dataclass(frozen=True)
class PcnParams:
    """Step size ``delta`` in (0, 1/2), temperature ``tau`` and the prior spectrum."""

    delta: float
    tau: float
    spec: CovarianceSpectrum

    def __post_init__(self):
        if not 0.0 < self.delta < 0.5:
            raise ValueError(f"delta must lie in (0, 1/2), got {self.delta}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")

    @property
    def n_modes(self) -> int:
        return self.spec.n_modes

    @property
    def contraction(self) -> float:
        return math.sqrt(1.0 - 2.0 * self.delta)

    @property
    def noise_scale(self) -> float:
        return math.sqrt(2.0 * self.delta * self.tau)


def qv_partial(coeffs: np.ndarray, lambdas: np.ndarray) -> np.ndarray | float:
    """``N^-1 sum_j x_j^2 / lambda_j^2`` over the last axis."""
    c = np.asarray(coeffs, dtype=float)
    n = c.shape[-1]
    out = np.mean((c / lambdas[:n]) ** 2, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def _log_ratio(psi_x, psi_y, tau):
    return np.clip(-(psi_y - psi_x) / tau, _LOG_FLOOR, 0.0)


def _accept(psi_x, psi_y, tau):
    return np.exp(_log_ratio(psi_x, psi_y, tau))


def propose(x: SpectralField, params: PcnParams, rng: RngStream) -> tuple[SpectralField, SpectralField]:
    """Draw ``xi ~ N(0, C)`` and return the pCN proposal ``y`` together with ``xi``."""
    if x.n_modes != params.n_modes:
        raise DimensionError(f"field has {x.n_modes} modes, params {params.n_modes}")
    xi = sample_prior(params.spec, params.n_modes, 1.0, rng)
    y = params.contraction * x.coeffs + params.noise_scale * xi.coeffs
    return SpectralField(y), xi


def acceptance_prob(p: Potential, x: SpectralField, y: SpectralField, tau: float) -> float:
    """Metropolis-Hastings acceptance ``1 ^ exp(-(Psi(y) - Psi(x))/tau)``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    return float(_accept(p.value(x.coeffs), p.value(y.coeffs), tau))


@dataclass(frozen=True)
class ChainState:
    """Chain position after ``k`` steps, ``accepted`` of which were moves."""

    x: SpectralField
    k: int = 0
    accepted: int = 0
    qv: float = 0.0
    psi: float = 0.0
    last_accepted: bool | None = None

    def __post_init__(self):
        if not 0 <= self.accepted <= self.k:
            raise ValueError("need 0 <= accepted <= k")


def init_state(x: SpectralField, p: Potential, spec: CovarianceSpectrum) -> ChainState:
    return ChainState(x, 0, 0, qv_partial(x.coeffs, spec.lambdas), float(p.value(x.coeffs)))


def step(state: ChainState, p: Potential, params: PcnParams, rng: RngStream) -> ChainState:
    """One accept-reject transition; a rejection leaves ``x`` bit-identical."""
    y, _ = propose(state.x, params, rng)
    psi_y = float(p.value(y.coeffs))
    alpha = _accept(state.psi, psi_y, params.tau)
    if rng.uniform() < alpha:
        return ChainState(y, state.k + 1, state.accepted + 1,
                          qv_partial(y.coeffs, params.spec.lambdas), psi_y, True)
    return replace(state, k=state.k + 1, last_accepted=False)


@dataclass
class Ensemble:
    """Output of :func:`simulate` for R replicas.

    ``states[i, r]`` is replica r after ``steps[i]`` steps; ``flags`` and
    ``alphas`` hold the accept indicator and acceptance probability of every
    step (shape ``(n_steps, R)``).
    """

    delta: float
    steps: np.ndarray
    states: np.ndarray
    flags: np.ndarray
    alphas: np.ndarray
    taus: np.ndarray
    final: np.ndarray
    final_psi: np.ndarray

    @property
    def n_replicas(self) -> int:
        return self.final.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.steps * self.delta

    def trajectory(self, r: int, spec: CovarianceSpectrum) -> Trajectory:
        return Trajectory(
            delta=self.delta,
            steps=self.steps.copy(),
            states=self.states[:, r, :].copy(),
            flags=self.flags[:, r].copy(),
            alphas=self.alphas[:, r].copy(),
            spec=spec,
            taus=self.taus.copy(),
        )


def _tau_sequence(tau, n_steps: int) -> np.ndarray:
    if callable(tau):
        taus = np.array([float(tau(k)) for k in range(n_steps)])
    else:
        taus = np.broadcast_to(np.asarray(tau, dtype=float), (n_steps,)).copy()
    if np.any(~(taus > 0)):
        raise ValueError("temperatures must be positive")
    return taus


def simulate(x0: np.ndarray | SpectralField, p: Potential, spec: CovarianceSpectrum, delta: float,
             tau: float | Sequence[float] | Callable[[int], float], n_steps: int,
             rngs: RngStream | Sequence[RngStream], stride: int = 10,
             block: int = 256) -> Ensemble:
    """Run R independent pCN replicas in lock-step.

    ``x0`` is ``(N,)`` (shared start) or ``(R, N)``.  ``tau`` may be a
    constant, a per-step array or a function of the step index.  Replica r
    draws all its randomness from ``rngs[r]``; the values coincide with those
    consumed by repeated :func:`step` calls on the same stream.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if stride < 1:
        raise ValueError("stride must be at least 1")
    if not 0.0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 1/2), got {delta}")
    if isinstance(rngs, RngStream):
        rngs = [rngs]
    R = len(rngs)
    x0 = x0.coeffs if isinstance(x0, SpectralField) else np.asarray(x0, dtype=float)
    X = np.array(np.broadcast_to(x0, (R, x0.shape[-1])), dtype=float)
    N = X.shape[1]
    if N != spec.n_modes:
        raise DimensionError(f"start has {N} modes, spectrum {spec.n_modes}")
    lam = spec.lambdas
    taus = _tau_sequence(tau, n_steps)
    a = math.sqrt(1.0 - 2.0 * delta)

    snap = list(range(0, n_steps + 1, stride))
    if snap[-1] != n_steps:
        snap.append(n_steps)
    snap = np.array(snap)
    states = np.empty((snap.size, R, N))
    states[0] = X
    flags = np.empty((n_steps, R), dtype=bool)
    alphas = np.empty((n_steps, R))
    psi = np.asarray(p.value(X), dtype=float).reshape(R)

    si = 1
    k = 0
    while k < n_steps:
        B = min(block, n_steps - k)
        rho = np.stack([g.normal((B, N)) for g in rngs], axis=1)
        U = np.stack([g.uniform(B) for g in rngs], axis=1)
        for b in range(B):
            t = taus[k]
            xi = lam * rho[b]
            Y = a * X + math.sqrt(2.0 * delta * t) * xi
            psi_y = np.asarray(p.value(Y), dtype=float).reshape(R)
            alpha = _accept(psi, psi_y, t)
            acc = U[b] < alpha
            X[acc] = Y[acc]
            psi[acc] = psi_y[acc]
            flags[k] = acc
            alphas[k] = alpha
            k += 1
            if si < snap.size and snap[si] == k:
                states[si] = X
                si += 1
    return Ensemble(delta, snap, states, flags, alphas, taus, X, psi)


@dataclass
class Trajectory:
    """Single-chain history: snapshots every ``stride`` steps, flags for every step."""

    delta: float
    steps: np.ndarray
    states: np.ndarray
    flags: np.ndarray
    alphas: np.ndarray
    spec: CovarianceSpectrum
    taus: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.diff(self.steps) <= 0):
            raise ValueError("snapshot steps must be strictly increasing")

    @property
    def times(self) -> np.ndarray:
        return self.steps * self.delta

    @property
    def n_steps(self) -> int:
        return self.flags.size

    @property
    def unstrided(self) -> bool:
        return self.steps.size == self.n_steps + 1

    @property
    def accepted_counts(self) -> np.ndarray:
        """``t(k)``, the number of accepted moves among the first k steps, k = 0..n."""
        return np.concatenate([[0], np.cumsum(self.flags)])

    @property
    def final(self) -> SpectralField:
        return SpectralField(self.states[-1])

    def state(self, i: int) -> SpectralField:
        return SpectralField(self.states[i])

    def qv(self, n_qv: int | None = None) -> np.ndarray:
        n = self.states.shape[1] if n_qv is None else n_qv
        return qv_partial(self.states[:, :n], self.spec.lambdas)

    def to_csv(self, path: str | Path | None = None, s: float = 0.0, n_coeffs: int = 8,
               header: str | None = None) -> str:
        """Rows ``k,t,accepted,qv,norm_s,coeff_1..coeff_J`` at each snapshot."""
        J = min(n_coeffs, self.states.shape[1])
        buf = io.StringIO(newline="")
        if header:
            for line in header.splitlines():
                buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "t", "accepted", "qv", "norm_s"] + [f"coeff_{j}" for j in range(1, J + 1)])
        counts = self.accepted_counts[self.steps]
        qv = self.qv()
        norms = sobolev_norm(self.states, s)
        for i, k in enumerate(self.steps):
            row = [str(int(k)), f"{k * self.delta:.17g}", str(int(counts[i])),
                   f"{qv[i]:.17g}", f"{norms[i]:.17g}"]
            row += [f"{c:.17g}" for c in self.states[i, :J]]
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="")
        return text


def run(initial: SpectralField, p: Potential, params: PcnParams, n_steps: int, stride: int = 10,
        rng: RngStream | None = None, tau=None) -> Trajectory:
    """Iterate the pCN kernel ``n_steps`` times, snapshotting every ``stride`` steps.

    ``tau`` overrides ``params.tau`` with a schedule (array or callable).
    """
    rng = RngStream() if rng is None else rng
    ens = simulate(initial, p, params.spec, params.delta, params.tau if tau is None else tau,
                   n_steps, [rng], stride=stride)
    return ens.trajectory(0, params.spec)


def interpolate(traj: Trajectory, t: float) -> SpectralField:
    """Piecewise-linear interpolant of an unstrided chain at time ``t``."""
    if not traj.unstrided:
        raise ValueError("interpolation needs a trajectory recorded with stride 1")
    T = traj.n_steps * traj.delta
    if not 0.0 <= t <= T:
        raise ValueError(f"t = {t} outside [0, {T}]")
    u = t / traj.delta
    if abs(u - round(u)) <= 1e-9 * max(1.0, u):
        # a node up to rounding in t = k delta
        return SpectralField(traj.states[int(round(u))])
    k = min(int(math.floor(u)), traj.n_steps - 1)
    tk, tk1 = k * traj.delta, (k + 1) * traj.delta
    w = (t - tk) / traj.delta
    return SpectralField(w * traj.states[k + 1] + ((tk1 - t) / traj.delta) * traj.states[k])


# --- Monte Carlo estimators at a fixed state ---------------------------------

def _chunks(n_mc: int, width: int):
    size = max(1, _CHUNK_ELEMS // max(width, 1))
    done = 0
    while done < n_mc:
        b = min(size, n_mc - done)
        yield b
        done += b


def _grid_width(p: Potential, n: int) -> int:
    return p.grid_size(n) if hasattr(p, "grid_size") else n


def _proposals(p, params, x, n_mc, rng):
    """Yield ``(xi, y, alpha, u)`` for chunks of independent proposals from ``x``."""
    lam = params.spec.lambdas
    psi_x = float(p.value(x))
    for b in _chunks(n_mc, _grid_width(p, x.size)):
        xi = lam * rng.normal((b, x.size))
        y = params.contraction * x + params.noise_scale * xi
        alpha = _accept(psi_x, np.asarray(p.value(y)), params.tau)
        yield xi, y, alpha, rng.uniform(b)


@dataclass(frozen=True)
class DriftEstimate:
    value: SpectralField
    stderr: float
    """Root of the summed per-mode variances of the estimator, in the H^s norm."""


def drift_estimate(p: Potential, params: PcnParams, x: SpectralField, n_mc: int,
                   rng: RngStream, estimator: str = "rao_blackwell", s: float | None = None) -> DriftEstimate:
    """Monte Carlo estimate of ``d^delta(x) = E[x' - x | x] / delta``.

    ``"bernoulli"`` averages ``gamma (y - x) / delta`` with simulated accept
    flags.  ``"rao_blackwell"`` replaces ``gamma`` by its conditional mean
    ``alpha`` and uses ``E xi = 0`` to centre the noise term, i.e. it averages
    ``((1-2delta)^(1/2) - 1) alpha x / delta + sqrt(2 tau / delta) (alpha - 1) xi``;
    both are unbiased for the same quantity.
    """
    if n_mc < 1000:
        raise ValueError("n_mc must be at least 10^3")
    if estimator not in ("rao_blackwell", "bernoulli"):
        raise ValueError(f"unknown estimator {estimator!r}")
    s = p.s_exp if s is None else s
    xc = x.coeffs
    d = params.delta
    c_x = (params.contraction - 1.0) / d
    c_xi = params.noise_scale / d
    tot = np.zeros(xc.size)
    sq = np.zeros(xc.size)
    for xi, y, alpha, u in _proposals(p, params, xc, n_mc, rng):
        if estimator == "bernoulli":
            g = (u < alpha).astype(float)
            inc = g[:, None] * (c_x * xc + c_xi * xi)
        else:
            inc = (c_x * alpha)[:, None] * xc + (c_xi * (alpha - 1.0))[:, None] * xi
        tot += inc.sum(axis=0)
        sq += (inc * inc).sum(axis=0)
    mean = tot / n_mc
    var = np.maximum(sq / n_mc - mean**2, 0.0) / n_mc
    se = math.sqrt(float(np.sum(sobolev_weights(xc.size, s) * var)))
    return DriftEstimate(SpectralField(mean), se)


def empirical_drift(p: Potential, params: PcnParams, x: SpectralField, n_mc: int = 100_000,
                    rng: RngStream | None = None, estimator: str = "rao_blackwell") -> SpectralField:
    rng = RngStream() if rng is None else rng
    return drift_estimate(p, params, x, n_mc, rng, estimator).value


def approx_acceptance(p: Potential, x: SpectralField, xi: SpectralField | np.ndarray,
                      params: PcnParams) -> float | np.ndarray:
    """Linearised acceptance ``1 - sqrt(2 delta / tau) <grad Psi(x), xi>_+``."""
    g = p.grad(x.coeffs)
    z = (xi.coeffs if isinstance(xi, SpectralField) else np.asarray(xi)) @ g
    out = 1.0 - math.sqrt(2.0 * params.delta / params.tau) * np.maximum(z, 0.0)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class AcceptanceErrors:
    """Moments ``E|alpha - alpha_bar|`` and ``E|1 - alpha|`` with standard errors."""

    linearisation: float
    linearisation_se: float
    rejection: float
    rejection_se: float
    mean_alpha: float


def acceptance_errors(p: Potential, params: PcnParams, x: SpectralField, n_mc: int,
                      rng: RngStream) -> AcceptanceErrors:
    xc = x.coeffs
    g = p.grad(xc)
    c = math.sqrt(2.0 * params.delta / params.tau)
    s1 = s1q = s2 = s2q = sa = 0.0
    for xi, _y, alpha, _u in _proposals(p, params, xc, n_mc, rng):
        abar = 1.0 - c * np.maximum(xi @ g, 0.0)
        e1 = np.abs(alpha - abar)
        e2 = 1.0 - alpha
        s1 += e1.sum(); s1q += (e1 * e1).sum()
        s2 += e2.sum(); s2q += (e2 * e2).sum()
        sa += alpha.sum()
    m1, m2 = s1 / n_mc, s2 / n_mc
    se1 = math.sqrt(max(s1q / n_mc - m1 * m1, 0.0) / n_mc)
    se2 = math.sqrt(max(s2q / n_mc - m2 * m2, 0.0) / n_mc)
    return AcceptanceErrors(m1, se1, m2, se2, sa / n_mc)


@dataclass(frozen=True)
class NoiseCovariance:
    """Entries ``<phi_i^, D(x) phi_j^>_s`` on the leading modes, with standard errors."""

    matrix: np.ndarray
    stderr: np.ndarray
    trace: float
    trace_se: float
    reference: np.ndarray

    def entry(self, i: int, j: int) -> float:
        return float(self.matrix[i - 1, j - 1])


def noise_covariance(p: Potential, params: PcnParams, x: SpectralField, n_mc: int,
                     rng: RngStream, n_modes: int = 10, s: float | None = None,
                     mean_increment: np.ndarray | None = None) -> NoiseCovariance:
    """Second moments of ``Gamma = (2 tau delta)^(-1/2) (x' - x - E[x' - x])``.

    The conditional mean increment defaults to a Rao-Blackwellised estimate
    on an independent sub-stream, so that for ``alpha == 1`` it is exact and
    ``Gamma`` reduces to ``xi``.
    """
    if n_mc < 10_000:
        raise ValueError("n_mc must be at least 10^4")
    s = p.s_exp if s is None else s
    xc = x.coeffs
    n = min(n_modes, xc.size)
    if mean_increment is None:
        aux = RngStream(rng.seed, rng.stream_id + (1 << 32))
        mean_increment = params.delta * drift_estimate(p, params, x, n_mc, aux).value.coeffs
    w = np.arange(1, n + 1, dtype=float) ** s
    scale = 1.0 / params.noise_scale
    M = np.zeros((n, n))
    M2 = np.zeros((n, n))
    tr = trq = 0.0
    wt = sobolev_weights(xc.size, s)
    for xi, y, alpha, u in _proposals(p, params, xc, n_mc, rng):
        gam = (u < alpha).astype(float)
        G = scale * (gam[:, None] * (y - xc) - mean_increment)
        Gs = G[:, :n] * w
        outer = Gs[:, :, None] * Gs[:, None, :]
        M += outer.sum(axis=0)
        M2 += (outer * outer).sum(axis=0)
        t = (wt * G * G).sum(axis=1)
        tr += t.sum(); trq += (t * t).sum()
    M /= n_mc
    se = np.sqrt(np.maximum(M2 / n_mc - M * M, 0.0) / n_mc)
    tr /= n_mc
    tr_se = math.sqrt(max(trq / n_mc - tr * tr, 0.0) / n_mc)
    ref = np.diag(w**2 * params.spec.lambdas[:n] ** 2)
    return NoiseCovariance(M, se, tr, tr_se, ref)


def empirical_noise_covariance(p: Potential, params: PcnParams, x: SpectralField,
                               indices: tuple[int, int], n_mc: int = 100_000,
                               rng: RngStream | None = None) -> float:
    i, j = indices
    rng = RngStream() if rng is None else rng
    cov = noise_covariance(p, params, x, n_mc, rng, n_modes=max(i, j))
    return cov.entry(i, j)


@dataclass(frozen=True)
class IdentityCheck:
    residual: float
    stderr: float


def baracc_identity(p: Potential, x: SpectralField, params: PcnParams, n_mc: int,
                    rng: RngStream, s: float | None = None) -> IdentityCheck:
    """``||sqrt(2 tau/delta) mean(alpha_bar xi) + C grad Psi(x)||_s`` and its standard error."""
    if n_mc < 10_000:
        raise ValueError("n_mc must be at least 10^4")
    s = p.s_exp if s is None else s
    xc = x.coeffs
    lam = params.spec.lambdas
    g = p.grad(xc)
    c = math.sqrt(2.0 * params.delta / params.tau)
    pref = math.sqrt(2.0 * params.tau / params.delta)
    tot = np.zeros(xc.size)
    sq = np.zeros(xc.size)
    for b in _chunks(n_mc, xc.size):
        xi = lam * rng.normal((b, xc.size))
        abar = 1.0 - c * np.maximum(xi @ g, 0.0)
        v = pref * abar[:, None] * xi
        tot += v.sum(axis=0)
        sq += (v * v).sum(axis=0)
    mean = tot / n_mc
    var = np.maximum(sq / n_mc - mean**2, 0.0) / n_mc
    wt = sobolev_weights(xc.size, s)
    r = mean + lam**2 * g
    return IdentityCheck(math.sqrt(float(np.sum(wt * r * r))), math.sqrt(float(np.sum(wt * var))))


def baracc_identity_residual(p: Potential, x: SpectralField, params: PcnParams, n_mc: int = 100_000,
                             rng: RngStream | None = None) -> float:
    rng = RngStream() if rng is None else rng
    return baracc_identity(p, x, params, n_mc, rng).residual
