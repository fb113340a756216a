"""Reference integrators for the limiting dynamics.

``em_step`` advances the noisy gradient flow ``dz = -(z + C grad Psi(z)) dt + sqrt(2 tau) dW``
by Euler-Maruyama.  ``ou_exact_step`` is the exact transition of the linear
case, and the two closed forms describe the quadratic variation in the fluid
limit and along an all-accepted pCN chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gaussian import RngStream, brownian_increment, sample_prior
from .pcn import Trajectory
from .potential import Potential, drift
from .spectral import CovarianceSpectrum, DimensionError, SpectralField

__all__ = [
    "SdeParams",
    "em_step",
    "em_run",
    "sde_trajectory",
    "ou_exact_step",
    "fluid_ode_solution",
    "all_accepted_qv",
]

DT_MAX = 0.1


@dataclass(frozen=True)
class SdeParams:
    """Euler-Maruyama time step, temperature and number of retained modes."""

    dt: float
    tau: float
    n_modes: int

    def __post_init__(self):
        if not 0.0 < self.dt <= DT_MAX:
            raise ValueError(f"dt must lie in (0, {DT_MAX}], got {self.dt}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.n_modes < 1:
            raise ValueError("n_modes must be at least 1")


def em_step(z: SpectralField, p: Potential, spec: CovarianceSpectrum, params: SdeParams,
            rng: RngStream) -> SpectralField:
    """``z + d(z) dt + sqrt(2 tau) dW`` with ``dW`` a C-Wiener increment over ``dt``."""
    if z.n_modes != params.n_modes:
        raise DimensionError(f"field has {z.n_modes} modes, params {params.n_modes}")
    dw = brownian_increment(spec, params.n_modes, params.dt, rng)
    return SpectralField(z.coeffs + params.dt * drift(p, spec, z).coeffs
                         + math.sqrt(2.0 * params.tau) * dw.coeffs)


def em_run(z0: SpectralField | np.ndarray, p: Potential, spec: CovarianceSpectrum, params: SdeParams,
           n_steps: int, rngs: RngStream | list[RngStream], stride: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised Euler-Maruyama over replicas; returns snapshot steps and states ``(S, R, N)``.

    Each replica draws the same normals as repeated :func:`em_step` calls on its
    stream, so the two agree up to floating-point rounding.
    """
    if n_steps < 1 or stride < 1:
        raise ValueError("n_steps and stride must be at least 1")
    if isinstance(rngs, RngStream):
        rngs = [rngs]
    R, N = len(rngs), params.n_modes
    z0 = z0.coeffs if isinstance(z0, SpectralField) else np.asarray(z0, dtype=float)
    Z = np.array(np.broadcast_to(z0, (R, N)), dtype=float)
    lam = spec.lambdas[:N]
    noise = math.sqrt(2.0 * params.tau * params.dt)
    snaps = [Z.copy()]
    steps = [0]
    block = 256
    k = 0
    while k < n_steps:
        B = min(block, n_steps - k)
        rho = np.stack([g.normal((B, N)) for g in rngs], axis=1)
        for b in range(B):
            Z = Z + params.dt * (-Z - lam**2 * p.grad(Z)) + noise * (lam * rho[b])
            k += 1
            if k % stride == 0 or k == n_steps:
                snaps.append(Z.copy())
                steps.append(k)
    return np.array(steps), np.stack(snaps)


def ou_exact_step(x: SpectralField, spec: CovarianceSpectrum, t: float, tau: float,
                  rng: RngStream) -> SpectralField:
    """Exact OU transition ``e^-t x + sqrt(tau (1 - e^-2t)) xi`` with ``xi ~ N(0, C)``.

    With ``delta = (1 - e^-2t)/2`` this is the pCN proposal drawn from the same stream.
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    xi = sample_prior(spec, x.n_modes, 1.0, rng)
    return SpectralField(math.exp(-t) * x.coeffs + math.sqrt(-tau * math.expm1(-2.0 * t)) * xi.coeffs)


def fluid_ode_solution(v0: float, tau: float, t: float | np.ndarray) -> float | np.ndarray:
    """Solution ``tau + (v0 - tau) e^-2t`` of ``v' = -2 (v - tau)``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("t must be non-negative")
    out = tau + (v0 - tau) * np.exp(-2.0 * t_arr)
    return float(out) if out.ndim == 0 else out


def all_accepted_qv(v0: float, tau: float, delta: float, k: int | np.ndarray) -> float | np.ndarray:
    """Quadratic variation after ``k`` accepted moves, ``(1-2d)^k v0 + (1 - (1-2d)^k) tau``."""
    if not 0.0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 1/2), got {delta}")
    k_arr = np.asarray(k)
    if np.any(k_arr < 0):
        raise ValueError("k must be non-negative")
    q = np.power(1.0 - 2.0 * delta, k_arr.astype(float))
    out = q * v0 + (1.0 - q) * tau
    return float(out) if out.ndim == 0 else out


def sde_trajectory(steps: np.ndarray, snaps: np.ndarray, r: int, dt: float,
                   spec: CovarianceSpectrum) -> Trajectory:
    """Wrap Euler-Maruyama snapshots of replica ``r`` in the pCN trajectory container.

    Every step counts as accepted, so the CSV schema of :class:`Trajectory` applies unchanged.
    """
    n_steps = int(steps[-1])
    return Trajectory(dt, steps, snaps[:, r, :].copy(), np.ones(n_steps, dtype=bool),
                      np.ones(n_steps), spec)
