"""Non-quadratic energies Psi and the limiting drift ``d(x) = -(x + C grad Psi(x))``.

Potentials act on raw coefficient arrays of shape ``(..., N)`` so that Monte
Carlo estimators can evaluate whole batches of proposals at once; the
module-level functions accept :class:`SpectralField` values.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from .spectral import (
    CovarianceSpectrum,
    DimensionError,
    SpectralField,
    analyze,
    sobolev_norm,
    sobolev_weights,
    synthesize,
    trapezoid,
)

__all__ = [
    "Potential",
    "DoubleWell",
    "DiagonalQuadratic",
    "ZeroPotential",
    "psi_value",
    "psi_grad_spectral",
    "drift",
    "taylor_remainder_check",
    "check_domain",
]


class Potential(ABC):
    """Energy ``Psi`` defined on H^s, with ``s = s_exp``."""

    label = "potential"
    s_exp = 0.0

    @abstractmethod
    def value(self, coeffs: np.ndarray) -> np.ndarray | float:
        """``Psi`` for each row of ``coeffs``."""

    @abstractmethod
    def grad(self, coeffs: np.ndarray) -> np.ndarray:
        """Spectral coefficients of the L^2 representer of ``grad Psi``."""

    def __repr__(self) -> str:
        return self.label


class ZeroPotential(Potential):
    label = "zero"

    def value(self, coeffs):
        c = np.asarray(coeffs, dtype=float)
        out = np.zeros(c.shape[:-1])
        return float(out) if out.ndim == 0 else out

    def grad(self, coeffs):
        return np.zeros_like(np.asarray(coeffs, dtype=float))


class DiagonalQuadratic(Potential):
    """``Psi(x) = 1/2 ||x||_s^2``, gradient ``j^{2s} x_j``."""

    def __init__(self, s_exp: float = 0.0):
        if s_exp < 0:
            raise ValueError("Sobolev index must be non-negative")
        self.s_exp = float(s_exp)
        self.label = f"diagonal_quadratic(s={self.s_exp:g})"

    def value(self, coeffs):
        c = np.asarray(coeffs, dtype=float)
        out = 0.5 * np.sum(sobolev_weights(c.shape[-1], self.s_exp) * c * c, axis=-1)
        return float(out) if np.ndim(out) == 0 else out

    def grad(self, coeffs):
        c = np.asarray(coeffs, dtype=float)
        return sobolev_weights(c.shape[-1], self.s_exp) * c


class DoubleWell(Potential):
    """``Psi(x) = (lam/4) int_0^1 (x(s)^2 - 1)^2 ds`` by the trapezoid rule.

    The field is synthesised on ``m = grid_factor * N`` intervals.  The
    gradient is the exact gradient of the discretised energy, obtained by
    analysing ``lam g (g^2 - 1)`` on the same grid.
    """

    s_exp = 0.25

    def __init__(self, lam: float, grid_factor: int = 4, m: int | None = None):
        if not lam > 0:
            raise ValueError(f"double-well strength must be positive, got {lam}")
        if grid_factor < 2:
            raise ValueError("grid_factor below 2 violates the anti-aliasing policy")
        self.lam = float(lam)
        self.grid_factor = int(grid_factor)
        self.m = m
        self.label = f"double_well(lambda={self.lam:.12g})"

    def grid_size(self, n: int) -> int:
        return self.grid_factor * n if self.m is None else int(self.m)

    def value(self, coeffs):
        c = np.asarray(coeffs, dtype=float)
        g = synthesize(c, self.grid_size(c.shape[-1]))
        return 0.25 * self.lam * trapezoid((g * g - 1.0) ** 2)

    def grad(self, coeffs):
        c = np.asarray(coeffs, dtype=float)
        g = synthesize(c, self.grid_size(c.shape[-1]))
        return analyze(self.lam * g * (g * g - 1.0), c.shape[-1])


def check_domain(p: Potential, spec: CovarianceSpectrum) -> None:
    """Raise unless ``0 <= s < kappa - 1/2`` for this potential and prior."""
    if not 0 <= p.s_exp < spec.kappa - 0.5:
        raise ValueError(
            f"{p.label} lives on H^{p.s_exp:g}; the prior only charges H^r for r < {spec.kappa - 0.5:g}"
        )


def psi_value(p: Potential, x: SpectralField) -> float:
    return float(p.value(x.coeffs))


def psi_grad_spectral(p: Potential, x: SpectralField) -> SpectralField:
    return SpectralField(p.grad(x.coeffs))


def drift(p: Potential, spec: CovarianceSpectrum, x: SpectralField) -> SpectralField:
    """Noisy-gradient-flow drift ``-x - C grad Psi(x)``."""
    if x.n_modes != spec.n_modes:
        raise DimensionError(f"field has {x.n_modes} modes, spectrum {spec.n_modes}")
    return SpectralField(-x.coeffs - spec.lambdas**2 * p.grad(x.coeffs))


def taylor_remainder_check(p: Potential, x: SpectralField, y: SpectralField,
                           s: float | None = None) -> float:
    """``|Psi(y) - Psi(x) - <grad Psi(x), y - x>| / ||y - x||_s^2``; 0 when y == x."""
    s = p.s_exp if s is None else s
    h = y.coeffs - x.coeffs
    den = sobolev_norm(h, s) ** 2
    if den == 0.0:
        return 0.0
    r = p.value(y.coeffs) - p.value(x.coeffs) - float(p.grad(x.coeffs) @ h)
    return abs(float(r)) / den
