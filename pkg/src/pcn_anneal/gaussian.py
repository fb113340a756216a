"""Gaussian measures N(0, tau C) through their Karhunen-Loeve expansion."""

from __future__ import annotations

import numpy as np

from .spectral import CovarianceSpectrum, DimensionError, SpectralField

__all__ = [
    "RngStream",
    "sample_prior",
    "brownian_bridge_spectrum",
    "brownian_increment",
]


class RngStream:
    """Seeded random stream identified by ``(seed, stream_id)``.

    Gaussian and uniform variates come from two independent child generators,
    so drawing normals in blocks yields the same values as drawing them one
    proposal at a time, whatever uniforms are interleaved.
    """

    def __init__(self, seed: int = 0, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        if not (0 <= self.seed < 2**64 and 0 <= self.stream_id < 2**64):
            raise ValueError("seed and stream_id must be unsigned 64-bit integers")
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        g, u = ss.spawn(2)
        self._gauss = np.random.Generator(np.random.PCG64(g))
        self._unif = np.random.Generator(np.random.PCG64(u))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def normal(self, size=None) -> np.ndarray:
        return self._gauss.standard_normal(size)

    def uniform(self, size=None) -> np.ndarray:
        return self._unif.random(size)

    @classmethod
    def replicas(cls, seed: int, n: int, offset: int = 0) -> list[RngStream]:
        """One stream per chain replica; ``stream_id`` is the replica index."""
        return [cls(seed, offset + i) for i in range(n)]


def _check_n(spec: CovarianceSpectrum, n: int | None) -> int:
    n = spec.n_modes if n is None else int(n)
    if not 1 <= n <= spec.n_modes:
        raise DimensionError(f"n = {n} outside 1..{spec.n_modes}")
    return n


def sample_prior(spec: CovarianceSpectrum, n: int | None = None, tau: float = 1.0,
                 rng: RngStream | None = None) -> SpectralField:
    """Truncated Karhunen-Loeve draw ``x_j = sqrt(tau) lambda_j rho_j``."""
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    n = _check_n(spec, n)
    rng = RngStream() if rng is None else rng
    rho = rng.normal(n)
    return SpectralField(np.sqrt(tau) * (spec.lambdas[:n] * rho))


def brownian_bridge_spectrum(n: int) -> CovarianceSpectrum:
    """Spectrum of the standard Brownian bridge, ``C = (-d^2/ds^2)^-1`` on [0, 1].

    ``lambda_j = 1/(j pi)`` with decay exponent 1, in the basis
    ``sqrt(2) sin(j pi s)``.
    """
    if n < 1:
        raise ValueError("need at least one mode")
    j = np.arange(1, n + 1)
    return CovarianceSpectrum(1.0 / (j * np.pi), 1.0, label="brownian_bridge")


def brownian_increment(spec: CovarianceSpectrum, n: int | None = None, dt: float = 1.0,
                       rng: RngStream | None = None) -> SpectralField:
    """Increment over ``dt`` of the C-Wiener process, ``lambda_j sqrt(dt) rho_j``."""
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    n = _check_n(spec, n)
    rng = RngStream() if rng is None else rng
    return SpectralField(np.sqrt(dt) * (spec.lambdas[:n] * rng.normal(n)))
