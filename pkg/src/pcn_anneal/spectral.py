"""Spectral fields on [0, 1] in the eigenbasis of a diagonal covariance.

A field ``x`` is stored through its coordinates ``x_j = <x, phi_j>`` for
``j = 1..N``.  For the Brownian-bridge prior the basis is
``phi_j(s) = sqrt(2) sin(j pi s)``, which is also the basis used by the grid
transforms below.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft

__all__ = [
    "DimensionError",
    "ResolutionError",
    "SpectralField",
    "CovarianceSpectrum",
    "GridField",
    "sobolev_norm",
    "sobolev_weights",
    "apply_C_power",
    "trace_hr",
    "to_grid",
    "to_spectral",
    "synthesize",
    "analyze",
    "trapezoid",
]


class DimensionError(ValueError):
    """Mode counts of two operands disagree, or an index exceeds N."""


class ResolutionError(ValueError):
    """Grid too coarse for the requested number of sine modes."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpectralField:
    """Coordinates of a function in the covariance eigenbasis."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 1:
            raise ValueError(f"coeffs must be one-dimensional, got shape {c.shape}")
        if c.size < 1:
            raise ValueError("a spectral field needs at least one mode")
        if not np.all(np.isfinite(c)):
            raise ValueError("coeffs must be finite")
        object.__setattr__(self, "coeffs", _frozen(c))

    @property
    def n_modes(self) -> int:
        return self.coeffs.size

    @classmethod
    def zeros(cls, n: int) -> SpectralField:
        return cls(np.zeros(n))

    @classmethod
    def basis(cls, j: int, n: int) -> SpectralField:
        """The unit vector e_j (1-based, as in phi_j)."""
        if not 1 <= j <= n:
            raise DimensionError(f"mode {j} outside 1..{n}")
        c = np.zeros(n)
        c[j - 1] = 1.0
        return cls(c)

    def __add__(self, other: SpectralField) -> SpectralField:
        _check_same(self.n_modes, other.n_modes)
        return SpectralField(self.coeffs + other.coeffs)

    def __sub__(self, other: SpectralField) -> SpectralField:
        _check_same(self.n_modes, other.n_modes)
        return SpectralField(self.coeffs - other.coeffs)

    def __mul__(self, c: float) -> SpectralField:
        return SpectralField(float(c) * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self) -> SpectralField:
        return SpectralField(-self.coeffs)

    def dot(self, other: SpectralField) -> float:
        """Canonical inner product <x, y>."""
        _check_same(self.n_modes, other.n_modes)
        return float(self.coeffs @ other.coeffs)


def _check_same(n1: int, n2: int) -> None:
    if n1 != n2:
        raise DimensionError(f"mode counts differ: {n1} vs {n2}")


@dataclass(frozen=True)
class CovarianceSpectrum:
    """Square roots ``lambda_j`` of the eigenvalues of C (``C phi_j = lambda_j^2 phi_j``).

    The decay law ``lambda_j ~ j^-kappa`` is checked at construction: every
    ratio ``lambda_j j^kappa / prefactor`` must lie in ``[c1, c2]``.  When no
    prefactor is given, ``lambda_1`` is used, so the band is relative to the
    law passing through the first mode.
    """

    lambdas: np.ndarray
    kappa: float
    c1: float = 0.5
    c2: float = 2.0
    prefactor: float | None = None
    label: str = field(default="spectrum", compare=False)

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        if lam.ndim != 1 or lam.size < 1:
            raise ValueError("lambdas must be a non-empty one-dimensional sequence")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise ValueError("all lambda_j must be finite and strictly positive")
        if not self.kappa > 0.5:
            raise ValueError(f"kappa must exceed 1/2 for a trace-class C, got {self.kappa}")
        if not 0 < self.c1 <= self.c2:
            raise ValueError("need 0 < c1 <= c2")
        pref = lam[0] if self.prefactor is None else float(self.prefactor)
        j = np.arange(1, lam.size + 1)
        ratio = lam * j**self.kappa / pref
        bad = np.flatnonzero((ratio < self.c1) | (ratio > self.c2))
        if bad.size:
            jj = bad[0] + 1
            raise ValueError(
                f"lambda_{jj} = {lam[bad[0]]:.6g} violates the j^-{self.kappa} decay band "
                f"[{self.c1}, {self.c2}] (ratio {ratio[bad[0]]:.4g})"
            )
        object.__setattr__(self, "lambdas", _frozen(lam))

    @property
    def n_modes(self) -> int:
        return self.lambdas.size

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues ``lambda_j^2`` of C."""
        return self.lambdas**2

    @classmethod
    def power_law(cls, n: int, kappa: float, amplitude: float = 1.0, **kw) -> CovarianceSpectrum:
        j = np.arange(1, n + 1)
        return cls(amplitude * j ** (-float(kappa)), kappa, **kw)

    def truncate(self, n: int) -> CovarianceSpectrum:
        if not 1 <= n <= self.n_modes:
            raise DimensionError(f"cannot truncate {self.n_modes} modes to {n}")
        return CovarianceSpectrum(
            self.lambdas[:n], self.kappa, self.c1, self.c2,
            self.lambdas[0] if self.prefactor is None else self.prefactor, self.label,
        )


def sobolev_weights(n: int, r: float) -> np.ndarray:
    """Per-mode weights ``j^(2r)`` of the H^r norm."""
    return np.arange(1, n + 1, dtype=float) ** (2.0 * r)


def sobolev_norm(x: SpectralField | np.ndarray, r: float) -> float | np.ndarray:
    """``(sum_j j^(2r) x_j^2)^(1/2)``; vectorised over leading axes for arrays."""
    c = x.coeffs if isinstance(x, SpectralField) else np.asarray(x, dtype=float)
    w = sobolev_weights(c.shape[-1], r)
    out = np.sqrt(np.sum(w * c * c, axis=-1))
    return float(out) if out.ndim == 0 else out


def apply_C_power(x: SpectralField, spec: CovarianceSpectrum, p: float) -> SpectralField:
    """Apply ``C^p``: coefficient j becomes ``lambda_j^(2p) x_j``."""
    _check_same(x.n_modes, spec.n_modes)
    return SpectralField(spec.lambdas ** (2.0 * p) * x.coeffs)


def trace_hr(spec: CovarianceSpectrum, r: float, n: int | None = None) -> float:
    """Truncated ``Trace_{H^r}(C_r) = sum_{j<=n} j^(2r) lambda_j^2``."""
    n = spec.n_modes if n is None else int(n)
    if n > spec.n_modes:
        raise DimensionError(f"n = {n} exceeds the {spec.n_modes} stored modes")
    if n < 1:
        raise DimensionError("n must be at least 1")
    return float(np.sum(sobolev_weights(n, r) * spec.lambdas[:n] ** 2))


# --- grid transforms -------------------------------------------------------

def synthesize(coeffs: np.ndarray, m: int) -> np.ndarray:
    """Sine synthesis ``sum_j c_j sqrt(2) sin(j pi i / m)`` for i = 0..m.

    Works on the last axis; leading axes are batch dimensions.
    """
    c = np.asarray(coeffs, dtype=float)
    n = c.shape[-1]
    if m < 2 * n:
        raise ResolutionError(f"grid size m = {m} below the 2N = {2 * n} policy")
    pad = np.zeros(c.shape[:-1] + (m - 1,))
    pad[..., :n] = c
    # DST-I: y_k = 2 sum_n x_n sin(pi (k+1)(n+1) / m)
    inner = scipy.fft.dst(pad, type=1, axis=-1) / np.sqrt(2.0)
    out = np.zeros(c.shape[:-1] + (m + 1,))
    out[..., 1:m] = inner
    return out


def analyze(samples: np.ndarray, n: int) -> np.ndarray:
    """Rectangle-rule sine coefficients of grid samples (endpoints assumed zero)."""
    g = np.asarray(samples, dtype=float)
    m = g.shape[-1] - 1
    if n > m // 2:
        raise ResolutionError(f"n = {n} modes need m >= {2 * n}, got m = {m}")
    y = scipy.fft.dst(g[..., 1:m], type=1, axis=-1)
    return y[..., :n] / (np.sqrt(2.0) * m)


def trapezoid(samples: np.ndarray) -> np.ndarray | float:
    """Composite trapezoid rule on the uniform grid over [0, 1], last axis."""
    f = np.asarray(samples, dtype=float)
    m = f.shape[-1] - 1
    out = (np.sum(f[..., 1:m], axis=-1) + 0.5 * (f[..., 0] + f[..., m])) / m
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class GridField:
    """Samples on ``s_i = i/M``, i = 0..M, with zero Dirichlet endpoints."""

    samples: np.ndarray

    def __post_init__(self):
        g = np.array(self.samples, dtype=float)
        if g.ndim != 1 or g.size < 3:
            raise ValueError("a grid field needs at least three samples")
        if not np.all(np.isfinite(g)):
            raise ValueError("samples must be finite")
        tol = 1e-12 * max(1.0, float(np.max(np.abs(g))))
        if abs(g[0]) > tol or abs(g[-1]) > tol:
            raise ValueError("grid fields must vanish at s = 0 and s = 1")
        g[0] = g[-1] = 0.0
        object.__setattr__(self, "samples", _frozen(g))

    @property
    def m(self) -> int:
        return self.samples.size - 1

    @property
    def s(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.m + 1)

    @classmethod
    def from_function(cls, f, m: int) -> GridField:
        return cls(f(np.linspace(0.0, 1.0, m + 1)))

    def integral(self) -> float:
        return trapezoid(self.samples)

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "value"])
        for si, v in zip(self.s, self.samples):
            w.writerow([f"{si:.17g}", f"{v:.17g}"])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="")
        return text

    @classmethod
    def from_csv(cls, source: str | Path) -> GridField:
        if isinstance(source, Path) or "\n" not in source:
            text = Path(source).read_text(encoding="utf-8")
        else:
            text = source
        rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
        if rows[0] != ["s", "value"]:
            raise ValueError(f"unexpected header {rows[0]!r}")
        return cls(np.array([float(r[1]) for r in rows[1:]]))


def to_grid(x: SpectralField, m: int | None = None) -> GridField:
    """Evaluate ``x(s_i)`` on the grid ``s_i = i/m`` (default ``m = 4N``)."""
    m = 4 * x.n_modes if m is None else int(m)
    return GridField(synthesize(x.coeffs, m))


def to_spectral(g: GridField, n: int) -> SpectralField:
    """First ``n`` sine coefficients of a grid field."""
    return SpectralField(analyze(g.samples, n))
