"""
Truncated Fourier representation of real periodic fields on D = (0, L)^2.

Coefficients are stored in numpy FFT order on a K x K mode grid, so that

    f(x) = sum_k c_k exp(i 2 pi k.x / L),   c = fft2(samples) / K^2.

Index K/2 of each axis holds the Nyquist mode. Odd-order operators
(gradient, divergence, Leray projection) use an effective wavenumber with the
Nyquist component set to zero; the Laplacian and all norms use the same
effective wavenumber so that div(grad f) == laplacian(f) holds mode by mode.
The solver never populates Nyquist modes because every nonlinear product is
dealiased with the 2/3 rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import NamedTuple, Union

import numpy as np
import scipy.fft as sfft

HERMITIAN_RTOL = 1e-13
DIVERGENCE_RTOL = 1e-12


class ConfigurationError(ValueError):
    """Raised for inconsistent grids or field shapes."""


@dataclass(frozen=True)
class GridSpec:
    """Mode grid: K modes per dimension on a square cell of edge ``period``."""

    modes: int = 32
    period: float = 2 * math.pi
    dealias_fraction: Fraction = Fraction(2, 3)

    def __post_init__(self):
        if int(self.modes) != self.modes or self.modes < 4 or self.modes % 2:
            raise ConfigurationError(f"modes must be an even integer >= 4, got {self.modes}")
        if not self.period > 0:
            raise ConfigurationError(f"period must be positive, got {self.period}")
        frac = Fraction(self.dealias_fraction).limit_denominator(10**6)
        if not 0 < frac <= 1:
            raise ConfigurationError(f"dealias_fraction must lie in (0, 1], got {frac}")
        object.__setattr__(self, "dealias_fraction", frac)
        if self.cutoff < 1:
            raise ConfigurationError("dealias cutoff floor(fraction * K/2) must be >= 1")

    @property
    def cutoff(self) -> int:
        return math.floor(self.dealias_fraction * self.modes / 2)

    @property
    def area(self) -> float:
        return self.period**2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.modes, self.modes)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Collocation points (x, y), each of shape (K, K), ``indexing='ij'``."""
        x = np.arange(self.modes) * (self.period / self.modes)
        return np.meshgrid(x, x, indexing="ij")


class Operators(NamedTuple):
    kx: np.ndarray          # effective wavenumbers (physical units), Nyquist zeroed
    ky: np.ndarray
    ksq: np.ndarray         # kx^2 + ky^2
    inv_ksq: np.ndarray     # 1/ksq, 0 where ksq == 0
    dealias: np.ndarray     # boolean mask of retained modes
    neg: np.ndarray         # index map i -> (-i) mod K
    index: np.ndarray       # integer mode index per axis, fftfreq convention


@lru_cache(maxsize=None)
def operators(grid: GridSpec) -> Operators:
    """Read-only per-grid operator arrays, shared between threads."""
    K = grid.modes
    index = np.fft.fftfreq(K, d=1.0 / K).astype(int)
    index[K // 2] = K // 2
    scale = 2 * math.pi / grid.period
    k1d = scale * index.astype(float)
    k1d[K // 2] = 0.0
    kx, ky = np.meshgrid(k1d, k1d, indexing="ij")
    ksq = kx**2 + ky**2
    inv_ksq = np.zeros_like(ksq)
    np.divide(1.0, ksq, out=inv_ksq, where=ksq > 0)
    retained = np.abs(index) <= grid.cutoff
    dealias = retained[:, None] & retained[None, :]
    neg = (-np.arange(K)) % K
    ops = Operators(kx, ky, ksq, inv_ksq, dealias, neg, index)
    for arr in ops:
        arr.setflags(write=False)
    return ops


class HalfOperators(NamedTuple):
    """Operator arrays on the rfft half spectrum, shape (K, K/2 + 1)."""

    kx: np.ndarray
    ky: np.ndarray
    ksq: np.ndarray
    inv_ksq: np.ndarray
    dealias: np.ndarray
    weight: np.ndarray      # multiplicity of each stored mode in the full spectrum
    modes: int
    area: float


@lru_cache(maxsize=None)
def half_operators(grid: GridSpec) -> HalfOperators:
    full = operators(grid)
    h = grid.modes // 2 + 1
    weight = np.full((grid.modes, h), 2.0)
    weight[:, 0] = 1.0
    weight[:, -1] = 1.0
    arrays = [np.ascontiguousarray(a[:, :h]) for a in (full.kx, full.ky, full.ksq, full.inv_ksq, full.dealias)]
    arrays.append(weight)
    for arr in arrays:
        arr.setflags(write=False)
    return HalfOperators(*arrays, grid.modes, grid.area)


# ---------------------------------------------------------------------------
# raw array kernels; the r* functions work on half spectra and are what the
# solver hot loop uses


def rforward(samples: np.ndarray) -> np.ndarray:
    return sfft.rfft2(samples, norm="forward")


def rinverse(half: np.ndarray, modes: int) -> np.ndarray:
    return sfft.irfft2(half, s=(modes, modes), norm="forward")


def to_half(coeffs: np.ndarray) -> np.ndarray:
    K = coeffs.shape[-1]
    return np.ascontiguousarray(coeffs[..., : K // 2 + 1])


def to_full(half: np.ndarray) -> np.ndarray:
    """Expand a half spectrum to the exactly Hermitian-symmetric full spectrum."""
    K = half.shape[-2]
    neg = (-np.arange(K)) % K
    full = np.empty(half.shape[:-1] + (K,), dtype=complex)
    full[..., : K // 2 + 1] = half
    full[..., K // 2 + 1 :] = np.conj(half[..., neg, 1 : K // 2])[..., ::-1]
    for col in (0, K // 2):
        c = full[..., col]
        full[..., col] = 0.5 * (c + np.conj(c[..., neg]))
    return full


def forward(samples: np.ndarray) -> np.ndarray:
    """Physical samples (..., K, K) -> Hermitian-symmetric full coefficients."""
    return to_full(rforward(samples))


def inverse(coeffs: np.ndarray) -> np.ndarray:
    """Full coefficients (..., K, K) -> physical samples (real part)."""
    return np.fft.ifft2(coeffs, norm="forward").real


def hermitian_part(coeffs: np.ndarray) -> np.ndarray:
    K = coeffs.shape[-1]
    neg = (-np.arange(K)) % K
    mirrored = np.conj(coeffs[..., neg, :][..., :, neg])
    return 0.5 * (coeffs + mirrored)


def hermitian_defect(coeffs: np.ndarray) -> float:
    """max |c(-k) - conj c(k)| relative to max |c|."""
    K = coeffs.shape[-1]
    neg = (-np.arange(K)) % K
    scale = np.max(np.abs(coeffs))
    if scale == 0:
        return 0.0
    diff = coeffs[..., neg, :][..., :, neg] - np.conj(coeffs)
    return float(np.max(np.abs(diff)) / scale)


def project_coeffs(v: np.ndarray, ops) -> np.ndarray:
    """Leray projection of (2, ...) coefficients with either operator layout."""
    w = (ops.kx * v[0] + ops.ky * v[1]) * ops.inv_ksq
    out = np.empty_like(v)
    out[0] = v[0] - ops.kx * w
    out[1] = v[1] - ops.ky * w
    return out


def rconvective(u: np.ndarray, v: np.ndarray, hops: HalfOperators) -> np.ndarray:
    """Dealiased half spectrum of (u . grad) v for half spectra u, v of shape (2, K, K/2+1)."""
    ikx, iky = 1j * hops.kx, 1j * hops.ky
    stack = np.empty((6,) + u.shape[1:], dtype=complex)
    stack[0:2] = u
    stack[2] = ikx * v[0]
    stack[3] = iky * v[0]
    stack[4] = ikx * v[1]
    stack[5] = iky * v[1]
    p = rinverse(stack, hops.modes)
    prod = np.empty((2,) + p.shape[1:])
    prod[0] = p[0] * p[2] + p[1] * p[3]
    prod[1] = p[0] * p[4] + p[1] * p[5]
    out = rforward(prod)
    out[:, ~hops.dealias] = 0.0
    return out


def convective_coeffs(u: np.ndarray, v: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Full-spectrum wrapper around :func:`rconvective`."""
    return to_full(rconvective(to_half(u), to_half(v), half_operators(grid)))


def divergence_coeffs(v: np.ndarray, ops) -> np.ndarray:
    return 1j * (ops.kx * v[0] + ops.ky * v[1])


def inner_coeffs(a: np.ndarray, b: np.ndarray, grid: GridSpec) -> float:
    """L^2(D) inner product from full coefficients (Parseval)."""
    return float(grid.area * np.sum((a * np.conj(b)).real))


def l2_coeffs(a: np.ndarray, grid: GridSpec) -> float:
    return math.sqrt(grid.area * float(np.sum(a.real**2 + a.imag**2)))


def h1_coeffs(a: np.ndarray, grid: GridSpec) -> float:
    ksq = operators(grid).ksq
    return math.sqrt(grid.area * float(np.sum(ksq * (a.real**2 + a.imag**2))))


def h2_coeffs(a: np.ndarray, grid: GridSpec) -> float:
    ksq = operators(grid).ksq
    return math.sqrt(grid.area * float(np.sum(ksq**2 * (a.real**2 + a.imag**2))))


def rsquare(a: np.ndarray, hops: HalfOperators, power: int = 0) -> float:
    """Squared L^2 (power 0), H^1-semi (1) or H^2-semi (2) norm of a half spectrum."""
    w = hops.weight if power == 0 else hops.weight * hops.ksq**power
    return hops.area * float(np.sum(w * (a.real**2 + a.imag**2)))


def rinner(a: np.ndarray, b: np.ndarray, hops: HalfOperators) -> float:
    return hops.area * float(np.sum(hops.weight * (a * np.conj(b)).real))


# ---------------------------------------------------------------------------
# field types


@dataclass(frozen=True, eq=False)
class SpectralField:
    grid: GridSpec
    coeffs: np.ndarray
    mean_zero: bool = False

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.shape != self.grid.shape:
            raise ConfigurationError(f"coefficient shape {c.shape} does not match grid {self.grid.shape}")
        if self.mean_zero:
            c[0, 0] = 0.0
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: GridSpec, mean_zero: bool = False) -> "SpectralField":
        return cls(grid, np.zeros(grid.shape, dtype=complex), mean_zero)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * scalar, self.mean_zero)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class VectorField:
    """Two-component field; ``coeffs`` has shape (2, K, K).

    Setting ``divergence_free=True`` verifies the flag on construction.
    """

    grid: GridSpec
    coeffs: np.ndarray
    divergence_free: bool = field(default=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.shape != (2,) + self.grid.shape:
            raise ConfigurationError(f"vector coefficient shape {c.shape} does not match grid {self.grid.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        if self.divergence_free:
            defect = divergence_defect(self)
            if defect > DIVERGENCE_RTOL:
                raise ValueError(f"field flagged divergence-free has relative divergence {defect:.3e}")

    @classmethod
    def from_components(cls, u1: SpectralField, u2: SpectralField, divergence_free: bool = False) -> "VectorField":
        _check_same_grid(u1, u2)
        return cls(u1.grid, np.stack((u1.coeffs, u2.coeffs)), divergence_free)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "VectorField":
        return cls(grid, np.zeros((2,) + grid.shape, dtype=complex), True)

    @property
    def u1(self) -> SpectralField:
        return SpectralField(self.grid, self.coeffs[0])

    @property
    def u2(self) -> SpectralField:
        return SpectralField(self.grid, self.coeffs[1])

    def __add__(self, other: "VectorField") -> "VectorField":
        _check_same_grid(self, other)
        return VectorField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "VectorField") -> "VectorField":
        _check_same_grid(self, other)
        return VectorField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "VectorField":
        return VectorField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__


Field = Union[SpectralField, VectorField]


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise ConfigurationError(f"grid mismatch: {a.grid} vs {b.grid}")


def divergence_defect(v: VectorField, scale: float | None = None) -> float:
    """max |i k . v(k)| over retained modes, relative to max |v| (or ``scale``)."""
    if scale is None:
        scale = np.max(np.abs(v.coeffs))
    if scale == 0:
        return 0.0
    div = divergence_coeffs(v.coeffs, operators(v.grid))
    return float(np.max(np.abs(div)) / scale)


# ---------------------------------------------------------------------------
# public operations


def to_physical(f: Field) -> np.ndarray:
    """Real collocation samples; shape (K, K) or (2, K, K)."""
    return inverse(f.coeffs)


def from_physical(grid: GridSpec, samples) -> SpectralField:
    samples = np.asarray(samples, dtype=float)
    if samples.shape != grid.shape:
        raise ConfigurationError(f"sample shape {samples.shape} does not match grid {grid.shape}")
    return SpectralField(grid, forward(samples))


def vector_from_physical(grid: GridSpec, samples, divergence_free: bool = False) -> VectorField:
    samples = np.asarray(samples, dtype=float)
    if samples.shape != (2,) + grid.shape:
        raise ConfigurationError(f"sample shape {samples.shape} does not match grid (2, {grid.modes}, {grid.modes})")
    return VectorField(grid, forward(samples), divergence_free)


def gradient(f: SpectralField) -> VectorField:
    ops = operators(f.grid)
    return VectorField(f.grid, np.stack((1j * ops.kx * f.coeffs, 1j * ops.ky * f.coeffs)))


def divergence(v: VectorField) -> SpectralField:
    return SpectralField(v.grid, divergence_coeffs(v.coeffs, operators(v.grid)))


def laplacian(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, -operators(f.grid).ksq * f.coeffs)


def leray_project(v: VectorField) -> VectorField:
    """L^2-orthogonal projection onto divergence-free fields, mode by mode.

    The flag is verified relative to the size of ``v``: projecting a pure
    gradient leaves only round-off, whose own relative divergence is O(1).
    """
    out = VectorField(v.grid, project_coeffs(v.coeffs, operators(v.grid)))
    defect = divergence_defect(out, float(np.max(np.abs(v.coeffs))))
    if defect > DIVERGENCE_RTOL:
        raise RuntimeError(f"projection left relative divergence {defect:.3e}")
    object.__setattr__(out, "divergence_free", True)
    return out


def dealias(f: Field) -> Field:
    c = np.array(f.coeffs)
    c[..., ~operators(f.grid).dealias] = 0.0
    return type(f)(f.grid, c)


def convective(u: VectorField, v: VectorField) -> VectorField:
    """Pseudo-spectral (u . grad) v with 2/3-rule truncation."""
    _check_same_grid(u, v)
    return VectorField(u.grid, convective_coeffs(u.coeffs, v.coeffs, u.grid))


def trilinear(u: VectorField, v: VectorField, w: VectorField) -> float:
    """The form ((u . grad) v, w) in L^2(D)."""
    _check_same_grid(u, w)
    return inner_coeffs(convective(u, v).coeffs, w.coeffs, u.grid)


def inner(a: Field, b: Field) -> float:
    _check_same_grid(a, b)
    return inner_coeffs(a.coeffs, b.coeffs, a.grid)


def norm(f: Field, which: str = "L2") -> float:
    """Parseval norms: ``"L2"``, ``"H1"`` (semi) or ``"H2"`` (semi)."""
    kernels = {"L2": l2_coeffs, "H1": h1_coeffs, "H2": h2_coeffs}
    try:
        return kernels[which](f.coeffs, f.grid)
    except KeyError:
        raise ValueError(f"unknown norm {which!r}; expected one of {sorted(kernels)}") from None


def taylor_green(grid: GridSpec, amplitude: float = 1.0) -> VectorField:
    """a (sin x cos y, -cos x sin y) in units where the cell has edge 2 pi."""
    x, y = grid.coordinates()
    s = 2 * math.pi / grid.period
    samples = amplitude * np.stack((np.sin(s * x) * np.cos(s * y), -np.cos(s * x) * np.sin(s * y)))
    return vector_from_physical(grid, samples, divergence_free=True)


def random_field(grid: GridSpec, rng: np.random.Generator, max_mode: int | None = None,
                 decay: float = 1.0, divergence_free: bool = False, mean_zero: bool = True) -> VectorField:
    """Random real vector field with modes |k_i| <= max_mode (default: dealias cutoff).

    Mode amplitudes scale like (1 + |k|^2)^(-decay); meant for tests and probes.
    """
    ops = operators(grid)
    max_mode = grid.cutoff if max_mode is None else max_mode
    keep = (np.abs(ops.index)[:, None] <= max_mode) & (np.abs(ops.index)[None, :] <= max_mode)
    kk = ops.index[:, None] ** 2 + ops.index[None, :] ** 2
    weight = (1.0 + kk) ** (-decay) * keep
    raw = rng.standard_normal((2, 2) + grid.shape)
    c = hermitian_part((raw[0] + 1j * raw[1]) * weight)
    if mean_zero:
        c[:, 0, 0] = 0.0
    if divergence_free:
        c = project_coeffs(c, ops)
    return VectorField(grid, c, divergence_free)
