"""Fourier representation of periodic vector fields on the torus.

Fields live on ``[0, 2pi)^n`` sampled at ``N`` points per direction.  They are
stored as Fourier series coefficients

    u(x) = sum_k  u_hat(k) exp(i k.x),      u_hat = fftn(samples) / N**n,

kept in numpy's FFT storage order.  The Nyquist wavenumber is reported as
``+N/2`` so the index set is ``{-N/2+1, ..., N/2}`` in every direction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.fft as sfft

from .errors import DomainError, GridError, ZeroModeError

TWO_PI = 2.0 * np.pi
ZERO_MODE_RULES = ("identity", "zero", "reject")

_WORKERS = 1


def set_threads(count: int) -> None:
    """Number of FFT worker threads (results do not depend on it)."""
    global _WORKERS
    _WORKERS = max(1, int(count))


@dataclass(frozen=True)
class Grid:
    n: int
    N: int
    L: float = TWO_PI

    def __post_init__(self):
        if self.n not in (2, 3):
            raise GridError(f"dimension must be 2 or 3, got {self.n}")
        if self.N < 8 or self.N % 2:
            raise GridError(f"N must be even and >= 8, got {self.N}")
        if self.L != TWO_PI:
            raise GridError("the period is fixed to 2*pi")

    @property
    def shape(self):
        return (self.N,) * self.n

    @property
    def cell_volume(self) -> float:
        return (TWO_PI / self.N) ** self.n

    @property
    def volume(self) -> float:
        return TWO_PI**self.n

    def wavenumbers(self, odd: bool = False) -> np.ndarray:
        """Integer wavenumber components, shape ``(n, N, ..., N)``.

        With ``odd=True`` the Nyquist entries are zeroed; odd symbols such as
        ``i k`` cannot act on that mode without breaking real-valuedness.
        """
        return _wavenumbers(self.n, self.N, odd)

    def k_squared(self) -> np.ndarray:
        return _k_squared(self.n, self.N)

    def k_abs(self) -> np.ndarray:
        return np.sqrt(self.k_squared())

    def coordinates(self) -> np.ndarray:
        x = np.arange(self.N) * (TWO_PI / self.N)
        return np.array(np.meshgrid(*([x] * self.n), indexing="ij"))

    def dealias_mask(self) -> np.ndarray:
        """Two-thirds rule: keep modes with every |k_j| < N/3."""
        return _dealias_mask(self.n, self.N)

    def to_dict(self):
        return {"n": self.n, "N": self.N}


# transform tables are cached per (n, N); lru_cache serializes access internally
@lru_cache(maxsize=32)
def _wavenumbers(n: int, N: int, odd: bool) -> np.ndarray:
    k1 = np.fft.fftfreq(N, d=1.0 / N)
    k1[N // 2] = 0.0 if odd else N / 2
    k = np.array(np.meshgrid(*([k1] * n), indexing="ij"))
    k.setflags(write=False)
    return k


@lru_cache(maxsize=32)
def _k_squared(n: int, N: int) -> np.ndarray:
    k2 = np.sum(_wavenumbers(n, N, False) ** 2, axis=0)
    k2.setflags(write=False)
    return k2


@lru_cache(maxsize=32)
def _dealias_mask(n: int, N: int) -> np.ndarray:
    k = _wavenumbers(n, N, False)
    mask = np.all(np.abs(k) < N / 3.0, axis=0)
    mask.setflags(write=False)
    return mask


@lru_cache(maxsize=32)
def _mirror_index(n: int, N: int):
    # full-spectrum entries with last index > N/2 are conjugates of (-k) entries
    neg = (-np.arange(N)) % N
    last = neg[N // 2 + 1:]
    return np.ix_(*([neg] * (n - 1) + [last]))


def half_to_full(half: np.ndarray, n: int, N: int) -> np.ndarray:
    """Rebuild the full coefficient array from the rfft half (last axis 0..N/2)."""
    lead = half.shape[:-n]
    full = np.empty(lead + (N,) * n, dtype=complex)
    full[..., : N // 2 + 1] = half
    idx = _mirror_index(n, N)
    full[..., N // 2 + 1:] = np.conj(half[(Ellipsis,) + idx])
    return full


def physical_to_coeffs(values: np.ndarray, n: int, N: int) -> np.ndarray:
    """Fourier series coefficients of real samples over the last n axes."""
    axes = tuple(range(-n, 0))
    half = sfft.rfftn(values, axes=axes, workers=_WORKERS) / N**n
    return half_to_full(half, n, N)


def coeffs_to_physical(coeffs: np.ndarray, n: int, N: int) -> np.ndarray:
    """Real samples from coefficients, reading only the rfft half of the spectrum."""
    axes = tuple(range(-n, 0))
    half = coeffs[..., : N // 2 + 1] * N**n
    return sfft.irfftn(half, s=(N,) * n, axes=axes, workers=_WORKERS)


@dataclass(frozen=True)
class SpectralField:
    """A real field with ``ncomp`` components, held as Fourier coefficients.

    ``coeffs`` has shape ``(ncomp, N, ..., N)``.  Vector fields use
    ``ncomp == grid.n``; scalar fields use ``ncomp == 1``.
    """

    grid: Grid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim == self.grid.n:
            c = c[None]
        if c.shape[1:] != self.grid.shape:
            raise GridError(f"coefficient shape {c.shape} does not match grid {self.grid.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    # construction -----------------------------------------------------------
    @classmethod
    def from_physical(cls, grid: Grid, values) -> "SpectralField":
        v = np.asarray(values, dtype=float)
        if v.ndim == grid.n:
            v = v[None]
        return cls(grid, physical_to_coeffs(v, grid.n, grid.N))

    @classmethod
    def zeros(cls, grid: Grid, ncomp: int | None = None) -> "SpectralField":
        ncomp = grid.n if ncomp is None else ncomp
        return cls(grid, np.zeros((ncomp,) + grid.shape, dtype=complex))

    @classmethod
    def random(cls, grid: Grid, rng: np.random.Generator, ncomp: int | None = None,
               mean_zero: bool = True, kmax: float | None = None) -> "SpectralField":
        """Random real field with spectrum decaying like 1/(1+|k|^2).

        Nyquist planes are left empty so that every symbol, odd or even, keeps
        the field real.
        """
        ncomp = grid.n if ncomp is None else ncomp
        vals = rng.standard_normal((ncomp,) + grid.shape)
        f = cls.from_physical(grid, vals)
        damp = (1.0 / (1.0 + grid.k_squared())) * np.all(np.abs(grid.wavenumbers()) < grid.N / 2, axis=0)
        if kmax is not None:
            damp = damp * (grid.k_abs() <= kmax)
        c = f.coeffs * damp
        if mean_zero:
            c = c.copy()
            c[(slice(None),) + (0,) * grid.n] = 0.0
        return cls(grid, c)

    # views --------------------------------------------------------------------
    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[0]

    def to_physical(self) -> np.ndarray:
        """Samples on the grid; the field is taken to be Hermitian (real-valued)."""
        return coeffs_to_physical(self.coeffs, self.grid.n, self.grid.N)

    def pointwise_magnitude(self) -> np.ndarray:
        """Euclidean length of the field at every grid point."""
        return np.sqrt(np.sum(self.to_physical() ** 2, axis=0))

    def mean(self) -> np.ndarray:
        return self.coeffs[(slice(None),) + (0,) * self.grid.n].copy()

    def l2_norm(self) -> float:
        """L2 norm over the torus computed from coefficients (Parseval)."""
        return float(np.sqrt(self.grid.volume * np.sum(np.abs(self.coeffs) ** 2)))

    def inner(self, other: "SpectralField") -> float:
        _check_same_grid(self, other)
        return float(self.grid.volume * np.real(np.sum(self.coeffs * np.conj(other.coeffs))))

    def divergence(self) -> "SpectralField":
        if self.ncomp != self.grid.n:
            raise GridError("divergence needs a vector field")
        k = self.grid.wavenumbers(odd=True)
        return SpectralField(self.grid, np.sum(1j * k * self.coeffs, axis=0))

    def divergence_residual(self) -> float:
        """max |k . u_hat(k)| relative to max |k| |u_hat(k)|."""
        k = self.grid.wavenumbers()
        num = np.max(np.abs(np.sum(k * self.coeffs, axis=0)))
        den = np.max(self.grid.k_abs() * np.sqrt(np.sum(np.abs(self.coeffs) ** 2, axis=0)))
        return 0.0 if den == 0 else float(num / den)

    def is_divergence_free(self, tol: float = 1e-12) -> bool:
        return self.divergence_residual() <= tol

    def hermitian_residual(self) -> float:
        c = self.coeffs
        flipped = np.conj(np.roll(np.flip(c, axis=tuple(range(1, c.ndim))), 1,
                                  axis=tuple(range(1, c.ndim))))
        scale = max(np.max(np.abs(c)), 1e-300)
        return float(np.max(np.abs(c - flipped)) / scale)

    # arithmetic ---------------------------------------------------------------
    def __add__(self, other):
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs)


def _check_same_grid(a: SpectralField, b: SpectralField):
    if a.grid != b.grid:
        raise GridError(f"grid mismatch: {a.grid} vs {b.grid}")
    if a.coeffs.shape != b.coeffs.shape:
        raise GridError("component count mismatch")


@dataclass(frozen=True)
class Multiplier:
    """Fourier multiplier ``k -> symbol(k)``.

    ``symbol`` receives the grid and returns either an array of shape
    ``grid.shape`` (scalar symbol) or ``(n, n) + grid.shape`` (matrix symbol).
    The value at ``k = 0`` is never taken from ``symbol``; ``zero_mode_rule``
    decides it.
    """

    symbol: Callable[[Grid], np.ndarray]
    zero_mode_rule: str = "identity"
    name: str = "multiplier"

    def __post_init__(self):
        if self.zero_mode_rule not in ZERO_MODE_RULES:
            raise DomainError(f"unknown zero-mode rule {self.zero_mode_rule!r}")

    def evaluate(self, grid: Grid) -> np.ndarray:
        origin = (0,) * grid.n
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.array(self.symbol(grid), dtype=complex)
        matrix = s.ndim == grid.n + 2
        idx = (slice(None), slice(None)) + origin if matrix else origin
        s[idx] = (np.eye(grid.n) if matrix else 1.0) if self.zero_mode_rule == "identity" else 0.0
        return s


def apply_multiplier(f: SpectralField, m: Multiplier) -> SpectralField:
    grid = f.grid
    origin = (slice(None),) + (0,) * grid.n
    if m.zero_mode_rule == "reject" and np.any(np.abs(f.coeffs[origin]) > 0):
        raise ZeroModeError(f"{m.name}: field has a nonzero mean")
    s = m.evaluate(grid)
    if not np.all(np.isfinite(s)):
        raise DomainError(f"{m.name}: symbol not finite on the grid")
    if s.ndim == grid.n + 2:
        if f.ncomp != grid.n:
            raise GridError("matrix multiplier needs a vector field")
        out = np.einsum("ij...,j...->i...", s, f.coeffs)
    else:
        out = s[None] * f.coeffs
    return SpectralField(grid, out)


# standard multipliers ---------------------------------------------------------

def _leray_symbol(grid: Grid) -> np.ndarray:
    k = grid.wavenumbers()
    k2 = grid.k_squared()
    eye = np.eye(grid.n).reshape((grid.n, grid.n) + (1,) * grid.n)
    return eye - k[:, None] * k[None, :] / k2


LERAY = Multiplier(_leray_symbol, "identity", "leray")


def heat_multiplier(t: float) -> Multiplier:
    """Symbol exp(-t |k|^2)."""
    if t < 0:
        raise DomainError(f"heat semigroup needs t >= 0, got {t}")
    return Multiplier(lambda g: np.exp(-t * g.k_squared()), "identity", "heat")


def leray_project(f: SpectralField) -> SpectralField:
    return apply_multiplier(f, LERAY)


def heat_semigroup(f: SpectralField, t: float, nu: float = 0.0) -> SpectralField:
    """exp(-t (A + nu)) f with A = -Laplacian; ``nu > 0`` makes the generator invertible."""
    out = apply_multiplier(f, heat_multiplier(t))
    return out * np.exp(-t * nu) if nu else out


def fractional_laplacian(f: SpectralField, s: float) -> SpectralField:
    """Apply (-Laplacian)^s, the multiplier |k|^(2s).

    For ``s < 0`` the zero mode has no finite symbol and a field with nonzero
    mean is rejected; for ``s > 0`` the zero mode is sent to zero.
    """
    if s == 0:
        return f
    rule = "reject" if s < 0 else "zero"
    return apply_multiplier(f, Multiplier(lambda g: g.k_squared() ** s, rule, "fractional_laplacian"))


def nonlinearity(u: SpectralField, v: SpectralField, project: bool = True) -> SpectralField:
    """P div(u (x) v), component i being sum_j d_j (u_j v_i).

    Products are formed on the physical grid from two-thirds-truncated inputs
    and truncated again before differentiation.
    """
    _check_same_grid(u, v)
    grid = u.grid
    if u.ncomp != grid.n:
        raise GridError("nonlinearity needs vector fields")
    return SpectralField(grid, nonlinearity_coeffs(u.coeffs, v.coeffs, grid, project, u is v))


def nonlinearity_coeffs(uc: np.ndarray, vc: np.ndarray, grid: Grid, project: bool = True,
                        same: bool = False) -> np.ndarray:
    """Array version of :func:`nonlinearity`; leading axes are batched."""
    n, N = grid.n, grid.N
    h = N // 2 + 1
    mask = grid.dealias_mask()[..., :h]
    k = grid.wavenumbers(odd=True)[..., :h]
    axes = tuple(range(-n, 0))
    uu = sfft.irfftn(uc[..., :h] * mask * N**n, s=(N,) * n, axes=axes, workers=_WORKERS)
    vv = uu if same else sfft.irfftn(vc[..., :h] * mask * N**n, s=(N,) * n, axes=axes, workers=_WORKERS)
    lead = uc.shape[:-n - 1]
    out = np.zeros(lead + (n,) + mask.shape, dtype=complex)

    def comp(i):
        return (Ellipsis, i) + (slice(None),) * n

    if same:
        # symmetric tensor: transform the n(n+1)/2 distinct products only
        pairs = [(i, j) for i in range(n) for j in range(i, n)]
        prods = np.stack([uu[comp(i)] * uu[comp(j)] for i, j in pairs], axis=-n - 1)
        th = sfft.rfftn(prods, axes=axes, workers=_WORKERS) * (mask / N**n)
        for m, (i, j) in enumerate(pairs):
            t = th[comp(m)]
            out[comp(i)] += 1j * k[j] * t
            if i != j:
                out[comp(j)] += 1j * k[i] * t
    else:
        for i in range(n):
            prods = uu * vv[(Ellipsis, slice(i, i + 1)) + (slice(None),) * n]  # u_j v_i over j
            th = sfft.rfftn(prods, axes=axes, workers=_WORKERS) * (mask / N**n)
            out[comp(i)] = np.sum(1j * k * th, axis=-n - 1)
    if project:
        kk = grid.wavenumbers()[..., :h]
        k2 = grid.k_squared()[..., :h].copy()
        k2[(0,) * n] = 1.0
        kdot = np.sum(kk * out, axis=-n - 1, keepdims=True)
        out = out - kk * kdot / k2
    return half_to_full(out, n, N)


# binary container -------------------------------------------------------------

_HEADER = struct.Struct("<3q")


def _to_ascending(grid: Grid, c: np.ndarray) -> np.ndarray:
    # storage order puts k = 0 first; shift so k runs -N/2+1 .. N/2 along each axis
    shift = grid.N // 2 - 1
    return np.roll(c, shift, axis=tuple(range(1, grid.n + 1)))


def _from_ascending(grid: Grid, c: np.ndarray) -> np.ndarray:
    shift = grid.N // 2 - 1
    return np.roll(c, -shift, axis=tuple(range(1, grid.n + 1)))


def field_to_bytes(f: SpectralField) -> bytes:
    """Header (n, N, ncomp) as int64, then (re, im) float64 pairs, little-endian.

    Coefficients are written component by component, wavenumbers in row-major
    order with every index ascending from -N/2+1 to N/2.
    """
    g = f.grid
    body = _to_ascending(g, f.coeffs).astype("<c16", copy=False)
    return _HEADER.pack(g.n, g.N, f.ncomp) + np.ascontiguousarray(body).tobytes()


def field_from_bytes(data: bytes) -> SpectralField:
    n, N, ncomp = _HEADER.unpack_from(data, 0)
    grid = Grid(int(n), int(N))
    count = ncomp * N**n
    body = np.frombuffer(data, dtype="<c16", count=count, offset=_HEADER.size)
    c = body.reshape((ncomp,) + grid.shape)
    return SpectralField(grid, _from_ascending(grid, c))


def taylor_green(grid: Grid, amplitude: float = 1.0) -> SpectralField:
    """2D Taylor-Green vortex (sin x1 cos x2, -cos x1 sin x2), padded with zeros in 3D."""
    x = grid.coordinates()
    u = np.zeros((grid.n,) + grid.shape)
    u[0] = np.sin(x[0]) * np.cos(x[1])
    u[1] = -np.cos(x[0]) * np.sin(x[1])
    return SpectralField.from_physical(grid, amplitude * u)
