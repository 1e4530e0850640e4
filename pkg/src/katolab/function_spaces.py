"""Grid norms for Lebesgue, weak Lebesgue, Besov, Hoelder and Morrey spaces.

Every norm is evaluated on the pointwise Euclidean magnitude of the samples,
so scalar and vector fields are handled alike.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DomainError, ZeroModeError
from .spectral_core import TWO_PI, Grid, SpectralField, fractional_laplacian

SPACE_KINDS = ("Lq", "WeakLq", "Besov", "HomBesov", "WeakBesov", "Hoelder", "Morrey", "HomSobolev")


@dataclass(frozen=True)
class SpaceTag:
    kind: str
    s: float | None = None
    q: float | None = None
    p: float | None = None
    lam: float | None = None
    eps: float | None = None

    def __post_init__(self):
        if self.kind not in SPACE_KINDS:
            raise DomainError(f"unknown space kind {self.kind!r}")
        if self.q is not None and not (1 < self.q <= np.inf) and self.kind != "Lq":
            raise DomainError(f"integrability q must lie in (1, inf], got {self.q}")
        if self.p is not None and not (1 <= self.p <= np.inf):
            raise DomainError(f"summation index p must lie in [1, inf], got {self.p}")

    def to_dict(self):
        return {k: _jsonable(v) for k, v in asdict(self).items() if v is not None}


def _jsonable(v):
    if isinstance(v, float) and np.isinf(v):
        return "inf"
    return v


@dataclass
class NormReport:
    space: dict
    value: float
    grid: dict
    estimator: str
    constants: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


# Lebesgue -----------------------------------------------------------------------

def _samples(f: SpectralField) -> np.ndarray:
    return f.pointwise_magnitude().ravel()


def _lq_from_samples(vals: np.ndarray, q: float, cell: float) -> float:
    if q == np.inf:
        return float(np.max(vals))
    m = np.max(vals)
    if m == 0:
        return 0.0
    # scale out the max before powering to stay finite for large q
    return float(m * (cell * np.sum((vals / m) ** q)) ** (1.0 / q))


def lebesgue_norm(f: SpectralField, q: float) -> float:
    """Riemann sum (v sum |f(x_i)|^q)^(1/q); the sample max for q = inf."""
    if q < 1:
        raise DomainError(f"Lebesgue exponent must be >= 1, got {q}")
    return _lq_from_samples(_samples(f), q, f.grid.cell_volume)


def _weak_from_samples(vals: np.ndarray, q: float, cell: float) -> float:
    desc = np.sort(vals)[::-1]
    k = np.arange(1, desc.size + 1)
    return float(np.max(desc * (k * cell) ** (1.0 / q)))


def weak_lebesgue_norm(f: SpectralField, q: float) -> float:
    """max_k f*_k (k v)^(1/q) from the decreasing rearrangement of the samples."""
    if not (1 <= q < np.inf):
        raise DomainError(f"weak Lebesgue exponent must lie in [1, inf), got {q}")
    return _weak_from_samples(_samples(f), q, f.grid.cell_volume)


# Littlewood-Paley ---------------------------------------------------------------

def _smooth_step(x):
    # exp(-1/x) for x > 0, else 0
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def lp_cutoff(r):
    """C-infinity radial cutoff: 1 for r <= 1, 0 for r >= 2, monotone between."""
    a = _smooth_step(2.0 - np.asarray(r, dtype=float))
    b = _smooth_step(np.asarray(r, dtype=float) - 1.0)
    return a / (a + b)


def lp_bump(j: int, r):
    """Dyadic block weight psi_j(r) = chi(r / 2^j) - chi(r / 2^(j-1)), support [2^(j-1), 2^(j+1)]."""
    r = np.asarray(r, dtype=float)
    return lp_cutoff(r / 2.0**j) - lp_cutoff(r / 2.0 ** (j - 1))


@dataclass
class LPDecomposition:
    blocks: list          # (j, SpectralField); j = -1 marks the inhomogeneous base block S_0
    homogeneous: bool
    partition: str = "chi(r/2^j) - chi(r/2^(j-1)), chi = 1 on [0,1], 0 on [2,inf)"

    def reconstruct(self) -> SpectralField:
        total = self.blocks[0][1]
        for _, b in self.blocks[1:]:
            total = total + b
        return total


@lru_cache(maxsize=16)
def _block_weights(n: int, N: int, homogeneous: bool):
    g = Grid(n, N)
    r = g.k_abs()
    jmax = int(np.ceil(np.log2(max(r.max(), 1.0)))) + 1
    weights = []
    if homogeneous:
        for j in range(0, jmax + 1):
            w = lp_bump(j, r)
            w[(0,) * n] = 0.0
            weights.append((j, w))
    else:
        weights.append((-1, lp_cutoff(r)))
        for j in range(1, jmax + 1):
            weights.append((j, lp_bump(j, r)))
    return tuple(weights)


def littlewood_paley(f: SpectralField, homogeneous: bool = True) -> LPDecomposition:
    """Split f into dyadic frequency blocks.

    The homogeneous split starts at j = 0 (|k| = 1 lies in block 0) and
    ignores the mean.  The inhomogeneous split collects every |k| <= 1, mean
    included, into a base block tagged j = -1 and then uses j >= 1.
    """
    blocks = []
    for j, w in _block_weights(f.grid.n, f.grid.N, homogeneous):
        if np.any(w > 0):
            blocks.append((j, SpectralField(f.grid, f.coeffs * w)))
    return LPDecomposition(blocks, homogeneous)


def _lp_sum(values: np.ndarray, p: float) -> float:
    if p == np.inf:
        return float(np.max(values)) if values.size else 0.0
    return float(np.sum(values**p) ** (1.0 / p))


def besov_norm(f: SpectralField, s: float, q: float, p: float, homogeneous: bool = True,
               inner: str = "Lq") -> float:
    """l^p sum over blocks of 2^(js) times the inner norm of the block.

    ``inner`` is ``"Lq"`` or ``"WeakLq"``.  The base block of the
    inhomogeneous split carries weight 1.
    """
    if homogeneous and np.any(np.abs(f.mean()) > 1e-12 * max(np.max(np.abs(f.coeffs)), 1e-300)):
        raise ZeroModeError("homogeneous Besov norm needs a mean-zero field")
    if inner not in ("Lq", "WeakLq"):
        raise DomainError(f"inner norm must be Lq or WeakLq, got {inner!r}")
    inner_norm = lebesgue_norm if inner == "Lq" else weak_lebesgue_norm
    dec = littlewood_paley(f, homogeneous)
    vals = np.array([(1.0 if j < 0 else 2.0 ** (j * s)) * inner_norm(b, q) for j, b in dec.blocks])
    return _lp_sum(vals, p)


def hoelder_norm(f: SpectralField, eps: float) -> float:
    """C^eps realized as the inhomogeneous B^eps_{inf,inf} norm."""
    if not (0 < eps < 1):
        raise DomainError(f"Hoelder exponent must lie in (0, 1), got {eps}")
    return besov_norm(f, eps, np.inf, np.inf, homogeneous=False)


def homogeneous_sobolev_norm(f: SpectralField, s: float, q: float, weak: bool = False) -> float:
    """Norm of (-Laplacian)^(s/2) f in L^q, or in weak L^q."""
    lifted = fractional_laplacian(f, s / 2.0)
    return weak_lebesgue_norm(lifted, q) if weak else lebesgue_norm(lifted, q)


# Morrey -------------------------------------------------------------------------

@lru_cache(maxsize=16)
def _ball_kernels(n: int, N: int):
    """FFTs of discrete ball indicators and their point counts, one per dyadic radius."""
    h = TWO_PI / N
    idx = np.fft.fftfreq(N, d=1.0 / N)  # signed periodic offsets
    d2 = sum(o**2 for o in np.meshgrid(*([idx * h] * n), indexing="ij"))
    out = []
    for m in range(0, int(np.log2(N)) + 1):
        r = TWO_PI * 2.0**-m
        ball = (d2 <= r * r * (1 + 1e-12)).astype(float)
        out.append((r, np.fft.rfftn(ball, axes=tuple(range(n))), float(ball.sum())))
    return tuple(out)


def morrey_norm(f: SpectralField, q: float, lam: float) -> float:
    """sup over grid centres and dyadic radii of r^lam (ball average of |f|^q)^(1/q)."""
    n = f.grid.n
    if not (1 <= q < np.inf):
        raise DomainError(f"Morrey integrability must lie in [1, inf), got {q}")
    if not (0 < lam <= n / q + 1e-14):
        raise DomainError(f"Morrey exponent must lie in (0, n/q] = (0, {n / q}], got {lam}")
    mag = f.pointwise_magnitude()
    scale = np.max(mag)
    if scale == 0:
        return 0.0
    powered = (mag / scale) ** q
    ph = np.fft.rfftn(powered)
    best = 0.0
    for r, kernel, count in _ball_kernels(n, f.grid.N):
        sums = np.fft.irfftn(ph * kernel, s=f.grid.shape, axes=tuple(range(n)))
        avg = np.clip(np.max(sums), 0.0, None) / count
        best = max(best, r**lam * avg ** (1.0 / q))
    return float(scale * best)


# reports ------------------------------------------------------------------------

def norm_report(f: SpectralField, tag: SpaceTag) -> NormReport:
    """Evaluate the norm named by ``tag`` and wrap it with its estimator description."""
    k = tag.kind
    if k == "Lq":
        value, est = lebesgue_norm(f, tag.q), "riemann-sum"
    elif k == "WeakLq":
        value, est = weak_lebesgue_norm(f, tag.q), "discrete-rearrangement"
    elif k in ("Besov", "HomBesov"):
        value = besov_norm(f, tag.s, tag.q, tag.p, homogeneous=(k == "HomBesov"))
        est = "littlewood-paley"
    elif k == "WeakBesov":
        value, est = besov_norm(f, tag.s, tag.q, tag.p, True, "WeakLq"), "littlewood-paley/weak"
    elif k == "Hoelder":
        value, est = hoelder_norm(f, tag.eps), "littlewood-paley B^eps_inf,inf"
    elif k == "Morrey":
        value, est = morrey_norm(f, tag.q, tag.lam), "dyadic-balls-grid-centres"
    else:
        value, est = homogeneous_sobolev_norm(f, tag.s, tag.q), "lift-then-Lq"
    return NormReport(tag.to_dict(), float(value), f.grid.to_dict(), est)


def space_norm(tag: SpaceTag):
    """Return ``f -> norm`` for the given tag (used per time node by the solver)."""
    return lambda f: norm_report(f, tag).value
