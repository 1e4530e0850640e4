"""Fixed probe fields sampled from continuous formulas.

The same formula is sampled at every resolution so that refinement studies
compare like with like.
"""

import numpy as np

from .spectral_core import TWO_PI, Grid, SpectralField


def _drop_mean(f: SpectralField) -> SpectralField:
    c = f.coeffs.copy()
    c[(slice(None),) + (0,) * f.grid.n] = 0.0
    return SpectralField(f.grid, c)


def periodic_distance(grid: Grid, centre) -> np.ndarray:
    x = grid.coordinates()
    c = np.asarray(centre, dtype=float).reshape((grid.n,) + (1,) * grid.n)
    d = (x - c + np.pi) % TWO_PI - np.pi
    return np.sqrt(np.sum(d**2, axis=0))


def power_law(grid: Grid, exponent: float, mean_zero: bool = False) -> SpectralField:
    """|x - x0|^(-exponent) with x0 half a cell off the lattice in every direction.

    Keeping x0 at a fixed fraction of the cell means the nearest sample
    always sits at distance sqrt(n)/2 cells from the singular point.
    """
    h = TWO_PI / grid.N
    d = periodic_distance(grid, [np.pi + h / 2] * grid.n)
    vals = d ** (-exponent)
    f = SpectralField.from_physical(grid, vals)
    return _drop_mean(f) if mean_zero else f


def gaussian_bump(grid: Grid, width: float = 0.3, mean_zero: bool = True) -> SpectralField:
    d = periodic_distance(grid, [np.pi] * grid.n)
    vals = np.exp(-0.5 * (d / width) ** 2)
    f = SpectralField.from_physical(grid, vals)
    return _drop_mean(f) if mean_zero else f


def trig_mixture(grid: Grid, seed: int = 0, kmax: int = 6) -> SpectralField:
    """Mean-zero trigonometric polynomial with seeded coefficients, exact at any N > 2 kmax."""
    rng = np.random.default_rng(seed)
    x = grid.coordinates()
    vals = np.zeros(grid.shape)
    for _ in range(8):
        k = rng.integers(-kmax, kmax + 1, size=grid.n)
        if not np.any(k):
            continue
        amp, ph = rng.standard_normal(), rng.uniform(0, TWO_PI)
        vals += amp * np.cos(np.tensordot(k, x, axes=1) + ph)
    return _drop_mean(SpectralField.from_physical(grid, vals))


def indicator_cells(grid: Grid, count: int, seed: int = 0) -> SpectralField:
    """Indicator of ``count`` distinct grid cells chosen at random."""
    rng = np.random.default_rng(seed)
    flat = np.zeros(grid.N**grid.n)
    flat[rng.choice(flat.size, size=count, replace=False)] = 1.0
    return SpectralField.from_physical(grid, flat.reshape(grid.shape))
