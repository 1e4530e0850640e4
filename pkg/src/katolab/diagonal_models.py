"""Diagonal operator models A = diag(lam_i) on weighted l^2 and their log grids."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


def log_grid(lo: float, hi: float, per_decade: int = 64) -> np.ndarray:
    """Log-spaced points from lo to hi (both included), ``per_decade`` per factor 10."""
    if not (0 < lo < hi):
        raise DomainError(f"log grid needs 0 < lo < hi, got ({lo}, {hi})")
    count = int(np.ceil(per_decade * np.log10(hi / lo))) + 1
    return np.logspace(np.log10(lo), np.log10(hi), count)


def spectral_window(spectrum: np.ndarray, margin_decades: float, base=(1e-4, 1e4)):
    """The base interval widened to cover [1/max lam, 1/min lam] with a margin."""
    lo = min(base[0], 10.0**-margin_decades / np.max(spectrum))
    hi = max(base[1], 10.0**margin_decades / np.min(spectrum))
    return lo, hi


@dataclass(frozen=True)
class DiagonalModel:
    """A = diag(spectrum), C = diag(obs_weights), B = diag(ctrl_weights) on l^2."""

    spectrum: np.ndarray
    obs_weights: np.ndarray | None = None
    ctrl_weights: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        lam = np.asarray(self.spectrum, dtype=float).ravel()
        if lam.size < 1:
            raise DomainError("a diagonal model needs dimension >= 1")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise DomainError("spectrum must be finite and strictly positive")
        object.__setattr__(self, "spectrum", lam)
        for name in ("obs_weights", "ctrl_weights"):
            w = getattr(self, name)
            if w is None:
                w = np.ones_like(lam)
            w = np.asarray(w, dtype=float).ravel()
            if w.shape != lam.shape or not np.all(np.isfinite(w)):
                raise DomainError(f"{name} must be finite with one entry per eigenvalue")
            object.__setattr__(self, name, w)

    @property
    def dim(self) -> int:
        return self.spectrum.size

    @classmethod
    def geometric(cls, dim: int, per_decade: int = 16, label: str = "") -> "DiagonalModel":
        """Eigenvalues 10^(k/per_decade) for k centred on 0, so the span grows with dim."""
        k = np.arange(dim) - (dim - 1) / 2.0
        return cls(10.0 ** (k / per_decade), label=label or f"geometric(d={dim}, {per_decade}/decade)")

    @classmethod
    def random(cls, rng: np.random.Generator, dim: int, lo: float = 1e-3,
               hi: float = 1e3) -> "DiagonalModel":
        """Log-uniform eigenvalues in [lo, hi], sorted."""
        lam = np.sort(np.exp(rng.uniform(np.log(lo), np.log(hi), dim)))
        return cls(lam, label=f"random(d={dim}, [{lo:g}, {hi:g}])")

    def with_observation(self, exponent: float) -> "DiagonalModel":
        """C = A^exponent."""
        return DiagonalModel(self.spectrum, self.spectrum**exponent, self.ctrl_weights,
                             f"{self.label}; C=A^{exponent:g}")

    def with_control(self, exponent: float) -> "DiagonalModel":
        """B = A^exponent."""
        return DiagonalModel(self.spectrum, self.obs_weights, self.spectrum**exponent,
                             f"{self.label}; B=A^{exponent:g}")

    def semigroup_symbols(self, t) -> np.ndarray:
        """exp(-t lam_i) with shape (len(t), dim)."""
        return np.exp(-np.outer(np.atleast_1d(t), self.spectrum))

    def descriptor(self) -> dict:
        digest = hashlib.sha256(
            np.concatenate([self.spectrum, self.obs_weights, self.ctrl_weights]).tobytes()
        ).hexdigest()[:16]
        return {"label": self.label, "dim": self.dim,
                "spectrum_range": [float(self.spectrum.min()), float(self.spectrum.max())],
                "digest": digest}
