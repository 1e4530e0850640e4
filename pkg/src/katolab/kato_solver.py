"""Picard iteration for the mild Navier-Stokes equation on the torus.

The mild form is

    x(t) = T(t) u0 - int_0^t T(t - s) P div(x (x) x)(s) ds + forcing terms,

and the iteration runs on z = x in the weighted space
E = L^p_alpha((0, tau), Z):  z_{n+1} = y + B(z_n, z_n),  B(u, v) = -D(u, v),
where D is the Duhamel integral of the projected nonlinearity and y collects
the free evolution and the forcing.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    ConfigError, DivergenceError, DomainError, GridError, InputError,
    NoConvergenceError, OracleError, ThresholdAmbiguous,
)
from .function_spaces import SpaceTag, _lq_from_samples, _weak_from_samples, besov_norm, norm_report
from .spectral_core import (
    Grid, SpectralField, coeffs_to_physical, leray_project, nonlinearity, nonlinearity_coeffs,
)
from .time_spaces import TimeGrid, Trajectory, WeightedTimeNorm, weighted_time_norm

log = logging.getLogger(__name__)

SPACES = ("lebesgue", "weak", "morrey", "hoelder")


@dataclass(frozen=True)
class ExponentConfig:
    """Exponents of the fixed-point space together with their scaling relation.

    ``space`` selects Z: ``lebesgue`` (L^q), ``weak`` (L^{q,inf}), ``morrey``
    (M^{q,lam}) or ``hoelder`` (C^eps, finite horizon only).
    """

    space: str = "lebesgue"
    n: int = 2
    q: float = 6.0
    p: float = np.inf
    alpha: float = 1.0 / 3.0
    lam: float | None = None
    eps: float | None = None
    tau: float = 0.5

    @property
    def index(self) -> float:
        """alpha + 1/p."""
        return self.alpha + (0.0 if self.p == np.inf else 1.0 / self.p)

    @property
    def gamma(self) -> float:
        """Decay exponent of ||T(t) P div||_{W -> Z} matching the scaling."""
        if self.space in ("lebesgue", "weak"):
            return 0.5 + self.n / (2 * self.q)
        if self.space == "morrey":
            return (1 + self.lam) / 2
        return 1.0 - self.index  # hoelder: gamma = (1 + delta)/2 with delta = 1 - 2 index

    @property
    def delta(self) -> float | None:
        return 1.0 - 2.0 * self.index if self.space == "hoelder" else None

    def validate(self) -> dict:
        """Residuals of every constraint; ``ok`` is True when all hold."""
        checks = {}
        idx = self.index
        checks["p_in_(2,inf]"] = self.p > 2
        checks["alpha_nonneg"] = self.alpha >= 0
        checks["index_in_(0,1/2)"] = 0 < idx < 0.5
        residual = 0.0
        if self.space not in SPACES:
            checks["space_known"] = False
        elif self.space in ("lebesgue", "weak"):
            residual = idx - (0.5 - self.n / (2 * self.q))
            checks["q_in_(n,inf)"] = self.n < self.q < np.inf
        elif self.space == "morrey":
            lam = -1.0 if self.lam is None else self.lam
            residual = idx - (1 - lam) / 2
            checks["lam_in_(0,1)"] = 0 < lam < 1
            checks["lam_le_n/q"] = lam <= self.n / self.q + 1e-14
        else:
            eps = -1.0 if self.eps is None else self.eps
            checks["eps_in_(0,1)"] = 0 < eps < 1
            checks["alpha_pos"] = self.alpha > 0
            checks["finite_tau"] = np.isfinite(self.tau)
        checks["scaling_residual_zero"] = abs(residual) < 1e-12
        return {"ok": bool(all(checks.values())), "scaling_residual": float(residual),
                "checks": {k: bool(v) for k, v in checks.items()}}

    def check(self, allow_scaling_violation: bool = False):
        rep = self.validate()
        bad = [k for k, v in rep["checks"].items() if not v]
        if allow_scaling_violation:
            bad = [k for k in bad if k != "scaling_residual_zero"]
        if bad:
            raise ConfigError(f"exponents rejected: {', '.join(bad)}", report=rep)
        return self

    def z_space(self) -> SpaceTag:
        if self.space == "lebesgue":
            return SpaceTag("Lq", q=self.q)
        if self.space == "weak":
            return SpaceTag("WeakLq", q=self.q)
        if self.space == "morrey":
            return SpaceTag("Morrey", q=self.q, lam=self.lam)
        return SpaceTag("Hoelder", eps=self.eps)

    def x_norm(self) -> Callable[[SpectralField], float]:
        """Initial-data norm: the Besov space of smoothness -2(alpha + 1/p) (+eps for C^eps)."""
        s = -2.0 * self.index
        if self.space == "hoelder":
            return lambda f: besov_norm(f, s + self.eps, np.inf, self.p, homogeneous=False)
        inner = "WeakLq" if self.space == "weak" else "Lq"
        return lambda f: besov_norm(f, s, self.q, self.p, homogeneous=True, inner=inner)

    def to_dict(self):
        return {k: ("inf" if isinstance(v, float) and np.isinf(v) else v) for k, v in asdict(self).items()}


@dataclass(frozen=True)
class KatoConfig:
    exponents: ExponentConfig
    tol: float = 1e-8
    max_iter: int = 50
    eta_bilinear: float | None = None
    smallness_margin: float = 1.0
    M: int = 256
    r: float = 2.0

    @property
    def nu(self) -> float:
        # C^eps runs shift the generator by one so that it is invertible
        return 1.0 if self.exponents.space == "hoelder" else 0.0

    def time_grid(self) -> TimeGrid:
        return TimeGrid(self.exponents.tau, self.M, self.r)

    def e_norm(self) -> WeightedTimeNorm:
        e = self.exponents
        return WeightedTimeNorm(e.p, e.alpha, e.z_space())

    def to_dict(self):
        d = asdict(self)
        d["exponents"] = self.exponents.to_dict()
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class IterationDiagnostics:
    e_norms: list = field(default_factory=list)
    increments: list = field(default_factory=list)
    contraction: list = field(default_factory=list)
    y_norm: float = 0.0
    eta: float | None = None
    smallness_bound: float | None = None
    small: bool | None = None
    residual: float | None = None
    node_residual_max: float | None = None
    iterations: int = 0
    converged: bool = False
    start: str = "y"

    def to_dict(self):
        return {k: (float(v) if isinstance(v, (np.floating,)) else v) for k, v in asdict(self).items()}


# linear pieces ----------------------------------------------------------------------

def free_evolution(u0: SpectralField, time: TimeGrid, nu: float = 0.0, tol: float = 1e-10) -> Trajectory:
    """Node j carries T(t_j) u0."""
    if u0.ncomp != u0.grid.n:
        raise InputError("initial data must be a vector field")
    if not u0.is_divergence_free(tol):
        raise InputError(f"initial data is not divergence-free (residual {u0.divergence_residual():.2e})")
    lam = u0.grid.k_squared() + nu
    decay = np.exp(-np.multiply.outer(time.nodes, lam))  # (M+1, N, ..., N)
    return Trajectory(time, u0.grid, decay[:, None] * u0.coeffs[None])


def _phi_weights(z: np.ndarray):
    """phi1(z) = (1 - e^-z)/z and psi(z) = (1 - e^-z (1 + z))/z^2, stable near 0."""
    small = z < 1e-2
    zs = np.where(small, 1.0, z)
    phi1 = np.where(small, 1 - z / 2 + z**2 / 6 - z**3 / 24 + z**4 / 120 - z**5 / 720,
                    -np.expm1(-zs) / zs)
    psi = np.where(small, 0.5 - z / 3 + z**2 / 8 - z**3 / 30 + z**4 / 144 - z**5 / 840 + z**6 / 5760,
                   (-np.expm1(-zs) - zs * np.exp(-zs)) / zs**2)
    return phi1, psi


def _hat_weights(lam: np.ndarray, h: float):
    """Exact weights of int_0^h e^{-(h - s) lam} (left hat, right hat)(s) ds."""
    phi1, psi = _phi_weights(lam * h)
    return h * psi, h * (phi1 - psi)


def duhamel_from_nodes(G: np.ndarray, time: TimeGrid, grid: Grid, nu: float = 0.0) -> np.ndarray:
    """int_0^{t_j} T(t_j - s) G(s) ds for G linear between nodes.

    ``G`` has shape (M+1, ncomp, N, ..., N).  The semigroup property turns the
    product integration into a one-step recursion, each step exact for the
    exponential kernel against the two hat functions of its interval.
    """
    lam = grid.k_squared() + nu
    t = time.nodes
    out = np.zeros_like(G)
    acc = np.zeros_like(G[0])
    for i in range(time.M):
        h = t[i + 1] - t[i]
        w0, w1 = _hat_weights(lam, h)
        acc = np.exp(-lam * h) * acc + w0 * G[i] + w1 * G[i + 1]
        out[i + 1] = acc
    return out


_CHUNK = 16


def nonlinearity_nodes(u: Trajectory, v: Trajectory) -> np.ndarray:
    """P div(u (x) v) at every node, batched in chunks of nodes."""
    if u.time != v.time or u.grid != v.grid:
        raise GridError("trajectories live on different grids")
    same = u is v or u.coeffs is v.coeffs
    out = np.empty_like(u.coeffs)
    for a in range(0, len(u), _CHUNK):
        b = min(a + _CHUNK, len(u))
        out[a:b] = nonlinearity_coeffs(u.coeffs[a:b], v.coeffs[a:b], u.grid, True, same)
    return out


def duhamel_bilinear(u: Trajectory, v: Trajectory, nu: float = 0.0) -> Trajectory:
    """Node t_j carries int_0^{t_j} T(t_j - s) P div(u (x) v)(s) ds."""
    G = nonlinearity_nodes(u, v)
    return Trajectory(u.time, u.grid, duhamel_from_nodes(G, u.time, u.grid, nu))


def forcing_term(time: TimeGrid, grid: Grid, f0: Trajectory | None = None,
                 F: Trajectory | None = None, nu: float = 0.0) -> Trajectory:
    """int_0^t T(t - s) P (f0 + div F)(s) ds; ``F`` carries n*n components, F[i*n + j] = F_ij."""
    n = grid.n
    G = np.zeros((time.M + 1, n) + grid.shape, dtype=complex)
    if f0 is not None:
        G += f0.coeffs
    if F is not None:
        if F.coeffs.shape[1] != n * n:
            raise GridError("tensor forcing needs n*n components")
        k = grid.wavenumbers(odd=True)
        Fc = F.coeffs.reshape((time.M + 1, n, n) + grid.shape)
        G += np.sum(1j * k[None, None] * Fc, axis=2)
    G = np.stack([leray_project(SpectralField(grid, g)).coeffs for g in G])
    return Trajectory(time, grid, duhamel_from_nodes(G, time, grid, nu))


# fixed point ------------------------------------------------------------------------

def node_z_norms(x: Trajectory, tag: SpaceTag) -> np.ndarray:
    """Z-norm at every node; Lebesgue and weak Lebesgue norms are batched."""
    grid = x.grid
    vals = np.zeros(len(x))
    if tag.kind not in ("Lq", "WeakLq"):
        for j in range(len(x)):
            vals[j] = norm_report(x.field(j), tag).value
        return vals
    cell = grid.cell_volume
    for a in range(0, len(x), _CHUNK):
        b = min(a + _CHUNK, len(x))
        phys = coeffs_to_physical(x.coeffs[a:b], grid.n, grid.N)
        mag = np.sqrt(np.sum(phys**2, axis=1)).reshape(b - a, -1)
        if tag.kind == "Lq":
            vals[a:b] = [_lq_from_samples(m, tag.q, cell) for m in mag]
        else:
            vals[a:b] = [_weak_from_samples(m, tag.q, cell) for m in mag]
    return vals


def _e_norm_fn(cfg: KatoConfig):
    norm = cfg.e_norm()

    def e_norm(x: Trajectory) -> float:
        vals = node_z_norms(x, norm.space)
        vals[0] = 0.0
        return weighted_time_norm(vals, norm, x.time)

    return e_norm


def e_norm(x: Trajectory, cfg: KatoConfig) -> float:
    return _e_norm_fn(cfg)(x)


def source_term(u0: SpectralField, cfg: KatoConfig, forcing=None) -> Trajectory:
    """y = T(.) u0 + forcing Duhamel terms."""
    time = cfg.time_grid()
    y = free_evolution(u0, time, cfg.nu)
    if forcing is not None:
        f0, F = forcing
        y = y + forcing_term(time, u0.grid, f0, F, cfg.nu)
    return y


def picard_solve(u0: SpectralField, cfg: KatoConfig, forcing=None, start: str = "y",
                 node_residuals: bool = True, allow_scaling_violation: bool = False):
    """Solve z = y - D(z, z) by Picard iteration in E.

    Returns the reconstructed mild solution x = y - D(z, z) and the
    diagnostics.  ``start`` picks the first iterate: ``"y"`` or ``"zero"``.
    ``allow_scaling_violation`` lets negative controls run with exponents
    that break the scaling identity.
    """
    cfg.exponents.check(allow_scaling_violation)
    nu = cfg.nu
    enorm = _e_norm_fn(cfg)
    y = source_term(u0, cfg, forcing)
    diag = IterationDiagnostics(start=start, eta=cfg.eta_bilinear)
    diag.y_norm = enorm(y)
    if cfg.eta_bilinear:
        diag.smallness_bound = cfg.smallness_margin / (4.0 * cfg.eta_bilinear)
        diag.small = diag.y_norm < diag.smallness_bound

    z = y if start == "y" else Trajectory.zeros(y.time, y.grid)
    outside = 0
    rising = 0
    for it in range(1, cfg.max_iter + 1):
        z_new = y - duhamel_bilinear(z, z, nu)
        inc = enorm(z_new - z)
        zn = enorm(z_new)
        diag.e_norms.append(zn)
        diag.increments.append(inc)
        if len(diag.increments) > 1 and diag.increments[-2] > 0:
            diag.contraction.append(inc / diag.increments[-2])
        diag.iterations = it
        z = z_new
        if not np.isfinite(zn):
            raise DivergenceError("iterates overflowed", diagnostics=diag)
        if inc < cfg.tol:
            diag.converged = True
            break
        outside = outside + 1 if zn > 4 * diag.y_norm else 0
        rising = rising + 1 if len(diag.increments) > 1 and inc > diag.increments[-2] else 0
        if outside >= 3 or rising >= 3:
            raise DivergenceError(
                f"Picard iterates left the ball of radius 4||y||_E (norm {zn:.3e}, ||y|| {diag.y_norm:.3e})",
                diagnostics=diag)
    else:
        raise NoConvergenceError(f"no convergence after {cfg.max_iter} iterations", diagnostics=diag)

    dz = duhamel_bilinear(z, z, nu)
    x = y - dz
    diag.residual = enorm(x - z)
    if node_residuals:
        res = x - (y - duhamel_bilinear(x, x, nu))
        diag.node_residual_max = float(np.max(node_z_norms(res, cfg.exponents.z_space())[1:]))
    return x, diag


def mild_solution_at(x: Trajectory, u0: SpectralField, t: float, nu: float = 0.0,
                     forcing_nodes: np.ndarray | None = None) -> SpectralField:
    """Evaluate T(t) u0 - D(x, x)(t) (+ forcing) at an arbitrary t in [0, tau].

    The integrand is linear between nodes, as in the node-wise quadrature, so
    at a node this reproduces the trajectory value.
    """
    time, grid = x.time, x.grid
    nodes = time.nodes
    if not (0 <= t <= nodes[-1]):
        raise DomainError(f"t = {t} outside [0, {nodes[-1]}]")
    G = -nonlinearity_nodes(x, x)
    if forcing_nodes is not None:
        G = G + forcing_nodes
    j = int(np.searchsorted(nodes, t, side="right") - 1)
    j = min(j, time.M - 1)
    lam = grid.k_squared() + nu
    D = duhamel_from_nodes(G, time, grid, nu)[j]
    d = t - nodes[j]
    h = nodes[j + 1] - nodes[j]
    phi1, psi = _phi_weights(lam * d)
    slope = (G[j + 1] - G[j]) / h
    D = np.exp(-lam * d) * D + d * phi1 * G[j] + d * d * (phi1 - psi) * slope
    free = np.exp(-t * lam) * u0.coeffs
    return SpectralField(grid, free + D)


# bilinear constant ------------------------------------------------------------------

def probe_corpus(grid: Grid, time: TimeGrid, seed: int = 0, count: int = 3, nu: float = 0.0,
                 extra: list | None = None) -> list:
    """Free evolutions of seeded low-mode divergence-free fields (plus ``extra`` data)."""
    rng = np.random.default_rng(seed)
    data = [leray_project(SpectralField.random(grid, rng, kmax=4)) for _ in range(count)]
    data += list(extra or [])
    return [free_evolution(d, time, nu) for d in data]


def measure_eta(cfg: KatoConfig, grid: Grid, seed: int = 0, extra: list | None = None,
                safety: float = 2.0) -> dict:
    """max ||B(e, e')||_E / (||e||_E ||e'||_E) over the probe corpus, times ``safety``."""
    time = cfg.time_grid()
    enorm = _e_norm_fn(cfg)
    corpus = probe_corpus(grid, time, seed, nu=cfg.nu, extra=extra)
    norms = [enorm(e) for e in corpus]
    ratios = []
    for a in range(len(corpus)):
        for b in range(a, len(corpus)):
            bnorm = enorm(duhamel_bilinear(corpus[a], corpus[b], cfg.nu))
            ratios.append(bnorm / (norms[a] * norms[b]))
    raw = float(max(ratios))
    return {"eta": safety * raw, "raw_max": raw, "ratios": [float(r) for r in ratios],
            "safety": safety, "probes": len(corpus)}


# reference integrator ---------------------------------------------------------------

def reference_solve(u0: SpectralField, tau: float, dt: float, forcing: Callable | None = None,
                    nu: float = 0.0, nonlinear: bool = True, growth_limit: float = 1e3) -> Trajectory:
    """Integrating-factor RK4 for u' = -(A + nu) u - P div(u (x) u) + P f(t).

    Returns a trajectory on the uniform grid t_j = j dt (TimeGrid with r = 1).
    The linear part is integrated exactly, so with ``nonlinear=False`` and no
    forcing the result equals the free evolution to round-off.
    """
    steps = int(round(tau / dt))
    if steps < 1 or abs(steps * dt - tau) > 1e-12 * tau:
        raise DomainError("tau must be an integer multiple of dt")
    grid = u0.grid
    lam = grid.k_squared() + nu
    time = TimeGrid(tau, steps, 1.0)
    e_half = np.exp(-lam * dt / 2)
    e_full = e_half * e_half

    def rhs(t, c):
        out = np.zeros_like(c)
        if nonlinear:
            f = SpectralField(grid, c)
            out -= nonlinearity(f, f).coeffs
        if forcing is not None:
            out += leray_project(forcing(t)).coeffs
        return out

    c = u0.coeffs.copy()
    start = max(u0.l2_norm(), 1e-300)
    out = [c]
    for i in range(steps):
        t = i * dt
        k1 = rhs(t, c)
        k2 = rhs(t + dt / 2, e_half * (c + dt / 2 * k1))
        k3 = rhs(t + dt / 2, e_half * c + dt / 2 * k2)
        k4 = rhs(t + dt, e_full * c + dt * e_half * k3)
        c = e_full * c + dt / 6 * (e_full * k1 + 2 * e_half * (k2 + k3) + k4)
        norm = float(np.sqrt(grid.volume * np.sum(np.abs(c) ** 2)))
        if not np.isfinite(norm) or (u0.l2_norm() > 0 and norm > growth_limit * start):
            raise OracleError(f"reference integrator unstable at t = {t + dt:.4g}")
        out.append(c)
    return Trajectory(time, grid, np.stack(out))


# smallness threshold ----------------------------------------------------------------

@dataclass
class ThresholdResult:
    threshold: float
    samples: list            # (amplitude, converged) in evaluation order
    ambiguous: bool = False
    predicted: float | None = None

    def to_dict(self):
        return {"threshold": self.threshold, "predicted": self.predicted, "ambiguous": self.ambiguous,
                "samples": [[float(a), bool(c)] for a, c in self.samples]}


def _converges(u0, cfg, forcing=None) -> bool:
    try:
        picard_solve(u0, cfg, forcing, node_residuals=False)
        return True
    except (DivergenceError, NoConvergenceError):
        return False


def smallness_threshold(direction: SpectralField, cfg: KatoConfig, start: float | None = None,
                        rel_width: float = 0.05, strict: bool = False) -> ThresholdResult:
    """Largest amplitude c for which Picard converges on c * direction, to 5 % width.

    After the bisection a fixed set of check amplitudes on both sides is
    evaluated; any converged amplitude above a diverged one marks the result
    ambiguous (raised as ThresholdAmbiguous when ``strict``).
    """
    if direction.l2_norm() == 0:
        return ThresholdResult(np.inf, [])
    samples = []

    def test(c):
        ok = _converges(direction * c, cfg)
        samples.append((c, ok))
        log.info("amplitude %.4e -> %s", c, "converged" if ok else "diverged")
        return ok

    c = 1.0 if start is None else start
    if test(c):
        lo, hi = c, None
        while hi is None:
            c *= 2
            if test(c):
                lo = c
            else:
                hi = c
            if c > 1e12:
                return ThresholdResult(np.inf, samples)
    else:
        lo, hi = None, c
        while lo is None:
            c /= 2
            if test(c):
                lo = c
            else:
                hi = c
            if c < 1e-12:
                raise DomainError("no converging amplitude found")
    while hi / lo > 1 + rel_width:
        mid = np.sqrt(lo * hi)
        if test(mid):
            lo = mid
        else:
            hi = mid
    for f in (0.25, 0.5, 0.8, 1.25, 2.0):
        test(lo * f if f < 1 else hi * f)
    conv = [a for a, ok in samples if ok]
    div = [a for a, ok in samples if not ok]
    ambiguous = bool(conv and div and max(conv) > min(div))
    res = ThresholdResult(float(lo), samples, ambiguous)
    if ambiguous and strict:
        raise ThresholdAmbiguous("convergence set is not an interval", result=res.to_dict())
    return res


def taylor_green_3d(grid: Grid, amplitude: float = 1.0) -> SpectralField:
    """(sin x1 cos x2 cos x3, -cos x1 sin x2 cos x3, 0)."""
    if grid.n != 3:
        raise GridError("3D Taylor-Green needs n = 3")
    x = grid.coordinates()
    u = np.zeros((3,) + grid.shape)
    u[0] = np.sin(x[0]) * np.cos(x[1]) * np.cos(x[2])
    u[1] = -np.cos(x[0]) * np.sin(x[1]) * np.cos(x[2])
    return SpectralField.from_physical(grid, amplitude * u)
