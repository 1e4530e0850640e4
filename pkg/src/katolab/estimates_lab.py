"""Measurements of the linear estimates behind the fixed-point argument.

Boundedness is never certified directly.  Each check measures a supremum
over a probe family and watches it under a fixed extension protocol
(wider time window, larger model dimension): a ratio that moves by less
than 2x is called "stable", one that grows by more than 10x "unbounded".
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import betainc
from scipy.stats import linregress

from .diagonal_models import DiagonalModel, log_grid, spectral_window
from .errors import DomainError, FitUnreliable, HypothesisError
from .function_spaces import SpaceTag, norm_report
from .interpolation_lab import WeightedCouple, real_interp_norm
from .spectral_core import LERAY, Grid, SpectralField, apply_multiplier, heat_semigroup
from .time_spaces import TimeGrid, weighted_norm_on_nodes

STABLE_DRIFT = 2.0
UNBOUNDED_GROWTH = 10.0
DIMENSIONS = (64, 128, 256, 512)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)   # moved to [0, 1]
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS
_NEAR = 64.0                          # closed forms when t - t_{j+1} < 64 h


def growth_verdict(values) -> dict:
    """Classify a sequence of measured suprema along an extension protocol."""
    v = np.asarray(values, dtype=float)
    if np.all(v == 0):
        return {"drift": 1.0, "growth": 1.0, "verdict": "stable"}
    if np.any(~np.isfinite(v)):
        return {"drift": float("inf"), "growth": float("inf"), "verdict": "unbounded"}
    drift = float(v.max() / v.min()) if v.min() > 0 else float("inf")
    growth = float(v[-1] / v[0]) if v[0] > 0 else float("inf")
    if drift < STABLE_DRIFT:
        verdict = "stable"
    elif growth > UNBOUNDED_GROWTH:
        verdict = "unbounded"
    else:
        verdict = "inconclusive"
    return {"drift": drift, "growth": growth, "verdict": verdict}


# decay exponents ----------------------------------------------------------------

@dataclass
class DecayFit:
    gamma: float
    constant: float
    r2: float
    window: tuple
    times: list = field(repr=False)
    ratios: list = field(repr=False)

    def to_dict(self):
        return {"gamma_fit": self.gamma, "c_fit": self.constant, "r2": self.r2,
                "window": list(self.window), "points": len(self.times)}


def fit_decay(times, ratios, window) -> DecayFit:
    """Least-squares slope of log R against log t; gamma = -slope."""
    t = np.asarray(times, dtype=float)
    r = np.asarray(ratios, dtype=float)
    lt, lr = np.log(t), np.log(r)
    if np.ptp(lr) < 1e-12 * max(1.0, np.max(np.abs(lr))):
        return DecayFit(0.0, float(np.exp(lr.mean())), 1.0, tuple(window), t.tolist(), r.tolist())
    fit = linregress(lt, lr)
    out = DecayFit(float(-fit.slope), float(np.exp(fit.intercept)), float(fit.rvalue**2),
                   tuple(window), t.tolist(), r.tolist())
    # r^2 says nothing about a series that is flat to 0.1%
    if out.r2 < 0.95 and np.ptp(lr) >= 1e-3:
        raise FitUnreliable(f"log-log fit has r^2 = {out.r2:.3f} < 0.95", fit=out.to_dict(),
                            times=out.times, ratios=out.ratios)
    return out


@dataclass
class ProbeFamily:
    """Probe vectors or fields, each with a tag describing how it was built."""

    members: list
    tags: list

    def __post_init__(self):
        if len(self.members) != len(self.tags) or not self.members:
            raise DomainError("a probe family needs one tag per member and at least one member")

    def __iter__(self):
        return iter(zip(self.members, self.tags))

    def __len__(self):
        return len(self.members)


def divergence_form_probes(grid: Grid, widths) -> ProbeFamily:
    """w = P(d_2 g_sigma, 0, ...) for periodised Gaussians g_sigma of the given widths.

    These are divergence-form fields P div(F) with F = g_sigma e_1 (x) e_2, the
    shape of the nonlinearity; each has mean zero and lives at scale sigma.
    """
    k = grid.wavenumbers(odd=True)
    centre = np.exp(-1j * np.pi * grid.wavenumbers().sum(axis=0))
    members, tags = [], []
    for sigma in widths:
        g = np.exp(-0.5 * sigma**2 * grid.k_squared()) * centre
        c = np.zeros((grid.n,) + grid.shape, dtype=complex)
        c[0] = 1j * k[1] * g
        members.append(apply_multiplier(SpectralField(grid, c), LERAY))
        tags.append(f"divergence-form gaussian sigma={sigma:.4g}")
    return ProbeFamily(members, tags)


def torus_window(grid: Grid) -> tuple:
    """[10 / |k|max^2, 1 / (10 |k|min^2)] with |k|max = N/2 and |k|min = 1."""
    return 10.0 / (grid.N / 2) ** 2, 0.1


def decay_exponent(source: SpaceTag, target: SpaceTag, probes: ProbeFamily,
                   t_grid=None, window=None, nu: float = 0.0) -> DecayFit:
    """Fit R(t) = max_w ||T(t) w||_target / ||w||_source to c t^-gamma on the torus."""
    grid = probes.members[0].grid
    window = torus_window(grid) if window is None else window
    t = log_grid(*window) if t_grid is None else np.asarray(t_grid, dtype=float)
    t = t[(t >= window[0] * (1 - 1e-12)) & (t <= window[1] * (1 + 1e-12))]
    base = np.array([norm_report(w, source).value for w, _ in probes])
    if np.any(base <= 0):
        raise DomainError("probes must have positive source norm")
    ratios = np.array([
        max(norm_report(heat_semigroup(w, ti, nu), target).value / b
            for (w, _), b in zip(probes, base))
        for ti in t])
    return fit_decay(t, ratios, window)


def nonlinearity_decay(n: int, q: float, N: int | None = None, widths=None) -> DecayFit:
    """Decay of e^{t Delta} from W = H^{-1}_{q/2} to Z = L^q on divergence-form probes."""
    N = {2: 64, 3: 32}[n] if N is None else N
    grid = Grid(n, N)
    lo, hi = torus_window(grid)
    if widths is None:
        widths = np.sqrt(np.geomspace(lo / 4, hi * 4, 9))
    probes = divergence_form_probes(grid, widths)
    return decay_exponent(SpaceTag("HomSobolev", s=-1.0, q=q / 2), SpaceTag("Lq", q=q), probes)


def diagonal_decay_exponent(model: DiagonalModel, t_grid=None, window=None) -> DecayFit:
    """Fit R(t) = max_i c_i e^{-t lam_i}, the l^2 norm of C T(t), to c t^-gamma."""
    lam = model.spectrum
    window = (10.0 / lam.max(), 0.1 / lam.min()) if window is None else window
    t = log_grid(*window) if t_grid is None else np.asarray(t_grid, dtype=float)
    ratios = np.max(np.abs(model.obs_weights)[None, :] * model.semigroup_symbols(t), axis=1)
    return fit_decay(t, ratios, window)


# Hardy-Littlewood operator ------------------------------------------------------

def _pow_diff(x, y, c):
    """x^c - y^c for x > y >= 0, without cancellation when x - y << y."""
    out = x**c
    pos = y > 0
    out[pos] = y[pos] ** c * np.expm1(c * np.log1p((x[pos] - y[pos]) / y[pos]))
    return out


def _linear_weights(t, a, b, gamma):
    """Weights (left, right) of the hat functions on [a, b] against (t - s)^-gamma."""
    h = b - a
    x, y = t - a, t - b
    wl, wr = np.empty_like(t), np.empty_like(t)
    near = y < _NEAR * h
    if np.any(near):
        xn, yn, hn = x[near], y[near], h[near]
        i0 = _pow_diff(xn, yn, 1 - gamma) / (1 - gamma)
        i1 = _pow_diff(xn, yn, 2 - gamma) / (2 - gamma)
        wl[near] = (i1 - yn * i0) / hn
        wr[near] = (xn * i0 - i1) / hn
    far = ~near
    if np.any(far):
        xf, hf = x[far], h[far]
        kern = (xf[:, None] - hf[:, None] * _GL_NODES[None, :]) ** -gamma
        wl[far] = hf * (kern * (1 - _GL_NODES) * _GL_WEIGHTS).sum(axis=1)
        wr[far] = hf * (kern * _GL_NODES * _GL_WEIGHTS).sum(axis=1)
    return wl, wr


def _power_piece(t, a, b, f_a, mu, gamma):
    """Integral over [a, b] of f_a (s/a)^mu (t - s)^-gamma ds; a = 0 means f_a (s/b)^mu from b."""
    ref = np.where(a > 0, a, b)
    x_lo, x_hi = a / t, b / t
    p_, q_ = mu + 1.0, 1.0 - gamma
    upper = x_lo >= 0.5
    diff = np.where(
        upper,
        betainc(q_, p_, 1 - x_lo) - betainc(q_, p_, 1 - x_hi),
        betainc(p_, q_, x_hi) - betainc(p_, q_, x_lo))
    with np.errstate(over="ignore", invalid="ignore"):
        scale = f_a * np.exp(mu * np.log(t / ref)) * t ** (1 - gamma) * beta_fn(p_, q_)
    return scale * diff


def product_integrate(values, nodes, gamma: float, interpolant: str = "linear") -> np.ndarray:
    """(T_gamma f)(t_k) = int_0^{t_k} f(s) (t_k - s)^-gamma ds at every node.

    ``nodes`` start at 0.  With ``interpolant="linear"`` f is the piecewise
    linear interpolant of its node values (exact for such f; f(0) must be
    finite).  With ``"power"`` f is interpolated on each interval by the
    power law through its end values, and on [0, t_1] by the power law
    continued from [t_1, t_2], which is exact for f = c s^a with a > -1 and
    allows f(0) to be infinite; intervals where the two end values differ in
    sign or vanish fall back to the linear rule.
    """
    if not (0 < gamma < 1):
        raise DomainError(f"kernel exponent gamma must lie in (0, 1), got {gamma}")
    if interpolant not in ("linear", "power"):
        raise DomainError(f"interpolant must be 'linear' or 'power', got {interpolant!r}")
    t = np.asarray(nodes, dtype=float)
    f = np.asarray(values, dtype=float).copy()
    if t[0] != 0 or np.any(np.diff(t) <= 0):
        raise DomainError("nodes must start at 0 and increase strictly")
    if f.shape != t.shape:
        raise DomainError(f"{f.size} values for {t.size} nodes")
    if not np.all(np.isfinite(f[1:])):
        raise DomainError("values must be finite at nodes t > 0")
    if interpolant == "linear" and not np.isfinite(f[0]):
        raise DomainError("the linear rule needs a finite value at t = 0")

    k_idx, j_idx = np.tril_indices(t.size - 1)
    k_idx = k_idx + 1                       # target node t_k, interval [t_j, t_{j+1}], j < k
    tk, a, b = t[k_idx], t[j_idx], t[j_idx + 1]
    fa, fb = f[j_idx], f[j_idx + 1]
    contrib = np.zeros(k_idx.size)

    use_power = np.zeros(k_idx.size, dtype=bool)
    mu = np.zeros(k_idx.size)
    if interpolant == "power":
        first = j_idx == 0
        f1, f2 = f[1], f[2] if t.size > 2 else f[1]
        if f1 != 0 and np.sign(f1) == np.sign(f2):
            mu0 = np.log(f2 / f1) / np.log(t[2] / t[1])
            if mu0 <= -1:
                raise DomainError(f"f behaves like s^{mu0:.3f} near 0 and is not integrable")
            mu[first], use_power[first] = mu0, True
            fa = np.where(first, f1, fa)
        elif not np.isfinite(f[0]):
            raise DomainError("no power law on [t_1, t_2] to continue to an infinite f(0)")
        same = (j_idx > 0) & (fa * fb > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            mu_int = np.log(fb / fa) / np.log(b / a)
        ok = same & (mu_int > -1)
        mu[ok], use_power[ok] = mu_int[ok], True
        # far intervals with small relative width go to Gauss-Legendre on the power law
        coarse = ok & ((tk - b) >= _NEAR * (b - a)) & ((b - a) <= 0.5 * a)
        if np.any(coarse):
            s = a[coarse, None] + (b - a)[coarse, None] * _GL_NODES[None, :]
            integrand = fa[coarse, None] * (s / a[coarse, None]) ** mu[coarse, None] \
                * (tk[coarse, None] - s) ** -gamma
            contrib[coarse] = (b - a)[coarse] * (integrand * _GL_WEIGHTS).sum(axis=1)
        exact = use_power & ~coarse
        if np.any(exact):
            contrib[exact] = _power_piece(tk[exact], a[exact], b[exact], fa[exact],
                                          mu[exact], gamma)
        if not np.isfinite(f[0]):
            fa = np.where(first & ~use_power, 0.0, fa)
    lin = ~use_power
    if np.any(lin):
        wl, wr = _linear_weights(tk[lin], a[lin], b[lin], gamma)
        contrib[lin] = wl * np.where(np.isfinite(fa[lin]), fa[lin], 0.0) + wr * fb[lin]
    out = np.zeros(t.size)
    out[1:] = np.bincount(k_idx - 1, weights=contrib, minlength=t.size - 1)
    return out


def product_matrix(nodes, gamma: float) -> np.ndarray:
    """Matrix of the linear rule: (T_gamma f)(t_k) = sum_j M[k, j] f(t_j)."""
    t = np.asarray(nodes, dtype=float)
    if not (0 < gamma < 1):
        raise DomainError(f"kernel exponent gamma must lie in (0, 1), got {gamma}")
    k_idx, j_idx = np.tril_indices(t.size - 1)
    k_idx = k_idx + 1
    wl, wr = _linear_weights(t[k_idx], t[j_idx], t[j_idx + 1], gamma)
    out = np.zeros((t.size, t.size))
    np.add.at(out, (k_idx, j_idx), wl)
    np.add.at(out, (k_idx, j_idx + 1), wr)
    return out


def hardy_littlewood_apply(f, gamma: float, grid: TimeGrid, interpolant: str = "linear"
                           ) -> np.ndarray:
    """T_gamma f on the nodes of a graded time grid; see ``product_integrate``."""
    return product_integrate(f, grid.nodes, gamma, interpolant)


def hardy_littlewood_power_oracle(a: float, gamma: float, t) -> np.ndarray:
    """T_gamma s^a = B(1 + a, 1 - gamma) t^(1 + a - gamma)."""
    return beta_fn(1 + a, 1 - gamma) * np.asarray(t, dtype=float) ** (1 + a - gamma)


@dataclass
class BoundProbe:
    parameters: dict
    identity_residual: float
    scaling_ok: bool
    steps: list
    ratio_sup: list
    drift: float
    growth: float
    verdict: str

    def to_dict(self):
        return asdict(self)


def _weighted(values, nodes, p, weight, include_origin):
    return weighted_norm_on_nodes(np.abs(values), nodes, p, weight, include_origin)


def hardy_littlewood_bound_probe(q: float, beta: float, p: float, alpha: float, gamma: float,
                                 half_widths=(2, 5, 8, 11, 14), per_decade: int = 32
                                 ) -> BoundProbe:
    """Sup of ||T_gamma f||_{L^p_alpha} / ||f||_{L^q_beta} under window widening.

    Step m uses the time window [10^-D, 10^D], D = half_widths[m], and a
    probe family living inside it: hat bumps centred every half decade and
    truncated powers s^a 1_{s <= c} with a approaching the integrability
    edge -beta - 1/q.  The output norm is taken over the window only, so each
    ratio is a lower bound for the operator norm.
    """
    residual = (1 + alpha - beta - gamma) - (_inv(q) - _inv(p))
    ratios = []
    edge = -beta - _inv(q)
    for D in half_widths:
        t = np.concatenate([[0.0], log_grid(10.0**-D, 10.0**D, per_decade)])
        bumps = _hl_bumps(t, D)
        images = bumps @ product_matrix(t, gamma).T
        best = max(_weighted(img, t, p, alpha, False) / _weighted(f, t, q, beta, True)
                   for f, img in zip(bumps, images))
        for f in _hl_truncated_powers(t, D, edge):
            img = product_integrate(f, t, gamma, "power")
            best = max(best, _weighted(img, t, p, alpha, False) / _weighted(f, t, q, beta, True))
        ratios.append(best)
    v = growth_verdict(ratios)
    return BoundProbe({"q": _num(q), "beta": beta, "p": _num(p), "alpha": alpha, "gamma": gamma},
                      float(residual), bool(abs(residual) < 1e-12), list(half_widths), ratios,
                      v["drift"], v["growth"], v["verdict"])


def _hl_bumps(t, D):
    """Hats in log10 t of half-width 1/2 decade, centred every half decade."""
    u = np.log10(np.where(t > 0, t, 1.0))
    centres = np.arange(-D + 1, D - 0.5, 0.5)
    hats = np.clip(1 - np.abs(u[None, :] - centres[:, None]) / 0.5, 0, None)
    hats[:, 0] = 0.0
    return hats


def _hl_truncated_powers(t, D, edge):
    """s^a 1_{s <= c} for cuts c = 10^(-D+1), 1, 10^(D-1) and a = edge + (0.5, 0.2, 0.1)."""
    for cut in (-D + 1, 0, D - 1):
        for eps in (0.5, 0.2, 0.1):
            a = edge + eps
            f = np.zeros_like(t)
            mask = (t > 0) & (t <= 10.0**cut * (1 + 1e-12))
            f[mask] = t[mask] ** a
            f[0] = np.inf if a < 0 else (1.0 if a == 0 else 0.0)
            yield f


def _inv(p):
    return 0.0 if p == np.inf else 1.0 / p


def _num(v):
    return "inf" if v == np.inf else v


# resolvent condition and admissibility ------------------------------------------

@dataclass
class ResolventBound:
    value: float
    argmax: float
    at_edge: bool
    lam_range: tuple

    def to_dict(self):
        return asdict(self)


def resolvent_family_bound(model: DiagonalModel, alpha: float, p: float, lam_grid=None,
                           per_decade: int = 64) -> ResolventBound:
    """sup over a log lambda grid of lambda^(1 - alpha - 1/p) max_i |c_i| / (lambda + lam_i).

    The grid is [1e-4, 1e4] widened to cover the spectrum with two decades of
    margin; ``at_edge`` flags a supremum taken on the largest or smallest
    lambda, i.e. a value still growing when the grid ends.
    """
    index = alpha + _inv(p)
    if not (0 <= index < 1):
        raise DomainError(f"alpha + 1/p must lie in [0, 1), got {index}")
    if lam_grid is None:
        lo, hi = spectral_window(1.0 / model.spectrum, 2.0)
        lam_grid = log_grid(lo, hi, per_decade)
    lam = np.asarray(lam_grid, dtype=float)
    c = np.abs(model.obs_weights)
    vals = lam ** (1 - index) * np.max(c[None, :] / (lam[:, None] + model.spectrum[None, :]), axis=1)
    i = int(np.argmax(vals))
    return ResolventBound(float(vals[i]), float(lam[i]), bool(i in (0, lam.size - 1)),
                          (float(lam[0]), float(lam[-1])))


def default_probes(model: DiagonalModel, seed: int = 0, count: int = 8) -> np.ndarray:
    """Every coordinate vector plus ``count`` seeded random unit vectors."""
    rng = np.random.default_rng(seed)
    rand = rng.standard_normal((count, model.dim))
    rand /= np.linalg.norm(rand, axis=1, keepdims=True)
    return np.vstack([np.eye(model.dim), rand])


def _time_nodes(model: DiagonalModel, per_decade: int = 32) -> np.ndarray:
    lo, hi = spectral_window(model.spectrum, 3.0)
    return np.concatenate([[0.0], log_grid(lo, hi, per_decade)])


def observation_constant(model: DiagonalModel, p: float, alpha: float, probes=None,
                         per_decade: int = 32) -> float:
    """max over probes of ||t^alpha C T(t) x||_{L^p(0, inf; l^2)} / ||x||."""
    xs = default_probes(model) if probes is None else np.atleast_2d(probes)
    t = _time_nodes(model, per_decade)
    c2 = model.obs_weights**2
    sq = (c2[None, :] * model.semigroup_symbols(t) ** 2) @ (xs**2).T   # (T, P)
    traj = np.sqrt(np.maximum(sq, 0.0))
    norms = np.array([weighted_norm_on_nodes(traj[:, i], t, p, alpha) for i in range(xs.shape[0])])
    sizes = np.linalg.norm(xs, axis=1)
    return float(np.max(np.where(sizes > 0, norms / np.where(sizes > 0, sizes, 1), 0.0)))


@dataclass
class AdmissibilityResult:
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else float("nan")


def admissibility_A1(model: DiagonalModel, p: float, alpha: float, probes=None,
                     per_decade: int = 32) -> AdmissibilityResult:
    """lhs = observation constant in L^p_alpha; rhs = ||C||_{(X, X_1)_{alpha+1/p,1} -> Z} on probes."""
    index = alpha + _inv(p)
    if not (0 < index < 0.5):
        raise DomainError(f"alpha + 1/p must lie in (0, 1/2), got {index}")
    xs = default_probes(model) if probes is None else np.atleast_2d(probes)
    if not np.any(model.obs_weights):
        return AdmissibilityResult(0.0, 0.0)
    lhs = observation_constant(model, p, alpha, xs, per_decade)
    interp = real_interp_norm(WeightedCouple.homogeneous(model, 0, 1), xs, index, 1)
    image = np.linalg.norm(model.obs_weights[None, :] * xs, axis=1)
    return AdmissibilityResult(lhs, float(np.max(image / interp)))


def control_input_ratios(model: DiagonalModel, p: float, alpha: float, xs, windows):
    """||Phi u||_{L^inf(X)} / ||u||_{L^{p/2}_{2 alpha}(W)} for u = x 1_[s0, s1).

    Every component of the convolution rises on [s0, s1] and decays after, so
    the sup in time is attained at s1 and is computed in closed form.
    """
    lam, b = model.spectrum, model.ctrl_weights
    out = []
    for x, (s0, s1) in zip(xs, windows):
        reach = b * x * -np.expm1(-(s1 - s0) * lam) / lam
        if p == np.inf:
            size = np.linalg.norm(x) * s1 ** (2 * alpha)
        else:
            e = alpha * p + 1.0
            size = np.linalg.norm(x) * ((s1**e - s0**e) / e) ** (2.0 / p)
        out.append(np.linalg.norm(reach) / size if size > 0 else 0.0)
    return np.array(out)


def _control_probes(model: DiagonalModel, seed: int = 0):
    lam = model.spectrum
    xs, windows = [], []
    for i in range(model.dim):
        e = np.zeros(model.dim)
        e[i] = 1.0
        for kappa in (0.25, 0.5, 1.0, 2.0, 4.0):
            s1 = kappa / lam[i]
            xs += [e, e]
            windows += [(0.0, s1), (s1, 2 * s1)]
    rng = np.random.default_rng(seed)
    for s1 in np.geomspace(0.1 / lam.max(), 10 / lam.min(), 8):
        x = rng.standard_normal(model.dim)
        xs.append(x / np.linalg.norm(x))
        windows.append((0.0, s1))
    return np.array(xs), windows


def admissibility_A2(model: DiagonalModel, p: float, alpha: float) -> AdmissibilityResult:
    """lhs = sup of the control map L^{p/2}_{2 alpha}(W) -> L^inf(X) over window probes;
    rhs = ||B||_{W -> (X_-1, X)_{2(alpha+1/p), inf}} on coordinate and random probes."""
    index = 2 * (alpha + _inv(p))
    if not (0 < index < 1):
        raise DomainError(f"2(alpha + 1/p) must lie in (0, 1), got {index}")
    if not np.any(model.ctrl_weights):
        return AdmissibilityResult(0.0, 0.0)
    xs, windows = _control_probes(model)
    lhs = float(np.max(control_input_ratios(model, p, alpha, xs, windows)))
    probes = default_probes(model)
    couple = WeightedCouple.homogeneous(model, -1, 0)
    image = real_interp_norm(couple, model.ctrl_weights[None, :] * probes, index, np.inf)
    return AdmissibilityResult(lhs, float(np.max(image / np.linalg.norm(probes, axis=1))))


def critical_observation_model(dim: int, p: float, alpha: float, shift: float = 0.0) -> DiagonalModel:
    """Geometric spectrum with C = A^(alpha + 1/p + shift)."""
    return DiagonalModel.geometric(dim).with_observation(alpha + _inv(p) + shift)


def critical_control_model(dim: int, p: float, alpha: float, shift: float = 0.0) -> DiagonalModel:
    """Geometric spectrum with B = A^(1 - 2(alpha + 1/p) + shift); A^(1 - 2/p) when alpha = 0."""
    return DiagonalModel.geometric(dim).with_control(1 - 2 * (alpha + _inv(p)) + shift)


def observation_sweep(p: float, alpha: float, shift: float = 0.0, dims=DIMENSIONS) -> dict:
    """The three quantities of the observation tri-equivalence along dimension doubling."""
    rows = []
    for d in dims:
        model = critical_observation_model(d, p, alpha, shift)
        a1 = admissibility_A1(model, p, alpha)
        res = resolvent_family_bound(model, alpha, p)
        rows.append({"dim": d, "trajectory": a1.lhs, "resolvent": res.value,
                     "interpolation": a1.rhs})
    return _sweep_summary(rows, ("trajectory", "resolvent", "interpolation"),
                          {"p": _num(p), "alpha": alpha, "shift": shift, "operator": "C"})


def control_sweep(p: float, alpha: float, shift: float = 0.0, dims=DIMENSIONS) -> dict:
    rows = []
    for d in dims:
        a2 = admissibility_A2(critical_control_model(d, p, alpha, shift), p, alpha)
        rows.append({"dim": d, "convolution": a2.lhs, "interpolation": a2.rhs})
    return _sweep_summary(rows, ("convolution", "interpolation"),
                          {"p": _num(p), "alpha": alpha, "shift": shift, "operator": "B"})


def _sweep_summary(rows, keys, params) -> dict:
    sides = {k: growth_verdict([r[k] for r in rows]) for k in keys}
    ratios = {}
    for i, a in enumerate(keys):
        for b in keys[i + 1:]:
            vals = [r[a] / r[b] for r in rows]
            ratios[f"{a}/{b}"] = {"interval": [min(vals), max(vals)],
                                  **growth_verdict(vals)}
    verdicts = {v["verdict"] for v in sides.values()}
    if verdicts == {"stable"} and all(r["verdict"] == "stable" for r in ratios.values()):
        joint = "jointly finite"
    elif verdicts == {"unbounded"}:
        joint = "jointly divergent"
    else:
        joint = "mixed"
    return {"parameters": params, "rows": rows, "sides": sides, "ratios": ratios,
            "verdict": joint}


def interpolation_inequality_check(model: DiagonalModel, p: float, alpha: float, q: float,
                                   slack: float = 2.0) -> dict:
    """Observation constant at (q, alpha + 1/p - 1/q) against the bound
    constant(p, alpha)^(p/q) * resolvent^(1 - p/q) * slack, for q > p.

    Pointwise |t^a' g|^q = |t^alpha g|^p |t^(alpha+1/p) g|^(q-p) gives the bound
    with the L^inf_(alpha+1/p) constant in place of the resolvent bound; on
    diagonal models the resolvent bound dominates that constant.
    """
    if not (q > p):
        raise DomainError(f"need q > p, got p = {p}, q = {q}")
    shifted = alpha + _inv(p) - _inv(q)
    at_p = observation_constant(model, p, alpha)
    at_q = observation_constant(model, q, shifted)
    res = resolvent_family_bound(model, alpha, p).value
    frac = p / q if q != np.inf else 0.0
    bound = at_p**frac * res ** (1 - frac) * slack
    return {"p": _num(p), "q": _num(q), "alpha": alpha, "alpha_q": shifted,
            "constant_p": at_p, "constant_q": at_q, "resolvent": res, "bound": bound,
            "holds": bool(at_q <= bound)}


# convolution estimates ----------------------------------------------------------

def _window_response(lam, weight, s0, s1, t):
    """weight * int_{s0}^{min(t, s1)} e^{-(t - s) lam} ds for t >= 0."""
    out = np.zeros_like(t)
    on = (t > s0) & (t <= s1)
    out[on] = -np.expm1(-lam * (t[on] - s0)) / lam
    after = t > s1
    out[after] = (np.exp(-lam * (t[after] - s1)) - np.exp(-lam * (t[after] - s0))) / lam
    return weight * out


def convolution_ratio(lam: float, weight: float, s0: float, s1: float, q_in: float,
                      beta: float, p_out: float, alpha: float, per_decade: int = 32) -> float:
    """||t^alpha y||_{L^p} / ||s^beta u||_{L^q} for u = 1_[s0, s1) and y = k * u, k(t) = weight e^{-t lam}."""
    lo = (s0 if s0 > 0 else s1) * 1e-6
    hi = s1 + 60.0 / lam
    t = np.union1d(np.concatenate([[0.0], log_grid(lo, hi, per_decade)]), [s0, s1])
    y = np.abs(_window_response(lam, weight, s0, s1, t))
    num = weighted_norm_on_nodes(y, t, p_out, alpha)
    if q_in == np.inf:
        den = max(s0**beta, s1**beta) if beta >= 0 else s0**beta
    else:
        e = beta * q_in + 1.0
        den = ((s1**e - s0**e) / e) ** (1.0 / q_in)
    return num / den


def verify_A3_convolution(q_in: float, beta: float, p_out: float, alpha: float, gamma: float,
                          dims=DIMENSIONS, tol: float = 1e-9) -> dict:
    """Convolution L^q_beta(W) -> L^p_alpha(Z) with ||C T(t) B|| ~ t^-gamma on diagonal models.

    The model has C B = A^gamma on a geometric spectrum, so its kernel norm
    decays exactly like t^-gamma across the spectral range.  ``gamma`` may be
    a fitted decay exponent; ``tol`` is the slack on the exponent identity
    beta + gamma + 1/q = 1 + alpha + 1/p.
    """
    residual = (beta + gamma + _inv(q_in)) - (1 + alpha + _inv(p_out))
    sups = []
    for d in dims:
        lam = DiagonalModel.geometric(d).spectrum
        best = 0.0
        for li in lam:
            for kappa in (0.25, 1.0, 4.0):
                s1 = kappa / li
                for s0 in (0.0, s1):
                    hi = s1 if s0 == 0 else 2 * s1
                    best = max(best, convolution_ratio(li, li**gamma, s0, hi, q_in, beta,
                                                       p_out, alpha))
        sups.append(float(best))
    v = growth_verdict(sups)
    holds = abs(residual) <= tol
    expected = "stable" if holds else "unbounded"
    return {"parameters": {"q_in": _num(q_in), "beta": beta, "p_out": _num(p_out),
                           "alpha": alpha, "gamma": gamma},
            "identity_residual": float(residual), "identity_holds": bool(holds),
            "dims": list(dims), "ratio_sup": sups, **v,
            "bounded": v["verdict"] == "stable", "consistent": v["verdict"] == expected}


def _u_norm(values, u_weights, kind):
    if kind == "l2":
        return np.linalg.norm(values * u_weights[None, :], axis=1)
    couple = WeightedCouple(np.ones_like(u_weights), u_weights**2)
    return real_interp_norm(couple, values, 0.5, np.inf)


def linfty_convolution_constant(model: DiagonalModel, u_weights, u_norm: str = "interp",
                                check_hypothesis: bool = True, slope_tol: float = 0.05) -> dict:
    """C in sup_t ||int_0^t T(t-s) w(s) ds||_U <= C ||w||_{L^inf(W)} for W = l^2.

    U is l^2(u) (``u_norm="l2"``) or the lattice space (l^2, l^2(u^2))_{1/2,inf}
    (``"interp"``).  The hypothesis ||T(t)||_{W -> U} <= c/t is checked first
    as a decay fit over the spectral window; a slope steeper than -1 - slope_tol
    raises HypothesisError.  Probes are constant inputs (coordinate and random)
    and sweeping inputs that feed each band of eigenvalues while t - s ~ 1/lam.
    """
    lam = model.spectrum
    u = np.asarray(u_weights, dtype=float)
    t = log_grid(10.0 / lam.max(), 0.1 / lam.min()) if lam.max() > 100 * lam.min() \
        else log_grid(0.1 / lam.max(), 10.0 / lam.min())
    decay = np.max(u[None, :] * model.semigroup_symbols(t), axis=1)
    fit = linregress(np.log(t), np.log(decay))
    hyp_const = float(np.max(t * decay))
    if check_hypothesis and abs(fit.slope + 1) > slope_tol:
        raise HypothesisError(
            f"||T(t)||_(W->U) decays like t^{fit.slope:.3f}, not like the c/t of the hypothesis",
            slope=float(fit.slope))
    probes = default_probes(model)
    # constant input: the response increases to x/lam as t -> inf
    const = _u_norm(probes / lam[None, :], u, u_norm) / np.linalg.norm(probes, axis=1)
    sweeps = []
    order = np.log10(lam)
    for width in (0.5, 1.0, 2.0):
        edges = np.arange(np.floor(order.min()), np.ceil(order.max()) + width, width)
        band = np.clip(np.searchsorted(edges, order, side="right") - 1, 0, edges.size - 2)
        counts = np.bincount(band, minlength=edges.size - 1)
        x = 1.0 / np.sqrt(counts[band])
        lo_r, hi_r = 10.0 ** -edges[band + 1], 10.0 ** -edges[band]
        reach = x * (np.exp(-lam * lo_r) - np.exp(-lam * hi_r)) / lam
        sweeps.append(_u_norm(reach[None, :], u, u_norm)[0])
    value = float(max(np.max(const), max(sweeps)))
    return {"model": model.descriptor(), "u_norm": u_norm, "hypothesis_constant": hyp_const,
            "hypothesis_slope": float(fit.slope), "constant_probes": float(np.max(const)),
            "sweep_probes": float(max(sweeps)), "C": value}


def verify_linfty_convolution(u_exponent: float, u_norm: str = "interp", dims=DIMENSIONS,
                              check_hypothesis: bool = True) -> dict:
    """C along dimension doubling for U-weights lam^u_exponent on geometric models."""
    rows = []
    for d in dims:
        model = DiagonalModel.geometric(d)
        rows.append(linfty_convolution_constant(model, model.spectrum**u_exponent, u_norm,
                                                check_hypothesis))
    v = growth_verdict([r["C"] for r in rows])
    return {"u_exponent": u_exponent, "u_norm": u_norm, "dims": list(dims),
            "C": [r["C"] for r in rows], "rows": rows, **v}


# output -------------------------------------------------------------------------

def rows_to_csv(rows, columns) -> str:
    """CSV text with a fixed column order; floats use repr for byte-stable output."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_cell(r.get(c, "")) for c in columns])
    return buf.getvalue()


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (dict, list, tuple)):
        return json.dumps(v, sort_keys=True)
    return v
