"""Real interpolation norms on diagonal models.

Every norm here is an integral ||phi||_{L^p((0, inf), dt/t)} of a function
built coordinatewise from a weighted l^2 vector.  The integral runs in
u = ln t over a log grid that includes the model breakpoints, with
Gauss-Legendre points inside each cell; outside the grid phi is continued as
a power law, which is exact for the K-functional and accurate to the size of
the margin for the resolvent and semigroup forms.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import gamma as gamma_fn

from .diagonal_models import DiagonalModel, log_grid
from .errors import DomainError

_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(4)


@dataclass(frozen=True)
class WeightedCouple:
    """The couple (l^2(w0), l^2(w1)); (X_k, X_m) of a diagonal model is w = lam^k, lam^m."""

    w0: np.ndarray
    w1: np.ndarray
    label: str = ""

    def __post_init__(self):
        w0 = np.asarray(self.w0, dtype=float).ravel()
        w1 = np.asarray(self.w1, dtype=float).ravel()
        if w0.shape != w1.shape or w0.size == 0:
            raise DomainError("couple weights must be non-empty and of equal length")
        for w in (w0, w1):
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise DomainError("couple weights must be positive and finite")
        object.__setattr__(self, "w0", w0)
        object.__setattr__(self, "w1", w1)

    @property
    def dim(self) -> int:
        return self.w0.size

    @classmethod
    def homogeneous(cls, model: DiagonalModel, k: float, m: float) -> "WeightedCouple":
        lam = model.spectrum
        return cls(lam**k, lam**m, f"(X_{k:g}, X_{m:g})")

    @property
    def breakpoints(self) -> np.ndarray:
        """The t at which min(w0_i, t w1_i) switches branch."""
        return self.w0 / self.w1


def interp_constant(theta: float, p: float) -> float:
    """c(theta, p) with ||t^-theta min(a, t b)||_{L^p(dt/t)} = c a^(1-theta) b^theta."""
    if p == np.inf:
        return 1.0
    return float((theta * (1.0 - theta) * p) ** (-1.0 / p))


def _check_theta_p(theta, p):
    if not (0 < theta < 1):
        raise DomainError(f"theta must lie in (0, 1), got {theta}")
    if not (1 <= p <= np.inf):
        raise DomainError(f"p must lie in [1, inf], got {p}")


def _as_probes(x, dim) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != dim:
        raise DomainError(f"vector length {arr.shape[1]} does not match dimension {dim}")
    return arr, single


def _cells(lo, hi, breaks, per_decade):
    nodes = np.union1d(log_grid(lo, hi, per_decade), breaks[(breaks > lo) & (breaks < hi)])
    u = np.log(nodes)
    mid, half = 0.5 * (u[1:] + u[:-1]), 0.5 * (u[1:] - u[:-1])
    pts = mid[:, None] + half[:, None] * _GAUSS_NODES[None, :]
    wts = half[:, None] * _GAUSS_WEIGHTS[None, :]
    return nodes, pts.ravel(), wts.ravel()


def dlog_norm(phi: Callable[[np.ndarray], np.ndarray], p: float, lo: float, hi: float,
              lo_exponent: float, hi_exponent: float, breaks=(), per_decade: int = 64
              ) -> np.ndarray:
    """||phi||_{L^p((0, inf), dt/t)} for a batch of non-negative functions.

    ``phi(t)`` maps an array of times of shape (T,) to values of shape (T, P).
    Below ``lo`` phi is continued as phi(lo) (t/lo)^lo_exponent, above ``hi``
    as phi(hi) (t/hi)^-hi_exponent; ``hi_exponent = inf`` means no tail.
    """
    breaks = np.asarray(breaks, dtype=float)
    nodes, upts, uwts = _cells(lo, hi, breaks, per_decade)
    at_nodes = phi(nodes)
    if p == np.inf:
        return _sup_norm(phi, nodes, at_nodes, upts, breaks)
    scale = np.max(at_nodes, axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    inner = ((phi(np.exp(upts)) / scale) ** p * uwts[:, None]).sum(axis=0)
    head = (at_nodes[0] / scale) ** p / (p * lo_exponent)
    tail = 0.0 if np.isinf(hi_exponent) else (at_nodes[-1] / scale) ** p / (p * hi_exponent)
    return scale * (inner + head + tail) ** (1.0 / p)


def _sup_norm(phi, nodes, at_nodes, upts, breaks):
    """Sample maximum refined by a parabola in u = ln t through the top three samples.

    The refinement is skipped when the maximum sits on a breakpoint, where
    phi has a kink and the parabola would overshoot.
    """
    where = np.concatenate([np.log(nodes), upts])
    order = np.argsort(where)
    u = where[order]
    vals = np.concatenate([at_nodes, phi(np.exp(upts))])[order]
    best = vals.max(axis=0)
    idx = vals.argmax(axis=0)
    kinks = np.log(breaks) if np.size(breaks) else np.zeros(0)
    out = best.copy()
    for col, i in enumerate(idx):
        if i == 0 or i == u.size - 1 or best[col] == 0:
            continue
        if kinks.size and np.min(np.abs(kinks - u[i])) < 1e-12:
            continue
        x0, x1, x2 = u[i - 1:i + 2]
        y0, y1, y2 = vals[i - 1:i + 2, col]
        denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
        a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
        b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
        if a < 0:
            xv = -b / (2 * a)
            if x0 <= xv <= x2:
                c = y1 - a * x1**2 - b * x1
                out[col] = max(best[col], c - b**2 / (4 * a))
    return out


def _multiplier_norm(sq_multiplier, xs, p, lo, hi, lo_exp, hi_exp, breaks, per_decade):
    """Batch norm of phi(t) = (sum_i m_i(t)^2 x_i^2)^(1/2) over probe rows of xs."""
    x2 = (xs**2).T

    def phi(t):
        return np.sqrt(np.maximum(sq_multiplier(t) @ x2, 0.0))

    return dlog_norm(phi, p, lo, hi, lo_exp, hi_exp, breaks, per_decade)


def k_functional(couple: WeightedCouple, x, t) -> np.ndarray:
    """(sum_i min(w0_i, t w1_i)^2 x_i^2)^(1/2), the coordinatewise form of K(t, x).

    Equivalent to the exact infimum with constant sqrt(2) for the l^2 couple.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("K-functional needs t > 0")
    x = np.asarray(x, dtype=float)
    flat = t.ravel()
    sq = np.minimum(couple.w0[None, :], flat[:, None] * couple.w1[None, :]) ** 2
    return np.sqrt(sq @ x**2).reshape(t.shape)


def real_interp_norm(couple: WeightedCouple, x, theta: float, p: float,
                     per_decade: int = 64):
    """||t^-theta K(t, x)||_{L^p(dt/t)}; x may be one vector or a (P, d) batch."""
    _check_theta_p(theta, p)
    xs, single = _as_probes(x, couple.dim)
    br = couple.breakpoints
    lo, hi = br.min() / 100.0, br.max() * 100.0

    def sq(t):
        return (np.minimum(couple.w0[None, :], t[:, None] * couple.w1[None, :])
                * t[:, None] ** -theta) ** 2

    out = _multiplier_norm(sq, xs, p, lo, hi, 1.0 - theta, theta, br, per_decade)
    return float(out[0]) if single else out


def power_weighted_norm(couple: WeightedCouple, x, theta: float):
    """(sum_i (w0_i^(1-theta) w1_i^theta x_i)^2)^(1/2), the p = 2 closed form up to c(theta, 2)."""
    xs, single = _as_probes(x, couple.dim)
    w = couple.w0 ** (1 - theta) * couple.w1**theta
    out = np.sqrt(((w[None, :] * xs) ** 2).sum(axis=1))
    return float(out[0]) if single else out


_MARGIN = 1e-9


def resolvent_interp_norm(model: DiagonalModel, x, theta: float, p: float, m: int = 1,
                          per_decade: int = 64):
    """||lam^(theta m) A^m (lam + A)^-m x||_{L^p(dlam/lam)}, a norm on (X, X_m)_{theta,p}."""
    _check_theta_p(theta, p)
    xs, single = _as_probes(x, model.dim)
    spec = model.spectrum

    def sq(lam):
        return (lam[:, None] ** (theta * m) * (spec[None, :] / (lam[:, None] + spec[None, :])) ** m) ** 2

    lo, hi = spec.min() * _MARGIN, spec.max() / _MARGIN
    out = _multiplier_norm(sq, xs, p, lo, hi, theta * m, (1 - theta) * m, spec, per_decade)
    return float(out[0]) if single else out


def semigroup_interp_norm(model: DiagonalModel, x, theta: float, p: float, m: int = 1,
                          per_decade: int = 64):
    """||t^(m(1-theta)) A^m T(t) x||_{L^p(dt/t)}, a norm on (X, X_m)_{theta,p}."""
    _check_theta_p(theta, p)
    xs, single = _as_probes(x, model.dim)
    spec = model.spectrum

    def sq(t):
        return (t[:, None] ** (m * (1 - theta)) * spec[None, :] ** m
                * np.exp(-t[:, None] * spec[None, :])) ** 2

    # e^{-50} is far below double precision relative to the peak
    lo, hi = _MARGIN / spec.max(), 50.0 / spec.min()
    out = _multiplier_norm(sq, xs, p, lo, hi, m * (1 - theta), np.inf, 1.0 / spec, per_decade)
    return float(out[0]) if single else out


def resolvent_scalar_constant(theta: float, p: float, m: int = 1) -> float:
    """Single-coordinate value of the resolvent form divided by lam^(theta m) |x|."""
    if p == np.inf:
        return float(theta**theta * (1 - theta) ** (1 - theta)) ** m
    return float(beta_fn(theta * m * p, (1 - theta) * m * p) ** (1.0 / p))


def semigroup_scalar_constant(theta: float, p: float, m: int = 1) -> float:
    """Single-coordinate value of the semigroup form divided by lam^(theta m) |x|."""
    a = m * (1 - theta)
    if p == np.inf:
        return float((a / np.e) ** a)
    return float((gamma_fn(a * p) * p ** (-a * p)) ** (1.0 / p))


# reports ------------------------------------------------------------------------

@dataclass
class RatioInterval:
    lo: float
    hi: float

    @classmethod
    def of(cls, ratios) -> "RatioInterval":
        r = np.asarray(ratios, dtype=float)
        return cls(float(r.min()), float(r.max()))

    def drift(self, other: "RatioInterval") -> float:
        """Largest factor by which an endpoint moves between the two intervals."""
        pairs = [(self.lo, other.lo), (self.hi, other.hi)]
        return float(max(max(a / b, b / a) for a, b in pairs))

    def union(self, other: "RatioInterval") -> "RatioInterval":
        return RatioInterval(min(self.lo, other.lo), max(self.hi, other.hi))


@dataclass
class InterpReport:
    check: str
    model: dict
    parameters: dict
    ratio_intervals: dict
    passed: bool
    constants: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _norms_for_check(model, x, theta, p):
    return {
        "k_functional": real_interp_norm(WeightedCouple.homogeneous(model, 0, 1), x, theta, p),
        "resolvent": resolvent_interp_norm(model, x, theta, p),
        "semigroup": semigroup_interp_norm(model, x, theta, p),
    }


def equivalence_ratios(model: DiagonalModel, probes, theta: float, p: float) -> dict:
    """Per-probe ratios between the three realizations of the (X, X_1)_{theta,p} norm."""
    n = _norms_for_check(model, probes, theta, p)
    return {
        "resolvent/k_functional": n["resolvent"] / n["k_functional"],
        "semigroup/k_functional": n["semigroup"] / n["k_functional"],
        "semigroup/resolvent": n["semigroup"] / n["resolvent"],
    }


def check_embedding_chain(model: DiagonalModel, j: int, k: int, m: int, probes,
                          tol: float = 1e-6) -> InterpReport:
    """(X_k, X_m)_{eta,1} -> X_j -> (X_k, X_m)_{eta,inf} with eta = (j-k)/(m-k).

    With the coordinatewise K-functional the sharp constants are
    ||x||_{X_j} <= eta(1-eta) ||x||_{eta,1} and ||x||_{eta,inf} <= ||x||_{X_j},
    both attained on single coordinates.
    """
    if not (k < j < m):
        raise DomainError(f"need k < j < m, got ({k}, {j}, {m})")
    xs, _ = _as_probes(probes, model.dim)
    eta = (j - k) / (m - k)
    couple = WeightedCouple.homogeneous(model, k, m)
    n1 = real_interp_norm(couple, xs, eta, 1)
    ninf = real_interp_norm(couple, xs, eta, np.inf)
    nj = np.linalg.norm(model.spectrum[None, :] ** j * xs, axis=1)
    nonzero = nj > 0
    lower = nj[nonzero] / n1[nonzero]
    upper = ninf[nonzero] / nj[nonzero]
    c_lower, c_upper = eta * (1 - eta), 1.0
    passed = bool(np.all(lower <= c_lower * (1 + tol)) and np.all(upper <= c_upper * (1 + tol)))
    if not np.any(nonzero):
        passed = bool(np.all(n1 == 0) and np.all(ninf == 0))
        lower = upper = np.zeros(1)
    return InterpReport(
        "embedding_chain", model.descriptor(), {"j": j, "k": k, "m": m, "eta": eta},
        {"X_j/(eta,1)": asdict(RatioInterval.of(lower)),
         "(eta,inf)/X_j": asdict(RatioInterval.of(upper))},
        passed, {"X_j/(eta,1)": c_lower, "(eta,inf)/X_j": c_upper})


def _prefix_suffix_norms(couple: WeightedCouple, x: np.ndarray, order, theta, q, suffix):
    """Interpolation norms of x restricted to every prefix (or suffix) of ``order``."""
    d = couple.dim
    xo = x[order]
    restricted = np.zeros((d + 1, d))
    for s in range(d + 1):
        if suffix:
            restricted[s, s:] = xo[s:]
        else:
            restricted[s, :s] = xo[:s]
    reordered = WeightedCouple(couple.w0[order], couple.w1[order])
    nonzero = np.any(restricted != 0, axis=1)
    out = np.zeros(d + 1)
    if np.any(nonzero):
        out[nonzero] = real_interp_norm(reordered, restricted[nonzero], theta, q)
    return out


def reiterated_norm(model: DiagonalModel, x, theta: float, q: float, p: float) -> float:
    """Norm of ((X_-1, X)_{theta,q}, (X, X_1)_{theta,q})_{1-theta,p}.

    The outer K-functional uses the split x0 = x on {lam >= 1/t},
    x1 = x on {lam < 1/t}, the coordinatewise optimum for the scalar weights
    of the two inner spaces; each piece is measured in its inner norm.
    """
    x = np.asarray(x, dtype=float)
    lam = model.spectrum
    order = np.argsort(lam)
    lam_sorted = lam[order]
    low = WeightedCouple(lam**-1.0, np.ones_like(lam))
    high = WeightedCouple(np.ones_like(lam), lam)
    y0_suffix = _prefix_suffix_norms(low, x, order, theta, q, suffix=True)
    y1_prefix = _prefix_suffix_norms(high, x, order, theta, q, suffix=False)
    outer = 1.0 - theta

    def phi(t):
        split = np.searchsorted(lam_sorted, 1.0 / t, side="left")
        return (t ** -outer * (y0_suffix[split] + t * y1_prefix[split]))[:, None]

    br = 1.0 / lam_sorted
    val = dlog_norm(phi, p, br.min() / 100.0, br.max() * 100.0, 1.0 - outer, outer, br)
    return float(val[0])


def check_reiteration(model: DiagonalModel, theta: float, q: float, p: float, probes
                      ) -> InterpReport:
    """Ratio of the reiterated norm to the direct (X_-1, X_1)_{1/2,p} norm over probes."""
    _check_theta_p(theta, p)
    xs, _ = _as_probes(probes, model.dim)
    direct = real_interp_norm(WeightedCouple.homogeneous(model, -1, 1), xs, 0.5, p)
    iterated = np.array([reiterated_norm(model, x, theta, q, p) for x in xs])
    ratios = iterated / direct
    scalar = interp_constant(theta, q) * interp_constant(1 - theta, p) / interp_constant(0.5, p)
    return InterpReport(
        "reiteration", model.descriptor(), {"theta": theta, "q": q, "p": _num(p)},
        {"iterated/direct": asdict(RatioInterval.of(ratios))},
        bool(np.all(np.isfinite(ratios))), {"single_coordinate": scalar})


def family_study(seed: int = 0, count: int = 100, dims=(64, 512), theta: float = 0.4,
                 p: float = 3.0, probes_per_model: int = 6, chain=(1, 0, 2),
                 reiteration=(0.5, 1.0, 2.0), reiteration_probes: int = 2,
                 spectrum_range=(1e-3, 1e3)) -> dict:
    """Ratio intervals of the three (theta, p)-norms over a random model family.

    Model i at dimension d is drawn from the stream seeded by (seed, i, d).
    Intervals are taken over all models and probes at each dimension; a
    pairwise ratio is "stable" when no endpoint moves by 2x or more between
    the smallest and largest dimension.  The embedding chain and the
    reiteration ratio are measured on the same models.
    """
    lo, hi = spectrum_range
    equiv, reit = {}, {}
    chain_ok = True
    for d in dims:
        acc, r_acc = {}, None
        for i in range(count):
            rng = np.random.default_rng([seed, i, d])
            model = DiagonalModel.random(rng, d, lo, hi)
            xs = rng.standard_normal((probes_per_model, d))
            for name, r in equivalence_ratios(model, xs, theta, p).items():
                iv = RatioInterval.of(r)
                acc[name] = acc[name].union(iv) if name in acc else iv
            chain_ok &= check_embedding_chain(model, *chain, xs).passed
            rep = check_reiteration(model, *reiteration, xs[:reiteration_probes])
            iv = RatioInterval(**rep.ratio_intervals["iterated/direct"])
            r_acc = iv if r_acc is None else r_acc.union(iv)
        equiv[d], reit[d] = acc, r_acc
    first, last = dims[0], dims[-1]
    drifts = {name: equiv[first][name].drift(equiv[last][name]) for name in equiv[first]}
    reit_drift = reit[first].drift(reit[last])
    scalar = interp_constant(reiteration[0], reiteration[1]) \
        * interp_constant(1 - reiteration[0], reiteration[2]) / interp_constant(0.5, reiteration[2])
    return {
        "parameters": {"seed": seed, "count": count, "dims": list(dims), "theta": theta,
                       "p": _num(p), "probes_per_model": probes_per_model, "chain": list(chain),
                       "reiteration": [_num(v) for v in reiteration],
                       "spectrum_range": list(spectrum_range)},
        "equivalence": {str(d): {k: asdict(v) for k, v in equiv[d].items()} for d in dims},
        "equivalence_drift": drifts,
        "equivalence_stable": bool(all(v < 2 for v in drifts.values())),
        "embedding_chain_passed": bool(chain_ok),
        "reiteration": {str(d): asdict(reit[d]) for d in dims},
        "reiteration_drift": reit_drift,
        "reiteration_single_coordinate": scalar,
        "reiteration_stable": bool(reit_drift < 2 and reit[last].lo >= scalar * (1 - 1e-6)),
    }


def _num(v):
    return "inf" if v == np.inf else v
