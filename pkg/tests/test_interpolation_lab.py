import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import beta, gamma

from katolab.diagonal_models import DiagonalModel
from katolab.errors import DomainError
from katolab.interpolation_lab import (
    RatioInterval,
    WeightedCouple,
    check_embedding_chain,
    check_reiteration,
    equivalence_ratios,
    interp_constant,
    k_functional,
    power_weighted_norm,
    real_interp_norm,
    resolvent_interp_norm,
    semigroup_interp_norm,
)

THETA_P = [(0.3, 1), (0.5, 2), (0.7, 3.5), (0.25, np.inf), (0.8, np.inf)]


def random_couple(rng, d):
    return WeightedCouple(np.exp(rng.uniform(-3, 3, d)), np.exp(rng.uniform(-3, 3, d)))


def test_couple_rejects_bad_weights():
    with pytest.raises(DomainError):
        WeightedCouple([1.0, 0.0], [1.0, 1.0])
    with pytest.raises(DomainError):
        WeightedCouple([1.0, np.inf], [1.0, 1.0])
    with pytest.raises(DomainError):
        WeightedCouple([1.0], [1.0, 2.0])


def test_k_functional_scalar():
    c = WeightedCouple([3.0], [0.5])
    t = np.array([0.1, 6.0, 100.0])
    np.testing.assert_allclose(k_functional(c, [-2.0], t), 2 * np.minimum(3.0, 0.5 * t))


def test_k_functional_saturates_to_first_norm():
    rng = np.random.default_rng(0)
    c = random_couple(rng, 12)
    x = rng.standard_normal(12)
    big = 1e3 * c.breakpoints.max()
    assert k_functional(c, x, big) == pytest.approx(np.linalg.norm(c.w0 * x), rel=1e-14)
    with pytest.raises(DomainError):
        k_functional(c, x, 0.0)


@pytest.mark.parametrize("seed", range(5))
def test_k_functional_concave_up_to_equivalence(seed):
    rng = np.random.default_rng(seed)
    c = random_couple(rng, 10)
    x = rng.standard_normal(10)
    t = np.geomspace(1e-4, 1e4, 300)
    t1, t2 = t[:-5], t[5:]
    mid = k_functional(c, x, 0.5 * (t1 + t2))
    avg = 0.5 * (k_functional(c, x, t1) + k_functional(c, x, t2))
    assert np.all(mid >= avg / np.sqrt(2))


@pytest.mark.parametrize("theta,p", THETA_P)
def test_real_interp_single_coordinate(theta, p):
    w0, w1 = np.array([1.0, 2.0, 5.0]), np.array([7.0, 0.1, 5.0])
    c = WeightedCouple(w0, w1)
    for i in range(3):
        x = np.zeros(3)
        x[i] = -1.5
        expected = interp_constant(theta, p) * w0[i] ** (1 - theta) * w1[i] ** theta * 1.5
        assert real_interp_norm(c, x, theta, p) == pytest.approx(expected, rel=1e-6)


def test_interp_constant_values():
    assert interp_constant(0.5, 1) == pytest.approx(4.0)
    assert interp_constant(0.5, 2) == pytest.approx(np.sqrt(2))
    assert interp_constant(0.3, np.inf) == 1.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 0.85), st.sampled_from([1, 2, 4, np.inf]))
def test_theta_monotone_when_second_weight_dominates(seed, theta, p):
    rng = np.random.default_rng(seed)
    w0 = np.exp(rng.uniform(-2, 2, 6))
    w1 = w0 * np.exp(rng.uniform(0, 3, 6))
    c = WeightedCouple(w0, w1)
    x = rng.standard_normal(6)
    lo = real_interp_norm(c, x, theta, p) / interp_constant(theta, p)
    hi = real_interp_norm(c, x, theta + 0.1, p) / interp_constant(theta + 0.1, p)
    assert hi >= lo * (1 - 1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 0.95))
def test_p_nesting_on_normalized_norms(seed, theta):
    rng = np.random.default_rng(seed)
    c = random_couple(rng, 8)
    x = rng.standard_normal(8)
    vals = [real_interp_norm(c, x, theta, p) / interp_constant(theta, p) for p in (1, 2, 4, np.inf)]
    assert all(b <= a * (1 + 1e-9) for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("seed", range(4))
def test_p2_equals_power_weighted_norm(seed):
    rng = np.random.default_rng(seed)
    c = random_couple(rng, 30)
    x = rng.standard_normal(30)
    theta = rng.uniform(0.1, 0.9)
    expected = interp_constant(theta, 2) * power_weighted_norm(c, x, theta)
    assert real_interp_norm(c, x, theta, 2) == pytest.approx(expected, rel=1e-6)


@pytest.mark.parametrize("theta", [0.01, 0.99])
def test_degenerate_theta_limits(theta):
    rng = np.random.default_rng(11)
    w0 = np.exp(rng.uniform(-1, 1, 20))
    w1 = w0 * np.exp(rng.uniform(-0.5, 0.5, 20))
    c = WeightedCouple(w0, w1)
    x = rng.standard_normal(20)
    edge = np.linalg.norm((w0 if theta < 0.5 else w1) * x)
    spread = np.max(np.abs(np.log(w1 / w0)))
    bound = min(theta, 1 - theta) * spread
    for p in (2, np.inf):
        normalized = real_interp_norm(c, x, theta, p) / interp_constant(theta, p)
        assert abs(np.log(normalized / edge)) <= bound + 1e-6


@pytest.mark.parametrize("theta,p", [(0.3, 1), (0.5, 2), (0.7, 3), (0.4, np.inf)])
@pytest.mark.parametrize("m", [1, 2])
def test_resolvent_scalar_beta_form(theta, p, m):
    lam = 3.7
    model = DiagonalModel([lam])
    if p == np.inf:
        const = (theta**theta * (1 - theta) ** (1 - theta)) ** m
    else:
        const = beta(theta * m * p, (1 - theta) * m * p) ** (1 / p)
    expected = lam ** (theta * m) * const * 2.0
    assert resolvent_interp_norm(model, [2.0], theta, p, m) == pytest.approx(expected, rel=1e-6)


@pytest.mark.parametrize("theta,p", [(0.3, 1), (0.5, 2), (0.7, 3), (0.4, np.inf)])
@pytest.mark.parametrize("m", [1, 2])
def test_semigroup_scalar_gamma_form(theta, p, m):
    lam = 0.02
    model = DiagonalModel([lam])
    a = m * (1 - theta)
    const = (a / np.e) ** a if p == np.inf else (gamma(a * p) * p ** (-a * p)) ** (1 / p)
    expected = lam ** (theta * m) * const
    assert semigroup_interp_norm(model, [1.0], theta, p, m) == pytest.approx(expected, rel=1e-6)


@pytest.mark.parametrize("theta,p,m", [(0.3, 2, 1), (0.6, 1, 2), (0.5, np.inf, 1)])
def test_resolvent_scaling(theta, p, m):
    rng = np.random.default_rng(5)
    model = DiagonalModel.random(rng, 40)
    doubled = DiagonalModel(2 * model.spectrum)
    x = rng.standard_normal(40)
    ratio = resolvent_interp_norm(doubled, x, theta, p, m) / resolvent_interp_norm(model, x, theta, p, m)
    assert ratio == pytest.approx(2 ** (theta * m), rel=1e-6)


def test_equivalence_stable_under_doubling():
    rng = np.random.default_rng(2)
    intervals = {}
    for d in (64, 512):
        acc = {}
        for _ in range(5):
            model = DiagonalModel.random(rng, d)
            for name, r in equivalence_ratios(model, rng.standard_normal((6, d)), 0.4, 3).items():
                iv = RatioInterval.of(r)
                acc[name] = iv if name not in acc else acc[name].union(iv)
        intervals[d] = acc
    for name in intervals[64]:
        assert intervals[64][name].drift(intervals[512][name]) < 2


def test_m_consistency_by_reiteration():
    # (X, X_2)_{theta/2,p} and (X, X_1)_{theta,p} are the same space
    rng = np.random.default_rng(9)
    ratios = []
    for d in (64, 512):
        model = DiagonalModel.random(rng, d)
        xs = rng.standard_normal((6, d))
        ratios.append(semigroup_interp_norm(model, xs, 0.6, 2, m=1)
                      / semigroup_interp_norm(model, xs, 0.3, 2, m=2))
    small, large = RatioInterval.of(ratios[0]), RatioInterval.of(ratios[1])
    assert small.drift(large) < 2


def test_embedding_chain_single_coordinate_constants():
    model = DiagonalModel([0.3, 4.0, 50.0])
    rep = check_embedding_chain(model, 1, 0, 2, np.eye(3))
    assert rep.passed
    assert rep.ratio_intervals["X_j/(eta,1)"]["lo"] == pytest.approx(0.25, rel=1e-6)
    assert rep.ratio_intervals["X_j/(eta,1)"]["hi"] == pytest.approx(0.25, rel=1e-6)
    assert rep.ratio_intervals["(eta,inf)/X_j"]["hi"] == pytest.approx(1.0, rel=1e-6)


def test_embedding_chain_zero_probe():
    model = DiagonalModel([1.0, 2.0])
    assert check_embedding_chain(model, 0, -1, 1, np.zeros((1, 2))).passed


@pytest.mark.parametrize("k,j,m", [(k, j, m) for k in range(-2, 3) for j in range(k + 1, 3)
                                   for m in range(j + 1, 3)])
def test_embedding_chain_random_models(k, j, m):
    rng = np.random.default_rng(100 + k + 3 * j + 7 * m)
    model = DiagonalModel.random(rng, 256)
    rep = check_embedding_chain(model, j, k, m, rng.standard_normal((20, 256)))
    assert rep.passed


def test_embedding_chain_rejects_order():
    with pytest.raises(DomainError):
        check_embedding_chain(DiagonalModel([1.0]), 0, 0, 1, [[1.0]])


@pytest.mark.parametrize("theta,q,p", [(0.5, 1, 2), (0.3, 2, 4), (0.7, 1, np.inf)])
def test_reiteration_one_dimensional(theta, q, p):
    rep = check_reiteration(DiagonalModel([7.0]), theta, q, p, [[1.0], [-3.0]])
    expected = interp_constant(theta, q) * interp_constant(1 - theta, p) / interp_constant(0.5, p)
    iv = rep.ratio_intervals["iterated/direct"]
    assert iv["lo"] == pytest.approx(expected, rel=1e-6)
    assert iv["hi"] == pytest.approx(expected, rel=1e-6)


def test_reiteration_aligned_probe_matches_scalar_constant():
    model = DiagonalModel(4.0 ** np.arange(8))
    rep = check_reiteration(model, 0.5, 1, 2, np.eye(8)[3:4])
    assert rep.ratio_intervals["iterated/direct"]["hi"] == pytest.approx(rep.constants["single_coordinate"], rel=1e-6)


def test_reiteration_geometric_spectrum_recorded_interval():
    rng = np.random.default_rng(0)
    model = DiagonalModel(4.0 ** np.arange(8))
    probes = np.vstack([np.eye(8), rng.standard_normal((4, 8))])
    iv = check_reiteration(model, 0.5, 1, 2, probes).ratio_intervals["iterated/direct"]
    # recorded on this probe set; lower end is the single-coordinate constant 4
    assert iv["lo"] == pytest.approx(4.0, rel=1e-6)
    assert iv["hi"] == pytest.approx(5.360232963996523, rel=1e-6)


def test_report_json_round_trip():
    rep = check_embedding_chain(DiagonalModel([1.0, 3.0]), 0, -1, 1, np.eye(2))
    data = json.loads(rep.to_json())
    assert data["check"] == "embedding_chain" and data["passed"] is True
    assert set(data["model"]) == {"label", "dim", "spectrum_range", "digest"}
