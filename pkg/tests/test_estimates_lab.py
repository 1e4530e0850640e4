import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from katolab.diagonal_models import DiagonalModel
from katolab.errors import DomainError, FitUnreliable, HypothesisError
from katolab.estimates_lab import (
    ProbeFamily,
    admissibility_A1,
    admissibility_A2,
    control_sweep,
    decay_exponent,
    diagonal_decay_exponent,
    divergence_form_probes,
    fit_decay,
    growth_verdict,
    hardy_littlewood_apply,
    hardy_littlewood_bound_probe,
    hardy_littlewood_power_oracle,
    interpolation_inequality_check,
    linfty_convolution_constant,
    nonlinearity_decay,
    observation_sweep,
    product_integrate,
    product_matrix,
    resolvent_family_bound,
    rows_to_csv,
    verify_A3_convolution,
    verify_linfty_convolution,
)
from katolab.function_spaces import SpaceTag
from katolab.spectral_core import Grid
from katolab.time_spaces import TimeGrid


# verdicts and fits ---------------------------------------------------------------

@pytest.mark.parametrize("values,verdict", [
    ([1.0, 1.2, 1.5], "stable"),
    ([1.0, 5.0, 30.0], "unbounded"),
    ([1.0, 3.0, 4.0], "inconclusive"),
    ([0.0, 0.0], "stable"),
    ([1.0, np.inf], "unbounded"),
])
def test_growth_verdict(values, verdict):
    assert growth_verdict(values)["verdict"] == verdict


def test_fit_decay_recovers_power_law():
    t = np.geomspace(1e-3, 1e-1, 20)
    fit = fit_decay(t, 3.0 * t**-0.4, (t[0], t[-1]))
    assert fit.gamma == pytest.approx(0.4, abs=1e-12)
    assert fit.constant == pytest.approx(3.0, rel=1e-10)
    assert fit.r2 == pytest.approx(1.0)


def test_fit_decay_constant_series_has_zero_exponent():
    fit = fit_decay([0.1, 1.0, 10.0], [2.0, 2.0, 2.0], (0.1, 10.0))
    assert fit.gamma == 0.0 and fit.r2 == 1.0


def test_fit_decay_rejects_noise():
    rng = np.random.default_rng(0)
    t = np.geomspace(1e-3, 1e-1, 30)
    with pytest.raises(FitUnreliable):
        fit_decay(t, np.exp(rng.standard_normal(30)), (t[0], t[-1]))


def test_probe_family_needs_tags():
    with pytest.raises(DomainError):
        ProbeFamily([1, 2], ["one"])


# decay exponents -----------------------------------------------------------------

@pytest.mark.parametrize("q,target", [(4, 0.75), (8, 0.625)])
def test_nonlinearity_decay_planar(q, target):
    fit = nonlinearity_decay(2, q)
    assert fit.gamma == pytest.approx(target, abs=0.02)
    assert fit.r2 > 0.99


def test_nonlinearity_decay_spatial_coarse():
    fit = nonlinearity_decay(3, 6, N=32)
    assert fit.gamma == pytest.approx(0.75, abs=0.02)


def test_l2_to_l2_does_not_decay_before_the_smallest_scale():
    grid = Grid(2, 32)
    probes = divergence_form_probes(grid, [0.2, 0.5])
    fit = decay_exponent(SpaceTag("Lq", q=2), SpaceTag("Lq", q=2), probes, window=(1e-7, 1e-5))
    assert fit.gamma == pytest.approx(0.0, abs=1e-3)


@pytest.mark.parametrize("sigma", [0.2, 0.3, 0.5, 0.8])
def test_diagonal_decay_oracle(sigma):
    lam = 4.0 ** np.arange(12)
    fit = diagonal_decay_exponent(DiagonalModel(lam, lam**sigma))
    assert fit.gamma == pytest.approx(sigma, abs=0.03)


# Hardy-Littlewood operator -------------------------------------------------------

@pytest.mark.parametrize("a,gamma", [(0.0, 0.5), (0.3, 0.25), (-0.4, 0.7)])
def test_power_oracle(a, gamma):
    t = TimeGrid(1.0, 256, 2.0).nodes
    f = np.zeros_like(t)
    f[1:] = t[1:] ** a
    f[0] = 1.0 if a == 0 else (0.0 if a > 0 else np.inf)
    got = product_integrate(f, t, gamma, "power")[1:]
    np.testing.assert_allclose(got, hardy_littlewood_power_oracle(a, gamma, t[1:]), rtol=1e-8)


def test_linear_rule_exact_on_affine_inputs():
    grid = TimeGrid(2.0, 64, 2.0)
    t = grid.nodes
    got = hardy_littlewood_apply(1 + 2 * t, 0.5, grid)
    exact = hardy_littlewood_power_oracle(0, 0.5, t) + 2 * hardy_littlewood_power_oracle(1, 0.5, t)
    np.testing.assert_allclose(got, exact, rtol=1e-12, atol=1e-15)


def test_product_matrix_matches_linear_rule():
    rng = np.random.default_rng(3)
    t = TimeGrid(1.0, 40, 2.0).nodes
    f = rng.standard_normal(t.size)
    np.testing.assert_allclose(product_matrix(t, 0.3) @ f, product_integrate(f, t, 0.3),
                               rtol=1e-12, atol=1e-14)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 0.95), st.floats(-3, 3))
def test_linear_rule_is_linear(seed, gamma, scale):
    rng = np.random.default_rng(seed)
    t = TimeGrid(1.0, 30, 2.0).nodes
    f, g = rng.standard_normal((2, t.size))
    lhs = product_integrate(f + scale * g, t, gamma)
    rhs = product_integrate(f, t, gamma) + scale * product_integrate(g, t, gamma)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10)


@pytest.mark.parametrize("gamma", [0.0, 1.0, -0.2, 1.5])
def test_kernel_exponent_range(gamma):
    t = TimeGrid(1.0, 8).nodes
    with pytest.raises(DomainError):
        product_integrate(np.ones_like(t), t, gamma)


def test_power_rule_rejects_non_integrable_input():
    t = TimeGrid(1.0, 16).nodes
    f = np.full_like(t, np.inf)
    f[1:] = t[1:] ** -1.5
    with pytest.raises(DomainError):
        product_integrate(f, t, 0.5, "power")


@pytest.mark.parametrize("params,verdict", [
    ((2, 0.25, 4, 0.0, 0.5), "stable"),
    ((2, 0.0, 4, 0.0, 0.85), "unbounded"),
])
def test_bound_probe_verdicts(params, verdict):
    probe = hardy_littlewood_bound_probe(*params, half_widths=(2, 8, 14))
    assert probe.verdict == verdict
    assert probe.scaling_ok == (verdict == "stable")


# resolvent condition and admissibility -------------------------------------------

@pytest.mark.parametrize("p,alpha", [(np.inf, 0.25), (4, 0.1), (2, 0.2)])
def test_resolvent_critical_closed_form(p, alpha):
    theta = alpha + (0 if p == np.inf else 1 / p)
    model = DiagonalModel.geometric(64).with_observation(theta)
    res = resolvent_family_bound(model, alpha, p)
    expected = (1 - theta) ** (1 - theta) * theta**theta
    assert res.value == pytest.approx(expected, rel=1e-3)
    assert not res.at_edge


def test_resolvent_identity_observation_saturates_at_one():
    res = resolvent_family_bound(DiagonalModel.geometric(32), 0.0, np.inf)
    assert res.at_edge
    assert 0.99 < res.value < 1.0


def test_resolvent_supercritical_grows():
    vals = [resolvent_family_bound(DiagonalModel.geometric(d).with_observation(0.45), 0.25,
                                   np.inf).value for d in (64, 512)]
    assert vals[1] / vals[0] > 10


def test_resolvent_index_range():
    with pytest.raises(DomainError):
        resolvent_family_bound(DiagonalModel([1.0]), 0.5, 2)


def test_admissibility_zero_operators():
    model = DiagonalModel([1.0, 2.0], obs_weights=[0.0, 0.0], ctrl_weights=[0.0, 0.0])
    assert (admissibility_A1(model, 4, 0.1).lhs, admissibility_A1(model, 4, 0.1).rhs) == (0.0, 0.0)
    assert (admissibility_A2(model, 4, 0.0).lhs, admissibility_A2(model, 4, 0.0).rhs) == (0.0, 0.0)


def test_admissibility_index_ranges():
    model = DiagonalModel([1.0])
    with pytest.raises(DomainError):
        admissibility_A1(model, 2, 0.0)
    with pytest.raises(DomainError):
        admissibility_A2(model, 2, 0.0)


def test_scalar_observation_constant():
    # ||t^alpha e^{-t lam} c||_{L^p} = c lam^{-(alpha + 1/p)} (Gamma(alpha p + 1))^{1/p} / p^{alpha + 1/p}
    from scipy.special import gamma as gamma_fn
    lam, c, p, alpha = 5.0, 2.0, 4.0, 0.1
    model = DiagonalModel([lam], obs_weights=[c])
    got = admissibility_A1(model, p, alpha, probes=[[1.0]]).lhs
    expected = c * lam ** -(alpha + 1 / p) * gamma_fn(alpha * p + 1) ** (1 / p) / p ** (alpha + 1 / p)
    # node quadrature at 32 points per decade
    assert got == pytest.approx(expected, rel=1e-3)


@pytest.mark.parametrize("p,alpha", [(np.inf, 0.25), (4, 0.1)])
def test_observation_sweep_critical_and_shifted(p, alpha):
    dims = (64, 128, 256, 512)
    assert observation_sweep(p, alpha, 0.0, dims)["verdict"] == "jointly finite"
    assert observation_sweep(p, alpha, 0.2, dims)["verdict"] == "jointly divergent"


@pytest.mark.parametrize("p,alpha", [(4, 0.0), (8, 0.05)])
def test_control_sweep_critical_and_shifted(p, alpha):
    dims = (64, 128, 256, 512)
    assert control_sweep(p, alpha, 0.0, dims)["verdict"] == "jointly finite"
    assert control_sweep(p, alpha, 0.2, dims)["verdict"] == "jointly divergent"


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 10_000))
def test_interpolation_inequality_random_models(seed):
    model = DiagonalModel.random(np.random.default_rng(seed), 24).with_observation(0.2)
    out = interpolation_inequality_check(model, 4, 0.05, 8)
    assert out["holds"]


# convolution estimates -----------------------------------------------------------

def test_A3_balanced_exponents_stable():
    out = verify_A3_convolution(4, 0.25, 8, 0.125, 0.75, dims=(64, 512))
    assert out["identity_holds"] and out["bounded"] and out["consistent"]
    assert all(isinstance(v, float) for v in out["ratio_sup"])


def test_A3_unbalanced_exponents_unbounded():
    out = verify_A3_convolution(4, 0.25, 8, 0.125, 0.85, dims=(64, 512))
    assert not out["identity_holds"]
    assert out["verdict"] == "unbounded" and out["consistent"]


def test_linfty_convolution_lattice_space_stable():
    out = verify_linfty_convolution(1.0, "interp", dims=(64, 512))
    assert out["verdict"] == "stable"
    assert out["C"][-1] == pytest.approx(1.0, rel=0.05)


def test_linfty_convolution_weighted_l2_grows():
    out = verify_linfty_convolution(1.0, "l2", dims=(64, 512))
    assert out["C"][1] > 2 * out["C"][0]


def test_linfty_hypothesis_rejects_steeper_decay():
    model = DiagonalModel.geometric(64)
    with pytest.raises(HypothesisError):
        linfty_convolution_constant(model, model.spectrum**1.2)
    out = verify_linfty_convolution(1.2, "interp", dims=(64, 512), check_hypothesis=False)
    assert out["verdict"] == "unbounded"


def test_rows_to_csv_is_stable():
    rows = [{"a": 0.1, "b": "x", "c": [1, 2]}, {"a": 1 / 3, "b": "y"}]
    text = rows_to_csv(rows, ["a", "b", "c"])
    assert text == 'a,b,c\n0.1,x,"[1, 2]"\n0.3333333333333333,y,\n'
    assert text == rows_to_csv(rows, ["a", "b", "c"])
