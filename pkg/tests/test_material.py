import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viscodamage.material import (
    Penalty,
    PiecewisePolynomial,
    StiffnessTensor,
    apply_stiffness,
    coefficient_preset,
    extend_coefficient,
    material_preset,
    penalty_slope,
    penalty_value,
    subgradient_residual,
)

finite = st.floats(-50, 50, allow_nan=False)
betas = st.floats(1e-6, 0.999)
kinds = st.sampled_from(["moreau_yosida", "smooth_variant"])


def test_piecewise_evaluation_and_calculus():
    p = PiecewisePolynomial([0.0, 1.0], [[0.0], [0.0, 0.0, 1.0], [1.0, 2.0]])
    x = np.array([-1.0, 0.5, 2.0])
    np.testing.assert_allclose(p(x), [0.0, 0.25, 3.0])
    np.testing.assert_allclose(p.derivative()(x), [0.0, 1.0, 2.0])
    F = p.antiderivative(0.0, 0.0)
    assert F(0.0) == 0.0
    assert F(1.0) == pytest.approx(1.0 / 3.0)
    assert F(2.0) == pytest.approx(1.0 / 3.0 + 2.0)


def test_piecewise_rejects_bad_input():
    with pytest.raises(ValueError):
        PiecewisePolynomial([1.0, 0.0], [[0.0]] * 3)
    with pytest.raises(ValueError):
        PiecewisePolynomial([0.0], [[0.0]])


@given(x=finite)
def test_antiderivative_of_constant_is_linear(x):
    F = PiecewisePolynomial.constant(2.0).antiderivative(0.0, 1.0)
    assert F(x) == pytest.approx(1.0 + 2.0 * x, abs=1e-9)


def test_quadratic_extension_matches_worked_values():
    c1, c2 = extend_coefficient(coefficient_preset("quadratic"), 1.0)
    assert c1(2.0) == pytest.approx(3.0)
    assert c2(2.0) == pytest.approx(-1.0)
    assert c1(5.0) + c2(5.0) == pytest.approx(2.0)
    assert c1(-3.0) + c2(-3.0) == pytest.approx(0.0)


@pytest.mark.parametrize("name", ["quadratic", "constant", "cubic"])
def test_extension_properties(name):
    ct = coefficient_preset(name)
    c1, c2 = extend_coefficient(ct, 1.0)
    x = np.linspace(-10.0, 10.0, 4001)
    h = x[1] - x[0]
    d2 = lambda f: (f(x[2:]) - 2 * f(x[1:-1]) + f(x[:-2])) / h**2
    assert d2(c1).min() >= -1e-6
    assert d2(c2).max() <= 1e-6
    c = c1(x) + c2(x)
    assert c.min() >= -1e-12
    unit = (x >= 0) & (x <= 1)
    np.testing.assert_allclose(c[unit], ct(x[unit]), atol=1e-10)
    assert np.ptp(c[x <= 0]) < 1e-10
    assert np.ptp(c[x >= 2.0]) < 1e-10


@given(beta=betas, x=finite, kind=kinds)
def test_penalty_axioms_pointwise(beta, x, kind):
    p = Penalty(beta, kind)
    v = penalty_value(p, x)
    assert v >= 0.0
    if x <= 0:
        assert v == 0.0 and penalty_slope(p, x) == 0.0
    if kind == "moreau_yosida":
        assert v == max(x, 0.0) ** 2 / (2 * beta)


@given(b1=betas, b2=betas, x=finite, kind=kinds)
def test_penalty_ordering_in_beta(b1, b2, x, kind):
    lo, hi = sorted([b1, b2])
    assert penalty_value(Penalty(lo, kind), x) >= penalty_value(Penalty(hi, kind), x) - 1e-12


@settings(deadline=None)
@given(beta=betas, a=finite, b=finite, t=st.floats(0, 1), kind=kinds)
def test_penalty_convex(beta, a, b, t, kind):
    p = Penalty(beta, kind)
    mid = penalty_value(p, t * a + (1 - t) * b)
    chord = t * penalty_value(p, a) + (1 - t) * penalty_value(p, b)
    assert mid <= chord * (1 + 1e-12) + 1e-12


def test_smooth_variant_below_moreau_yosida_and_c1():
    x = np.linspace(-1, 1, 10001)
    my, sv = Penalty(0.1), Penalty(0.1, "smooth_variant")
    assert np.all(sv.value(x) <= my.value(x) + 1e-15)
    w = sv.width
    assert sv.slope(w * (1 - 1e-12)) == pytest.approx(sv.slope(w * (1 + 1e-12)), rel=1e-9)


@pytest.mark.parametrize("beta", [0.0, 1.0, -0.1])
def test_penalty_rejects_beta_outside_unit_interval(beta):
    with pytest.raises(ValueError):
        Penalty(beta)


def test_subgradient_residual_zero_iff_complementary():
    assert subgradient_residual(-0.5, 0.0) == 0.0
    assert subgradient_residual(0.0, 2.0) == 0.0
    assert subgradient_residual(0.1, 0.0) > 0
    assert subgradient_residual(-0.1, 1.0) > 0


def test_stiffness_isotropic_and_validation():
    C = StiffnessTensor.isotropic(1.0, 1.0, 2)
    e = np.array([[1.0, 0.0], [0.0, 0.0]])
    np.testing.assert_allclose(apply_stiffness(C, e), [[3.0, 0.0], [0.0, 1.0]])
    assert C.eta > 0
    bad = np.zeros((2, 2, 2, 2))
    bad[0, 0, 0, 0] = 1.0
    with pytest.raises(ValueError):
        StiffnessTensor(bad)


def test_material_preset_defaults():
    mat = material_preset("quadratic")
    assert mat.d_is_one
    assert mat.C.dim == 2
    assert material_preset("quadratic", dim=1).C.dim == 1
