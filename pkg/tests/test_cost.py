import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import RawMeasure, random_measure, rel_err
from oracles import central_difference
from otreg.cost import (Angular, CostFamily, CostSpec, cost_gradient_x, cost_pullback, eval_cost,
                        eval_cost_matrix)
from otreg.errors import AngularSingularity, DimensionMismatch

ALL_SPECS = [
    CostSpec(CostFamily.ADDITIVE, 0.7, 1, Angular.GEODESIC),
    CostSpec(CostFamily.ADDITIVE, 0.7, 1, Angular.CURRENTS),
    CostSpec(CostFamily.ADDITIVE, 0.7, 1, Angular.VARIFOLD),
    CostSpec(CostFamily.MULTIPLICATIVE, 1.0, 4, Angular.VARIFOLD),
    CostSpec(CostFamily.MULTIPLICATIVE, 0.5, 3, Angular.CURRENTS),
]


def test_defaults():
    spec = CostSpec()
    assert spec.family is CostFamily.MULTIPLICATIVE and spec.alpha == 1.0 and spec.k == 4


def test_hand_computed_values():
    a, b = np.array([0.0, 0.0]), np.array([3.0, 4.0])
    u, v = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    # perpendicular directions: s = 0
    assert eval_cost(CostSpec("additive", 2.0, 1, "geodesic"), (a, u), (b, v)) == pytest.approx(25 + 2 * (math.pi / 2) ** 2)
    assert eval_cost(CostSpec("additive", 2.0, 1, "currents"), (a, u), (b, v)) == pytest.approx(27.0)
    assert eval_cost(CostSpec("additive", 2.0, 1, "varifold"), (a, u), (b, v)) == pytest.approx(33.0)
    assert eval_cost(CostSpec("multiplicative", 1.0, 4), (a, u), (b, v)) == pytest.approx(50.0)
    # opposite directions are free for the varifold-like multiplicative cost
    assert eval_cost(CostSpec(), (a, u), (b, -u)) == pytest.approx(25.0)
    assert eval_cost(CostSpec("additive", 1.0, 1, "currents"), (a, u), (a, -u)) == pytest.approx(4.0)


def test_zero_on_diagonal_and_nonnegative(rng):
    mu = random_measure(rng, 12)
    for spec in ALL_SPECS:
        c = eval_cost_matrix(spec, mu, mu)
        assert np.all(c >= 0)
        np.testing.assert_allclose(np.diag(c), 0.0, atol=1e-8 if spec.angular is Angular.GEODESIC else 1e-14)


def test_matrix_matches_pointwise(rng):
    mu, nu = random_measure(rng, 4, 3), random_measure(rng, 5, 3)
    for spec in ALL_SPECS:
        c = eval_cost_matrix(spec, mu, nu)
        for i in range(4):
            for j in range(5):
                ref = eval_cost(spec, (mu.positions[i], mu.directions[i]), (nu.positions[j], nu.directions[j]))
                assert c[i, j] == pytest.approx(ref, rel=1e-13)


def test_gradient_matches_finite_differences(rng):
    for spec in ALL_SPECS:
        for _ in range(5):
            a, b = rng.normal(size=3), rng.normal(size=3)
            u, v = (w / np.linalg.norm(w) for w in rng.normal(size=(2, 3)))
            ga, gu = cost_gradient_x(spec, (a, u), (b, v))
            fa = central_difference(lambda x: eval_cost(spec, (x, u), (b, v)), a, 1e-6)
            fu = central_difference(lambda x: eval_cost(spec, (a, x), (b, v)), u, 1e-6)
            assert rel_err(ga, fa) < 1e-7
            assert rel_err(gu, fu) < 1e-6


def test_pullback_matches_pointwise_sum(rng):
    mu, nu = random_measure(rng, 4), random_measure(rng, 6)
    w = rng.uniform(0, 1, (4, 6))
    for spec in ALL_SPECS:
        gp, gd = cost_pullback(spec, mu, nu, w)
        for i in range(4):
            ref_p, ref_d = np.zeros(2), np.zeros(2)
            for j in range(6):
                ga, gu = cost_gradient_x(spec, (mu.positions[i], mu.directions[i]), (nu.positions[j], nu.directions[j]))
                ref_p += w[i, j] * ga
                ref_d += w[i, j] * gu
            np.testing.assert_allclose(gp[i], ref_p, rtol=1e-10, atol=1e-14)
            np.testing.assert_allclose(gd[i], ref_d, rtol=1e-10, atol=1e-14)


def test_geodesic_singularity_is_signalled():
    spec = CostSpec("additive", 1.0, 1, "geodesic")
    x = (np.zeros(2), np.array([1.0, 0.0]))
    with pytest.raises(AngularSingularity):
        cost_gradient_x(spec, x, (np.ones(2), np.array([1.0, 0.0])))
    mu = RawMeasure([[0.0, 0.0]], [[1.0, 0.0]], [1.0])
    with pytest.raises(AngularSingularity):
        cost_pullback(spec, mu, mu, np.ones((1, 1)))
    # a zero weight never touches the singular pair
    cost_pullback(spec, mu, mu, np.zeros((1, 1)))


def test_spec_validation():
    with pytest.raises(ValueError):
        CostSpec(alpha=-1.0)
    with pytest.raises(ValueError):
        CostSpec(k=3)  # varifold-like multiplicative needs even k
    with pytest.raises(ValueError):
        CostSpec(family="bogus")
    with pytest.raises(DimensionMismatch):
        eval_cost_matrix(CostSpec(), RawMeasure(np.zeros((1, 2)), [[1.0, 0.0]], [1.0]),
                         RawMeasure(np.zeros((1, 3)), [[1.0, 0.0, 0.0]], [1.0]))


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(ALL_SPECS),
    st.lists(st.floats(-3, 3), min_size=8, max_size=8),
)
def test_property_symmetry_and_invariances(spec, xs):
    a, b = np.array(xs[:2]), np.array(xs[2:4])
    u, v = np.array(xs[4:6]), np.array(xs[6:8])
    if np.linalg.norm(u) < 1e-3 or np.linalg.norm(v) < 1e-3:
        return
    u, v = u / np.linalg.norm(u), v / np.linalg.norm(v)
    c = eval_cost(spec, (a, u), (b, v))
    assert c >= 0
    assert eval_cost(spec, (b, v), (a, u)) == pytest.approx(c, rel=1e-12, abs=1e-12)
    # translation and rotation invariance
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    assert eval_cost(spec, (rot @ a + 1, rot @ u), (rot @ b + 1, rot @ v)) == pytest.approx(c, rel=1e-9, abs=1e-9)
    if spec.angular is Angular.VARIFOLD:
        assert eval_cost(spec, (a, -u), (b, v)) == pytest.approx(c, rel=1e-12, abs=1e-12)


def test_contract_examples(rng):
    a, b = np.array([0.2, 0.1]), np.array([-0.5, 0.7])
    d2 = float(np.sum((a - b) ** 2))
    u, w = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    for spec in ALL_SPECS:
        zero_alpha = CostSpec(spec.family, 0.0, spec.k, spec.angular)
        assert eval_cost(zero_alpha, (a, u), (b, w)) == pytest.approx(d2)
        ga, gu = cost_gradient_x(zero_alpha, (a, u), (b, w))
        np.testing.assert_allclose(ga, 2 * (a - b))
        np.testing.assert_array_equal(gu, 0.0)
    mult = CostSpec("multiplicative", 1.0, 4)
    assert eval_cost(mult, (a, u), (b, u)) == pytest.approx(d2)
    assert eval_cost(mult, (a, u), (b, w)) == pytest.approx(2 * d2)
    assert eval_cost(CostSpec("additive", 1.0, 1, "currents"), (a, u), (a, -u)) == pytest.approx(4.0)
    ga, gu = cost_gradient_x(mult, (a, u), (a, w))
    np.testing.assert_array_equal(ga, 0.0)
    np.testing.assert_array_equal(gu, 0.0)
    assert eval_cost_matrix(mult, random_measure(rng, 2), random_measure(rng, 3)).shape == (2, 3)
