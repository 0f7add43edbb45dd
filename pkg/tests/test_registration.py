import math
from dataclasses import replace

import numpy as np
import pytest

from conftest import rel_err
from oracles import central_difference
from otreg.cost import CostSpec
from otreg.deformation import FlowKernelSpec
from otreg.errors import DimensionMismatch
from otreg.measures import ShapeComplex, ShapeKind, lift_shape, polyline_cells
from otreg.ot import OtParams
from otreg.registration import (OptimizerSpec, OtFidelity, RegistrationProblem, RkhsFidelity, energy_and_gradient,
                                evaluate, register, register_two_step)
from otreg.rkhs import KernelSpec
from otreg.synthetic import translated_squares

FLOW = FlowKernelSpec(((1.0, 0.2), (0.5, 0.5)))


def small_pair(rng, n=7):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    src = 0.3 * np.stack([np.cos(t), np.sin(t)], 1) + 0.5
    tgt = src * np.array([1.2, 0.8]) + rng.normal(scale=0.02, size=src.shape) - 0.05
    cells = polyline_cells([n], [True])
    return ShapeComplex(src, cells, ShapeKind.CURVE2D), lift_shape(ShapeComplex(tgt, cells, ShapeKind.CURVE2D))


FIDELITIES = [
    OtFidelity(OtParams(0.01, 0.5, 100000, 1e-13)),
    OtFidelity(OtParams(0.01, math.inf, 100000, 1e-13), CostSpec("additive", 0.5, 1, "currents")),
    RkhsFidelity(KernelSpec(0.15)),
]


@pytest.mark.parametrize("fid", FIDELITIES, ids=["ot", "ot_balanced", "rkhs"])
def test_energy_gradient_matches_finite_differences(rng, fid):
    shape, nu = small_pair(rng)
    problem = RegistrationProblem(shape, nu, fid, FLOW, reg_weight=0.1)
    theta = 0.05 * rng.normal(size=shape.vertices.shape)
    _, grad = energy_and_gradient(problem, theta)
    fd = central_difference(lambda th: energy_and_gradient(problem, th)[0], theta, 1e-6)
    assert rel_err(grad, fd) < 1e-5


def test_energy_decomposition(rng):
    shape, nu = small_pair(rng)
    problem = RegistrationProblem(shape, nu, FIDELITIES[0], FLOW, reg_weight=0.3)
    ev = evaluate(problem, 0.05 * rng.normal(size=shape.vertices.shape))
    assert ev.energy == pytest.approx(0.3 * ev.regularization + ev.fidelity.value)
    assert ev.fidelity.converged and ev.fidelity.sinkhorn_iterations > 0
    zero = evaluate(problem, np.zeros_like(shape.vertices))
    assert zero.regularization == 0.0
    np.testing.assert_array_equal(zero.deformation.endpoint, shape.vertices)


def test_warm_start_gives_same_energy(rng):
    shape, nu = small_pair(rng)
    problem = RegistrationProblem(shape, nu, OtFidelity(OtParams(0.002, 0.5)), FLOW)
    theta = 0.05 * rng.normal(size=shape.vertices.shape)
    cold = evaluate(problem, theta)
    warm = evaluate(problem, theta * 1.01, warm=(cold.fidelity.state.u, cold.fidelity.state.v))
    again = evaluate(problem, theta * 1.01)
    assert warm.energy == pytest.approx(again.energy, rel=1e-6)
    assert warm.fidelity.sinkhorn_iterations < again.fidelity.sinkhorn_iterations


@pytest.mark.parametrize("fid,method", [
    (OtFidelity(OtParams(0.03)), "lbfgs"),
    (OtFidelity(OtParams(1e-3, 1.0)), "lbfgs"),
    (RkhsFidelity(KernelSpec(0.3, 0)), "lbfgs"),
    (RkhsFidelity(KernelSpec(0.3, 0)), "gd"),
], ids=["ot_balanced", "ot", "rkhs", "rkhs_gd"])
def test_translated_squares_are_recovered(fid, method):
    src, tgt = translated_squares(0)
    opt = OptimizerSpec(method=method, max_outer_iters=40 if method == "lbfgs" else 150)
    problem = RegistrationProblem(src, lift_shape(tgt), fid, reg_weight=1e-3, optimizer=opt)
    theta, hist = register(problem)
    assert np.abs(hist.final.deformation.endpoint - tgt.vertices).max() < 0.01
    energies = hist.energies()
    assert np.all(np.diff(energies) <= 0)
    assert [r["iteration"] for r in hist.rows] == list(range(len(hist.rows)))
    if hist.line_search_failed:
        # balanced Sinkhorn converges slowly once the plan is nearly a permutation, so the
        # energy is only resolved to about the solver tolerance near the optimum
        assert fid.kind == "ot" and fid.params.balanced
        assert energies[-1] - energies[0] < 0


def test_history_and_gradient_stop(rng):
    shape, nu = small_pair(rng)
    opt = OptimizerSpec(max_outer_iters=500, grad_tolerance=1e-4)
    problem = RegistrationProblem(shape, nu, RkhsFidelity(KernelSpec(0.2)), FLOW, reg_weight=0.1, optimizer=opt)
    theta, hist = register(problem)
    assert hist.converged and hist.message == "gradient tolerance reached"
    assert hist.rows[-1]["grad_norm"] <= 1e-4
    assert hist.rows[0]["energy"] > hist.rows[-1]["energy"]
    np.testing.assert_allclose(hist.final.gradient, energy_and_gradient(problem, theta)[1])


def test_zero_budget_returns_start(rng):
    shape, nu = small_pair(rng)
    problem = RegistrationProblem(shape, nu, RkhsFidelity(KernelSpec(0.2)), FLOW,
                                  optimizer=OptimizerSpec(max_outer_iters=0))
    theta, hist = register(problem)
    assert np.all(theta == 0) and len(hist.rows) == 1
    assert hist.message == "iteration budget exhausted"


def test_two_step_hands_off_coarse_momenta(rng):
    shape, nu = small_pair(rng)
    opt = OptimizerSpec(max_outer_iters=8)
    problem = RegistrationProblem(shape, nu, RkhsFidelity(KernelSpec(0.1)), FLOW, reg_weight=0.1, optimizer=opt)
    theta, hist = register_two_step(problem, OtParams(0.05, 0.5), KernelSpec(0.1))
    phases = [r["phase"] for r in hist.rows]
    n_coarse = phases.count("coarse")
    assert phases == ["coarse"] * n_coarse + ["fine"] * (len(phases) - n_coarse)
    # the fine phase starts at the coarse result
    coarse_end = evaluate(problem, hist.handoff_theta)
    assert hist.rows[n_coarse]["energy"] == pytest.approx(coarse_end.energy, rel=1e-12)
    assert np.all(np.diff(hist.energies("fine")) <= 0)
    assert hist.final.fidelity.value == pytest.approx(evaluate(problem, theta).fidelity.value)


def test_two_step_with_empty_coarse_phase_equals_plain_run(rng):
    shape, nu = small_pair(rng)
    fine_opt = OptimizerSpec(max_outer_iters=6)
    problem = RegistrationProblem(shape, nu, RkhsFidelity(KernelSpec(0.1)), FLOW,
                                  optimizer=OptimizerSpec(max_outer_iters=0))
    theta2, _ = register_two_step(problem, OtParams(0.05, 0.5), KernelSpec(0.1), fine_optimizer=fine_opt)
    theta1, _ = register(replace(problem, optimizer=fine_opt))
    np.testing.assert_array_equal(theta1, theta2)


def test_validation(rng):
    shape, nu = small_pair(rng)
    with pytest.raises(ValueError):
        RegistrationProblem(shape, nu, FIDELITIES[2], reg_weight=0.0)
    with pytest.raises(DimensionMismatch):
        evaluate(RegistrationProblem(shape, nu, FIDELITIES[2]), np.zeros((3, 2)))
    for bad in (dict(method="newton"), dict(shrink=1.0), dict(c1=0.0), dict(max_outer_iters=-1),
                dict(initial_step=0.0), dict(lbfgs_memory=0)):
        with pytest.raises(ValueError):
            OptimizerSpec(**bad)


def test_identity_is_stationary_for_identical_shapes():
    src, _ = translated_squares(0)
    fid = OtFidelity(OtParams(0.01, math.inf, 200000, 1e-10))
    problem = RegistrationProblem(src, lift_shape(src), fid)
    ev = evaluate(problem, np.zeros_like(src.vertices))
    assert ev.fidelity.converged
    assert np.linalg.norm(ev.gradient) < 1e-5
    theta, hist = register(problem)
    assert len(hist.rows) - 1 <= 1
    assert hist.final.energy == pytest.approx(ev.fidelity.value, abs=1e-9)


def test_gradient_is_linear_in_the_fidelity_gradient(rng):
    shape, nu = small_pair(rng)

    class ZeroGradient:
        kind = "zero"

        def __call__(self, mu, nu, warm=None):
            fe = RkhsFidelity(KernelSpec(0.2))(mu, nu)
            fe.grad_masses[:] = 0
            fe.grad_positions[:] = 0
            fe.grad_directions[:] = 0
            return fe

    problem = RegistrationProblem(shape, nu, ZeroGradient(), FLOW, reg_weight=0.7)
    theta = 0.05 * rng.normal(size=shape.vertices.shape)
    ev = evaluate(problem, theta)
    # only the regularization term is left: reg_weight * 2 K(q0) theta
    k = FLOW.matrix(shape.vertices, shape.vertices)
    np.testing.assert_allclose(ev.gradient, 0.7 * 2 * k @ theta, rtol=1e-12)


def test_warm_and_cold_fidelity_agree_along_a_run(rng):
    shape, nu = small_pair(rng)
    params = OtParams(0.002, 0.5, 100000)
    problem = RegistrationProblem(shape, nu, OtFidelity(params), FLOW, reg_weight=0.1,
                                  optimizer=OptimizerSpec(max_outer_iters=1))
    theta = None
    warm = None
    for _ in range(3):
        theta, hist = register(problem, initial_theta=theta)
        st = hist.final.fidelity.state
        cold = evaluate(problem, theta)
        assert abs(hist.final.fidelity.value - cold.fidelity.value) <= 10 * params.tolerance
        if warm is not None:
            again = evaluate(problem, theta, warm=warm)
            assert abs(again.fidelity.value - cold.fidelity.value) <= 10 * params.tolerance
        warm = (st.u, st.v)


def test_two_step_with_empty_fine_phase_equals_coarse_run(rng):
    shape, nu = small_pair(rng)
    problem = RegistrationProblem(shape, nu, RkhsFidelity(KernelSpec(0.1)), FLOW,
                                  optimizer=OptimizerSpec(max_outer_iters=5))
    coarse = OtParams(0.05, 0.5)
    theta2, hist = register_two_step(problem, coarse, KernelSpec(0.1),
                                     fine_optimizer=OptimizerSpec(max_outer_iters=0))
    theta1, _ = register(replace(problem, fidelity=OtFidelity(coarse)))
    np.testing.assert_array_equal(theta1, theta2)
    np.testing.assert_array_equal(hist.handoff_theta, theta2)
