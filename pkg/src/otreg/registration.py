"""Diffeomorphic registration energy, its gradient, and the descent loop.

The energy of momenta ``theta`` attached to the source vertices is::

    E(theta) = reg_weight * R(theta) + L(mu_theta, nu)

where ``mu_theta`` is the source shape lifted after shooting its vertices
along the geodesic generated by ``theta``.  The gradient goes backwards
through the same pipeline: fidelity gradients on the measure, pulled back to
vertices through the lifting, then to ``theta`` through the discrete flow.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .cost import CostSpec, eval_cost_matrix
from .deformation import FlowKernelSpec, regularization_energy, shoot, shoot_adjoint
from .errors import DimensionMismatch, NonFiniteState
from .measures import DiscreteMeasure, ShapeComplex, rebuild_measure, rebuild_measure_adjoint
from .ot import OtParams, mass_gradient, ot_gradients, ot_value, sinkhorn
from .rkhs import KernelSpec, rkhs_gradients, rkhs_value

log = logging.getLogger(__name__)


@dataclass
class FidelityEval:
    value: float
    stripped: float
    grad_masses: np.ndarray
    grad_positions: np.ndarray
    grad_directions: np.ndarray
    sinkhorn_iterations: int = 0
    converged: bool = True
    state: object = None


@dataclass(frozen=True)
class OtFidelity:
    """Regularized unbalanced OT fidelity.

    With ``rho = inf`` the source masses are rescaled to the target's total
    mass before solving, since the balanced problem is infeasible otherwise;
    the mass gradient accounts for that rescaling.
    """

    params: OtParams
    cost: CostSpec = CostSpec()

    kind = "ot"

    def __call__(self, mu: DiscreteMeasure, nu: DiscreteMeasure, warm=None) -> FidelityEval:
        c = eval_cost_matrix(self.cost, mu, nu)
        p, q = mu.masses, nu.masses
        scale = 1.0
        if self.params.balanced:
            scale = q.sum() / p.sum()
            p = p * scale
        state = sinkhorn(c, p, q, self.params, init=warm)
        if not state.converged:
            log.info("Sinkhorn stopped after %d iterations (update %.2e)",
                     state.iterations, state.final_update_norm)
        value = ot_value(c, p, q, state, self.params)
        if self.params.balanced:
            src = DiscreteMeasure(mu.positions, mu.directions, p)
            _, g_pos, g_dir = ot_gradients(self.cost, src, nu, state, self.params, allow_unconverged=True)
            u = mass_gradient(state.u, self.params)
            g_mass = scale * (u - np.dot(u, mu.masses) / mu.masses.sum())
        else:
            g_mass, g_pos, g_dir = ot_gradients(self.cost, mu, nu, state, self.params, allow_unconverged=True)
        return FidelityEval(value.regularized, value.stripped, g_mass, g_pos, g_dir,
                            state.iterations, state.converged, state)


@dataclass(frozen=True)
class RkhsFidelity:
    kernel: KernelSpec

    kind = "rkhs"

    def __call__(self, mu, nu, warm=None) -> FidelityEval:
        value = rkhs_value(self.kernel, mu, nu)
        g_mass, g_pos, g_dir = rkhs_gradients(self.kernel, mu, nu)
        return FidelityEval(value, value, g_mass, g_pos, g_dir)


class Method(str, enum.Enum):
    GD = "gd"
    LBFGS = "lbfgs"


@dataclass(frozen=True)
class OptimizerSpec:
    """Descent settings.

    The first trial step of every line search moves the largest momentum
    component by ``initial_step`` (gradient descent) or takes the unit
    quasi-Newton step (L-BFGS, after the first iteration).
    """

    method: Method = Method.LBFGS
    max_outer_iters: int = 100
    grad_tolerance: float = 1e-8
    lbfgs_memory: int = 10
    initial_step: float = 0.1
    shrink: float = 0.5
    c1: float = 1e-4
    max_backtracks: int = 40

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.max_outer_iters < 0 or int(self.max_outer_iters) != self.max_outer_iters:
            raise ValueError("optimizer.max_outer_iters must be a nonnegative integer")
        if not self.grad_tolerance >= 0:
            raise ValueError("optimizer.grad_tolerance must be >= 0")
        if self.lbfgs_memory < 1:
            raise ValueError("optimizer.lbfgs_memory must be >= 1")
        if not self.initial_step > 0:
            raise ValueError("optimizer.initial_step must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("optimizer.shrink must lie in (0, 1)")
        if not 0 < self.c1 < 1:
            raise ValueError("optimizer.c1 must lie in (0, 1)")
        if self.max_backtracks < 1:
            raise ValueError("optimizer.max_backtracks must be >= 1")


@dataclass(frozen=True)
class RegistrationProblem:
    source_shape: ShapeComplex
    target_measure: DiscreteMeasure
    fidelity: object
    flow: FlowKernelSpec = FlowKernelSpec()
    num_steps: int = 10
    reg_weight: float = 1.0
    optimizer: OptimizerSpec = OptimizerSpec()

    def __post_init__(self):
        if self.source_shape.dim != self.target_measure.dim:
            raise DimensionMismatch("source shape and target measure dimensions differ")
        if not self.reg_weight > 0:
            raise ValueError("deformation.reg_weight must be positive")
        if self.num_steps < 1:
            raise ValueError("flow.num_steps must be >= 1")


@dataclass
class Evaluation:
    energy: float
    gradient: np.ndarray | None
    regularization: float
    fidelity: FidelityEval
    deformation: object
    measure: DiscreteMeasure
    theta: np.ndarray = field(default=None, repr=False)


def evaluate(problem: RegistrationProblem, theta, warm=None, fidelity_override=None,
             gradient=True) -> Evaluation:
    """Energy, gradient and intermediate products at momenta ``theta``.

    With ``gradient=False`` the backward pass is skipped (``gradient`` is
    None); :func:`attach_gradient` completes it later without re-solving.
    """
    shape = problem.source_shape
    theta = np.asarray(theta, dtype=float)
    if theta.shape != shape.vertices.shape:
        raise DimensionMismatch(f"theta must have shape {shape.vertices.shape}")
    flow = shoot(problem.flow, shape.vertices, theta, problem.num_steps)
    mu = rebuild_measure(shape, flow.endpoint)
    fid = fidelity_override if fidelity_override is not None else problem.fidelity
    fe = fid(mu, problem.target_measure, warm=warm)
    reg, _ = regularization_energy(problem.flow, shape.vertices, theta)
    ev = Evaluation(problem.reg_weight * reg + fe.value, None, reg, fe, flow, mu, theta)
    return attach_gradient(problem, ev) if gradient else ev


def attach_gradient(problem: RegistrationProblem, ev: Evaluation) -> Evaluation:
    """Fill ``ev.gradient`` by the backward pass through lifting and flow."""
    if ev.gradient is not None:
        return ev
    shape, fe = problem.source_shape, ev.fidelity
    endpoint = ev.deformation.endpoint
    g_vertices = rebuild_measure_adjoint(shape, endpoint, fe.grad_positions, fe.grad_masses,
                                         fe.grad_directions)
    g_theta = shoot_adjoint(ev.deformation, problem.flow, g_vertices)
    _, g_reg = regularization_energy(problem.flow, shape.vertices, ev.theta)
    ev.gradient = g_theta + problem.reg_weight * g_reg
    return ev


def energy_and_gradient(problem: RegistrationProblem, theta, warm=None):
    ev = evaluate(problem, theta, warm=warm)
    return ev.energy, ev.gradient


HISTORY_COLUMNS = (
    "phase", "iteration", "energy", "grad_norm", "fidelity", "fidelity_stripped",
    "regularization", "sinkhorn_iterations", "sinkhorn_converged", "step", "wall_clock",
)


@dataclass
class History:
    rows: list = field(default_factory=list)
    converged: bool = False
    line_search_failed: bool = False
    message: str = ""
    final: object = field(default=None, repr=False)
    handoff_theta: object = field(default=None, repr=False)

    def energies(self, phase=None):
        return [r["energy"] for r in self.rows if phase is None or r["phase"] == phase]

    def extend(self, other: "History"):
        self.rows.extend(other.rows)
        self.converged = other.converged
        self.line_search_failed = self.line_search_failed or other.line_search_failed
        self.message = other.message


def _row(phase, it, ev: Evaluation, step, t0):
    return {
        "phase": phase,
        "iteration": it,
        "energy": ev.energy,
        "grad_norm": float(np.linalg.norm(ev.gradient)),
        "fidelity": ev.fidelity.value,
        "fidelity_stripped": ev.fidelity.stripped,
        "regularization": ev.regularization,
        "sinkhorn_iterations": ev.fidelity.sinkhorn_iterations,
        "sinkhorn_converged": ev.fidelity.converged,
        "step": step,
        "wall_clock": time.perf_counter() - t0,
    }


def _warm(ev):
    st = ev.fidelity.state
    return None if st is None else (st.u, st.v)


class _Lbfgs:
    def __init__(self, memory):
        self.memory = memory
        self.pairs = []

    def reset(self):
        self.pairs = []

    def update(self, s, y):
        sy = float(np.sum(s * y))
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            self.pairs.append((s, y, 1.0 / sy))
            if len(self.pairs) > self.memory:
                self.pairs.pop(0)

    def direction(self, g):
        q = g.copy()
        alphas = []
        for s, y, r in reversed(self.pairs):
            a = r * np.sum(s * q)
            alphas.append(a)
            q -= a * y
        s, y, _ = self.pairs[-1]
        q *= np.sum(s * y) / np.sum(y * y)
        for (s, y, r), a in zip(self.pairs, reversed(alphas)):
            b = r * np.sum(y * q)
            q += (a - b) * s
        return -q


def register(problem: RegistrationProblem, initial_theta=None, phase="main", fidelity=None):
    """Minimize the registration energy from ``initial_theta`` (zeros by default).

    Returns ``(theta, history)``.  ``history.rows`` holds one record per
    accepted iterate (iteration 0 is the starting point); if the line search
    cannot make progress the best iterate so far is returned with
    ``history.line_search_failed`` set.
    """
    opt = problem.optimizer
    t0 = time.perf_counter()
    theta = (np.zeros_like(problem.source_shape.vertices) if initial_theta is None
             else np.array(initial_theta, dtype=float))
    ev = evaluate(problem, theta, fidelity_override=fidelity)
    hist = History()
    hist.rows.append(_row(phase, 0, ev, 0.0, t0))
    lbfgs = _Lbfgs(opt.lbfgs_memory)

    def trial(th, warm):
        try:
            return evaluate(problem, th, warm=warm, fidelity_override=fidelity, gradient=False)
        except NonFiniteState:
            return None

    it = 0
    resolves = 0
    last_gd_step = 0.5
    while True:
        gnorm = float(np.linalg.norm(ev.gradient))
        if gnorm <= opt.grad_tolerance:
            if not ev.fidelity.converged and resolves < 5:
                resolves += 1
                ev = evaluate(problem, theta, warm=_warm(ev), fidelity_override=fidelity)
                continue
            hist.converged = ev.fidelity.converged
            hist.message = "gradient tolerance reached"
            break
        if it >= opt.max_outer_iters:
            hist.message = "iteration budget exhausted"
            break

        g = ev.gradient
        use_qn = opt.method is Method.LBFGS and lbfgs.pairs
        if use_qn:
            d = lbfgs.direction(g)
            slope = float(np.sum(g * d))
            if not slope < 0:
                lbfgs.reset()
                use_qn = False
        if not use_qn:
            d = -g * (opt.initial_step / float(np.max(np.abs(g))))
            slope = float(np.sum(g * d))

        accepted = None
        for attempt in range(2):
            # gradient steps resume near the last accepted length instead of from 1
            t = 1.0 if use_qn else min(1.0, 2.0 * last_gd_step)
            for _ in range(opt.max_backtracks):
                cand = trial(theta + t * d, _warm(ev))
                if cand is not None and cand.energy <= ev.energy + opt.c1 * t * slope:
                    accepted = cand
                    break
                t *= opt.shrink
            if accepted is not None or not use_qn:
                break
            # quasi-Newton direction failed: retry once along the scaled gradient
            lbfgs.reset()
            use_qn = False
            d = -g * (opt.initial_step / float(np.max(np.abs(g))))
            slope = float(np.sum(g * d))
        if accepted is None:
            hist.line_search_failed = True
            hist.message = "line search failed"
            break

        attach_gradient(problem, accepted)
        if not use_qn:
            last_gd_step = t
        step = t * d
        theta = theta + step
        if opt.method is Method.LBFGS:
            lbfgs.update(step, accepted.gradient - g)
        ev = accepted
        it += 1
        hist.rows.append(_row(phase, it, ev, t, t0))

    hist.final = ev
    return theta, hist


def register_two_step(problem: RegistrationProblem, coarse: OtParams, fine, fine_optimizer=None):
    """Coarse OT phase to reach the right basin, then a finer fidelity from there.

    ``fine`` is a :class:`KernelSpec` (RKHS fine phase) or :class:`OtParams`.
    The fine phase starts exactly at the coarse phase's momenta.
    """
    cost = problem.fidelity.cost if isinstance(problem.fidelity, OtFidelity) else CostSpec()
    coarse_problem = replace(problem, fidelity=OtFidelity(coarse, cost))
    theta, hist = register(coarse_problem, phase="coarse")
    fine_fid = RkhsFidelity(fine) if isinstance(fine, KernelSpec) else OtFidelity(fine, cost)
    fine_problem = replace(problem, fidelity=fine_fid,
                           optimizer=fine_optimizer or problem.optimizer)
    hist.handoff_theta = theta.copy()
    theta, fine_hist = register(fine_problem, initial_theta=theta, phase="fine")
    hist.extend(fine_hist)
    hist.final = fine_hist.final
    return theta, hist
