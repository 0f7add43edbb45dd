"""Entropy-regularized unbalanced optimal transport.

Solves, for a cost matrix ``C`` and nonnegative masses ``p``, ``q``::

    min_{gamma >= 0}  <C, gamma> - eps * H(gamma)
                      + rho * KL(gamma 1 | p) + rho * KL(gamma^T 1 | q)

with ``H(g) = -sum g (log g - 1)`` and ``KL(h|p) = sum h log(h/p) - h + p``.
The optimal plan is ``gamma = exp((u_i + v_j - C_ij) / eps)`` for dual
potentials ``(u, v)`` computed by log-domain generalized Sinkhorn iterations.
``rho = inf`` gives the balanced problem (hard marginal constraints).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cost import CostSpec, cost_pullback
from .errors import MassMismatch, NotConverged, ZeroMass


@dataclass(frozen=True)
class OtParams:
    """Parameters of the regularized transport problem.

    ``epsilon`` and ``rho`` are in cost units (squared distances for the
    quadratic costs used here). ``tolerance`` defaults to ``1e-6 * epsilon``.
    """

    epsilon: float
    rho: float = math.inf
    max_iters: int = 10000
    tolerance: float | None = None

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError("epsilon must be a positive finite number")
        if not self.rho > 0:
            raise ValueError("rho must be positive or inf")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError("max_iters must be a positive integer")
        if self.tolerance is None:
            object.__setattr__(self, "tolerance", 1e-6 * self.epsilon)
        elif not self.tolerance > 0:
            raise ValueError("tolerance must be positive")

    @property
    def balanced(self) -> bool:
        return math.isinf(self.rho)

    @property
    def lam(self) -> float:
        """Damping factor ``rho / (rho + epsilon)`` of the dual updates."""
        return 1.0 if self.balanced else self.rho / (self.rho + self.epsilon)


@dataclass
class TransportState:
    u: np.ndarray
    v: np.ndarray
    plan: np.ndarray
    iterations: int
    converged: bool
    final_update_norm: float
    update_norms: list = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class FidelityValue:
    regularized: float
    stripped: float


def logsumexp(x, axis):
    """Max-shifted log-sum-exp; rows that are entirely ``-inf`` reduce to ``-inf``."""
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.sum(np.exp(x - m), axis=axis)) + np.squeeze(m, axis=axis)


def _log_masses(m):
    with np.errstate(divide="ignore"):
        return np.log(m)


def log_plan(cost, u, v, epsilon):
    return (u[:, None] + v[None, :] - cost) / epsilon


def sinkhorn(cost, p, q, params: OtParams, init=None, strict=False) -> TransportState:
    """Generalized Sinkhorn iterations in the log domain.

    Each iteration updates ``u`` then ``v``::

        u <- lam*u + eps*lam*log(p) - eps*lam*LSE_j((u_i + v_j - C_ij)/eps)
        v <- lam*v + eps*lam*log(q) - eps*lam*LSE_i((u_i + v_j - C_ij)/eps)

    and stops once the sup-norm of the ``u`` update is below
    ``params.tolerance``. The ``lam*u`` terms cancel against the ``u`` inside
    the log-sum-exp; they are cancelled analytically here so that zero-mass
    Diracs (``log 0 = -inf``) are excluded exactly instead of producing NaNs.

    Parameters
    ----------
    cost : (I, J) array
    p, q : (I,) and (J,) nonnegative arrays with positive totals
    params : OtParams
    init : optional (u, v) warm start, defaults to zeros
    strict : raise :class:`NotConverged` instead of returning an unconverged state

    Returns
    -------
    TransportState
    """
    cost = np.asarray(cost, dtype=float)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if cost.shape != (len(p), len(q)):
        raise ValueError(f"cost shape {cost.shape} does not match masses ({len(p)}, {len(q)})")
    if not p.sum() > 0:
        raise ZeroMass("source")
    if not q.sum() > 0:
        raise ZeroMass("target")
    if params.balanced and not math.isclose(p.sum(), q.sum(), rel_tol=1e-8):
        raise MassMismatch(
            f"balanced transport needs equal total masses, got {p.sum():.17g} and {q.sum():.17g}"
        )

    eps, lam, tol = params.epsilon, params.lam, params.tolerance
    log_p, log_q = _log_masses(p), _log_masses(q)
    live_p = p > 0

    if init is None:
        u = np.zeros(len(p))
        v = np.zeros(len(q))
    else:
        u = np.array(init[0], dtype=float)
        v = np.array(init[1], dtype=float)
    u[~live_p] = -np.inf
    v[q <= 0] = -np.inf

    neg_c = -cost / eps
    norms = []
    converged = False
    it = 0
    delta = math.inf
    while it < params.max_iters:
        it += 1
        u_new = eps * lam * (log_p - logsumexp(neg_c + v[None, :] / eps, axis=1))
        delta = float(np.max(np.abs(u_new[live_p] - u[live_p])))
        u = u_new
        v = eps * lam * (log_q - logsumexp(neg_c + u[:, None] / eps, axis=0))
        norms.append(delta)
        if not math.isfinite(delta):
            break
        if delta < tol:
            converged = True
            break

    plan = np.exp(log_plan(cost, u, v, eps))
    state = TransportState(u, v, plan, it, converged, delta, norms)
    if strict and not converged:
        raise NotConverged(state)
    return state


def _xlogy_minus(h, ref):
    """Elementwise ``h log(h/ref) - h + ref`` with ``0 log 0 = 0``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(h > 0, h * (np.log(h) - _log_masses(ref)), 0.0)
    return t - h + ref


def kl(h, ref) -> float:
    return float(np.sum(_xlogy_minus(np.asarray(h, float), np.asarray(ref, float))))


def entropy(plan) -> float:
    """``H(g) = -sum g (log g - 1)`` with ``0 log 0 = 0``."""
    g = np.asarray(plan, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(g > 0, g * (np.log(g) - 1.0), 0.0)
    return float(-t.sum())


def primal_objective(cost, p, q, plan, epsilon, rho) -> float:
    """Objective of the regularized problem at an arbitrary plan.

    For ``rho = inf`` the marginal terms are dropped: the plan is assumed to
    satisfy the constraints.
    """
    plan = np.asarray(plan, dtype=float)
    value = float(np.sum(cost * plan)) - epsilon * entropy(plan)
    if not math.isinf(rho):
        value += rho * kl(plan.sum(axis=1), p) + rho * kl(plan.sum(axis=0), q)
    return value


def ot_value(cost, p, q, state: TransportState, params: OtParams) -> FidelityValue:
    cost = np.asarray(cost, dtype=float)
    regularized = primal_objective(cost, p, q, state.plan, params.epsilon, params.rho)
    stripped = max(float(np.sum(cost * state.plan)), 0.0)
    return FidelityValue(regularized, stripped)


def mass_gradient(u, params: OtParams):
    """``rho (1 - exp(-u / rho))``, or ``u`` itself when ``rho = inf``."""
    u = np.asarray(u, dtype=float)
    if params.balanced:
        return u.copy()
    return -params.rho * np.expm1(-u / params.rho)


def ot_gradients(cost_spec: CostSpec, source, target, state: TransportState, params: OtParams,
                 allow_unconverged=False):
    """Gradients of the regularized value w.r.t. source masses, positions, directions."""
    if not (state.converged or allow_unconverged):
        raise NotConverged(state)
    grad_masses = mass_gradient(state.u, params)
    grad_positions, grad_directions = cost_pullback(cost_spec, source, target, state.plan)
    return grad_masses, grad_positions, grad_directions


def plan_triplets(plan, threshold=0.0):
    """Sparse ``(i, j, value)`` rows for plan entries strictly above ``threshold``."""
    plan = np.asarray(plan)
    i, j = np.nonzero(plan > threshold)
    return [(int(a), int(b), float(plan[a, b])) for a, b in zip(i, j)]
