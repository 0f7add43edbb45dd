"""Landmark LDDMM: geodesic shooting with a sum-of-Gaussians kernel.

Control points ``q`` and momenta ``p`` follow the Hamiltonian flow of
``H(q, p) = 1/2 sum_ij <p_i, p_j> k(q_i, q_j)``::

    dq_i/dt =  sum_j k(q_i, q_j) p_j
    dp_i/dt = -sum_j <p_i, p_j> grad_1 k(q_i, q_j)

integrated over ``t in [0, 1]`` with uniform RK4 steps.  :func:`shoot_adjoint`
is the exact reverse-mode derivative of that discrete integrator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, MissingTrajectory, NonFiniteState

DEFAULT_FLOW_KERNEL = ((1.0, 0.025), (0.75, 0.15))


@dataclass(frozen=True)
class FlowKernelSpec:
    """``k(x, y) = sum_w w * exp(-|x - y|^2 / (2 s^2))`` over ``(w, s)`` terms."""

    terms: tuple = DEFAULT_FLOW_KERNEL

    def __post_init__(self):
        terms = tuple((float(w), float(s)) for w, s in self.terms)
        if not terms:
            raise ValueError("flow kernel needs at least one term")
        if any(w <= 0 or s <= 0 for w, s in terms):
            raise ValueError("flow kernel weights and bandwidths must be positive")
        object.__setattr__(self, "terms", terms)

    @property
    def total_weight(self) -> float:
        return sum(w for w, _ in self.terms)

    def matrix(self, x, y):
        d2 = _sq_dists(x, y)
        return sum(w * np.exp(-d2 / (2.0 * s * s)) for w, s in self.terms)


def _sq_dists(x, y):
    diff = x[:, None, :] - y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


@dataclass
class DeformationState:
    control_points: np.ndarray
    momenta: np.ndarray
    num_steps: int
    trajectory: list = field(default_factory=list, repr=False)

    @property
    def step_size(self) -> float:
        return 1.0 / self.num_steps

    @property
    def endpoint(self) -> np.ndarray:
        if not self.trajectory:
            raise MissingTrajectory("state has no trajectory")
        return self.trajectory[-1][0]


def _kernel_blocks(spec, q):
    d2 = _sq_dists(q, q)
    return [(w * np.exp(-d2 / (2.0 * s * s)), s * s) for w, s in spec.terms]


def _dot_rows(x, y):
    return x @ y.T


def hamiltonian_field(spec: FlowKernelSpec, q, p):
    blocks = _kernel_blocks(spec, q)
    a = _dot_rows(p, p)
    dq = np.zeros_like(q)
    dp = np.zeros_like(p)
    for g, s2 in blocks:
        dq += g @ p
        # -grad_1 k(q_i, q_j) = (q_i - q_j) / s^2 * g_ij
        m = g * a / s2
        dp += m.sum(axis=1)[:, None] * q - m @ q
    return dq, dp


def hamiltonian_field_vjp(spec: FlowKernelSpec, q, p, bar_dq, bar_dp):
    """Vector-Jacobian product of :func:`hamiltonian_field` at ``(q, p)``."""
    blocks = _kernel_blocks(spec, q)
    a = _dot_rows(p, p)
    gq = np.zeros_like(q)
    gp = np.zeros_like(p)
    # <bar_dp_i, q_i - q_j>
    bq = np.sum(bar_dp * q, axis=1)
    b_dot_d = bq[:, None] - bar_dp @ q.T
    alpha_p = bar_dq @ p.T
    for g, s2 in blocks:
        # dq part: sum_ij g_ij <bar_dq_i, p_j>
        gp += g.T @ bar_dq
        # dp part: sum_ij g_ij a_ij <bar_dp_i, q_i - q_j> / s2
        b = g * b_dot_d / s2
        gp += (b + b.T) @ p
        coeff = (alpha_p + a * b_dot_d / s2) * g  # multiplies dG/G
        m = coeff / s2
        # dG_ij = -G_ij <q_i - q_j, dq_i - dq_j> / s2
        e_rows = -(m.sum(axis=1)[:, None] * q - m @ q)
        e_cols = -(m.T @ q - m.sum(axis=0)[:, None] * q)
        ga = g * a / s2
        e_rows += ga.sum(axis=1)[:, None] * bar_dp
        e_cols += ga.T @ bar_dp
        gq += e_rows - e_cols
    return gq, gp


def _rk4_stages(spec, q, p, h):
    k1 = hamiltonian_field(spec, q, p)
    z2 = (q + 0.5 * h * k1[0], p + 0.5 * h * k1[1])
    k2 = hamiltonian_field(spec, *z2)
    z3 = (q + 0.5 * h * k2[0], p + 0.5 * h * k2[1])
    k3 = hamiltonian_field(spec, *z3)
    z4 = (q + h * k3[0], p + h * k3[1])
    k4 = hamiltonian_field(spec, *z4)
    return [(q, p), z2, z3, z4], [k1, k2, k3, k4]


def _rk4_combine(z, ks, h):
    (k1, k2, k3, k4) = ks
    return tuple(
        z[c] + (h / 6.0) * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]) for c in range(2)
    )


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteState("non-finite value in the flow; momenta are probably too large")


def shoot(spec: FlowKernelSpec, q0, theta, num_steps=10) -> DeformationState:
    q0 = np.asarray(q0, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if q0.shape != theta.shape:
        raise DimensionMismatch("control points and momenta must have the same shape")
    if num_steps < 1:
        raise ValueError("num_steps must be >= 1")
    h = 1.0 / num_steps
    q, p = q0.copy(), theta.copy()
    trajectory = [(q, p)]
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(num_steps):
            stages, ks = _rk4_stages(spec, q, p, h)
            q, p = _rk4_combine((q, p), ks, h)
            _check_finite(q, p)
            trajectory.append((q, p))
    return DeformationState(q0.copy(), theta.copy(), num_steps, trajectory)


def hamiltonian(spec: FlowKernelSpec, q, p) -> float:
    return 0.5 * float(np.sum(spec.matrix(q, q) * _dot_rows(p, p)))


def shoot_adjoint(state: DeformationState, spec: FlowKernelSpec, grad_endpoint, grad_endpoint_momenta=None):
    """Gradient w.r.t. the initial momenta of a scalar whose gradient at ``q(1)`` is given."""
    if len(state.trajectory) != state.num_steps + 1:
        raise MissingTrajectory("shoot_adjoint needs a fully checkpointed trajectory")
    h = state.step_size
    lq = np.array(grad_endpoint, dtype=float)
    if lq.shape != state.control_points.shape:
        raise DimensionMismatch("grad_endpoint must match the control point array")
    lp = (np.zeros_like(lq) if grad_endpoint_momenta is None
          else np.array(grad_endpoint_momenta, dtype=float))
    weights = (h / 6.0, h / 3.0, h / 3.0, h / 6.0)
    for n in range(state.num_steps - 1, -1, -1):
        stages, _ = _rk4_stages(spec, *state.trajectory[n], h)
        bar_k = [[w * lq, w * lp] for w in weights]
        zq, zp = lq.copy(), lp.copy()
        # stage inputs: z2 = z + h/2 k1, z3 = z + h/2 k2, z4 = z + h k3
        feeds = (None, 0.5 * h, 0.5 * h, h)
        for s in range(3, -1, -1):
            wq, wp = hamiltonian_field_vjp(spec, *stages[s], *bar_k[s])
            zq += wq
            zp += wp
            if s > 0:
                bar_k[s - 1][0] += feeds[s] * wq
                bar_k[s - 1][1] += feeds[s] * wp
        lq, lp = zq, zp
    return lp


def _velocity(spec, x, q, p):
    return spec.matrix(x, q) @ p


def flow_points(state: DeformationState, spec: FlowKernelSpec, extra, t_end=1.0):
    """Advect arbitrary points through the flow stored in ``state``, up to time ``t_end``."""
    if len(state.trajectory) != state.num_steps + 1:
        raise MissingTrajectory("flow_points needs a fully checkpointed trajectory")
    x = np.array(extra, dtype=float)
    h = state.step_size
    t = 0.0
    for n in range(state.num_steps):
        if t_end - t <= 1e-15:
            break
        step = min(h, t_end - t)
        stages, _ = _rk4_stages(spec, *state.trajectory[n], step)
        xs = x
        kx = []
        for s, coef in enumerate((0.5, 0.5, 1.0, None)):
            kx.append(_velocity(spec, xs, *stages[s]))
            if coef is not None:
                xs = x + coef * step * kx[-1]
        x = x + (step / 6.0) * (kx[0] + 2.0 * kx[1] + 2.0 * kx[2] + kx[3])
        _check_finite(x)
        t += step
    return x


def flow_nonlocal_points(state: DeformationState, spec: FlowKernelSpec, extra):
    return flow_points(state, spec, extra, 1.0)


def control_points_at(state: DeformationState, spec: FlowKernelSpec, t):
    """Control point positions at time ``t``, resuming RK4 from the preceding checkpoint."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    h = state.step_size
    n = min(int(np.floor(t / h + 1e-12)), state.num_steps)
    rest = t - n * h
    q, p = state.trajectory[n]
    if rest <= 1e-12:
        return q.copy()
    _, ks = _rk4_stages(spec, q, p, rest)
    return _rk4_combine((q, p), ks, rest)[0]


def regularization_energy(spec: FlowKernelSpec, q0, theta):
    """Kinetic energy ``sum_ij <theta_i, theta_j> k(q0_i, q0_j)`` and its gradient."""
    q0 = np.asarray(q0, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if q0.shape != theta.shape:
        raise DimensionMismatch("control points and momenta must have the same shape")
    k_theta = spec.matrix(q0, q0) @ theta
    return float(np.sum(theta * k_theta)), 2.0 * k_theta
