"""Kernel (varifold-type) fidelity, the local baseline for comparisons.

The squared RKHS norm of ``mu - nu`` under the kernel::

    K((a, u), (b, v)) = exp(-|a - b|^2 / (2 sigma^2)) * <u, v>^e

with ``e`` an even angular exponent (``e = 0`` ignores directions).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch


@dataclass(frozen=True)
class KernelSpec:
    sigma: float
    angular_exponent: int = 4

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("rkhs.sigma must be positive")
        e = self.angular_exponent
        if int(e) != e or e < 0 or e % 2:
            raise ValueError("rkhs.angular_exponent must be a nonnegative even integer")
        object.__setattr__(self, "angular_exponent", int(e))


def _kernel_terms(spec, a, u, b, v):
    diff = a[:, None, :] - b[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    g = np.exp(-d2 / (2.0 * spec.sigma ** 2))
    e = spec.angular_exponent
    if e == 0:
        return g, np.ones_like(g), np.zeros_like(g)
    s = u @ v.T
    return g, s ** e, e * s ** (e - 1)


def kernel_matrix(spec: KernelSpec, x, y):
    g, ang, _ = _kernel_terms(spec, x.positions, x.directions, y.positions, y.directions)
    return g * ang


def _check(mu, nu):
    if mu.dim != nu.dim:
        raise DimensionMismatch("measures live in different dimensions")


def rkhs_value(spec: KernelSpec, mu, nu, clamp=True) -> float:
    """``|mu - nu|_K^2``, clamped at 0 against round-off unless ``clamp=False``."""
    _check(mu, nu)
    p, q = mu.masses, nu.masses
    value = (
        p @ kernel_matrix(spec, mu, mu) @ p
        - 2.0 * (p @ kernel_matrix(spec, mu, nu) @ q)
        + q @ kernel_matrix(spec, nu, nu) @ q
    )
    return max(float(value), 0.0) if clamp else float(value)


def _cross_pullback(spec, x, y, wx, wy):
    """Gradient of ``sum_ij wx_i wy_j K(x_i, y_j)`` w.r.t. x positions and directions."""
    a, u = x.positions, x.directions
    b, v = y.positions, y.directions
    g, ang, dang = _kernel_terms(spec, a, u, b, v)
    w = wx[:, None] * wy[None, :]
    # d/da exp(-|a-b|^2 / 2s^2) = -(a - b) / s^2 * exp(...)
    m = w * g * ang / spec.sigma ** 2
    grad_a = -(m.sum(axis=1)[:, None] * a - m @ b)
    grad_u = (w * g * dang) @ v
    return (w * g * ang).sum(axis=1), grad_a, grad_u


def rkhs_gradients(spec: KernelSpec, mu, nu):
    """Gradients of :func:`rkhs_value` (unclamped) w.r.t. the masses, positions and directions of ``mu``."""
    _check(mu, nu)
    p, q = mu.masses, nu.masses
    ones_p = np.ones_like(p)
    kp, ga_self, gu_self = _cross_pullback(spec, mu, mu, ones_p, p)
    kq, ga_cross, gu_cross = _cross_pullback(spec, mu, nu, ones_p, q)
    grad_masses = 2.0 * (kp - kq)
    grad_positions = 2.0 * p[:, None] * (ga_self - ga_cross)
    grad_directions = 2.0 * p[:, None] * (gu_self - gu_cross)
    return grad_masses, grad_positions, grad_directions
