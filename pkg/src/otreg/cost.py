"""Ground costs on positions x unit directions.

Two families are provided, for ``x = (a, u)`` and ``y = (b, v)``:

* additive:        ``|a - b|^2 + alpha * d(u, v)^2``
* multiplicative:  ``|a - b|^2 * (1 + alpha * (1 - <u, v>^k))``

where the angular term ``d`` is one of ``arccos<u, v>`` (geodesic),
``1 - <u, v>`` (currents-like) or ``2 - 2<u, v>^2`` (varifold-like).  The
angular value is squared exactly as written in the additive formula, so the
currents-like term ranges over ``[0, 4 alpha]`` and the varifold-like one over
``[0, 4 alpha]`` as well.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import AngularSingularity, DimensionMismatch

GEODESIC_CLAMP = 1e-9
GEODESIC_GRAD_LIMIT = 1e-7


class CostFamily(str, enum.Enum):
    ADDITIVE = "additive"
    MULTIPLICATIVE = "multiplicative"


class Angular(str, enum.Enum):
    GEODESIC = "geodesic"
    CURRENTS = "currents"
    VARIFOLD = "varifold"


@dataclass(frozen=True)
class CostSpec:
    family: CostFamily = CostFamily.MULTIPLICATIVE
    alpha: float = 1.0
    k: int = 4
    angular: Angular = Angular.VARIFOLD

    def __post_init__(self):
        object.__setattr__(self, "family", CostFamily(self.family))
        object.__setattr__(self, "angular", Angular(self.angular))
        if not self.alpha >= 0:
            raise ValueError("cost.alpha must be >= 0")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError("cost.k must be a positive integer")
        object.__setattr__(self, "k", int(self.k))
        if (
            self.family is CostFamily.MULTIPLICATIVE
            and self.angular is Angular.VARIFOLD
            and self.k % 2
        ):
            raise ValueError("varifold-like multiplicative cost requires an even k")


def _angular(angular, s):
    """Angular distance d(s) and its derivative d'(s) as functions of s = <u, v>."""
    if angular is Angular.GEODESIC:
        sc = np.clip(s, -1 + GEODESIC_CLAMP, 1 - GEODESIC_CLAMP)
        return np.arccos(sc), -1.0 / np.sqrt(1.0 - sc * sc)
    if angular is Angular.CURRENTS:
        return 1.0 - s, -np.ones_like(s)
    return 2.0 - 2.0 * s * s, -4.0 * s


def _cost_from(spec: CostSpec, d2, s):
    if spec.family is CostFamily.ADDITIVE:
        dist, _ = _angular(spec.angular, s)
        return d2 + spec.alpha * dist * dist
    return d2 * (1.0 + spec.alpha * (1.0 - s ** spec.k))


def eval_cost(spec: CostSpec, x, y) -> float:
    """Cost of moving a unit of mass from ``x = (a, u)`` to ``y = (b, v)``."""
    a, u = (np.asarray(t, dtype=float) for t in x)
    b, v = (np.asarray(t, dtype=float) for t in y)
    d2 = np.sum((a - b) ** 2)
    s = np.dot(u, v)
    return float(max(_cost_from(spec, d2, s), 0.0))


def _sq_dists(a, b):
    # exact differences rather than the |a|^2 + |b|^2 - 2ab expansion: keeps c(x, x) = 0
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def eval_cost_matrix(spec: CostSpec, source, target) -> np.ndarray:
    """Dense ``(len(source), len(target))`` array of pairwise costs."""
    if source.dim != target.dim:
        raise DimensionMismatch("source and target live in different dimensions")
    d2 = _sq_dists(source.positions, target.positions)
    s = source.directions @ target.directions.T
    return np.maximum(_cost_from(spec, d2, s), 0.0)


def cost_gradient_x(spec: CostSpec, x, y):
    """Gradient of ``eval_cost`` with respect to the first point's (position, direction).

    The direction gradient is the ambient one: no projection onto the tangent
    space of the sphere is applied.
    """
    a, u = (np.asarray(t, dtype=float) for t in x)
    b, v = (np.asarray(t, dtype=float) for t in y)
    diff = a - b
    d2 = float(diff @ diff)
    s = float(u @ v)
    if spec.family is CostFamily.ADDITIVE:
        if spec.angular is Angular.GEODESIC and abs(s) >= 1 - GEODESIC_GRAD_LIMIT:
            raise AngularSingularity("geodesic angular cost is not differentiable at |<u,v>| = 1")
        dist, ddist = _angular(spec.angular, s)
        return 2.0 * diff, spec.alpha * 2.0 * dist * ddist * v
    factor = 1.0 + spec.alpha * (1.0 - s ** spec.k)
    dfactor = -spec.alpha * spec.k * s ** (spec.k - 1)
    return 2.0 * diff * factor, d2 * dfactor * v


def cost_pullback(spec: CostSpec, source, target, weights):
    """``(sum_j w_ij d_a c(x_i, y_j), sum_j w_ij d_u c(x_i, y_j))`` for all i.

    Vectorized form of accumulating :func:`cost_gradient_x` against a weight
    matrix such as a transport plan.
    """
    a, u = source.positions, source.directions
    b, v = target.positions, target.directions
    w = np.asarray(weights, dtype=float)
    s = u @ v.T
    if spec.family is CostFamily.ADDITIVE:
        if spec.angular is Angular.GEODESIC and np.any(
            (np.abs(s) >= 1 - GEODESIC_GRAD_LIMIT) & (w != 0)
        ):
            raise AngularSingularity("geodesic angular cost is not differentiable at |<u,v>| = 1")
        dist, ddist = _angular(spec.angular, s)
        wa = w
        wu = w * (2.0 * spec.alpha) * dist * ddist
    else:
        d2 = _sq_dists(a, b)
        wa = w * (1.0 + spec.alpha * (1.0 - s ** spec.k))
        wu = w * d2 * (-spec.alpha * spec.k) * s ** (spec.k - 1)
    grad_a = 2.0 * (wa.sum(axis=1)[:, None] * a - wa @ b)
    grad_u = wu @ v
    return grad_a, grad_u
