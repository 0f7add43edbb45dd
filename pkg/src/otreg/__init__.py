"""Unbalanced entropic optimal transport fidelity for LDDMM shape registration."""

from .cost import CostSpec, eval_cost_matrix
from .deformation import DEFAULT_FLOW_KERNEL, FlowKernelSpec, shoot, shoot_adjoint
from .errors import OtRegError
from .measures import DiscreteMeasure, ShapeComplex, ShapeKind, lift_shape, polyline_cells
from .ot import OtParams, TransportState, ot_gradients, ot_value, sinkhorn
from .registration import (OptimizerSpec, OtFidelity, RegistrationProblem, RkhsFidelity, energy_and_gradient,
                           register, register_two_step)
from .rkhs import KernelSpec, rkhs_gradients, rkhs_value
from .synthetic import generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "CostSpec", "eval_cost_matrix",
    "DEFAULT_FLOW_KERNEL", "FlowKernelSpec", "shoot", "shoot_adjoint",
    "OtRegError",
    "DiscreteMeasure", "ShapeComplex", "ShapeKind", "lift_shape", "polyline_cells",
    "OtParams", "TransportState", "ot_gradients", "ot_value", "sinkhorn",
    "OptimizerSpec", "OtFidelity", "RegistrationProblem", "RkhsFidelity", "energy_and_gradient",
    "register", "register_two_step",
    "KernelSpec", "rkhs_gradients", "rkhs_value",
    "generate_synthetic",
]
