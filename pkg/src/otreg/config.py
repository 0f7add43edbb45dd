"""Run configuration: flat ``key.path = value`` text files.

Example::

    source = source.curves
    target = target.curves
    fidelity.kind = ot
    fidelity.ot.epsilon = 2.25e-4      # (0.015)^2
    fidelity.ot.rho = 0.25             # (0.5)^2
    cost.family = multiplicative
    cost.alpha = 1
    cost.k = 4
    flow.kernel = 1.0:0.025, 0.75:0.15
    deformation.reg_weight = 0.01

An optional ``coarse.*`` block turns the run into a two-step registration:
a coarse OT phase followed by the ``fidelity.*`` phase.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

from .cost import CostSpec
from .deformation import DEFAULT_FLOW_KERNEL, FlowKernelSpec
from .errors import ConfigError
from .ot import OtParams
from .registration import OptimizerSpec, OtFidelity, RkhsFidelity
from .rkhs import KernelSpec


def _float(s):
    s = s.strip().lower()
    if s in ("inf", "+inf", "infinity"):
        return math.inf
    return float(s)


def _int(s):
    v = float(s)
    if v != int(v):
        raise ValueError("expected an integer")
    return int(v)


def _floats(s):
    return [float(x) for x in s.replace(",", " ").split()]


def _kernel(s):
    terms = []
    for tok in s.split(","):
        w, sig = tok.split(":")
        terms.append((float(w), float(sig)))
    return tuple(terms)


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _choice(*options):
    return lambda v: v in options


def _unit_interval_open(v):
    return 0 < v < 1


# key -> (parser, check, description of the constraint)
SCHEMA = {
    "source": (str, None, ""),
    "target": (str, None, ""),
    "shape.kind": (str, _choice("curve2d", "curve3d", "surface"), "one of curve2d, curve3d, surface"),
    "seed": (_int, _nonneg, "a nonnegative integer"),
    "fidelity.kind": (str, _choice("ot", "rkhs"), "ot or rkhs"),
    "fidelity.ot.epsilon": (_float, lambda v: 0 < v < math.inf, "positive and finite"),
    "fidelity.ot.rho": (_float, _positive, "positive or inf"),
    "fidelity.ot.max_iters": (_int, _positive, "a positive integer"),
    "fidelity.ot.tolerance": (_float, _positive, "positive"),
    "cost.family": (str, _choice("additive", "multiplicative"), "additive or multiplicative"),
    "cost.alpha": (_float, _nonneg, ">= 0"),
    "cost.k": (_int, _positive, "a positive integer"),
    "cost.angular": (str, _choice("geodesic", "currents", "varifold"), "geodesic, currents or varifold"),
    "rkhs.sigma": (_float, _positive, "positive"),
    "rkhs.angular_exponent": (_int, lambda v: v >= 0 and v % 2 == 0, "a nonnegative even integer"),
    "coarse.ot.epsilon": (_float, lambda v: 0 < v < math.inf, "positive and finite"),
    "coarse.ot.rho": (_float, _positive, "positive or inf"),
    "coarse.ot.max_iters": (_int, _positive, "a positive integer"),
    "coarse.ot.tolerance": (_float, _positive, "positive"),
    "coarse.max_outer_iters": (_int, _nonneg, "a nonnegative integer"),
    "flow.kernel": (_kernel, lambda v: len(v) > 0 and all(w > 0 and s > 0 for w, s in v),
                    "comma-separated weight:bandwidth pairs, all positive"),
    "flow.num_steps": (_int, _positive, "a positive integer"),
    "deformation.reg_weight": (_float, _positive, "positive"),
    "optimizer.method": (str, _choice("lbfgs", "gd"), "lbfgs or gd"),
    "optimizer.max_outer_iters": (_int, _nonneg, "a nonnegative integer"),
    "optimizer.grad_tolerance": (_float, _nonneg, ">= 0"),
    "optimizer.lbfgs_memory": (_int, _positive, "a positive integer"),
    "optimizer.initial_step": (_float, _positive, "positive"),
    "optimizer.shrink": (_float, _unit_interval_open, "in (0, 1)"),
    "optimizer.c1": (_float, _unit_interval_open, "in (0, 1)"),
    "optimizer.max_backtracks": (_int, _positive, "a positive integer"),
    "output.dir": (str, None, ""),
    "output.snapshots": (_floats, lambda v: all(0 <= t <= 1 for t in v), "times in [0, 1]"),
    "output.plan_threshold": (_float, _nonneg, ">= 0"),
}

DEFAULTS = {
    "fidelity.kind": "ot",
    "fidelity.ot.rho": math.inf,
    "fidelity.ot.max_iters": 10000,
    "cost.family": "multiplicative",
    "cost.alpha": 1.0,
    "cost.k": 4,
    "cost.angular": "varifold",
    "rkhs.angular_exponent": 4,
    "flow.kernel": DEFAULT_FLOW_KERNEL,
    "flow.num_steps": 10,
    "output.snapshots": [0.0, 1.0],
    "output.plan_threshold": 1e-10,
    "seed": 0,
}


def parse_text(text, origin="<config>"):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value' in {origin}")
        key, value = (t.strip() for t in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(key, "unknown key")
        parser, check, what = SCHEMA[key]
        try:
            parsed = parser(value)
        except (ValueError, TypeError):
            raise ConfigError(key, f"cannot parse {value!r}") from None
        if check is not None and not check(parsed):
            raise ConfigError(key, f"must be {what}, got {value!r}")
        values[key] = parsed
    return values


@dataclass
class RunConfig:
    values: dict
    base_dir: str = "."
    extra: dict = field(default_factory=dict)

    def get(self, key, default=None):
        if key in self.values:
            return self.values[key]
        return DEFAULTS.get(key, default)

    def require(self, key):
        v = self.get(key)
        if v is None:
            raise ConfigError(key, "required key is missing")
        return v

    def path(self, key):
        p = self.require(key)
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    @property
    def two_step(self) -> bool:
        return "coarse.ot.epsilon" in self.values

    def cost_spec(self) -> CostSpec:
        try:
            return CostSpec(self.get("cost.family"), self.get("cost.alpha"),
                            self.get("cost.k"), self.get("cost.angular"))
        except ValueError as e:
            raise ConfigError("cost.k", str(e)) from None

    def _ot_params(self, prefix):
        eps = self.require(f"{prefix}.epsilon")
        rho = self.get(f"{prefix}.rho", self.get("fidelity.ot.rho"))
        iters = self.get(f"{prefix}.max_iters", self.get("fidelity.ot.max_iters"))
        tol = self.get(f"{prefix}.tolerance")
        return OtParams(eps, rho, iters, tol)

    def ot_params(self) -> OtParams:
        return self._ot_params("fidelity.ot")

    def coarse_params(self) -> OtParams:
        return self._ot_params("coarse.ot")

    def fidelity(self):
        if self.get("fidelity.kind") == "ot":
            return OtFidelity(self.ot_params(), self.cost_spec())
        return RkhsFidelity(KernelSpec(self.require("rkhs.sigma"), self.get("rkhs.angular_exponent")))

    def flow(self) -> FlowKernelSpec:
        return FlowKernelSpec(self.get("flow.kernel"))

    def optimizer(self, max_outer_iters=None) -> OptimizerSpec:
        kwargs = {}
        for name in ("method", "max_outer_iters", "grad_tolerance", "lbfgs_memory",
                     "initial_step", "shrink", "c1", "max_backtracks"):
            v = self.get(f"optimizer.{name}")
            if v is not None:
                kwargs[name] = v
        if max_outer_iters is not None:
            kwargs["max_outer_iters"] = max_outer_iters
        return OptimizerSpec(**kwargs)


def load_config(path, check_paths=True) -> RunConfig:
    """Parse and validate a config file; raises :class:`ConfigError` naming the bad key."""
    if not os.path.exists(path):
        raise ConfigError("config", f"file not found: {path}")
    with open(path) as fh:
        values = parse_text(fh.read(), path)
    cfg = RunConfig(values, os.path.dirname(os.path.abspath(path)))
    validate(cfg, check_paths)
    return cfg


def validate(cfg: RunConfig, check_paths=True):
    if check_paths:
        for key in ("source", "target"):
            p = cfg.path(key)
            if not os.path.exists(p):
                raise ConfigError(key, f"file not found: {p}")
    kind = cfg.get("fidelity.kind")
    if kind == "ot":
        cfg.require("fidelity.ot.epsilon")
        cfg.cost_spec()
    else:
        cfg.require("rkhs.sigma")
    if any(k.startswith("coarse.") for k in cfg.values) and not cfg.two_step:
        raise ConfigError("coarse.ot.epsilon", "required when any coarse.* key is given")
    if "deformation.reg_weight" not in cfg.values:
        raise ConfigError("deformation.reg_weight", "required key is missing (no default is provided)")
