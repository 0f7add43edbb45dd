"""Regenerate ot_corpus.json: small transport instances with oracle values.

Run from the repository root: ``python tests/fixtures/make_ot_corpus.py``.
Costs come from the default multiplicative cost between random oriented
points; the expected value is the brute-force primal minimum.
"""

import itertools
import json
import math
import os
import sys

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from oracles import brute_force_ot  # noqa: E402
from otreg.cost import CostSpec, eval_cost_matrix  # noqa: E402
from otreg.io import write_curves  # noqa: E402
from otreg.measures import DiscreteMeasure, ShapeComplex, ShapeKind, lift_shape  # noqa: E402


def random_measure(rng, n):
    pos = rng.uniform(0.0, 1.0, (n, 2))
    ang = rng.uniform(0.0, 2 * math.pi, n)
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return DiscreteMeasure(pos, dirs, rng.uniform(0.2, 1.0, n))


def main():
    rng = np.random.default_rng(20240611)
    settings = list(itertools.product([0.05, 0.2], [0.25, 1.0, math.inf]))
    instances = []
    for k in range(50):
        eps, rho = settings[k % len(settings)]
        n_i, n_j = (int(x) for x in rng.integers(1, 4, 2))
        mu, nu = random_measure(rng, n_i), random_measure(rng, n_j)
        cost = eval_cost_matrix(CostSpec(), mu, nu)
        p = mu.masses
        q = nu.masses
        if math.isinf(rho):
            q = q * (p.sum() / q.sum())
        value, plan = brute_force_ot(cost, p, q, eps, rho)
        instances.append({
            "epsilon": eps,
            "rho": "inf" if math.isinf(rho) else rho,
            "cost": cost.tolist(),
            "p": p.tolist(),
            "q": q.tolist(),
            "value": value,
            "plan": plan.tolist(),
        })
    here = os.path.dirname(os.path.abspath(__file__))
    with open(os.path.join(here, "ot_corpus.json"), "w") as fh:
        json.dump({"instances": instances}, fh, indent=1)
    tiny_fixture(here)


def tiny_fixture(here):
    """Two-segment curves on disk plus the oracle value of their 2x2 transport problem."""
    src = ShapeComplex([[0.0, 0.0], [0.3, 0.1], [0.5, 0.5]], [[0, 1], [1, 2]], ShapeKind.CURVE2D)
    tgt = ShapeComplex([[0.1, 0.0], [0.35, 0.25], [0.4, 0.6]], [[0, 1], [1, 2]], ShapeKind.CURVE2D)
    write_curves(os.path.join(here, "tiny_source.curves"), src)
    write_curves(os.path.join(here, "tiny_target.curves"), tgt)
    eps, rho = 0.01, 0.25
    with open(os.path.join(here, "tiny.cfg"), "w") as fh:
        fh.write("source = tiny_source.curves\ntarget = tiny_target.curves\n"
                 f"fidelity.ot.epsilon = {eps}\nfidelity.ot.rho = {rho}\n"
                 "fidelity.ot.tolerance = 1e-14\nfidelity.ot.max_iters = 100000\n"
                 "deformation.reg_weight = 1\n")
    mu, nu = lift_shape(src), lift_shape(tgt)
    cost = eval_cost_matrix(CostSpec(), mu, nu)
    value, plan = brute_force_ot(cost, mu.masses, nu.masses, eps, rho)
    with open(os.path.join(here, "tiny_oracle.json"), "w") as fh:
        json.dump({"regularized": value, "stripped": float(np.sum(cost * plan)), "plan": plan.tolist()}, fh, indent=1)


if __name__ == "__main__":
    main()
