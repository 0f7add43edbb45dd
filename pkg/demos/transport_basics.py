"""Unbalanced entropic transport between two small oriented point clouds.

Shows how the marginal penalty rho trades transported mass against
creation and destruction, and how epsilon blurs the plan.

Run: python demos/transport_basics.py
"""

import math

import numpy as np

from otreg import CostSpec, OtParams, eval_cost_matrix, ot_value, sinkhorn
from otreg.measures import DiscreteMeasure


def cloud(points, angles, masses):
    dirs = np.stack([np.cos(angles), np.sin(angles)], 1)
    return DiscreteMeasure(np.asarray(points, float), dirs, np.asarray(masses, float))


def main():
    mu = cloud([[0.0, 0.0], [0.2, 0.0], [0.4, 0.0]], np.zeros(3), [1.0, 1.0, 1.0])
    nu = cloud([[0.0, 0.05], [0.2, 0.05], [0.9, 0.05]], np.zeros(3), [1.0, 1.0, 0.5])
    cost = eval_cost_matrix(CostSpec(), mu, nu)

    print("far target point at x = 0.9; source has extra mass")
    print(f"{'epsilon':>8} {'rho':>6} {'iters':>6} {'moved mass':>11} {'to far point':>13} {'stripped':>10}")
    for eps in (0.01, 0.05):
        for rho in (0.05, 0.5, math.inf):
            params = OtParams(eps, rho, 100000)
            q = nu.masses * (mu.total_mass / nu.total_mass) if params.balanced else nu.masses
            st = sinkhorn(cost, mu.masses, q, params)
            val = ot_value(cost, mu.masses, q, st, params)
            print(f"{eps:8.2f} {rho:6.2f} {st.iterations:6d} {st.plan.sum():11.4f} "
                  f"{st.plan[:, 2].sum():13.4f} {val.stripped:10.4f}")
    print("small rho leaves the far point mostly unmatched; rho = inf must transport everything")


if __name__ == "__main__":
    main()
