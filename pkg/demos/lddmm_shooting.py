"""Geodesic shooting of two control points and the accuracy of the integrator.

Prints the Hamiltonian drift and endpoint error as the number of RK4 steps
doubles, and checks the adjoint against central differences.

Run: python demos/lddmm_shooting.py
"""

import numpy as np

from otreg import FlowKernelSpec, shoot, shoot_adjoint
from otreg.deformation import hamiltonian


def main():
    spec = FlowKernelSpec()
    q0 = np.array([[0.0, 0.0], [0.06, 0.03]])
    theta = 0.1 * np.array([[1.0, 0.4], [-0.6, 0.8]])
    h0 = hamiltonian(spec, q0, theta)
    ref = shoot(spec, q0, theta, 1280).endpoint
    print(f"{'steps':>6} {'H drift':>10} {'endpoint error':>15}")
    for n in (10, 20, 40, 80):
        st = shoot(spec, q0, theta, n)
        qe, pe = st.trajectory[-1]
        print(f"{n:6d} {abs(hamiltonian(spec, qe, pe) - h0) / h0:10.2e} {np.abs(st.endpoint - ref).max():15.2e}")

    w = np.array([[1.0, -0.5], [0.3, 2.0]])
    adj = shoot_adjoint(shoot(spec, q0, theta, 10), spec, w)
    fd = np.zeros_like(theta)
    h = 1e-6
    for idx in np.ndindex(theta.shape):
        e = np.zeros_like(theta)
        e[idx] = h
        fd[idx] = (np.sum(w * shoot(spec, q0, theta + e, 10).endpoint)
                   - np.sum(w * shoot(spec, q0, theta - e, 10).endpoint)) / (2 * h)
    print(f"adjoint vs central differences: max abs difference {np.abs(adj - fd).max():.1e}")


if __name__ == "__main__":
    main()
