"""Relax a hot ensemble and compare its final covariance with the Lyapunov solution.

Usage: python3 scripts/classical_equilibrium.py [n_trajectories]
"""

import sys

import numpy as np

from relaxsim import classical as cl
from relaxsim.model import HarmonicHamiltonian, ModeParams


def main(n=50_000):
    for gq, gp in [(0.5, 1.0), (0.0, 2.0), (1.0, 0.5)]:
        H = HarmonicHamiltonian((ModeParams(1.0, 1.0, 1.0, gamma_q=gq, gamma_p=gp),))
        tau = 1.0 / np.min(-np.linalg.eigvals(cl.drift_matrix(H)[0]).real)
        ens = cl.run_ensemble(cl.EnsembleConfig(H, n_trajectories=n, duration=20 * tau, seed=0,
                                                initial=cl.GaussianInitial(q_var=4.0, p_var=4.0)))
        cov = ens.covariance(-1)
        ref = cl.stationary_covariance(H)
        err = np.abs(np.diag(cov) / np.diag(ref) - 1).max()
        print(f"gamma_q={gq:<4} gamma_p={gp:<4} tau={tau:6.3f}  <q^2>={cov[0, 0]:.4f}  <p^2>={cov[1, 1]:.4f}"
              f"  max rel. error {err:.2%}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 50_000)
