"""Cumulative bath heat from the grid solver against the Langevin ensemble.

Usage: python3 scripts/heat_consistency.py [n_trajectories]
"""

import sys

import numpy as np

from relaxsim import classical as cl
from relaxsim import kramers as kg
from relaxsim.model import HarmonicHamiltonian, ModeParams


def main(n=100_000):
    pm = ModeParams(1.0, 1.0, 1.0, gamma_q=0.5, gamma_p=1.0)
    H = HarmonicHamiltonian((pm,))
    times = np.linspace(0.0, 1.0, 6)
    ens = cl.run_ensemble(cl.EnsembleConfig(H, n_trajectories=n, duration=1.0, n_records=6, seed=11,
                                            initial=cl.GaussianInitial(q_var=2.0, p_var=2.0)))
    grid = kg.PhaseGrid.thermal(pm, 256, 256)
    op = kg.KramersOperator(grid, H)
    f0 = kg.gaussian_state(grid, (0, 0), np.diag([2.0, 2.0]))
    run = kg.relax(kg.GridDistribution(grid, f0), op, 1.0, diagnostics_every=5)
    grid_q = np.interp(times, run.diagnostics["t"], run.diagnostics["Q"])
    ens_q = ens.mean_heat()[:, 0]
    err = ens.heat[:, :, 0].std(axis=1) / np.sqrt(n)
    print(f"{'t':>5} {'Q grid':>12} {'Q ensemble':>12} {'stderr':>10}")
    for t, a, b, e in zip(times, grid_q, ens_q, err):
        print(f"{t:5.2f} {a:12.6f} {b:12.6f} {e:10.2e}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 100_000)
