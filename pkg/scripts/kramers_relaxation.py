"""Grid relaxation of a displaced Gaussian: KL to Gibbs, entropy balance, mass.

Usage: python3 scripts/kramers_relaxation.py [n_grid] [duration]
"""

import sys

from relaxsim import kramers as kg
from relaxsim.model import HarmonicHamiltonian, ModeParams


def main(n=128, duration=4.0):
    pm = ModeParams(1.0, 1.0, 1.0, gamma_q=0.5, gamma_p=1.0)
    grid = kg.PhaseGrid.thermal(pm, n, n)
    op = kg.KramersOperator(grid, HarmonicHamiltonian((pm,)))
    f0 = kg.gaussian_state(grid, (2.0, 0.0), [[0.5, 0.0], [0.0, 0.5]])
    run = kg.relax(kg.GridDistribution(grid, f0), op, duration, diagnostics_every=50)
    d = run.diagnostics
    print(f"{'t':>7} {'KL':>12} {'EP':>12} {'dS/dt - beta dQ/dt':>20} {'mass - 1':>10}")
    for i in range(len(d["t"])):
        balance = d["dSdt"][i] - op.beta * d["dQdt"][i]
        print(f"{d['t'][i]:7.3f} {d['KL'][i]:12.4e} {d['entropy_production'][i]:12.4e} {balance:20.4e}"
              f" {d['mass'][i] - 1:10.1e}")


if __name__ == "__main__":
    args = sys.argv[1:]
    main(int(args[0]) if args else 128, float(args[1]) if len(args) > 1 else 4.0)
