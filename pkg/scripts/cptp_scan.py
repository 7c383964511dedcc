"""Scan delta and beta hbar omega: Kossakowski determinant against the Choi verdict.

Usage: python3 scripts/cptp_scan.py
"""

import numpy as np

from relaxsim.cptp import choi_check
from relaxsim.model import ModeParams
from relaxsim.quantum import Generator, boson_mode


def main(n_max=16):
    print(f"{'beta':>6} {'delta':>7} {'det C':>12} {'min Choi eig':>14}  verdict")
    for beta in (0.5, 2.0, 5.0):
        for gamma_q in (0.0, 0.05, 0.1, 0.15, 0.3):
            pm = ModeParams(1.0, 1.0, beta, gamma_q=gamma_q, gamma_p=0.1)
            rep = choi_check(lambda n: Generator([boson_mode(pm, n)]), n_max)
            print(f"{beta:6.1f} {rep.delta:7.2f} {rep.kossakowski_determinant:12.3e}"
                  f" {rep.choi_min_eigenvalue:14.3e}  {rep.verdict}{'' if rep.consistent else ' (disagree)'}")


if __name__ == "__main__":
    np.set_printoptions(precision=4)
    main()
