"""Complete-positivity diagnostics: short-time Choi spectrum and Kossakowski verdicts."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm

from .errors import TruncationError
from .quantum import Generator, build_lindblad_set, kossakowski_matrix

CHOI_TOL = 1e-10


def choi_matrix(gen: Generator, t: float) -> np.ndarray:
    """Choi matrix ``sum_ij |i><j| (x) Phi_t(|i><j|)`` of ``Phi_t = exp(t L)``."""
    n = gen.dim
    prop = expm(t * gen.superoperator().toarray()) if t > 0 else np.eye(n * n, dtype=complex)
    # prop[k + l n, i + j n] = <k| Phi(|i><j|) |l>
    choi = prop.reshape(n, n, n, n).transpose(3, 1, 2, 0).reshape(n * n, n * n)
    return 0.5 * (choi + choi.conj().T)


def trace_residual(choi: np.ndarray, n: int) -> float:
    """Deviation of the partial trace over the output factor from the identity."""
    part = np.einsum("ikjk->ij", choi.reshape(n, n, n, n))
    return float(np.abs(part - np.eye(n)).max())


@dataclass
class ChoiReport:
    n_max: int
    t: float
    min_eigenvalue: float
    trace_residual: float
    rank_tol_count: int

    @property
    def positive(self) -> bool:
        return self.min_eigenvalue >= -CHOI_TOL


def choi_spectrum(gen: Generator, t: float) -> ChoiReport:
    c = choi_matrix(gen, t)
    w = np.linalg.eigvalsh(c)
    rank = int(np.sum(np.abs(w) > 1e-9 * max(1.0, np.abs(w).max())))
    return ChoiReport(gen.dims[0], t, float(w.min()), trace_residual(c, gen.dim), rank)


@dataclass
class CPTPReport:
    delta: float
    kossakowski: list
    kossakowski_eigenvalues: list
    kossakowski_determinant: float
    kossakowski_psd: bool
    choi_min_eigenvalue: float
    choi_min_eigenvalue_refined: float
    trace_residual: float
    t_small: float
    n_max: int
    cptp: bool
    consistent: bool

    @property
    def verdict(self) -> str:
        return f"CPTP: {'true' if self.cptp else 'false'}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict
        return d


def choi_check(factory: Callable[[int], Generator], n_max: int, t_small: Optional[float] = None,
               refine: int = 5) -> CPTPReport:
    """Short-time complete-positivity check of a single-mode generator.

    ``factory(n)`` builds the generator at truncation ``n``.  The Choi
    spectrum is computed at ``n_max`` and ``n_max + refine`` with the same
    ``t_small`` (by default ``0.01`` over the rate bound of the larger
    truncation); differing verdicts mean the truncation is not converged.
    """
    gen = factory(n_max)
    fine = factory(n_max + refine)
    t = 0.01 / fine.rate_bound() if t_small is None else t_small
    coarse_rep = choi_spectrum(gen, t)
    fine_rep = choi_spectrum(fine, t)
    if coarse_rep.positive != fine_rep.positive:
        raise TruncationError(
            f"Choi verdict changes between n_max={n_max} ({coarse_rep.min_eigenvalue:.3e}) "
            f"and n_max={n_max + refine} ({fine_rep.min_eigenvalue:.3e})"
        )
    k = kossakowski_matrix(build_lindblad_set(gen.modes[0]))
    eig = k.eigenvalues
    psd = bool(eig.min() >= -CHOI_TOL * max(1.0, np.abs(eig).max()))
    return CPTPReport(
        delta=gen.deltas[0],
        kossakowski=[[complex(z).real for z in row] for row in k.matrix],
        kossakowski_eigenvalues=[float(e) for e in eig],
        kossakowski_determinant=k.determinant,
        kossakowski_psd=psd,
        choi_min_eigenvalue=coarse_rep.min_eigenvalue,
        choi_min_eigenvalue_refined=fine_rep.min_eigenvalue,
        trace_residual=max(coarse_rep.trace_residual, fine_rep.trace_residual),
        t_small=t,
        n_max=n_max,
        cptp=coarse_rep.positive,
        consistent=psd == coarse_rep.positive,
    )
