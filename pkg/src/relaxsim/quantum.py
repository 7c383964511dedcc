"""Master equation of the quantised model for independent bosonic or fermionic modes.

Two equivalent right-hand sides are provided:

* :func:`sandwich_rhs` evaluates the double-commutator form built from
  ``e^{+-beta H/2}`` sandwiches around ``q`` and ``p``;
* :func:`tcl_rhs` evaluates the rewritten form, a commutator with the
  effective Hamiltonian ``H'`` plus signed-weight dissipators.

With dissipator convention ``(kappa/hbar)(2 L rho L^+ - {L^+ L, rho})`` the
per-mode weights are

    kappa_a  = Gamma_1^2 = (delta + 2) gamma_p e^{+x} / (2 beta m omega)
    kappa_a+ = Gamma_2^2 = (delta + 2) gamma_p e^{-x} / (2 beta m omega)
    kappa_q  = -kappa_{p/m omega} = ell^2 = -delta gamma_p cosh(x) / (2 beta hbar)

with ``x = beta hbar omega / 2`` and
``H' = H - delta gamma_p sinh(x) / (2 beta hbar m omega) (q p + p q)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .errors import (DimensionError, ParameterError, SolverFault, TruncationError,
                     UnsupportedError)
from .fock import FermionMode, FockOperators, anticommutator, commutator, embed
from .model import ModeParams, Statistics, UnitsConfig, delta_parameter

log = logging.getLogger(__name__)

# largest exponent kept for the Boltzmann sandwich; exp(700) ~ 1e304
MAX_EXPONENT = 700.0
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
PSD_TOL = 1e-10


# ----------------------------------------------------------------- states

@dataclass(frozen=True)
class DensityMatrix:
    """A validated density operator on a truncated basis."""

    data: np.ndarray

    def __post_init__(self):
        rho = np.array(self.data, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise DimensionError(f"density matrix must be square, got shape {rho.shape}")
        herm = np.abs(rho - rho.conj().T).max()
        if herm > HERMITIAN_TOL:
            raise ParameterError(f"density matrix not Hermitian (deviation {herm:.2e})")
        tr = np.trace(rho).real
        if abs(tr - 1) > TRACE_TOL:
            raise ParameterError(f"density matrix trace is {tr!r}, expected 1")
        lo = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
        if lo < -PSD_TOL:
            raise ParameterError(f"density matrix has negative eigenvalue {lo:.2e}")
        rho.setflags(write=False)
        object.__setattr__(self, "data", rho)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @classmethod
    def gibbs(cls, hamiltonian, beta: float):
        e, v = np.linalg.eigh(hamiltonian)
        w = np.exp(-beta * (e - e.min()))
        w /= w.sum()
        rho = (v * w) @ v.conj().T
        return cls(0.5 * (rho + rho.conj().T))

    @classmethod
    def random(cls, dim: int, rng: np.random.Generator, rank: Optional[int] = None):
        """Ginibre-distributed state; full rank unless ``rank`` is given."""
        k = dim if rank is None else rank
        g = rng.normal(size=(dim, k)) + 1j * rng.normal(size=(dim, k))
        rho = g @ g.conj().T
        rho = 0.5 * (rho + rho.conj().T)
        return cls(rho / np.trace(rho).real)

    @classmethod
    def coherent(cls, fock: FockOperators, alpha: complex):
        n = np.arange(fock.n_max)
        logfact = np.cumsum(np.log(np.maximum(n, 1)))
        amp = np.exp(-0.5 * abs(alpha) ** 2 - 0.5 * logfact) * alpha**n
        amp /= np.linalg.norm(amp)
        return cls(np.outer(amp, amp.conj()))


# ----------------------------------------------------------------- modes

@dataclass(frozen=True)
class QuantumMode:
    params: ModeParams
    ops: Union[FockOperators, FermionMode]

    @property
    def units(self) -> UnitsConfig:
        return self.ops.units

    @property
    def is_fermion(self) -> bool:
        return isinstance(self.ops, FermionMode)


def boson_mode(params: ModeParams, n_max: int, units: UnitsConfig = UnitsConfig()) -> QuantumMode:
    if params.statistics is not Statistics.BOSON:
        raise ParameterError("boson_mode needs boson statistics")
    return QuantumMode(params, FockOperators(n_max, params.mass, params.omega, units))


def fermion_mode(params: ModeParams, units: UnitsConfig = UnitsConfig()) -> QuantumMode:
    if params.statistics is not Statistics.FERMION:
        raise ParameterError("fermion_mode needs fermion statistics")
    return QuantumMode(params, FermionMode(params.mass, params.omega, units))


def truncation_for(params: ModeParams, units: UnitsConfig = UnitsConfig(), tail: float = 1e-12,
                   minimum: int = 8) -> int:
    """Smallest ``n_max`` whose discarded Gibbs weight is below ``tail``."""
    x = params.beta * units.hbar * params.omega
    return max(minimum, int(np.ceil(-np.log(tail) / x)))


# ----------------------------------------------------------------- jump operators

@dataclass(frozen=True)
class LindbladSet:
    """Jump operators of one mode.

    ``operators`` are the bare ``(a, a^+, q, p/(m omega))`` and
    ``coefficients`` their prefactors ``(Gamma_1, Gamma_2, ell, ell)`` so that
    ``L_mu = coefficients[mu] * operators[mu]``.  ``ell`` is imaginary when
    its square is negative; weights are formed as ``g_mu * c_mu**2`` without
    complex conjugation, which keeps them real and linear in ``delta``.
    """

    operators: tuple
    coefficients: tuple
    signature: tuple
    delta: float
    hamiltonian_shift: float
    hbar: float

    @property
    def gammas(self):
        return self.coefficients[0].real, self.coefficients[1].real

    @property
    def weights(self) -> np.ndarray:
        c = np.asarray(self.coefficients, dtype=complex)
        return np.real(np.asarray(self.signature) * c**2)

    @property
    def lindblad_operators(self):
        return tuple(c * op for c, op in zip(self.coefficients, self.operators))

    def effective_hamiltonian(self, hamiltonian, q, p):
        return hamiltonian - self.hamiltonian_shift * anticommutator(q, p)


def build_lindblad_set(mode: QuantumMode) -> LindbladSet:
    pm, ops, hbar = mode.params, mode.ops, mode.units.hbar
    delta = delta_parameter(pm)
    if delta + 2 < 0:
        raise ParameterError(f"delta + 2 = {delta + 2:.3g} < 0 makes Gamma imaginary")
    x = 0.5 * pm.beta * hbar * pm.omega
    scale = (delta + 2) * pm.gamma_p / (2 * pm.beta * pm.mass * pm.omega)
    g1 = np.sqrt(scale * np.exp(x))
    g2 = np.sqrt(scale * np.exp(-x))
    ell2 = -delta * pm.gamma_p * np.cosh(x) / (2 * pm.beta * hbar)
    ell = np.sqrt(complex(ell2))
    shift = delta * pm.gamma_p * np.sinh(x) / (2 * pm.beta * hbar * pm.mass * pm.omega)
    ops4 = (ops.a, ops.ad, ops.q, ops.p / (pm.mass * pm.omega))
    return LindbladSet(ops4, (complex(g1), complex(g2), ell, ell), (1, 1, 1, -1),
                       float(delta), float(shift), hbar)


@dataclass(frozen=True)
class KossakowskiMatrix:
    """Dissipator coefficients in the ladder basis ``(a, a^+)``."""

    matrix: np.ndarray
    expansion_residual: float

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.matrix).real)

    def is_psd(self, tol: float = 0.0) -> bool:
        return bool(self.eigenvalues.min() >= -tol)


def kossakowski_matrix(ls: LindbladSet) -> KossakowskiMatrix:
    """Expand every jump operator in ``(a, a^+)`` and sum ``g c^2 v v^+``."""
    basis = ls.operators[:2]
    norms = [np.vdot(b, b).real for b in basis]
    c = np.zeros((2, 2), dtype=complex)
    resid = 0.0
    for op, w in zip(ls.operators, ls.weights):
        v = np.array([np.vdot(b, op) / n for b, n in zip(basis, norms)])
        resid = max(resid, float(np.abs(op - v[0] * basis[0] - v[1] * basis[1]).max()))
        c += w * np.outer(v, v.conj())
    return KossakowskiMatrix(0.5 * (c + c.conj().T), resid)


# ----------------------------------------------------------------- right-hand sides

def _check_exponent(beta, energies):
    top = 0.5 * beta * (energies.max() - energies.min())
    if top > MAX_EXPONENT:
        raise TruncationError(
            f"Boltzmann sandwich needs exp({top:.1f}), beyond double precision "
            f"(limit exp({MAX_EXPONENT:.0f})); lower n_max or beta*hbar*omega, "
            f"or use a wider floating-point type"
        )


def _mode_sandwich(rho, h, q, p, pm: ModeParams, hbar):
    e, v = np.linalg.eigh(h)
    _check_exponent(pm.beta, e)
    e = e - e.min()
    up = (v * np.exp(0.5 * pm.beta * e)) @ v.conj().T
    dn = (v * np.exp(-0.5 * pm.beta * e)) @ v.conj().T
    x = up @ rho @ up
    out = np.zeros_like(rho)
    for op, gamma in ((q, pm.gamma_p), (p, pm.gamma_q)):
        if gamma:
            out -= gamma / (pm.beta * hbar**2) * commutator(dn @ commutator(x, op) @ dn, op)
    return out


def sandwich_rhs(rho, modes: Union[QuantumMode, Sequence[QuantumMode]]) -> np.ndarray:
    """Double-commutator form of the master equation.

    For independent modes the Boltzmann factors of the other modes commute
    with the local ``q`` and ``p`` and cancel, so each mode's sandwich is
    built from its own Hamiltonian.
    """
    modes = [modes] if isinstance(modes, QuantumMode) else list(modes)
    rho = np.asarray(getattr(rho, "data", rho), dtype=complex)
    dims = [m.ops.dim for m in modes]
    if rho.shape != (int(np.prod(dims)),) * 2:
        raise DimensionError(f"state of shape {rho.shape} does not match modes {dims}")
    hbar = modes[0].units.hbar
    total = sum(embed(m.ops.hamiltonian, k, dims) for k, m in enumerate(modes))
    out = (1j / hbar) * commutator(rho, total)
    for k, m in enumerate(modes):
        h, q, p = (embed(o, k, dims) for o in (m.ops.hamiltonian, m.ops.q, m.ops.p))
        out += _mode_sandwich(rho, h, q, p, m.params, hbar)
    return out


def dissipator(rho, op, weight, hbar):
    """``(weight/hbar)(2 L rho L^+ - {L^+ L, rho})``."""
    lad = op.conj().T
    return (weight / hbar) * (2 * op @ rho @ lad - anticommutator(lad @ op, rho))


def tcl_rhs(rho, h_eff, jumps, hbar: float = 1.0) -> np.ndarray:
    """Commutator with ``h_eff`` plus the weighted dissipators ``jumps = [(L, kappa), ...]``."""
    rho = np.asarray(getattr(rho, "data", rho), dtype=complex)
    out = (1j / hbar) * commutator(rho, h_eff)
    for op, w in jumps:
        if w:
            out += dissipator(rho, op, w, hbar)
    return out


# ----------------------------------------------------------------- generator

class Generator:
    """Generator of independent modes in the rewritten (effective Hamiltonian) form."""

    def __init__(self, modes: Sequence[QuantumMode]):
        modes = list(modes)
        if not modes:
            raise ParameterError("at least one mode is required")
        hbars = {m.units.hbar for m in modes}
        if len(hbars) != 1:
            raise ParameterError("all modes must share one hbar")
        self.modes = modes
        self.hbar = hbars.pop()
        self.k_boltzmann = modes[0].units.k_boltzmann
        self.dims = [m.ops.dim for m in modes]
        self.dim = int(np.prod(self.dims))
        self.lindblads = [build_lindblad_set(m) for m in modes]
        self.mode_hamiltonians = [embed(m.ops.hamiltonian, k, self.dims) for k, m in enumerate(modes)]
        self.hamiltonian = sum(self.mode_hamiltonians)
        h_eff = np.zeros((self.dim, self.dim), dtype=complex)
        jumps = []
        for k, (m, ls) in enumerate(zip(modes, self.lindblads)):
            h, q, p = (embed(o, k, self.dims) for o in (m.ops.hamiltonian, m.ops.q, m.ops.p))
            h_eff += ls.effective_hamiltonian(h, q, p)
            for op, w in zip(ls.operators, ls.weights):
                if w:
                    jumps.append((embed(op, k, self.dims), float(w)))
        self.effective_hamiltonian = h_eff
        self.jumps = jumps
        self.betas = np.array([m.params.beta for m in modes])
        self._super = None

    @property
    def deltas(self):
        return [ls.delta for ls in self.lindblads]

    @property
    def is_gksl(self) -> bool:
        """All weights non-negative, which makes the generator completely positive."""
        return all(w >= 0 for _, w in self.jumps)

    def rhs(self, rho) -> np.ndarray:
        return tcl_rhs(rho, self.effective_hamiltonian, self.jumps, self.hbar)

    def sandwich(self, rho) -> np.ndarray:
        return sandwich_rhs(rho, self.modes)

    def rate_bound(self) -> float:
        """Upper bound on the generator norm, used to size time steps."""
        r = 2 * np.linalg.norm(self.effective_hamiltonian, 2) / self.hbar
        for op, w in self.jumps:
            r += 4 * abs(w) * np.linalg.norm(op, 2) ** 2 / self.hbar
        return float(r)

    def superoperator(self) -> sparse.csr_matrix:
        """Sparse matrix acting on column-stacked ``vec(rho)``."""
        if self._super is not None:
            return self._super
        eye = sparse.identity(self.dim, format="csr", dtype=complex)
        hs = sparse.csr_matrix(self.effective_hamiltonian)
        s = (1j / self.hbar) * (sparse.kron(hs.T, eye) - sparse.kron(eye, hs))
        for op, w in self.jumps:
            L = sparse.csr_matrix(op)
            LdL = (L.conj().T @ L).tocsr()
            s = s + (w / self.hbar) * (2 * sparse.kron(L.conj(), L) - sparse.kron(eye, LdL)
                                       - sparse.kron(LdL.T, eye))
        s = s.tocsr()
        s.eliminate_zeros()
        self._super = s
        return s


def fermion_generator(params: ModeParams, units: UnitsConfig = UnitsConfig()) -> Generator:
    """Generator of a two-level fermionic mode at the GKSL point."""
    if params.statistics is not Statistics.FERMION:
        raise ParameterError("fermion_generator needs fermion statistics")
    delta = delta_parameter(params)
    if abs(delta) > 1e-12:
        raise UnsupportedError(f"fermionic modes are supported only at delta = 0 (got {delta:.3g})")
    return Generator([fermion_mode(params, units)])


# ----------------------------------------------------------------- stationary state

def _closed_support(s: sparse.csr_matrix, seed: np.ndarray) -> np.ndarray:
    """Indices reachable from ``seed`` under repeated application of ``s``."""
    pattern = (abs(s) > 0).astype(np.int8).tocsr()
    reach = np.zeros(s.shape[0], dtype=bool)
    reach[seed] = True
    while True:
        nxt = reach | (pattern @ reach.astype(np.int8) > 0)
        if np.array_equal(nxt, reach):
            return np.flatnonzero(reach)
        reach = nxt


def stationary_state(gen: Generator) -> np.ndarray:
    """Null vector of the generator with unit trace.

    The solve is restricted to the smallest coordinate set that contains the
    populations and is closed under the generator (for ``delta = 0`` just the
    populations), which keeps large truncations cheap.
    """
    n = gen.dim
    s = gen.superoperator()
    diag = np.arange(n) * (n + 1)
    idx = _closed_support(s, diag)
    a = s[idx][:, idx].tolil()
    pos = np.searchsorted(idx, diag)
    a[pos[0], :] = 0
    a[pos[0], pos] = 1.0
    b = np.zeros(idx.size, dtype=complex)
    b[pos[0]] = 1.0
    x = spsolve(a.tocsc(), b)
    vec = np.zeros(n * n, dtype=complex)
    vec[idx] = x
    rho = vec.reshape(n, n, order="F")
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


# ----------------------------------------------------------------- evolution

@dataclass
class Evolution:
    times: np.ndarray
    states: list
    rates: list
    min_eigenvalues: np.ndarray
    findings: list = field(default_factory=list)


def evolve(rho0, gen: Generator, t_grid, dt: Optional[float] = None, psd_tol: float = 1e-9
           ) -> Evolution:
    """RK4 integration of the generator, sampled on ``t_grid``.

    Loss of positivity is a solver fault for completely positive generators
    and a recorded finding otherwise.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or np.any(np.diff(t_grid) <= 0):
        raise ParameterError("t_grid must be strictly increasing")
    limit = 0.01 / gen.rate_bound()
    dt = limit if dt is None else dt
    if dt > limit * (1 + 1e-12):
        raise ParameterError(f"dt={dt:.3g} exceeds 0.01/rate = {limit:.3g}")
    s = gen.superoperator()
    n = gen.dim
    y = np.asarray(getattr(rho0, "data", rho0), dtype=complex).ravel(order="F").copy()
    states, rates, mins, findings = [], [], [], []
    t = t_grid[0]

    def sample(t_now, y_now):
        rho = y_now.reshape(n, n, order="F")
        rho = 0.5 * (rho + rho.conj().T)
        lo = float(np.linalg.eigvalsh(rho).min())
        if lo < -psd_tol:
            msg = f"negative eigenvalue {lo:.3e} at t={t_now:.6g}"
            if gen.is_gksl:
                raise SolverFault(msg)
            findings.append(msg)
            log.info("positivity finding: %s", msg)
        states.append(rho)
        rates.append(gen.rhs(rho))
        mins.append(lo)

    sample(t, y)
    for t_next in t_grid[1:]:
        k = max(1, int(np.ceil((t_next - t) / dt - 1e-9)))
        h = (t_next - t) / k
        for _ in range(k):
            k1 = s @ y
            k2 = s @ (y + 0.5 * h * k1)
            k3 = s @ (y + 0.5 * h * k2)
            k4 = s @ (y + h * k3)
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t_next
        sample(t, y)
    return Evolution(t_grid.copy(), states, rates, np.array(mins), findings)


# ----------------------------------------------------------------- thermodynamics

def quantum_heat_current(rho_dot, hamiltonian) -> float:
    return float(np.real(np.trace(rho_dot @ hamiltonian)))


def von_neumann_entropy(rho, k_boltzmann: float = 1.0) -> float:
    w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    w = w[w > 0]
    return float(-k_boltzmann * np.sum(w * np.log(w)))


def entropy_rate(rho, rho_dot, k_boltzmann: float = 1.0, null_tol: float = 1e-15) -> float:
    """``-k_B Tr[rho_dot ln rho]`` evaluated in the eigenbasis of ``rho``.

    Eigenvalues at or below ``null_tol`` contribute nothing while they stay
    empty; a positive inflow into such a level makes the rate ``+inf``.
    """
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    diag = np.real(np.einsum("ij,jk,ki->i", v.conj().T, rho_dot, v))
    keep = w > null_tol
    inflow = diag[~keep]
    if inflow.size and inflow.max() > null_tol * max(1.0, np.abs(diag).max()):
        return math.inf
    return float(-k_boltzmann * np.sum(diag[keep] * np.log(w[keep])))


def entropy_production(rho, rho_dot, betas, hamiltonians, k_boltzmann: float = 1.0) -> float:
    """``dS/dt - sum_i k_B beta_i dQ_i/dt``."""
    out = entropy_rate(rho, rho_dot, k_boltzmann)
    for b, h in zip(betas, hamiltonians):
        out -= k_boltzmann * b * quantum_heat_current(rho_dot, h)
    return float(out)
