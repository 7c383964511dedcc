"""Finite-volume solver for the one-mode generalized Kramers equation.

The density ``f(q, p)`` lives on cell centres of a uniform grid and evolves in
conservative flux form ``df/dt = -d_q J_q - d_p J_p`` with zero flux through
the outer faces.  Each face flux is split into

* a Hamiltonian part, the face velocity times a sixth-order centred face
  interpolant of ``f``, and
* a bath part ``-(gamma/beta) (d f + beta dH f)`` discretised with
  exponential fitting: ``-(D/h) (f_+ e^{beta dH/2} - f_- e^{-beta dH/2})``.
  Only Hamiltonian differences between neighbouring cells are exponentiated,
  so large ``beta H`` at the grid edge cannot overflow.

The fitted bath flux vanishes identically on the Gibbs state and makes the
bath part a reversible Markov generator, which gives an exact discrete
counterpart of the entropy-production identity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .errors import CFLError, DimensionError, PositivityError, ResolutionError, SupportError
from .model import ClassicalHamiltonian, ModeParams

log = logging.getLogger(__name__)

MIN_POINTS_PER_STD = 8
CLIP_MASS_LIMIT = 1e-8


@dataclass(frozen=True)
class PhaseGrid:
    q: np.ndarray
    p: np.ndarray

    @property
    def dq(self) -> float:
        return float(self.q[1] - self.q[0])

    @property
    def dp(self) -> float:
        return float(self.p[1] - self.p[0])

    @property
    def cell(self) -> float:
        return self.dq * self.dp

    @property
    def shape(self):
        return (self.q.size, self.p.size)

    def mesh(self):
        return np.meshgrid(self.q, self.p, indexing="ij")

    @classmethod
    def centered(cls, q_half_width: float, p_half_width: float, n_q: int, n_p: int):
        dq = 2 * q_half_width / n_q
        dp = 2 * p_half_width / n_p
        q = -q_half_width + (np.arange(n_q) + 0.5) * dq
        p = -p_half_width + (np.arange(n_p) + 0.5) * dp
        return cls(q, p)

    @classmethod
    def thermal(cls, params: ModeParams, n_q: int, n_p: int, width: float = 8.0):
        """Grid spanning ``+-width`` Gibbs standard deviations in each direction."""
        sq = 1.0 / np.sqrt(params.beta * params.mass * params.omega**2)
        sp = np.sqrt(params.mass / params.beta)
        return cls.centered(width * sq, width * sp, n_q, n_p)


@dataclass
class GridDistribution:
    grid: PhaseGrid
    f: np.ndarray
    t: float = 0.0
    dt: Optional[float] = None

    def mass(self) -> float:
        return float(self.f.sum() * self.grid.cell)


def _energy_on(H: ClassicalHamiltonian, q, p):
    return H.energy(np.asarray(q)[..., None, None], np.asarray(p)[..., None, None])


def _grad_q_on(H: ClassicalHamiltonian, q, p):
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    return H.grad_q(q[..., None, None], p[..., None, None])[..., 0, 0]


def _grad_p_on(H: ClassicalHamiltonian, q, p):
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    return H.grad_p(q[..., None, None], p[..., None, None])[..., 0, 0]


def gibbs_state(grid: PhaseGrid, H: ClassicalHamiltonian, beta: float) -> np.ndarray:
    Q, P = grid.mesh()
    e = _energy_on(H, Q, P)
    w = np.exp(-beta * (e - e.min()))
    return w / (w.sum() * grid.cell)


def gaussian_state(grid: PhaseGrid, mean, cov) -> np.ndarray:
    Q, P = grid.mesh()
    x = np.stack([Q - mean[0], P - mean[1]])
    prec = np.linalg.inv(np.asarray(cov, dtype=float))
    w = np.exp(-0.5 * np.einsum("iab,ij,jab->ab", x, prec, x))
    return w / (w.sum() * grid.cell)


def _log_mean(x, y):
    """Logarithmic mean ``(x - y)/(ln x - ln y)``, continuous at ``x == y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = y / x
        u = r - 1.0
        small = np.abs(u) < 1e-4
        exact = x * u / np.log(r)
        series = x * (1 + u / 2 - u**2 / 12 + u**3 / 24)
        out = np.where(small, series, exact)
    return np.where((x <= 0) | (y <= 0), 0.0, out)


_FACE_STENCILS = {
    2: np.array([0.0, 0.0, 1.0, 1.0, 0.0, 0.0]) / 2.0,
    4: np.array([0.0, -1.0, 7.0, 7.0, -1.0, 0.0]) / 12.0,
    6: np.array([1.0, -8.0, 37.0, 37.0, -8.0, 1.0]) / 60.0,
}
_FACE_OFFSETS = (-2, -1, 0, 1, 2, 3)


def _face_weights(n: int) -> np.ndarray:
    """Centred interpolation weights on ``f[i-2..i+3]`` for the ``n - 1`` inner faces.

    Sixth order in the interior, dropping to fourth and second order on the
    faces next to the walls where the wide stencil does not fit.
    """
    w = np.tile(_FACE_STENCILS[6], (n - 1, 1))
    w[[0, -1]] = _FACE_STENCILS[2]
    if n > 3:
        w[[1, -2]] = _FACE_STENCILS[4]
    return w


def _face_values(f, axis: int):
    g = np.moveaxis(f, axis, 0)
    w = _face_weights(g.shape[0])
    n = g.shape[0]
    out = np.zeros((n - 1,) + g.shape[1:])
    base = np.arange(n - 1)
    for k, off in enumerate(_FACE_OFFSETS):
        src = np.clip(base + off, 0, n - 1)
        out += w[:, k][:, None] * g[src]
    return np.moveaxis(out, 0, axis)


class KramersOperator:
    """Discrete generator of the generalized Kramers equation for one mode.

    ``rhs`` applies the face-flux stencil directly; ``matrix`` assembles the
    same operator as a sparse matrix for time stepping and steady states.
    """

    def __init__(self, grid: PhaseGrid, H: ClassicalHamiltonian, params: Optional[ModeParams] = None):
        if H.n_modes != 1 or H.dim != 1:
            raise DimensionError("the grid solver handles a single mode in one dimension")
        self.grid = grid
        self.H = H
        self.params = params if params is not None else H.modes[0]
        pm = self.params
        self.beta = pm.beta
        self.gamma_q = pm.gamma_q
        self.gamma_p = pm.gamma_p
        self.diff_q = pm.gamma_q / pm.beta
        self.diff_p = pm.gamma_p / pm.beta

        q, p = grid.q, grid.p
        qf = 0.5 * (q[1:] + q[:-1])
        pf = 0.5 * (p[1:] + p[:-1])
        self.energy = _energy_on(H, *grid.mesh())
        # q faces: shape (n_q - 1, n_p)
        QF, PQ = np.meshgrid(qf, p, indexing="ij")
        self.vel_q = _grad_p_on(H, QF, PQ)
        self.dH_q = np.diff(self.energy, axis=0)
        self.grad_q_face = _grad_q_on(H, QF, PQ)
        # p faces: shape (n_q, n_p - 1)
        QP, PF = np.meshgrid(q, pf, indexing="ij")
        self.vel_p = -_grad_q_on(H, QP, PF)
        self.dH_p = np.diff(self.energy, axis=1)
        self.grad_p_face = _grad_p_on(H, QP, PF)
        self._matrix = None
        self._dt_limit = None

    # ------------------------------------------------------------ checks

    def check_resolution(self):
        pm = self.params
        sq = 1.0 / np.sqrt(pm.beta * pm.mass * pm.omega**2)
        sp = np.sqrt(pm.mass / pm.beta)
        pts_q = sq / self.grid.dq
        pts_p = sp / self.grid.dp
        if min(pts_q, pts_p) < MIN_POINTS_PER_STD:
            raise ResolutionError(
                f"grid resolves the thermal widths with {pts_q:.1f} (q) and {pts_p:.1f} (p) "
                f"points per standard deviation; need >= {MIN_POINTS_PER_STD}"
            )

    # ------------------------------------------------------------ fluxes

    def bath_fluxes(self, f):
        g = self.grid
        eq = np.exp(0.5 * self.beta * self.dH_q)
        ep = np.exp(0.5 * self.beta * self.dH_p)
        jq = -(self.diff_q / g.dq) * (f[1:, :] * eq - f[:-1, :] / eq)
        jp = -(self.diff_p / g.dp) * (f[:, 1:] * ep - f[:, :-1] / ep)
        return jq, jp

    def hamiltonian_fluxes(self, f):
        return (self.vel_q * _face_values(f, axis=0),
                self.vel_p * _face_values(f, axis=1))

    def fluxes(self, f):
        hq, hp = self.hamiltonian_fluxes(f)
        bq, bp = self.bath_fluxes(f)
        return hq + bq, hp + bp

    def divergence(self, jq, jp):
        g = self.grid
        out = np.zeros(g.shape)
        out[:-1, :] -= jq / g.dq
        out[1:, :] += jq / g.dq
        out[:, :-1] -= jp / g.dp
        out[:, 1:] += jp / g.dp
        return out

    def rhs(self, f):
        return self.divergence(*self.fluxes(f))

    # ------------------------------------------------------------ matrix form

    def matrix(self) -> sparse.csr_matrix:
        if self._matrix is not None:
            return self._matrix
        g = self.grid
        nq, npp = g.shape
        idx = np.arange(nq * npp).reshape(nq, npp)
        rows, cols, vals = [], [], []

        def add_face(lo, hi, terms, h):
            # flux J = sum_k c_k f[col_k] leaves lo and enters hi
            for col, c in terms:
                for r, sign in ((lo, -1.0), (hi, 1.0)):
                    rows.append(r.ravel())
                    cols.append(col.ravel())
                    vals.append((sign * c / h).ravel())

        for axis, vel, dH, diff, h in ((0, self.vel_q, self.dH_q, self.diff_q, g.dq),
                                       (1, self.vel_p, self.dH_p, self.diff_p, g.dp)):
            ix = np.moveaxis(idx, axis, 0)
            v = np.moveaxis(vel, axis, 0)
            e = np.exp(0.5 * self.beta * np.moveaxis(dH, axis, 0))
            lo, hi = ix[:-1], ix[1:]
            terms = [(lo, (diff / h) / e), (hi, -(diff / h) * e)]
            w = _face_weights(ix.shape[0])
            for k, off in enumerate(_FACE_OFFSETS):
                src = np.clip(np.arange(ix.shape[0] - 1) + off, 0, ix.shape[0] - 1)
                terms.append((ix[src], v * w[:, k][:, None]))
            add_face(lo, hi, terms, h)
        n = nq * npp
        m = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(n, n))
        self._matrix = m.tocsr()
        self._matrix.eliminate_zeros()
        return self._matrix

    def max_stable_dt(self, safety: float = 2.5) -> float:
        """Explicit RK4 step limit from a Gershgorin bound on the generator."""
        m = self.matrix()
        if self._dt_limit is None:
            bound = np.max(np.asarray(abs(m).sum(axis=1)).ravel())
            self._dt_limit = safety / bound
        return self._dt_limit

    def discrete_equilibrium(self) -> np.ndarray:
        """Normalised null vector of the discrete generator."""
        m = self.matrix().tolil()
        n = m.shape[0]
        m[0, :] = np.full(n, self.grid.cell)
        b = np.zeros(n)
        b[0] = 1.0
        f = spsolve(m.tocsc(), b)
        return f.reshape(self.grid.shape)


def kramers_rhs(f, H: ClassicalHamiltonian, params: Optional[ModeParams] = None,
                grid: Optional[PhaseGrid] = None, check: bool = True) -> np.ndarray:
    """Time derivative of a grid density (convenience wrapper around :class:`KramersOperator`)."""
    if isinstance(f, GridDistribution):
        grid, f = f.grid, f.f
    if grid is None:
        raise ValueError("grid is required when f is a bare array")
    op = KramersOperator(grid, H, params)
    if check:
        op.check_resolution()
    return op.rhs(f)


def step_distribution(dist: GridDistribution, op: KramersOperator, dt: Optional[float] = None
                      ) -> GridDistribution:
    """One RK4 step of the matrix form, followed by positivity repair."""
    limit = op.max_stable_dt()
    dt = dist.dt if dt is None else dt
    if dt is None:
        dt = 0.9 * limit
    if dt > limit:
        raise CFLError(f"dt={dt:.3g} exceeds the explicit stability limit {limit:.3g}")
    L = op.matrix()
    shape = dist.f.shape
    y = dist.f.ravel()
    k1 = L @ y
    k2 = L @ (y + 0.5 * dt * k1)
    k3 = L @ (y + 0.5 * dt * k2)
    k4 = L @ (y + dt * k3)
    y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    f = y.reshape(shape)
    neg = f < 0
    if np.any(neg):
        clipped = -f[neg].sum() * dist.grid.cell
        if clipped > CLIP_MASS_LIMIT:
            raise PositivityError(f"negative mass {clipped:.3g} exceeds {CLIP_MASS_LIMIT:g} in one step")
        f = np.where(neg, 0.0, f)
        f /= f.sum() * dist.grid.cell
        log.debug("clipped %.3g negative mass at t=%.4g", clipped, dist.t + dt)
    return GridDistribution(dist.grid, f, dist.t + dt, dt)


def kl_divergence(f, f_star, cell: float) -> float:
    """``sum f ln(f/f*) dq dp`` with ``0 ln 0 = 0``."""
    f = np.asarray(f, dtype=float)
    f_star = np.asarray(f_star, dtype=float)
    if f.shape != f_star.shape:
        raise SupportError("f and f* live on different grids")
    pos = f > 0
    if np.any(f_star[pos] <= 0):
        raise SupportError("f* vanishes on the support of f")
    return float(np.sum(f[pos] * np.log(f[pos] / f_star[pos])) * cell)


def shannon_entropy(f, cell: float, k_boltzmann: float = 1.0) -> float:
    pos = f > 0
    return float(-k_boltzmann * np.sum(f[pos] * np.log(f[pos])) * cell)


def grid_heat_rate(f, rhs, op: KramersOperator) -> float:
    """Mean heat absorbed per unit time, ``sum (df/dt) H dq dp``."""
    return float(np.sum(rhs * op.energy) * op.grid.cell)


def entropy_rate(f, rhs, cell: float, k_boltzmann: float = 1.0) -> float:
    """``dS/dt = -k_B sum (df/dt)(ln f + 1) dq dp``; empty cells contribute nothing."""
    pos = f > 0
    return float(-k_boltzmann * np.sum(rhs[pos] * (np.log(f[pos]) + 1.0)) * cell)


def entropy_production_density(f, op: KramersOperator, k_boltzmann: float = 1.0):
    """Face-wise integrand ``k_B (beta/gamma) J_bath^2 / f`` for both directions.

    ``f`` at a face is the logarithmic mean of the Boltzmann-reweighted
    neighbours, the face average for which the bath flux is exactly
    ``-(gamma/beta) f d ln(f e^{beta H})``.  Faces next to an empty cell are
    dropped, matching the ``0 ln 0 = 0`` convention of :func:`entropy_rate`.
    """
    jq, jp = op.bath_fluxes(f)
    eq = np.exp(0.5 * op.beta * op.dH_q)
    ep = np.exp(0.5 * op.beta * op.dH_p)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = []
        for j, gamma, lo, hi in ((jq, op.gamma_q, f[:-1, :] / eq, f[1:, :] * eq),
                                 (jp, op.gamma_p, f[:, :-1] / ep, f[:, 1:] * ep)):
            if gamma == 0:
                out.append(np.zeros_like(j))
                continue
            face = _log_mean(lo, hi)
            dens = np.where((j == 0) | (lo <= 0) | (hi <= 0), 0.0,
                            k_boltzmann * op.beta / gamma * j**2 / face)
            out.append(dens)
    return out[0], out[1]


def grid_entropy_production(f, op: KramersOperator, k_boltzmann: float = 1.0) -> float:
    """Quadrature of the squared-flux entropy production (non-negative by construction)."""
    dq_part, dp_part = entropy_production_density(f, op, k_boltzmann)
    return float((dq_part.sum() + dp_part.sum()) * op.grid.cell)


@dataclass
class KramersRun:
    """Diagnostics of one relaxation run.

    ``diagnostics`` holds the columns of :data:`DIAGNOSTIC_COLUMNS` at the
    recorded times; ``kl_steps`` is the divergence after every single step.
    """

    times: np.ndarray
    diagnostics: dict
    kl_steps: np.ndarray
    snapshots: list = field(default_factory=list)
    final: Optional[GridDistribution] = None


DIAGNOSTIC_COLUMNS = ("t", "mass", "E", "Q", "KL", "S", "dSdt", "dQdt", "entropy_production")


def relax(dist: GridDistribution, op: KramersOperator, duration: float, dt: Optional[float] = None,
          f_star=None, snapshot_every: Optional[int] = None, diagnostics_every: int = 1,
          k_boltzmann: float = 1.0) -> KramersRun:
    """Step ``dist`` forward and record the relaxation diagnostics.

    ``f_star`` defaults to the on-grid Gibbs state of the operator's bath.
    """
    op.check_resolution()
    if f_star is None:
        f_star = gibbs_state(op.grid, op.H, op.beta)
    if np.any(f_star <= 0):
        raise SupportError("reference state must be positive on the whole grid")
    dt = 0.9 * op.max_stable_dt() if dt is None else dt
    n_steps = max(1, int(np.ceil(duration / dt)))
    dt = duration / n_steps
    cell = op.grid.cell
    log_star = np.log(f_star)
    cols = {c: [] for c in DIAGNOSTIC_COLUMNS}
    kl_steps = np.empty(n_steps + 1)
    snaps = []

    def kl(f):
        pos = f > 0
        return float(np.sum(f[pos] * (np.log(f[pos]) - log_star[pos])) * cell)

    # heat rate as a dot product, f . (L^T H); Q is its per-step trapezoid sum
    heat_weights = op.matrix().T @ op.energy.ravel() * cell
    heat = 0.0

    def record(d, kl_value):
        r = op.rhs(d.f)
        cols["t"].append(d.t)
        cols["mass"].append(d.mass())
        cols["E"].append(float(np.sum(d.f * op.energy) * cell))
        cols["Q"].append(heat)
        cols["KL"].append(kl_value)
        cols["S"].append(shannon_entropy(d.f, cell, k_boltzmann))
        cols["dSdt"].append(entropy_rate(d.f, r, cell, k_boltzmann))
        cols["dQdt"].append(grid_heat_rate(d.f, r, op))
        cols["entropy_production"].append(grid_entropy_production(d.f, op, k_boltzmann))

    d = GridDistribution(dist.grid, dist.f.copy(), dist.t, dt)
    kl_steps[0] = kl(d.f)
    record(d, kl_steps[0])
    if snapshot_every:
        snaps.append(d)
    rate = float(d.f.ravel() @ heat_weights)
    for k in range(1, n_steps + 1):
        d = step_distribution(d, op, dt)
        new_rate = float(d.f.ravel() @ heat_weights)
        heat += 0.5 * dt * (rate + new_rate)
        rate = new_rate
        kl_steps[k] = kl(d.f)
        if k % diagnostics_every == 0 or k == n_steps:
            record(d, kl_steps[k])
        if snapshot_every and (k % snapshot_every == 0 or k == n_steps):
            snaps.append(d)
    diag = {c: np.asarray(v) for c, v in cols.items()}
    return KramersRun(diag["t"], diag, kl_steps, snaps, d)
