"""Ensemble integrator for the bath-coupled Brownian SDEs with energetics ledgers.

Both canonical coordinates are coupled to the bath of their mode::

    dq = (dH/dp - gamma_q dH/dq) dt + sqrt(2 gamma_q / beta) dB_q
    dp = (-dH/dq - gamma_p dH/dp) dt + sqrt(2 gamma_p / beta) dB_p

States advance with Euler-Maruyama (Ito).  Heat is booked with a Stratonovich
midpoint rule, so the two conventions are mixed on purpose: the midpoint is
what makes the per-step heat reproduce dH in the limit dt -> 0.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg

from .errors import DimensionError, IntegrationDiverged, ParameterError
from .model import ClassicalHamiltonian, HarmonicHamiltonian

log = logging.getLogger(__name__)

WORKERS_ENV = "RELAXSIM_WORKERS"
DIVERGENCE_LIMIT = 1e-3


@dataclass
class PhasePoint:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.q.shape != self.p.shape:
            raise DimensionError(f"q {self.q.shape} and p {self.p.shape} differ")


# ---------------------------------------------------------------- noise

def noise_streams(seed: int, block: int = 0):
    """Independent counter-based generators ``(initial, q-noise, p-noise)`` for one block."""
    ss = np.random.SeedSequence(seed, spawn_key=(block,))
    return tuple(np.random.Generator(np.random.Philox(child)) for child in ss.spawn(3))


def wiener_increments(n, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian increments with mean 0 and variance ``dt``; ``n`` may be a shape."""
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt!r}")
    return rng.standard_normal(n) * np.sqrt(dt)


# ---------------------------------------------------------------- one step

def em_step(state: PhasePoint, H: ClassicalHamiltonian, dt: float, dB_q, dB_p,
            t: float = 0.0, check_finite: bool = True) -> PhasePoint:
    gq, gp, beta = H.bath_arrays()
    q, p = state.q, state.p
    dHdq = H.grad_q(q, p, t)
    dHdp = H.grad_p(q, p, t)
    q_new = q + (dHdp - gq * dHdq) * dt + np.sqrt(2 * gq / beta) * dB_q
    p_new = p + (-dHdq - gp * dHdp) * dt + np.sqrt(2 * gp / beta) * dB_p
    if check_finite and not (np.all(np.isfinite(q_new)) and np.all(np.isfinite(p_new))):
        raise IntegrationDiverged("non-finite phase point after Euler-Maruyama step",
                                  {"t": t + dt, "dt": dt})
    return PhasePoint(q_new, p_new)


def heat_increment(pre: PhasePoint, post: PhasePoint, H: ClassicalHamiltonian,
                   dt: float, dB_q, dB_p, t: float = 0.0) -> np.ndarray:
    """Heat absorbed from each bath over one step, shape ``(..., n_modes)``.

    The bath kick on p, ``b_p = -gamma_p <dH/dp> dt + sqrt(2 gamma_p/beta) dB_p``,
    multiplies the midpoint velocity; the q-bath kick ``b_q`` is booked with the
    opposite-sign product against dp.  Writing both with midpoint
    (pre/post averaged) integrands, the ``b_p b_q`` cross terms cancel and the
    heat reduces to ``b_p <dH/dp> + b_q <dH/dq>``.
    """
    gq, gp, beta = H.bath_arrays()
    dHdq = 0.5 * (H.grad_q(pre.q, pre.p, t) + H.grad_q(post.q, post.p, t + dt))
    dHdp = 0.5 * (H.grad_p(pre.q, pre.p, t) + H.grad_p(post.q, post.p, t + dt))
    kick_p = -gp * dHdp * dt + np.sqrt(2 * gp / beta) * dB_p
    kick_q = -gq * dHdq * dt + np.sqrt(2 * gq / beta) * dB_q
    return np.sum(kick_p * dHdp + kick_q * dHdq, axis=-1)


def work_increment(H: ClassicalHamiltonian, state: PhasePoint, t: float, dt: float):
    """Energy injected by the control protocol over ``[t, t + dt]`` at fixed state.

    For an omega schedule this integrates ``m omega |q|^2 d omega`` exactly,
    which keeps instantaneous quenches (zero-width ramps) correct.
    """
    if not H.is_time_dependent():
        return np.zeros(state.q.shape[:-2])
    return H.energy(state.q, state.p, t + dt) - H.energy(state.q, state.p, t)


def standard_langevin_step(q, p, force: Callable, mass, gamma, nu, dt, dB_p):
    """Textbook underdamped Langevin step (position noise-free), used as a reference."""
    q_new = q + (p / mass) * dt
    p_new = p + (-force(q) - gamma * (p / mass)) * dt + np.sqrt(2 * nu) * dB_p
    return q_new, p_new


# ---------------------------------------------------------------- linear-response helpers

def drift_matrix(H: HarmonicHamiltonian, t: float = 0.0):
    """Drift ``A`` and diffusion ``D`` of the linear SDE for a harmonic H (``dim == 1``)."""
    n = H.n_modes
    gq, gp, beta = (a[:, 0] for a in H.bath_arrays())
    symp = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    friction = np.diag(np.concatenate([gq, gp]))
    A = (symp - friction) @ H.quadratic_form(t)
    D = np.diag(np.concatenate([2 * gq / beta, 2 * gp / beta]))
    return A, D


def stationary_covariance(H: HarmonicHamiltonian) -> np.ndarray:
    """Stationary covariance of ``(q_1..q_N, p_1..p_N)`` from the Lyapunov equation."""
    A, D = drift_matrix(H)
    return linalg.solve_continuous_lyapunov(A, -D)


def gaussian_entropy(cov, k_boltzmann: float = 1.0) -> float:
    cov = np.atleast_2d(cov)
    d = cov.shape[0]
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        return float("nan")
    return 0.5 * k_boltzmann * (d * np.log(2 * np.pi * np.e) + logdet)


def default_dt(H: ClassicalHamiltonian) -> float:
    return 0.01 / max(m.relaxation_rate() for m in H.modes)


# ---------------------------------------------------------------- ensembles

@dataclass(frozen=True)
class GaussianInitial:
    """Independent Gaussian start per coordinate; ``None`` variances mean Gibbs."""

    q_mean: float = 0.0
    p_mean: float = 0.0
    q_var: Optional[float] = None
    p_var: Optional[float] = None

    def sample(self, H: ClassicalHamiltonian, rng: np.random.Generator, n: int):
        shape = (n, H.n_modes, H.dim)
        gq, gp, beta = H.bath_arrays()
        if isinstance(H, HarmonicHamiltonian) and self.q_var is None and H.coupling:
            # correlated Gibbs state of the chain: cov = (beta K)^-1 (equal betas only)
            if np.ptp(beta) > 0:
                raise ParameterError("Gibbs start of a coupled chain needs equal betas")
            hess = H.quadratic_form()[: H.n_modes, : H.n_modes]
            chol = np.linalg.cholesky(np.linalg.inv(beta[0, 0] * hess))
            z = rng.standard_normal((n, H.dim, H.n_modes))
            q = np.swapaxes(z @ chol.T, -1, -2)
        else:
            q_var = self.q_var if self.q_var is not None else 1.0 / (beta * H.mass * H.omega_at(0.0) ** 2)
            q = self.q_mean + np.sqrt(q_var) * rng.standard_normal(shape)
        p_var = self.p_var if self.p_var is not None else H.mass / beta
        p = self.p_mean + np.sqrt(p_var) * rng.standard_normal(shape)
        return q, p


@dataclass
class EnsembleConfig:
    hamiltonian: ClassicalHamiltonian
    n_trajectories: int = 1000
    duration: float = 10.0
    dt: Optional[float] = None
    n_records: int = 21
    seed: int = 0
    block_size: int = 4096
    initial: object = field(default_factory=GaussianInitial)
    workers: Optional[int] = None

    def resolved_dt(self) -> float:
        return self.dt if self.dt is not None else default_dt(self.hamiltonian)


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    heat_per_bath: np.ndarray
    work: np.ndarray
    energy: np.ndarray


@dataclass
class PhaseEnsemble:
    """Snapshots of an ensemble run.

    ``q``/``p`` are ``(n_records, n_traj, n_modes, dim)``; ``heat`` is the
    cumulative heat per bath ``(n_records, n_traj, n_modes)``; ``work`` and
    ``energy`` are ``(n_records, n_traj)``.  Diverged trajectories (if under the
    abort threshold) are NaN and masked out of every statistic.
    """

    times: np.ndarray
    q: np.ndarray
    p: np.ndarray
    heat: np.ndarray
    work: np.ndarray
    energy: np.ndarray
    dt: float
    rng_seed: int
    n_steps: int
    diverged: np.ndarray

    @property
    def n_trajectories(self) -> int:
        return self.q.shape[1]

    @property
    def valid(self) -> np.ndarray:
        return ~self.diverged

    def trajectory(self, i: int) -> TrajectoryRecord:
        return TrajectoryRecord(self.times, self.q[:, i], self.p[:, i], self.heat[:, i],
                                self.work[:, i], self.energy[:, i])

    def phase_vectors(self, k: int) -> np.ndarray:
        """Flattened ``(q..., p...)`` of the valid trajectories at record ``k``."""
        q = self.q[k][self.valid]
        p = self.p[k][self.valid]
        n = q.shape[0]
        return np.concatenate([q.reshape(n, -1), p.reshape(n, -1)], axis=1)

    def mean(self, k: int = -1) -> np.ndarray:
        return self.phase_vectors(k).mean(axis=0)

    def covariance(self, k: int = -1) -> np.ndarray:
        return np.cov(self.phase_vectors(k), rowvar=False)

    def entropy(self, k: int = -1, k_boltzmann: float = 1.0) -> float:
        """Gaussian moment-matched Shannon entropy (exact for harmonic runs)."""
        return gaussian_entropy(self.covariance(k), k_boltzmann)

    def mean_energy(self) -> np.ndarray:
        return self.energy[:, self.valid].mean(axis=1)

    def mean_heat(self) -> np.ndarray:
        return self.heat[:, self.valid].mean(axis=1)

    def mean_work(self) -> np.ndarray:
        return self.work[:, self.valid].mean(axis=1)

    def first_law_residual(self) -> np.ndarray:
        """Per-trajectory ``Delta H - sum Q - W`` over the whole run."""
        de = self.energy[-1] - self.energy[0]
        dq = self.heat[-1].sum(axis=-1) - self.heat[0].sum(axis=-1)
        dw = self.work[-1] - self.work[0]
        return (de - dq - dw)[self.valid]


def _worker_count(requested):
    if requested is not None:
        return max(1, int(requested))
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def _run_block(cfg: EnsembleConfig, block: int, n: int, dt: float, n_steps: int, record_at):
    H = cfg.hamiltonian
    rng_init, rng_q, rng_p = noise_streams(cfg.seed, block)
    q, p = cfg.initial.sample(H, rng_init, n)
    n_rec = len(record_at)
    out_q = np.empty((n_rec, n, H.n_modes, H.dim))
    out_p = np.empty_like(out_q)
    out_heat = np.empty((n_rec, n, H.n_modes))
    out_work = np.empty((n_rec, n))
    out_energy = np.empty((n_rec, n))
    heat = np.zeros((n, H.n_modes))
    work = np.zeros(n)
    shape = (n, H.n_modes, H.dim)
    r = 0
    first_bad = None
    state = PhasePoint(q, p)
    for step in range(n_steps + 1):
        t = step * dt
        if r < n_rec and step == record_at[r]:
            out_q[r], out_p[r] = state.q, state.p
            out_heat[r], out_work[r] = heat, work
            out_energy[r] = H.energy(state.q, state.p, t)
            r += 1
        if step == n_steps:
            break
        dB_q = wiener_increments(shape, dt, rng_q)
        dB_p = wiener_increments(shape, dt, rng_p)
        work = work + work_increment(H, state, t, dt)
        new = em_step(state, H, dt, dB_q, dB_p, t, check_finite=False)
        heat = heat + heat_increment(state, new, H, dt, dB_q, dB_p, t)
        state = new
        if first_bad is None and step % 64 == 63 and not np.all(np.isfinite(state.p)):
            first_bad = t + dt
    bad = ~(np.isfinite(out_q[-1]).all(axis=(-2, -1)) & np.isfinite(out_p[-1]).all(axis=(-2, -1))
            & np.isfinite(out_heat[-1]).all(axis=-1))
    return out_q, out_p, out_heat, out_work, out_energy, bad, first_bad


def run_ensemble(cfg: EnsembleConfig) -> PhaseEnsemble:
    """Integrate ``cfg.n_trajectories`` independent trajectories.

    Trajectories are processed in fixed-size blocks, each with its own noise
    substreams, so results are bit-identical for a given seed regardless of
    the worker count.
    """
    if cfg.n_trajectories < 1 or cfg.duration <= 0:
        raise ParameterError("need n_trajectories >= 1 and duration > 0")
    dt = cfg.resolved_dt()
    n_steps = max(1, int(round(cfg.duration / dt)))
    n_rec = max(2, min(cfg.n_records, n_steps + 1))
    record_at = np.unique(np.round(np.linspace(0, n_steps, n_rec)).astype(int))
    sizes = [min(cfg.block_size, cfg.n_trajectories - s)
             for s in range(0, cfg.n_trajectories, cfg.block_size)]

    def job(b):
        return _run_block(cfg, b, sizes[b], dt, n_steps, record_at)

    workers = _worker_count(cfg.workers)
    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    else:
        parts = [job(b) for b in range(len(sizes))]

    diverged = np.concatenate([part[5] for part in parts])
    n_bad = int(diverged.sum())
    if n_bad > DIVERGENCE_LIMIT * cfg.n_trajectories:
        onsets = [part[6] for part in parts if part[6] is not None]
        raise IntegrationDiverged(
            f"{n_bad} of {cfg.n_trajectories} trajectories diverged",
            {"diverged": n_bad, "n_trajectories": cfg.n_trajectories, "dt": dt,
             "first_detected_t": min(onsets) if onsets else None},
        )
    if n_bad:
        log.warning("%d trajectories diverged and are excluded from statistics", n_bad)
    return PhaseEnsemble(
        times=record_at * dt,
        q=np.concatenate([part[0] for part in parts], axis=1),
        p=np.concatenate([part[1] for part in parts], axis=1),
        heat=np.concatenate([part[2] for part in parts], axis=1),
        work=np.concatenate([part[3] for part in parts], axis=1),
        energy=np.concatenate([part[4] for part in parts], axis=1),
        dt=dt, rng_seed=cfg.seed, n_steps=n_steps, diverged=diverged,
    )


def ensemble_summary(ens: PhaseEnsemble, H: ClassicalHamiltonian, k_boltzmann: float = 1.0) -> dict:
    n, d = H.n_modes, H.dim
    cov = ens.covariance(-1)
    mean = ens.mean(-1)
    duration = float(ens.times[-1] - ens.times[0])
    resid = ens.first_law_residual()
    out = {
        "n_trajectories": ens.n_trajectories,
        "n_diverged": int(ens.diverged.sum()),
        "dt": ens.dt,
        "n_steps": ens.n_steps,
        "seed": ens.rng_seed,
        "final_moments": {
            "mean_q": mean[: n * d].tolist(),
            "mean_p": mean[n * d:].tolist(),
            "var_q": np.diag(cov)[: n * d].tolist(),
            "var_p": np.diag(cov)[n * d:].tolist(),
            "var_q_stderr": (np.diag(cov)[: n * d] * np.sqrt(2.0 / ens.valid.sum())).tolist(),
        },
        "ledger": {
            "mean_energy_change": float(ens.mean_energy()[-1] - ens.mean_energy()[0]),
            "mean_heat_per_bath": ens.mean_heat()[-1].tolist(),
            "mean_work": float(ens.mean_work()[-1]),
            "entropy_initial": ens.entropy(0, k_boltzmann),
            "entropy_final": ens.entropy(-1, k_boltzmann),
        },
        "convergence": {
            "first_law_residual_mean_abs_per_time": float(np.mean(np.abs(resid)) / duration),
            "first_law_residual_mean_per_time": float(np.mean(resid) / duration),
        },
    }
    if isinstance(H, HarmonicHamiltonian) and d == 1 and not H.is_time_dependent():
        lyap = stationary_covariance(H)
        out["lyapunov_stationary_covariance"] = lyap.tolist()
    return out
