"""Scenario runners: turn a :class:`RunConfig` into tables and JSON payloads.

Runners are free of file I/O; the command-line layer writes what they
return.  Each returns a mapping ``relative path -> Table | dict``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

from . import classical as cl
from . import kramers as kg
from . import quantum as qm
from .config import RunConfig
from .cptp import choi_check
from .errors import ParameterError
from .model import (CustomPotentialHamiltonian, HarmonicHamiltonian, quartic_potential)


@dataclass
class Table:
    header: list
    rows: list


# ----------------------------------------------------------------- shared helpers

def build_classical_hamiltonian(cfg: RunConfig):
    params = cfg.mode_params
    ham = cfg.hamiltonian
    if ham.quartic:
        v, grad = quartic_potential(params, ham.quartic)
        return CustomPotentialHamiltonian(tuple(params), v, grad, dim=ham.dim)
    schedules = tuple(m.schedule for m in cfg.modes)
    if all(s is None for s in schedules):
        schedules = None
    return HarmonicHamiltonian(tuple(params), dim=ham.dim, coupling=ham.coupling, schedules=schedules)


def quantum_truncation(cfg: RunConfig) -> int:
    if cfg.quantum.n_max is not None:
        return cfg.quantum.n_max
    return max(qm.truncation_for(p, cfg.units) for p in cfg.mode_params)


def build_generator(cfg: RunConfig, n_max=None) -> qm.Generator:
    if cfg.scenario == "fermion":
        return qm.fermion_generator(cfg.mode_params[0], cfg.units)
    n = quantum_truncation(cfg) if n_max is None else n_max
    return qm.Generator([qm.boson_mode(p, n, cfg.units) for p in cfg.mode_params])


def resolved_controls(cfg: RunConfig) -> dict:
    """Scenario controls with defaults and step-size rules made explicit."""
    sc = cfg.scenario
    out = {}
    if sc == "classical":
        c = cfg.classical
        H = build_classical_hamiltonian(cfg)
        out["hamiltonian"] = vars(cfg.hamiltonian).copy()
        out["classical"] = dict(vars(c), dt=c.dt if c.dt is not None else cl.default_dt(H))
    elif sc == "kramers":
        k = cfg.kramers
        op = _kramers_operator(cfg)
        d = dict(vars(k), dt=k.dt if k.dt is not None else 0.9 * op.max_stable_dt())
        d["mean"], d["cov"] = list(k.mean), [list(r) for r in k.cov]
        out["hamiltonian"] = vars(cfg.hamiltonian).copy()
        out["kramers"] = d
    elif sc in ("quantum", "fermion"):
        gen = build_generator(cfg)
        q = cfg.quantum
        out["quantum"] = dict(vars(q), n_max=gen.dims[0],
                              dt=q.dt if q.dt is not None else 0.01 / gen.rate_bound())
    elif sc == "cptp-check":
        out["cptp"] = vars(cfg.cptp).copy()
    return out


def _fmt_header(prefix, ids, dim=1):
    if dim == 1:
        return [f"{prefix}_{i}" for i in ids]
    return [f"{prefix}_{i}_{d}" for i in ids for d in range(dim)]


def thermo_table(bath_ids, t, energy, heat, work, entropy, production, extra=None) -> Table:
    header = ["t", "E", *[f"Q_{i}" for i in bath_ids], "W", "S", "entropy_production"]
    cols = [t, energy, *np.asarray(heat).T, work, entropy, production]
    if extra is not None:
        header.append(extra[0])
        cols.append(extra[1])
    return Table(header, [list(r) for r in zip(*cols)])


# ----------------------------------------------------------------- classical

def run_classical(cfg: RunConfig) -> dict:
    c = cfg.classical
    H = build_classical_hamiltonian(cfg)
    init = cl.GaussianInitial(c.q_mean, c.p_mean, c.q_var, c.p_var)
    ens = cl.run_ensemble(cl.EnsembleConfig(
        H, n_trajectories=c.n_trajectories, duration=c.duration, dt=c.dt, n_records=c.n_records,
        seed=cfg.seed, block_size=c.block_size, initial=init))
    ids = [m.id for m in cfg.modes]
    header = ["trajectory", "t", *_fmt_header("q", ids, H.dim), *_fmt_header("p", ids, H.dim),
              *[f"Q_{i}" for i in ids], "W", "E"]
    rows = []
    for j in range(min(c.output_trajectories, ens.n_trajectories)):
        for k, t in enumerate(ens.times):
            rows.append([j, t, *ens.q[k, j].ravel(), *ens.p[k, j].ravel(), *ens.heat[k, j],
                         ens.work[k, j], ens.energy[k, j]])
    summary = cl.ensemble_summary(ens, H, cfg.units.k_boltzmann)

    # ensemble ledger; the entropy is the Gaussian moment-matched estimate
    kb = cfg.units.k_boltzmann
    n_valid = int(ens.valid.sum())
    d = 2 * H.n_modes * H.dim
    _, _, beta = H.bath_arrays()
    bath_x = ens.heat[:, ens.valid] @ beta[:, 0]
    stderr = kb * np.sqrt(d / (2.0 * n_valid)) + kb * bath_x.std(axis=1) / np.sqrt(n_valid)
    entropy = [ens.entropy(k, kb) for k in range(ens.times.size)]
    thermo = thermo_table(ids, ens.times, ens.mean_energy(), ens.mean_heat(), ens.mean_work(),
                          entropy, [math.nan] * ens.times.size, ("stderr", stderr))
    summary["entropy_source"] = "gaussian-moment-match"
    return {"trajectories.csv": Table(header, rows), "thermo.csv": thermo, "summary.json": summary}


# ----------------------------------------------------------------- kramers

def _kramers_operator(cfg: RunConfig) -> kg.KramersOperator:
    k = cfg.kramers
    grid = kg.PhaseGrid.thermal(cfg.mode_params[0], k.n_q, k.n_p, k.width)
    return kg.KramersOperator(grid, build_classical_hamiltonian(cfg))


def run_kramers(cfg: RunConfig) -> dict:
    k = cfg.kramers
    op = _kramers_operator(cfg)
    grid = op.grid
    f0 = kg.gaussian_state(grid, k.mean, k.cov)
    dt = k.dt if k.dt is not None else 0.9 * op.max_stable_dt()
    n_steps = max(1, int(np.ceil(k.duration / dt)))
    every = max(1, n_steps // k.snapshots) if k.snapshots else None
    run = kg.relax(kg.GridDistribution(grid, f0), op, k.duration, dt=dt, snapshot_every=every,
                   diagnostics_every=k.diagnostics_every, k_boltzmann=cfg.units.k_boltzmann)
    dg = run.diagnostics
    out = {"diagnostics.csv": Table(list(kg.DIAGNOSTIC_COLUMNS),
                                    [list(r) for r in zip(*(dg[c] for c in kg.DIAGNOSTIC_COLUMNS))])}
    Q, P = grid.mesh()
    for i, snap in enumerate(run.snapshots):
        out[f"fields/f_{i:04d}.csv"] = Table(
            ["t", "q", "p", "f"],
            [[snap.t, a, b, c] for a, b, c in zip(Q.ravel(), P.ravel(), snap.f.ravel())])
    out["thermo.csv"] = thermo_table([cfg.modes[0].id], dg["t"], dg["E"], dg["Q"][:, None],
                                     np.zeros_like(dg["Q"]), dg["S"], dg["entropy_production"])
    out["kramers_summary.json"] = {
        "dt": run.final.dt,
        "n_steps": int(run.kl_steps.size - 1),
        "max_kl_increment": float(np.diff(run.kl_steps).max()) if run.kl_steps.size > 1 else 0.0,
        "final_kl": float(run.kl_steps[-1]),
        "mass_drift": float(np.abs(dg["mass"] - 1.0).max()),
        "min_entropy_production": float(dg["entropy_production"].min()),
        "grid": {"n_q": grid.shape[0], "n_p": grid.shape[1], "dq": grid.dq, "dp": grid.dp},
    }
    return out


# ----------------------------------------------------------------- quantum

def _initial_state(cfg: RunConfig, gen: qm.Generator):
    q = cfg.quantum
    if q.initial == "ground":
        v = np.linalg.eigh(gen.hamiltonian)[1][:, 0]
        return qm.DensityMatrix(np.outer(v, v.conj()))
    if q.initial == "gibbs":
        if len(set(gen.betas)) != 1:
            return qm.DensityMatrix(_product_gibbs(gen))
        return qm.DensityMatrix.gibbs(gen.hamiltonian, gen.betas[0])
    if q.initial == "random":
        seed = cfg.seed if q.initial_seed is None else q.initial_seed
        return qm.DensityMatrix.random(gen.dim, np.random.default_rng(seed))
    if len(gen.modes) != 1 or gen.modes[0].is_fermion:
        raise ParameterError("coherent initial states need a single bosonic mode")
    return qm.DensityMatrix.coherent(gen.modes[0].ops, q.alpha)


def _product_gibbs(gen):
    parts = [qm.DensityMatrix.gibbs(m.ops.hamiltonian, m.params.beta).data for m in gen.modes]
    return reduce(np.kron, parts)


def run_quantum(cfg: RunConfig) -> dict:
    gen = build_generator(cfg)
    q = cfg.quantum
    rho0 = _initial_state(cfg, gen)
    times = np.linspace(0.0, q.duration, q.n_records)
    ev = qm.evolve(rho0, gen, times, dt=q.dt)
    kb = cfg.units.k_boltzmann
    ids = [m.id for m in cfg.modes]
    pops = [[t, *np.real(np.diag(r))] for t, r in zip(ev.times, ev.states)]
    energy = [float(np.real(np.trace(r @ gen.hamiltonian))) for r in ev.states]
    heat = [[float(np.real(np.trace((r - ev.states[0]) @ h))) for h in gen.mode_hamiltonians]
            for r in ev.states]
    entropy = [qm.von_neumann_entropy(r, kb) for r in ev.states]
    prod = [qm.entropy_production(r, rd, gen.betas, gen.mode_hamiltonians, kb)
            for r, rd in zip(ev.states, ev.rates)]
    out = {
        "rho_diag.csv": Table(["t", *[f"p_{n}" for n in range(gen.dim)]], pops),
        "thermo.csv": thermo_table(ids, ev.times, energy, heat, np.zeros(times.size), entropy, prod),
        "quantum_summary.json": {
            "deltas": gen.deltas,
            "completely_positive_generator": gen.is_gksl,
            "n_max": gen.dims[0],
            "dt": q.dt if q.dt is not None else 0.01 / gen.rate_bound(),
            "min_eigenvalue": float(ev.min_eigenvalues.min()),
            "positivity_findings": ev.findings,
            "trace_drift": float(max(abs(np.trace(r).real - 1) for r in ev.states)),
        },
    }
    return out


def run_cptp(cfg: RunConfig) -> dict:
    c = cfg.cptp

    def factory(n):
        return build_generator(cfg, n_max=n)

    rep = choi_check(factory, c.n_max, c.t_small, c.refine)
    return {"cptp.json": rep.to_dict()}


RUNNERS = {
    "classical": run_classical,
    "kramers": run_kramers,
    "quantum": run_quantum,
    "fermion": run_quantum,
    "cptp-check": run_cptp,
}
