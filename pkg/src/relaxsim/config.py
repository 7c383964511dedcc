"""TOML run configuration: strict parsing, validation and defaulting.

Every key is checked against a schema; unknown keys, wrong types and
violated constraints raise :class:`ConfigError` naming the dotted key path.
:meth:`RunConfig.echo` returns the fully resolved configuration (defaults
filled in, step-size rules applied) that is written next to every run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import tomli

from .errors import ConfigError, RelaxsimError
from .model import ModeParams, OmegaSchedule, Statistics, UnitsConfig, delta_parameter

SCENARIOS = ("classical", "kramers", "quantum", "cptp-check", "fermion")
QUANTUM_SCENARIOS = ("quantum", "cptp-check", "fermion")

_MODE_KEYS = {"id", "mass", "omega", "beta", "gamma_q", "gamma_p", "statistics", "schedule"}
_MODE_REQUIRED = ("mass", "omega", "beta", "gamma_p")


@dataclass(frozen=True)
class ModeSpec:
    id: str
    params: ModeParams
    schedule: Optional[OmegaSchedule] = None


@dataclass(frozen=True)
class HamiltonianSection:
    dim: int = 1
    coupling: float = 0.0
    quartic: float = 0.0


@dataclass(frozen=True)
class ClassicalSection:
    n_trajectories: int = 1000
    duration: float = 10.0
    dt: Optional[float] = None
    n_records: int = 21
    block_size: int = 4096
    output_trajectories: int = 10
    q_mean: float = 0.0
    p_mean: float = 0.0
    q_var: Optional[float] = None
    p_var: Optional[float] = None


@dataclass(frozen=True)
class KramersSection:
    n_q: int = 256
    n_p: int = 256
    width: float = 8.0
    duration: float = 5.0
    dt: Optional[float] = None
    diagnostics_every: int = 10
    snapshots: int = 5
    mean: tuple = (1.0, 0.0)
    cov: tuple = ((1.0, 0.0), (0.0, 1.0))


@dataclass(frozen=True)
class QuantumSection:
    n_max: Optional[int] = None
    duration: float = 10.0
    n_records: int = 101
    dt: Optional[float] = None
    initial: str = "ground"
    alpha: float = 1.0
    initial_seed: Optional[int] = None


@dataclass(frozen=True)
class CptpSection:
    n_max: int = 30
    t_small: Optional[float] = None
    refine: int = 5


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    modes: tuple
    units: UnitsConfig = field(default_factory=UnitsConfig)
    seed: int = 0
    hamiltonian: HamiltonianSection = field(default_factory=HamiltonianSection)
    classical: ClassicalSection = field(default_factory=ClassicalSection)
    kramers: KramersSection = field(default_factory=KramersSection)
    quantum: QuantumSection = field(default_factory=QuantumSection)
    cptp: CptpSection = field(default_factory=CptpSection)
    source: Optional[str] = None

    @property
    def mode_params(self) -> list:
        return [m.params for m in self.modes]

    def with_seed(self, seed: Optional[int]) -> "RunConfig":
        if seed is None:
            return self
        return RunConfig(self.scenario, self.modes, self.units, int(seed), self.hamiltonian,
                         self.classical, self.kramers, self.quantum, self.cptp, self.source)

    def echo(self) -> dict:
        """Resolved configuration as plain data (defaults and step rules applied)."""
        from .runs import resolved_controls  # late import: runs depends on this module

        out = {
            "scenario": self.scenario,
            "seed": self.seed,
            "units": {"hbar": self.units.hbar, "k_boltzmann": self.units.k_boltzmann},
            "modes": [
                {"id": m.id, "mass": m.params.mass, "omega": m.params.omega, "beta": m.params.beta,
                 "gamma_q": m.params.gamma_q, "gamma_p": m.params.gamma_p,
                 "statistics": m.params.statistics.value,
                 "schedule": None if m.schedule is None
                 else [[t, v] for t, v in zip(m.schedule.times, m.schedule.values)]}
                for m in self.modes
            ],
        }
        out.update(resolved_controls(self))
        return out


# ----------------------------------------------------------------- helpers

def _check_keys(table: dict, allowed, path: str):
    for k in table:
        if k not in allowed:
            raise ConfigError(f"{path}{k}", f"unknown key (allowed: {', '.join(sorted(allowed))})")


def _number(table, key, path, default=None, *, positive=False, nonneg=False, integer=False,
            required=False):
    full = f"{path}{key}"
    if key not in table:
        if required:
            raise ConfigError(full, "missing required key")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(full, f"expected a number, got {type(v).__name__}")
    if integer:
        if not isinstance(v, int):
            raise ConfigError(full, "expected an integer")
    else:
        v = float(v)
        if not math.isfinite(v):
            raise ConfigError(full, "must be finite")
    if positive and not v > 0:
        raise ConfigError(full, f"must be > 0, got {v}")
    if nonneg and v < 0:
        raise ConfigError(full, f"must be >= 0, got {v}")
    return v


def _section(raw: dict, name: str, cls, schema: dict):
    table = raw.get(name, {})
    if not isinstance(table, dict):
        raise ConfigError(name, "expected a table")
    _check_keys(table, schema.keys(), f"{name}.")
    values = {}
    for key, rule in schema.items():
        if key not in table:
            continue
        values[key] = rule(table, key, f"{name}.")
    return cls(**values)


def _num(**kw):
    return lambda table, key, path: _number(table, key, path, **kw)


def _choice(options):
    def rule(table, key, path):
        v = table[key]
        if v not in options:
            raise ConfigError(f"{path}{key}", f"expected one of {', '.join(options)}, got {v!r}")
        return v
    return rule


def _vector(n):
    def rule(table, key, path):
        v = table[key]
        if not (isinstance(v, list) and len(v) == n
                and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)):
            raise ConfigError(f"{path}{key}", f"expected a list of {n} numbers")
        return tuple(float(x) for x in v)
    return rule


def _matrix2(table, key, path):
    v = table[key]
    rows = _vector(2)
    try:
        out = tuple(rows({"r": r}, "r", "") for r in v)
    except (ConfigError, TypeError):
        raise ConfigError(f"{path}{key}", "expected a 2x2 list of numbers") from None
    if len(out) != 2:
        raise ConfigError(f"{path}{key}", "expected a 2x2 list of numbers")
    a, b, c, d = out[0][0], out[0][1], out[1][0], out[1][1]
    if abs(b - c) > 1e-12 * max(1.0, abs(b)) or a <= 0 or a * d - b * c <= 0:
        raise ConfigError(f"{path}{key}", "covariance must be symmetric positive definite")
    return out


def _optional_int(table, key, path):
    if table[key] is None:
        return None
    return _number(table, key, path, integer=True)


# ----------------------------------------------------------------- parsing

def _parse_modes(raw, scenario) -> tuple:
    modes = raw.get("modes")
    if modes is None:
        raise ConfigError("modes", "missing required key (array of [[modes]] tables)")
    if not isinstance(modes, list) or not modes:
        raise ConfigError("modes", "expected a non-empty array of tables")
    seen = set()
    out = []
    default_stat = "fermion" if scenario == "fermion" else "boson"
    for i, m in enumerate(modes):
        path = f"modes[{i}]."
        if not isinstance(m, dict):
            raise ConfigError(f"modes[{i}]", "expected a table")
        _check_keys(m, _MODE_KEYS, path)
        mid = m.get("id", f"mode{i}")
        if not isinstance(mid, str) or not mid:
            raise ConfigError(f"{path}id", "expected a non-empty string")
        if mid in seen:
            raise ConfigError(f"{path}id", f"duplicate mode id {mid!r}")
        seen.add(mid)
        vals = {k: _number(m, k, path, required=True, positive=True) for k in _MODE_REQUIRED[:3]}
        vals["gamma_p"] = _number(m, "gamma_p", path, required=True, nonneg=True)
        vals["gamma_q"] = _number(m, "gamma_q", path, default=0.0, nonneg=True)
        stat = m.get("statistics", default_stat)
        if stat not in ("boson", "fermion"):
            raise ConfigError(f"{path}statistics", f"expected boson or fermion, got {stat!r}")
        params = ModeParams(statistics=Statistics(stat), **vals)
        sched = None
        if "schedule" in m:
            if scenario != "classical":
                raise ConfigError(f"{path}schedule", "omega schedules are supported only classically")
            knots = m["schedule"]
            if not (isinstance(knots, list) and knots
                    and all(isinstance(k, list) and len(k) == 2 for k in knots)):
                raise ConfigError(f"{path}schedule", "expected a list of [time, omega] pairs")
            try:
                sched = OmegaSchedule.from_knots(knots)
            except RelaxsimError as exc:
                raise ConfigError(f"{path}schedule", str(exc)) from None
        if scenario in QUANTUM_SCENARIOS:
            try:
                delta = delta_parameter(params)
            except RelaxsimError as exc:
                raise ConfigError(f"{path}gamma_p", str(exc)) from None
            if scenario == "fermion" and abs(delta) > 1e-12:
                raise ConfigError(f"{path}gamma_q", "fermionic modes need delta = 0, i.e. "
                                  f"gamma_q = gamma_p / (mass omega)^2 (got delta = {delta:.6g})")
        if scenario in ("classical", "kramers", "quantum", "cptp-check") and stat == "fermion":
            raise ConfigError(f"{path}statistics", f"fermionic modes are not valid in a {scenario} run")
        if scenario == "fermion" and stat != "fermion":
            raise ConfigError(f"{path}statistics", "a fermion run needs fermionic modes")
        out.append(ModeSpec(mid, params, sched))
    return tuple(out)


def parse_config_text(text: str, source: Optional[str] = None) -> RunConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"TOML syntax error: {exc}") from None
    _check_keys(raw, {"scenario", "seed", "units", "modes", "hamiltonian", "classical", "kramers",
                      "quantum", "cptp"}, "")
    if "scenario" not in raw:
        raise ConfigError("scenario", f"missing required key (one of {', '.join(SCENARIOS)})")
    scenario = _choice(SCENARIOS)(raw, "scenario", "")
    seed = _number(raw, "seed", "", default=0, integer=True, nonneg=True)

    units_t = raw.get("units", {})
    if not isinstance(units_t, dict):
        raise ConfigError("units", "expected a table")
    _check_keys(units_t, {"hbar", "k_boltzmann"}, "units.")
    units = UnitsConfig(_number(units_t, "hbar", "units.", 1.0, positive=True),
                        _number(units_t, "k_boltzmann", "units.", 1.0, positive=True))

    modes = _parse_modes(raw, scenario)
    ham = _section(raw, "hamiltonian", HamiltonianSection, {
        "dim": _num(integer=True, positive=True), "coupling": _num(nonneg=True),
        "quartic": _num(nonneg=True)})
    classical = _section(raw, "classical", ClassicalSection, {
        "n_trajectories": _num(integer=True, positive=True), "duration": _num(positive=True),
        "dt": _num(positive=True), "n_records": _num(integer=True, positive=True),
        "block_size": _num(integer=True, positive=True),
        "output_trajectories": _num(integer=True, nonneg=True),
        "q_mean": _num(), "p_mean": _num(), "q_var": _num(positive=True), "p_var": _num(positive=True)})
    kramers = _section(raw, "kramers", KramersSection, {
        "n_q": _num(integer=True, positive=True), "n_p": _num(integer=True, positive=True),
        "width": _num(positive=True), "duration": _num(positive=True), "dt": _num(positive=True),
        "diagnostics_every": _num(integer=True, positive=True),
        "snapshots": _num(integer=True, nonneg=True), "mean": _vector(2), "cov": _matrix2})
    quantum = _section(raw, "quantum", QuantumSection, {
        "n_max": _num(integer=True, positive=True), "duration": _num(positive=True),
        "n_records": _num(integer=True, positive=True), "dt": _num(positive=True),
        "initial": _choice(("ground", "gibbs", "random", "coherent")), "alpha": _num(),
        "initial_seed": _optional_int})
    cptp = _section(raw, "cptp", CptpSection, {
        "n_max": _num(integer=True, positive=True), "t_small": _num(nonneg=True),
        "refine": _num(integer=True, positive=True)})

    if scenario == "kramers":
        if len(modes) != 1 or ham.dim != 1:
            raise ConfigError("modes", "the kramers scenario takes exactly one mode with dim = 1")
    if scenario == "cptp-check" and len(modes) != 1:
        raise ConfigError("modes", "check-cptp takes exactly one mode")
    if scenario == "fermion" and len(modes) != 1:
        raise ConfigError("modes", "the fermion scenario takes exactly one mode")
    if quantum.n_max is not None and quantum.n_max < 2:
        raise ConfigError("quantum.n_max", "must be >= 2")
    if cptp.n_max < 2:
        raise ConfigError("cptp.n_max", "must be >= 2")
    if ham.quartic and scenario not in ("classical", "kramers"):
        raise ConfigError("hamiltonian.quartic", "quartic potentials are classical only")
    if ham.coupling and scenario != "classical":
        raise ConfigError("hamiltonian.coupling", "mode coupling is supported only classically")
    return RunConfig(scenario, modes, units, seed, ham, classical, kramers, quantum, cptp, source)


def parse_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError("<file>", f"config file not found: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"), str(p))

