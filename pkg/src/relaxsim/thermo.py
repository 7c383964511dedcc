"""Thermodynamic bookkeeping shared by the classical, grid and quantum runs.

Records hold cumulative heat per bath and cumulative work, so the first law
is checked step by step as ``dE - sum dQ_i - dW``.  Rates in reports are
centred differences on the stored time grid with one-sided differences at
the two ends (``numpy.gradient``), which sets the scale of the tolerances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class ThermoRecord:
    t: float
    energy: float
    heat: tuple
    work: float = 0.0
    entropy: float = math.nan
    entropy_production_rate: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "heat", tuple(float(x) for x in np.atleast_1d(self.heat)))
        values = [self.t, self.energy, self.work, *self.heat]
        if not all(math.isfinite(v) for v in values):
            raise ParameterError(f"non-finite entry in thermo record at t={self.t!r}")
        ep = self.entropy_production_rate
        if ep is not None and not (math.isfinite(ep) or ep == math.inf):
            # +inf is legitimate: probability flowing into an empty level
            raise ParameterError(f"invalid entropy production {ep!r} at t={self.t!r}")


def _sorted(records: Iterable[ThermoRecord]) -> list:
    recs = sorted(records, key=lambda r: r.t)
    if len(recs) < 2:
        raise ParameterError("need at least two records")
    if len({r.t for r in recs}) != len(recs):
        raise ParameterError("record timestamps must be distinct")
    if len({len(r.heat) for r in recs}) != 1:
        raise ParameterError("every record needs the same number of baths")
    return recs


def records_from_arrays(t, energy, heat, work=None, entropy=None, entropy_production=None) -> list:
    t = np.asarray(t, dtype=float)
    heat = np.asarray(heat, dtype=float).reshape(t.size, -1)
    work = np.zeros_like(t) if work is None else np.asarray(work, dtype=float)
    entropy = np.full_like(t, np.nan) if entropy is None else np.asarray(entropy, dtype=float)
    out = []
    for k in range(t.size):
        ep = None if entropy_production is None else float(entropy_production[k])
        out.append(ThermoRecord(float(t[k]), float(energy[k]), tuple(heat[k]), float(work[k]),
                                float(entropy[k]), ep))
    return out


def first_law_residual(records: Iterable[ThermoRecord]) -> np.ndarray:
    """Per-step ``Delta E - sum_i Delta Q_i - Delta W``."""
    recs = _sorted(records)
    e = np.array([r.energy for r in recs])
    q = np.array([sum(r.heat) for r in recs])
    w = np.array([r.work for r in recs])
    return np.diff(e) - np.diff(q) - np.diff(w)


@dataclass
class ClausiusReport:
    times: np.ndarray
    rate: np.ndarray
    min_rate: float
    tolerance: float
    satisfied: bool
    classification: str
    instantaneous_min: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "entropy_production": self.rate.tolist(),
            "min_entropy_production": self.min_rate,
            "instantaneous_min": self.instantaneous_min,
            "tolerance": self.tolerance,
            "satisfied": self.satisfied,
            "classification": self.classification,
        }


def clausius_report(records: Iterable[ThermoRecord], betas: Sequence[float],
                    k_boltzmann: float = 1.0, tolerance: float = 1e-9,
                    certified: Optional[bool] = None) -> ClausiusReport:
    """Time series of ``dS/dt - sum_i k_B beta_i dQ_i/dt`` and its verdict.

    ``certified=True`` marks a generator known to be completely positive, in
    which case a violation is classified as a solver bug; ``False`` marks a
    run where a violation is a physical finding.  When the records carry an
    instantaneous entropy-production rate its minimum enters the verdict too.
    """
    recs = _sorted(records)
    betas = np.asarray(betas, dtype=float)
    if betas.size != len(recs[0].heat):
        raise ParameterError(f"{betas.size} betas for {len(recs[0].heat)} baths")
    t = np.array([r.t for r in recs])
    s = np.array([r.entropy for r in recs])
    if not np.all(np.isfinite(s)):
        raise ParameterError("entropy column missing or non-finite")
    q = np.array([r.heat for r in recs])
    rate = np.gradient(s, t) - k_boltzmann * np.gradient(q, t, axis=0) @ betas
    lowest = float(rate.min())
    inst = None
    if all(r.entropy_production_rate is not None for r in recs):
        inst = float(min(r.entropy_production_rate for r in recs))
        lowest = min(lowest, inst)
    ok = lowest >= -tolerance
    if ok:
        label = "satisfied"
    elif certified:
        label = "solver-bug"
    elif certified is False:
        label = "physics-finding"
    else:
        label = "violated"
    return ClausiusReport(t, rate, float(rate.min()), tolerance, ok, label, inst)
