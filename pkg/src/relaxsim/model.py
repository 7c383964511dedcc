"""Parameter records, unit conventions and classical Hamiltonians.

Phase-space arrays follow one layout throughout the package: ``q`` and ``p``
have shape ``(..., n_modes, dim)``, where the leading axes index trajectories
(or are absent for a single phase point).  Per-mode parameters broadcast
against that layout as arrays of shape ``(n_modes, 1)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionError, ParameterError, UndefinedDeltaError


@dataclass(frozen=True)
class UnitsConfig:
    hbar: float = 1.0
    k_boltzmann: float = 1.0

    def __post_init__(self):
        for name in ("hbar", "k_boltzmann"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be finite and > 0, got {value!r}")


class Statistics(str, enum.Enum):
    BOSON = "boson"
    FERMION = "fermion"


@dataclass(frozen=True)
class ModeParams:
    """Physical parameters of one mode and its heat bath.

    ``gamma_q`` couples the bath to the position equation and ``gamma_p`` to
    the momentum equation.  ``bath_active=None`` infers activity from the
    couplings; ``True`` demands at least one nonzero coupling.
    """

    mass: float = 1.0
    omega: float = 1.0
    beta: float = 1.0
    gamma_q: float = 0.0
    gamma_p: float = 1.0
    statistics: Statistics = Statistics.BOSON
    bath_active: Optional[bool] = None

    def __post_init__(self):
        object.__setattr__(self, "statistics", Statistics(self.statistics))
        for name in ("mass", "omega", "beta"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be finite and > 0, got {value!r}")
        for name in ("gamma_q", "gamma_p"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ParameterError(f"{name} must be finite and >= 0, got {value!r}")
        coupled = self.gamma_q > 0 or self.gamma_p > 0
        if self.bath_active is None:
            object.__setattr__(self, "bath_active", coupled)
        elif self.bath_active and not coupled:
            raise ParameterError("active bath needs gamma_q > 0 or gamma_p > 0")

    @property
    def delta(self) -> float:
        return delta_parameter(self)

    def temperature(self, units: UnitsConfig = UnitsConfig()) -> float:
        return 1.0 / (units.k_boltzmann * self.beta)

    def relaxation_rate(self) -> float:
        """Largest bare bath rate, used by the default step-size rule."""
        return max(self.omega, self.gamma_p / self.mass, self.gamma_q * self.mass * self.omega**2)


def delta_parameter(p: ModeParams) -> float:
    """Departure from the GKSL point: ``(gamma_q/gamma_p)(m omega)^2 - 1``."""
    if p.gamma_p <= 0:
        raise UndefinedDeltaError("undefined delta: gamma_p must be > 0")
    return (p.gamma_q / p.gamma_p) * (p.mass * p.omega) ** 2 - 1.0


@dataclass(frozen=True)
class OmegaSchedule:
    """Piecewise-linear protocol t -> omega(t), constant outside the knots.

    Two knots at the same time encode an instantaneous quench; the later
    value applies from that time on.
    """

    times: tuple
    values: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size == 0:
            raise ParameterError("schedule needs matching 1-d times and values")
        if np.any(np.diff(t) < 0):
            raise ParameterError("schedule times must be non-decreasing")
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise ParameterError("schedule omegas must be finite and > 0")
        object.__setattr__(self, "times", tuple(float(x) for x in t))
        object.__setattr__(self, "values", tuple(float(x) for x in v))

    @classmethod
    def from_knots(cls, knots):
        knots = list(knots)
        return cls(tuple(k[0] for k in knots), tuple(k[1] for k in knots))

    def __call__(self, t: float) -> float:
        t_k, v_k = self.times, self.values
        if t <= t_k[0]:
            return v_k[0]
        # right-most knot with time <= t
        i = int(np.searchsorted(t_k, t, side="right")) - 1
        if i >= len(t_k) - 1:
            return v_k[-1]
        t0, t1 = t_k[i], t_k[i + 1]
        if t1 == t0:
            return v_k[i + 1]
        return v_k[i] + (v_k[i + 1] - v_k[i]) * (t - t0) / (t1 - t0)


class ClassicalHamiltonian:
    """Common interface of the classical Hamiltonians.

    Subclasses provide ``energy``, ``grad_q`` and ``grad_p`` for arrays laid
    out as described in the module docstring, with an optional time argument
    for scheduled parameters.
    """

    modes: tuple
    dim: int

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def mass(self) -> np.ndarray:
        return np.array([m.mass for m in self.modes], dtype=float)[:, None]

    def bath_arrays(self):
        """``(gamma_q, gamma_p, beta)`` each of shape ``(n_modes, 1)``."""
        gq = np.array([m.gamma_q for m in self.modes], dtype=float)[:, None]
        gp = np.array([m.gamma_p for m in self.modes], dtype=float)[:, None]
        beta = np.array([m.beta for m in self.modes], dtype=float)[:, None]
        return gq, gp, beta

    def check_shape(self, q, p):
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        want = (self.n_modes, self.dim)
        if q.shape[-2:] != want or p.shape != q.shape:
            raise DimensionError(
                f"expected q, p with trailing shape {want}, got {q.shape} and {p.shape}"
            )
        return q, p

    def kinetic(self, p):
        return np.sum(p**2 / (2.0 * self.mass), axis=(-2, -1))

    def grad_p(self, q, p, t: float = 0.0):
        return p / self.mass

    def omega_at(self, t: float = 0.0) -> np.ndarray:
        return np.array([m.omega for m in self.modes], dtype=float)[:, None]

    def energy(self, q, p, t: float = 0.0):
        raise NotImplementedError

    def grad_q(self, q, p, t: float = 0.0):
        raise NotImplementedError

    def is_time_dependent(self) -> bool:
        return False


@dataclass(frozen=True)
class HarmonicHamiltonian(ClassicalHamiltonian):
    """Sum of isotropic oscillators, optionally joined into a spring chain.

    ``coupling`` adds ``kappa/2 |q_i - q_{i+1}|^2`` between neighbouring
    modes.  ``schedules`` holds one optional :class:`OmegaSchedule` per mode.
    """

    modes: tuple
    dim: int = 1
    coupling: float = 0.0
    schedules: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if not self.modes:
            raise ParameterError("at least one mode is required")
        if self.dim < 1:
            raise ParameterError("dim must be >= 1")
        if self.coupling < 0:
            raise ParameterError("coupling must be >= 0")
        if self.schedules is not None:
            sched = tuple(self.schedules)
            if len(sched) != len(self.modes):
                raise ParameterError("one schedule entry (or None) per mode is required")
            object.__setattr__(self, "schedules", sched)

    def omega_at(self, t: float = 0.0) -> np.ndarray:
        omega = np.array([m.omega for m in self.modes], dtype=float)
        if self.schedules is not None:
            for i, s in enumerate(self.schedules):
                if s is not None:
                    omega[i] = s(t)
        return omega[:, None]

    def is_time_dependent(self) -> bool:
        return self.schedules is not None and any(s is not None for s in self.schedules)

    def stiffness(self, t: float = 0.0) -> np.ndarray:
        return self.mass * self.omega_at(t) ** 2

    def energy(self, q, p, t: float = 0.0):
        q, p = np.asarray(q, dtype=float), np.asarray(p, dtype=float)
        pot = np.sum(0.5 * self.stiffness(t) * q**2, axis=(-2, -1))
        if self.coupling and self.n_modes > 1:
            dq = q[..., 1:, :] - q[..., :-1, :]
            pot = pot + 0.5 * self.coupling * np.sum(dq**2, axis=(-2, -1))
        return self.kinetic(p) + pot

    def grad_q(self, q, p, t: float = 0.0):
        q = np.asarray(q, dtype=float)
        g = self.stiffness(t) * q
        if self.coupling and self.n_modes > 1:
            dq = q[..., 1:, :] - q[..., :-1, :]
            g = g.copy()
            g[..., 1:, :] += self.coupling * dq
            g[..., :-1, :] -= self.coupling * dq
        return g

    def d_energy_d_omega(self, q, p, t: float = 0.0):
        """Per-mode ``dH/d omega_i = m_i omega_i |q_i|^2``, shape ``(..., n_modes)``."""
        q = np.asarray(q, dtype=float)
        return (self.mass * self.omega_at(t))[:, 0] * np.sum(q**2, axis=-1)

    def quadratic_form(self, t: float = 0.0) -> np.ndarray:
        """Hessian of H in the ordering ``(q_1..q_N, p_1..p_N)`` for ``dim == 1``."""
        n = self.n_modes
        k = np.diag(self.stiffness(t)[:, 0])
        if self.coupling and n > 1:
            for i in range(n - 1):
                k[i, i] += self.coupling
                k[i + 1, i + 1] += self.coupling
                k[i, i + 1] -= self.coupling
                k[i + 1, i] -= self.coupling
        hess = np.zeros((2 * n, 2 * n))
        hess[:n, :n] = k
        hess[n:, n:] = np.diag(1.0 / self.mass[:, 0])
        return hess


@dataclass(frozen=True)
class CustomPotentialHamiltonian(ClassicalHamiltonian):
    """Kinetic energy plus an arbitrary potential ``V(q)``.

    ``potential`` maps an array of shape ``(..., n_modes, dim)`` to energies of
    shape ``(...)``.  Without an analytic ``gradient`` the force is taken from
    central differences of ``potential`` with step ``fd_step``.  The ``omega``
    of each mode is only used as a nominal scale (step-size rule, grids).
    """

    modes: tuple
    potential: Callable = field(compare=False)
    gradient: Optional[Callable] = field(default=None, compare=False)
    dim: int = 1
    fd_step: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if not self.modes:
            raise ParameterError("at least one mode is required")

    def energy(self, q, p, t: float = 0.0):
        q, p = np.asarray(q, dtype=float), np.asarray(p, dtype=float)
        return self.kinetic(p) + self.potential(q)

    def grad_q(self, q, p, t: float = 0.0):
        q = np.asarray(q, dtype=float)
        if self.gradient is not None:
            return np.asarray(self.gradient(q), dtype=float)
        g = np.empty_like(q)
        h = self.fd_step
        for i in range(q.shape[-2]):
            for a in range(q.shape[-1]):
                up = q.copy()
                dn = q.copy()
                up[..., i, a] += h
                dn[..., i, a] -= h
                g[..., i, a] = (self.potential(up) - self.potential(dn)) / (2 * h)
        return g


def quartic_potential(modes: Sequence[ModeParams], quartic: float):
    """Harmonic wells plus ``quartic/4 * q^4`` per coordinate, with analytic force."""
    k = np.array([m.mass * m.omega**2 for m in modes], dtype=float)[:, None]

    def potential(q):
        return np.sum(0.5 * k * q**2 + 0.25 * quartic * q**4, axis=(-2, -1))

    def gradient(q):
        return k * q + quartic * q**3

    return potential, gradient


def hamiltonian_energy(H: ClassicalHamiltonian, q, p, t: float = 0.0):
    q, p = H.check_shape(q, p)
    return H.energy(q, p, t)
