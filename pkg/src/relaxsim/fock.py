"""Operator tables for truncated bosonic modes and the two-level fermionic mode."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import ParameterError
from .model import UnitsConfig


def commutator(a, b):
    return a @ b - b @ a


def anticommutator(a, b):
    return a @ b + b @ a


@dataclass(frozen=True)
class FockOperators:
    """Number-basis matrices of one oscillator truncated to ``n_max`` levels.

    ``hamiltonian`` is ``hbar omega (n + 1/2)``.  Because of the truncation
    ``[q, p] = i hbar`` holds only away from the last row and column.
    """

    n_max: int
    mass: float = 1.0
    omega: float = 1.0
    units: UnitsConfig = field(default_factory=UnitsConfig)

    def __post_init__(self):
        if self.n_max < 2:
            raise ParameterError("n_max must be >= 2")
        hbar = self.units.hbar
        a = np.diag(np.sqrt(np.arange(1, self.n_max, dtype=float)), 1).astype(complex)
        ad = a.conj().T
        sq = np.sqrt(hbar / (2 * self.mass * self.omega))
        sp = np.sqrt(hbar * self.mass * self.omega / 2)
        tables = {
            "a": a,
            "ad": ad,
            "q": sq * (a + ad),
            "p": 1j * sp * (ad - a),
            "number": np.diag(np.arange(self.n_max, dtype=float)).astype(complex),
            "hamiltonian": np.diag(hbar * self.omega * (np.arange(self.n_max) + 0.5)).astype(complex),
        }
        for k, v in tables.items():
            v.setflags(write=False)
            object.__setattr__(self, k, v)

    @property
    def dim(self) -> int:
        return self.n_max

    @property
    def energies(self) -> np.ndarray:
        return self.units.hbar * self.omega * (np.arange(self.n_max) + 0.5)

    def commutator_residual(self, margin: int = 1) -> float:
        """Max deviation of ``[q, p]`` from ``i hbar`` on the interior block."""
        k = self.n_max - margin
        c = commutator(self.q, self.p)[:k, :k]
        return float(np.abs(c - 1j * self.units.hbar * np.eye(k)).max())


@dataclass(frozen=True)
class FermionMode:
    """Two-level realisation of the oscillator algebra.

    ``q`` and ``p`` are scaled Pauli matrices obeying ``{p, q} = 0`` and
    ``{q, q}/2 = hbar/(2 m omega)``, ``{p, p}/2 = hbar m omega/2``.  The
    Hamiltonian ``i omega q p`` equals ``-(hbar omega/2) sigma_z``; the
    lowering operator is built from ``q`` and ``p`` exactly as for bosons.
    """

    mass: float = 1.0
    omega: float = 1.0
    units: UnitsConfig = field(default_factory=UnitsConfig)

    def __post_init__(self):
        hbar = self.units.hbar
        sx = np.array([[0, 1], [1, 0]], dtype=complex)
        sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
        q = np.sqrt(hbar / (2 * self.mass * self.omega)) * sx
        p = np.sqrt(hbar * self.mass * self.omega / 2) * sy
        h = 1j * self.omega * q @ p
        a = (q + 1j * p / (self.mass * self.omega)) * np.sqrt(self.mass * self.omega / (2 * hbar))
        tables = {"q": q, "p": p, "hamiltonian": h, "a": a, "ad": a.conj().T,
                  "number": a.conj().T @ a}
        for k, v in tables.items():
            v.setflags(write=False)
            object.__setattr__(self, k, v)

    @property
    def dim(self) -> int:
        return 2

    @property
    def energies(self) -> np.ndarray:
        return np.real(np.diag(self.hamiltonian)).copy()

    def anticommutation_residuals(self) -> dict:
        hbar, m, w = self.units.hbar, self.mass, self.omega
        eye = np.eye(2)
        half = lambda x, y: 0.5 * anticommutator(x, y)  # noqa: E731
        return {
            "pq": float(np.abs(anticommutator(self.p, self.q)).max()),
            "qq": float(np.abs(m * w * half(self.q, self.q) - 0.5 * hbar * eye).max()),
            "pp": float(np.abs(half(self.p, self.p) / (m * w) - 0.5 * hbar * eye).max()),
            "a_ad": float(np.abs(anticommutator(self.a, self.ad) - eye).max()),
        }


def embed(op: np.ndarray, k: int, dims) -> np.ndarray:
    """Lift a single-mode operator acting on factor ``k`` to the product space."""
    mats = [op if i == k else np.eye(d) for i, d in enumerate(dims)]
    return reduce(np.kron, mats)
