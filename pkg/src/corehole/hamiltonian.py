"""Second-quantized Hamiltonians in an interleaved spin-orbital basis.

Spatial orbital ``p`` maps to spin orbitals ``2p`` (up) and ``2p + 1`` (down).
All energies are in hartree.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

HARTREE_TO_EV = 27.211386245988


class HamiltonianError(ValueError):
    """Raised for invalid Hamiltonian parameters or partitions."""


@dataclass(frozen=True)
class Hamiltonian:
    """Spin-orbital Hamiltonian ``sum h_pq p^ q + 1/4 sum <pq||rs> p^ q^ s r + shift``.

    Attributes
    ----------
    h1 : ndarray, shape (n, n)
        One-electron integrals.
    v2 : ndarray, shape (n, n, n, n)
        Antisymmetrized two-electron integrals ``<pq||rs>``.
    scalar_shift : float
        Constant energy (nuclear repulsion, frozen core).
    n_electrons : int
        Electron count of the neutral (N-electron) system.
    orbital_labels : tuple of str
        One label per spin orbital.
    """

    h1: np.ndarray
    v2: np.ndarray
    scalar_shift: float
    n_electrons: int
    orbital_labels: tuple = field(default=())

    def __post_init__(self):
        n = self.h1.shape[0]
        if self.h1.shape != (n, n) or self.v2.shape != (n, n, n, n):
            raise HamiltonianError("inconsistent integral shapes")
        if not 0 <= self.n_electrons <= n:
            raise HamiltonianError(f"n_electrons={self.n_electrons} outside [0, {n}]")
        for arr in (self.h1, self.v2):
            arr.setflags(write=False)
        if not self.orbital_labels:
            object.__setattr__(self, "orbital_labels", default_labels(n))

    @property
    def n_spin_orbitals(self) -> int:
        return self.h1.shape[0]

    @property
    def spins(self) -> np.ndarray:
        """0 for up, 1 for down."""
        return np.arange(self.n_spin_orbitals) % 2

    def with_electrons(self, n_electrons: int) -> "Hamiltonian":
        return Hamiltonian(self.h1, self.v2, self.scalar_shift, n_electrons, self.orbital_labels)


def default_labels(n_spin_orbitals: int) -> tuple:
    return tuple(f"{p // 2}{'ab'[p % 2]}" for p in range(n_spin_orbitals))


@dataclass(frozen=True)
class SiamParams:
    eps_impurity: float
    bath_energies: Sequence[float]
    hybridization: float
    onsite_u: float

    def validate(self) -> None:
        values = [self.eps_impurity, self.hybridization, self.onsite_u, *self.bath_energies]
        if not np.all(np.isfinite(values)):
            raise HamiltonianError("SIAM parameters must be finite")
        if len(self.bath_energies) == 0:
            raise HamiltonianError("SIAM needs at least one bath level")
        if self.hybridization < 0:
            raise HamiltonianError("hybridization must be non-negative")


@dataclass(frozen=True)
class ReferencePartition:
    occupied: tuple
    virtual: tuple
    core_index: int

    @property
    def n_occupied(self) -> int:
        return len(self.occupied)


def build_siam(params: SiamParams, n_electrons: int | None = None) -> Hamiltonian:
    """Single-impurity Anderson model with a uniform impurity-bath hybridization.

    Spatial orbital 0 is the impurity, 1..n_bath the bath levels. When
    ``n_electrons`` is omitted the filling is chosen by aufbau on the
    one-electron diagonal: every spin orbital with a negative level is filled.
    """
    params.validate()
    levels = np.array([params.eps_impurity, *params.bath_energies], dtype=float)
    n_spatial = levels.size
    n = 2 * n_spatial
    h1 = np.zeros((n, n))
    for p, eps in enumerate(levels):
        h1[2 * p, 2 * p] = h1[2 * p + 1, 2 * p + 1] = eps
    for k in range(1, n_spatial):
        for s in range(2):
            h1[s, 2 * k + s] = h1[2 * k + s, s] = params.hybridization
    v2 = np.zeros((n, n, n, n))
    u = params.onsite_u
    v2[0, 1, 0, 1] = v2[1, 0, 1, 0] = u
    v2[0, 1, 1, 0] = v2[1, 0, 0, 1] = -u
    if n_electrons is None:
        n_electrons = int(2 * np.count_nonzero(levels < 0))
    labels = ["imp_up", "imp_dn"]
    for k in range(1, n_spatial):
        labels += [f"bath{k}_up", f"bath{k}_dn"]
    return Hamiltonian(h1, v2, 0.0, n_electrons, tuple(labels))


def partition_reference(
    h: Hamiltonian, core_index: int, occupied: Sequence[int] | None = None
) -> ReferencePartition:
    """Aufbau partition on the diagonal of ``h1`` with ``core_index`` occupied.

    ``occupied`` overrides the aufbau choice when given.
    """
    n = h.n_spin_orbitals
    if not 0 <= core_index < n:
        raise HamiltonianError(f"core index {core_index} out of range")
    if occupied is None:
        # stable sort keeps ascending index among ties
        order = np.argsort(np.diag(h.h1), kind="stable")
        occ = sorted(int(p) for p in order[: h.n_electrons])
    else:
        occ = sorted(int(p) for p in occupied)
        if len(set(occ)) != h.n_electrons or not all(0 <= p < n for p in occ):
            raise HamiltonianError("explicit occupation must list n_electrons distinct orbitals")
    if core_index not in occ:
        raise HamiltonianError("core orbital unoccupied in reference")
    vir = [p for p in range(n) if p not in occ]
    return ReferencePartition(tuple(occ), tuple(vir), int(core_index))


def fock_matrix(h: Hamiltonian, occupied: Sequence[int]) -> np.ndarray:
    occ = list(occupied)
    return h.h1 + np.einsum("piqi->pq", h.v2[:, occ][:, :, :, occ])


def reference_energy(h: Hamiltonian, occupied: Sequence[int]) -> float:
    occ = list(occupied)
    one = np.trace(h.h1[np.ix_(occ, occ)])
    two = 0.5 * np.einsum("ijij->", h.v2[np.ix_(occ, occ, occ, occ)])
    return float(one + two + h.scalar_shift)


def check_symmetries(h: Hamiltonian, atol: float = 1e-12) -> list[str]:
    """Return a list of violated integral symmetries (empty when clean)."""
    problems = []
    v = h.v2
    if not np.allclose(h.h1, h.h1.conj().T, atol=atol):
        problems.append("h1 not Hermitian")
    if not np.allclose(v, -v.transpose(1, 0, 2, 3), atol=atol):
        problems.append("v2 not antisymmetric in bra")
    if not np.allclose(v, -v.transpose(0, 1, 3, 2), atol=atol):
        problems.append("v2 not antisymmetric in ket")
    if not np.allclose(v, v.transpose(2, 3, 0, 1).conj(), atol=atol):
        problems.append("v2 not Hermitian")
    s = h.spins
    mask1 = s[:, None] != s[None, :]
    if np.any(np.abs(h.h1[mask1]) > atol):
        problems.append("h1 mixes spins")
    # <pq||rs> needs {s_p, s_q} == {s_r, s_s}
    sp, sq, sr, ss = np.ix_(s, s, s, s)
    ok = (sp + sq == sr + ss)
    if np.any(np.abs(v[~ok]) > atol):
        problems.append("v2 does not conserve spin")
    return problems
