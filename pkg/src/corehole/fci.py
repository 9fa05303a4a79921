"""Full-CI reference: sector diagonalization and the exact core-hole Green's function."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as sla

from .determinants import Sector, annihilation_matrix, hamiltonian_matrix
from .hamiltonian import Hamiltonian
from .trajectory import GreensTrajectory

log = logging.getLogger(__name__)

DEFAULT_CAP = 200_000


class OracleError(RuntimeError):
    pass


@dataclass
class CiVector:
    sector: Sector
    coefficients: np.ndarray

    @property
    def n_electrons(self) -> int:
        return self.sector.n_electrons

    @property
    def basis(self) -> np.ndarray:
        return self.sector.dets

    def occupation(self, p: int) -> float:
        occ = (self.sector.dets >> p) & 1
        return float(np.sum(np.abs(self.coefficients) ** 2 * occ))


def fci_ground(h: Hamiltonian, n_electrons: int | None = None,
               cap: int = DEFAULT_CAP) -> tuple[float, CiVector]:
    """Lowest eigenpair of ``h`` in the ``n_electrons`` sector (shift included)."""
    n_electrons = h.n_electrons if n_electrons is None else n_electrons
    sector = Sector(h.n_spin_orbitals, n_electrons, cap=cap)
    hmat = hamiltonian_matrix(h, sector)
    if isinstance(hmat, np.ndarray):
        w, v = la.eigh(hmat)
        e0, c0 = w[0], v[:, 0]
        if sector.dim > 1 and w[1] - w[0] < 1e-8:
            log.warning("ground state is (near) degenerate: gap %.2e", w[1] - w[0])
    else:
        try:
            w, v = sla.eigsh(hmat, k=1, which="SA", tol=1e-12)
        except sla.ArpackNoConvergence as exc:
            raise OracleError("sparse eigensolver did not converge") from exc
        e0, c0 = w[0], v[:, 0]
    # fix the arbitrary global sign for reproducible output
    c0 = c0 * np.sign(c0[np.argmax(np.abs(c0))])
    return float(e0), CiVector(sector, c0.astype(complex))


@dataclass
class LehmannData:
    """Removal poles ``E_g - E_k`` and weights ``|<k|a_c|Psi>|^2``."""

    ground_energy: float
    poles: np.ndarray
    weights: np.ndarray

    @property
    def core_occupation(self) -> float:
        return float(self.weights.sum())

    def greens(self, times: np.ndarray) -> np.ndarray:
        phase = np.exp(-1j * np.outer(times, self.poles))
        return -1j * phase @ self.weights


def ionized_state(h: Hamiltonian, core_index: int, ground: CiVector,
                  cap: int = DEFAULT_CAP) -> tuple[Sector, np.ndarray]:
    target = Sector(h.n_spin_orbitals, ground.n_electrons - 1, cap=cap)
    psi_c = annihilation_matrix(core_index, ground.sector, target) @ ground.coefficients
    if np.vdot(psi_c, psi_c).real < 1e-12:
        raise OracleError(f"core orbital {core_index} is empty in the ground state")
    return target, psi_c


def lehmann(h: Hamiltonian, core_index: int, n_electrons: int | None = None,
            cap: int = DEFAULT_CAP) -> LehmannData:
    e_g, ground = fci_ground(h, n_electrons, cap)
    sector, psi_c = ionized_state(h, core_index, ground, cap)
    hmat = hamiltonian_matrix(h, sector, dense=True)
    w, v = la.eigh(hmat)
    weights = np.abs(v.conj().T @ psi_c) ** 2
    return LehmannData(e_g, e_g - w, weights)


def exact_greens(h: Hamiltonian, core_index: int, times: np.ndarray,
                 n_electrons: int | None = None, cap: int = DEFAULT_CAP) -> GreensTrajectory:
    """``G(t) = -i exp(-i E_g t) <Psi_c| exp(iHt) |Psi_c>`` with ``Psi_c = a_c Psi``.

    Evaluated as a Lehmann sum over the (N-1)-electron eigenstates.
    """
    data = lehmann(h, core_index, n_electrons, cap)
    return GreensTrajectory(times, data.greens(np.asarray(times)), "exact")


def propagated_greens(h: Hamiltonian, core_index: int, times: np.ndarray,
                      n_electrons: int | None = None) -> np.ndarray:
    """Same quantity by direct dense propagation (cross-check of the Lehmann route)."""
    e_g, ground = fci_ground(h, n_electrons)
    sector, psi_c = ionized_state(h, core_index, ground)
    hmat = hamiltonian_matrix(h, sector, dense=True)
    dt = times[1] - times[0]
    step = la.expm(1j * dt * hmat)
    out = np.empty(len(times), dtype=complex)
    v = psi_c.copy()
    for k, t in enumerate(times):
        out[k] = -1j * np.exp(-1j * e_g * t) * np.vdot(psi_c, v)
        v = step @ v
    return out
