"""Spin-orbital CCSD ground state and Lambda (left) amplitudes.

The T equations use the Stanton-Gauss intermediates and accept complex
amplitudes, so the same residual serves any single-reference sector.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .determinants import (ExcitationSpace, OperatorPattern, Sector, apply_exponential,
                           hamiltonian_matrix, projector_indices)
from .hamiltonian import Hamiltonian, ReferencePartition, fock_matrix, reference_energy

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual norm {residual:.3e})")
        self.residual = residual


@dataclass
class ClusterAmplitudes:
    """Singles ``t1[i, a]`` and antisymmetric doubles ``t2[i, j, a, b]``.

    ``holes`` and ``particles`` give the spin-orbital index of each tensor axis
    position.
    """

    t1: np.ndarray
    t2: np.ndarray
    holes: tuple
    particles: tuple

    @property
    def scalar_kind(self) -> str:
        return "complex" if np.iscomplexobj(self.t1) else "real"

    @classmethod
    def zeros(cls, holes, particles, dtype=float) -> "ClusterAmplitudes":
        no, nv = len(holes), len(particles)
        return cls(np.zeros((no, nv), dtype), np.zeros((no, no, nv, nv), dtype),
                   tuple(holes), tuple(particles))

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.t1) ** 2) + 0.25 * np.sum(np.abs(self.t2) ** 2)))


LambdaAmplitudes = ClusterAmplitudes


class Integrals:
    """Fock and antisymmetrized two-electron blocks for one occupied/virtual split."""

    def __init__(self, h: Hamiltonian, holes, particles, occupied=None):
        o, v = list(holes), list(particles)
        occupied = o if occupied is None else list(occupied)
        f = fock_matrix(h, occupied)
        self.e_ref = reference_energy(h, occupied)
        self.foo, self.fov, self.fvv = f[np.ix_(o, o)], f[np.ix_(o, v)], f[np.ix_(v, v)]
        g = h.v2
        blk = lambda a, b, c, d: g[np.ix_(a, b, c, d)]
        self.oooo, self.ooov, self.oovo = blk(o, o, o, o), blk(o, o, o, v), blk(o, o, v, o)
        self.oovv, self.ovov, self.ovvo = blk(o, o, v, v), blk(o, v, o, v), blk(o, v, v, o)
        self.ovvv, self.vovv, self.vvvv = blk(o, v, v, v), blk(v, o, v, v), blk(v, v, v, v)
        self.vvvo, self.ovoo = blk(v, v, v, o), blk(o, v, o, o)
        eo, ev = np.diag(self.foo), np.diag(self.fvv)
        self.d1 = eo[:, None] - ev[None, :]
        self.d2 = eo[:, None, None, None] + eo[None, :, None, None] - ev[None, None, :, None] - ev


def _tau(t1, t2, scale=1.0):
    x = np.einsum("ia,jb->ijab", t1, t1)
    return t2 + scale * (x - x.transpose(0, 1, 3, 2))


def ccsd_energy(ints: Integrals, t1, t2) -> complex:
    e = np.einsum("ia,ia->", ints.fov, t1)
    e += 0.25 * np.einsum("ijab,ijab->", ints.oovv, t2)
    e += 0.5 * np.einsum("ijab,ia,jb->", ints.oovv, t1, t1)
    return ints.e_ref + e


def ccsd_residual(ints: Integrals, t1, t2):
    """Projections ``<Phi_i^a|Hbar|0>`` and ``<Phi_ij^ab|Hbar|0>``."""
    nv = ints.fvv.shape[0]
    no = ints.foo.shape[0]
    fov = ints.fov
    taut = _tau(t1, t2, 0.5)
    tau = _tau(t1, t2, 1.0)

    fae = ints.fvv * (1 - np.eye(nv)) - 0.5 * np.einsum("me,ma->ae", fov, t1)
    fae = fae + np.einsum("mf,mafe->ae", t1, ints.ovvv)
    fae = fae - 0.5 * np.einsum("mnaf,mnef->ae", taut, ints.oovv)
    fmi = ints.foo * (1 - np.eye(no)) + 0.5 * np.einsum("ie,me->mi", t1, fov)
    fmi = fmi + np.einsum("ne,mnie->mi", t1, ints.ooov)
    fmi = fmi + 0.5 * np.einsum("inef,mnef->mi", taut, ints.oovv)
    fme = fov + np.einsum("nf,mnef->me", t1, ints.oovv)

    x = np.einsum("je,mnie->mnij", t1, ints.ooov)
    wmnij = ints.oooo + x - x.transpose(0, 1, 3, 2)
    wmnij = wmnij + 0.25 * np.einsum("ijef,mnef->mnij", tau, ints.oovv)
    x = np.einsum("mb,amef->abef", t1, ints.vovv)
    wabef = ints.vvvv - x + x.transpose(1, 0, 2, 3)
    wabef = wabef + 0.25 * np.einsum("mnab,mnef->abef", tau, ints.oovv)
    wmbej = ints.ovvo + np.einsum("jf,mbef->mbej", t1, ints.ovvv)
    wmbej = wmbej - np.einsum("nb,mnej->mbej", t1, ints.oovo)
    wmbej = wmbej - np.einsum("jnfb,mnef->mbej",
                              0.5 * t2 + np.einsum("jf,nb->jnfb", t1, t1), ints.oovv)

    r1 = fov + np.einsum("ie,ae->ia", t1, fae) - np.einsum("ma,mi->ia", t1, fmi)
    r1 = r1 + np.einsum("imae,me->ia", t2, fme) - np.einsum("nf,naif->ia", t1, ints.ovov)
    r1 = r1 - 0.5 * np.einsum("imef,maef->ia", t2, ints.ovvv)
    r1 = r1 - 0.5 * np.einsum("mnae,nmei->ia", t2, ints.oovo)
    r1 = r1 - ints.d1 * t1

    r2 = ints.oovv.astype(np.result_type(ints.oovv, t2))
    x = np.einsum("ijae,be->ijab", t2, fae - 0.5 * np.einsum("mb,me->be", t1, fme))
    r2 = r2 + x - x.transpose(0, 1, 3, 2)
    x = np.einsum("imab,mj->ijab", t2, fmi + 0.5 * np.einsum("je,me->mj", t1, fme))
    r2 = r2 - x + x.transpose(1, 0, 2, 3)
    r2 = r2 + 0.5 * np.einsum("mnab,mnij->ijab", tau, wmnij)
    r2 = r2 + 0.5 * np.einsum("ijef,abef->ijab", tau, wabef)
    x = np.einsum("imae,mbej->ijab", t2, wmbej)
    x = x - np.einsum("ie,ma,mbej->ijab", t1, t1, ints.ovvo)
    r2 = r2 + x - x.transpose(1, 0, 2, 3) - x.transpose(0, 1, 3, 2) + x.transpose(1, 0, 3, 2)
    x = np.einsum("ie,abej->ijab", t1, ints.vvvo)
    r2 = r2 + x - x.transpose(1, 0, 2, 3)
    x = np.einsum("ma,mbij->ijab", t1, ints.ovoo)
    r2 = r2 - x + x.transpose(0, 1, 3, 2)
    r2 = r2 - ints.d2 * t2
    return r1, r2


class Diis:
    """Pulay extrapolation on flat vectors."""

    def __init__(self, size: int = 8):
        self.size = size
        self.vectors: list[np.ndarray] = []
        self.errors: list[np.ndarray] = []

    def update(self, vec: np.ndarray, err: np.ndarray) -> np.ndarray:
        self.vectors.append(vec.copy())
        self.errors.append(err.copy())
        if len(self.vectors) > self.size:
            self.vectors.pop(0)
            self.errors.pop(0)
        n = len(self.vectors)
        if n < 3:
            return vec
        b = -np.ones((n + 1, n + 1), dtype=complex)
        b[n, n] = 0
        for i in range(n):
            for j in range(n):
                b[i, j] = np.vdot(self.errors[i], self.errors[j])
        rhs = np.zeros(n + 1, dtype=complex)
        rhs[n] = -1
        try:
            coef = np.linalg.solve(b, rhs)[:n]
        except np.linalg.LinAlgError:
            return vec
        out = sum(c * v for c, v in zip(coef, self.vectors))
        return out if np.iscomplexobj(vec) else out.real


PRECONDITIONER_FLOOR = 0.25


def _check_gap(h: Hamiltonian, ref: ReferencePartition) -> None:
    diag = np.diag(h.h1)
    if ref.virtual and diag[list(ref.virtual)].min() - diag[list(ref.occupied)].max() <= 1e-8:
        raise ValueError("degenerate reference: no gap between occupied and virtual h1 diagonals")


def _precondition(d: np.ndarray) -> np.ndarray:
    # Fock denominators can cancel accidentally; keep their sign but floor the size
    return np.where(np.abs(d) < PRECONDITIONER_FLOOR, -PRECONDITIONER_FLOOR, d)


def _iterate(ints: Integrals, t1, t2, tol, max_iter, diis_size):
    """Preconditioned Jacobi sweeps with optional DIIS; returns ``(t1, t2, residual)``."""
    p1, p2 = _precondition(ints.d1), _precondition(ints.d2)
    diis = Diis(diis_size) if diis_size else None
    norm = np.inf
    for _ in range(max_iter):
        r1, r2 = ccsd_residual(ints, t1, t2)
        norm = float(np.sqrt(np.sum(np.abs(r1) ** 2) + np.sum(np.abs(r2) ** 2)))
        if not np.isfinite(norm) or norm < tol:
            break
        t1 = t1 + r1 / p1
        t2 = t2 + r2 / p2
        if diis is not None:
            flat = diis.update(np.concatenate([t1.ravel(), t2.ravel()]),
                               np.concatenate([r1.ravel(), r2.ravel()]))
            t1 = flat[: t1.size].reshape(t1.shape)
            t2 = flat[t1.size:].reshape(t2.shape)
    return t1, t2, norm


def solve_ccsd(h: Hamiltonian, ref: ReferencePartition, tol: float = 1e-9,
               max_iter: int = 200, diis_size: int = 8,
               ramp_steps: int = 10) -> tuple[float, ClusterAmplitudes]:
    """Converge CCSD amplitudes for the reference ``ref``.

    Strongly correlated references admit several CCSD roots, and iterating from
    zero amplitudes can land on an unphysical one. With ``ramp_steps > 0`` the
    two-electron part is switched on in equal steps, each solve seeded with the
    previous amplitudes, which follows the root connected to the
    non-interacting problem. ``ramp_steps=0`` iterates directly at full
    coupling. Each stage tries DIIS and falls back to plain Jacobi.
    """
    _check_gap(h, ref)
    ints = Integrals(h, ref.occupied, ref.virtual)
    t1 = np.zeros_like(ints.fov)
    t2 = np.zeros_like(ints.oovv)
    scales = np.linspace(0.0, 1.0, ramp_steps + 1)[1:] if ramp_steps > 0 else [1.0]
    norm = np.inf
    for scale in scales:
        stage = ints if scale == 1.0 else Integrals(
            Hamiltonian(h.h1, scale * h.v2, h.scalar_shift, h.n_electrons),
            ref.occupied, ref.virtual)
        for diis_size_try in (diis_size, 0):
            n1, n2, norm = _iterate(stage, t1, t2, tol, max_iter, diis_size_try)
            if norm < tol:
                t1, t2 = n1, n2
                break
            log.warning("CCSD stage at coupling %.2f stalled (DIIS %d)", scale, diis_size_try)
        else:
            raise ConvergenceError("CCSD amplitudes did not converge", norm)
    e = float(np.real(ccsd_energy(ints, t1, t2)))
    log.info("CCSD energy %.12f", e)
    return e, ClusterAmplitudes(t1, t2, ref.occupied, ref.virtual)


class SectorCC:
    """Exact operator algebra for a cluster operator on one determinant sector."""

    def __init__(self, h: Hamiltonian, space: ExcitationSpace, reference, sector: Sector | None = None):
        self.sector = sector or Sector(h.n_spin_orbitals, len(reference))
        self.space = space
        self.hmat = hamiltonian_matrix(h, self.sector)
        self.pattern = OperatorPattern(space.strings(), self.sector)
        self.phi = self.sector.basis_vector(reference)
        self.proj_index, self.proj_sign = projector_indices(space, self.sector, reference)

    def project(self, v: np.ndarray) -> np.ndarray:
        return self.proj_sign * v[self.proj_index]

    def transformed_column(self, x_mat) -> np.ndarray:
        """``exp(-X) H exp(X) |ref>`` as a sector vector."""
        w = self.hmat @ apply_exponential(x_mat, self.phi)
        return apply_exponential(x_mat, w, -1.0)

    def residual(self, amps: np.ndarray) -> tuple[np.ndarray, complex]:
        w = self.transformed_column(self.pattern.matrix(amps))
        return self.project(w), w @ self.phi

    def left_vector(self, lam: np.ndarray) -> np.ndarray:
        """``(1 + Lambda)`` bra as a sector vector (real coefficients of ``<ref|(1+L)``)."""
        v = self.phi.astype(np.result_type(lam, float)).copy()
        np.add.at(v, self.proj_index, self.proj_sign * lam)
        return v

    def bra_transformed(self, amps: np.ndarray, left: np.ndarray) -> np.ndarray:
        """Components of ``<left| exp(-T) H exp(T)`` on every determinant."""
        tt = self.pattern.matrix(amps).T
        u = apply_exponential(tt, left, -1.0)
        u = self.hmat.T @ u
        return apply_exponential(tt, u, 1.0)


def solve_lambda(h: Hamiltonian, ref: ReferencePartition, amps: ClusterAmplitudes,
                 tol: float = 1e-9, max_iter: int = 300, diis_size: int = 8,
                 engine: SectorCC | None = None) -> ClusterAmplitudes:
    """Solve ``<0|(1 + Lambda)(Hbar - E)|nu> = 0`` for all singles and doubles ``nu``.

    The similarity-transformed Hamiltonian is applied exactly in the N-electron
    determinant sector; Jacobi sweeps use its diagonal and are DIIS accelerated.
    """
    space = ExcitationSpace.build(ref.occupied, ref.virtual, h.spins)
    engine = engine or SectorCC(h, space, ref.occupied)
    t = space.pack(amps.t1, amps.t2)
    e_cc = float(np.real(engine.residual(t)[1]))
    # diagonal of Hbar - E on the excitation manifold
    diag = np.empty(space.size)
    for n in range(space.size):
        unit = np.zeros(space.size)
        unit[n] = 1.0
        left = engine.left_vector(unit) - engine.phi
        diag[n] = engine.project(engine.bra_transformed(t, left))[n] - e_cc
    if np.min(np.abs(diag)) < 1e-8:
        raise ValueError("singular Lambda preconditioner")
    lam = np.zeros(space.size)
    diis = Diis(diis_size)
    res_norm = np.inf
    for it in range(max_iter):
        res = engine.project(engine.bra_transformed(t, engine.left_vector(lam))) - e_cc * lam
        res_norm = float(np.linalg.norm(res))
        if res_norm < tol:
            log.info("Lambda converged in %d iterations", it)
            l1, l2 = space.unpack(lam)
            return ClusterAmplitudes(l1, l2, ref.occupied, ref.virtual)
        lam = diis.update(lam - res / diag, res)
    raise ConvergenceError("Lambda amplitudes did not converge", res_norm)
