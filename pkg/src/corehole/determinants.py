"""Occupation-bitmask determinants and second-quantized operator algebra.

A determinant with occupied spin orbitals ``p1 < p2 < ... < pk`` is
``a+_p1 a+_p2 ... a+_pk |vac>``: creators are applied in descending index
order, so acting with ``a_p`` or ``a+_p`` picks up ``(-1)**(number of occupied
orbitals below p)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .hamiltonian import Hamiltonian

DENSE_LIMIT = 1500


class SectorTooLarge(RuntimeError):
    pass


def _parity_below(det: int, p: int) -> int:
    return -1 if bin(det & ((1 << p) - 1)).count("1") & 1 else 1


def apply_string(det: int, string: Sequence[tuple[int, bool]]) -> tuple[int, int]:
    """Apply an operator product to ``det``.

    ``string`` lists ``(orbital, is_creator)`` left to right, as written; the
    rightmost operator acts first. Returns ``(sign, new_det)`` with sign 0 if
    the result vanishes.
    """
    sign = 1
    for p, create in reversed(string):
        bit = 1 << p
        if create == bool(det & bit):
            return 0, det
        sign *= _parity_below(det, p)
        det ^= bit
    return sign, det


def excitation_string(holes: Sequence[int], particles: Sequence[int]) -> list[tuple[int, bool]]:
    """``a+_a a+_b ... a_j a_i`` for holes ``(i, j, ...)`` and particles ``(a, b, ...)``."""
    return [(p, True) for p in particles] + [(h, False) for h in reversed(holes)]


class Sector:
    """All determinants with a fixed electron count, sorted by bitmask."""

    def __init__(self, n_orbitals: int, n_electrons: int, cap: int = 200_000):
        dim = comb(n_orbitals, n_electrons)
        if dim > cap:
            raise SectorTooLarge(f"sector dimension {dim} exceeds cap {cap}")
        self.n_orbitals = n_orbitals
        self.n_electrons = n_electrons
        dets = [sum(1 << p for p in occ)
                for occ in itertools.combinations(range(n_orbitals), n_electrons)]
        self.dets = np.array(sorted(dets), dtype=np.int64)
        self.index = {int(d): i for i, d in enumerate(self.dets)}

    @property
    def dim(self) -> int:
        return len(self.dets)

    def basis_vector(self, occupied: Iterable[int]) -> np.ndarray:
        v = np.zeros(self.dim)
        v[self.index[sum(1 << p for p in occupied)]] = 1.0
        return v


def hamiltonian_matrix(h: Hamiltonian, sector: Sector, dense: bool | None = None):
    """Matrix of ``h`` within ``sector`` via Slater-Condon rules (includes the shift)."""
    n = h.n_spin_orbitals
    h1, v2 = h.h1, h.v2
    rows, cols, vals = [], [], []
    for col, det in enumerate(sector.dets):
        det = int(det)
        occ = [p for p in range(n) if det >> p & 1]
        emp = [p for p in range(n) if not det >> p & 1]
        diag = h.scalar_shift + sum(h1[p, p] for p in occ)
        diag += 0.5 * sum(v2[p, q, p, q] for p in occ for q in occ)
        rows.append(col)
        cols.append(col)
        vals.append(diag)
        for i in occ:
            for a in emp:
                val = h1[a, i] + sum(v2[a, j, i, j] for j in occ)
                if val != 0.0:
                    sign, new = apply_string(det, ((a, True), (i, False)))
                    rows.append(sector.index[new])
                    cols.append(col)
                    vals.append(sign * val)
        for i, j in itertools.combinations(occ, 2):
            for a, b in itertools.combinations(emp, 2):
                val = v2[a, b, i, j]
                if val != 0.0:
                    sign, new = apply_string(det, excitation_string((i, j), (a, b)))
                    rows.append(sector.index[new])
                    cols.append(col)
                    vals.append(sign * val)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(sector.dim, sector.dim))
    if dense is None:
        dense = sector.dim <= DENSE_LIMIT
    return mat.toarray() if dense else mat


def annihilation_matrix(p: int, source: Sector, target: Sector) -> sp.csr_matrix:
    """``a_p`` as a map from ``source`` (k electrons) to ``target`` (k-1)."""
    rows, cols, vals = [], [], []
    for col, det in enumerate(source.dets):
        sign, new = apply_string(int(det), ((p, False),))
        if sign:
            rows.append(target.index[new])
            cols.append(col)
            vals.append(sign)
    return sp.csr_matrix((vals, (rows, cols)), shape=(target.dim, source.dim))


@dataclass(frozen=True)
class ExcitationSpace:
    """Spin-conserving singles and doubles from ``holes`` into ``particles``.

    Doubles are stored once with ``i < j`` and ``a < b`` (positions in the hole
    and particle lists); full antisymmetric tensors are produced on unpacking.
    """

    holes: tuple
    particles: tuple
    singles: tuple
    doubles: tuple

    @classmethod
    def build(cls, holes: Sequence[int], particles: Sequence[int],
              spins: np.ndarray | None = None) -> "ExcitationSpace":
        holes, particles = tuple(holes), tuple(particles)
        if spins is None:
            spins = np.zeros(max(holes + particles) + 1, dtype=int)
        singles = tuple((i, a) for i in range(len(holes)) for a in range(len(particles))
                        if spins[holes[i]] == spins[particles[a]])
        doubles = []
        for i, j in itertools.combinations(range(len(holes)), 2):
            for a, b in itertools.combinations(range(len(particles)), 2):
                if spins[holes[i]] + spins[holes[j]] == spins[particles[a]] + spins[particles[b]]:
                    doubles.append((i, j, a, b))
        return cls(holes, particles, singles, tuple(doubles))

    @property
    def n_singles(self) -> int:
        return len(self.singles)

    @property
    def size(self) -> int:
        return len(self.singles) + len(self.doubles)

    def strings(self):
        """Orbital-level ``(holes, particles)`` for each packed amplitude."""
        H, P = self.holes, self.particles
        out = [((H[i],), (P[a],)) for i, a in self.singles]
        out += [((H[i], H[j]), (P[a], P[b])) for i, j, a, b in self.doubles]
        return out

    def pack(self, t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
        s = np.array([t1[i, a] for i, a in self.singles], dtype=np.result_type(t1, t2))
        d = np.array([t2[i, j, a, b] for i, j, a, b in self.doubles], dtype=s.dtype)
        return np.concatenate([s, d])

    def unpack(self, vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        no, nv = len(self.holes), len(self.particles)
        t1 = np.zeros((no, nv), dtype=vec.dtype)
        t2 = np.zeros((no, no, nv, nv), dtype=vec.dtype)
        for x, (i, a) in zip(vec[: self.n_singles], self.singles):
            t1[i, a] = x
        for x, (i, j, a, b) in zip(vec[self.n_singles:], self.doubles):
            t2[i, j, a, b] = x
            t2[j, i, a, b] = -x
            t2[i, j, b, a] = -x
            t2[j, i, b, a] = x
        return t1, t2


class OperatorPattern:
    """Sparsity pattern of ``sum_k x_k E_k`` for a list of excitation strings on a sector.

    Each nonzero records the amplitude index ``k`` and the fermionic sign, so
    the operator matrix for new amplitudes is a single scatter.
    """

    def __init__(self, strings, sector: Sector, target: Sector | None = None,
                 adjoint: bool = False):
        target = target or sector
        rows, cols, signs, index = [], [], [], []
        for k, (holes, particles) in enumerate(strings):
            if adjoint:
                op = [(p, not c) for p, c in reversed(excitation_string(holes, particles))]
            else:
                op = excitation_string(holes, particles)
            for col, det in enumerate(sector.dets):
                sign, new = apply_string(int(det), op)
                if sign:
                    rows.append(target.index[new])
                    cols.append(col)
                    signs.append(sign)
                    index.append(k)
        self.rows = np.array(rows, dtype=np.intp)
        self.cols = np.array(cols, dtype=np.intp)
        self.signs = np.array(signs, dtype=float)
        self.index = np.array(index, dtype=np.intp)
        self.shape = (target.dim, sector.dim)
        self.n_amplitudes = len(strings)
        flat = self.rows * self.shape[1] + self.cols
        # distinct excitation strings never share a matrix element, but stay safe
        self._unique = len(np.unique(flat)) == len(flat)

    def matrix(self, amps: np.ndarray, dense: bool = True):
        data = self.signs * np.asarray(amps)[self.index]
        if dense:
            out = np.zeros(self.shape, dtype=data.dtype)
            if self._unique:
                out[self.rows, self.cols] = data
            else:
                np.add.at(out, (self.rows, self.cols), data)
            return out
        return sp.csr_matrix((data, (self.rows, self.cols)), shape=self.shape)


def projector_indices(space: ExcitationSpace, sector: Sector, reference: Sequence[int]):
    """Determinant index and sign of ``E_n |ref>`` for every packed amplitude ``n``.

    With these, ``<Phi_n|v> = sign_n * v[index_n]`` where ``|Phi_n> = E_n|ref>``.
    """
    ref = sum(1 << p for p in reference)
    idx, sgn = [], []
    for holes, particles in space.strings():
        sign, new = apply_string(ref, excitation_string(holes, particles))
        if sign == 0:
            raise ValueError("excitation does not act on the reference")
        idx.append(sector.index[new])
        sgn.append(sign)
    return np.array(idx, dtype=np.intp), np.array(sgn, dtype=float)


def apply_exponential(x, v: np.ndarray, sign: float = 1.0, max_order: int = 64) -> np.ndarray:
    """``exp(sign * X) v`` by Taylor series; terminates exactly for nilpotent ``X``."""
    out = v.astype(np.result_type(x.dtype, v.dtype, float))
    term = out
    for k in range(1, max_order + 1):
        term = x @ term
        if not term.any():
            return out
        term *= sign / k
        out += term
    if np.linalg.norm(term) > 1e-14 * max(1.0, np.linalg.norm(out)):
        raise ArithmeticError("exponential series did not terminate; operator not nilpotent")
    return out
