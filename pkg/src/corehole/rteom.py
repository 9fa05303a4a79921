"""Real-time propagation of (N-1)-electron cluster amplitudes after core ionization.

All ansätze share one engine: amplitudes live in the spin-conserving singles
and doubles space built on the N-electron reference with the core spin
orbital removed (excitations into the core orbital included), and the
similarity transform is applied exactly on the (N-1)-electron determinant
sector. The effective cluster operator is

========== ==================================================
TDCC       ``S``
TDDCC1     ``T + S``
TDDCC1_1B  ``T + S + Delta`` (singles commutator terms)
TDDCC1_2B  ``T + S + Delta`` (singles-doubles commutator terms)
TDDCC2     ``T + S + [T, S] / 2`` (full commutator)
========== ==================================================

with ``T`` the fixed N-electron amplitudes and ``S`` the propagated ones.
"""
from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .ccsd import ClusterAmplitudes
from .determinants import (DENSE_LIMIT, ExcitationSpace, OperatorPattern, Sector,
                           apply_exponential, hamiltonian_matrix, projector_indices)
from .hamiltonian import Hamiltonian, ReferencePartition
from .trajectory import GreensTrajectory, check_uniform, same_grid, uniform_grid

log = logging.getLogger(__name__)

DEFAULT_DT = 0.1
DEFAULT_TMAX = 900.0
BLOWUP_NORM = 1e3


class AnsatzKind(str, Enum):
    TDCC = "TDCC"
    TDDCC1 = "TDDCC1"
    TDDCC1_1B = "TDDCC1_1B"
    TDDCC1_2B = "TDDCC1_2B"
    TDDCC2 = "TDDCC2"

    @property
    def tag(self) -> str:
        return self.value.lower()

    @property
    def uses_ground_amplitudes(self) -> bool:
        return self is not AnsatzKind.TDCC

    @classmethod
    def parse(cls, name: str) -> "AnsatzKind":
        key = name.strip().upper().replace("-", "_").replace("(", "_").replace(")", "")
        key = key.replace("TD_", "TD").replace("DCC_", "DCC")
        aliases = {"TDDCC1_1B": cls.TDDCC1_1B, "TDDCC1_2B": cls.TDDCC1_2B}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown ansatz {name!r}") from None


class PropagationDiverged(RuntimeError):
    pass


class IntegrationFailure(RuntimeError):
    pass


@dataclass
class PropagationState:
    """Snapshot of the ionized-state amplitudes.

    ``log_norm`` is ``ln N_c(t)``, which equals ``i * energy_integral``.
    """

    time: float
    s: ClusterAmplitudes
    log_norm: complex
    energy_integral: complex
    energy: complex | None = None


class IonizedSpace:
    """Operator algebra for one (Hamiltonian, ground amplitudes, core orbital) triple."""

    def __init__(self, h: Hamiltonian, ref: ReferencePartition, core: int,
                 T: ClusterAmplitudes | None = None):
        if core not in ref.occupied:
            raise ValueError("core orbital unoccupied in reference")
        self.h = h
        self.core = core
        self.ref = ref
        self.holes = tuple(i for i in ref.occupied if i != core)
        self.particles = tuple(sorted(ref.virtual + (core,)))
        self.space = ExcitationSpace.build(self.holes, self.particles, h.spins)
        self.t_space = ExcitationSpace.build(ref.occupied, ref.virtual, h.spins)
        self.sector = Sector(h.n_spin_orbitals, h.n_electrons - 1)
        self.dense = self.sector.dim <= DENSE_LIMIT
        self.hmat = hamiltonian_matrix(h, self.sector, dense=self.dense)
        if self.dense:
            # same dtype as the state avoids a conversion in every product
            self.hmat = self.hmat.astype(complex)
        self.phi = self.sector.basis_vector(self.holes).astype(complex)
        self.ref_index = int(np.argmax(self.phi.real))
        self.pattern = OperatorPattern(self.space.strings(), self.sector)
        self.proj_index, self.proj_sign = projector_indices(self.space, self.sector, self.holes)
        # index maps between the N-electron amplitude layout and the ionized one
        self.c_hole = ref.occupied.index(core)
        self.c_part = self.particles.index(core)
        self.hole_map = [ref.occupied.index(i) for i in self.holes]
        self.part_map = [self.particles.index(a) for a in ref.virtual]
        self.T = T if T is not None else ClusterAmplitudes.zeros(ref.occupied, ref.virtual)
        t_pattern = OperatorPattern(self.t_space.strings(), self.sector)
        self.t_vec = self.t_space.pack(self.T.t1, self.T.t2)
        self.t_mat = t_pattern.matrix(self.t_vec, dense=self.dense)

    @property
    def size(self) -> int:
        return self.space.size

    def project(self, v: np.ndarray) -> np.ndarray:
        return self.proj_sign * v[self.proj_index]

    def operator(self, amps: np.ndarray):
        return self.pattern.matrix(amps, dense=self.dense)

    def unpack(self, vec: np.ndarray) -> ClusterAmplitudes:
        s1, s2 = self.space.unpack(vec)
        return ClusterAmplitudes(s1, s2, self.holes, self.particles)

    def zeros(self) -> ClusterAmplitudes:
        return ClusterAmplitudes.zeros(self.holes, self.particles, complex)

    def delta(self, kind: AnsatzKind, s: ClusterAmplitudes) -> ClusterAmplitudes:
        return effective_delta(kind, self.T, s, self.core, self)

    def cluster_operator(self, kind: AnsatzKind, s_vec: np.ndarray):
        """Effective operator ``X`` whose exponential defines the ansatz."""
        x = self.operator(s_vec)
        if kind is AnsatzKind.TDCC:
            return x
        s_op = x
        x = x + self.t_mat
        if kind in (AnsatzKind.TDDCC1_1B, AnsatzKind.TDDCC1_2B):
            d = self.delta(kind, self.unpack(s_vec))
            x = x + self.operator(self.space.pack(d.t1, d.t2))
        elif kind is AnsatzKind.TDDCC2:
            x = x + 0.5 * (self.t_mat @ s_op - s_op @ self.t_mat)
        return x

    def affine_operator(self, kind: AnsatzKind):
        """``X0, G`` with ``X(s) = X0 + (G @ s).reshape(dim, dim)`` (dense sectors only).

        Every effective operator is affine in ``s``, so the columns of ``G``
        are the operators generated by unit amplitudes.
        """
        if not self.dense:
            raise ValueError("affine form requires a dense sector")
        zero = np.zeros(self.size, dtype=complex)
        x0 = np.asarray(self.cluster_operator(kind, zero), dtype=complex)
        cols = []
        for k in range(self.size):
            unit = zero.copy()
            unit[k] = 1.0
            cols.append(sp.csc_matrix((self.cluster_operator(kind, unit) - x0).reshape(-1, 1)))
        return x0, sp.hstack(cols).tocsr()

    def transformed_column(self, x) -> np.ndarray:
        """``exp(-X) H exp(X) |phi>``."""
        w = self.hmat @ apply_exponential(x, self.phi)
        return apply_exponential(x, w, -1.0)


def effective_delta(kind: AnsatzKind, T: ClusterAmplitudes, s: ClusterAmplitudes,
                    core: int, space: IonizedSpace | None = None) -> ClusterAmplitudes:
    """Core-contracted commutator corrections in the ionized amplitude layout.

    ``s`` uses holes = occupied minus core and particles = virtual plus core;
    ``T`` uses the N-electron layout. Returns zero amplitudes unless ``kind``
    is TDDCC1_1B (singles) or TDDCC1_2B (singles and doubles).
    """
    holes, particles = s.holes, s.particles
    d1 = np.zeros(s.t1.shape, dtype=complex)
    d2 = np.zeros(s.t2.shape, dtype=complex)
    out = ClusterAmplitudes(d1, d2, holes, particles)
    if kind not in (AnsatzKind.TDDCC1_1B, AnsatzKind.TDDCC1_2B):
        return out
    if space is not None:
        ch, cp, ho, vp = space.c_hole, space.c_part, space.hole_map, space.part_map
    else:
        ch, cp = T.holes.index(core), particles.index(core)
        ho = [T.holes.index(i) for i in holes]
        vp = [particles.index(a) for a in T.particles]
    tc = T.t1[ch]                    # t_c^a
    sc = s.t1[:, cp]                 # s_i^c
    d1[:, vp] = 0.5 * np.outer(sc, tc)
    if kind is AnsatzKind.TDDCC1_2B:
        t2c = T.t2[ch][ho]           # t_cj^ab with j in the ionized hole list
        x = 0.5 * np.einsum("i,jab->ijab", sc, t2c)
        y = 0.5 * np.einsum("a,ijb->ijab", tc, s.t2[:, :, cp][:, :, vp])
        block = x - x.transpose(1, 0, 2, 3) + y - y.transpose(0, 1, 3, 2)
        d2[np.ix_(range(len(holes)), range(len(holes)), vp, vp)] = block
    return out


class RhsEvaluator:
    """Right-hand side of the amplitude and energy-integral equations.

    The state vector is ``[s (packed), integral of E]``; the derivative is
    ``[i <n|Hbar|phi>, <phi|Hbar|phi>]``.
    """

    def __init__(self, space: IonizedSpace, kind: AnsatzKind, blowup: float = BLOWUP_NORM):
        self.space = space
        self.kind = kind
        self.blowup = blowup
        self.n_calls = 0
        self._affine = space.affine_operator(kind) if space.dense else None

    def operator(self, s_vec: np.ndarray):
        if self._affine is None:
            return self.space.cluster_operator(self.kind, s_vec)
        x0, gen = self._affine
        return x0 + (gen @ s_vec).reshape(x0.shape)

    def evaluate(self, s_vec: np.ndarray) -> tuple[np.ndarray, complex]:
        space = self.space
        w = space.transformed_column(self.operator(s_vec))
        energy = complex(w[space.ref_index])
        amp_dot = 1j * space.project(w)
        if not (np.all(np.isfinite(amp_dot)) and np.isfinite(energy)):
            block = "energy" if not np.isfinite(energy) else (
                "singles" if not np.all(np.isfinite(amp_dot[: space.space.n_singles])) else "doubles")
            raise FloatingPointError(f"non-finite contraction in {block} block")
        return amp_dot, energy

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        self.n_calls += 1
        s_vec = y[:-1]
        norm = np.linalg.norm(s_vec)
        if norm > self.blowup:
            raise PropagationDiverged(f"propagation diverged at t={t:.3f} (|s|={norm:.3e})")
        amp_dot, energy = self.evaluate(s_vec)
        out = np.empty_like(y)
        out[:-1] = amp_dot
        out[-1] = energy
        return out


def eom_rhs(kind: AnsatzKind, h: Hamiltonian, T: ClusterAmplitudes, state: PropagationState,
            core: int, ref: ReferencePartition | None = None,
            space: IonizedSpace | None = None) -> tuple[ClusterAmplitudes, complex]:
    """Amplitude time derivative and instantaneous (N-1)-electron energy."""
    if space is None:
        if ref is None:
            from .hamiltonian import partition_reference
            ref = partition_reference(h, core)
        space = IonizedSpace(h, ref, core, T)
    s_vec = space.space.pack(state.s.t1, state.s.t2).astype(complex)
    amp_dot, energy = RhsEvaluator(space, AnsatzKind(kind)).evaluate(s_vec)
    return space.unpack(amp_dot), energy


class Propagation(Sequence):
    """Result of :func:`propagate`: a lazily unpacked sequence of states."""

    def __init__(self, kind: AnsatzKind, space: IonizedSpace, times: np.ndarray,
                 amplitudes: np.ndarray, energy_integral: np.ndarray, energy: np.ndarray,
                 n_calls: int = 0):
        self.kind = kind
        self.space = space
        self.times = times
        self.amplitudes = amplitudes          # (n_times, n_amp)
        self.energy_integral = energy_integral
        self.energy = energy
        self.n_calls = n_calls

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, k):
        if isinstance(k, slice):
            return [self[i] for i in range(*k.indices(len(self)))]
        return PropagationState(float(self.times[k]), self.space.unpack(self.amplitudes[k]),
                                1j * self.energy_integral[k], self.energy_integral[k],
                                self.energy[k])


def propagate(kind: AnsatzKind, h: Hamiltonian, T: ClusterAmplitudes | None, core: int,
              dt: float = DEFAULT_DT, t_max: float = DEFAULT_TMAX,
              ref: ReferencePartition | None = None, rtol: float = 1e-8, atol: float = 1e-10,
              blowup: float = BLOWUP_NORM, space: IonizedSpace | None = None) -> Propagation:
    """Integrate the amplitude equations with scipy's BDF and sample on a uniform grid."""
    kind = AnsatzKind(kind)
    times = uniform_grid(dt, t_max)
    if space is None:
        if ref is None:
            from .hamiltonian import partition_reference
            ref = partition_reference(h, core)
        if not kind.uses_ground_amplitudes:
            T = None
        space = IonizedSpace(h, ref, core, T)
    rhs = RhsEvaluator(space, kind, blowup)
    y0 = np.zeros(space.size + 1, dtype=complex)
    sol = solve_ivp(rhs, (0.0, times[-1]), y0, method="BDF", t_eval=times,
                    rtol=rtol, atol=atol)
    if sol.status != 0:
        t_fail = sol.t[-1] if len(sol.t) else 0.0
        raise IntegrationFailure(f"integrator failed at t={t_fail:.3f}: {sol.message}")
    y = sol.y.T
    amps = np.ascontiguousarray(y[:, :-1])
    energy = np.array([rhs.evaluate(a)[1] for a in amps])
    log.info("%s propagation: %d RHS calls", kind.value, rhs.n_calls)
    return Propagation(kind, space, times, amps, y[:, -1].copy(), energy, rhs.n_calls)


def cumulant_greens(states, e_cc_n: float, overlap=None,
                    method_tag: str = "cumulant") -> GreensTrajectory:
    """``G(t) = -i exp(-i (E_N t - integral of E_{N-1})) O(t)``; ``O = 1`` when absent."""
    if isinstance(states, Propagation):
        times, integral, energy = states.times, states.energy_integral, states.energy
        method_tag = states.kind.value
    else:
        times = np.array([s.time for s in states])
        integral = np.array([s.energy_integral for s in states])
        energy = np.array([s.energy if s.energy is not None else np.nan for s in states])
    check_uniform(times)
    g = -1j * np.exp(-1j * (e_cc_n * times - integral))
    if overlap is not None:
        o_times = getattr(overlap, "times", None)
        values = getattr(overlap, "total", overlap)
        if o_times is not None:
            same_grid(times, o_times)
        elif len(values) != len(times):
            raise ValueError("overlap and states differ in length")
        g = g * np.asarray(values)
    return GreensTrajectory(times, g, method_tag, energy)
