"""Time-dependent overlap and its direct / hole-mediated channel decomposition.

The overlap is

    O(t) = <phi|(1 + Lambda) exp(-T) a+_c  K(t) a_c|phi>,
    K    = 1 + X + (X^2 - Delta^2)/2,   X = T + S + Delta,

i.e. the exponential truncated at second order with the ``Delta^2`` term
dropped. The bra has weight only on the reference and on singles and doubles
of the N-electron determinant, so only ionized determinants with the core
orbital empty and at most a double excitation contribute. Each of these
defines a channel:

* ``reference``: the (N-1) reference itself;
* ``direct_*``: the ket coefficient generated without any contraction
  through the core orbital (``T`` restricted to non-core holes, plus ``S``);
* ``hm_*``: hole-mediated coefficients, the closed-form ``Omega`` amplitudes
  built from ``t_c`` / ``s^c`` products.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .ccsd import ClusterAmplitudes
from .determinants import (ExcitationSpace, OperatorPattern, Sector, annihilation_matrix,
                           apply_exponential, projector_indices)
from .rteom import AnsatzKind, IonizedSpace, Propagation, cumulant_greens, effective_delta
from .trajectory import GreensTrajectory, same_grid


class ChannelKind(str, Enum):
    REFERENCE = "reference"
    DIRECT_SINGLE = "direct_single"
    DIRECT_DOUBLE = "direct_double"
    HM_SINGLE = "hm_single"
    HM_DOUBLE = "hm_double"


@dataclass(frozen=True, order=True)
class ChannelLabel:
    """Channel kind plus spin-orbital indices ``(i, a)`` or ``(i, j, a, b)``, ``i<j``, ``a<b``."""

    kind: str
    indices: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", ChannelKind(self.kind).value)
        idx = tuple(int(x) for x in self.indices)
        if len(idx) == 4 and not (idx[0] < idx[1] and idx[2] < idx[3]):
            raise ValueError("double-excitation indices must be ordered i<j, a<b")
        object.__setattr__(self, "indices", idx)

    @property
    def is_hm(self) -> bool:
        return self.kind.startswith("hm")

    @property
    def name(self) -> str:
        return self.kind + "".join(f"_{x}" for x in self.indices)

    @classmethod
    def from_name(cls, name: str) -> "ChannelLabel":
        for kind in sorted(ChannelKind, key=lambda k: -len(k.value)):
            if name == kind.value or name.startswith(kind.value + "_"):
                rest = name[len(kind.value) + 1:]
                return cls(kind.value, tuple(int(x) for x in rest.split("_")) if rest else ())
        raise ValueError(f"not a channel name: {name!r}")


@dataclass
class OverlapDecomposition:
    times: np.ndarray
    total: np.ndarray
    channels: dict = field(default_factory=dict)

    def channel_sum(self) -> np.ndarray:
        out = np.zeros_like(self.total)
        for values in self.channels.values():
            out = out + values
        return out

    def completeness_error(self) -> float:
        return float(np.max(np.abs(self.channel_sum() - self.total)))

    def dominant(self, kind: str) -> ChannelLabel:
        """Channel of the given kind with the largest peak magnitude."""
        labels = [lab for lab in self.channels if lab.kind == ChannelKind(kind).value]
        if not labels:
            raise KeyError(f"no {kind} channels")
        return max(labels, key=lambda lab: (np.max(np.abs(self.channels[lab])), lab))

    def to_directory(self, directory, method_tag: str = "") -> Path:
        """Write ``<label>.csv`` files (``t, Re O, Im O``) and ``manifest.json``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        manifest = {"method": method_tag, "total": "total.csv", "channels": {}}
        _write_series(directory / "total.csv", self.times, self.total)
        for lab in sorted(self.channels):
            fname = f"{lab.name}.csv"
            _write_series(directory / fname, self.times, self.channels[lab])
            manifest["channels"][lab.name] = {"kind": lab.kind, "indices": list(lab.indices),
                                              "file": fname}
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return directory / "manifest.json"

    @classmethod
    def from_directory(cls, directory) -> "OverlapDecomposition":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        times, total = _read_series(directory / manifest["total"])
        channels = {}
        for name, entry in manifest["channels"].items():
            t, values = _read_series(directory / entry["file"])
            same_grid(times, t)
            channels[ChannelLabel(entry["kind"], tuple(entry["indices"]))] = values
        return cls(times, total, channels)


def _write_series(path: Path, times, values) -> None:
    with open(path, "w") as fh:
        fh.write("t,Re O,Im O\n")
        for t, v in zip(times, values):
            fh.write(f"{float(t)!r},{float(v.real)!r},{float(v.imag)!r}\n")


def _read_series(path: Path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1] + 1j * data[:, 2]


def _antisymmetrize(x: np.ndarray) -> np.ndarray:
    return x - x.transpose(1, 0, 2, 3) - x.transpose(0, 1, 3, 2) + x.transpose(1, 0, 3, 2)


def omega_amplitudes(kind: AnsatzKind, T: ClusterAmplitudes, s: ClusterAmplitudes,
                     core: int) -> tuple[np.ndarray, np.ndarray]:
    """Hole-mediated effective amplitudes ``Omega_i^a`` and ``Omega_ij^ab``.

    Tensors use the ionized layout of ``s`` (holes without the core orbital,
    particles including it); entries with a core particle index are zero.
    ``Omega_ij^ab`` is not antisymmetric in general: the doubles channel
    coefficient is its antisymmetrized sum over index permutations.
    """
    kind = AnsatzKind(kind)
    if kind is AnsatzKind.TDCC:
        raise ValueError("TDCC has no hole-mediated amplitudes")
    holes, particles = s.holes, s.particles
    ch, cp = T.holes.index(core), particles.index(core)
    ho = [T.holes.index(i) for i in holes]
    vp = [particles.index(a) for a in T.particles]
    tc = T.t1[ch]
    sc = s.t1[:, cp]
    # the four core-contracted T.S products shared by every variant
    x = np.einsum("i,jab->ijab", sc, T.t2[ch][ho])
    y = np.einsum("a,ijb->ijab", tc, s.t2[:, :, cp][:, :, vp])
    four = x - x.transpose(1, 0, 2, 3) + y - y.transpose(0, 1, 3, 2)
    tt = T.t1[ho]                     # t_i^a on ionized holes
    ss = s.t1[:, vp]                  # s_i^a on N-electron virtuals
    tcs = np.einsum("b,j->jb", tc, sc)
    p_t = np.einsum("ia,jb->ijab", tt, tcs)
    p_s = np.einsum("ia,jb->ijab", ss, tcs)
    if kind is AnsatzKind.TDDCC1:
        w1, w2 = 0.5 * np.outer(sc, tc), four / 8.0
    elif kind is AnsatzKind.TDDCC1_1B:
        w1, w2 = np.outer(sc, tc), (four + 4 * p_t + 4 * p_s) / 8.0
    else:
        w1, w2 = np.outer(sc, tc), (four + 2 * p_t + 2 * p_s) / 4.0
    o = len(holes)
    omega1 = np.zeros(s.t1.shape, dtype=complex)
    omega2 = np.zeros(s.t2.shape, dtype=complex)
    omega1[:, vp] = w1
    omega2[np.ix_(range(o), range(o), vp, vp)] = w2
    return omega1, omega2


class OverlapEvaluator:
    """Bra and ket pieces of the overlap for one ionized space and ansatz."""

    def __init__(self, space: IonizedSpace, kind: AnsatzKind, lam: ClusterAmplitudes):
        self.space = space
        self.kind = AnsatzKind(kind)
        h, ref, core = space.h, space.ref, space.core
        n_sector = Sector(h.n_spin_orbitals, h.n_electrons)
        t_pattern = OperatorPattern(space.t_space.strings(), n_sector)
        t_mat = t_pattern.matrix(space.t_vec)
        left = n_sector.basis_vector(ref.occupied)
        idx, sgn = projector_indices(space.t_space, n_sector, ref.occupied)
        left[idx] += sgn * space.t_space.pack(lam.t1, lam.t2)
        # <phi|(1+L) exp(-T) as a column vector, then moved to the (N-1) sector by a_c
        bra_n = apply_exponential(t_mat.T, left, -1.0)
        a_c = annihilation_matrix(core, n_sector, space.sector)
        # a_c|phi_N> = phase |phi_(N-1)>; the ket is built on the latter
        phase = (a_c @ n_sector.basis_vector(ref.occupied))[space.ref_index]
        self.bra = phase * (a_c @ bra_n)
        # channel determinants: ionized reference and its excitations avoiding the core
        self.chan_space = ExcitationSpace.build(space.holes, ref.virtual, h.spins)
        cidx, csgn = projector_indices(self.chan_space, space.sector, space.holes)
        self.chan_index, self.chan_sign = cidx, csgn
        self.bra_ref = self.bra[space.ref_index]
        self.bra_chan = csgn * self.bra[cidx]
        # T restricted to non-core holes (direct part of the ket)
        t1, t2 = space.T.t1.copy(), space.T.t2.copy()
        t1[space.c_hole] = 0
        t2[space.c_hole] = 0
        t2[:, space.c_hole] = 0
        self.t_direct = t_pattern_sector(space, t1, t2)
        self.labels = self._labels()

    def _labels(self) -> list[ChannelLabel]:
        cs = self.chan_space
        out = []
        for holes, parts in cs.strings():
            kind = "single" if len(holes) == 1 else "double"
            out.append((holes + parts, kind))
        return out

    def delta_operator(self, s: ClusterAmplitudes):
        d = effective_delta(self._delta_kind, self.space.T, s, self.space.core, self.space)
        return self.space.operator(self.space.space.pack(d.t1, d.t2))

    @property
    def _delta_kind(self) -> AnsatzKind:
        # the overlap of TDDCC2 uses the singles-doubles projection of its commutator
        return AnsatzKind.TDDCC1_2B if self.kind is AnsatzKind.TDDCC2 else self.kind

    def kets(self, s_vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Full truncated ket and its direct (core-uncontracted) part."""
        sp = self.space
        phi = sp.phi
        s_op = sp.operator(s_vec)
        x = sp.t_mat + s_op
        d_op = None
        if self._delta_kind in (AnsatzKind.TDDCC1_1B, AnsatzKind.TDDCC1_2B):
            d_op = self.delta_operator(sp.unpack(s_vec))
            x = x + d_op
        xphi = x @ phi
        full = phi + xphi + 0.5 * (x @ xphi)
        if d_op is not None:
            full = full - 0.5 * (d_op @ (d_op @ phi))
        xd = self.t_direct + s_op
        xdphi = xd @ phi
        direct = phi + xdphi + 0.5 * (xd @ xdphi)
        return full, direct

    def hm_coefficients(self, s: ClusterAmplitudes) -> np.ndarray:
        """Omega-based ket coefficients on the channel determinants."""
        o1, o2 = omega_amplitudes(self.kind, self.space.T, s, self.space.core)
        vp = self.space.part_map
        w1 = o1[:, vp]
        w2 = _antisymmetrize(o2[:, :, vp][:, :, :, vp])
        return self.chan_space.pack(w1, w2)


def t_pattern_sector(space: IonizedSpace, t1, t2):
    pattern = OperatorPattern(space.t_space.strings(), space.sector)
    return pattern.matrix(space.t_space.pack(t1, t2), dense=space.dense)


def overlap_trajectory(kind: AnsatzKind, T: ClusterAmplitudes, lam: ClusterAmplitudes | None,
                       propagation: Propagation, core: int | None = None) -> OverlapDecomposition:
    """Total overlap and channel trajectories along a propagation."""
    kind = AnsatzKind(kind)
    times = propagation.times
    n_t = len(times)
    if kind is AnsatzKind.TDCC:
        ones = np.ones(n_t, dtype=complex)
        return OverlapDecomposition(times, ones, {ChannelLabel("reference"): ones.copy()})
    if propagation.kind is not kind:
        raise ValueError(f"propagation is {propagation.kind.value}, overlap requested for {kind.value}")
    space = propagation.space
    if core is not None and core != space.core:
        raise ValueError("core index differs from the propagation's")
    if lam is None:
        raise ValueError("Lambda amplitudes are required for the overlap")
    ev = OverlapEvaluator(space, kind, lam)
    n_chan = ev.chan_space.size
    total = np.empty(n_t, dtype=complex)
    direct = np.empty((n_t, n_chan), dtype=complex)
    hm = np.empty((n_t, n_chan), dtype=complex)
    for k in range(n_t):
        s_vec = propagation.amplitudes[k]
        full, dket = ev.kets(s_vec)
        total[k] = ev.bra @ full
        direct[k] = ev.bra_chan * (ev.chan_sign * dket[ev.chan_index])
        hm[k] = ev.bra_chan * ev.hm_coefficients(space.unpack(s_vec))
    channels = {ChannelLabel("reference"): np.full(n_t, ev.bra_ref, dtype=complex)}
    for n, (idx, order) in enumerate(ev.labels):
        channels[ChannelLabel(f"direct_{order}", idx)] = direct[:, n]
        channels[ChannelLabel(f"hm_{order}", idx)] = hm[:, n]
    return OverlapDecomposition(times, total, channels)


def channel_greens(decomp: OverlapDecomposition, propagation: Propagation,
                   e_cc_n: float) -> dict:
    """Green's-function contribution of every channel (sums to the total)."""
    same_grid(decomp.times, propagation.times)
    envelope = cumulant_greens(propagation, e_cc_n).g
    tag = propagation.kind.value
    return {lab: GreensTrajectory(decomp.times, envelope * values, f"{tag}:{lab.name}")
            for lab, values in decomp.channels.items()}
