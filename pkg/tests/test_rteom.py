import numpy as np
import pytest
from scipy.linalg import expm

import corehole.rteom as rteom
from corehole.ccsd import ClusterAmplitudes, solve_ccsd
from corehole.determinants import ExcitationSpace
from corehole.hamiltonian import (Hamiltonian, build_siam, partition_reference,
                                  reference_energy)
from corehole.rteom import (AnsatzKind, IntegrationFailure, IonizedSpace, PropagationDiverged,
                            PropagationState, RhsEvaluator, cumulant_greens, effective_delta,
                            eom_rhs, propagate)
from corehole.spectra import find_peaks, fourier_spectrum
from corehole.trajectory import GreensTrajectory, GridMismatch, uniform_grid

from conftest import CORE, siam_params
from oracles import Fock, random_spin_amplitudes

SPINS8 = np.arange(8) % 2
OCC, VIR, C = (0, 1, 2, 3), (4, 5, 6, 7), 1
HOLES, PARTS = (0, 2, 3), (1, 4, 5, 6, 7)


def _random_pair(rng, scale=0.3):
    t1, t2 = random_spin_amplitudes(rng, OCC, VIR, 8, scale)
    s1, s2 = random_spin_amplitudes(rng, HOLES, PARTS, 8, scale, complex_=True)
    return ClusterAmplitudes(t1, t2, OCC, VIR), ClusterAmplitudes(s1, s2, HOLES, PARTS)


def _sd_coefficients(fock, op, holes, parts):
    """Packed SD amplitudes of an excitation operator read off ``op |phi>``."""
    space = ExcitationSpace.build(holes, parts, SPINS8)
    phi = fock.state(holes)
    col = op @ phi
    return np.array([(fock.excitation(h, p) @ phi) @ col for h, p in space.strings()]), space


@pytest.mark.parametrize("seed", range(4))
def test_delta_2b_matches_commutator_oracle(seed):
    rng = np.random.default_rng(seed)
    T, s = _random_pair(rng)
    fock = Fock(8)
    zero1, zero2 = np.zeros_like(T.t1), np.zeros_like(T.t2)
    t1_op = fock.cluster(T.t1, zero2, OCC, VIR)
    t2_op = fock.cluster(zero1, T.t2, OCC, VIR)
    s1_op = fock.cluster(s.t1, np.zeros_like(s.t2), HOLES, PARTS)
    s2_op = fock.cluster(np.zeros_like(s.t1), s.t2, HOLES, PARTS)
    comm = lambda a, b: a @ b - b @ a
    want_1b, space = _sd_coefficients(fock, 0.5 * comm(t1_op, s1_op), HOLES, PARTS)
    want_2b, _ = _sd_coefficients(
        fock, 0.5 * (comm(t1_op, s1_op) + comm(t2_op, s1_op) + comm(t1_op, s2_op)), HOLES, PARTS)
    got_1b = effective_delta(AnsatzKind.TDDCC1_1B, T, s, C)
    got_2b = effective_delta(AnsatzKind.TDDCC1_2B, T, s, C)
    assert np.max(np.abs(space.pack(got_1b.t1, got_1b.t2) - want_1b)) < 1e-13
    assert np.max(np.abs(space.pack(got_2b.t1, got_2b.t2) - want_2b)) < 1e-13


def test_delta_single_entry_and_zero():
    t1 = np.zeros((4, 4))
    t1[OCC.index(C), VIR.index(5)] = 0.3           # t_c^a with a = 5 (same spin as c)
    s1 = np.zeros((3, 5), dtype=complex)
    s1[HOLES.index(3), PARTS.index(C)] = 0.2j      # s_i^c with i = 3
    T = ClusterAmplitudes(t1, np.zeros((4, 4, 4, 4)), OCC, VIR)
    s = ClusterAmplitudes(s1, np.zeros((3, 3, 5, 5), dtype=complex), HOLES, PARTS)
    d = effective_delta(AnsatzKind.TDDCC1_1B, T, s, C)
    nz = np.argwhere(d.t1)
    assert nz.tolist() == [[HOLES.index(3), PARTS.index(5)]]
    assert d.t1[HOLES.index(3), PARTS.index(5)] == pytest.approx(0.5 * 0.3 * 0.2j)
    zero_s = ClusterAmplitudes.zeros(HOLES, PARTS, complex)
    for kind in AnsatzKind:
        dz = effective_delta(kind, T, zero_s, C)
        assert not dz.t1.any() and not dz.t2.any()
    assert not effective_delta(AnsatzKind.TDDCC1, T, s, C).t1.any()


def _oracle_operator(fock, kind, T, s, ref, holes, parts):
    s_op = fock.cluster(s.t1, s.t2, holes, parts)
    if kind is AnsatzKind.TDCC:
        return s_op
    t_op = fock.cluster(T.t1, T.t2, ref.occupied, ref.virtual)
    x = t_op + s_op
    if kind in (AnsatzKind.TDDCC1_1B, AnsatzKind.TDDCC1_2B):
        d = effective_delta(kind, T, s, ref.core_index)
        x = x + fock.cluster(d.t1, d.t2, holes, parts)
    elif kind is AnsatzKind.TDDCC2:
        x = x + 0.5 * (t_op @ s_op - s_op @ t_op)
    return x


@pytest.mark.parametrize("kind", list(AnsatzKind))
def test_rhs_matches_dense_oracle(kind, siam2):
    ref = partition_reference(siam2, CORE)
    _, T = solve_ccsd(siam2, ref)
    space = IonizedSpace(siam2, ref, CORE, T)
    rng = np.random.default_rng(7)
    s_vec = 0.05 * (rng.normal(size=space.size) + 1j * rng.normal(size=space.size))
    s = space.unpack(s_vec)
    state = PropagationState(0.3, s, 0.0, 0.0)
    amp_dot, energy = eom_rhs(kind, siam2, T, state, CORE, ref)
    fock = Fock(8)
    x = _oracle_operator(fock, kind, T, s, ref, space.holes, space.particles)
    hmat = fock.hamiltonian(siam2.h1, siam2.v2)
    phi = fock.state(space.holes)
    col = expm(-x) @ hmat @ expm(x) @ phi
    want = np.array([1j * (fock.excitation(h, p) @ phi) @ col for h, p in space.space.strings()])
    got = space.space.pack(amp_dot.t1, amp_dot.t2)
    assert np.max(np.abs(got - want)) < 1e-12
    assert energy == pytest.approx(phi @ col, abs=1e-12)


def test_initial_energies(siam2):
    ref = partition_reference(siam2, CORE)
    _, T = solve_ccsd(siam2, ref)
    space = IonizedSpace(siam2, ref, CORE, T)
    zero = PropagationState(0.0, space.zeros(), 0.0, 0.0)
    _, e_tdcc = eom_rhs(AnsatzKind.TDCC, siam2, T, zero, CORE, ref)
    assert e_tdcc == pytest.approx(reference_energy(siam2, space.holes), abs=1e-13)
    _, e_dcc = eom_rhs(AnsatzKind.TDDCC1, siam2, T, zero, CORE, ref)
    fock = Fock(8)
    x = fock.cluster(T.t1, T.t2, ref.occupied, ref.virtual)
    phi = fock.state(space.holes)
    want = phi @ expm(-x) @ fock.hamiltonian(siam2.h1, siam2.v2) @ expm(x) @ phi
    assert e_dcc == pytest.approx(want, abs=1e-12)


def _one_body_siam():
    return build_siam(siam_params(0.0, baths=(-1.0, 1.0)))


@pytest.mark.parametrize("kind", list(AnsatzKind))
def test_one_body_keeps_singles(kind):
    h = _one_body_siam()
    ref = partition_reference(h, CORE)
    _, T = solve_ccsd(h, ref)
    space = IonizedSpace(h, ref, CORE, T)
    rng = np.random.default_rng(1)
    s = space.zeros()
    s.t1[:] = 0.1 * (rng.normal(size=s.t1.shape) + 1j * rng.normal(size=s.t1.shape))
    s.t1[space.space.unpack(np.ones(space.size))[0] == 0] = 0   # keep spin conservation
    amp_dot, _ = eom_rhs(kind, h, T, PropagationState(0.0, s, 0.0, 0.0), CORE, ref)
    assert np.max(np.abs(amp_dot.t2)) < 1e-12


@pytest.mark.parametrize("kind", list(AnsatzKind))
def test_one_body_energy_is_constant(kind):
    # with the core level decoupled the ionized reference is stationary
    h = build_siam(siam_params(0.0, baths=(-1.0, 1.0), v=0.0))
    ref = partition_reference(h, CORE)
    _, T = solve_ccsd(h, ref)
    prop = propagate(kind, h, T, CORE, 0.1, 20.0, ref=ref, rtol=1e-10, atol=1e-12)
    assert np.max(np.abs(prop.energy - prop.energy[0])) < 1e-7
    g = cumulant_greens(prop, float(np.real(prop.energy[0])))
    assert np.max(np.abs(np.abs(g.g) - 1.0)) < 1e-7


@pytest.mark.parametrize("kind", list(AnsatzKind))
def test_one_body_propagation_stays_in_singles(kind):
    # hybridized core: S rotates the determinant, E(t) moves, doubles stay empty
    h = _one_body_siam()
    ref = partition_reference(h, CORE)
    _, T = solve_ccsd(h, ref)
    prop = propagate(kind, h, T, CORE, 0.1, 20.0, ref=ref, rtol=1e-10, atol=1e-12)
    assert np.max(np.abs(prop.amplitudes[:, space_doubles(prop)])) < 1e-8
    assert np.ptp(prop.energy.real) > 0.1


def space_doubles(prop):
    return slice(prop.space.space.n_singles, None)


def test_propagation_state_invariants(small_siam):
    h, ref = small_siam
    _, T = solve_ccsd(h, ref)
    prop = propagate(AnsatzKind.TDDCC1, h, T, CORE, 0.1, 30.0, ref=ref, rtol=1e-10, atol=1e-12)
    first = prop[0]
    assert first.time == 0.0 and first.s.norm() == 0.0
    assert first.log_norm == 0 and first.energy_integral == 0
    assert len(prop) == 301 and len(prop[:3]) == 3
    # the running integral is the antiderivative of the instantaneous energy;
    # a fine output grid keeps Simpson's quadrature error below 1e-8
    fine = propagate(AnsatzKind.TDDCC1, h, T, CORE, 0.025, 30.0, ref=ref, rtol=1e-10, atol=1e-12)
    e, i = fine.energy, fine.energy_integral
    simpson = 0.025 / 3 * (e[:-2:2] + 4 * e[1:-1:2] + e[2::2])
    assert np.max(np.abs(i[2::2] - i[:-2:2] - simpson)) < 1e-7
    assert prop[5].log_norm == pytest.approx(1j * prop.energy_integral[5])


def test_halving_dt_changes_little(small_siam):
    h, ref = small_siam
    _, T = solve_ccsd(h, ref)
    kw = dict(ref=ref, rtol=1e-10, atol=1e-12)
    a = propagate(AnsatzKind.TDDCC1, h, T, CORE, 0.1, 100.0, **kw)
    b = propagate(AnsatzKind.TDDCC1, h, T, CORE, 0.05, 100.0, **kw)
    ga, gb = cumulant_greens(a, 0.0), cumulant_greens(b, 0.0)
    assert np.max(np.abs(ga.g - gb.g[::2])) < 1e-6


def test_blowup_guard(small_siam):
    h, ref = small_siam
    with pytest.raises(PropagationDiverged, match="propagation diverged"):
        propagate(AnsatzKind.TDCC, h, None, CORE, 0.1, 20.0, ref=ref, blowup=1e-6)


def test_integrator_failure_reports_time(small_siam, monkeypatch):
    h, ref = small_siam

    class Failed:
        status, message = -1, "step size too small"
        t = np.array([0.0, 4.2])

    monkeypatch.setattr(rteom, "solve_ivp", lambda *a, **k: Failed())
    with pytest.raises(IntegrationFailure, match="t=4.200"):
        propagate(AnsatzKind.TDCC, h, None, CORE, 0.1, 10.0, ref=ref)


def test_non_finite_block_named(small_siam):
    h, ref = small_siam
    space = IonizedSpace(h, ref, CORE)
    bad = Hamiltonian(h.h1, h.v2 * np.nan, 0.0, h.n_electrons)
    space.hmat = IonizedSpace(bad, ref, CORE).hmat
    with pytest.raises(FloatingPointError, match="block"):
        RhsEvaluator(space, AnsatzKind.TDCC).evaluate(np.zeros(space.size, dtype=complex))


def test_cumulant_constant_energy():
    times = uniform_grid(0.1, 50.0)
    states = [PropagationState(t, None, 0.3j * t, -0.4 * t, -0.4) for t in times]
    g = cumulant_greens(states, -0.25)
    assert np.allclose(g.g, -1j * np.exp(-1j * 0.15 * times), atol=1e-13)
    assert g.g[0] == -1j
    with pytest.raises(GridMismatch):
        cumulant_greens(states, -0.25,
                        GreensTrajectory(uniform_grid(0.2, 50.0), np.ones(251), "x"))


def test_ansatz_parse():
    assert AnsatzKind.parse("td-dcc-1(2b)") is AnsatzKind.TDDCC1_2B
    assert AnsatzKind.parse("TDDCC1_1B") is AnsatzKind.TDDCC1_1B
    assert AnsatzKind.parse("tdcc") is AnsatzKind.TDCC
    assert AnsatzKind.TDDCC2.tag == "tddcc2"
    with pytest.raises(ValueError):
        AnsatzKind.parse("TDDCC3")


# properties of the full SIAM runs (shared with the acceptance suite)

def _spectrum(run, tag):
    from corehole.spectra import SpectralFunction
    return SpectralFunction.from_csv(run.dir / f"{tag}_spectrum.csv", eta=0.01)


def test_greens_at_zero(siam2_run):
    for tag in ("tdcc", "tddcc1", "tddcc1_1b", "tddcc1_2b", "tddcc2"):
        g = GreensTrajectory.from_csv(siam2_run.dir / f"{tag}_greens.csv")
        assert g.g[0].real == pytest.approx(0.0, abs=1e-14)
        assert g.g[0].imag < 0
        if tag == "tdcc":
            assert g.g[0] == -1j
        else:
            total = np.loadtxt(siam2_run.dir / "components" / tag / "total.csv",
                               delimiter=",", skiprows=1)
            assert g.g[0] == pytest.approx(-1j * (total[0, 1] + 1j * total[0, 2]), abs=1e-14)


def test_2b_resolves_oracle_peaks(siam2_run):
    exact = find_peaks(_spectrum(siam2_run, "exact"))
    two_b = find_peaks(_spectrum(siam2_run, "tddcc1_2b"))
    assert len(exact) == len(two_b)
    for e, p in zip(exact, two_b):
        assert abs(e.omega - p.omega) < 0.02


def test_2b_and_dcc2_spectra_agree(siam2_run):
    a1 = _spectrum(siam2_run, "tddcc1_2b").a
    a2 = _spectrum(siam2_run, "tddcc2").a
    assert np.max(np.abs(a1 - a2)) < 0.05 * np.max(a1)
