"""Classical emulation of a QSP/QSVT real-time propagator.

``exp(i H t)`` is approximated by truncated Jacobi-Anger (Chebyshev) series of
``cos`` and ``sin`` of the normalized Hamiltonian ``(H - shift) / alpha``; the
phase ``exp(i shift t)`` is restored exactly. Degrees are fixed along the
trajectory unless ``adaptive_tol`` is given.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import jv

from .determinants import hamiltonian_matrix
from .fci import DEFAULT_CAP, fci_ground, ionized_state
from .hamiltonian import Hamiltonian
from .spectra import DEFAULT_ETA, fourier_spectrum
from .trajectory import GreensTrajectory, same_grid

ALPHA_MARGIN = 1.05


class QspError(ValueError):
    pass


@dataclass(frozen=True)
class QspConfig:
    """Block-encoding normalization ``alpha`` (hartree), spectral ``shift`` and degrees."""

    alpha: float
    d_cos: int
    d_sin: int
    shift: float = 0.0

    def __post_init__(self):
        check_degrees(self.d_cos, self.d_sin)
        if not self.alpha > 0:
            raise QspError("alpha must be positive")

    @property
    def queries(self) -> int:
        return self.d_cos + self.d_sin


def check_degrees(d_cos: int, d_sin: int) -> None:
    if d_cos < 0 or d_cos % 2:
        raise QspError(f"cosine degree must be even and non-negative, got {d_cos}")
    if d_sin < 1 or d_sin % 2 == 0:
        raise QspError(f"sine degree must be odd and positive, got {d_sin}")


def chebyshev_coeffs(tau: float, d_cos: int, d_sin: int) -> tuple[np.ndarray, np.ndarray]:
    """Chebyshev coefficients of ``cos(tau x)`` (even, length ``d_cos+1``) and
    ``sin(tau x)`` (odd, length ``d_sin+1``)."""
    check_degrees(d_cos, d_sin)
    even = np.zeros(d_cos + 1)
    odd = np.zeros(d_sin + 1)
    k = np.arange(0, d_cos + 1, 2)
    even[k] = 2.0 * (-1.0) ** (k // 2) * jv(k, tau)
    even[0] = jv(0, tau)
    k = np.arange(1, d_sin + 1, 2)
    odd[k] = 2.0 * (-1.0) ** (k // 2) * jv(k, tau)
    return even, odd


def truncation_bound(tau: float, degree: int, kmax: int | None = None) -> float:
    """``2 * sum_{k > degree} |J_k(tau)|``, bounding the sup-norm error on [-1, 1]."""
    kmax = kmax or int(degree + 2 * abs(tau) + 60)
    k = np.arange(degree + 1, kmax + 1)
    return float(2.0 * np.sum(np.abs(jv(k, tau))))


def adaptive_degrees(tau: float, tol: float) -> tuple[int, int]:
    """Smallest valid ``(d_cos, d_sin)`` whose truncation bounds are below ``tol``."""
    d = 1
    while truncation_bound(tau, d) > tol:
        d += 1
    d_cos = d + (d % 2)
    d_sin = d if d % 2 else d + 1
    return d_cos, d_sin


def power_iteration(matvec, n: int, tol: float = 1e-12, max_iter: int = 20000) -> float:
    """Dominant eigenvalue (largest magnitude) of a Hermitian operator."""
    v = np.linspace(1.0, 2.0, n)         # deterministic, generic start vector
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = matvec(v)
        new = float(np.real(np.vdot(v, w)))
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0
        v = w / norm
        if abs(new - lam) <= tol * max(1.0, abs(new)):
            return new
        lam = new
    return lam


def spectral_bounds(hmat) -> tuple[float, float]:
    """Lowest and highest eigenvalue estimates by two power iterations."""
    n = hmat.shape[0]
    first = power_iteration(lambda v: hmat @ v, n)
    other = first + power_iteration(lambda v: hmat @ v - first * v, n)
    return min(first, other), max(first, other)


def normalization_for(hmat, margin: float = ALPHA_MARGIN) -> tuple[float, float]:
    """``(alpha, shift)``: midpoint shift and ``margin`` times the half-spread."""
    lo, hi = spectral_bounds(hmat)
    half = 0.5 * (hi - lo)
    if half <= 0:
        half = max(abs(lo), 1e-12)
    return margin * half, 0.5 * (lo + hi)


def _scaled(hmat, config: QspConfig):
    return lambda v: (hmat @ v - config.shift * v) / config.alpha


def check_normalization(hmat, config: QspConfig) -> None:
    norm = abs(power_iteration(_scaled(hmat, config), hmat.shape[0]))
    if norm > 1.0 + 1e-9:
        raise QspError(f"alpha too small: normalized Hamiltonian norm {norm:.6f} exceeds 1")


def apply_poly(hmat, config: QspConfig, coeffs, v: np.ndarray, check: bool = True) -> np.ndarray:
    """``sum_k c_k T_k(H_hat) v`` by Clenshaw's recurrence, ``H_hat = (H - shift)/alpha``."""
    if check:
        check_normalization(hmat, config)
    op = _scaled(hmat, config)
    coeffs = np.asarray(coeffs)
    v = np.asarray(v, dtype=np.result_type(v, coeffs, float))
    b1 = np.zeros_like(v, dtype=np.result_type(v, coeffs))
    b2 = np.zeros_like(b1)
    for c in coeffs[:0:-1]:
        b1, b2 = c * v + 2.0 * op(b1) - b2, b1
    return coeffs[0] * v + op(b1) - b2


def chebyshev_moments(hmat, config: QspConfig, v: np.ndarray, order: int) -> np.ndarray:
    """``<v|T_k(H_hat)|v>`` for ``k = 0..order`` by the three-term recurrence."""
    op = _scaled(hmat, config)
    out = np.empty(order + 1, dtype=complex)
    prev, cur = v, op(v)
    out[0] = np.vdot(v, prev)
    if order >= 1:
        out[1] = np.vdot(v, cur)
    for k in range(2, order + 1):
        prev, cur = cur, 2.0 * op(cur) - prev
        out[k] = np.vdot(v, cur)
    return out


@dataclass
class QspSetup:
    """Ionized FCI state and Hamiltonian shared by all degree choices."""

    ground_energy: float
    hmat: object
    psi: np.ndarray
    alpha: float
    shift: float

    @classmethod
    def build(cls, h: Hamiltonian, core: int, cap: int = DEFAULT_CAP) -> "QspSetup":
        e_g, ground = fci_ground(h, cap=cap)
        sector, psi = ionized_state(h, core, ground, cap)
        hmat = hamiltonian_matrix(h, sector)
        alpha, shift = normalization_for(hmat)
        return cls(e_g, hmat, psi, alpha, shift)

    def config(self, d_cos: int, d_sin: int) -> QspConfig:
        return QspConfig(self.alpha, d_cos, d_sin, self.shift)


def qsp_greens(h: Hamiltonian | QspSetup, core: int, times: np.ndarray,
               degrees: tuple[int, int], adaptive_tol: float | None = None) -> GreensTrajectory:
    """``G(t) = -i exp(-i E_g t) <psi_c| p(H_hat) |psi_c> exp(i shift t)`` with ``p ~ exp(i alpha t x)``.

    The fixed ``degrees`` are applied at every time; ``adaptive_tol`` instead
    picks the smallest degrees meeting that truncation bound at each time.
    """
    setup = h if isinstance(h, QspSetup) else QspSetup.build(h, core)
    d_cos, d_sin = degrees
    config = setup.config(d_cos, d_sin)
    check_normalization(setup.hmat, config)
    times = np.asarray(times, dtype=float)
    taus = setup.alpha * times
    if adaptive_tol is not None:
        chosen = [adaptive_degrees(tau, adaptive_tol) for tau in taus]
    else:
        chosen = [(d_cos, d_sin)] * len(times)
    order = max(max(c) for c in chosen)
    moments = chebyshev_moments(setup.hmat, config, setup.psi, order)
    g = np.empty(len(times), dtype=complex)
    for k, (tau, (dc, ds)) in enumerate(zip(taus, chosen)):
        even, odd = chebyshev_coeffs(tau, dc, ds)
        value = even @ moments[: dc + 1] + 1j * (odd @ moments[: ds + 1])
        g[k] = value
    g = -1j * np.exp(-1j * (setup.ground_energy - setup.shift) * times) * g
    tag = "qsp" if adaptive_tol is not None else f"qsp_{d_cos}_{d_sin}"
    return GreensTrajectory(times, g, tag)


@dataclass
class QspErrorReport:
    degrees: tuple
    rel_err_g: float
    rel_err_a: float
    queries_per_timestep: int

    def to_json(self, path=None) -> str:
        text = json.dumps({"degrees": list(self.degrees), "rel_err_g": self.rel_err_g,
                           "rel_err_a": self.rel_err_a,
                           "queries_per_timestep": self.queries_per_timestep},
                          indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def relative_mean_error(approx: np.ndarray, exact: np.ndarray) -> float:
    scale = np.mean(np.abs(exact))
    if scale == 0:
        raise QspError("reference is identically zero")
    return float(np.mean(np.abs(approx - exact)) / scale)


def error_report(approx: GreensTrajectory, exact: GreensTrajectory, spectra=None,
                 degrees: tuple[int, int] = (0, 1), eta: float = DEFAULT_ETA,
                 omegas=None) -> QspErrorReport:
    """Relative mean errors of ``G(t)`` and ``A(w)`` plus block-encoding queries per time."""
    same_grid(approx.times, exact.times)
    if spectra is None:
        spectra = (fourier_spectrum(approx, eta, omegas), fourier_spectrum(exact, eta, omegas))
    a_approx, a_exact = spectra
    return QspErrorReport(tuple(degrees), relative_mean_error(approx.g, exact.g),
                          relative_mean_error(a_approx.a, a_exact.a), sum(degrees))
