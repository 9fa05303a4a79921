"""Spectral functions from Green's-function trajectories, peak search and QP weight fit."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .hamiltonian import HARTREE_TO_EV
from .trajectory import GreensTrajectory, check_uniform

DEFAULT_ETA = 0.01
DEFAULT_OMEGA = (-5.0, 2.0, 7001)
QP_WINDOW_ETAS = 5.0


class SpectrumError(ValueError):
    pass


def omega_grid(lo: float = DEFAULT_OMEGA[0], hi: float = DEFAULT_OMEGA[1],
               n: int = DEFAULT_OMEGA[2]) -> np.ndarray:
    if n < 3 or not hi > lo:
        raise SpectrumError("frequency grid needs hi > lo and at least 3 points")
    return np.linspace(lo, hi, n)


@dataclass
class SpectralFunction:
    """``A(omega)`` on a uniform grid in hartree.

    ``normalization`` is the factor the raw transform was divided by (1 for a
    raw spectrum).
    """

    omegas: np.ndarray
    a: np.ndarray
    eta: float
    normalization: float = 1.0
    method_tag: str = ""

    def __post_init__(self):
        self.omegas = np.asarray(self.omegas, dtype=float)
        self.a = np.asarray(self.a, dtype=float)
        if self.omegas.shape != self.a.shape:
            raise SpectrumError("omegas and samples differ in length")
        check_uniform(self.omegas)

    @property
    def d_omega(self) -> float:
        return float(self.omegas[1] - self.omegas[0])

    @property
    def omegas_ev(self) -> np.ndarray:
        return self.omegas * HARTREE_TO_EV

    def integral(self) -> float:
        return float(np.trapezoid(self.a, self.omegas))

    def normalized(self) -> "SpectralFunction":
        total = self.integral()
        if not np.isfinite(total) or abs(total) < 1e-300:
            raise SpectrumError("spectrum has zero integral")
        return SpectralFunction(self.omegas, self.a / total, self.eta,
                                self.normalization * total, self.method_tag)

    def __add__(self, other: "SpectralFunction") -> "SpectralFunction":
        if self.omegas.shape != other.omegas.shape or not np.allclose(self.omegas, other.omegas):
            raise SpectrumError("spectra live on different grids")
        return SpectralFunction(self.omegas, self.a + other.a, self.eta, 1.0, self.method_tag)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["omega_hartree", "omega_eV", "A"])
            for om, ev, a in zip(self.omegas, self.omegas_ev, self.a):
                w.writerow([repr(float(om)), repr(float(ev)), repr(float(a))])

    @classmethod
    def from_csv(cls, path, eta: float = DEFAULT_ETA, method_tag: str = "") -> "SpectralFunction":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 2], eta, 1.0, method_tag)


def fourier_spectrum(g: GreensTrajectory, eta: float = DEFAULT_ETA, omegas=None,
                     chunk: int = 256) -> SpectralFunction:
    """``A(w) = -(1/pi) Im int_0^tmax exp(i w t - eta t) G(t) dt`` by the trapezoid rule.

    With ``G(t) = -i exp(-i p t)`` this is a unit-weight Lorentzian of
    half-width ``eta`` centred at ``w = p``.
    """
    if not eta > 0:
        raise SpectrumError("eta must be positive")
    omegas = omega_grid() if omegas is None else np.asarray(omegas, dtype=float)
    t = g.times
    dt = check_uniform(t)
    weights = np.full(t.shape, dt)
    weights[0] = weights[-1] = 0.5 * dt
    f = weights * np.exp(-eta * t) * g.g
    a = np.empty(omegas.shape)
    for start in range(0, len(omegas), chunk):
        om = omegas[start:start + chunk]
        a[start:start + chunk] = -np.imag(np.exp(1j * np.outer(om, t)) @ f) / np.pi
    return SpectralFunction(omegas, a, eta, 1.0, g.method_tag)


class Peak(NamedTuple):
    omega: float
    height: float


def _parabolic(a: np.ndarray, i: int) -> tuple[float, float]:
    """Vertex offset (in grid steps) and height of the parabola through ``a[i-1:i+2]``."""
    if i <= 0 or i >= len(a) - 1:
        return 0.0, float(a[i])
    y0, y1, y2 = a[i - 1], a[i], a[i + 1]
    denom = y0 - 2 * y1 + y2
    if denom >= 0:
        return 0.0, float(y1)
    off = 0.5 * (y0 - y2) / denom
    return float(off), float(y1 - 0.25 * (y0 - y2) * off)


def find_peaks(spec: SpectralFunction, rel_threshold: float = 0.02) -> list[Peak]:
    """Local maxima above ``rel_threshold * max(A)``, refined by 3-point parabolas."""
    if not 0 < rel_threshold < 1:
        raise SpectrumError("rel_threshold must lie in (0, 1)")
    a = spec.a
    top = float(np.max(a)) if a.size else 0.0
    if top <= 0:
        return []
    interior = (a[1:-1] > a[:-2]) & (a[1:-1] >= a[2:]) & (a[1:-1] >= rel_threshold * top)
    peaks = []
    for i in np.flatnonzero(interior) + 1:
        off, height = _parabolic(a, int(i))
        peaks.append(Peak(float(spec.omegas[i] + off * spec.d_omega), height))
    return peaks


@dataclass
class QpFit:
    omega0: float
    z: float
    window: tuple
    residual: float

    def to_json(self, path=None) -> str:
        d = asdict(self)
        d = {"omega0": d["omega0"], "omega0_eV": d["omega0"] * HARTREE_TO_EV, "Z": d["z"],
             "window": list(d["window"]), "residual": d["residual"]}
        text = json.dumps(d, indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, source) -> "QpFit":
        is_path = isinstance(source, Path) or "{" not in str(source)
        text = Path(source).read_text() if is_path else source
        d = json.loads(text)
        return cls(d["omega0"], d["Z"], tuple(d["window"]), d["residual"])


def lorentzian(omegas: np.ndarray, omega0: float, eta: float) -> np.ndarray:
    """Unit-weight single-pole line shape ``-(1/pi) Im 1/(w - w0 + i eta)``."""
    return (eta / np.pi) / ((omegas - omega0) ** 2 + eta ** 2)


def fit_qp_weight(spec: SpectralFunction, window_etas: float = QP_WINDOW_ETAS) -> QpFit:
    """Quasiparticle weight of the unit-normalized spectrum.

    ``omega0`` is the parabola-refined global maximum; ``Z >= 0`` is the linear
    least-squares amplitude of a Lorentzian of the spectrum's own width,
    fitted on ``omega0 +- window_etas * eta``. The Lorentzian is normalized
    over the same grid as the spectrum, so a one-pole spectrum gives ``Z = 1``
    however much of its tails the grid cuts off.
    """
    if not np.any(spec.a):
        raise SpectrumError("spectrum is identically zero")
    norm = spec.normalized()
    a = norm.a
    i = int(np.argmax(a))
    off, _ = _parabolic(a, i)
    omega0 = float(spec.omegas[i] + off * spec.d_omega)
    half = window_etas * spec.eta
    mask = np.abs(spec.omegas - omega0) <= half
    if not np.any(mask):
        raise SpectrumError("empty fit window")
    full = lorentzian(spec.omegas, omega0, spec.eta)
    shape = full[mask] / np.trapezoid(full, spec.omegas)
    z = max(0.0, float(shape @ a[mask] / (shape @ shape)))
    residual = float(np.linalg.norm(z * shape - a[mask]))
    return QpFit(omega0, z, (omega0 - half, omega0 + half), residual)
