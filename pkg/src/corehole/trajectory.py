"""Time grids and Green's-function trajectories."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class GridMismatch(ValueError):
    pass


def uniform_grid(dt: float, t_max: float) -> np.ndarray:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_max < 0:
        raise ValueError("t_max must be non-negative")
    n = int(round(t_max / dt))
    return dt * np.arange(n + 1)


def check_uniform(times: np.ndarray, rtol: float = 1e-9) -> float:
    """Return the spacing of a strictly increasing uniform grid or raise."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise GridMismatch("need at least two time points")
    steps = np.diff(times)
    dt = steps.mean()
    if dt <= 0 or np.any(np.abs(steps - dt) > rtol * max(1.0, abs(times[-1]))):
        raise GridMismatch("time grid is not uniform and increasing")
    return float(dt)


def same_grid(a: np.ndarray, b: np.ndarray) -> None:
    if len(a) != len(b) or not np.allclose(a, b, rtol=0, atol=1e-9):
        raise GridMismatch("trajectories live on different time grids")


@dataclass
class GreensTrajectory:
    """Retarded core-hole Green's function sampled on a uniform time grid.

    ``energy`` optionally holds the instantaneous (N-1)-electron energy at each
    sample (propagation methods only).
    """

    times: np.ndarray
    g: np.ndarray
    method_tag: str
    energy: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.g = np.asarray(self.g, dtype=complex)
        if self.times.shape != self.g.shape:
            raise GridMismatch("times and samples differ in length")
        check_uniform(self.times)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def __add__(self, other: "GreensTrajectory") -> "GreensTrajectory":
        same_grid(self.times, other.times)
        return GreensTrajectory(self.times, self.g + other.g, self.method_tag)

    def to_csv(self, path) -> None:
        energy = self.energy if self.energy is not None else np.full(self.times.shape, np.nan)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "Re G", "Im G", "Re E_Nm1", "Im E_Nm1"])
            for t, g, e in zip(self.times, self.g, energy):
                w.writerow([repr(float(t)), repr(float(g.real)), repr(float(g.imag)),
                            repr(float(np.real(e))), repr(float(np.imag(e)))])

    @classmethod
    def from_csv(cls, path, method_tag: str | None = None) -> "GreensTrajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        energy = data[:, 3] + 1j * data[:, 4]
        if np.all(np.isnan(data[:, 3])):
            energy = None
        tag = method_tag or Path(path).name.split("_greens")[0]
        return cls(data[:, 0], data[:, 1] + 1j * data[:, 2], tag, energy)
