"""Command line entry point and the configuration-driven run pipeline.

``corehole run cfg.toml`` writes, per method tag, ``<tag>_greens.csv``,
``<tag>_spectrum.csv`` and ``<tag>_qpfit.json``; channel trajectories under
``components/<tag>/``; ``<tag>_errors.json`` for QSP runs when the exact
oracle is also requested; and a ``report.json`` summary.

Exit codes: 0 on full success, 2 when some methods failed, 1 on a config error.
The thread count for running methods concurrently is read from
``COREHOLE_THREADS``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ccsd import solve_ccsd, solve_lambda
from .components import overlap_trajectory
from .config import Diagnostic, RunConfig, read_config
from .fci import exact_greens, fci_ground
from .fcidump import load_fcidump, write_fcidump
from .hamiltonian import HARTREE_TO_EV, Hamiltonian, build_siam, partition_reference
from .qsp import QspSetup, error_report, qsp_greens
from .rteom import AnsatzKind, IonizedSpace, cumulant_greens, propagate
from .spectra import find_peaks, fit_qp_weight, fourier_spectrum, omega_grid
from .trajectory import GreensTrajectory, uniform_grid

log = logging.getLogger("corehole")

THREADS_ENV = "COREHOLE_THREADS"
EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


@dataclass
class RunReport:
    output_dir: Path
    summary: dict
    failures: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return EXIT_PARTIAL if self.failures else EXIT_OK


def thread_count() -> int:
    value = os.environ.get(THREADS_ENV)
    if value is None:
        return os.cpu_count() or 1
    try:
        n = int(value)
    except ValueError:
        log.warning("ignoring non-integer %s=%r", THREADS_ENV, value)
        return 1
    return max(1, n)


def build_hamiltonian(config: RunConfig) -> Hamiltonian:
    if isinstance(config.system, Path):
        h = load_fcidump(config.system)
        if config.n_electrons is not None:
            h = Hamiltonian(h.h1, h.v2, h.scalar_shift, config.n_electrons, h.orbital_labels)
        return h
    return build_siam(config.system, config.n_electrons)


def _system_summary(config: RunConfig, h: Hamiltonian) -> dict:
    if isinstance(config.system, Path):
        d = {"fcidump": config.system.name}
    else:
        s = config.system
        d = {"siam": {"eps_impurity": s.eps_impurity, "bath_energies": list(s.bath_energies),
                      "hybridization": s.hybridization, "onsite_u": s.onsite_u}}
    d.update(n_spin_orbitals=h.n_spin_orbitals, n_electrons=h.n_electrons)
    return d


class _GroundState:
    """CCSD and Lambda amplitudes, solved once and shared by every ansatz."""

    def __init__(self, h: Hamiltonian, core: int):
        self.h, self.core = h, core
        self._lock = threading.Lock()
        self._value = None
        self._error = None

    def get(self, need_lambda: bool):
        with self._lock:
            if self._error is not None:
                raise self._error
            try:
                if self._value is None:
                    ref = partition_reference(self.h, self.core)
                    e, amps = solve_ccsd(self.h, ref)
                    self._value = [ref, e, amps, None]
                if need_lambda and self._value[3] is None:
                    ref, _, amps, _ = self._value
                    self._value[3] = solve_lambda(self.h, ref, amps)
            except Exception as exc:
                self._error = exc
                raise
            return tuple(self._value)


def _spectrum_summary(g: GreensTrajectory, config: RunConfig, out: Path, tag: str) -> dict:
    spec = fourier_spectrum(g, config.eta, omega_grid(*config.omega_grid))
    spec.to_csv(out / f"{tag}_spectrum.csv")
    fit = fit_qp_weight(spec)
    fit.to_json(out / f"{tag}_qpfit.json")
    peaks = [{"omega": p.omega, "omega_eV": p.omega * HARTREE_TO_EV, "height": p.height}
             for p in find_peaks(spec)]
    return {"qp": {"omega0": fit.omega0, "omega0_eV": fit.omega0 * HARTREE_TO_EV, "Z": fit.z},
            "peaks": peaks, "integral": spec.integral(), "g0_abs": float(abs(g.g[0])),
            "files": {"greens": f"{tag}_greens.csv", "spectrum": f"{tag}_spectrum.csv",
                      "qpfit": f"{tag}_qpfit.json"}}


def _run_exact(h, config, times, out):
    g = exact_greens(h, config.core_index, times)
    g.to_csv(out / "exact_greens.csv")
    return _spectrum_summary(g, config, out, "exact")


def _run_ansatz(kind: AnsatzKind, h, config, ground: _GroundState, out):
    need_lambda = kind.uses_ground_amplitudes
    ref, e_cc, amps, lam = ground.get(need_lambda)
    T = amps if kind.uses_ground_amplitudes else None
    space = IonizedSpace(h, ref, config.core_index, T)
    prop = propagate(kind, h, T, config.core_index, config.dt, config.t_max, ref=ref,
                     rtol=config.rtol, atol=config.atol, space=space)
    overlap = overlap_trajectory(kind, amps, lam, prop)
    g = cumulant_greens(prop, e_cc, overlap, kind.tag)
    g.method_tag = kind.tag
    g.to_csv(out / f"{kind.tag}_greens.csv")
    summary = _spectrum_summary(g, config, out, kind.tag)
    summary["rhs_calls"] = prop.n_calls
    if config.emit_components:
        directory = out / "components" / kind.tag
        overlap.to_directory(directory, kind.tag)
        summary["files"]["components"] = f"components/{kind.tag}/manifest.json"
        summary["completeness_error"] = overlap.completeness_error()
    return summary


def _run_qsp(setup: QspSetup, degrees, h, config, times, out, with_errors: bool):
    tag = f"qsp_{degrees[0]}_{degrees[1]}"
    g = qsp_greens(setup, config.core_index, times, degrees)
    g.to_csv(out / f"{tag}_greens.csv")
    summary = _spectrum_summary(g, config, out, tag)
    summary["queries_per_timestep"] = sum(degrees)
    if with_errors:
        ref = exact_greens(h, config.core_index, times)
        omegas = omega_grid(*config.omega_grid)
        report = error_report(g, ref, degrees=degrees, eta=config.eta, omegas=omegas)
        report.to_json(out / f"{tag}_errors.json")
        summary["errors"] = {"rel_err_g": report.rel_err_g, "rel_err_a": report.rel_err_a}
        summary["files"]["errors"] = f"{tag}_errors.json"
    return summary


def _raiser(exc: Exception):
    def task():
        raise exc
    return task


def run(config: RunConfig, threads: int | None = None) -> RunReport:
    """Execute every requested method; failures are recorded per method tag."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    h = build_hamiltonian(config)
    times = uniform_grid(config.dt, config.t_max)
    ground = _GroundState(h, config.core_index)

    tasks = {}
    if config.wants_exact:
        tasks["exact"] = lambda: _run_exact(h, config, times, out)
    for kind in config.ansatz_kinds:
        tasks[kind.tag] = (lambda k=kind: _run_ansatz(k, h, config, ground, out))
    qsp_info = {}
    if config.wants_qsp:
        try:
            setup = QspSetup.build(h, config.core_index)
            qsp_times = times
            if config.qsp_tau_max is not None:
                qsp_times = np.linspace(0.0, config.qsp_tau_max / setup.alpha, config.qsp_points)
            qsp_info = {"alpha": setup.alpha, "shift": setup.shift,
                        "tau_max": float(setup.alpha * qsp_times[-1]),
                        "n_times": len(qsp_times)}
            for deg in config.qsp_degrees:
                tasks[f"qsp_{deg[0]}_{deg[1]}"] = (
                    lambda d=deg: _run_qsp(setup, d, h, config, qsp_times, out,
                                           config.wants_exact))
        except Exception as exc:
            log.error("qsp setup failed: %s", exc)
            for deg in config.qsp_degrees:
                tag = f"qsp_{deg[0]}_{deg[1]}"
                tasks[tag] = _raiser(exc)

    def guarded(tag):
        try:
            log.info("running %s", tag)
            return tag, tasks[tag](), None
        except Exception as exc:
            log.error("%s failed: %s", tag, exc)
            return tag, None, f"{tag}: {type(exc).__name__}: {exc}"

    n_workers = threads or thread_count()
    with ThreadPoolExecutor(max_workers=max(1, min(n_workers, len(tasks)))) as pool:
        results = list(pool.map(guarded, list(tasks)))

    methods, failures = {}, {}
    for tag, summary, error in results:
        if error is None:
            methods[tag] = {"status": "ok", **summary}
        else:
            methods[tag] = {"status": "failed", "error": error}
            failures[tag] = error

    summary = {
        "system": _system_summary(config, h),
        "core_index": config.core_index,
        "time_grid": {"dt": config.dt, "t_max": config.t_max, "n_times": len(times)},
        "spectrum": {"eta": config.eta, "omega": list(config.omega_grid)},
        "methods": methods,
    }
    if config.ansatz_kinds:
        try:
            _, e_cc, _, _ = ground.get(False)
            summary["ccsd_energy"] = e_cc
        except Exception:
            pass
    if config.wants_exact:
        summary["fci_energy"] = fci_ground(h)[0]
    if qsp_info:
        summary["qsp"] = qsp_info
    (out / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return RunReport(out, summary, failures)


def _print_diagnostics(diags: list[Diagnostic], stream) -> None:
    for d in diags:
        print(d, file=stream)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="corehole",
                                     description="Core-hole Green's functions by real-time CC.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a run configuration")
    p_run.add_argument("config")
    p_val = sub.add_parser("validate", help="check a run configuration")
    p_val.add_argument("config")
    p_echo = sub.add_parser("fcidump-echo", help="parse an FCIDUMP and print it back")
    p_echo.add_argument("file")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "fcidump-echo":
        try:
            sys.stdout.write(write_fcidump(load_fcidump(Path(args.file))))
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK

    config, diags = read_config(args.config)
    if args.command == "validate":
        _print_diagnostics(diags, sys.stdout)
        if config is None:
            return EXIT_CONFIG
        print("config valid")
        return EXIT_OK

    _print_diagnostics(diags, sys.stderr)
    if config is None:
        return EXIT_CONFIG
    try:
        report = run(config)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for tag, entry in report.summary["methods"].items():
        if entry["status"] == "ok":
            qp = entry["qp"]
            print(f"{tag:12s} QP {qp['omega0']:.4f} Ha ({qp['omega0_eV']:.3f} eV)  Z {qp['Z']:.4f}")
        else:
            print(f"{tag:12s} FAILED {entry['error']}")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
