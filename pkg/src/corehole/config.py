"""Run configuration: TOML parsing, defaults and validation.

Example (every key except the system is optional)::

    core_index = 1                      # ionized spin orbital
    methods = ["exact", "TDCC", "TDDCC1", "TDDCC1_1B", "TDDCC1_2B", "TDDCC2", "qsp"]

    [system.siam]                       # or: [system] fcidump = "h2o.fcidump"
    eps_impurity = -1.5
    bath_energies = [-1.0, 1.0, 2.0]
    hybridization = 0.4
    onsite_u = 2.0

    [propagation]
    dt = 0.1                            # a.u.
    t_max = 900.0                       # a.u.
    rtol = 1e-7
    atol = 1e-9

    [spectrum]
    eta = 0.01                          # hartree
    omega = [-5.0, 2.0, 7001]           # lo, hi, number of points

    [qsp]
    degrees = [[2, 3], [4, 5], [6, 7]]
    tau_max = 3.0                       # optional: restrict to alpha*t <= tau_max
    points = 301                        # samples on the restricted window

    [output]
    dir = "results"
    components = true
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

from .hamiltonian import SiamParams
from .rteom import DEFAULT_DT, DEFAULT_TMAX, AnsatzKind
from .spectra import DEFAULT_ETA, DEFAULT_OMEGA

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_QSP_DEGREES = ((2, 3), (4, 5), (6, 7))
EXTRA_METHODS = ("exact", "qsp")


class ConfigError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(d.message for d in self.errors) or "invalid configuration")

    @property
    def errors(self):
        return [d for d in self.diagnostics if d.level == "error"]


@dataclass(frozen=True)
class Diagnostic:
    level: str          # "error" or "note"
    message: str

    def __str__(self) -> str:
        return f"{self.level}: {self.message}"


@dataclass
class RunConfig:
    system: SiamParams | Path
    core_index: int = 1
    methods: tuple = ()
    dt: float = DEFAULT_DT
    t_max: float = DEFAULT_TMAX
    rtol: float = 1e-7
    atol: float = 1e-9
    eta: float = DEFAULT_ETA
    omega_grid: tuple = DEFAULT_OMEGA
    qsp_degrees: tuple = DEFAULT_QSP_DEGREES
    qsp_tau_max: float | None = None
    qsp_points: int = 301
    output_dir: Path = Path("results")
    emit_components: bool = True
    n_electrons: int | None = None
    source: Path | None = field(default=None, compare=False)

    @property
    def ansatz_kinds(self) -> list[AnsatzKind]:
        return [AnsatzKind.parse(m) for m in self.methods if m.lower() not in EXTRA_METHODS]

    @property
    def wants_exact(self) -> bool:
        return any(m.lower() == "exact" for m in self.methods)

    @property
    def wants_qsp(self) -> bool:
        return any(m.lower() == "qsp" for m in self.methods)


def _get(table: dict, key: str, default, diags: list, where: str, note_default: bool = False):
    if key in table:
        return table[key]
    if note_default:
        diags.append(Diagnostic("note", f"{where}{key} omitted; default {default!r} applied"))
    return default


def _number(value, name: str, diags: list, positive: bool = True, integer: bool = False):
    kind = int if integer else (int, float)
    if isinstance(value, bool) or not isinstance(value, kind):
        diags.append(Diagnostic("error", f"{name} must be a number, got {value!r}"))
        return None
    if positive and not value > 0:
        diags.append(Diagnostic("error", f"{name} must be positive"))
        return None
    return value


def parse_mapping(data: dict, base_dir: Path | None = None) -> tuple[RunConfig | None, list]:
    """Build a :class:`RunConfig` from parsed TOML; returns ``(config or None, diagnostics)``."""
    diags: list[Diagnostic] = []
    base_dir = base_dir or Path.cwd()
    system_tab = data.get("system")
    system = None
    if not isinstance(system_tab, dict) or not system_tab:
        diags.append(Diagnostic("error", "missing [system] table (siam parameters or fcidump path)"))
    elif "siam" in system_tab and "fcidump" in system_tab:
        diags.append(Diagnostic("error", "system must specify either siam or fcidump, not both"))
    elif "siam" in system_tab:
        s = system_tab["siam"]
        try:
            system = SiamParams(float(s["eps_impurity"]), tuple(float(x) for x in s["bath_energies"]),
                                float(s["hybridization"]), float(s["onsite_u"]))
            system.validate()
        except (KeyError, TypeError, ValueError) as exc:
            diags.append(Diagnostic("error", f"invalid siam parameters: {exc}"))
            system = None
    elif "fcidump" in system_tab:
        path = Path(system_tab["fcidump"])
        system = path if path.is_absolute() else base_dir / path
        if not system.exists():
            diags.append(Diagnostic("error", f"FCIDUMP file not found: {system}"))
    else:
        diags.append(Diagnostic("error", "system must contain a siam table or an fcidump path"))

    methods = data.get("methods", [])
    if not isinstance(methods, list) or not methods:
        diags.append(Diagnostic("error", "at least one method must be requested"))
        methods = []
    for m in methods:
        if not isinstance(m, str):
            diags.append(Diagnostic("error", f"method names must be strings, got {m!r}"))
            continue
        if m.lower() in EXTRA_METHODS:
            continue
        try:
            AnsatzKind.parse(m)
        except ValueError as exc:
            diags.append(Diagnostic("error", str(exc)))
    if len({str(m).lower() for m in methods}) != len(methods):
        diags.append(Diagnostic("error", "duplicate method names"))

    core = data.get("core_index", 1)
    if isinstance(core, bool) or not isinstance(core, int) or core < 0:
        diags.append(Diagnostic("error", "core_index must be a non-negative integer"))

    prop = data.get("propagation", {})
    dt = _number(_get(prop, "dt", DEFAULT_DT, diags, "propagation.", True), "dt", diags)
    t_max = _number(_get(prop, "t_max", DEFAULT_TMAX, diags, "propagation.", True), "t_max", diags)
    rtol = _number(prop.get("rtol", 1e-7), "rtol", diags)
    atol = _number(prop.get("atol", 1e-9), "atol", diags)
    if dt and t_max and dt > t_max:
        diags.append(Diagnostic("error", "dt must not exceed t_max"))

    spec = data.get("spectrum", {})
    eta = _number(_get(spec, "eta", DEFAULT_ETA, diags, "spectrum.", True), "eta", diags)
    omega = spec.get("omega", list(DEFAULT_OMEGA))
    if (not isinstance(omega, list) or len(omega) != 3
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in omega)):
        diags.append(Diagnostic("error", "spectrum.omega must be [lo, hi, n]"))
        omega = None
    elif not omega[1] > omega[0] or int(omega[2]) != omega[2] or omega[2] < 3:
        diags.append(Diagnostic("error", "spectrum.omega needs hi > lo and an integer n >= 3"))
        omega = None

    qsp = data.get("qsp", {})
    degrees = qsp.get("degrees", [list(d) for d in DEFAULT_QSP_DEGREES])
    parsed_degrees = []
    for d in degrees if isinstance(degrees, list) else [degrees]:
        if (not isinstance(d, list) or len(d) != 2
                or not all(isinstance(x, int) and not isinstance(x, bool) for x in d)):
            diags.append(Diagnostic("error", f"qsp degree pair must be [d_cos, d_sin], got {d!r}"))
        elif d[0] < 0 or d[0] % 2 or d[1] < 1 or d[1] % 2 == 0:
            diags.append(Diagnostic("error", f"qsp degrees {d} violate parity (even cos, odd sin)"))
        else:
            parsed_degrees.append(tuple(d))
    tau_max = qsp.get("tau_max")
    if tau_max is not None:
        tau_max = _number(tau_max, "qsp.tau_max", diags)
    points = _number(qsp.get("points", 301), "qsp.points", diags, integer=True)
    if points is not None and points < 2:
        diags.append(Diagnostic("error", "qsp.points must be at least 2"))

    out = data.get("output", {})
    out_dir = Path(out.get("dir", "results"))
    if not out_dir.is_absolute():
        out_dir = base_dir / out_dir
    components = out.get("components", True)
    if not isinstance(components, bool):
        diags.append(Diagnostic("error", "output.components must be true or false"))

    n_el = data.get("n_electrons")
    if n_el is not None and (isinstance(n_el, bool) or not isinstance(n_el, int) or n_el < 1):
        diags.append(Diagnostic("error", "n_electrons must be a positive integer"))

    known = {"system", "methods", "core_index", "propagation", "spectrum", "qsp", "output",
             "n_electrons"}
    for key in sorted(set(data) - known):
        diags.append(Diagnostic("note", f"unknown key {key!r} ignored"))

    if any(d.level == "error" for d in diags):
        return None, diags
    cfg = RunConfig(system=system, core_index=core, methods=tuple(methods), dt=float(dt),
                    t_max=float(t_max), rtol=float(rtol), atol=float(atol), eta=float(eta),
                    omega_grid=(float(omega[0]), float(omega[1]), int(omega[2])),
                    qsp_degrees=tuple(parsed_degrees), qsp_tau_max=tau_max,
                    qsp_points=int(points), output_dir=out_dir, emit_components=components,
                    n_electrons=n_el)
    return cfg, diags


def read_config(path) -> tuple[RunConfig | None, list]:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except OSError as exc:
        return None, [Diagnostic("error", f"cannot read config: {exc}")]
    except tomllib.TOMLDecodeError as exc:
        return None, [Diagnostic("error", f"config is not valid TOML: {exc}")]
    cfg, diags = parse_mapping(data, path.parent)
    if cfg is not None:
        cfg.source = path
    return cfg, diags


def validate(source) -> list[Diagnostic]:
    """Diagnostics for a config path, TOML text or parsed mapping (no side effects)."""
    if isinstance(source, dict):
        return parse_mapping(source)[1]
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                    and Path(source).exists()):
        return read_config(source)[1]
    try:
        data = tomllib.loads(source)
    except tomllib.TOMLDecodeError as exc:
        return [Diagnostic("error", f"config is not valid TOML: {exc}")]
    return parse_mapping(data)[1]


def load_config(path) -> RunConfig:
    cfg, diags = read_config(path)
    if cfg is None:
        raise ConfigError(diags)
    return cfg
