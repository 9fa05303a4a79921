import json
import subprocess
import sys

import numpy as np
import pytest

import corehole.cli as cli
from corehole.components import OverlapDecomposition
from corehole.fcidump import load_fcidump
from corehole.qsp import QspErrorReport
from corehole.spectra import QpFit, SpectralFunction, find_peaks, fit_qp_weight, fourier_spectrum
from corehole.trajectory import GreensTrajectory

from test_fcidump import H2_DUMP

SHORT = """
core_index = 1
methods = {methods}
[system.siam]
eps_impurity = -1.5
bath_energies = [-1.0, 1.0, 2.0]
hybridization = 0.4
onsite_u = 2.0
[propagation]
dt = 0.1
t_max = 40.0
[spectrum]
eta = 0.05
omega = [-5.0, 2.0, 1401]
[qsp]
degrees = [[2, 3], [4, 5]]
tau_max = 2.0
points = 41
[output]
dir = "{out}"
"""


def _write_config(tmp_path, methods, name="run.toml", out="out"):
    path = tmp_path / name
    path.write_text(SHORT.format(methods=json.dumps(methods), out=out))
    return path


@pytest.fixture(scope="module")
def short_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    path = _write_config(tmp, ["exact", "TDCC", "TDDCC1_2B", "qsp"])
    code = cli.main(["run", str(path)])
    return code, tmp / "out"


def test_run_succeeds(short_run):
    code, out = short_run
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert set(report["methods"]) == {"exact", "tdcc", "tddcc1_2b", "qsp_2_3", "qsp_4_5"}
    assert all(m["status"] == "ok" for m in report["methods"].values())
    assert report["time_grid"]["n_times"] == 401
    assert report["qsp"]["tau_max"] == pytest.approx(2.0)
    for tag in report["methods"]:
        for suffix in ("_greens.csv", "_spectrum.csv", "_qpfit.json"):
            assert (out / f"{tag}{suffix}").exists()
    assert (out / "components" / "tddcc1_2b" / "manifest.json").exists()
    assert not (out / "components" / "exact").exists()


def test_report_matches_files(short_run):
    _, out = short_run
    report = json.loads((out / "report.json").read_text())
    for tag, entry in report["methods"].items():
        spec = SpectralFunction.from_csv(out / entry["files"]["spectrum"], eta=0.05)
        g = GreensTrajectory.from_csv(out / entry["files"]["greens"])
        again = fourier_spectrum(g, 0.05, spec.omegas)
        assert np.max(np.abs(again.a - spec.a)) < 1e-10
        fit = fit_qp_weight(spec)
        assert fit.omega0 == pytest.approx(entry["qp"]["omega0"], abs=1e-10)
        assert fit.z == pytest.approx(entry["qp"]["Z"], abs=1e-10)
        stored = QpFit.from_json(out / entry["files"]["qpfit"])
        assert stored.z == pytest.approx(fit.z, abs=1e-10)
        peaks = [p.omega for p in find_peaks(spec)]
        assert peaks == pytest.approx([p["omega"] for p in entry["peaks"]], abs=1e-10)
        assert spec.integral() == pytest.approx(entry["integral"], abs=1e-10)


def test_components_and_errors_reread(short_run):
    _, out = short_run
    decomp = OverlapDecomposition.from_directory(out / "components" / "tddcc1_2b")
    assert decomp.completeness_error() < 1e-10
    for tag in ("qsp_2_3", "qsp_4_5"):
        data = json.loads((out / f"{tag}_errors.json").read_text())
        rep = QspErrorReport(tuple(data["degrees"]), data["rel_err_g"], data["rel_err_a"],
                             data["queries_per_timestep"])
        assert rep.queries_per_timestep == sum(rep.degrees)
    assert (json.loads((out / "qsp_4_5_errors.json").read_text())["rel_err_g"]
            < json.loads((out / "qsp_2_3_errors.json").read_text())["rel_err_g"])


def test_csv_headers(short_run):
    _, out = short_run
    assert (out / "tdcc_greens.csv").read_text().splitlines()[0] == "t,Re G,Im G,Re E_Nm1,Im E_Nm1"
    assert (out / "tdcc_spectrum.csv").read_text().splitlines()[0] == "omega_hartree,omega_eV,A"


def test_rerun_is_byte_identical(tmp_path):
    path = _write_config(tmp_path, ["exact", "TDDCC1", "qsp"])
    cfg_b = _write_config(tmp_path, ["exact", "TDDCC1", "qsp"], "b.toml", "out_b")
    assert cli.main(["run", str(path)]) == 0
    assert cli.main(["run", str(cfg_b)]) == 0
    a, b = tmp_path / "out", tmp_path / "out_b"
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    for rel in files:
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel


def test_partial_failure(tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise RuntimeError("oracle unavailable")

    monkeypatch.setattr(cli, "exact_greens", boom)
    path = _write_config(tmp_path, ["exact", "TDCC"])
    assert cli.main(["run", str(path)]) == cli.EXIT_PARTIAL
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["methods"]["exact"]["status"] == "failed"
    assert "oracle unavailable" in report["methods"]["exact"]["error"]
    assert report["methods"]["tdcc"]["status"] == "ok"
    assert (tmp_path / "out" / "tdcc_qpfit.json").exists()


def test_config_error_exit(tmp_path, capsys):
    path = _write_config(tmp_path, [])
    assert cli.main(["run", str(path)]) == cli.EXIT_CONFIG
    assert cli.main(["validate", str(path)]) == cli.EXIT_CONFIG
    assert "at least one method must be requested" in capsys.readouterr().out
    assert not (tmp_path / "out").exists()


def test_validate_ok(tmp_path, capsys):
    path = _write_config(tmp_path, ["TDCC"])
    assert cli.main(["validate", str(path)]) == cli.EXIT_OK
    assert "config valid" in capsys.readouterr().out


def test_fcidump_echo(tmp_path, capsys):
    path = tmp_path / "h2.fcidump"
    path.write_text(H2_DUMP)
    assert cli.main(["fcidump-echo", str(path)]) == cli.EXIT_OK
    echoed = load_fcidump(capsys.readouterr().out)
    ref = load_fcidump(H2_DUMP)
    assert np.array_equal(echoed.h1, ref.h1) and np.array_equal(echoed.v2, ref.v2)
    assert echoed.scalar_shift == ref.scalar_shift
    assert cli.main(["fcidump-echo", str(tmp_path / "missing")]) == cli.EXIT_CONFIG


def test_thread_count(monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    assert cli.thread_count() == 3
    monkeypatch.setenv(cli.THREADS_ENV, "lots")
    assert cli.thread_count() == 1
    monkeypatch.setenv(cli.THREADS_ENV, "0")
    assert cli.thread_count() == 1


def test_module_entry_point(tmp_path):
    path = _write_config(tmp_path, ["TDCC"])
    proc = subprocess.run([sys.executable, "-m", "corehole", "validate", str(path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "config valid" in proc.stdout
