import json
import math
import subprocess
import sys

import numpy as np
import pytest

from mcfreq import analytic as an
from mcfreq.cli import main
from mcfreq.scenario import save_scenario, scenario_to_dict, with_param
from mcfreq.signals import FrequencyGrid, read_series_csv, read_spectrum_csv, write_spectrum_csv

SPECTRA = ["phi_in", "phi_r", "h_p", "h_lr", "h_t", "h", "i_m"]


def run_cli(*argv):
    return main([str(a) for a in argv])


def test_analytic_file_contract(tmp_path):
    assert run_cli("analytic", "--out", tmp_path) == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert names == {f"{n}.{ext}" for n in SPECTRA for ext in ("csv", "svg")} | {"manifest.json"}
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert set(manifest) >= {"scenario_hash", "command", "seed", "replicates", "tool_version",
                             "timestamp", "output_paths"}
    assert manifest["command"] == "analytic" and len(manifest["output_paths"]) == 14
    header = (tmp_path / "h_p.csv").read_text().splitlines()[0]
    assert header == "f_hz,re,im,abs,arg,valid"
    assert (tmp_path / "h_p.svg").read_text().startswith("<svg")


def test_analytic_grid_flags(tmp_path):
    assert run_cli("analytic", "--out", tmp_path, "--fmax", 20000, "--nfreq", 4096) == 0
    spec = read_spectrum_csv(tmp_path / "h_lr.csv")
    assert len(spec) == 4096
    assert math.isclose(spec.frequencies[0], 20000 / 4096) and math.isclose(spec.frequencies[-1], 20000)
    assert run_cli("--fmax", 1000, "--nfreq", 10, "analytic", "--out", tmp_path / "b") == 0
    assert len(read_spectrum_csv(tmp_path / "b" / "h.csv")) == 10


def test_analytic_reproducible_bytes(tmp_path):
    run_cli("analytic", "--out", tmp_path / "a")
    run_cli("analytic", "--out", tmp_path / "b")
    for name in SPECTRA:
        for ext in ("csv", "svg"):
            assert (tmp_path / "a" / f"{name}.{ext}").read_bytes() == \
                (tmp_path / "b" / f"{name}.{ext}").read_bytes()


def test_current_ordering_across_amplitude(tmp_path, table):
    low = []
    for c_m in (1e20, 2e20, 3.3e20):
        cfg = tmp_path / f"c{c_m:g}.json"
        save_scenario(with_param(table, "input.amplitude", c_m), cfg)
        out = tmp_path / f"o{c_m:g}"
        assert run_cli("analytic", "--config", cfg, "--out", out) == 0
        low.append(abs(read_spectrum_csv(out / "i_m.csv").values[0]))
    assert low[0] < low[1] < low[2]


def test_hash_stable_under_config_key_order(tmp_path, table):
    data = scenario_to_dict(table)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    a.write_text(json.dumps(data))
    b.write_text(json.dumps({k: dict(reversed(list(v.items()))) if isinstance(v, dict) else v
                             for k, v in reversed(list(data.items()))}))
    run_cli("analytic", "--config", a, "--out", tmp_path / "oa")
    run_cli("analytic", "--config", b, "--out", tmp_path / "ob")
    ha = json.loads((tmp_path / "oa" / "manifest.json").read_text())["scenario_hash"]
    hb = json.loads((tmp_path / "ob" / "manifest.json").read_text())["scenario_hash"]
    assert ha == hb


def test_missing_config_exit_code(tmp_path, capsys):
    missing = tmp_path / "nowhere.json"
    assert run_cli("analytic", "--config", missing, "--out", tmp_path / "o") == 2
    assert str(missing) in capsys.readouterr().err


def test_invalid_config_names_field(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"flow": {"velocity": 0.0}}))
    assert run_cli("analytic", "--config", cfg, "--out", tmp_path / "o") == 2
    assert "flow.velocity" in capsys.readouterr().err
    cfg.write_text(json.dumps({"ligand": {"colour": 1}}))
    assert run_cli("analytic", "--config", cfg, "--out", tmp_path / "o") == 2


def test_usage_errors(tmp_path):
    assert run_cli("nonsense") == 2
    assert run_cli("analytic", "--nfreq", "many") == 2
    assert run_cli("sampling", "--out", tmp_path, "--param", "input.nope", "--values", "1") == 2
    assert run_cli("sampling", "--out", tmp_path) == 2


def test_timestep_validation_exit_code(tmp_path, table):
    cfg = tmp_path / "fast.json"
    save_scenario(with_param(table, "ligand.unbinding_rate", 2500.0), cfg)
    assert run_cli("simulate", "--config", cfg, "--out", tmp_path / "o") == 1


def test_simulate_reproducible_bytes(tmp_path):
    for d in ("a", "b"):
        assert run_cli("simulate", "--replicates", 1, "--seed", 7, "--t-end", 0.06,
                       "--out", tmp_path / d) == 0
    for name in ("replicate_000.csv", "ensemble.csv", "ode.csv", "n_bound.svg", "phi_local.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    head = (tmp_path / "a" / "replicate_000.csv").read_text().splitlines()[0]
    assert head == "t_s,n_bound,phi_local"
    rep = json.loads((tmp_path / "a" / "replicate_000.json").read_text())
    assert {"scenario_hash", "seed", "replicate", "version", "wall_time_s"} <= set(rep)


@pytest.fixture(scope="module")
def sim100(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim100")
    assert main(["simulate", "--replicates", "100", "--seed", "11", "--mode", "nonlinear",
                 "--out", str(out)]) == 0
    return out


@pytest.mark.slow
def test_simulate_ensemble_peak(sim100, table):
    names = {p.name for p in sim100.iterdir()}
    assert {"ensemble.csv", "manifest.json", "replicate_099.csv", "replicate_099.json"} <= names
    t, cols = read_series_csv(sim100 / "ensemble.csv")
    assert set(cols) == {"nb_mean", "nb_std", "phi_mean", "phi_std"}
    _, ode = read_series_csv(sim100 / "ode.csv")
    peak, oracle = cols["nb_mean"].max(), ode["n_bound"].max()
    assert abs(peak - oracle) <= 0.05 * oracle


@pytest.mark.slow
def test_compare_pipeline(sim100, tmp_path):
    assert run_cli("compare", "--sim", sim100, "--band", 0, 2000, "--out", tmp_path) == 0
    report = json.loads((tmp_path / "comparison.json").read_text())
    assert set(report) == {"band", "max_rel_error", "rms_rel_error", "reference_floor",
                           "n_bins", "n_excluded"}
    assert (tmp_path / "overlay.svg").exists()
    assert report["rms_rel_error"] <= 0.05


def test_compare_against_itself(tmp_path, table):
    run_cli("analytic", "--out", tmp_path / "a")
    write_spectrum_csv(tmp_path / "nb.csv", an.bound_spectrum(table, FrequencyGrid.spanning()))
    for src, quantity in ((tmp_path / "a" / "phi_r.csv", "phi"), (tmp_path / "nb.csv", "nb")):
        out = tmp_path / quantity
        assert run_cli("compare", "--sim", src, "--quantity", quantity, "--out", out) == 0
        report = json.loads((out / "comparison.json").read_text())
        assert report["max_rel_error"] == 0 and report["rms_rel_error"] == 0


def test_compare_band_beyond_grid(tmp_path):
    run_cli("analytic", "--out", tmp_path / "a", "--fmax", 1000, "--nfreq", 100)
    assert run_cli("compare", "--sim", tmp_path / "a" / "phi_r.csv", "--quantity", "phi",
                   "--band", 0, 5000, "--out", tmp_path / "c") == 1


@pytest.mark.parametrize("param,values,trend", [
    ("input.width", "0.25e-3,0.5e-3,1e-3", "decreasing"),
    ("ligand.diffusion_coefficient", "0.5e-11,1e-11,2e-11", "decreasing"),
    ("flow.velocity", "1e-3,2e-3,4e-3", "increasing"),
])
def test_sampling_trends(tmp_path, param, values, trend):
    assert run_cli("sampling", "--param", param, "--values", values, "--assert-trend", trend,
                   "--out", tmp_path) == 0
    lines = (tmp_path / "sampling.csv").read_text().splitlines()
    assert lines[0] == "param_value,f_c_hz,f_s_hz" and len(lines) == 4
    rows = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    np.testing.assert_allclose(rows[:, 2], 2 * rows[:, 1], rtol=1e-15)
    assert (tmp_path / "sampling.svg").exists()
    wrong = "increasing" if trend == "decreasing" else "decreasing"
    assert run_cli("sampling", "--param", param, "--values", values, "--assert-trend", wrong,
                   "--out", tmp_path / "w") == 1


def test_sampling_records_decay_failures(tmp_path):
    assert run_cli("sampling", "--param", "input.width", "--values", "0.5e-3,1e-3",
                   "--fmax", 200, "--nfreq", 50, "--out", tmp_path) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert len(manifest["errors"]) == 2
    assert "nan" in (tmp_path / "sampling.csv").read_text()
    assert run_cli("sampling", "--param", "input.width", "--values", "0.5e-3,1e-3",
                   "--fmax", 200, "--nfreq", 50, "--assert-trend", "--out", tmp_path / "t") == 1


def test_sweep_diffusion_inverts_peak(tmp_path):
    assert run_cli("sweep", "--param", "ligand.diffusion_coefficient", "--values", "0.5e-11,1e-11,2e-11",
                   "--assert-trend", "decreasing", "--trend-key", "peak_phi_r", "--out", tmp_path) == 0
    header = (tmp_path / "sweep.csv").read_text().splitlines()[0].split(",")
    assert header[:4] == ["param_value", "peak_phi_r", "peak_n_bound", "im_low"]
    assert {"phi_r.svg", "n_bound.svg", "i_m.svg", "manifest.json"} <= {p.name for p in tmp_path.iterdir()}


def test_sweep_with_simulation(tmp_path):
    assert run_cli("sweep", "--param", "ligand.binding_rate", "--values", "0.5e-18,2e-18", "--simulate",
                   "--replicates", 2, "--t-end", 0.06, "--assert-trend", "increasing", "--out", tmp_path) == 0
    header = (tmp_path / "sweep.csv").read_text().splitlines()[0]
    assert "sim_peak_n_bound" in header and "sim_peak_n_bound_std" in header


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "mcfreq", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "mcfreq" in res.stdout
