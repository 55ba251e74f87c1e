import json
import math
import subprocess
import sys

import numpy as np
import pytest

from ionmodes.cli import main
from ionmodes.geometry import IonSpecies, ModeConfiguration, curvature_systematics


def base_config(**overrides):
    doc = {
        "ion": {"mass_amu": 24.985837, "charge_e": 1.0},
        "trap": {
            "geometry_path": "demo",
            "site_um": [24.0, 0.0, 36.0],
            "site_uncertainty_um": [1.0, 1.0, 5.0],
        },
        "probe": {"direction": [0.8660254, 0.5, 0.0], "detuning_MHz": -5.0,
                  "linewidth_MHz": 42.0},
        "raman": {"direction": [-0.70710678, 0.70710678, 0.0],
                  "crossing_angle_deg": 90.0, "direction_uncertainty_deg": 5.0},
        "modes": {"angles_deg": [-6.0, -38.0, -1.0],
                  "frequencies_MHz": [3.584, 4.833, 5.878]},
        "weak": {"electrodes": [6, 15, 17, 26], "U_exc_uV": 400.0,
                 "t_exc_us": 10.0, "window_MHz": 0.25, "points_per_window": 15},
        "strong": {
            "angles_deg": [-9.0, -51.0, -15.0],
            "frequencies_MHz": [3.76, 4.54, 5.76],
            "nbar": [0.5, 1.0, 0.44],
            "Omega_0_kHz": 390.0,
            "Gamma_dec_kHz": 13.0,
            "reference_angles_deg": [-9.0, -51.0, -15.0],
            "grids": {
                "carrier": {"t_min_us": 0.05, "t_max_us": 12.0, "points": 40},
                "bsb1": {"t_min_us": 0.1, "t_max_us": 28.0, "points": 40},
                "bsb2": {"t_min_us": 1.0, "t_max_us": 28.0, "points": 40},
                "bsb3": {"t_min_us": 0.1, "t_max_us": 28.0, "points": 40},
            },
        },
        "noise": {"seed": 1, "repetitions": 200, "signal_counts": 30.0,
                  "stray_counts": 3.0, "trials": 200},
        "curvature": {"assignment": [2, 1, 3],
                      "angle_systematics_deg": [3.0, 4.0, 1.0]},
    }
    doc.update(overrides)
    return doc


@pytest.fixture
def config_path(tmp_path):
    def write(doc, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return str(path)

    return write


class TestCurvatureCommand:
    def test_demo_matches_library(self, tmp_path, capsys):
        assert main(["curvature", "--config", "demo", "--out", str(tmp_path)]) == 0
        doc = json.loads((tmp_path / "curvature.json").read_text())
        config = ModeConfiguration.from_display([-6.0, -38.0, -1.0],
                                                [3.584, 4.833, 5.878])
        expect = curvature_systematics(config, IonSpecies.mg25(),
                                       np.deg2rad([3.0, 4.0, 1.0]),
                                       assignment=(2, 1, 3))
        np.testing.assert_allclose(doc["curvature_uV_per_um2"], expect.matrix,
                                   rtol=1e-12)
        np.testing.assert_allclose(doc["systematic_half_widths_uV_per_um2"],
                                   expect.systematics, rtol=1e-12)
        assert "curvature tensor" in capsys.readouterr().out

    def test_zero_angles_diagonal(self, tmp_path, config_path):
        doc = base_config()
        doc["modes"]["angles_deg"] = [0.0, 0.0, 0.0]
        path = config_path(doc)
        assert main(["curvature", "--config", path, "--out", str(tmp_path)]) == 0
        out = np.array(json.loads((tmp_path / "curvature.json").read_text())
                       ["curvature_uV_per_um2"])
        assert np.all(out - np.diag(np.diag(out)) == 0.0)

    def test_malformed_report_exits_2(self, tmp_path, config_path):
        bad = tmp_path / "report.json"
        bad.write_text('{"parameters": "nope"}')
        code = main(["curvature", "--config", config_path(base_config()),
                     "--report", str(bad), "--out", str(tmp_path)])
        assert code == 2


class TestSimulateWeak:
    def test_writes_files_and_manifest(self, tmp_path, config_path):
        path = config_path(base_config())
        out = tmp_path / "run"
        assert main(["simulate-weak", "--config", path, "--seed", "5",
                     "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest_weak.json").read_text())
        assert manifest["kind"] == "weak"
        assert manifest["noise"]["seed"] == 5
        np.testing.assert_allclose(manifest["truth"]["angles_deg"],
                                   [-6.0, -38.0, -1.0], rtol=1e-12)
        for name in manifest["files"]:
            assert (out / name).exists()
        assert len(manifest["files"]) == 4

    def test_byte_identical_reruns(self, tmp_path, config_path):
        path = config_path(base_config())
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            assert main(["simulate-weak", "--config", path, "--seed", "9",
                         "--out", str(out)]) == 0
        for name in ("weak_l6.csv", "weak_l15.csv", "manifest_weak.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_missing_geometry_exits_2(self, tmp_path, config_path, capsys):
        doc = base_config()
        doc["trap"]["geometry_path"] = "no_such_file.json"
        code = main(["simulate-weak", "--config", config_path(doc),
                     "--out", str(tmp_path)])
        assert code == 2
        assert "geometry_path" in capsys.readouterr().err

    def test_invalid_json_names_location(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text('{"ion": }')
        assert main(["simulate-weak", "--config", str(path),
                     "--out", str(tmp_path)]) == 2
        assert "invalid JSON" in capsys.readouterr().err


class TestWeakRoundTrip:
    def test_fit_recovers_manifest_truth(self, tmp_path, config_path):
        doc = base_config()
        doc["fit"] = {"weak_initial": {
            "angles_deg": [-2.0, -42.0, 3.0],
            "frequencies_MHz": [3.634, 4.783, 5.928],
            "U_exc_uV": 440.0,
        }}
        path = config_path(doc)
        out = tmp_path / "run"
        assert main(["simulate-weak", "--config", path, "--seed", "2",
                     "--out", str(out)]) == 0
        assert main(["fit-weak", "--config", path,
                     "--data", str(out / "weak_l*.csv"), "--out", str(out)]) == 0
        report = json.loads((out / "fit_weak_report.json").read_text())
        params = {p["name"]: p["value"] for p in report["parameters"]}
        truth = json.loads((out / "manifest_weak.json").read_text())["truth"]
        for axis, angle in zip("xyz", truth["angles_deg"]):
            assert abs(params[f"phi_{axis}_deg"] - angle) < 3.0
        for i, f in enumerate(truth["frequencies_MHz"], start=1):
            assert abs(params[f"omega_{i}_MHz"] - f) < 0.01
        assert (out / "residuals_weak_electrode_6.csv").exists()

    def test_single_spectrum_exits_5(self, tmp_path, config_path, capsys):
        doc = base_config()
        doc["weak"]["electrodes"] = [15]
        path = config_path(doc)
        out = tmp_path / "run"
        assert main(["simulate-weak", "--config", path, "--out", str(out)]) == 0
        code = main(["fit-weak", "--config", path,
                     "--data", str(out / "weak_l15.csv"), "--out", str(out)])
        assert code == 5
        assert "degenerate" in capsys.readouterr().err.lower()

    def test_non_numeric_cell_exits_2(self, tmp_path, config_path, capsys):
        path = config_path(base_config())
        bad = tmp_path / "weak_l6.csv"
        bad.write_text("# electrode: 6\nomega_exc_MHz,F,sigma_F\n"
                       "3.5,0.99,0.01\n3.6,abc,0.01\n")
        code = main(["fit-weak", "--config", path, "--data", str(bad),
                     "--out", str(tmp_path)])
        assert code == 2
        err = capsys.readouterr().err
        assert ":4:" in err and "column 2" in err


class TestStrongRoundTrip:
    def test_simulate_and_fit(self, tmp_path, config_path):
        path = config_path(base_config())
        out = tmp_path / "run"
        assert main(["simulate-strong", "--config", path, "--seed", "3",
                     "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest_strong.json").read_text())
        assert len(manifest["files"]) == 4
        assert main(["fit-strong", "--config", path,
                     "--data", str(out / "strong_*.csv"),
                     "--fix-angle", "iterate", "--out", str(out)]) == 0
        report = json.loads((out / "fit_strong_report.json").read_text())
        params = {p["name"]: p["value"] for p in report["parameters"]}
        assert abs(params["Omega_0_kHz"] - 390.0) < 10.0
        assert abs(params["nbar_3"] - 0.44) < 0.25
        assert report["diagnostics"]["fixed_angle"] == "iterate"

    def test_all_angles_free_exits_5(self, tmp_path, config_path, capsys):
        path = config_path(base_config())
        out = tmp_path / "run"
        assert main(["simulate-strong", "--config", path, "--out", str(out)]) == 0
        code = main(["fit-strong", "--config", path,
                     "--data", str(out / "strong_*.csv"),
                     "--fix-angle", "none", "--out", str(out)])
        assert code == 5
        assert "unconstrained" in capsys.readouterr().err


class TestFieldsCommand:
    def test_dump(self, tmp_path, config_path, capsys):
        path = config_path(base_config())
        assert main(["fields", "--config", path, "--out", str(tmp_path)]) == 0
        doc = json.loads((tmp_path / "fields.json").read_text())
        assert doc["site_um"] == [24.0, 0.0, 36.0]
        assert len(doc["fields_V_per_m_per_V"]) == 30
        assert "E_l at site" in capsys.readouterr().out


class TestEntryPoint:
    def test_help_lists_subcommands(self):
        result = subprocess.run(
            [sys.executable, "-m", "ionmodes.cli", "--help"],
            capture_output=True, text=True,
        )
        assert result.returncode == 0
        for name in ("simulate-weak", "simulate-strong", "fit-weak",
                     "fit-strong", "curvature", "fields"):
            assert name in result.stdout
