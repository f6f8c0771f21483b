import json
import math
import subprocess
import sys

import numpy as np
import pytest

from conftest import DEVICES, FITTED_LOSS
from nanofluxonium import cli, spectra
from nanofluxonium import io as fio
from nanofluxonium.errors import ParameterError
from nanofluxonium.fitting import synthesize_spectroscopy
from nanofluxonium.loss import MatrixElementTable, model_t1
from nanofluxonium.nanowire import kinetic_inductance


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def data_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    spec = synthesize_spectroscopy(DEVICES["device3"], np.linspace(-math.pi, 0, 7), 0.005, seed=1,
                                   transitions=((0, 1), (0, 2), (0, 3)))
    fio.write_dataset(d / "spec.csv", spec)
    p = DEVICES["device3"]
    table = MatrixElementTable(p)
    freqs = np.linspace(0.6, 4.0, 10)
    fio.write_csv(d / "t1.csv", {}, ["freq_GHz", "t1_s"], zip(freqs, model_t1(p, freqs, table, FITTED_LOSS)))
    return d


class TestFormats:
    def test_fmt(self):
        assert fio.fmt(np.float64(0.1)) == "0.1"
        assert fio.fmt(np.int64(3)) == "3"
        assert fio.fmt(np.bool_(True)) == "true"
        assert fio.fmt(math.inf) == "inf" and fio.fmt(-math.inf) == "-inf" and fio.fmt(math.nan) == "nan"
        assert fio.fmt(None) == ""

    def test_jsonable(self):
        out = fio.jsonable({"a": np.arange(2), "b": (np.float32(1.5), math.inf), 3: None})
        assert out == {"a": [0, 1], "b": [1.5, "inf"], "3": None}
        json.dumps(out, allow_nan=False)

    def test_csv_round_trip(self, tmp_path):
        path = tmp_path / "x.csv"
        rows = [[0.1, 1, "g0"], [math.inf, 2, "e0"]]
        fio.write_csv(path, {"k": np.float64(2.5)}, ["a", "b", "c"], rows)
        header, cols, back = fio.read_csv(path)
        assert header == {"k": 2.5} and cols == ["a", "b", "c"]
        assert back == [["0.1", "1", "g0"], ["inf", "2", "e0"]]

    def test_dataset_round_trip(self, tmp_path):
        d = synthesize_spectroscopy(DEVICES["device1"], [-1.0, -0.5], 0.01, seed=2)
        fio.write_dataset(tmp_path / "d.csv", d)
        assert fio.read_dataset(tmp_path / "d.csv").points == d.points

    def test_plan_round_trip(self, device2_system):
        from nanofluxonium.dynamics import raman_plan

        plan = raman_plan(device2_system)
        back = fio.plan_from_dict(json.loads(json.dumps(fio.plan_to_dict(plan))))
        assert back == plan

    def test_bad_documents(self, tmp_path):
        with pytest.raises(ParameterError):
            fio.plan_from_dict({"tones": [{"freq_GHz": 1.0}]})
        with pytest.raises(ParameterError):
            fio.device_from_dict({"E_C_GHz": "one", "E_L_GHz": 1, "E_J_GHz": 1})
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        with pytest.raises(ParameterError):
            fio.load_device(bad)

    def test_config_hash_stable(self):
        assert fio.config_hash({"a": 1, "b": [1, 2]}) == fio.config_hash({"b": [1, 2], "a": 1})
        assert fio.config_hash({"a": 1}) != fio.config_hash({"a": 2})


class TestCommands:
    def test_spectrum(self, tmp_path):
        out = tmp_path / "s.csv"
        assert run("spectrum", "--device", "device1", "--out", out, "--flux-points", 101, "--levels", 6) == 0
        header, cols, rows = fio.read_csv(out)
        assert cols == cli.SWEEP_COLUMNS and header["command"] == "spectrum"
        phis = sorted({float(r[0]) for r in rows})
        assert len(phis) == 101 and phis == sorted(phis)
        assert all(float(r[4]) > 0 for r in rows)

    def test_fit(self, tmp_path, data_files):
        out = tmp_path / "fit.json"
        code = run("fit", "--device", "device3", "--data", data_files / "spec.csv", "--out", out,
                   "--no-flux-cal", "--restarts", 1)
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["converged"] is True
        assert abs(doc["params"]["E_C_GHz"] / 1.9 - 1) < 0.01
        assert len(doc["residuals_GHz"]) == 21 and len(doc["provenance"]["config_hash"]) == 64

    def test_modes(self, tmp_path):
        out = tmp_path / "m.csv"
        assert run("modes", "--device", "device1", "--out", out, "--count", 3) == 0
        _, cols, rows = fio.read_csv(out)
        assert len(rows) == 3 and {r[1] for r in rows} == {"antisymmetric"}
        freqs = [float(r[2]) for r in rows]
        assert freqs == sorted(freqs)

    def test_kinetic_matches_library(self, tmp_path):
        out = tmp_path / "k.json"
        assert run("kinetic", "--device", "device1", "--out", out) == 0
        dev = fio.load_device(cli._device_path("device1"))
        assert json.loads(out.read_text())["L_k_H"] == kinetic_inductance(dev.geometry)

    def test_t1_curve(self, tmp_path):
        out = tmp_path / "t.csv"
        assert run("t1-curve", "--device", "device3", "--out", out, "--flux-points", 11, "--purcell") == 0
        header, cols, rows = fio.read_csv(out)
        assert cols == cli.T1_COLUMNS and len(rows) == 11
        assert header["crossover_GHz"] == pytest.approx(1.77, rel=0.05)

    def test_loss_fit(self, tmp_path, data_files):
        out = tmp_path / "q.json"
        assert run("loss-fit", "--device", "device3", "--data", data_files / "t1.csv", "--out", out) == 0
        doc = json.loads(out.read_text())
        assert doc["Q_L"] == pytest.approx(39000, rel=1e-5) and doc["Q_C"] == pytest.approx(15100, rel=1e-5)

    def test_drive_map(self, tmp_path):
        out = tmp_path / "d.csv"
        assert run("drive-map", "--device", "device2", "--out", out, "--grid", 5) == 0
        header, cols, rows = fio.read_csv(out)
        assert len(rows) == 25 and header["grid"]["points"] == 5
        vals = [float(r[2]) for r in rows]
        assert min(vals) >= -1e-6 and max(vals) <= 1 + 1e-6

    def test_pulse_t1(self, tmp_path):
        out = tmp_path / "p.csv"
        code = run("pulse-t1", "--device", "device2", "--out", out, "--wait-points", 41,
                   "--fluxon-rate", 5e4, "--plasmon-rate", 1 / 600e-9)
        assert code == 0
        header, _, rows = fio.read_csv(out)
        assert len(rows) == 41
        assert header["t1_s"] == pytest.approx(20e-6, rel=0.05)

    def test_repeat_byte_identical(self, tmp_path):
        outs = []
        for k in range(2):
            out = tmp_path / f"r{k}.csv"
            assert run("t1-curve", "--device", "device3", "--out", out, "--flux-points", 5) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_hash_ignores_threads(self, tmp_path):
        heads = []
        for threads, seed in ((1, 0), (3, 0), (1, 1)):
            out = tmp_path / f"h{threads}{seed}.json"
            run("kinetic", "--device", "device1", "--out", out, "--threads", threads, "--seed", seed)
            heads.append(json.loads(out.read_text())["provenance"]["config_hash"])
        assert heads[0] == heads[1] != heads[2]


class TestExitCodes:
    def test_missing_device(self, tmp_path):
        assert run("spectrum", "--device", tmp_path / "nope.json", "--out", tmp_path / "x.csv") == 2

    def test_missing_data(self, tmp_path):
        assert run("fit", "--device", "device3", "--data", tmp_path / "nope.csv", "--out", tmp_path / "x.json") == 2

    def test_bad_sweep(self, tmp_path):
        assert run("drive-map", "--device", "device2", "--out", tmp_path / "x.csv", "--grid", 3,
                   "--sweep1", "7:-0.1:0.1") == 2

    def test_missing_section(self, tmp_path):
        dev = tmp_path / "bare.json"
        dev.write_text(json.dumps({"E_C_GHz": 1.0, "E_L_GHz": 1.0, "E_J_GHz": 5.0}))
        assert run("kinetic", "--device", dev, "--out", tmp_path / "x.json") == 2

    def test_unwritable(self, tmp_path):
        assert run("kinetic", "--device", "device1", "--out", tmp_path / "no" / "such" / "x.json") == 4

    def test_numerical_failure(self, tmp_path, monkeypatch):
        real = spectra._sweep_point

        def flaky(args):
            if args[1] == 0.0:
                raise np.linalg.LinAlgError("synthetic")
            return real(args)

        monkeypatch.setattr(spectra, "_sweep_point", flaky)
        out = tmp_path / "s.csv"
        assert run("spectrum", "--device", "device1", "--out", out, "--flux-points", 3, "--levels", 4) == 3
        diag = json.loads((tmp_path / "s.csv.diagnostics.json").read_text())
        assert "failed_points" in diag["diagnostics"]
        assert out.exists()

    def test_threads_validated(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run("kinetic", "--device", "device1", "--out", tmp_path / "x.json", "--threads", 0)
        assert exc.value.code == 2


def test_console_script(tmp_path):
    out = tmp_path / "k.json"
    r = subprocess.run([sys.executable, "-m", "nanofluxonium.cli", "kinetic", "--device", "device1", "--out",
                        str(out)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert json.loads(out.read_text())["provenance"]["tool"] == "nanofluxonium"
