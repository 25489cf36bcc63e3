import csv
import io
import json
import math
import subprocess
import sys

import jsonschema
import numpy as np
import pytest
from scipy.integrate import trapezoid

from capastat.cli import COMPARE_SCHEMA, EXIT_INVALID, EXIT_IO, EXIT_NONCONVERGED, main


def run(tmp_path, *argv, name="out"):
    path = tmp_path / name
    code = main([*argv, "--out", str(path)])
    return code, path


def read_csv(path):
    text = path.read_text()
    meta = {}
    body = []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            meta[key] = value
        else:
            body.append(line)
    rows = list(csv.DictReader(io.StringIO("\n".join(body))))
    return meta, rows


def column(rows, name):
    return np.array([float(r[name]) for r in rows])


def strip_timestamp(text):
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        doc["manifest"].pop("timestamp")
        return json.dumps(doc, sort_keys=True)
    return "\n".join(l for l in text.splitlines() if not l.startswith("# timestamp:"))


class TestEigs:
    def test_rows_and_order(self, tmp_path):
        code, path = run(tmp_path, "eigs", "--L", "10", "--order", "128")
        assert code == 0
        meta, rows = read_csv(path)
        assert len(rows) == 128
        eps = column(rows, "epsilon")
        assert np.all(np.diff(eps) <= 0)
        np.testing.assert_allclose(column(rows, "sigma"), eps / 2, rtol=1e-15)
        assert json.loads(meta["dof"]) == 20.0
        landau = json.loads(meta["landau_count"])
        assert set(landau) == {"0.1", "0.25", "0.5", "0.9"}
        assert landau["0.25"]["predicted"] == pytest.approx(20.0)
        manifest = json.loads(meta["manifest"])
        assert manifest["command"] == "eigs" and manifest["parameters"]["order"] == 128

    def test_small_aperture(self, tmp_path):
        code, path = run(tmp_path, "eigs", "--L", "2.5")
        assert code == 0
        meta, rows = read_csv(path)
        assert json.loads(meta["dof"]) == 5.0 and len(rows) == 64

    def test_json_format(self, tmp_path):
        code, path = run(tmp_path, "eigs", "--L", "3", "--format", "json")
        doc = json.loads(path.read_text())
        assert code == 0 and doc["columns"] == ["index", "epsilon", "sigma"]
        assert doc["manifest"]["timestamp"] and len(doc["rows"]) == 64


class TestPdf:
    def test_normalised_and_monotone(self, tmp_path):
        code, path = run(tmp_path, "pdf", "--L", "10", "--points", "801")
        assert code == 0
        _, rows = read_csv(path)
        x, f, c = column(rows, "x"), column(rows, "pdf"), column(rows, "cdf")
        assert trapezoid(f, x) == pytest.approx(1.0, abs=1e-3)
        assert np.all(np.diff(c) >= 0)

    def test_single_term_is_exponential(self, tmp_path):
        code, path = run(tmp_path, "pdf", "--L", "0.5", "--points", "50")
        meta, rows = read_csv(path)
        sigma = json.loads(meta["sigma"])
        assert code == 0 and len(sigma) == 1
        x = column(rows, "x")
        np.testing.assert_allclose(column(rows, "pdf"), np.exp(-x / sigma[0]) / sigma[0],
                                   rtol=1e-13)

    def test_mc_column(self, tmp_path):
        code, path = run(tmp_path, "pdf", "--L", "2", "--mc", "--samples", "4000",
                         "--points", "30")
        _, rows = read_csv(path)
        e = column(rows, "ecdf")
        assert code == 0 and e[0] == 0 and np.all(np.diff(e) >= 0)
        assert np.max(np.abs(e - column(rows, "cdf"))) < 0.15

    def test_nonconvergence_exit(self, tmp_path):
        code, path = run(tmp_path, "pdf", "--L", "10", "--q-cap", "3")
        assert code == EXIT_NONCONVERGED
        assert not path.exists()


class TestCapacity:
    @pytest.fixture(scope="class")
    @classmethod
    def table(cls, tmp_path_factory):
        path = tmp_path_factory.mktemp("cap") / "cap.csv"
        assert main(["capacity", "--samples", "20000", "--out", str(path)]) == 0
        return read_csv(path)

    def test_defaults(self, table):
        meta, rows = table
        params = json.loads(meta["manifest"])["parameters"]
        assert params["noise"] == 5.6e-3 and params["fc"] == 2.4e9 and params["L"] == 10.0
        np.testing.assert_allclose(column(rows, "gamma_bar"), [1, 10, 100, 1e3, 1e4], rtol=1e-12)

    def test_asymptote_column(self, table):
        meta, rows = table
        offset = json.loads(meta["offset_3db"])
        np.testing.assert_allclose(column(rows, "capacity_asymptote"),
                                   np.log2(column(rows, "gamma_bar")) - offset, rtol=1e-14)

    def test_all_columns_populated(self, table):
        _, rows = table
        assert all(r["status"] == "ok" for r in rows)
        for name in ("capacity_closed_form", "capacity_mc", "capacity_mimo"):
            assert np.all(column(rows, name) > 0)
        assert np.all(column(rows, "capacity_mc") > column(rows, "capacity_mimo"))

    def test_mode_selection(self, tmp_path):
        code, path = run(tmp_path, "capacity", "--mode", "closed", "--powers", "0.056")
        _, rows = read_csv(path)
        assert code == 0
        assert rows[0]["capacity_mc"] == "" and rows[0]["capacity_mimo"] == ""
        assert rows[0]["capacity_asymptote"] == ""
        assert float(rows[0]["capacity_closed_form"]) > 0

    def test_low_snr_falls_back_to_oracle(self, tmp_path):
        code, path = run(tmp_path, "capacity", "--mode", "closed", "--powers", "0.00056,0.056")
        _, rows = read_csv(path)
        assert code == 0
        assert [r["status"] for r in rows] == ["oracle_fallback", "ok"]
        assert 0 < float(rows[0]["capacity_closed_form"]) < float(rows[1]["capacity_closed_form"])

    @pytest.mark.parametrize("bad", ["0,1", "-1", "abc", ""])
    def test_rejects_bad_powers(self, tmp_path, bad):
        with pytest.raises(SystemExit) as exc:
            main(["capacity", "--powers", bad, "--out", str(tmp_path / "x")])
        assert exc.value.code == 2


class TestCompare:
    @pytest.fixture(scope="class")
    @classmethod
    def doc(cls, tmp_path_factory):
        path = tmp_path_factory.mktemp("cmp") / "cmp.json"
        assert main(["compare", "--L", "10", "--samples", "20000", "--out", str(path)]) == 0
        return json.loads(path.read_text())

    def test_schema(self, doc):
        jsonschema.validate(doc, COMPARE_SCHEMA)

    def test_gap_positive(self, doc):
        assert doc["mimo_elements"] == 21
        for row in doc["rows"]:
            assert row["gap_bits"] > 3 * row["combined_stderr"]
            assert row["gap_sign"] == 1

    def test_csv_variant(self, tmp_path):
        code, path = run(tmp_path, "compare", "--samples", "3000", "--format", "csv",
                         "--powers", "1")
        _, rows = read_csv(path)
        assert code == 0 and len(rows) == 1 and float(rows[0]["gap_bits"]) > 0


class TestSimulate:
    @pytest.mark.parametrize("method", ["spectral", "kl", "mimo"])
    def test_methods(self, tmp_path, method):
        code, path = run(tmp_path, "simulate", "--L", "2.5", "--method", method,
                         "--samples", "500")
        meta, rows = read_csv(path)
        assert code == 0 and len(rows) == 500
        g = column(rows, "gain")
        assert np.all(g >= 0)
        assert json.loads(meta["sample_mean"]) == pytest.approx(g.mean(), rel=1e-12)


class TestExitCodes:
    def test_invalid_length(self, tmp_path):
        assert run(tmp_path, "eigs", "--L", "-2")[0] == EXIT_INVALID

    def test_invalid_order(self, tmp_path):
        assert run(tmp_path, "eigs", "--order", "1")[0] == EXIT_INVALID

    def test_io_failure(self, tmp_path, capsys):
        code = main(["eigs", "--out", str(tmp_path / "missing" / "x.csv")])
        assert code == EXIT_IO
        assert "missing" in capsys.readouterr().err

    def test_short_aperture_mimo(self, tmp_path):
        assert run(tmp_path, "simulate", "--L", "0.3", "--method", "mimo",
                   "--samples", "10")[0] == EXIT_INVALID


class TestReproducibility:
    @pytest.mark.parametrize("argv", [
        ["compare", "--samples", "5000", "--powers", "0.056,5.6"],
        ["capacity", "--L", "2.5", "--samples", "5000"],
        ["simulate", "--L", "3", "--method", "kl", "--samples", "5000"],
    ])
    def test_byte_identical_across_threads(self, tmp_path, monkeypatch, argv):
        outputs = []
        for threads in ("1", "2", "8"):
            monkeypatch.setenv("CAPA_THREADS", threads)
            code, path = run(tmp_path, *argv, name=f"run{threads}")
            assert code == 0
            outputs.append(strip_timestamp(path.read_text()))
        assert outputs[0] == outputs[1] == outputs[2]

    def test_manifest_on_every_output(self, tmp_path):
        for argv in (["eigs", "--L", "1"], ["pdf", "--L", "1", "--points", "5"],
                     ["simulate", "--L", "1", "--samples", "10"]):
            _, path = run(tmp_path, *argv)
            assert path.read_text().startswith("# manifest: ")


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "capastat", "eigs", "--L", "0.5"],
                         capture_output=True, text=True, check=True)
    assert "index,epsilon,sigma" in res.stdout
