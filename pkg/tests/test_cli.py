import csv
import io
import json
import subprocess
import sys

import pytest

from sparsefree.cli import main, parse_range


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def data_file(tmp_path):
    def write(values, name="x.txt"):
        p = tmp_path / name
        p.write_text("\n".join(str(v) for v in values) + "\n")
        return str(p)

    return write


class TestBoundary:
    def test_default_grid(self, capsys):
        code, out, _ = run(["boundary", "--gamma", "2", "--beta", "0.5:1.0:0.01"], capsys)
        table = rows(out)
        assert code == 0 and len(table) == 51
        assert list(table[0]) == ["beta", "rho_star", "rho_tail", "rho_long"]
        row = next(r for r in table if float(r["beta"]) == 0.6)
        assert float(row["rho_star"]) == pytest.approx(0.1, abs=1e-12)

    def test_gamma_one_long_equals_beta(self, capsys, tmp_path):
        out_path = tmp_path / "b.csv"
        assert main(["boundary", "--gamma", "1", "--beta", "0.5:0.9:0.1", "--out", str(out_path)]) == 0
        for r in rows(out_path.read_text()):
            assert float(r["rho_long"]) == float(r["beta"])

    @pytest.mark.parametrize("argv", [["--gamma", "0"], ["--gamma", "2", "--beta", "0.9:0.5:0.1"],
                                      ["--gamma", "2", "--beta", "0.5:1.2:0.1"], ["--gamma", "2", "--beta", "x"]])
    def test_errors(self, argv, capsys):
        try:
            code = main(["boundary", *argv])
        except SystemExit as exc:
            code = exc.code
        _, err = capsys.readouterr()
        assert code != 0 and err

    def test_idempotent(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["boundary", "--gamma", "0.5", "--out", str(a)])
        main(["boundary", "--gamma", "0.5", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_parse_range(self):
        assert len(parse_range("0:1:0.05")) == 21
        assert parse_range("0.5:1.0:0.01")[10] == 0.6


class TestTest:
    def test_sign_example(self, data_file, capsys):
        code, out, _ = run(["test", data_file([3.0, -1.0, 2.0]), "--tests", "sign"], capsys)
        (row,) = rows(out)
        assert code == 0
        assert row["statistic"] == "1" and float(row["pvalue"]) == 0.5 and row["decision"] == "accept"

    def test_all_plus_tail_run(self, data_file, capsys):
        code, out, _ = run(["test", data_file(range(1, 21)), "--tests", "tail-run"], capsys)
        (row,) = rows(out)
        assert float(row["pvalue"]) == 2.0**-20 and row["decision"] == "reject"

    def test_comments_and_blanks(self, tmp_path, capsys):
        p = tmp_path / "d.txt"
        p.write_text("# header\n3.0\n\n-1.0\n  2.0  \n")
        code, out, _ = run(["test", str(p), "--tests", "sign,num_runs"], capsys)
        assert code == 0 and len(rows(out)) == 2

    def test_empty_file(self, tmp_path, capsys):
        p = tmp_path / "e.txt"
        p.write_text("# nothing\n")
        code, out, err = run(["test", str(p)], capsys)
        assert code != 0 and out == "" and "no data" in err

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = run(["test", str(tmp_path / "nope.txt")], capsys)
        assert code != 0 and "cannot read" in err

    @pytest.mark.parametrize("bad", ["abc", "nan", "inf"])
    def test_bad_values(self, data_file, capsys, bad):
        code, _, err = run(["test", data_file([1.0, bad])], capsys)
        assert code != 0 and err

    @pytest.mark.parametrize("kind", ["hc", "lrt"])
    def test_hc_needs_null(self, data_file, capsys, kind):
        code, out, err = run(["test", data_file([1.0, 2.0, -0.5]), "--tests", kind], capsys)
        assert code != 0 and "--null-gamma" in err and out == ""

    def test_lrt_needs_alternative(self, data_file, capsys):
        code, _, err = run(["test", data_file([1.0, 2.0]), "--tests", "lrt", "--null-gamma", "2"], capsys)
        assert code != 0 and "--epsilon" in err

    def test_simulated_laws(self, data_file, capsys):
        x = [0.1 * i * (-1) ** i for i in range(1, 60)] + [8.0, 9.0, 10.0]
        code, out, err = run(["test", data_file(x), "--tests", "cusum,hc,lrt,t", "--null-gamma", "2",
                              "--epsilon", "0.05", "--mu", "3", "--reps", "200"], capsys)
        assert code == 0 and "calibrating" in err
        table = {r["test"]: r for r in rows(out)}
        assert set(table) == {"cusum", "hc", "lrt", "t"}
        assert all(0 < float(r["pvalue"]) <= 1 for r in table.values())

    def test_default_tests(self, data_file, capsys):
        code, out, _ = run(["test", data_file([1.5, -0.3, 2.2, 0.7, -1.1])], capsys)
        assert code == 0
        assert [r["test"] for r in rows(out)] == ["sign", "signed_rank", "smirnov", "cusum", "tail_run",
                                                  "longest_run", "num_runs", "t"]

    def test_unknown_test(self, data_file, capsys):
        with pytest.raises(SystemExit) as info:
            main(["test", data_file([1.0]), "--tests", "median"])
        assert info.value.code != 0


class TestCalibrate:
    def test_writes_tables(self, tmp_path, capsys):
        code, out, err = run(["calibrate", "--tests", "cusum,longest_run", "--n", "100", "--reps", "150",
                              "--table-dir", str(tmp_path)], capsys)
        assert code == 0
        assert {r["test"] for r in rows(out)} == {"cusum", "longest_run"}
        assert len(list(tmp_path.glob("*.txt"))) == 2 and "wrote" in err

    def test_hc_needs_null(self, capsys):
        code, _, err = run(["calibrate", "--tests", "hc", "--n", "100"], capsys)
        assert code != 0 and "--null-gamma" in err


def write_config(tmp_path, **overrides):
    data = dict(n=300, beta=0.2, regime="dense_s", strength_grid=[0.0, 0.45], reps=12, master_seed=5,
                tests=["sign", "cusum", "tail_run", "t"], calibration_reps=150)
    data.update(overrides)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(data))
    return str(p)


class TestPower:
    def test_workers_do_not_change_bytes(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["power", "--config", cfg, "--out", str(a), "--workers", "1"]) == 0
        assert main(["power", "--config", cfg, "--out", str(b), "--workers", "2"]) == 0
        _, err = capsys.readouterr()
        assert "strength=0.45" in err
        assert a.read_bytes() == b.read_bytes()
        assert json.loads((tmp_path / "a.meta.json").read_text())["config"]["reps"] == 12

    def test_env_workers(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("SPARSEFREE_WORKERS", "2")
        code, out, _ = run(["power", "--config", write_config(tmp_path), "--quiet"], capsys)
        assert code == 0 and out.startswith("strength,test,power,stderr,n,beta,regime,seed\n")

    def test_invalid_config_lists_fields(self, tmp_path, capsys):
        code, out, err = run(["power", "--config", write_config(tmp_path, level=1.5, reps=0)], capsys)
        assert code != 0 and out == ""
        assert "level" in err and "reps" in err

    def test_missing_config(self, tmp_path, capsys):
        code, _, err = run(["power", "--config", str(tmp_path / "none.json")], capsys)
        assert code != 0 and "cannot read" in err


class TestVaryingN:
    def test_runs(self, tmp_path, capsys):
        cfg = write_config(tmp_path, strength_grid=[0.35], tests=["sign"])
        code, out, _ = run(["varying-n", "--config", cfg, "--n-list", "100,400", "--strength", "0.35",
                            "--quiet"], capsys)
        assert code == 0
        assert [r["n"] for r in rows(out)] == ["100", "400"]

    def test_needs_n_list(self, tmp_path, capsys):
        code, _, err = run(["varying-n", "--config", write_config(tmp_path), "--quiet"], capsys)
        assert code != 0 and "n_list" in err


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sparsefree.cli", "boundary", "--gamma", "2",
                           "--beta", "0.6:0.6:0.1"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[1].startswith("0.59999999999999998,0.099999999999999978")
