import csv
import math
import subprocess
import sys

import pytest

from zakline import berry, cli
from zakline.errors import VanishingOverlap

FAST = ["--M", "201", "--workers", "1"]


def run(capsys, *argv):
    rc = cli.main(list(argv))
    out, err = capsys.readouterr()
    return rc, out, err


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestSingle:
    def test_reference_point(self, capsys):
        rc, out, _ = run(capsys, "single", "--t", "1", "--delta", "0.5", "--gamma", "1",
                         "--theta", "0", "--M", "1001")
        assert rc == 0
        assert "band 1 quantized to pi" in out
        assert "PT unbroken" in out
        line = next(l for l in out.splitlines() if l.startswith("band 1 wilson"))
        assert float(line.split("=")[1].split()[0]) == pytest.approx(math.pi, abs=1e-9)

    def test_hermitian_note(self, capsys):
        rc, out, _ = run(capsys, "single", "--gamma", "0", "--theta", "0", *FAST)
        assert rc == 0
        assert "Hermitian" in out
        line = next(l for l in out.splitlines() if l.startswith("band 1 derivative"))
        assert abs(float(line.split()[6].rstrip("i"))) <= 1e-8

    def test_grid_too_coarse(self, capsys):
        rc, _, err = run(capsys, "single", "--M", "2")
        assert rc == 2
        assert "grid too coarse" in err

    def test_even_M_bumped(self, capsys):
        rc, out, err = run(capsys, "single", "--M", "200", "--workers", "1")
        assert rc == 0
        assert "M=201" in err and "grid M=201" in out

    def test_numerical_failure(self, capsys):
        rc, _, err = run(capsys, "single", "--theta", "0.5pi", *FAST)
        assert rc == 3
        assert "BandCrossing" in err

    def test_method_selection(self, capsys):
        _, out, _ = run(capsys, "single", "--method", "wilson", *FAST)
        assert "wilson" in out and "derivative  gamma" not in out

    def test_csv_row(self, capsys, tmp_path):
        path = tmp_path / "one.csv"
        rc, _, _ = run(capsys, "single", "--theta", "0.3pi", "--emit-analytic",
                       "--output", str(path), *FAST)
        assert rc == 0
        rows = read_csv(path)
        assert tuple(rows[0]) == cli.CSV_COLUMNS
        assert len(rows) == 2
        assert float(rows[1][0]) == 0.3 * math.pi

    def test_fourier_model(self, capsys, tmp_path):
        cfg = tmp_path / "m.cfg"
        cfg.write_text("model=fourier dim=2\nentry=0,1,0,1,0\nentry=1,0,0,1,0\n")
        rc, out, _ = run(capsys, "single", "--model", str(cfg), *FAST)
        assert rc == 0 and "band 2" in out
        rc, _, err = run(capsys, "single", "--model", str(cfg), "--output",
                         str(tmp_path / "x.csv"), *FAST)
        assert rc == 2


class TestSweep:
    def test_reference_sweep(self, capsys, tmp_path):
        path = tmp_path / "sweep.csv"
        rc, _, err = run(capsys, "sweep", "--theta-steps", "16", "--emit-analytic",
                         "--output", str(path), *FAST)
        assert rc == 0
        rows = read_csv(path)[1:]
        assert len(rows) == 16
        for r in rows:
            broken = r[9] == "1"
            if broken:
                assert r[5:9] == ["", "", "", ""]
                assert r[1] == "nan"
            else:
                for num, ana in ((1, 5), (2, 6), (3, 7), (4, 8)):
                    gap = abs(float(r[num]) - float(r[ana]))
                    if num in (1, 3):
                        gap = min(gap, abs(gap - 2 * math.pi))
                    assert gap <= 1e-3
        assert "0 unexpected failures" in err

    def test_boundary_rows_are_expected_failures(self, capsys, tmp_path):
        # theta = pi/3 and 4pi/3 put an exceptional point on the loop
        rc, _, err = run(capsys, "sweep", "--theta-steps", "12", "--output",
                         str(tmp_path / "b.csv"), *FAST)
        assert rc == 0
        assert "[unexpected]" not in err

    def test_single_step_matches_single(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(capsys, "single", "--theta", "0.3pi", "--emit-analytic", "--output", str(a), *FAST)
        run(capsys, "sweep", "--theta-min", "0.3pi", "--theta-steps", "1", "--emit-analytic",
            "--output", str(b), *FAST)
        assert a.read_bytes() == b.read_bytes()

    def test_unwritable(self, capsys, tmp_path):
        rc, _, err = run(capsys, "sweep", "--theta-steps", "1", "--output",
                         str(tmp_path / "missing" / "x.csv"), *FAST)
        assert rc == 2 and "cannot write" in err

    def test_deterministic_and_worker_independent(self, capsys, tmp_path):
        paths = [tmp_path / f"{i}.csv" for i in range(3)]
        for p, w in zip(paths, ("1", "1", "2")):
            run(capsys, "sweep", "--theta-steps", "6", "--M", "101", "--workers", w,
                "--emit-analytic", "--output", str(p))
        assert paths[0].read_bytes() == paths[1].read_bytes() == paths[2].read_bytes()

    def test_round_trip(self, capsys, tmp_path):
        path = tmp_path / "r.csv"
        run(capsys, "sweep", "--theta-steps", "3", "--output", str(path), *FAST)
        rows = berry.sweep(berry.SshParams(), [0, 2 * math.pi / 3, 4 * math.pi / 3],
                           berry.SweepOptions(M=201))
        for line, row in zip(read_csv(path)[1:], rows):
            assert float(line[0]) == row.theta
            if row.ok:
                assert complex(float(line[1]), float(line[2])) == row.derivative[0]
                assert float(line[10]) == row.quant_res[0]

    def test_stdout_when_no_output(self, capsys):
        rc, out, _ = run(capsys, "sweep", "--theta-steps", "2", *FAST)
        assert rc == 0
        assert out.splitlines()[0] == ",".join(cli.CSV_COLUMNS)

    def test_flag_config_equivalence(self, capsys, tmp_path):
        cfg = tmp_path / "ssh.cfg"
        cfg.write_text("model=ssh t=1 delta=0.4 gamma=0.5\n")
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(capsys, "sweep", "--model", str(cfg), "--theta-steps", "4", "--output", str(a), *FAST)
        run(capsys, "sweep", "--delta", "0.4", "--gamma", "0.5", "--theta-steps", "4",
            "--output", str(b), *FAST)
        assert a.read_bytes() == b.read_bytes()

    def test_unexpected_failure_exit_4(self, capsys, tmp_path, monkeypatch):
        real = berry.analyze

        def flaky(model, M, tol, scheme, grid=None):
            if model.params.theta > 3:
                raise VanishingOverlap("synthetic")
            return real(model, M, tol, scheme, grid=grid)

        monkeypatch.setattr(berry, "analyze", flaky)
        path = tmp_path / "f.csv"
        rc, _, err = run(capsys, "sweep", "--theta-steps", "4", "--output", str(path), *FAST)
        assert rc == 4
        assert "[unexpected]" in err
        last = read_csv(path)[-1]
        assert last[1:5] == ["nan"] * 4 and last[10:] == ["nan"] * 4

    def test_fourier_model_rejected(self, capsys, tmp_path):
        cfg = tmp_path / "m.cfg"
        cfg.write_text("model=fourier dim=2 entry=0,1,0,1,0 entry=1,0,0,1,0")
        rc, _, _ = run(capsys, "sweep", "--model", str(cfg), *FAST)
        assert rc == 2


class TestCheck:
    def test_chiral(self, capsys):
        rc, out, _ = run(capsys, "check", "--gamma", "0", "--M-list", "51,101", *FAST)
        assert rc == 0
        assert "chiral symmetry present (σ₃), residual" in out
        assert "< 1e-12" in out

    def test_broken(self, capsys):
        rc, out, _ = run(capsys, "check", "--theta", "0.5pi", *FAST)
        assert rc == 0
        assert "PT-broken" in out

    def test_convergence_table_monotone(self, capsys):
        rc, out, _ = run(capsys, "check", "--theta", "0.3pi", "--method", "derivative", *FAST)
        assert rc == 0
        rows = [l.split() for l in out.splitlines() if l.strip().startswith("1 derivative")]
        assert [int(r[2]) for r in rows] == [251, 501, 1001]
        diffs = [float(r[5]) for r in rows[1:]]
        assert diffs[1] < diffs[0]

    @pytest.mark.parametrize("bad", ["1001,501", "x", "2,5"])
    def test_bad_M_list(self, capsys, bad):
        rc, _, _ = run(capsys, "check", "--M-list", bad, *FAST)
        assert rc == 2


class TestConfigErrors:
    @pytest.mark.parametrize("argv", [
        ["single", "--model", "/nonexistent/file.cfg"],
        ["single", "--delta", "1.5"],
        ["single", "--workers", "0"],
        ["single", "--tol-pt", "-1"],
        ["sweep", "--theta-steps", "0"],
    ])
    def test_exit_2(self, capsys, argv):
        rc, _, err = run(capsys, *argv)
        assert rc == 2 and err.startswith("zakline: error:")

    def test_parse_error_reports_line(self, capsys, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("model=ssh\ndelta=two\n")
        rc, _, err = run(capsys, "single", "--model", str(cfg))
        assert rc == 2 and "line 2" in err

    def test_ssh_flags_on_fourier(self, capsys, tmp_path):
        cfg = tmp_path / "m.cfg"
        cfg.write_text("model=fourier dim=2 entry=0,1,0,1,0 entry=1,0,0,1,0")
        rc, _, _ = run(capsys, "single", "--model", str(cfg), "--t", "2")
        assert rc == 2

    def test_argparse_usage(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["single", "--theta", "abc"])
        assert exc.value.code == 2
        with pytest.raises(SystemExit):
            cli.main([])


def test_format_round_trip():
    for x in (math.pi, 1 / 3, -1e-300, 2.5e300, 0.1 + 0.2):
        assert float(cli.fmt(x)) == x
    assert cli.fmt(math.nan) == "nan"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "zakline", "single", "--M", "101", "--workers", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "band 1" in proc.stdout
