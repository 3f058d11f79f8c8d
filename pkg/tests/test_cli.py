import math
import subprocess
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gapmoduli import cli
from gapmoduli.cli import HEADER, ConfigError, main, parse_config

CIRCLE = """\
# circle, lambda = mu = 1
shape.kind = circle
shape.r = 1
lame.lambda = 1
lame.mu = 1
"""
COARSE = "solver.n1 = 256\nsolver.n2 = 16\nsolver.grading = 10\n"


@pytest.fixture
def run(tmp_path, capsys):
    """Write a config, call ``main`` and return ``(code, stdout, stderr)``."""

    def _run(command, text, *extra):
        path = tmp_path / "run.cfg"
        path.write_text(text)
        code = main([command, "--config", str(path), *extra])
        out, err = capsys.readouterr()
        return code, out, err

    return _run


class TestConfig:
    def test_parse(self):
        cfg = parse_config(CIRCLE + "cell.eps = 0.04, 0.02  # two gaps\nsolver.n1 = 128\n")
        assert cfg.get("cell.eps") == [0.04, 0.02]
        assert cfg.get("solver.n1") == 128
        assert cfg.lame().mu == 1.0

    def test_canonical_round_trip(self):
        cfg = parse_config(CIRCLE + "cell.eps = 0.1, 0.03\nsolver.tol = 1e-10\n")
        text = cfg.canonical()
        assert parse_config(text).canonical() == text
        assert "cell.eps = 0.10000000000000001, 0.029999999999999999\n" in text

    @given(
        st.floats(-0.9, 100.0),
        st.floats(0.01, 100.0),
        st.lists(st.floats(1e-6, 1.0), min_size=1, max_size=6),
        st.integers(4, 5000),
    )
    @settings(max_examples=100)
    def test_round_trip_property(self, ratio, mu, eps, n1):
        values = {"lame.lambda": ratio * mu, "lame.mu": mu, "cell.eps": eps, "solver.n1": n1, "shape.kind": "circle"}
        text = cli.RunConfig(values).canonical()
        again = parse_config(text)
        assert again.values == values
        assert again.canonical() == text

    @pytest.mark.parametrize(
        "text,match",
        [
            ("shape.colour = red\n", "unknown key"),
            ("lame.mu 1\n", "expected 'key = value'"),
            ("solver.n1 = 1.5\n", "cannot parse"),
            ("lame.mu = 1\nlame.mu = 2\n", "duplicate"),
            ("shape.r = nan\n", "finite"),
            ("lame.lambda = 1\nlame.mu = 0\n", "mu > 0"),
            ("lame.lambda = -1.5\nlame.mu = 1\n", "lambda \\+ mu > 0"),
        ],
    )
    def test_rejects(self, text, match):
        with pytest.raises(ConfigError, match=match):
            parse_config(text)

    @pytest.mark.parametrize(
        "extra,match",
        [
            ("solver.n1 = 255\n", "even"),
            ("solver.grading = 0.5\n", "grading"),
            ("solver.tol = 1e-3\n", "tol"),
            ("solver.preconditioner = ilu\n", "preconditioner"),
        ],
    )
    def test_solver_validation(self, extra, match):
        with pytest.raises(ConfigError, match=match):
            parse_config(CIRCLE + extra).solver()


class TestModuli:
    def test_row(self, run):
        code, out, _ = run("moduli", CIRCLE + COARSE + "cell.eps = 0.05\n")
        assert code == 0
        fields = out.strip().split(",")
        assert len(fields) == 13
        assert float(fields[0]) == 0.05
        assert float(fields[1]) * math.sqrt(0.05) / math.pi == pytest.approx(0.85, abs=0.02)

    def test_out_file_has_header(self, run, tmp_path):
        target = tmp_path / "row.csv"
        code, _, _ = run("moduli", CIRCLE + COARSE + "cell.eps = 0.05\n", "--out", str(target))
        assert code == 0
        header, row = target.read_text().splitlines()
        assert header.split(",") == HEADER
        assert len(row.split(",")) == 13

    def test_nonpositive_mu(self, run):
        code, _, err = run("moduli", "lame.lambda = 1\nlame.mu = -1\ncell.eps = 0.05\n")
        assert code == 1
        assert "mu > 0" in err

    def test_under_resolved(self, run):
        code, _, err = run("moduli", CIRCLE + "solver.n1 = 32\nsolver.n2 = 16\nsolver.grading = 1\ncell.eps = 0.005\n")
        assert code == 2
        assert "min-gap-cell rule" in err

    def test_needs_one_gap(self, run):
        code, _, err = run("moduli", CIRCLE + "cell.eps = 0.05, 0.02\n")
        assert code == 1
        assert "exactly one" in err

    def test_missing_config(self, capsys, tmp_path):
        assert main(["moduli", "--config", str(tmp_path / "absent.cfg")]) == 1
        assert "cannot read config" in capsys.readouterr().err


class TestSweep:
    def test_two_gaps_rejected(self, run):
        code, _, err = run("sweep", CIRCLE + "cell.eps = 0.04, 0.02\n")
        assert code == 1
        assert "need >=3 points to fit" in err

    def test_order_rejected(self, run):
        code, _, err = run("sweep", CIRCLE + "cell.eps = 0.01, 0.02, 0.04\n")
        assert code == 1
        assert "decreasing" in err

    def test_deterministic_bytes(self, run, tmp_path):
        text = CIRCLE + COARSE + "cell.eps = 0.04, 0.02, 0.01\n"
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run("sweep", text, "--out", str(a))
        run("sweep", text, "--out", str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_failed_row_reported(self, run, tmp_path):
        target = tmp_path / "s.csv"
        text = CIRCLE + "solver.n1 = 256\nsolver.n2 = 16\nsolver.grading = 1\ncell.eps = 0.04, 0.02, 0.01, 0.0001\n"
        code, _, err = run("sweep", text, "--out", str(target))
        assert code == 3
        lines = target.read_text().splitlines()
        assert lines[0].split(",") == HEADER + ["status"]
        assert lines[4].endswith(",FAILED")
        assert "FAIL rows_ok" in err


@pytest.fixture(scope="module")
def sweeps(tmp_path_factory):
    base = tmp_path_factory.mktemp("sweeps")
    shapes = {
        "circle": "shape.kind = circle\n",
        "mconvex": "shape.kind = mconvex\nshape.m = 4\n",
    }
    out = {}
    for name, shape in shapes.items():
        cfg = base / f"{name}.cfg"
        cfg.write_text(shape + "lame.lambda = 1\nlame.mu = 1\ncell.eps = 0.04, 0.02, 0.01, 0.005\n")
        csv = base / f"{name}.csv"
        proc = subprocess.run(
            [sys.executable, "-m", "gapmoduli", "sweep", "--config", str(cfg), "--out", str(csv)],
            capture_output=True,
            text=True,
        )
        out[name] = (proc.returncode, csv.read_text(), proc.stderr)
    return out


class TestSweepDefaults:
    """The regression sweeps at the default discretisation."""

    @staticmethod
    def summary(text):
        last = text.splitlines()[-1]
        assert last.startswith("# ")
        return {k: float(v) for k, v in (kv.split("=") for kv in last[2:].split())}

    def test_circle_slope(self, sweeps):
        _, text, _ = sweeps["circle"]
        s = self.summary(text)
        assert -0.55 <= s["slope_E1"] <= -0.45
        assert s["spread_res1"] <= 2.5 and s["spread_res2"] <= 2.5

    @pytest.mark.xfail(strict=True, reason="extensional coefficient 0.93 at eps = 0.005 misses the 5% window")
    def test_circle_exit(self, sweeps):
        code, _, _ = sweeps["circle"]
        assert code == 0

    def test_circle_only_e2_coefficient_fails(self, sweeps):
        code, _, err = sweeps["circle"]
        fails = [line.split()[1] for line in err.splitlines() if line.startswith("FAIL")]
        assert fails == ["coef_E2"]
        assert code == 3

    def test_mconvex(self, sweeps):
        code, text, err = sweeps["mconvex"]
        assert code == 0, err
        assert -0.78 <= self.summary(text)["slope_E1"] <= -0.72

    def test_rows(self, sweeps):
        _, text, _ = sweeps["circle"]
        rows = [line.split(",") for line in text.splitlines()[1:-1]]
        assert [float(r[0]) for r in rows] == [0.04, 0.02, 0.01, 0.005]
        assert all(r[-1] == "OK" and len(r) == 14 for r in rows)


class TestAuxcheck:
    def test_circle(self, run):
        code, out, _ = run("auxcheck", "lame.lambda = 1\nlame.mu = 1\naux.m = 2\n")
        assert code == 0
        ident = float(out.split()[0].split("=")[1])
        assert ident <= 1e-12

    def test_auxetic_m6(self, run):
        code, _, _ = run("auxcheck", "lame.lambda = -0.5\nlame.mu = 1\naux.m = 6\n", "--seed", "17")
        assert code == 0

    def test_ellipticity(self, run):
        code, _, err = run("auxcheck", "lame.lambda = -1.5\nlame.mu = 1\n")
        assert code == 1
        assert "lambda + mu > 0" in err

    def test_bad_seed(self, run):
        code, _, err = run("auxcheck", "lame.lambda = 1\nlame.mu = 1\n", "--seed", "-1")
        assert code == 1


class TestShape:
    @pytest.mark.parametrize("f", [0.5, 0.6])
    def test_polygons(self, run, tmp_path, f):
        target = tmp_path / "poly.csv"
        code, _, err = run("shape", f"shape.f = {f}\nshape.m = 4\n", "--out", str(target))
        assert code == 0
        lines = target.read_text().splitlines()
        assert lines[0] == "shape,x,y"
        kinds = {line.split(",")[0] for line in lines[1:]}
        assert kinds == {"vigdergauz", "mconvex"}
        assert "max_radial_deviation=" in err

    def test_no_bracket(self, run):
        code, _, err = run("shape", "shape.f = 0.9\nshape.m = 4\n")
        assert code == 2
        assert "vigdergauz" in err

    def test_fraction_range(self, run):
        code, _, _ = run("shape", "shape.f = 1.2\n")
        assert code == 1


class TestIntegral:
    def test_table(self, run):
        code, out, _ = run("integral", "integral.m = 2\nintegral.kappa0 = 1\nintegral.eps = 1e-4, 1e-5\nintegral.s = 0.5\n")
        assert code == 0
        header, first, second = out.splitlines()
        assert header == "eps,numeric,leading,residual"
        assert float(first.split(",")[1]) == pytest.approx(200 * math.atan(50), rel=1e-12)
        assert len(second.split(",")) == 4

    def test_domain(self, run):
        code, _, _ = run("integral", "integral.kappa0 = -1\nintegral.eps = 1e-4\n")
        assert code == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "gapmoduli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "auxcheck" in proc.stdout
