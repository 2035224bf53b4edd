import io
import os

import numpy as np
import pytest

from gllsem import cli
from gllsem.gll import gll_rule


def run_cli(argv):
    out = io.StringIO()
    args = cli.build_parser().parse_args(argv)
    handlers = {"gll": cli.cmd_gll, "op-probe": cli.cmd_op_probe, "run": cli.cmd_run,
                "suite": cli.cmd_suite}
    code = handlers[args.command](args, out)
    return code, out.getvalue()


def test_gll_roundtrip():
    code, text = run_cli(["gll", "--k", "5"])
    assert code == 0
    rows = [line.split(",") for line in text.strip().splitlines()[1:]]
    nodes = np.array([float(r[1]) for r in rows])
    weights = np.array([float(r[2]) for r in rows])
    np.testing.assert_array_equal(nodes, gll_rule(5).nodes)
    np.testing.assert_array_equal(weights, gll_rule(5).weights)


def test_op_probe_is_symmetric():
    code, text = run_cli(["op-probe", "--k", "2", "--n", "2", "--bc", "neumann"])
    assert code == 0
    lines = text.strip().splitlines()
    assert lines[0].startswith("# nodes=25")
    entries = {}
    for line in lines[2:]:
        r, c, v = line.split(",")
        entries[int(r), int(c)] = float(v)
    for (r, c), v in entries.items():
        assert entries[c, r] == pytest.approx(v, abs=1e-14)
    # each row sums to zero (constants in the kernel)
    rows = np.zeros(25)
    for (r, _), v in entries.items():
        rows[r] += v
    assert np.max(np.abs(rows)) < 1e-13


def test_op_probe_problem_coefficients():
    code, text = run_cli(["op-probe", "--problem", "parabolic-table1", "--n", "1", "--k", "2"])
    assert code == 0 and "bc=dirichlet" in text


def test_parse_config():
    cfg = cli.parse_config("problem = square-neumann\nmesh=smooth  # comment\nlevels=4, 8\nk=4\n\n")
    assert cfg == {"problem": "square-neumann", "family": "smooth", "levels": (4, 8), "k": 4}
    with pytest.raises(ValueError):
        cli.parse_config("bogus=1")
    with pytest.raises(ValueError):
        cli.parse_config("k 4")


def test_run_writes_csv(tmp_path):
    cfgfile = tmp_path / "study.cfg"
    cfgfile.write_text("problem=square-dirichlet\nlevels=4,8\n")
    out = tmp_path / "out"
    code, text = run_cli(["run", "--config", str(cfgfile), "--k", "2", "--output", str(out),
                          "--gnuplot"])
    assert code == 0
    assert "time integrated" in text
    csv = (out / "square-dirichlet_k2_cartesian.csv").read_text()
    assert "# problem=square-dirichlet" in csv and "# dt=auto" in csv
    assert (out / "square-dirichlet_k2_cartesian.gp").exists()
    rows = [r for r in csv.splitlines() if not r.startswith("#")]
    assert len(rows) == 3


def test_run_reports_errors(tmp_path, capsys):
    code, _ = run_cli(["run", "--problem", "square-dirichlet", "--mesh", "annulus:mixed",
                       "--levels", "4", "--output", str(tmp_path)])
    assert code == 1
    assert "annulus" in capsys.readouterr().err


def test_suite_bands():
    assert cli.acceptance_band("k+2", 2) == (3.7, float("inf"))
    assert cli.acceptance_band("k+1", 4) == pytest.approx((4.6, 5.4))
    assert cli.acceptance_band("", 2) is None
    labels = [c.label for c in cli.suite_cases()]
    assert len(labels) == len(set(labels))


def test_suite_small(tmp_path):
    code, text = run_cli(["suite", "--only", "square-dirichlet/cartesian/k=2",
                          "--max-level", "8", "--output", str(tmp_path)])
    assert code == 0
    summary = (tmp_path / "summary.txt").read_text()
    assert "square-dirichlet/cartesian/k=2" in summary
    assert os.path.exists(tmp_path / "square-dirichlet_k2_cartesian.csv")


def test_main_entry(capsys):
    assert cli.main(["gll", "--k", "2"]) == 0
    assert capsys.readouterr().out.startswith("i,node,weight")
