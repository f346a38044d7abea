import json
from pathlib import Path

import pytest

from ikform.cli import build_parser, main

DEMOS = Path(__file__).resolve().parents[1] / "demos" / "problems"


def test_bench_2d_writes_csv(tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert main(["bench", "2d", "--n", "4", "--targets", "2", "--seed", "7", "--methods", "old,new",
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("experiment,n_links")
    assert len(lines) == 5
    assert "success" in capsys.readouterr().err


def test_bench_stability_json_stdout(capsys):
    assert main(["bench", "stability", "--trials", "3", "--format", "json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert len(rows) == 6


def test_check_gradients(capsys):
    assert main(["check", "gradients", "--points", "3"]) == 0
    assert capsys.readouterr().out.count("ok") == 4


@pytest.mark.parametrize("method", ["old", "new", "sampling"])
def test_solve_problem_file(method, capsys):
    code = main(["solve", "--problem", str(DEMOS / "planar6.json"), "--method", method, "--seed", "1"])
    out = json.loads(capsys.readouterr().out)
    assert out["method"] == method
    assert code == (0 if out["status"] == "solved" else 2)
    if out["status"] == "solved":
        assert out["max_violation"] <= 1e-8


def test_solver_flags_and_options_file(tmp_path, capsys):
    opts = tmp_path / "o.json"
    opts.write_text(json.dumps({"max_outer": 5}))
    main(["solve", "--problem", str(DEMOS / "planar6.json"), "--method", "old", "--options", str(opts),
          "--feasibility-tol", "1e-9"])
    assert json.loads(capsys.readouterr().out)["outer_iterations"] <= 5


def test_bad_arguments():
    parser = build_parser()
    with pytest.raises(SystemExit):
        parser.parse_args(["bench", "2d", "--n", "four"])
    with pytest.raises(SystemExit):
        parser.parse_args(["bench", "2d", "--methods", "magic"])


def test_missing_problem_file_reports_error(capsys):
    assert main(["solve", "--problem", "/nonexistent/p.json"]) == 1
    assert "error" in capsys.readouterr().err
