"""CLI entry points, file formats, and exit codes."""

from __future__ import annotations

import json

import pytest

from skewivm.cli import main
from skewivm.datafiles import load_database, parse_update_line
from skewivm.errors import EngineError, MissingRelationError
from skewivm.query import parse_query
from skewivm.storage import Interner


@pytest.fixture
def demo(tmp_path):
    (tmp_path / "R.csv").write_text("a1,b1\na1,b2\na2,b1\n")
    (tmp_path / "S.csv").write_text("b1,c1\nb2,c1\nb2,c2\n")
    return tmp_path


QUERY = "Q(A,C) = R(A,B), S(B,C)."


# ---------------------------------------------------------------------------
# data files
# ---------------------------------------------------------------------------


def test_load_database_plain(demo):
    q = parse_query(QUERY)
    interner = Interner()
    db = load_database(q, demo, interner)
    assert len(db["R"]) == 3 and len(db["S"]) == 3
    assert all(m == 1 for m in db["R"].values())


def test_load_database_header_and_mult(tmp_path):
    (tmp_path / "R.csv").write_text("A,B,__mult\nx,y,4\n")
    (tmp_path / "S.csv").write_text("B,C\ny,z\n")
    q = parse_query(QUERY)
    db = load_database(q, tmp_path, Interner())
    assert list(db["R"].values()) == [4]


def test_load_database_mult_without_header(tmp_path):
    (tmp_path / "R.csv").write_text("x,y,2\n")
    (tmp_path / "S.csv").write_text("y,z\n")
    db = load_database(parse_query(QUERY), tmp_path, Interner())
    assert list(db["R"].values()) == [2]


def test_load_database_occurrence_suffix(tmp_path):
    (tmp_path / "R.0.csv").write_text("x,y\n")
    q = parse_query("Q(A) = R(A,B).")
    db = load_database(q, tmp_path, Interner())
    assert len(db["R"]) == 1


def test_load_database_missing(tmp_path):
    with pytest.raises(MissingRelationError):
        load_database(parse_query(QUERY), tmp_path, Interner())


def test_update_line_parsing():
    q = parse_query(QUERY)
    arities = {"R": 2, "S": 2}
    interner = Interner()
    assert parse_update_line("+ R, a, b", 1, arities, interner)[0] == "R"
    sym, row, m = parse_update_line("-S,b,c,2", 2, arities, interner)
    assert (sym, m) == ("S", -2)
    assert parse_update_line("# comment", 3, arities, interner) is None
    assert parse_update_line("", 4, arities, interner) is None
    with pytest.raises(EngineError):
        parse_update_line("R, a, b", 5, arities, interner)
    with pytest.raises(MissingRelationError):
        parse_update_line("+ Z, a", 6, arities, interner)


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def test_analyze_report(capsys):
    rc = main(["analyze", "--query", QUERY, "--json"])
    out = json.loads(capsys.readouterr().out)
    assert rc == 0
    assert out["hierarchical"] and not out["free_connex"] and not out["q_hierarchical"]
    assert out["delta_index"] == 1 and out["static_width"] == 2
    assert out["dynamic_width"] == 1 and out["kappa"] == 1 and out["xi_root"] == 2
    assert out["plan"][0]["trees"]


def test_analyze_full_single_atom(capsys):
    rc = main(["analyze", "--query", "Q(A,B) = R(A,B).", "--json"])
    out = json.loads(capsys.readouterr().out)
    assert rc == 0
    assert out["q_hierarchical"] and out["static_width"] == 1 and out["dynamic_width"] == 0


def test_analyze_non_hierarchical_exit_2(capsys):
    rc = main(["analyze", "--query", "Q(A) = R(A,B), S(B,C), T(C).", "--json"])
    out = json.loads(capsys.readouterr().out)
    assert rc == 2
    assert out["hierarchical"] is False and out["violating_pair"] == ["B", "C"]


def test_analyze_syntax_error_exit_1(capsys):
    assert main(["analyze", "--query", "Q(A = R(A).", "--json"]) == 1


def test_analyze_dot_output(tmp_path, capsys):
    dot = tmp_path / "out.dot"
    rc = main(["analyze", "--query", QUERY, "--dot", str(dot), "--json"])
    capsys.readouterr()
    assert rc == 0
    text = dot.read_text()
    assert "digraph" in text and "free_top" in text and "style=dashed" in text


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def test_run_static_verify_and_enumerate(demo, capsys):
    rc = main(["run", "--query", QUERY, "--data", str(demo), "--epsilon", "0.5",
               "--verify", "--enumerate", "--sorted"])
    out = capsys.readouterr().out.strip().splitlines()
    assert rc == 0
    assert out == ["a1,c1,2", "a1,c2,1", "a2,c1,1"]


def test_run_updates_with_verify(demo, tmp_path, capsys):
    upd = tmp_path / "u.txt"
    upd.write_text("+ R, a3, b1\n- S, b2, c2\n+ S, b1, c9, 2\n")
    rc = main(["run", "--query", QUERY, "--data", str(demo), "--updates", str(upd),
               "--verify", "--checkpoint-every", "1", "--enumerate", "--sorted"])
    out = capsys.readouterr().out.strip().splitlines()
    assert rc == 0
    assert "a3,c9,2" in out and "a1,c2,1" not in out


def test_run_over_delete_exit_4(demo, tmp_path, capsys):
    upd = tmp_path / "u.txt"
    upd.write_text("- R, a1, b1, 5\n")
    rc = main(["run", "--query", QUERY, "--data", str(demo), "--updates", str(upd)])
    capsys.readouterr()
    assert rc == 4


def test_run_sorted_enumeration_deterministic(demo, capsys):
    args = ["run", "--query", QUERY, "--data", str(demo), "--enumerate", "--sorted"]
    main(args)
    first = capsys.readouterr().out
    main(args)
    second = capsys.readouterr().out
    assert first == second


def test_run_summary_json(demo, capsys):
    rc = main(["run", "--query", QUERY, "--data", str(demo), "--json"])
    out = json.loads(capsys.readouterr().out)
    assert rc == 0
    assert out["n"] == 6 and out["mode"] == "static" and out["distinct_results"] == 3


def test_run_emits_forest_dot(demo, tmp_path, capsys):
    dot = tmp_path / "forest.dot"
    rc = main(["run", "--query", QUERY, "--data", str(demo), "--dot", str(dot), "--json"])
    capsys.readouterr()
    assert rc == 0
    assert "xH_B" in dot.read_text()


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def test_bench_csv_shape(capsys):
    rc = main(["bench", "--query", QUERY, "--bench-sizes", "64,128",
               "--epsilon-grid", "0.5", "--seed", "1"])
    out = capsys.readouterr().out.strip().splitlines()
    assert rc == 0
    assert out[0].startswith("n,epsilon,max_per_update_ops")
    assert len(out) == 3
    n_col = [int(line.split(",")[0]) for line in out[1:]]
    assert n_col == sorted(n_col)


def test_bench_deterministic_for_fixed_seed(capsys):
    args = ["bench", "--query", QUERY, "--bench-sizes", "64",
            "--epsilon-grid", "0.5", "--seed", "7"]
    main(args)
    first = capsys.readouterr().out
    main(args)
    second = capsys.readouterr().out
    assert first == second


def test_run_empty_update_file_with_verify(demo, tmp_path, capsys):
    upd = tmp_path / "empty.txt"
    upd.write_text("# nothing\n\n")
    rc = main(["run", "--query", QUERY, "--data", str(demo), "--updates", str(upd),
               "--verify", "--json"])
    out = json.loads(capsys.readouterr().out)
    assert rc == 0 and out["updates_applied"] == 0 and out["mode"] == "dynamic"
