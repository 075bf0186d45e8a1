import json
import subprocess
import sys

import pytest

from parhac.cli import main
from parhac.fileio import write_points
from parhac.gen import gen_uniform


@pytest.fixture
def points(tmp_path):
    p = tmp_path / "pts.csv"
    write_points(p, gen_uniform(40, 2, 3))
    return p


def run_trace(points, tmp_path, name, *flags):
    out = tmp_path / name
    assert main(["run", str(points), "--out-trace", str(out), *flags]) == 0
    return out


def test_run_verify_stats(points, tmp_path):
    trace = run_trace(points, tmp_path, "t.jsonl", "--eps", "0.1", "--check",
                      "--out-stats", str(tmp_path / "s.json"),
                      "--out-dendrogram", str(tmp_path / "d.txt"))
    stats = json.loads((tmp_path / "s.json").read_text())
    assert "wall_time" not in stats and stats["height"] >= 6
    assert (tmp_path / "d.txt").read_text().startswith("(")
    assert main(["verify", str(points), str(trace), "--c", "1.1",
                 "--out-report", str(tmp_path / "r.json")]) == 0
    assert json.loads((tmp_path / "r.json").read_text())["ok"]
    assert main(["stats", str(points), str(trace), "--x0", "3",
                 "--out", str(tmp_path / "p.json")]) == 0
    pot = json.loads((tmp_path / "p.json").read_text())
    assert pot["height"] == stats["height"] and pot["potential"]["x0"] == 3


def test_verify_detects_tampered_trace(points, tmp_path, capsys):
    trace = run_trace(points, tmp_path, "t.jsonl", "--mode", "exact")
    lines = trace.read_text().splitlines()
    rec = json.loads(lines[10])
    rec["value"] *= 1.5
    lines[10] = json.dumps(rec)
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(lines) + "\n")
    assert main(["verify", str(points), str(bad)]) == 1
    assert "violation at step 10" in capsys.readouterr().err


def test_exit_codes_for_bad_input(points, tmp_path):
    calls = tmp_path / "calls.csv"
    calls.write_text("1,4\n2,3\n")
    assert main(["reduce-tcp", str(calls), "--kappa", "0", "--t", "1"]) == 2
    assert main(["reduce-tcp", str(calls), "--kappa", "1", "--t", "3"]) == 2
    assert main(["run", str(tmp_path / "missing.csv")]) == 2
    trunc = tmp_path / "trunc.jsonl"
    trunc.write_text("")
    assert main(["verify", str(points), str(trunc)]) == 2
    assert main(["stats", str(points), str(run_trace(points, tmp_path, "t.jsonl")),
                 "--x0", "99"]) == 2


def test_reduce_tcp_differential(tmp_path):
    calls = tmp_path / "calls.csv"
    calls.write_text("# start,end\n1,4\n2,3\n")
    rep = tmp_path / "rep.json"
    pts = tmp_path / "red.csv"
    assert main(["reduce-tcp", str(calls), "--kappa", "1", "--t", "2", "--pad", "6",
                 "--out-points", str(pts), "--out-report", str(rep), "--run-differential"]) == 0
    d = json.loads(rep.read_text())
    assert d["agree"] and d["tcp_answer"] is False and d["n"] == 6
    first = pts.read_text().splitlines()[0]
    assert first.startswith("w=216,") and len(pts.read_text().splitlines()) == 25


@pytest.mark.parametrize("family,extra", [("uniform", ["--n", "5"]), ("chain", ["--n", "4"]),
                                          ("sphere", ["--k", "2"]), ("triangle", []),
                                          ("2approx", ["--gamma", "0.3"])])
def test_gen_families(tmp_path, family, extra):
    out = tmp_path / "g.csv"
    assert main(["gen", family, "--out", str(out), *extra]) == 0
    assert main(["run", str(out), "--out-trace", str(tmp_path / "t.jsonl"), "--check"]) == 0


@pytest.mark.parametrize("linkage", ["centroid", "wards"])
def test_byte_identical_across_threads(points, tmp_path, linkage):
    a = run_trace(points, tmp_path, "a.jsonl", "--linkage", linkage, "--threads", "1")
    b = run_trace(points, tmp_path, "b.jsonl", "--linkage", linkage, "--threads", "4")
    c = run_trace(points, tmp_path, "c.jsonl", "--linkage", linkage, "--threads", "4",
                  "--index", "grid")
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()


def test_module_entry_point(points):
    res = subprocess.run([sys.executable, "-m", "parhac", "run", str(points), "--mode", "exact"],
                         capture_output=True, text=True, check=True)
    assert len(res.stdout.splitlines()) == 39
