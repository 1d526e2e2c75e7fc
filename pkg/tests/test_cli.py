import csv
import hashlib
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from aggrbench.bench import parse_reports_json
from aggrbench.cli import main
from aggrbench.features import random_features, write_binary
from aggrbench.topology import CsrGraph, GraphViews, from_edge_list, write_edge_list
from aggrbench.verify import verify_graph, verify_views

from conftest import TRIANGLE, random_coo


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def tri(tmp_path):
    p = tmp_path / "tri.el"
    write_edge_list(from_edge_list(TRIANGLE, 3), p)
    return p


def sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


def test_gen_writes_graph_and_stats(capsys, tmp_path):
    out = tmp_path / "g.el"
    code, _, err = run(capsys, "gen", "--family", "er", "--n", 300, "--density", 0.02, "--seed", 7, "-o", out)
    assert code == 0
    assert '"seed": 7' in err  # resolved config echoed
    side = json.loads((tmp_path / "g.el.stats.json").read_text())
    assert side["stats"]["num_vertices"] == 300
    first = sha(out)
    run(capsys, "gen", "--family", "er", "--n", 300, "--density", 0.02, "--seed", 7, "-o", out)
    assert sha(out) == first


def test_gen_invalid_density(capsys, tmp_path):
    code, _, err = run(capsys, "gen", "--family", "er", "--density", 1.5, "-o", tmp_path / "x")
    assert code == 2 and "density" in err


def test_unknown_flag(capsys):
    assert run(capsys, "stats", "--bogus")[0] == 2


def test_stats(capsys, tri):
    code, out, _ = run(capsys, "stats", tri)
    assert code == 0
    s = json.loads(out)
    assert s["density"] == 0.5 and s["global_clustering_coefficient"] == 1.0


def test_stats_needs_a_source(capsys, tri):
    assert run(capsys, "stats")[0] == 2
    assert run(capsys, "stats", tri, "--family", "er")[0] == 2


def test_verify_triangle(capsys, tri):
    code, out, err = run(capsys, "verify", tri)
    assert code == 0 and "PASS" in err
    assert json.loads(out)["passed"] is True


def test_verify_large_uses_cross_check(capsys, tmp_path):
    p = tmp_path / "big.el"
    write_edge_list(random_coo(np.random.default_rng(0), 5000, 0.0005, weighted=True), p)
    code, out, _ = run(capsys, "verify", p, "--feature-len", 3)
    rep = json.loads(out)
    assert code == 0 and rep["mode"] == "cross_check"
    assert {c["reference"] for c in rep["checks"]} == {"reduce"}


def test_verify_tampered_csr_is_structured_failure():
    views = GraphViews.build(from_edge_list([(0, 1), (1, 2), (2, 0), (0, 2)], 3))
    # bypass construction checks to simulate a corrupted buffer
    object.__setattr__(views.csr, "ptr", np.array([0, 2, 1, 4]))
    res = verify_views(views, np.ones((3, 2), np.float32))
    assert not res.passed
    err = res.structural_errors[0]
    assert err["format"] == "csr" and err["field"] == "row_ptr" and err["index"] == 2
    # a consistent-looking pointer that points at the wrong rows is caught too
    views = GraphViews.build(from_edge_list([(0, 1), (1, 2), (2, 0), (0, 2)], 3))
    object.__setattr__(views.csr, "ptr", np.array([0, 2, 3, 4]))
    res = verify_views(views, np.ones((3, 2), np.float32))
    assert not res.passed and res.structural_errors[0]["format"] == "csr"


def test_verify_detects_wrong_kernel(monkeypatch):
    import aggrbench.verify as v

    real = v.aggregate

    def broken(views, x, a, op="add", **kw):
        out, c = real(views, x, a, op, **kw)
        if a == "push":
            out = out.copy()
            out[0, 0] += 1.0
        return out, c

    monkeypatch.setattr(v, "aggregate", broken)
    g = from_edge_list(TRIANGLE, 3)
    res = verify_graph(g, np.ones((3, 1), np.float32), ops=("add",))
    assert not res.passed
    assert [c.abstraction for c in res.checks if not c.passed] == ["push"]


def test_bench_single_report(capsys, tri, tmp_path):
    out = tmp_path / "r.json"
    code, _, _ = run(capsys, "bench", tri, "--model", "gcn", "--abstraction", "pull", "--reps", 3, "--warmup", 0, "-o", out)
    assert code == 0
    (r,) = parse_reports_json(out.read_text())
    assert r.layer["abstraction"] == "pull" and len(r.timing["samples_ns"]) == 3


def test_bench_gat_pull_usage_error(capsys, tri):
    code, out, err = run(capsys, "bench", tri, "--model", "gat", "--abstraction", "pull")
    assert code == 2 and "usage error" in err and out == ""


def test_bench_operator_for_gin_rejected(capsys, tri):
    assert run(capsys, "bench", tri, "--model", "gin", "--op", "max")[0] == 2


def test_bench_csv_compare(capsys, tri):
    code, out, err = run(capsys, "bench", tri, "--reps", 2, "--warmup", 0, "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and [r["abstraction"] for r in rows] == ["scatter", "reduce", "pull"]
    assert "by peak memory" in err


def test_bench_features_file(capsys, tri, tmp_path):
    write_binary(random_features(3, 5, 1), tmp_path / "x.bin")
    code, out, _ = run(capsys, "bench", tri, "--abstraction", "reduce", "--features", tmp_path / "x.bin", "--reps", 1, "--warmup", 0)
    assert code == 0 and parse_reports_json(out)[0].layer["in_dim"] == 5
    write_binary(random_features(4, 5, 1), tmp_path / "bad.bin")
    assert run(capsys, "bench", tri, "--abstraction", "reduce", "--features", tmp_path / "bad.bin")[0] == 2


def test_threads_env(capsys, tri, monkeypatch):
    monkeypatch.setenv("AGGRBENCH_THREADS", "2")
    code, out, _ = run(capsys, "bench", tri, "--abstraction", "scatter", "--reps", 1, "--warmup", 0)
    assert code == 0 and parse_reports_json(out)[0].config["threads"] == 2
    monkeypatch.setenv("AGGRBENCH_THREADS", "lots")
    assert run(capsys, "bench", tri, "--abstraction", "scatter")[0] == 2


def test_sweep_csv(capsys, tmp_path):
    out = tmp_path / "s.csv"
    code, _, _ = run(
        capsys, "sweep", "--family", "er", "--n", 200, "--property", "density", "--values", "0.02,0.05",
        "--abstraction", "pull", "--reps", 1, "--warmup", 0, "--format", "csv", "-o", out,
    )
    rows = list(csv.DictReader(out.open()))
    assert code == 0 and [r["swept_value"] for r in rows] == ["0.02", "0.05"]


def test_sweep_wrong_family(capsys):
    assert run(capsys, "sweep", "--family", "er", "--property", "exponent", "--values", "2.5")[0] == 2
    assert run(capsys, "sweep", "--family", "er", "--property", "density", "--values", "a,b")[0] == 2


def test_ingest(capsys, tmp_path):
    p = tmp_path / "g.el"
    p.write_text("# small\n0 1\n1 2\n3 0\n")
    code, out, _ = run(capsys, "ingest", p, "--symmetrize", "-o", tmp_path / "norm.el")
    assert code == 0
    assert json.loads(out) == {"vertices": 4, "edges": 6, "weighted": False}
    assert (tmp_path / "norm.el").read_text().startswith("# vertices 4")


def test_ingest_small_molecule(capsys, tmp_path):
    # molecule-sized input of 18 atoms in a ring, with 7 features per atom
    p = tmp_path / "mol.el"
    p.write_text("".join(f"{i} {(i + 1) % 18}\n" for i in range(18)))
    write_binary(random_features(18, 7, 0), tmp_path / "mol.x")
    code, out, _ = run(capsys, "ingest", p, "--symmetrize", "--features", tmp_path / "mol.x")
    assert code == 0 and json.loads(out) == {"vertices": 18, "edges": 36, "weighted": False, "feature_length": 7}


def test_ingest_malformed_line(capsys, tmp_path):
    p = tmp_path / "bad.el"
    p.write_text("0 1\n1 two\n")
    code, _, err = run(capsys, "ingest", p)
    assert code == 2
    payload = json.loads(err.split("validation error: ", 1)[1])
    assert payload["index"] == 2 and "line 2" in payload["message"]


def test_ingest_missing_file(capsys, tmp_path):
    assert run(capsys, "ingest", tmp_path / "nope.el")[0] == 2


def test_console_script(tri):
    proc = subprocess.run([sys.executable, "-m", "aggrbench.cli", "ingest", str(tri)], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["edges"] == 3


def test_verify_seed_changes_features(capsys, tri):
    a = run(capsys, "verify", tri, "--op", "add", "--seed", 1)
    b = run(capsys, "verify", tri, "--op", "add", "--seed", 2)
    assert a[0] == b[0] == 0
    assert '"seed": 1' in a[2] and '"seed": 2' in b[2]
