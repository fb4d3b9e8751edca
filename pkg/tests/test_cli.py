import csv
import json
import os
import subprocess
import sys

import pytest

from ftdla import cli, data


def _rows(path):
    with open(path) as f:
        return list(csv.DictReader(line for line in f if not line.startswith("#")))


def _header(path):
    with open(path) as f:
        return f.readline()


def test_config_digest_and_header():
    a = cli.ExperimentConfig()
    b = cli.ExperimentConfig(seed=1)
    assert a.digest() != b.digest() and len(a.digest()) == 16
    h = cli.header(a, "explore")[0]
    assert h.startswith("ftdla ") and "command=explore" in h and f"config={a.digest()}" in h


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"trials": 17, "seed": 4}))
    args = cli.build_parser().parse_args(["faults", "--config", str(p), "--seed", "9"])
    cfg = cli.make_config(args)
    assert (cfg.trials, cfg.seed) == (17, 9)
    p.write_text(json.dumps({"bogus": 1}))
    assert cli.main(["faults", "--config", str(p)]) == cli.EXIT_ERROR


def test_invalid_inputs_exit_1(tmp_path):
    assert cli.main(["faults", "--fault-rates", "0", "1e-4", "--out-dir", str(tmp_path)]) == cli.EXIT_ERROR
    assert cli.main(["quantize", "--weights", str(tmp_path / "missing.npz"), "--out-dir", str(tmp_path)]) == 1
    assert cli.main(["faults", "--dataset", str(tmp_path / "nope"), "--out-dir", str(tmp_path)]) == 1


def test_gen_data(tmp_path):
    assert cli.main(["gen-data", "--count", "40", "--seed", "5", "--out-dir", str(tmp_path)]) == 0
    x, y = data.read_dataset(str(tmp_path / "digits"))
    assert len(y) == 40


def test_quantize_deterministic(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["quantize", "--q-scale", "7", "--out-dir", str(tmp_path / d)]) == 0
    a = (tmp_path / "a" / "model_q7.fhqm").read_bytes()
    assert a == (tmp_path / "b" / "model_q7.fhqm").read_bytes()
    from ftdla import qmodel
    m = qmodel.loads_model(a)
    assert all(q >= 7 for q in m.q.values())


def test_importance_outputs(tmp_path):
    assert cli.main(["importance", "--s-th", "0.1", "--out-dir", str(tmp_path)]) == 0
    assert _header(tmp_path / "importance.csv").startswith("# ftdla ")
    rows = _rows(tmp_path / "importance.csv")
    assert [r["layer"] for r in rows] == ["conv1", "conv2", "conv3", "fc1", "fc2"]
    assert (tmp_path / "importance.bin").stat().st_size == sum(-(-int(r["neurons"]) // 8) for r in rows)


def test_faults_with_model_and_dataset(tmp_path):
    assert cli.main(["quantize", "--out-dir", str(tmp_path), "--output", "m.fhqm"]) == 0
    assert cli.main(["gen-data", "--count", "30", "--seed", "2", "--out-dir", str(tmp_path), "--stem", "d"]) == 0
    rc = cli.main(["faults", "--model", str(tmp_path / "m.fhqm"), "--dataset", str(tmp_path / "d"),
                   "--trials", "4", "--ber", "0", "1e-3", "--out-dir", str(tmp_path)])
    assert rc == 0
    rows = _rows(tmp_path / "faults.csv")
    assert rows[0]["flips_drawn"] == "0" and int(rows[1]["flips_drawn"]) > 0
    assert rows[0]["lo"] == rows[0]["hi"] == rows[0]["acc"]


def test_sensitivity_zero_ber(tmp_path):
    assert cli.main(["sensitivity", "--ber", "0", "--trials", "2", "--out-dir", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "sensitivity.csv")
    assert len(rows) == 5 and all(float(r["score"]) == 0.0 for r in rows)
    for name in ("curve.csv", "curve.dat", "curve_0.svg"):
        assert (tmp_path / name).exists()


def test_sensitivity_ranking_stable_across_seeds(tmp_path):
    ranks = []
    for seed in (11, 12):
        d = tmp_path / str(seed)
        assert cli.main(["sensitivity", "--ber", "2e-4", "--trials", "150", "--fault-seed", str(seed),
                         "--out-dir", str(d)]) == 0
        ranks.append({r["layer"]: r for r in _rows(d / "sensitivity.csv")})
    a, b = ranks
    for x in a:
        for y in a:
            ax, ay = float(a[x]["score"]), float(a[y]["score"])
            bx, by = float(b[x]["score"]), float(b[y]["score"])
            if (ax - ay) * (bx - by) < 0:
                # order flipped: the two layers must share a CI-overlap group in both runs
                for r in (a, b):
                    assert float(r[x]["lo"]) <= float(r[y]["hi"]) and float(r[y]["lo"]) <= float(r[x]["hi"])


def test_area_table_cli(tmp_path):
    assert cli.main(["area-table", "--out-dir", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "area_table.csv")
    assert len(rows) == 544
    t = {(r["policy"], r["structure"], int(r["s"]), int(r["q_scale"])): float(r["area_units"]) for r in rows}
    for (pol, st, s, q), v in t.items():
        if pol == "configurable":
            assert v <= t[("direct", st, s, q)] + 1e-9
    assert t[("direct", "wallace", 1, 0)] > t[("configurable", "wallace", 3, 7)]


def test_report(tmp_path):
    rc = cli.main(["report", "--s-th", "0.05", "--policy", "uniform", "--dot", "64", "--out-dir", str(tmp_path)])
    d = json.load(open(tmp_path / "report.json"))
    assert d["_header"][0].startswith("ftdla ")
    assert rc == (0 if d["feasible_perf_bw"] else 2)
    assert d["perf"]["perf_ratio"] == 1.0


def test_explore_and_baselines(tmp_path):
    common = ["--trials", "60", "--outer-trials", "120", "--iter-max-step", "14", "--init-samples", "4",
              "--out-dir", str(tmp_path)]
    rc = cli.main(["explore", "--verify-best"] + common)
    best = json.load(open(tmp_path / "best.json"))
    assert best["_header"][0].startswith("ftdla ")
    log = _rows(tmp_path / "explore_log.csv")
    assert len(log) == best["evaluated"] <= 14
    assert os.path.getsize(tmp_path / "explore.svg") > 0 and (tmp_path / "pareto.csv").exists()
    if best["best"] is None:
        assert rc == cli.EXIT_INFEASIBLE
        pytest.skip("tiny budget found no feasible design")
    assert rc == (cli.EXIT_OK if best["verify_best"]["passed"] else cli.EXIT_INFEASIBLE)
    rc = cli.main(["baselines", "--best", str(tmp_path / "best.json")] + common)
    rows = _rows(tmp_path / "baselines.csv")
    names = [r["design"] for r in rows]
    assert names == ["Base", "TMR-CRT1", "TMR-CRT2", "TMR-CRT3", "TMR-ARCH", "TMR-ALG", "TMR-CL"]
    assert rc == (0 if rows[-1]["feasible"] == "1" else 2)


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "ftdla.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("ftdla ")
