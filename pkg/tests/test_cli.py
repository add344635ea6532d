from __future__ import annotations

import csv
import hashlib
import json
import re

import pytest

from ahp_eval.backends import FixtureBackend
from ahp_eval.cli import main, parse_sizes, resolve_config, build_parser
from ahp_eval.dataset import save_dataset

from conftest import CRITERIA, make_dataset, ordered_oracle


def calls(out: str) -> int:
    return int(re.search(r"^(\d+) backend calls$", out, re.M).group(1))


@pytest.fixture
def setup(tmp_path):
    def make(n=20, k=3, truth="ranking", noise=0.0):
        ds = make_dataset(n, truth=truth)
        dpath = tmp_path / "data.json"
        save_dataset(ds, dpath)
        prof = tmp_path / "oracle.json"
        prof.write_text(json.dumps(ordered_oracle(ds, k, noise=noise).profile.to_json()))
        cpath = tmp_path / "criteria.json"
        cpath.write_text(json.dumps(list(CRITERIA[:k])))
        base = ["--dataset", str(dpath), "--out", str(tmp_path / "out"), "--quiet"]
        oracle = ["--backend", "oracle", "--oracle-profile", str(prof)]
        return ds, dpath, cpath, base, oracle

    return make


def test_evaluate_end_to_end_and_warm_cache(setup, tmp_path, capsys):
    ds, dpath, cpath, base, oracle = setup()
    before = hashlib.sha256(dpath.read_bytes()).hexdigest()
    assert main(["evaluate", *base, *oracle, "--criteria", str(cpath)]) == 0
    out = capsys.readouterr().out
    assert calls(out) == 570
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["metrics"]["ci"] == 1.0
    assert report["config"]["backend"] == "oracle" and "config_digest" in report
    assert (tmp_path / "out" / "report_histogram.csv").exists()

    assert main(["evaluate", *base, *oracle, "--criteria", str(cpath)]) == 0
    out = capsys.readouterr().out
    assert calls(out) == 0
    again = json.loads((tmp_path / "out" / "report.json").read_text())
    for d in (report, again):
        d.pop("created_at"), d.pop("backend_calls")
    assert again == report
    assert hashlib.sha256(dpath.read_bytes()).hexdigest() == before


def test_evaluate_generates_criteria_when_missing(setup, tmp_path, capsys):
    _, _, _, base, oracle = setup(k=1)
    assert main(["evaluate", *base, *oracle, "--m", "4", "--k", "1"]) == 0
    crit = json.loads((tmp_path / "out" / "criteria.json").read_text())
    assert crit["provenance"] == "generated" and len(crit["criteria"]) == 1


def test_dry_run_counts_full_scale(tmp_path, capsys):
    ds = make_dataset(80)
    save_dataset(ds, tmp_path / "d.json")
    (tmp_path / "c.json").write_text(json.dumps(list(CRITERIA)))
    rc = main(["evaluate", "--dataset", str(tmp_path / "d.json"), "--criteria", str(tmp_path / "c.json"),
               "--dry-run", "--out", str(tmp_path / "o"), "--quiet", "--in-flight", "16"])
    assert rc == 0 and calls(capsys.readouterr().out) == 31_600
    assert not (tmp_path / "o" / "cache.jsonl").exists()


def test_gen_criteria(setup, tmp_path, capsys):
    _, _, cpath, base, oracle = setup()
    assert main(["gen-criteria", *base, *oracle, "--m", "5", "--k", "1"]) == 0
    first = (tmp_path / "out" / "criteria.json").read_bytes()
    assert calls(capsys.readouterr().out) == 21  # 20 ordered pairs and one summary
    assert main(["gen-criteria", *base, *oracle, "--m", "5", "--k", "1"]) == 0
    assert (tmp_path / "out" / "criteria.json").read_bytes() == first
    capsys.readouterr()
    assert main(["gen-criteria", *base, *oracle, "--criteria", str(cpath)]) == 0
    out = capsys.readouterr().out
    assert "generation skipped" in out and calls(out) == 0


def test_baseline_pairwise(setup, tmp_path, capsys):
    _, _, _, base, oracle = setup(k=1)
    assert main(["baseline", "--method", "pairwise", *base, *oracle]) == 0
    assert calls(capsys.readouterr().out) == 190
    rep = json.loads((tmp_path / "out" / "baseline_pairwise.json").read_text())
    assert rep["metrics"]["ci"] == 1.0


def test_cefr_on_ranking_dataset_exit_code(setup, capsys):
    _, _, _, base, oracle = setup(k=1)
    assert main(["baseline", "--method", "cefr-level", *base, *oracle]) == 5


def test_scoring_with_fixture_emits_histogram(setup, tmp_path, capsys):
    _, _, _, base, _ = setup(k=1)
    FixtureBackend(by_task={"score": "Score: 70/100"}).save(tmp_path / "fixtures.json")
    assert main(["baseline", "--method", "scoring", *base, "--backend", "fixture", "--fixtures", str(tmp_path)]) == 0
    with (tmp_path / "out" / "baseline_scoring_histogram.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["bin_low", "bin_high", "count"] and sum(int(r[2]) for r in rows[1:]) == 20


def test_ablate(setup, tmp_path, capsys):
    _, _, _, base, oracle = setup(n=8, k=10)
    cpath = tmp_path / "criteria10.json"
    cpath.write_text(json.dumps(list(CRITERIA)))
    assert main(["ablate", *base, *oracle, "--criteria", str(cpath), "--sizes", "1-10"]) == 6
    assert "run `ahp-eval evaluate` first" in capsys.readouterr().err
    assert main(["evaluate", *base, *oracle, "--criteria", str(cpath)]) == 0
    capsys.readouterr()
    assert main(["ablate", *base, *oracle, "--criteria", str(cpath), "--sizes", "1-10"]) == 0
    assert calls(capsys.readouterr().out) == 0
    with (tmp_path / "out" / "ablation.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 10 and list(rows[0]) == ["subset_size", "min", "q1", "mean", "q3", "max"]
    doc = json.loads((tmp_path / "out" / "ablation.json").read_text())
    assert [r["n_subsets"] for r in doc["results"]] == [10, 45, 120, 210, 252, 210, 120, 45, 10, 1]
    assert main(["ablate", *base, *oracle, "--criteria", str(cpath), "--sizes", "11"]) == 2


def test_metrics_command(setup, tmp_path, capsys):
    ds, _, _, base, _ = setup()
    scores = tmp_path / "s.json"
    scores.write_text(json.dumps({rid: i for i, rid in enumerate(ds.ids)}))
    assert main(["metrics", *base, "--scores", str(scores)]) == 0
    assert json.loads((tmp_path / "out" / "metrics.json").read_text())["ci"] == 1.0
    scores.write_text(json.dumps({"r00": 1}))
    assert main(["metrics", *base, "--scores", str(scores)]) == 4


class TestConfig:
    def test_flags_override_file(self, tmp_path):
        cfgf = tmp_path / "cfg.json"
        cfgf.write_text(json.dumps({"in_flight": 9, "seed": 3, "out": str(tmp_path / "x")}))
        args = build_parser().parse_args(["evaluate", "--config", str(cfgf), "--seed", "5"])
        cfg = resolve_config(args)
        assert cfg["in_flight"] == 9 and cfg["seed"] == 5 and cfg["cache"].endswith("cache.jsonl")

    def test_secret_rejected(self, tmp_path, capsys):
        cfgf = tmp_path / "cfg.json"
        cfgf.write_text(json.dumps({"api_key": "sk-nope"}))
        assert main(["evaluate", "--config", str(cfgf), "--dataset", "x"]) == 2

    def test_missing_backend(self, setup, capsys):
        _, _, cpath, base, _ = setup()
        assert main(["evaluate", *base, "--criteria", str(cpath)]) == 2

    def test_llm_without_key(self, setup, capsys, monkeypatch):
        monkeypatch.delenv("AHP_JUDGE_API_KEY", raising=False)
        _, _, cpath, base, _ = setup()
        assert main(["evaluate", *base, "--criteria", str(cpath), "--backend", "llm"]) == 2

    def test_conflicting_backend_options(self, setup, tmp_path, capsys):
        _, _, cpath, base, oracle = setup()
        rc = main(["evaluate", *base, *oracle, "--criteria", str(cpath), "--fixtures", str(tmp_path)])
        assert rc == 2

    def test_bad_dataset(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{\"question\": ")
        assert main(["evaluate", "--dataset", str(bad), "--dry-run", "--out", str(tmp_path)]) == 4

    def test_backend_failure_exit_code(self, setup, tmp_path, capsys):
        _, _, cpath, base, _ = setup()
        FixtureBackend(by_task={}).save(tmp_path / "fixtures.json")
        rc = main(["evaluate", *base, "--criteria", str(cpath), "--backend", "fixture", "--fixtures", str(tmp_path)])
        assert rc == 3

    def test_sizes(self):
        assert parse_sizes("1-3,5", 10) == [1, 2, 3, 5]
        assert parse_sizes(None, 3) == [1, 2, 3]
