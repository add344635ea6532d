from __future__ import annotations

import io
import itertools
import json

import numpy as np
import pytest

from ahp_eval.ahp import ComparisonTensor, score_tensor
from ahp_eval.backends import CountingBackend, OracleBackend, OracleProfile
from ahp_eval.cache import JudgmentCache
from ahp_eval.criteria import CriterionSet
from ahp_eval.dataset import save_dataset
from ahp_eval.errors import BackendUnavailableError, ConfigMismatchError, IncompleteTensorError, TooFewResponsesError, UnknownRunError
from ahp_eval.metrics import concordance_index
from ahp_eval.pipeline import (
    EvaluationConfig,
    enumerate_pairs,
    load_cached_tensor,
    load_run,
    request_count,
    resume,
    run_evaluation,
)

from conftest import CRITERIA, make_dataset, ordered_oracle

QUIET = EvaluationConfig(progress=False)


class TestPairs:
    def test_two(self):
        assert enumerate_pairs(2) == [(0, 1)]

    def test_eighty(self):
        pairs = enumerate_pairs(80)
        assert len(pairs) == 3160 and pairs == sorted(pairs) and all(i < j for i, j in pairs)
        assert request_count("ahp", 80, 10) == 31_600

    def test_too_few(self):
        with pytest.raises(TooFewResponsesError):
            enumerate_pairs(1)


def test_noiseless_oracle_recovers_hidden_order():
    ds = make_dataset(12)
    res = run_evaluation(ds, CRITERIA[:3], ordered_oracle(ds, 3), QUIET)
    assert list(res.scores.ranking) == list(reversed(ds.ids))
    # brute force: with a monotone judgment rule each row dominates lower-quality rows
    a = np.asarray(res.tensor.slices)
    for c, i, j in itertools.product(range(3), range(12), range(12)):
        if i > j:
            assert np.all(a[c, i] >= a[c, j])


def test_call_count_and_warm_cache(tmp_path):
    ds = make_dataset(10)
    cache = JudgmentCache(tmp_path / "cache.jsonl")
    be = CountingBackend(ordered_oracle(ds, 3))
    first = run_evaluation(ds, CRITERIA[:3], be, QUIET, cache=cache, state_dir=tmp_path / "runs")
    assert be.total == 135 and first.run.fresh_calls == 135 and first.run.complete
    be2 = CountingBackend(ordered_oracle(ds, 3))
    second = run_evaluation(ds, CRITERIA[:3], be2, QUIET, cache=JudgmentCache(tmp_path / "cache.jsonl"))
    assert be2.total == 0 and second.run.fresh_calls == 0
    np.testing.assert_array_equal(first.scores.scores, second.scores.scores)


def test_idempotent_persisted_bytes(tmp_path):
    ds = make_dataset(6)
    crit = CRITERIA[:2]
    run_evaluation(ds, crit, ordered_oracle(ds, 2), QUIET, cache=JudgmentCache(tmp_path / "c.jsonl"), state_dir=tmp_path / "runs")
    cache_bytes = (tmp_path / "c.jsonl").read_bytes()
    state = next((tmp_path / "runs").glob("*.json"))
    before = json.loads(state.read_text())
    res = run_evaluation(ds, crit, ordered_oracle(ds, 2), QUIET, cache=JudgmentCache(tmp_path / "c.jsonl"), state_dir=tmp_path / "runs")
    assert (tmp_path / "c.jsonl").read_bytes() == cache_bytes
    after = json.loads(state.read_text())
    for d in (before, after):
        d.pop("started_at"), d.pop("finished_at"), d.pop("fresh_calls")
    assert before == after and res.run.fresh_calls == 0


def _persist(tmp_path, ds, crit):
    dpath, cpath = tmp_path / "d.json", tmp_path / "crit.json"
    save_dataset(ds, dpath)
    CriterionSet(crit).save(cpath)
    return dpath, cpath


def test_interrupt_and_resume(tmp_path):
    ds = make_dataset(10)
    crit = CRITERIA[:3]
    dpath, cpath = _persist(tmp_path, ds, crit)
    state_dir, cache_path = tmp_path / "runs", tmp_path / "c.jsonl"
    failing = CountingBackend(ordered_oracle(ds, 3), fail_after=50)
    with pytest.raises(BackendUnavailableError):
        run_evaluation(ds, crit, failing, EvaluationConfig(in_flight=4, progress=False),
                       cache=JudgmentCache(cache_path), state_dir=state_dir, dataset_path=dpath, criteria_path=cpath)
    assert failing.total == 50
    run_id = next(state_dir.glob("*.json")).stem
    partial = load_run(run_id, state_dir)
    assert partial.completed_cells == 50 and not partial.complete and partial.total_cells == 135

    fresh = CountingBackend(ordered_oracle(ds, 3))
    res = resume(run_id, state_dir, fresh, cache=JudgmentCache(cache_path))
    assert fresh.total == 85 and res.run.complete
    reference = run_evaluation(ds, crit, ordered_oracle(ds, 3), QUIET)
    np.testing.assert_array_equal(res.scores.scores, reference.scores.scores)

    again = CountingBackend(ordered_oracle(ds, 3))
    resume(run_id, state_dir, again, cache=JudgmentCache(cache_path))
    assert again.total == 0


def test_resume_refuses_edited_criteria(tmp_path):
    ds = make_dataset(5)
    dpath, cpath = _persist(tmp_path, ds, CRITERIA[:2])
    res = run_evaluation(ds, CRITERIA[:2], ordered_oracle(ds, 2), QUIET, cache=JudgmentCache(tmp_path / "c.jsonl"),
                         state_dir=tmp_path / "runs", dataset_path=dpath, criteria_path=cpath)
    CriterionSet(("Something else", CRITERIA[1])).save(cpath)
    with pytest.raises(ConfigMismatchError) as ei:
        resume(res.run.run_id, tmp_path / "runs", ordered_oracle(ds, 2), cache=JudgmentCache(tmp_path / "c.jsonl"))
    assert "criteria" in ei.value.diffs


def test_resume_unknown(tmp_path):
    with pytest.raises(UnknownRunError):
        resume("deadbeef", tmp_path, ordered_oracle(make_dataset(3), 1), cache=JudgmentCache())


def test_progress_lines():
    ds = make_dataset(4)
    buf = io.StringIO()
    run_evaluation(ds, CRITERIA[:2], ordered_oracle(ds, 2), EvaluationConfig(in_flight=1), progress_stream=buf)
    lines = buf.getvalue().splitlines()
    assert "criterion 1/2, pair 6/6" in lines and "criterion 2/2, pair 6/6" in lines


def test_cached_tensor_reload(tmp_path):
    ds = make_dataset(6)
    be = ordered_oracle(ds, 2)
    cache = JudgmentCache(tmp_path / "c.jsonl")
    res = run_evaluation(ds, CRITERIA[:2], be, QUIET, cache=cache)
    tensor, records = load_cached_tensor(ds, CRITERIA[:2], be.backend_id, be.model_id, JudgmentCache(tmp_path / "c.jsonl"))
    np.testing.assert_array_equal(tensor.slices, res.tensor.slices)
    assert len(records) == 30
    with pytest.raises(IncompleteTensorError):
        load_cached_tensor(ds, CRITERIA[:3], be.backend_id, be.model_id, cache)


def test_records_reparse(tmp_path):
    from ahp_eval.judge import parse_judgment

    ds = make_dataset(5)
    res = run_evaluation(ds, CRITERIA[:2], ordered_oracle(ds, 2, noise=0.2, seed=1), QUIET)
    assert all(parse_judgment(r.raw) is r.parsed for r in res.records)


def test_literal_scale_flag():
    ds = make_dataset(5)
    res = run_evaluation(ds, CRITERIA[:1], ordered_oracle(ds, 1), EvaluationConfig(progress=False, literal_scale=True))
    a = np.asarray(res.tensor.slices[0])
    assert not res.tensor.reciprocal
    assert a[4, 0] == 5 and a[0, 4] == pytest.approx(1 / 3)


def test_rate_limiter_spacing(monkeypatch):
    from ahp_eval import pipeline

    sleeps, clock = [], [100.0]

    def fake_sleep(s):
        sleeps.append(s)
        clock[0] += s

    monkeypatch.setattr(pipeline.time, "sleep", fake_sleep)
    monkeypatch.setattr(pipeline.time, "monotonic", lambda: clock[0])
    ds = make_dataset(3)
    run_evaluation(ds, CRITERIA[:1], ordered_oracle(ds, 1), EvaluationConfig(in_flight=1, progress=False, requests_per_minute=600))
    assert sleeps == pytest.approx([0.1, 0.1])


def test_concurrency_matches_sequential():
    ds = make_dataset(9)
    be = ordered_oracle(ds, 2, noise=0.3, seed=9)
    a = run_evaluation(ds, CRITERIA[:2], be, EvaluationConfig(in_flight=1, progress=False))
    b = run_evaluation(ds, CRITERIA[:2], be, EvaluationConfig(in_flight=8, progress=False))
    np.testing.assert_array_equal(a.tensor.slices, b.tensor.slices)
    assert [r.parsed for r in a.records] == [r.parsed for r in b.records]
