import numpy as np
import pytest

from steerability.judge import (
    JudgeClient,
    ReviewSession,
    apply_decisions,
    build_review_queue,
    groundedness_counts,
    judge_responses,
)
from steerability.llmrun import FilterStatus, RewriteClient, run_probe
from steerability.llmrun.mock_server import CopyPasteRewriter, ScriptedRewriter, create_mock_app
from steerability.steermetrics import compute_metrics
from tests.helpers import make_probe

pytestmark = pytest.mark.integration

YES_JUDGE = '{"answer": "Yes", "rationale": "Same people, place and event."}'


async def _grounded(records, probe, make_client):
    judge_app = create_mock_app(lambda prompt: YES_JUDGE)
    return await judge_responses(records, probe, make_client(JudgeClient, judge_app))


async def test_oracle_rewriter_has_zero_steering_error(make_client, tmp_path):
    probe = make_probe(n_sources=6, n_active=2)
    rewrites = {item.source_text: f"Oracle rewrite number {index}." for index, item in enumerate(probe.items)}
    targets = {rewrites[item.source_text]: item.z_star for item in probe.items}
    app = create_mock_app(ScriptedRewriter(rewrites))
    records = await run_probe(probe, make_client(RewriteClient, app), goal_mapper=targets.__getitem__)

    verdicts = await _grounded(records, probe, make_client)
    decisions = ReviewSession(tmp_path / "decisions.jsonl").finalize(verdicts)
    metrics = compute_metrics(apply_decisions(records, decisions), probe)

    assert len(metrics) == len(probe.items)
    for record in metrics:
        assert record.raw.steering_error == 0.0
        assert record.raw.miscalibration == 0.0
        assert record.raw.orthogonality == 0.0
        assert not record.is_copy


async def test_copy_paste_rewriter_never_moves(make_client, tmp_path):
    probe = make_probe(n_sources=6, n_active=3)
    sources = {item.source_text: item.z0 for item in probe.items}
    app = create_mock_app(CopyPasteRewriter(sources))
    records = await run_probe(probe, make_client(RewriteClient, app), goal_mapper=sources.__getitem__)

    verdicts = await _grounded(records, probe, make_client)
    decisions = ReviewSession(tmp_path / "decisions.jsonl").finalize(verdicts)
    assert groundedness_counts(decisions)["grounded"] == len(probe.items)
    metrics = compute_metrics(apply_decisions(records, decisions), probe)

    assert len(metrics) == len(probe.items)
    for item, record in zip(probe.items, metrics):
        assert record.raw.zero_movement
        assert record.raw.miscalibration == pytest.approx(1.0)
        assert record.raw.orthogonality == 0.0
        assert record.raw.steering_error == pytest.approx(np.linalg.norm(item.z_star.array - item.z0.array))
        assert record.is_copy and record.bleu == pytest.approx(1.0)


async def test_rejected_rewrites_do_not_reach_metrics(make_client, tmp_path):
    probe = make_probe(n_sources=4, n_active=1)
    sources = {item.source_text: item.z0 for item in probe.items}
    records = await run_probe(
        probe, make_client(RewriteClient, create_mock_app(CopyPasteRewriter(sources))), goal_mapper=sources.__getitem__
    )
    doubted = probe.items[0].source_text
    judge_app = create_mock_app(
        lambda prompt: '{"answer": "No", "rationale": "x"}' if doubted in prompt else YES_JUDGE
    )
    verdicts = await judge_responses(records, probe, make_client(JudgeClient, judge_app))
    queue = build_review_queue(verdicts, np.random.default_rng(0))
    assert queue[0].answer == "No"

    decisions = ReviewSession(tmp_path / "decisions.jsonl").finalize(verdicts)
    judged = apply_decisions(records, decisions)
    assert judged[0].filter_status == FilterStatus.REJECTED
    metrics = compute_metrics(judged, probe)
    assert [record.item_id for record in metrics] == [item.item_id for item in probe.items[1:]]
