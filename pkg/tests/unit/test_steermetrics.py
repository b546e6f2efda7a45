import itertools
import math

import numpy as np
import pytest

from steerability.errors import InvalidArgumentError, UndefinedTauError, ZeroRequestError
from steerability.goalspace import GoalVector
from steerability.llmrun import DecodingConfig, FilterStatus, ResponseRecord
from steerability.steermetrics import (
    binned_metrics,
    compute_metrics,
    evaluate,
    is_copy,
    kendall_tau,
    load_metrics,
    miscalibration,
    orthogonality,
    random_baseline,
    reward,
    save_metrics,
    signed_miscalibration,
    steering_error,
)
from tests.helpers import make_probe


# -----------------------------------------------------------------------------
# Core metrics
# -----------------------------------------------------------------------------

def test_steering_error_examples():
    assert steering_error([0.3, 0.4], [0.3, 0.4]) == 0.0
    assert steering_error([1, 0], [0, 1]) == pytest.approx(math.sqrt(2))
    assert steering_error([0.6, 0.2, 0.9, 0.5], [0.1, 0.2, 0.9, 0.5]) == pytest.approx(0.5)


def test_steering_error_rejects_dimension_mismatch():
    with pytest.raises(InvalidArgumentError):
        steering_error([0.1, 0.2], [0.1])


def test_miscalibration_examples():
    assert miscalibration([0, 0], [1, 0], [0.5, 0]) == pytest.approx(0.5)
    assert miscalibration([0, 0], [1, 0], [1, 0]) == 0.0
    assert miscalibration([0, 0], [1, 0], [1.0, 0.8]) == pytest.approx(0.0)


def test_miscalibration_is_magnitude_of_signed_variant():
    assert signed_miscalibration([0, 0], [0.5, 0], [0.75, 0]) == pytest.approx(-0.5)
    assert miscalibration([0, 0], [0.5, 0], [0.75, 0]) == pytest.approx(0.5)


def test_zero_request_raises():
    with pytest.raises(ZeroRequestError):
        miscalibration([0.2, 0.2], [0.2, 0.2], [0.5, 0.5])
    with pytest.raises(ZeroRequestError):
        orthogonality([0.2, 0.2], [0.2, 0.2], [0.5, 0.5])


def test_orthogonality_examples():
    value, zero_movement = orthogonality([0, 0], [1, 0], [1, 1])
    assert value == pytest.approx(1 / math.sqrt(2)) and not zero_movement
    assert orthogonality([0, 0], [1, 0], [0.4, 0])[0] == pytest.approx(0.0)


def test_copy_paste_triple():
    values = evaluate([0.3, 0.4], [0.6, 0.1], [0.3, 0.4])
    assert values.orthogonality == 0.0
    assert values.zero_movement
    assert values.miscalibration == pytest.approx(1.0)


def test_evaluate_flags_zero_request():
    values = evaluate([0.3, 0.4], [0.3, 0.4], [0.5, 0.4])
    assert values.zero_request
    assert values.miscalibration is None and values.orthogonality is None
    assert values.steering_error == pytest.approx(0.2)


def test_pythagorean_identity_and_rotation_invariance():
    rng = np.random.default_rng(7)
    for _ in range(2000):
        z0, z_star, z_hat = rng.random((3, 3))
        requested = z_star - z0
        residual = z_star - z_hat
        parallel = residual @ requested / np.linalg.norm(requested)
        orthogonal = residual - (residual @ requested / (requested @ requested)) * requested
        assert parallel ** 2 + orthogonal @ orthogonal == pytest.approx(steering_error(z_star, z_hat) ** 2, abs=1e-9)

        rotation, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        before = evaluate(z0, z_star, z_hat)
        after = evaluate(rotation @ z0, rotation @ z_star, rotation @ z_hat)
        assert after.steering_error == pytest.approx(before.steering_error, abs=1e-9)
        assert after.miscalibration == pytest.approx(before.miscalibration, abs=1e-9)
        assert after.orthogonality == pytest.approx(before.orthogonality, abs=1e-9)


def test_scale_covariance():
    rng = np.random.default_rng(3)
    z0, z_star, z_hat = rng.random((3, 4))
    base = evaluate(z0, z_star, z_hat)
    scaled = evaluate(z0, z0 + 0.5 * (z_star - z0), z0 + 0.5 * (z_hat - z0))
    assert scaled.miscalibration == pytest.approx(base.miscalibration)
    assert scaled.orthogonality == pytest.approx(base.orthogonality)


def test_all_metrics_zero_when_target_hit():
    values = evaluate([0.1, 0.9], [0.5, 0.5], [0.5, 0.5])
    assert (values.steering_error, values.miscalibration, values.orthogonality) == (0.0, 0.0, 0.0)


# -----------------------------------------------------------------------------
# Binned metrics
# -----------------------------------------------------------------------------

def test_binned_same_bin_is_exact():
    assert binned_metrics([0.5], [0.65], [0.68]).steering_error == pytest.approx(0.0)


def test_binned_adjacent_bin_error():
    assert binned_metrics([0.2], [0.35], [0.55]).steering_error == pytest.approx(0.25)


def test_binned_all_zero_deltas_are_flagged():
    values = binned_metrics([0.4, 0.4], [0.4, 0.4], [0.4, 0.4])
    assert values.steering_error == 0.0
    assert values.zero_request and values.zero_movement


# -----------------------------------------------------------------------------
# Baseline and agreement
# -----------------------------------------------------------------------------

def test_random_baseline_one_dimension_closed_form():
    targets = np.full((10, 1), 0.5)
    assert random_baseline(targets, np.random.default_rng(0), trials=20_000) == pytest.approx(0.25, abs=0.01)


def test_random_baseline_four_dimensions_in_expected_range():
    targets = np.random.default_rng(1).random((50, 4))
    median = random_baseline(targets, np.random.default_rng(2), trials=2000)
    assert 0.7 < median < 0.85


def test_random_baseline_accepts_probe_and_rejects_zero_trials():
    probe = make_probe(n_sources=2)
    assert random_baseline(probe, np.random.default_rng(0), trials=10) > 0
    with pytest.raises(InvalidArgumentError):
        random_baseline(probe, np.random.default_rng(0), trials=0)


def _brute_force_tau_b(pairs):
    concordant = discordant = ties_x = ties_y = 0
    for (x1, y1), (x2, y2) in itertools.combinations(pairs, 2):
        dx, dy = np.sign(x1 - x2), np.sign(y1 - y2)
        if dx == 0 and dy == 0:
            continue
        if dx == 0:
            ties_x += 1
        elif dy == 0:
            ties_y += 1
        elif dx == dy:
            concordant += 1
        else:
            discordant += 1
    return (concordant - discordant) / math.sqrt((concordant + discordant + ties_x) * (concordant + discordant + ties_y))


def test_kendall_tau_matches_brute_force():
    pairs = [(1, 1), (-1, -1), (0, 1), (1, -1), (-1, 0)]
    result = kendall_tau(pairs)
    assert result.tau == pytest.approx(_brute_force_tau_b(pairs))
    assert result.agreement == pytest.approx((result.tau + 1) / 2)


def test_kendall_tau_concordant_and_degenerate():
    perfect = kendall_tau([(1, 1), (2, 2), (3, 3)])
    assert perfect.tau == pytest.approx(1.0) and perfect.agreement == pytest.approx(1.0)
    with pytest.raises(UndefinedTauError):
        kendall_tau([(1, 1), (1, 2), (1, 3)])
    with pytest.raises(InvalidArgumentError):
        kendall_tau([(1, 1)])


def test_rewards_are_negated_metrics():
    assert reward("steering_error", [0, 0], [1, 0], [0.5, 0]) == pytest.approx(-0.5)
    assert reward("squared_steering_error", [0, 0], [1, 0], [0.5, 0]) == pytest.approx(-0.25)
    assert reward("miscalibration", [0, 0], [1, 0], [0.5, 0]) == pytest.approx(-0.5)
    assert reward("orthogonality", [0, 0], [1, 0], [1, 1]) == pytest.approx(-1 / math.sqrt(2))
    with pytest.raises(InvalidArgumentError):
        reward("bleu", [0], [1], [1])


# -----------------------------------------------------------------------------
# Records
# -----------------------------------------------------------------------------

def _record(item, status=FilterStatus.GROUNDED, selected=True, text=None, z_hat=None):
    return ResponseRecord(
        record_id=f"{item.item_id}#0",
        item_id=item.item_id,
        strategy="direct",
        decoding=DecodingConfig.greedy(),
        rewrite_text=text if text is not None else item.source_text,
        z_hat=z_hat or item.z0,
        filter_status=status,
        selected=selected,
    )


def test_is_copy_normalizes_whitespace():
    assert is_copy("A  b\nc.", " A b c. ")
    assert not is_copy("A b c.", "A b d.")


def test_compute_metrics_copy_paste_oracle():
    probe = make_probe(n_sources=3)
    metrics = compute_metrics([_record(item) for item in probe.items], probe)
    assert len(metrics) == 3
    for item, metric in zip(probe.items, metrics):
        assert metric.raw.steering_error == pytest.approx(np.linalg.norm(item.z_star.array - item.z0.array))
        assert metric.is_copy and metric.bleu == pytest.approx(1.0)
        assert metric.raw.zero_movement


def test_compute_metrics_filters_ungrounded_and_unselected():
    probe = make_probe(n_sources=3)
    records = [
        _record(probe.items[0], status=FilterStatus.PENDING),
        _record(probe.items[1], selected=False),
        _record(probe.items[2]),
    ]
    assert [metric.item_id for metric in compute_metrics(records, probe)] == [probe.items[2].item_id]
    assert len(compute_metrics(records, probe, include_pending=True)) == 2


def test_metrics_round_trip(tmp_path):
    probe = make_probe(n_sources=2)
    target = GoalVector(values=probe.items[0].z_star.values)
    metrics = compute_metrics([_record(probe.items[0], text="Different words here.", z_hat=target)], probe)
    save_metrics(metrics, tmp_path / "metrics.jsonl")
    loaded = load_metrics(tmp_path / "metrics.jsonl")
    assert loaded == metrics
    assert loaded[0].value("steering_error") == 0.0
