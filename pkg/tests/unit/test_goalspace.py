import numpy as np
import pytest
from pydantic import ValidationError

from steerability.errors import (
    DegenerateDimensionError,
    InsufficientSeedsError,
    MetricError,
    OutOfRangeError,
    UnknownDimensionError,
)
from steerability.goalspace import (
    DeltaBin,
    GoalDimension,
    GoalSpaceConfig,
    GoalVector,
    default_config,
    denormalize,
    discretize_delta,
    discretize_vector,
    fit_normalization,
    load_config,
    map_to_goalspace,
    normalize,
    save_config,
    subspace,
)
from steerability.textmetrics import RawMetricValue
from tests.helpers import make_text


def test_fit_normalization_uses_linear_quantiles():
    config = fit_normalization({"text_length": list(range(40))})
    dimension = config.get("text_length")
    assert dimension.metric == "word_count"
    assert dimension.raw_min == pytest.approx(0.975)
    assert dimension.raw_max == pytest.approx(38.025)


def test_fit_normalization_degenerate_dimension():
    with pytest.raises(DegenerateDimensionError):
        fit_normalization({"formality": [50.0] * 40})


def test_fit_normalization_needs_enough_seeds():
    with pytest.raises(InsufficientSeedsError):
        fit_normalization({"formality": list(range(10))})


def test_fit_normalization_unknown_dimension():
    with pytest.raises(UnknownDimensionError):
        fit_normalization({"sentiment": list(range(40))})


def test_fit_normalization_accepts_raw_metric_values():
    raws = [RawMetricValue("formality", float(value)) for value in range(40)]
    assert fit_normalization({"formality": raws}).get("formality").raw_min == pytest.approx(0.975)


def test_normalize_clips_outside_bounds():
    config = GoalSpaceConfig(dimensions=[GoalDimension(id="text_length", metric="word_count", raw_min=10, raw_max=20)])
    assert normalize(RawMetricValue("text_length", 15), config) == pytest.approx(0.5)
    assert normalize(RawMetricValue("text_length", 5), config) == 0.0
    assert normalize(RawMetricValue("text_length", 25), config) == 1.0


def test_normalize_unknown_dimension():
    with pytest.raises(UnknownDimensionError):
        normalize(RawMetricValue("sentiment", 1.0), default_config())


def test_normalize_is_monotone():
    config = default_config()
    raws = np.linspace(0, 2000, 50)
    values = [normalize(RawMetricValue("text_length", raw), config) for raw in raws]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_denormalize_inverts_normalize_inside_bounds():
    config = default_config()
    raw = denormalize("formality", 0.25, config)
    assert normalize(RawMetricValue("formality", raw), config) == pytest.approx(0.25)
    with pytest.raises(OutOfRangeError):
        denormalize("formality", 1.5, config)


def test_map_to_goalspace_is_deterministic_and_in_unit_cube():
    text = make_text(150, seed=11)
    config = default_config()
    first = map_to_goalspace(text, config)
    second = map_to_goalspace(text, config)
    assert first == second
    assert len(first) == len(config)
    assert all(0.0 <= value <= 1.0 for value in first.values)


def test_map_to_goalspace_reports_failing_dimension():
    with pytest.raises(MetricError) as excinfo:
        map_to_goalspace(make_text(20, seed=1), default_config())
    assert excinfo.value.dimension == "textual_diversity"


def test_map_to_goalspace_without_validity_floor_scores_short_text():
    vector = map_to_goalspace(make_text(20, seed=1), default_config(), enforce_validity_floor=False)
    assert len(vector) == 4


def test_goal_vector_rejects_out_of_range_values():
    with pytest.raises(ValidationError):
        GoalVector(values=[0.5, 1.2])


@pytest.mark.parametrize(
    "delta, expected",
    [
        (0.0, DeltaBin.ZERO),
        (0.15, DeltaBin.POS_SLIGHT),
        (-0.15, DeltaBin.NEG_SLIGHT),
        (0.2, DeltaBin.POS_MODERATE),
        (0.5, DeltaBin.POS_MODERATE),
        (-0.5, DeltaBin.NEG_MODERATE),
        (0.51, DeltaBin.POS_MUCH),
        (-1.0, DeltaBin.NEG_MUCH),
    ],
)
def test_discretize_delta(delta, expected):
    assert discretize_delta(delta) == expected


def test_discretize_delta_is_antisymmetric():
    for delta in np.linspace(-1, 1, 201):
        assert discretize_delta(-delta).representative == -discretize_delta(delta).representative


def test_discretize_delta_rejects_out_of_range():
    with pytest.raises(OutOfRangeError):
        discretize_delta(1.5)


def test_discretize_vector_uses_representatives():
    assert discretize_vector([0.15, -0.35, 0.0, 0.9]).tolist() == [0.1, -0.35, 0.0, 0.75]


def test_subspace_keeps_config_order():
    restricted, indices = subspace(default_config(), ["text_length", "reading_difficulty"])
    assert restricted.dimension_ids == ["reading_difficulty", "text_length"]
    assert indices == [0, 3]


def test_config_round_trip(tmp_path):
    path = tmp_path / "goalspace.json"
    save_config(default_config(), path)
    assert load_config(path) == default_config()


def test_config_rejects_duplicate_dimensions():
    dimension = GoalDimension(id="formality", metric="heylighen_dewaele", raw_min=0, raw_max=1)
    with pytest.raises(ValidationError):
        GoalSpaceConfig(dimensions=[dimension, dimension])
