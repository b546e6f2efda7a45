"""
Goal-space: maps texts into the unit hypercube of registered goal dimensions and
discretizes goal deltas into coarse bins.
"""

import json
import logging
from enum import Enum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from steerability.errors import (
    DegenerateDimensionError,
    InsufficientSeedsError,
    MetricError,
    OutOfRangeError,
    UnknownDimensionError,
)
from steerability.goalspace.constants import (
    DEFAULT_DIMENSIONS,
    LOWER_QUANTILE,
    MIN_SEEDS_PER_DIMENSION,
    MUCH_LOWER,
    REPRESENTATIVE_MODERATE,
    REPRESENTATIVE_MUCH,
    REPRESENTATIVE_SLIGHT,
    SCHEMA_VERSION,
    SLIGHT_UPPER,
    UPPER_QUANTILE,
)
from steerability.textmetrics import RawMetricValue, TokenizedText, measure, tokenize

# Configure logging
logger = logging.getLogger(__name__)


class GoalDimension(BaseModel):
    """A goal dimension backed by one text metric and its normalization bounds."""
    id: str
    metric: str
    raw_min: float
    raw_max: float

    @model_validator(mode="after")
    def check_bounds(self) -> "GoalDimension":
        if not self.raw_min < self.raw_max:
            raise ValueError(f"Dimension '{self.id}' needs raw_min < raw_max")
        return self

    def normalize(self, raw: float) -> float:
        scaled = (raw - self.raw_min) / (self.raw_max - self.raw_min)
        return float(min(max(scaled, 0.0), 1.0))

    def denormalize(self, value: float) -> float:
        return self.raw_min + value * (self.raw_max - self.raw_min)


class GoalSpaceConfig(BaseModel):
    """Ordered registry of goal dimensions. The order defines goal-vector coordinates."""
    schema_version: int = SCHEMA_VERSION
    dimensions: List[GoalDimension] = Field(default_factory=list)

    @field_validator("dimensions")
    @classmethod
    def unique_ids(cls, dimensions: List[GoalDimension]) -> List[GoalDimension]:
        ids = [dimension.id for dimension in dimensions]
        if len(ids) != len(set(ids)):
            raise ValueError(f"Duplicate dimension ids in {ids}")
        if not ids:
            raise ValueError("A goal-space needs at least one dimension")
        return dimensions

    @property
    def dimension_ids(self) -> List[str]:
        return [dimension.id for dimension in self.dimensions]

    def __len__(self) -> int:
        return len(self.dimensions)

    def get(self, dimension_id: str) -> GoalDimension:
        for dimension in self.dimensions:
            if dimension.id == dimension_id:
                return dimension
        raise UnknownDimensionError(dimension_id)

    def index(self, dimension_id: str) -> int:
        for position, dimension in enumerate(self.dimensions):
            if dimension.id == dimension_id:
                return position
        raise UnknownDimensionError(dimension_id)


class GoalVector(BaseModel):
    """A point in the unit goal hypercube, one coordinate per registered dimension."""
    values: List[float]

    @field_validator("values")
    @classmethod
    def in_unit_interval(cls, values: List[float]) -> List[float]:
        for value in values:
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"Goal coordinates must lie in [0, 1], got {value}")
        return values

    @classmethod
    def from_array(cls, array: Union[np.ndarray, Sequence[float]]) -> "GoalVector":
        return cls(values=[float(value) for value in np.asarray(array, dtype=float)])

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def __len__(self) -> int:
        return len(self.values)


class DeltaBin(str, Enum):
    NEG_MUCH = "-much"
    NEG_MODERATE = "-moderate"
    NEG_SLIGHT = "-slight"
    ZERO = "zero"
    POS_SLIGHT = "+slight"
    POS_MODERATE = "+moderate"
    POS_MUCH = "+much"

    @property
    def representative(self) -> float:
        return _REPRESENTATIVES[self]


_REPRESENTATIVES = {
    DeltaBin.NEG_MUCH: -REPRESENTATIVE_MUCH,
    DeltaBin.NEG_MODERATE: -REPRESENTATIVE_MODERATE,
    DeltaBin.NEG_SLIGHT: -REPRESENTATIVE_SLIGHT,
    DeltaBin.ZERO: 0.0,
    DeltaBin.POS_SLIGHT: REPRESENTATIVE_SLIGHT,
    DeltaBin.POS_MODERATE: REPRESENTATIVE_MODERATE,
    DeltaBin.POS_MUCH: REPRESENTATIVE_MUCH,
}


def default_config() -> GoalSpaceConfig:
    """The four-dimension goal-space with bounds fitted on the reference seed corpus."""
    return GoalSpaceConfig(
        dimensions=[
            GoalDimension(id=dim_id, metric=metric, raw_min=raw_min, raw_max=raw_max)
            for dim_id, metric, raw_min, raw_max in DEFAULT_DIMENSIONS
        ]
    )


def default_metrics() -> Dict[str, str]:
    return {dim_id: metric for dim_id, metric, _, _ in DEFAULT_DIMENSIONS}


def fit_normalization(
    raw_mappings: Mapping[str, Sequence[float]],
    metrics: Optional[Mapping[str, str]] = None,
    min_seeds: int = MIN_SEEDS_PER_DIMENSION,
) -> GoalSpaceConfig:
    """
    Fit per-dimension bounds from the 2.5% and 97.5% seed quantiles.

    Args:
        raw_mappings: Raw seed values per dimension id, in the desired dimension order
        metrics: Metric id per dimension id; defaults to the built-in registry
        min_seeds: Minimum number of seed values per dimension

    Returns:
        A GoalSpaceConfig with one dimension per entry of raw_mappings

    Raises:
        DegenerateDimensionError: A dimension's quantiles coincide
    """
    metrics = dict(metrics or default_metrics())
    dimensions = []
    for dim_id, raw_values in raw_mappings.items():
        if dim_id not in metrics:
            raise UnknownDimensionError(dim_id)
        values = np.asarray(
            [raw.value if isinstance(raw, RawMetricValue) else raw for raw in raw_values], dtype=float
        )
        if values.size < min_seeds:
            raise InsufficientSeedsError(
                f"Dimension '{dim_id}' has {values.size} seed values, at least {min_seeds} are required"
            )
        raw_min, raw_max = np.quantile(values, [LOWER_QUANTILE, UPPER_QUANTILE])
        if not raw_min < raw_max:
            raise DegenerateDimensionError(f"Dimension '{dim_id}' has identical quantiles ({raw_min})")
        dimensions.append(
            GoalDimension(id=dim_id, metric=metrics[dim_id], raw_min=float(raw_min), raw_max=float(raw_max))
        )
        logger.info(f"Fitted '{dim_id}' bounds [{raw_min:.3f}, {raw_max:.3f}] from {values.size} seeds")
    return GoalSpaceConfig(dimensions=dimensions)


def normalize(raw: RawMetricValue, config: GoalSpaceConfig) -> float:
    """Rescale a raw metric value into [0, 1] with the dimension's bounds, clipping outside values."""
    return config.get(raw.dimension).normalize(raw.value)


def denormalize(dimension_id: str, value: float, config: GoalSpaceConfig) -> float:
    """Map a normalized coordinate back to the raw metric scale."""
    if not 0.0 <= value <= 1.0:
        raise OutOfRangeError(f"Normalized value {value} is outside [0, 1]")
    return config.get(dimension_id).denormalize(value)


def raw_values(
    text: Union[str, TokenizedText], config: GoalSpaceConfig, enforce_validity_floor: bool = True
) -> List[RawMetricValue]:
    """
    Compute the raw metric value of every registered dimension.

    Raises:
        MetricError: A metric failed; carries the failing dimension id
    """
    tokenized = tokenize(text) if isinstance(text, str) else text
    values = []
    for dimension in config.dimensions:
        try:
            value = measure(dimension.metric, tokenized, enforce_validity_floor=enforce_validity_floor)
        except ValueError as e:
            raise MetricError(dimension.id, e) from e
        values.append(RawMetricValue(dimension=dimension.id, value=value))
    return values


def map_to_goalspace(
    text: Union[str, TokenizedText], config: GoalSpaceConfig, enforce_validity_floor: bool = True
) -> GoalVector:
    """
    Map a text to its goal vector.

    Args:
        text: Raw text or an already tokenized text
        config: The goal-space to map into
        enforce_validity_floor: Set False to score texts shorter than a metric's validity floor

    Returns:
        GoalVector with one coordinate per dimension in config order
    """
    return GoalVector(values=[normalize(raw, config) for raw in raw_values(text, config, enforce_validity_floor)])


def discretize_delta(delta: float) -> DeltaBin:
    """
    Bin a goal delta in [-1, 1].

    Zero maps to its own bin; |delta| < 0.2 is slight, 0.2 <= |delta| <= 0.5 moderate,
    and |delta| > 0.5 much.
    """
    if not -1.0 <= delta <= 1.0:
        raise OutOfRangeError(f"Delta {delta} is outside [-1, 1]")
    magnitude = abs(delta)
    if magnitude == 0.0:
        return DeltaBin.ZERO
    positive = delta > 0
    if magnitude < SLIGHT_UPPER:
        return DeltaBin.POS_SLIGHT if positive else DeltaBin.NEG_SLIGHT
    if magnitude <= MUCH_LOWER:
        return DeltaBin.POS_MODERATE if positive else DeltaBin.NEG_MODERATE
    return DeltaBin.POS_MUCH if positive else DeltaBin.NEG_MUCH


def discretize_vector(deltas: Union[np.ndarray, Sequence[float]]) -> np.ndarray:
    """Replace every delta by its bin's representative value."""
    return np.asarray([discretize_delta(float(delta)).representative for delta in deltas], dtype=float)


def subspace(config: GoalSpaceConfig, dimension_ids: Sequence[str]) -> Tuple[GoalSpaceConfig, List[int]]:
    """
    Restrict a goal-space to a subset of its dimensions, keeping the original order.

    Returns:
        The restricted config and the kept coordinate indices into the full config
    """
    wanted = set(dimension_ids)
    for dim_id in dimension_ids:
        config.get(dim_id)
    indices = [position for position, dimension in enumerate(config.dimensions) if dimension.id in wanted]
    restricted = GoalSpaceConfig(
        schema_version=config.schema_version,
        dimensions=[config.dimensions[position] for position in indices],
    )
    return restricted, indices


def save_config(config: GoalSpaceConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(config.model_dump_json(indent=2), encoding="utf-8")


def load_config(path: Union[str, Path]) -> GoalSpaceConfig:
    """Load a goal-space config written by save_config."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if data.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ValueError(f"Unsupported goal-space schema version {data.get('schema_version')}")
    return GoalSpaceConfig.model_validate(data)
