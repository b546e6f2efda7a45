"""
Steerability metrics: steering error, miscalibration and orthogonality on raw and binned
goal vectors, the random baseline, rank agreement and reward functions.
"""

import logging
import re
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field
from scipy.stats import kendalltau

from steerability.errors import (
    EmptyInputError,
    InvalidArgumentError,
    UndefinedTauError,
    ZeroRequestError,
)
from steerability.goalspace import GoalVector, discretize_vector
from steerability.llmrun import FilterStatus, ResponseRecord
from steerability.probegen import Probe, ProbeItem, read_jsonl
from steerability.steermetrics.constants import (
    BASELINE_BATCH_SIZE,
    REWARD_MISCALIBRATION,
    REWARD_ORTHOGONALITY,
    REWARD_SQUARED_STEERING_ERROR,
    REWARD_STEERING_ERROR,
    WHITESPACE_PATTERN,
)
from steerability.textmetrics import sentence_bleu_text

# Configure logging
logger = logging.getLogger(__name__)

VectorLike = Union[GoalVector, np.ndarray, Sequence[float]]

_WHITESPACE_RE = re.compile(WHITESPACE_PATTERN)


# -----------------------------------------------------------------------------
# Data Models
# -----------------------------------------------------------------------------

class MetricValues(BaseModel):
    """The three metrics for one (z0, z*, ẑ) triple plus degeneracy flags."""
    steering_error: float = Field(ge=0.0)
    miscalibration: Optional[float] = Field(default=None, ge=0.0)
    signed_miscalibration: Optional[float] = None
    orthogonality: Optional[float] = Field(default=None, ge=0.0)
    zero_request: bool = False
    zero_movement: bool = False


class MetricRecord(BaseModel):
    """Metrics for one grounded, selected response."""
    record_id: str
    item_id: str
    seed_id: str
    strategy: str
    dimensions: List[str]
    active: List[bool]
    z0: List[float]
    z_star: List[float]
    z_hat: List[float]
    raw: MetricValues
    binned: MetricValues
    bleu: float
    is_copy: bool

    @property
    def requested(self) -> np.ndarray:
        return np.asarray(self.z_star) - np.asarray(self.z0)

    @property
    def achieved(self) -> np.ndarray:
        return np.asarray(self.z_hat) - np.asarray(self.z0)

    def value(self, metric: str, binned: bool = False) -> Optional[float]:
        """Look up a metric by name; None when absent for this record."""
        values = self.binned if binned else self.raw
        if metric not in MetricValues.model_fields or metric in ("zero_request", "zero_movement"):
            raise InvalidArgumentError(f"Unknown metric '{metric}'")
        return getattr(values, metric)


class TauResult(BaseModel):
    tau: float
    agreement: float
    n: int


# -----------------------------------------------------------------------------
# Core metrics
# -----------------------------------------------------------------------------

def _as_array(vector: VectorLike) -> np.ndarray:
    if isinstance(vector, GoalVector):
        return vector.array
    return np.asarray(vector, dtype=float)


def _triple(z0: VectorLike, z_star: VectorLike, z_hat: VectorLike) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    arrays = _as_array(z0), _as_array(z_star), _as_array(z_hat)
    if len({array.shape for array in arrays}) != 1 or arrays[0].ndim != 1:
        raise InvalidArgumentError(f"Goal vectors must share one dimensionality, got {[a.shape for a in arrays]}")
    return arrays


def steering_error(z_star: VectorLike, z_hat: VectorLike) -> float:
    """Euclidean distance between the target and the achieved goal vector."""
    target, achieved = _as_array(z_star), _as_array(z_hat)
    if target.shape != achieved.shape:
        raise InvalidArgumentError(f"Dimension mismatch: {target.shape} vs {achieved.shape}")
    return float(np.linalg.norm(target - achieved))


def _requested(z0: np.ndarray, z_star: np.ndarray) -> Tuple[np.ndarray, float]:
    requested = z_star - z0
    norm_sq = float(requested @ requested)
    if norm_sq == 0.0:
        raise ZeroRequestError("Target equals source; no movement was requested")
    return requested, norm_sq


def signed_miscalibration(z0: VectorLike, z_star: VectorLike, z_hat: VectorLike) -> float:
    """
    Residual along the requested direction, in units of the requested movement.

    Positive values are undershoot, negative values overshoot.

    Raises:
        ZeroRequestError: z* equals z0
    """
    source, target, achieved = _triple(z0, z_star, z_hat)
    requested, norm_sq = _requested(source, target)
    return float((target - achieved) @ requested / norm_sq)


def miscalibration(z0: VectorLike, z_star: VectorLike, z_hat: VectorLike) -> float:
    """
    Magnitude of the residual's scalar projection onto the requested movement,
    normalized by the requested movement.

    Raises:
        ZeroRequestError: z* equals z0
    """
    return abs(signed_miscalibration(z0, z_star, z_hat))


def _orthogonal_residual(source: np.ndarray, target: np.ndarray, achieved: np.ndarray) -> np.ndarray:
    requested, norm_sq = _requested(source, target)
    residual = target - achieved
    return residual - (residual @ requested / norm_sq) * requested


def orthogonality(z0: VectorLike, z_star: VectorLike, z_hat: VectorLike) -> Tuple[float, bool]:
    """
    Share of the observed movement that is orthogonal to the request.

    Returns:
        The orthogonality and a zero_movement flag; 0 with the flag set when ẑ equals z0

    Raises:
        ZeroRequestError: z* equals z0
    """
    source, target, achieved = _triple(z0, z_star, z_hat)
    orthogonal = _orthogonal_residual(source, target, achieved)
    movement = float(np.linalg.norm(achieved - source))
    if movement == 0.0:
        return 0.0, True
    return float(np.linalg.norm(orthogonal)) / movement, False


def evaluate(z0: VectorLike, z_star: VectorLike, z_hat: VectorLike) -> MetricValues:
    """All metrics for one triple; a zero request leaves the normalized metrics absent."""
    source, target, achieved = _triple(z0, z_star, z_hat)
    error = steering_error(target, achieved)
    if not np.any(target - source):
        return MetricValues(steering_error=error, zero_request=True,
                            zero_movement=not np.any(achieved - source))
    signed = signed_miscalibration(source, target, achieved)
    ortho, zero_movement = orthogonality(source, target, achieved)
    return MetricValues(
        steering_error=error,
        miscalibration=abs(signed),
        signed_miscalibration=signed,
        orthogonality=ortho,
        zero_movement=zero_movement,
    )


def binned_metrics(z0: VectorLike, z_star: VectorLike, z_hat: VectorLike) -> MetricValues:
    """
    Metrics after mapping the requested and achieved deltas through the delta bins.

    Both deltas are measured from z0, so the binned vectors live in delta space with
    the source at the origin.
    """
    source, target, achieved = _triple(z0, z_star, z_hat)
    requested = discretize_vector(target - source)
    moved = discretize_vector(achieved - source)
    return evaluate(np.zeros_like(source), requested, moved)


# -----------------------------------------------------------------------------
# Baselines and agreement
# -----------------------------------------------------------------------------

def random_baseline(
    probe: Union[Probe, np.ndarray],
    rng: np.random.Generator,
    trials: int,
) -> float:
    """
    Median steering error of uniformly random outputs.

    Args:
        probe: A probe, or an (items, dimensions) array of targets
        rng: Random generator
        trials: Random outputs drawn per item

    Returns:
        Median over trials x items of ‖z* − U‖ with U uniform on the unit cube
    """
    if trials < 1:
        raise InvalidArgumentError(f"trials must be positive, got {trials}")
    if isinstance(probe, Probe):
        targets = np.asarray([item.z_star.values for item in probe.items], dtype=float)
    else:
        targets = np.asarray(probe, dtype=float)
    if targets.size == 0:
        raise EmptyInputError("Random baseline needs at least one probe item")
    if targets.ndim == 1:
        targets = targets[:, None]
    n_items, n_dims = targets.shape
    per_batch = max(1, BASELINE_BATCH_SIZE // n_items)
    errors = []
    remaining = trials
    while remaining:
        batch = min(per_batch, remaining)
        draws = rng.random((batch, n_items, n_dims))
        errors.append(np.linalg.norm(draws - targets[None, :, :], axis=2).ravel())
        remaining -= batch
    median = float(np.median(np.concatenate(errors)))
    logger.info(f"Random baseline over {n_items} items x {trials} trials: median {median:.4f}")
    return median


def kendall_tau(pairs: Sequence[Tuple[float, float]]) -> TauResult:
    """
    Kendall's tau-b between predicted and actual values, plus pairwise agreement (tau + 1) / 2.

    Raises:
        InvalidArgumentError: Fewer than two pairs
        UndefinedTauError: One side is entirely tied
    """
    if len(pairs) < 2:
        raise InvalidArgumentError(f"Kendall's tau needs at least two pairs, got {len(pairs)}")
    predicted, actual = zip(*pairs)
    tau = kendalltau(predicted, actual, variant="b").statistic
    if tau is None or np.isnan(tau):
        raise UndefinedTauError("Kendall's tau is undefined for a constant input")
    return TauResult(tau=float(tau), agreement=(float(tau) + 1.0) / 2.0, n=len(pairs))


# -----------------------------------------------------------------------------
# Rewards
# -----------------------------------------------------------------------------

Reward = Callable[[VectorLike, VectorLike, VectorLike], float]

REWARDS: Dict[str, Reward] = {
    REWARD_STEERING_ERROR: lambda z0, z_star, z_hat: -steering_error(z_star, z_hat),
    REWARD_SQUARED_STEERING_ERROR: lambda z0, z_star, z_hat: -steering_error(z_star, z_hat) ** 2,
    REWARD_MISCALIBRATION: lambda z0, z_star, z_hat: -miscalibration(z0, z_star, z_hat),
    REWARD_ORTHOGONALITY: lambda z0, z_star, z_hat: -orthogonality(z0, z_star, z_hat)[0],
}


def reward(name: str, z0: VectorLike, z_star: VectorLike, z_hat: VectorLike) -> float:
    if name not in REWARDS:
        raise InvalidArgumentError(f"Unknown reward '{name}'. Choose from {sorted(REWARDS)}")
    return REWARDS[name](z0, z_star, z_hat)


# -----------------------------------------------------------------------------
# Records
# -----------------------------------------------------------------------------

def is_copy(source_text: str, rewrite_text: str) -> bool:
    """A rewrite is a copy when it equals the source after whitespace normalization."""
    return _WHITESPACE_RE.sub(" ", source_text).strip() == _WHITESPACE_RE.sub(" ", rewrite_text).strip()


def metric_record(item: ProbeItem, record: ResponseRecord) -> MetricRecord:
    """Compute raw and binned metrics for one response to one probe item."""
    if record.z_hat is None or record.rewrite_text is None:
        raise InvalidArgumentError(f"Record {record.record_id} has no goal vector")
    return MetricRecord(
        record_id=record.record_id,
        item_id=item.item_id,
        seed_id=item.seed_id,
        strategy=record.strategy,
        dimensions=item.dimensions,
        active=item.active,
        z0=item.z0.values,
        z_star=item.z_star.values,
        z_hat=record.z_hat.values,
        raw=evaluate(item.z0, item.z_star, record.z_hat),
        binned=binned_metrics(item.z0, item.z_star, record.z_hat),
        bleu=sentence_bleu_text(item.source_text, record.rewrite_text),
        is_copy=is_copy(item.source_text, record.rewrite_text),
    )


def compute_metrics(
    records: Iterable[ResponseRecord],
    probe: Probe,
    include_pending: bool = False,
) -> List[MetricRecord]:
    """
    Metric records for every grounded, selected response with a goal vector.

    Args:
        records: Response records, typically after judge decisions were applied
        probe: The probe the records answer
        include_pending: Also score records the judge has not seen yet

    Returns:
        Metric records in input order
    """
    items = {item.item_id: item for item in probe.items}
    allowed = {FilterStatus.GROUNDED} | ({FilterStatus.PENDING} if include_pending else set())
    results = []
    skipped = 0
    for record in records:
        if not record.selected or not record.usable or record.filter_status not in allowed:
            skipped += 1
            continue
        item = items.get(record.item_id)
        if item is None:
            raise InvalidArgumentError(f"Record {record.record_id} refers to unknown item {record.item_id}")
        results.append(metric_record(item, record))
    logger.info(f"Computed metrics for {len(results)} records, skipped {skipped}")
    return results


def save_metrics(records: Iterable[MetricRecord], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(record.model_dump_json() + "\n")


def load_metrics(path: Union[str, Path]) -> List[MetricRecord]:
    return [MetricRecord.model_validate(data) for data in read_jsonl(path) if data]
