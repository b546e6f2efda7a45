"""
Analysis over metric records: summaries, stratified and paired tests, flow fields,
copy-paste statistics, entanglement residuals and the run report.
"""

import itertools
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel
from scipy.stats import mannwhitneyu, permutation_test, rankdata, spearmanr, wilcoxon

from steerability.analysis.constants import (
    CI_QUANTILES,
    DEFAULT_GRID_N,
    FLOW_FILENAME,
    IQR_QUANTILES,
    MANN_WHITNEY_EXACT_MAX,
    MIN_CELL_WEIGHT,
    PERMUTATION_BATCH,
    QUANTILE_METHOD,
    REPORT_FILENAME,
    RESIDUAL_TOLERANCE,
    SUMMARY_METRICS,
    TIED_EXACT_MAX,
    WILCOXON_EXACT_MAX,
)
from steerability.errors import (
    DegeneratePairsError,
    EmptyInputError,
    InsufficientStrataError,
    InvalidArgumentError,
)
from steerability.probegen import Probe
from steerability.steermetrics import MetricRecord

# Configure logging
logger = logging.getLogger(__name__)


# -----------------------------------------------------------------------------
# Data Models
# -----------------------------------------------------------------------------

class SummaryStats(BaseModel):
    """Distribution summary of one metric; quantiles use linear interpolation."""
    median: float
    q25: float
    q75: float
    mean: float
    std: float
    ci_low: float
    ci_high: float
    n: int
    n_excluded: int = 0


class HypothesisTest(BaseModel):
    statistic: float
    p_value: float
    method: Literal["exact", "asymptotic"]
    n: int


class StrataResult(BaseModel):
    """Metric values split by whether two requested deltas share a sign."""
    dimensions: Tuple[str, str]
    correlated: List[float]
    anti_correlated: List[float]
    test: HypothesisTest


class CopyPasteStats(BaseModel):
    copies: int
    n: int
    copy_rate: float
    bleu_mean: float
    bleu_std: float
    bleu: Optional[SummaryStats] = None


class EntanglementResult(BaseModel):
    """
    Spearman correlations between output-goal residuals per dimension pair, next to the
    correlations between source goals. None marks a pair that could not be estimated.
    """
    dimensions: List[str]
    residual_correlation: List[List[Optional[float]]]
    source_correlation: List[List[Optional[float]]]
    difference: List[List[Optional[float]]]
    degenerate: bool = False
    diagnostics: List[str] = []


@dataclass
class FlowField:
    """Observed movement restricted to two dimensions, plus a kernel-smoothed grid."""
    dimensions: Tuple[str, str]
    origins: np.ndarray
    vectors: np.ndarray
    grid_n: int
    centers: np.ndarray
    mean_vectors: np.ndarray
    weights: np.ndarray
    supported: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        """Raw vectors and grid cells in one long table; empty cells have no vector."""
        raw = pd.DataFrame({
            "kind": "raw",
            "x": self.origins[:, 0],
            "y": self.origins[:, 1],
            "dx": self.vectors[:, 0],
            "dy": self.vectors[:, 1],
            "weight": np.nan,
            "supported": True,
        })
        means = np.where(self.supported[..., None], self.mean_vectors, np.nan)
        grid = pd.DataFrame({
            "kind": "grid",
            "x": self.centers[..., 0].ravel(),
            "y": self.centers[..., 1].ravel(),
            "dx": means[..., 0].ravel(),
            "dy": means[..., 1].ravel(),
            "weight": self.weights.ravel(),
            "supported": self.supported.ravel(),
        })
        return pd.concat([raw, grid], ignore_index=True)

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False)


# -----------------------------------------------------------------------------
# Summaries
# -----------------------------------------------------------------------------

def _metric_values(records: Sequence[MetricRecord], metric: str, binned: bool = False) -> Tuple[List[float], int]:
    values, excluded = [], 0
    for record in records:
        value = record.value(metric, binned=binned)
        if value is None:
            excluded += 1
        else:
            values.append(value)
    return values, excluded


def summarize(values: Sequence[float], n_excluded: int = 0) -> SummaryStats:
    """
    Summarize raw values.

    Raises:
        EmptyInputError: No values
    """
    array = np.asarray(values, dtype=float)
    if array.size == 0:
        raise EmptyInputError("Cannot summarize an empty set of values")
    q25, median, q75 = np.quantile(array, [IQR_QUANTILES[0], 0.5, IQR_QUANTILES[1]], method=QUANTILE_METHOD)
    ci_low, ci_high = np.quantile(array, CI_QUANTILES, method=QUANTILE_METHOD)
    return SummaryStats(
        median=float(median),
        q25=float(q25),
        q75=float(q75),
        mean=float(array.mean()),
        std=float(array.std(ddof=1)) if array.size > 1 else 0.0,
        ci_low=float(ci_low),
        ci_high=float(ci_high),
        n=int(array.size),
        n_excluded=n_excluded,
    )


def aggregate(records: Sequence[MetricRecord], metric: str, binned: bool = False) -> SummaryStats:
    """
    Summarize one metric over records; records where it is absent are counted as excluded.

    Raises:
        EmptyInputError: No record has the metric
    """
    values, excluded = _metric_values(records, metric, binned)
    if not values:
        raise EmptyInputError(f"No record has a value for '{metric}'")
    return summarize(values, n_excluded=excluded)


def mean_std_table(
    records: Sequence[MetricRecord], metrics: Sequence[str] = SUMMARY_METRICS, binned: bool = False
) -> Dict[str, str]:
    """Mean (std) per metric, formatted to three decimals."""
    table = {}
    for metric in metrics:
        stats = aggregate(records, metric, binned)
        table[metric] = f"{stats.mean:.3f} ({stats.std:.3f})"
    return table


# -----------------------------------------------------------------------------
# Tests
# -----------------------------------------------------------------------------

def _u_statistic(x: np.ndarray, y: np.ndarray, axis: int = -1) -> np.ndarray:
    x, y = np.moveaxis(x, axis, -1), np.moveaxis(y, axis, -1)
    diff = x[..., :, None] - y[..., None, :]
    return np.sum((diff > 0) + 0.5 * (diff == 0), axis=(-2, -1))


def _positive_rank_sum(differences: np.ndarray, axis: int = -1) -> np.ndarray:
    # ranks of |d| are fixed under sign flips
    ranks = rankdata(np.abs(differences), axis=axis)
    return np.sum(ranks * (differences > 0), axis=axis)


def mann_whitney(x: Sequence[float], y: Sequence[float]) -> HypothesisTest:
    """
    Two-sided Mann-Whitney U.

    Small samples use the exact null distribution: scipy's exact U table without ties,
    and a full permutation enumeration with mid-rank U when values are tied.
    """
    if not len(x) or not len(y):
        raise InsufficientStrataError("Mann-Whitney U needs two non-empty groups")
    x_arr, y_arr = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    pooled = np.concatenate([x_arr, y_arr])
    exact = max(len(x_arr), len(y_arr)) <= MANN_WHITNEY_EXACT_MAX
    tied = len(np.unique(pooled)) < len(pooled)
    if exact and tied:
        result = permutation_test(
            (x_arr, y_arr),
            _u_statistic,
            permutation_type="independent",
            vectorized=True,
            n_resamples=np.inf,
            batch=PERMUTATION_BATCH,
            alternative="two-sided",
        )
        statistic, p_value = float(result.statistic), float(result.pvalue)
    else:
        result = mannwhitneyu(x_arr, y_arr, alternative="two-sided", method="exact" if exact else "asymptotic")
        statistic, p_value = float(result.statistic), float(result.pvalue)
    return HypothesisTest(
        statistic=statistic,
        p_value=min(p_value, 1.0),
        method="exact" if exact else "asymptotic",
        n=len(pooled),
    )


def wilcoxon_signed_rank(x: Sequence[float], y: Optional[Sequence[float]] = None) -> HypothesisTest:
    """
    Paired two-sided Wilcoxon signed-rank test; zero differences are dropped.

    Without zeros or tied magnitudes the exact null distribution is used for up to 25
    differences. With zeros or ties, up to 10 non-zero differences are tested exactly by
    enumerating every sign assignment over mid-ranks. Anything larger uses the normal
    approximation with tie correction.

    Raises:
        DegeneratePairsError: Every difference is zero
    """
    differences = np.asarray(x, dtype=float)
    if y is not None:
        other = np.asarray(y, dtype=float)
        if other.shape != differences.shape:
            raise InvalidArgumentError("Paired samples must have equal length")
        differences = differences - other
    nonzero = differences[differences != 0]
    if nonzero.size == 0:
        raise DegeneratePairsError("All paired differences are zero")
    magnitudes = np.abs(nonzero)
    irregular = nonzero.size < differences.size or len(np.unique(magnitudes)) < magnitudes.size
    if irregular and nonzero.size <= TIED_EXACT_MAX:
        result = permutation_test(
            (nonzero,),
            _positive_rank_sum,
            permutation_type="samples",
            vectorized=True,
            n_resamples=np.inf,
            alternative="two-sided",
        )
        total = nonzero.size * (nonzero.size + 1) / 2.0
        w_plus = float(result.statistic)
        return HypothesisTest(
            statistic=min(w_plus, total - w_plus),
            p_value=float(min(result.pvalue, 1.0)),
            method="exact",
            n=int(nonzero.size),
        )
    exact = not irregular and differences.size <= WILCOXON_EXACT_MAX
    result = wilcoxon(
        differences,
        zero_method="wilcox",
        correction=False,
        alternative="two-sided",
        method="exact" if exact else "approx",
    )
    return HypothesisTest(
        statistic=float(result.statistic),
        p_value=float(min(result.pvalue, 1.0)),
        method="exact" if exact else "asymptotic",
        n=int(nonzero.size),
    )


def _dimension_positions(record: MetricRecord, dim_a: str, dim_b: str) -> Tuple[int, int]:
    try:
        return record.dimensions.index(dim_a), record.dimensions.index(dim_b)
    except ValueError:
        raise InvalidArgumentError(f"Record {record.record_id} lacks dimension {dim_a} or {dim_b}")


def stratify_correlated(
    records: Sequence[MetricRecord],
    dim_a: str,
    dim_b: str,
    metric: str = "steering_error",
    binned: bool = False,
) -> StrataResult:
    """
    Split records with both dimensions active by whether their requested deltas share a sign,
    and compare the metric between the groups with Mann-Whitney U.

    Raises:
        InsufficientStrataError: Either group is empty
    """
    correlated, anti = [], []
    for record in records:
        a, b = _dimension_positions(record, dim_a, dim_b)
        if not (record.active[a] and record.active[b]):
            continue
        value = record.value(metric, binned=binned)
        if value is None:
            continue
        requested = record.requested
        (correlated if np.sign(requested[a]) == np.sign(requested[b]) else anti).append(value)
    if not correlated or not anti:
        raise InsufficientStrataError(
            f"Need both strata for ({dim_a}, {dim_b}); got {len(correlated)} correlated, {len(anti)} anti-correlated"
        )
    return StrataResult(dimensions=(dim_a, dim_b), correlated=correlated, anti_correlated=anti,
                        test=mann_whitney(correlated, anti))


def strata_gap(
    records: Sequence[MetricRecord], dim_a: str, dim_b: str, metric: str = "orthogonality"
) -> Dict[str, float]:
    strata = stratify_correlated(records, dim_a, dim_b, metric)
    correlated_mean = float(np.mean(strata.correlated))
    anti_mean = float(np.mean(strata.anti_correlated))
    return {"correlated_mean": correlated_mean, "anti_correlated_mean": anti_mean,
            "gap": abs(correlated_mean - anti_mean)}


def compare_runs(
    records_a: Sequence[MetricRecord],
    records_b: Sequence[MetricRecord],
    metric: str = "steering_error",
    binned: bool = False,
) -> HypothesisTest:
    """Paired Wilcoxon test between two runs over the probe items both have values for."""
    values_b = {record.item_id: record.value(metric, binned) for record in records_b}
    pairs = [
        (record.value(metric, binned), values_b[record.item_id])
        for record in records_a
        if record.item_id in values_b
        and record.value(metric, binned) is not None
        and values_b[record.item_id] is not None
    ]
    if not pairs:
        raise EmptyInputError("The runs share no scored probe items")
    first, second = zip(*pairs)
    return wilcoxon_signed_rank(first, second)


class SensitivityResult(BaseModel):
    weighted: SummaryStats
    naive: SummaryStats
    test: HypothesisTest


def reweighting_sensitivity(
    records_weighted: Sequence[MetricRecord],
    records_naive: Sequence[MetricRecord],
    metric: str = "steering_error",
) -> SensitivityResult:
    """Summaries of a reweighted and a naive probe side by side, with a Mann-Whitney test."""
    weighted, _ = _metric_values(records_weighted, metric)
    naive, _ = _metric_values(records_naive, metric)
    return SensitivityResult(
        weighted=aggregate(records_weighted, metric),
        naive=aggregate(records_naive, metric),
        test=mann_whitney(weighted, naive),
    )


# -----------------------------------------------------------------------------
# Flow fields
# -----------------------------------------------------------------------------

def flow_field(
    records: Sequence[MetricRecord],
    dim_a: str,
    dim_b: str,
    grid_n: int = DEFAULT_GRID_N,
    min_weight: float = MIN_CELL_WEIGHT,
) -> FlowField:
    """
    Movement vectors z0 -> ẑ projected onto two dimensions, and their Gaussian-kernel mean
    on a grid_n x grid_n grid over the unit square with bandwidth equal to the cell size.

    A cell is supported only when at least one origin lies in it and its total kernel
    weight reaches min_weight; other cells carry no vector.
    """
    if grid_n < 1:
        raise InvalidArgumentError(f"grid_n must be positive, got {grid_n}")
    origins, vectors = [], []
    for record in records:
        a, b = _dimension_positions(record, dim_a, dim_b)
        origins.append((record.z0[a], record.z0[b]))
        vectors.append((record.z_hat[a] - record.z0[a], record.z_hat[b] - record.z0[b]))
    origin_array = np.asarray(origins, dtype=float).reshape(-1, 2)
    vector_array = np.asarray(vectors, dtype=float).reshape(-1, 2)

    cell = 1.0 / grid_n
    axis = (np.arange(grid_n) + 0.5) * cell
    centers = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1)
    weights = np.zeros((grid_n, grid_n))
    mean_vectors = np.zeros((grid_n, grid_n, 2))
    occupied = np.zeros((grid_n, grid_n), dtype=bool)
    if len(origin_array):
        offsets = centers[:, :, None, :] - origin_array[None, None, :, :]
        kernel = np.exp(-np.sum(offsets ** 2, axis=-1) / (2 * cell ** 2))
        weights = kernel.sum(axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean_vectors = np.einsum("ijk,kd->ijd", kernel, vector_array) / weights[..., None]
        cells = np.clip(np.floor(origin_array / cell).astype(int), 0, grid_n - 1)
        occupied[cells[:, 0], cells[:, 1]] = True
    supported = occupied & (weights >= min_weight)
    mean_vectors = np.where(supported[..., None], mean_vectors, 0.0)
    return FlowField(
        dimensions=(dim_a, dim_b),
        origins=origin_array,
        vectors=vector_array,
        grid_n=grid_n,
        centers=centers,
        mean_vectors=mean_vectors,
        weights=weights,
        supported=supported,
    )


# -----------------------------------------------------------------------------
# Copy-paste and entanglement
# -----------------------------------------------------------------------------

def copy_paste_stats(records: Sequence[MetricRecord]) -> CopyPasteStats:
    if not records:
        return CopyPasteStats(copies=0, n=0, copy_rate=0.0, bleu_mean=0.0, bleu_std=0.0)
    copies = sum(record.is_copy for record in records)
    bleu = summarize([record.bleu for record in records])
    return CopyPasteStats(
        copies=copies,
        n=len(records),
        copy_rate=copies / len(records),
        bleu_mean=bleu.mean,
        bleu_std=bleu.std,
        bleu=bleu,
    )


def _demean_within(values: np.ndarray, groups: np.ndarray) -> np.ndarray:
    demeaned = values.astype(float).copy()
    for group in np.unique(groups):
        mask = groups == group
        demeaned[mask] -= demeaned[mask].mean(axis=0)
    return demeaned


def _spearman(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return None
    rho = spearmanr(a, b).statistic
    return None if np.isnan(rho) else float(rho)


def entanglement_residuals(records: Sequence[MetricRecord]) -> EntanglementResult:
    """
    Correlation of output goals that the instructions do not explain.

    Each output dimension is regressed on the source goals and the requested targets after
    demeaning everything within source text, a fixed-effects stand-in for a per-source
    random intercept. Residuals are then compared pairwise with Spearman's rho.

    Raises:
        InvalidArgumentError: Fewer than two source texts with at least two records each
    """
    groups = np.asarray([record.seed_id for record in records])
    _, counts = np.unique(groups, return_counts=True)
    if not records or np.sum(counts >= 2) < 2:
        raise InvalidArgumentError("Entanglement needs at least two source texts with two or more records each")
    dimensions = records[0].dimensions
    n_dims = len(dimensions)
    z0 = np.asarray([record.z0 for record in records], dtype=float)
    z_star = np.asarray([record.z_star for record in records], dtype=float)
    z_hat = np.asarray([record.z_hat for record in records], dtype=float)

    design = _demean_within(np.hstack([z0, z_star]), groups)
    design = design[:, np.var(design, axis=0) > RESIDUAL_TOLERANCE]
    diagnostics = []
    if design.shape[1] and np.linalg.matrix_rank(design) < design.shape[1]:
        # lstsq still projects onto the column space; only the coefficients are not unique
        diagnostics.append("Rank-deficient design; residuals use the minimum-norm least-squares fit")
    residuals: List[np.ndarray] = []
    for index in range(n_dims):
        target = _demean_within(z_hat[:, index], groups)
        if design.shape[1]:
            coef, *_ = np.linalg.lstsq(design, target, rcond=None)
            target = target - design @ coef
        residuals.append(target)

    norms = [float(np.linalg.norm(residual)) for residual in residuals]
    degenerate = all(norm < RESIDUAL_TOLERANCE for norm in norms)
    residual_matrix: List[List[Optional[float]]] = [[None] * n_dims for _ in range(n_dims)]
    for i, j in itertools.product(range(n_dims), repeat=2):
        if degenerate:
            residual_matrix[i][j] = 0.0
        elif min(norms[i], norms[j]) >= RESIDUAL_TOLERANCE:
            residual_matrix[i][j] = _spearman(residuals[i], residuals[j])
    if degenerate:
        diagnostics.append("All residuals are zero; outputs are fully explained by the instructions")

    _, first = np.unique(groups, return_index=True)
    sources = z0[np.sort(first)]
    source_matrix: List[List[Optional[float]]] = [
        [_spearman(sources[:, i], sources[:, j]) for j in range(n_dims)]
        for i in range(n_dims)
    ]
    difference = [
        [None if r is None or s is None else r - s for r, s in zip(residual_row, source_row)]
        for residual_row, source_row in zip(residual_matrix, source_matrix)
    ]
    return EntanglementResult(
        dimensions=list(dimensions),
        residual_correlation=residual_matrix,
        source_correlation=source_matrix,
        difference=difference,
        degenerate=degenerate,
        diagnostics=diagnostics,
    )


# -----------------------------------------------------------------------------
# Report
# -----------------------------------------------------------------------------

def _try(label: str, func, *args, **kwargs) -> Optional[Any]:
    try:
        return func(*args, **kwargs)
    except (EmptyInputError, InsufficientStrataError, InvalidArgumentError, DegeneratePairsError) as e:
        logger.warning(f"Skipping {label}: {e}")
        return None


def _dump(value: Any) -> Any:
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    return value


def build_report(
    records: Sequence[MetricRecord],
    out_dir: Union[str, Path],
    probe: Optional[Probe] = None,
    dimension_pairs: Optional[Sequence[Tuple[str, str]]] = None,
    grid_n: int = DEFAULT_GRID_N,
) -> Dict[str, Any]:
    """
    Write report.json and one flow-field CSV per dimension pair into out_dir.

    Args:
        records: Metric records of one run
        out_dir: Output directory, created if missing
        probe: The probe the run answered, for coverage figures
        dimension_pairs: Pairs for strata and flow fields; all pairs by default
        grid_n: Flow-field grid resolution

    Returns:
        The report document
    """
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    dimensions = records[0].dimensions if records else (probe.config.dimension_ids if probe else [])
    pairs = list(dimension_pairs or itertools.combinations(dimensions, 2))

    report: Dict[str, Any] = {
        "n_records": len(records),
        "quantile_estimator": "linear interpolation; empirical 95% CI = 2.5th/97.5th percentiles",
        "summaries": {
            metric: {
                "raw": _dump(_try(metric, aggregate, records, metric)),
                "binned": _dump(_try(f"binned {metric}", aggregate, records, metric, binned=True)),
            }
            for metric in SUMMARY_METRICS
        },
        "mean_std": _try("mean/std table", mean_std_table, records),
        "degenerate": {
            "zero_request": sum(record.raw.zero_request for record in records),
            "zero_movement": sum(record.raw.zero_movement for record in records),
        },
        "copy_paste": _dump(copy_paste_stats(records)),
        "entanglement": _dump(_try("entanglement", entanglement_residuals, records)),
        "strata": {},
        "flow_fields": {},
    }
    if probe is not None:
        report["probe"] = {
            "n_items": len(probe.items),
            "strategy": probe.spec.strategy.id,
            "coverage": len(records) / len(probe.items) if probe.items else 0.0,
        }
    for dim_a, dim_b in pairs:
        key = f"{dim_a}/{dim_b}"
        strata = _try(f"strata {key}", stratify_correlated, records, dim_a, dim_b)
        if strata is not None:
            report["strata"][key] = {
                "n_correlated": len(strata.correlated),
                "n_anti_correlated": len(strata.anti_correlated),
                "correlated_median": float(np.median(strata.correlated)),
                "anti_correlated_median": float(np.median(strata.anti_correlated)),
                "test": strata.test.model_dump(),
                "orthogonality_gap": _try(f"orthogonality gap {key}", strata_gap, records, dim_a, dim_b),
            }
        filename = FLOW_FILENAME.format(dim_a=dim_a, dim_b=dim_b)
        flow_field(records, dim_a, dim_b, grid_n=grid_n).to_csv(out_path / filename)
        report["flow_fields"][key] = filename

    (out_path / REPORT_FILENAME).write_text(json.dumps(report, indent=2, sort_keys=True), encoding="utf-8")
    logger.info(f"Wrote report for {len(records)} records to {out_path}")
    return report
