"""
Probe generation: seed ingestion, density-ratio reweighting toward a uniform goal-space
coverage, goal sampling and probe assembly.
"""

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator
from scipy.optimize import minimize

from steerability.errors import ConvergenceError, InsufficientSeedsError, InvalidArgumentError, MetricError
from steerability.goalspace import (
    GoalSpaceConfig,
    GoalVector,
    default_config,
    fit_normalization,
    normalize,
    raw_values,
    subspace,
)
from steerability.probegen.constants import (
    DEFAULT_L2,
    GRADIENT_TOLERANCE,
    MAX_DELTA,
    MAX_ITERATIONS,
    MAX_SEED_WORDS,
    MIN_DELTA,
    MIN_SEED_WORDS,
    REJECT_ABOVE_CAP,
    REJECT_BELOW_FLOOR,
    REJECT_DUPLICATE,
    REJECT_MALFORMED,
    REJECT_METRIC_ERROR,
)
from steerability.promptgen import PromptStrategy, RenderedPrompt, render_prompt
from steerability.textmetrics import RawMetricValue, tokenize

# Configure logging
logger = logging.getLogger(__name__)

_TOLERANCE = 1e-9


# -----------------------------------------------------------------------------
# Data Models
# -----------------------------------------------------------------------------

class SeedText(BaseModel):
    """A validated seed text with its raw metric values and goal vector."""
    id: str
    source_tag: str
    text: str
    raw: Dict[str, float] = Field(default_factory=dict)
    z0: GoalVector


class IngestReport(BaseModel):
    """Outcome of corpus ingestion: accepted seeds, rejection counts per reason, fitted config."""
    seeds: List[SeedText] = Field(default_factory=list)
    rejected: Dict[str, int] = Field(default_factory=dict)
    config: GoalSpaceConfig


class DensityRatioModel(BaseModel):
    """Logistic classifier separating seeds (label 1) from uniform draws (label 0)."""
    coef: List[float]
    intercept: float
    l2: float
    loss_trace: List[float] = Field(default_factory=list)

    def logit(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) @ np.asarray(self.coef) + self.intercept

    def weight(self, z: np.ndarray) -> np.ndarray:
        """Estimated uniform/seed density ratio (1 - p) / p."""
        return np.exp(-self.logit(z))


class SamplingWeights(BaseModel):
    """Per-seed importance weights aligned with seed_ids."""
    seed_ids: List[str]
    weights: List[float]
    model: Optional[DensityRatioModel] = None

    def as_dict(self) -> Dict[str, float]:
        return dict(zip(self.seed_ids, self.weights))

    def weight_for(self, z: Union[GoalVector, np.ndarray]) -> float:
        if self.model is None:
            raise InvalidArgumentError("Uniform sampling weights carry no density-ratio model")
        array = z.array if isinstance(z, GoalVector) else np.asarray(z, dtype=float)
        return float(self.model.weight(array[None, :])[0])


class ProbeSpec(BaseModel):
    n_sources: int = Field(gt=0)
    goals_per_source: int = Field(gt=0)
    n_active: int = Field(gt=0)
    strategy: PromptStrategy = Field(default_factory=PromptStrategy)
    rng_seed: int = 0
    reweight: bool = True
    dimensions: Optional[List[str]] = None
    exclude_seed_ids: List[str] = Field(default_factory=list)


class ProbeItem(BaseModel):
    """One rewrite request: a source text, its goal vector and the requested target."""
    item_id: str
    seed_id: str
    source_text: str
    dimensions: List[str]
    z0: GoalVector
    z_star: GoalVector
    active: List[bool]
    deltas: Dict[str, float]
    strategy: PromptStrategy
    rng_seed: int
    prompt: RenderedPrompt

    @model_validator(mode="after")
    def check_goal(self) -> "ProbeItem":
        if not len(self.dimensions) == len(self.z0) == len(self.z_star) == len(self.active):
            raise ValueError("Goal vectors, active mask and dimensions must have equal length")
        for position, dim in enumerate(self.dimensions):
            before, after = self.z0.values[position], self.z_star.values[position]
            if not self.active[position]:
                if before != after or dim in self.deltas:
                    raise ValueError(f"Inactive dimension '{dim}' must keep its source value")
                continue
            delta = self.deltas.get(dim)
            if delta is None or not MIN_DELTA - _TOLERANCE <= abs(delta) <= MAX_DELTA + _TOLERANCE:
                raise ValueError(f"Active dimension '{dim}' needs |delta| in [{MIN_DELTA}, {MAX_DELTA}]")
            if not -_TOLERANCE <= before + delta <= 1.0 + _TOLERANCE:
                raise ValueError(f"Active dimension '{dim}' asks for {before} + {delta}, outside [0, 1]")
            if abs(after - (before + delta)) > _TOLERANCE:
                raise ValueError(f"Target of '{dim}' is {after}, expected z0 + delta = {before + delta}")
        return self

    @property
    def delta_array(self) -> np.ndarray:
        return np.asarray([self.deltas.get(dim, 0.0) for dim in self.dimensions], dtype=float)


class Probe(BaseModel):
    config: GoalSpaceConfig
    spec: ProbeSpec
    items: List[ProbeItem] = Field(default_factory=list)


# -----------------------------------------------------------------------------
# Ingestion
# -----------------------------------------------------------------------------

def _measure_text(text: str, config: GoalSpaceConfig) -> Tuple[int, Optional[List[RawMetricValue]], Optional[str]]:
    tokenized = tokenize(text)
    if tokenized.word_count < MIN_SEED_WORDS:
        return tokenized.word_count, None, REJECT_BELOW_FLOOR
    if tokenized.word_count > MAX_SEED_WORDS:
        return tokenized.word_count, None, REJECT_ABOVE_CAP
    try:
        return tokenized.word_count, raw_values(tokenized, config), None
    except MetricError as e:
        logger.debug(f"Metric failure during ingestion: {e}")
        return tokenized.word_count, None, REJECT_METRIC_ERROR


def _measure_text_packed(args: Tuple[str, GoalSpaceConfig]):
    return _measure_text(*args)


def ingest_corpus(
    records: Iterable[Mapping[str, Any]],
    config: Optional[GoalSpaceConfig] = None,
    dimensions: Optional[Sequence[str]] = None,
    workers: int = 1,
) -> IngestReport:
    """
    Validate seed records, compute their raw metrics and goal vectors.

    Records are mappings with "id", "source" (or "source_tag") and "text". Texts outside
    [50, 2048] words, duplicate ids and texts whose metrics fail are rejected and counted.
    Without a config, normalization bounds are fitted on the accepted seeds.

    Args:
        records: Seed records
        config: Existing goal-space; fitted from the seeds when None
        dimensions: Restrict the default registry to these dimension ids (ignored with a config)
        workers: Metric computation runs in this many processes when > 1

    Returns:
        IngestReport with seeds in input order
    """
    measure_config = config or default_config()
    if config is None and dimensions:
        measure_config, _ = subspace(measure_config, dimensions)

    rejected: Dict[str, int] = {}
    accepted: List[Tuple[str, str, str]] = []
    seen = set()
    for record in records:
        seed_id = record.get("id") if isinstance(record, Mapping) else None
        source_tag = (record.get("source_tag") or record.get("source")) if isinstance(record, Mapping) else None
        text = record.get("text") if isinstance(record, Mapping) else None
        if not isinstance(seed_id, str) or not isinstance(text, str) or not isinstance(source_tag, str):
            rejected[REJECT_MALFORMED] = rejected.get(REJECT_MALFORMED, 0) + 1
            continue
        if seed_id in seen:
            rejected[REJECT_DUPLICATE] = rejected.get(REJECT_DUPLICATE, 0) + 1
            continue
        seen.add(seed_id)
        accepted.append((seed_id, source_tag, text))

    jobs = [(text, measure_config) for _, _, text in accepted]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            measured = list(pool.map(_measure_text_packed, jobs, chunksize=16))
    else:
        measured = [_measure_text(text, measure_config) for text, _ in jobs]

    survivors: List[Tuple[str, str, str, List[RawMetricValue]]] = []
    for (seed_id, source_tag, text), (_, raws, reason) in zip(accepted, measured):
        if reason is not None:
            rejected[reason] = rejected.get(reason, 0) + 1
            continue
        survivors.append((seed_id, source_tag, text, raws))

    if config is None:
        if not survivors:
            raise InsufficientSeedsError("No seed text passed validation")
        config = fit_normalization(
            {dim.id: [raws[position].value for _, _, _, raws in survivors] for position, dim in enumerate(measure_config.dimensions)},
            metrics={dim.id: dim.metric for dim in measure_config.dimensions},
        )

    seeds = [
        SeedText(
            id=seed_id,
            source_tag=source_tag,
            text=text,
            raw={raw.dimension: raw.value for raw in raws},
            z0=GoalVector(values=[normalize(raw, config) for raw in raws]),
        )
        for seed_id, source_tag, text, raws in survivors
    ]
    logger.info(f"Ingested {len(seeds)} seeds, rejected {sum(rejected.values())}: {rejected}")
    return IngestReport(seeds=seeds, rejected=rejected, config=config)


def read_jsonl(path: Union[str, Path]) -> Iterator[Dict[str, Any]]:
    """Yield JSON objects from a JSONL file; unparsable lines yield an empty dict."""
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError:
                logger.warning(f"Skipping malformed JSON on line {line_number} of {path}")
                yield {}


def save_seeds(report: IngestReport, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for seed in report.seeds:
            handle.write(seed.model_dump_json() + "\n")


def load_seeds(path: Union[str, Path]) -> List[SeedText]:
    return [SeedText.model_validate(record) for record in read_jsonl(path)]


# -----------------------------------------------------------------------------
# Reweighting
# -----------------------------------------------------------------------------

def fit_density_ratio(
    z: np.ndarray,
    rng: np.random.Generator,
    l2: float = DEFAULT_L2,
    tol: float = GRADIENT_TOLERANCE,
    max_iter: int = MAX_ITERATIONS,
) -> DensityRatioModel:
    """
    Fit an L2-regularized logistic classifier between seed goal vectors and as many
    uniform draws from the unit hypercube.

    Args:
        z: Seed goal vectors, shape (n, d)
        rng: Random generator for the uniform draws
        l2: Penalty on the coefficients (not the intercept)
        tol: Gradient-norm tolerance
        max_iter: Iteration cap

    Returns:
        The fitted DensityRatioModel

    Raises:
        ConvergenceError: The optimizer stopped without meeting the tolerance
    """
    seeds = np.asarray(z, dtype=float)
    if seeds.ndim != 2 or seeds.shape[0] == 0:
        raise InvalidArgumentError("Density-ratio fitting needs a non-empty (n, d) array")
    n, d = seeds.shape
    uniform = rng.uniform(size=(n, d))
    features = np.vstack([seeds, uniform])
    signs = np.concatenate([np.ones(n), -np.ones(n)])
    labels = (signs + 1.0) / 2.0
    total = 2 * n
    loss_trace: List[float] = []

    def objective(params: np.ndarray) -> Tuple[float, np.ndarray]:
        coef, intercept = params[:d], params[d]
        logits = features @ coef + intercept
        loss = np.logaddexp(0.0, -signs * logits).mean() + 0.5 * l2 * coef @ coef
        residual = 1.0 / (1.0 + np.exp(-logits)) - labels
        grad = np.empty(d + 1)
        grad[:d] = features.T @ residual / total + l2 * coef
        grad[d] = residual.sum() / total
        return float(loss), grad

    result = minimize(
        objective,
        np.zeros(d + 1),
        jac=True,
        method="L-BFGS-B",
        options={"gtol": tol, "maxiter": max_iter},
        callback=lambda params: loss_trace.append(objective(params)[0]),
    )
    _, final_grad = objective(result.x)
    grad_norm = float(np.linalg.norm(final_grad))
    if not result.success and grad_norm > tol:
        raise ConvergenceError(
            f"Density-ratio classifier did not converge: {result.message} (|grad|={grad_norm:.2e})",
            loss_trace=loss_trace,
        )
    logger.info(f"Density-ratio classifier converged after {result.nit} iterations (|grad|={grad_norm:.2e})")
    return DensityRatioModel(
        coef=[float(value) for value in result.x[:d]],
        intercept=float(result.x[d]),
        l2=l2,
        loss_trace=loss_trace,
    )


def estimate_sampling_weights(
    seeds: Sequence[SeedText],
    rng: np.random.Generator,
    l2: float = DEFAULT_L2,
    tol: float = GRADIENT_TOLERANCE,
) -> SamplingWeights:
    """
    Importance weights that reweight the seed distribution toward uniform goal-space coverage.

    Returns:
        SamplingWeights with one finite, positive weight per seed
    """
    if not seeds:
        raise InsufficientSeedsError("Cannot estimate weights without seeds")
    z = np.vstack([seed.z0.array for seed in seeds])
    model = fit_density_ratio(z, rng, l2=l2, tol=tol)
    weights = model.weight(z)
    return SamplingWeights(seed_ids=[seed.id for seed in seeds], weights=[float(w) for w in weights], model=model)


def uniform_weights(seeds: Sequence[SeedText]) -> SamplingWeights:
    return SamplingWeights(seed_ids=[seed.id for seed in seeds], weights=[1.0] * len(seeds))


def sample_sources(
    seeds: Sequence[SeedText],
    weights: Union[SamplingWeights, Sequence[float], np.ndarray],
    n: int,
    rng: np.random.Generator,
) -> List[SeedText]:
    """
    Draw n distinct seeds with probability proportional to their weights.

    Raises:
        InsufficientSeedsError: n exceeds the number of seeds with positive weight
    """
    values = np.asarray(weights.weights if isinstance(weights, SamplingWeights) else weights, dtype=float)
    if values.shape != (len(seeds),):
        raise InvalidArgumentError(f"Expected {len(seeds)} weights, got {values.shape}")
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise InvalidArgumentError("Sampling weights must be finite and non-negative")
    if n > int(np.count_nonzero(values)):
        raise InsufficientSeedsError(f"Requested {n} sources from {np.count_nonzero(values)} eligible seeds")
    chosen = rng.choice(len(seeds), size=n, replace=False, p=values / values.sum())
    return [seeds[index] for index in chosen]


def sample_goal(
    z0: Union[GoalVector, np.ndarray], n_active: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Sample a target goal around a source goal.

    Active dimensions are drawn uniformly without replacement; each receives a delta drawn
    uniformly from the feasible part of [-0.7, -0.1] U [0.1, 0.7], choosing a side with
    probability proportional to its feasible length. A dimension with no feasible side is
    replaced by another one.

    Returns:
        (z_star, active mask, deltas) with deltas zero on inactive dimensions
    """
    source = z0.array if isinstance(z0, GoalVector) else np.asarray(z0, dtype=float)
    d = source.size
    if not 1 <= n_active <= d:
        raise InvalidArgumentError(f"n_active must lie in [1, {d}], got {n_active}")
    active = np.zeros(d, dtype=bool)
    deltas = np.zeros(d)
    for position in rng.permutation(d):
        if active.sum() == n_active:
            break
        value = source[position]
        sides = []
        if value - MIN_DELTA >= -_TOLERANCE:
            sides.append((-min(MAX_DELTA, value), -MIN_DELTA))
        if 1.0 - value - MIN_DELTA >= -_TOLERANCE:
            sides.append((MIN_DELTA, min(MAX_DELTA, 1.0 - value)))
        if not sides:
            logger.debug(f"Dimension {position} has no feasible delta at z0={value}; resampling")
            continue
        lengths = np.array([max(high - low, 0.0) for low, high in sides])
        if lengths.sum() > 0:
            draw = rng.uniform(0.0, lengths.sum())
            side = 0 if draw < lengths[0] or len(sides) == 1 else 1
            low, high = sides[side]
            offset = draw if side == 0 else draw - lengths[0]
            delta = min(low + offset, high)
        else:
            delta = sides[int(rng.integers(len(sides)))][0]
        active[position] = True
        deltas[position] = delta
    if active.sum() < n_active:
        raise InvalidArgumentError(f"Only {active.sum()} dimensions admit a delta for z0={source.tolist()}")
    z_star = np.where(active, np.clip(source + deltas, 0.0, 1.0), source)
    return z_star, active, deltas


# -----------------------------------------------------------------------------
# Probe assembly
# -----------------------------------------------------------------------------

def build_probe(
    spec: ProbeSpec,
    seeds: Sequence[SeedText],
    config: GoalSpaceConfig,
    weights: Optional[SamplingWeights] = None,
    instructions: Optional[Mapping[str, Sequence[str]]] = None,
) -> Probe:
    """
    Assemble a probe: sample sources, sample goals per source, render prompts.

    The same spec, seeds and weights always give a byte-identical serialized probe.

    Args:
        spec: Probe parameters
        seeds: Candidate seed texts
        config: Goal-space the seeds were mapped into
        weights: Precomputed sampling weights; estimated from the seeds when needed
        instructions: Optional instruction lists keyed by seed id, for instruction strategies

    Returns:
        The Probe
    """
    probe_config, indices = subspace(config, spec.dimensions) if spec.dimensions else (config, list(range(len(config))))
    if spec.n_active > len(probe_config):
        raise InvalidArgumentError(f"n_active={spec.n_active} exceeds {len(probe_config)} dimensions")

    excluded = set(spec.exclude_seed_ids)
    pool = [seed for seed in seeds if seed.id not in excluded]
    if not pool:
        raise InsufficientSeedsError("Every seed is excluded")

    source_rng = np.random.default_rng([spec.rng_seed, 0])
    if spec.reweight:
        if weights is None:
            weights = estimate_sampling_weights(pool, np.random.default_rng([spec.rng_seed, 1]))
        lookup = weights.as_dict()
        pool_weights = [lookup[seed.id] for seed in pool]
    else:
        pool_weights = [1.0] * len(pool)
    sources = sample_sources(pool, pool_weights, spec.n_sources, source_rng)

    dimension_ids = probe_config.dimension_ids
    items = []
    for source in sources:
        z0 = source.z0.array[indices]
        for goal_index in range(spec.goals_per_source):
            item_seed = int(source_rng.integers(2**31 - 1))
            item_rng = np.random.default_rng(item_seed)
            z_star, active, deltas = sample_goal(z0, spec.n_active, item_rng)
            item_id = f"{source.id}:{goal_index}"
            draft = ProbeItem.model_construct(
                item_id=item_id,
                dimensions=dimension_ids,
                active=active.tolist(),
                deltas={dim: float(deltas[pos]) for pos, dim in enumerate(dimension_ids) if active[pos]},
            )
            prompt = render_prompt(
                draft, spec.strategy, item_rng, instructions=(instructions or {}).get(source.id)
            )
            items.append(
                ProbeItem(
                    item_id=item_id,
                    seed_id=source.id,
                    source_text=source.text,
                    dimensions=dimension_ids,
                    z0=GoalVector.from_array(z0),
                    z_star=GoalVector.from_array(z_star),
                    active=active.tolist(),
                    deltas=draft.deltas,
                    strategy=spec.strategy,
                    rng_seed=item_seed,
                    prompt=prompt,
                )
            )
    logger.info(f"Built probe with {len(items)} items from {len(sources)} sources ({spec.strategy.id})")
    return Probe(config=probe_config, spec=spec, items=items)


def rerender_probe(
    probe: Probe, strategy: PromptStrategy, instructions: Optional[Mapping[str, Sequence[str]]] = None
) -> Probe:
    """Render every item's prompt again under a different strategy, reusing each item's seed."""
    items = []
    for item in probe.items:
        prompt = render_prompt(
            item, strategy, np.random.default_rng(item.rng_seed), instructions=(instructions or {}).get(item.seed_id)
        )
        items.append(item.model_copy(update={"strategy": strategy, "prompt": prompt}))
    return probe.model_copy(update={"items": items, "spec": probe.spec.model_copy(update={"strategy": strategy})})


def save_probe(probe: Probe, path: Union[str, Path]) -> None:
    """Write the probe as JSONL: a header record followed by one record per item."""
    header = {"record_type": "header", "config": probe.config.model_dump(), "spec": probe.spec.model_dump(mode="json")}
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(json.dumps(header, sort_keys=True) + "\n")
        for item in probe.items:
            record = {"record_type": "item", **item.model_dump(mode="json")}
            handle.write(json.dumps(record, sort_keys=True) + "\n")


def load_probe(path: Union[str, Path]) -> Probe:
    header = None
    items = []
    for record in read_jsonl(path):
        record_type = record.pop("record_type", None)
        try:
            if record_type == "header":
                header = record
            elif record_type == "item":
                items.append(ProbeItem.model_validate(record))
        except ValidationError as e:
            raise InvalidArgumentError(f"Invalid probe record in {path}: {e}") from e
    if header is None:
        raise InvalidArgumentError(f"Probe file {path} has no header record")
    return Probe(
        config=GoalSpaceConfig.model_validate(header["config"]),
        spec=ProbeSpec.model_validate(header["spec"]),
        items=items,
    )
