"""
LLM runner: sends rendered prompts to a chat-completions endpoint, post-processes the
responses into rewrites, maps rewrites into goal-space and journals every record.
"""

import asyncio
import json
import logging
import re
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from steerability.base_client import BaseClient
from steerability.errors import (
    CredentialError,
    ExtractionFailureError,
    InvalidArgumentError,
    MetricError,
    NoValidCandidateError,
    TransportFailureError,
)
from steerability.goalspace import GoalSpaceConfig, GoalVector, map_to_goalspace
from steerability.llmrun.constants import (
    BOILERPLATE_PATH,
    DEFAULT_PARALLELISM,
    REJECT_EXTRACTION,
    REJECT_TRANSPORT,
    REWRITTEN_SECTION_PATTERN,
    SAMPLED_FREQUENCY_PENALTY,
    SAMPLED_MIN_P,
    SAMPLED_TEMPERATURE,
    THINK_BLOCK_PATTERN,
    THINK_CLOSE_TAG,
    THINK_OPEN_TAG,
)
from steerability.probegen import Probe, ProbeItem, read_jsonl
from steerability.promptgen import PromptKind, PromptStrategy, RenderedPrompt, render_prompt
from steerability.settings import max_context_tokens

# Configure logging
logger = logging.getLogger(__name__)

GoalMapper = Callable[[str], GoalVector]
Scorer = Callable[[ProbeItem, GoalVector], float]

_REWRITTEN_SECTION_RE = re.compile(REWRITTEN_SECTION_PATTERN, re.IGNORECASE | re.MULTILINE)
_THINK_RE = re.compile(THINK_BLOCK_PATTERN, re.IGNORECASE | re.DOTALL)


# -----------------------------------------------------------------------------
# Data Models
# -----------------------------------------------------------------------------

class DecodingConfig(BaseModel):
    """Decoding parameters sent with every request."""
    mode: Literal["greedy", "sampled"] = "greedy"
    temperature: float = Field(default=0.0, ge=0.0)
    min_p: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    frequency_penalty: float = 0.0
    max_tokens: Optional[int] = Field(default=None, gt=0)
    max_context_tokens: int = Field(default_factory=max_context_tokens)

    @model_validator(mode="after")
    def check_greedy(self) -> "DecodingConfig":
        if self.mode == "greedy" and (self.temperature != 0.0 or self.min_p is not None):
            raise ValueError("Greedy decoding uses temperature 0 and no min_p")
        return self

    @classmethod
    def greedy(cls, **kwargs) -> "DecodingConfig":
        return cls(mode="greedy", **kwargs)

    @classmethod
    def sampled(
        cls,
        temperature: float = SAMPLED_TEMPERATURE,
        min_p: Optional[float] = SAMPLED_MIN_P,
        frequency_penalty: float = SAMPLED_FREQUENCY_PENALTY,
        **kwargs,
    ) -> "DecodingConfig":
        return cls(mode="sampled", temperature=temperature, min_p=min_p, frequency_penalty=frequency_penalty, **kwargs)


class FilterStatus(str, Enum):
    PENDING = "pending"
    GROUNDED = "grounded"
    REJECTED = "rejected"


class ResponseRecord(BaseModel):
    """One model response for one probe item attempt."""
    record_id: str
    item_id: str
    attempt_index: int = 0
    strategy: str
    decoding: DecodingConfig
    raw_text: Optional[str] = None
    rewrite_text: Optional[str] = None
    z_hat: Optional[GoalVector] = None
    transport_retries: int = 0
    filter_status: FilterStatus = FilterStatus.PENDING
    reject_reason: Optional[str] = None
    metric_error: Optional[str] = None
    min_p_acknowledged: Optional[bool] = None
    selected: bool = True

    @model_validator(mode="after")
    def check_goal(self) -> "ResponseRecord":
        if self.z_hat is not None and self.rewrite_text is None:
            raise ValueError("A goal vector needs a rewrite")
        return self

    @property
    def usable(self) -> bool:
        return self.z_hat is not None and self.reject_reason is None


class Completion(BaseModel):
    raw_text: str
    transport_retries: int = 0
    min_p_acknowledged: Optional[bool] = None


def record_id_for(item_id: str, attempt_index: int) -> str:
    return f"{item_id}#{attempt_index}"


# -----------------------------------------------------------------------------
# Client
# -----------------------------------------------------------------------------

class RewriteClient(BaseClient):
    """Client that asks the evaluated model for rewrites."""

    async def complete(self, prompt: RenderedPrompt, source_text: str, decoding: DecodingConfig) -> Completion:
        """
        Request one rewrite.

        Args:
            prompt: The rendered instruction
            source_text: The text to rewrite, appended after the instruction
            decoding: Decoding parameters

        Returns:
            The raw completion text and transport bookkeeping
        """
        payload = self.create_payload(
            prompt.message(source_text),
            temperature=decoding.temperature,
            min_p=decoding.min_p,
            frequency_penalty=decoding.frequency_penalty,
            max_tokens=decoding.max_tokens,
        )
        result = await self.post_chat(payload)
        acknowledged = None
        if decoding.min_p is not None:
            echoed = result.body.get("sampling_params", {}) if isinstance(result.body.get("sampling_params"), dict) else {}
            acknowledged = echoed.get("min_p") == decoding.min_p if echoed else None
        return Completion(raw_text=result.text, transport_retries=result.retries, min_p_acknowledged=acknowledged)


# -----------------------------------------------------------------------------
# Post-processing
# -----------------------------------------------------------------------------

@lru_cache(maxsize=1)
def _boilerplate_patterns() -> Tuple[List[re.Pattern], List[re.Pattern]]:
    prefixes, suffixes = [], []
    with open(BOILERPLATE_PATH, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip() or line.startswith("#"):
                continue
            position, pattern = line.rstrip("\n").split("\t", 1)
            compiled = re.compile(pattern, re.IGNORECASE)
            (prefixes if position == "prefix" else suffixes).append(compiled)
    return prefixes, suffixes


def strip_boilerplate(text: str) -> str:
    """Remove leading acknowledgements and trailing sign-offs around a rewrite."""
    prefixes, suffixes = _boilerplate_patterns()
    text = text.strip()
    changed = True
    while changed and text:
        changed = False
        for pattern in prefixes:
            match = pattern.match(text)
            if match and match.end() > 0:
                text = text[match.end():].lstrip()
                changed = True
        for pattern in suffixes:
            match = pattern.search(text)
            if match and match.start() < len(text):
                text = text[: match.start()].rstrip()
                changed = True
    return text.strip()


def postprocess(raw_text: str, strategy: PromptStrategy) -> str:
    """
    Extract the rewrite from a raw response.

    Reasoning blocks are dropped, chain-of-thought responses are cut to their
    "## Rewritten text" section and boilerplate is stripped.

    Raises:
        ExtractionFailureError: A chain-of-thought response has no rewritten-text section
    """
    text = _THINK_RE.sub("", raw_text)
    lowered = text.lower()
    if THINK_CLOSE_TAG in lowered:
        text = text[lowered.rindex(THINK_CLOSE_TAG) + len(THINK_CLOSE_TAG):]
    elif THINK_OPEN_TAG in lowered:
        # reasoning was cut off before the answer
        text = text[: lowered.index(THINK_OPEN_TAG)]
    if strategy.kind is PromptKind.CHAIN_OF_THOUGHT:
        sections = list(_REWRITTEN_SECTION_RE.finditer(text))
        if not sections:
            raise ExtractionFailureError("Response has no '## Rewritten text' section")
        text = text[sections[-1].end():]
    return strip_boilerplate(text)


# -----------------------------------------------------------------------------
# Journal
# -----------------------------------------------------------------------------

class ResponseJournal:
    """
    Append-only JSONL journal of response records.

    A single lock serializes writes. When a record id appears several times the last
    occurrence wins, which lets selection flags be updated by appending.
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._lock = asyncio.Lock()

    def load(self) -> Dict[str, ResponseRecord]:
        if not self.path.exists():
            return {}
        records = {}
        for data in read_jsonl(self.path):
            if not data:
                continue
            record = ResponseRecord.model_validate(data)
            records[record.record_id] = record
        logger.info(f"Loaded {len(records)} journaled records from {self.path}")
        return records

    async def append(self, record: ResponseRecord) -> None:
        async with self._lock:
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(record.model_dump_json() + "\n")
                handle.flush()


def save_records(records: Iterable[ResponseRecord], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(record.model_dump_json() + "\n")


def load_records(path: Union[str, Path]) -> List[ResponseRecord]:
    """Load records; duplicate ids keep their last occurrence, in first-seen order."""
    records: Dict[str, ResponseRecord] = {}
    for data in read_jsonl(path):
        if data:
            record = ResponseRecord.model_validate(data)
            records[record.record_id] = record
    return list(records.values())


# -----------------------------------------------------------------------------
# Running
# -----------------------------------------------------------------------------

def default_goal_mapper(config: GoalSpaceConfig) -> GoalMapper:
    """Map rewrites with the full metric stack; short rewrites are scored below MTLD's seed floor."""
    def mapper(text: str) -> GoalVector:
        return map_to_goalspace(text, config, enforce_validity_floor=False)
    return mapper


def steering_error_scorer(item: ProbeItem, z_hat: GoalVector) -> float:
    return float(np.linalg.norm(item.z_star.array - z_hat.array))


async def _attempt(
    client: RewriteClient,
    item: ProbeItem,
    prompt: RenderedPrompt,
    attempt_index: int,
    decoding: DecodingConfig,
    goal_mapper: GoalMapper,
    selected: bool,
) -> ResponseRecord:
    record = ResponseRecord(
        record_id=record_id_for(item.item_id, attempt_index),
        item_id=item.item_id,
        attempt_index=attempt_index,
        strategy=prompt.strategy.id,
        decoding=decoding,
        selected=selected,
    )
    try:
        completion = await client.complete(prompt, item.source_text, decoding)
    except TransportFailureError as e:
        logger.error(f"Transport failure for {record.record_id}: {e}")
        return record.model_copy(update={
            "filter_status": FilterStatus.REJECTED,
            "reject_reason": REJECT_TRANSPORT,
            "transport_retries": e.retries,
            "selected": False,
        })
    update = {
        "raw_text": completion.raw_text,
        "transport_retries": completion.transport_retries,
        "min_p_acknowledged": completion.min_p_acknowledged,
    }
    try:
        rewrite = postprocess(completion.raw_text, prompt.strategy)
    except ExtractionFailureError as e:
        logger.warning(f"Extraction failure for {record.record_id}: {e}")
        update.update({"filter_status": FilterStatus.REJECTED, "reject_reason": REJECT_EXTRACTION, "selected": False})
        return record.model_copy(update=update)
    update["rewrite_text"] = rewrite
    try:
        update["z_hat"] = goal_mapper(rewrite)
    except MetricError as e:
        logger.warning(f"Goal mapping failed for {record.record_id}: {e}")
        update["metric_error"] = str(e)
    return ResponseRecord.model_validate({**record.model_dump(), **update})


def select_best(item: ProbeItem, records: Sequence[ResponseRecord], scorer: Scorer = steering_error_scorer) -> int:
    """
    Pick the attempt with the lowest score; ties go to the lowest attempt index.

    Returns:
        Position of the chosen record in records

    Raises:
        NoValidCandidateError: No record has a usable rewrite
    """
    best: Optional[Tuple[float, int, int]] = None
    for position, record in enumerate(records):
        if not record.usable:
            continue
        key = (scorer(item, record.z_hat), record.attempt_index, position)
        if best is None or key < best:
            best = key
    if best is None:
        raise NoValidCandidateError(f"No usable candidate among {len(records)} attempts for {item.item_id}")
    return best[2]


def mark_selection(item: ProbeItem, records: Sequence[ResponseRecord], scorer: Scorer = steering_error_scorer) -> List[ResponseRecord]:
    """Return copies of records with exactly the best one flagged as selected (none if all failed)."""
    try:
        chosen = select_best(item, records, scorer)
    except NoValidCandidateError:
        logger.warning(f"No valid best-of-{len(records)} candidate for {item.item_id}")
        chosen = -1
    return [record.model_copy(update={"selected": position == chosen}) for position, record in enumerate(records)]


async def best_of_n(
    item: ProbeItem,
    client: RewriteClient,
    n: int,
    decoding: DecodingConfig,
    goal_mapper: GoalMapper,
    scorer: Scorer = steering_error_scorer,
) -> List[ResponseRecord]:
    """
    Draw n sampled rewrites and flag the one closest to the target.

    Returns:
        All n records, exactly one with selected=True

    Raises:
        NoValidCandidateError: None of the attempts produced a usable rewrite
    """
    if n < 1:
        raise InvalidArgumentError(f"n must be positive, got {n}")
    records = await asyncio.gather(
        *(_attempt(client, item, item.prompt, index, decoding, goal_mapper, selected=False) for index in range(n))
    )
    chosen = select_best(item, records, scorer)
    return [record.model_copy(update={"selected": position == chosen}) for position, record in enumerate(records)]


def best_of_n_curve(
    item: ProbeItem, records: Sequence[ResponseRecord], scorer: Scorer = steering_error_scorer
) -> List[Optional[float]]:
    """
    Score of the best candidate among the first k attempts, for k = 1..N.

    Entries stay None until the first usable attempt; the curve is non-increasing afterwards.
    """
    ordered = sorted(records, key=lambda record: record.attempt_index)
    curve: List[Optional[float]] = []
    best: Optional[float] = None
    for record in ordered:
        if record.usable:
            score = scorer(item, record.z_hat)
            best = score if best is None else min(best, score)
        curve.append(best)
    return curve


async def run_probe(
    probe: Probe,
    client: RewriteClient,
    decoding: Optional[DecodingConfig] = None,
    strategy: Optional[PromptStrategy] = None,
    parallelism: int = DEFAULT_PARALLELISM,
    journal: Optional[ResponseJournal] = None,
    goal_mapper: Optional[GoalMapper] = None,
    best_of: int = 1,
    retry_failed: bool = False,
) -> List[ResponseRecord]:
    """
    Run every probe item against the endpoint.

    Items already present in the journal are not re-sent, so an interrupted run can be
    resumed with the same journal. At most `parallelism` requests are in flight.

    Args:
        probe: The probe to run
        client: Rewrite client
        decoding: Decoding parameters; greedy by default, sampled when best_of > 1
        strategy: Re-render prompts under this strategy when it differs from the probe's
        parallelism: Maximum concurrent requests
        journal: Optional journal for resumption
        goal_mapper: Maps rewrites to goal vectors; defaults to the probe's goal-space metrics
        best_of: Attempts per item; the closest attempt is flagged as selected
        retry_failed: Re-send journaled transport failures

    Returns:
        Records sorted by probe item order, then attempt index
    """
    if parallelism < 1 or best_of < 1:
        raise InvalidArgumentError("parallelism and best_of must be positive")
    decoding = decoding or (DecodingConfig.sampled() if best_of > 1 else DecodingConfig.greedy())
    goal_mapper = goal_mapper or default_goal_mapper(probe.config)
    done = journal.load() if journal else {}
    if retry_failed:
        done = {key: record for key, record in done.items() if record.reject_reason != REJECT_TRANSPORT}
    semaphore = asyncio.Semaphore(parallelism)

    prompts: Dict[str, RenderedPrompt] = {}
    for item in probe.items:
        if strategy is not None and strategy != item.strategy:
            prompts[item.item_id] = render_prompt(item, strategy, np.random.default_rng(item.rng_seed))
        else:
            prompts[item.item_id] = item.prompt

    async def run_one(item: ProbeItem, attempt_index: int) -> ResponseRecord:
        async with semaphore:
            record = await _attempt(
                client, item, prompts[item.item_id], attempt_index, decoding, goal_mapper, selected=best_of == 1
            )
        if journal:
            await journal.append(record)
        return record

    tasks = []
    for item in probe.items:
        for attempt_index in range(best_of):
            if record_id_for(item.item_id, attempt_index) not in done:
                tasks.append(run_one(item, attempt_index))
    logger.info(f"Running {len(tasks)} requests ({len(done)} already journaled, parallelism {parallelism})")
    try:
        fresh = await asyncio.gather(*tasks)
    except CredentialError:
        logger.error("Endpoint rejected the credentials; stopping the run", exc_info=True)
        raise
    by_id = {**done, **{record.record_id: record for record in fresh}}

    results: List[ResponseRecord] = []
    for item in probe.items:
        attempts = [by_id[record_id_for(item.item_id, index)] for index in range(best_of)]
        if best_of > 1:
            marked = mark_selection(item, attempts)
            if journal:
                for before, after in zip(attempts, marked):
                    if before.selected != after.selected:
                        await journal.append(after)
            attempts = marked
        results.extend(attempts)
    return results
