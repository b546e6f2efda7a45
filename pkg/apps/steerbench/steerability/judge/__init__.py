"""
LLM-as-judge groundedness filtering with human review, plus goal-dimension validity judgments.
"""

import asyncio
import json
import logging
import os
import re
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from steerability.base_client import BaseClient
from steerability.errors import InvalidArgumentError, TransportFailureError, UndefinedTauError
from steerability.judge.constants import (
    ANSWER_FALLBACK_PATTERN,
    APPROVE,
    DIMENSION_FALLBACK_PATTERN,
    DIMENSION_KEYS,
    DIMENSION_TEMPLATE,
    FENCED_BLOCK_PATTERN,
    GROUNDEDNESS_TEMPLATE,
    OVERRULE,
    RATIONALE_FALLBACK_PATTERN,
    REJECT_JUDGE,
    REVIEW_YES_SAMPLE,
    TRAILING_COMMA_PATTERN,
    TRANSPORT_RATIONALE,
)
from steerability.llmrun import FilterStatus, ResponseRecord
from steerability.llmrun.constants import DEFAULT_PARALLELISM
from steerability.probegen import Probe, read_jsonl
from steerability.steermetrics import MetricRecord, TauResult, kendall_tau

# Configure logging
logger = logging.getLogger(__name__)

Answer = Optional[Literal["Yes", "No"]]
Preference = Optional[Literal["A", "B", "Tie"]]

_FENCED_RE = re.compile(FENCED_BLOCK_PATTERN, re.DOTALL | re.IGNORECASE)
_TRAILING_COMMA_RE = re.compile(TRAILING_COMMA_PATTERN)
_ANSWER_RE = re.compile(ANSWER_FALLBACK_PATTERN, re.IGNORECASE)
_RATIONALE_RE = re.compile(RATIONALE_FALLBACK_PATTERN, re.IGNORECASE | re.DOTALL)


# -----------------------------------------------------------------------------
# Data Models
# -----------------------------------------------------------------------------

class JudgePrompt(BaseModel):
    text: str
    order_flipped: bool


class JudgeVerdict(BaseModel):
    """Groundedness verdict for one response record; answer is None when parsing failed."""
    record_id: str = ""
    answer: Answer = None
    rationale: str = ""
    order_flipped: bool = False


class DimensionJudgment(BaseModel):
    """
    Per-dimension A/B/Tie answers to "which version is higher".

    Answers are stored canonically, with A the original and B the rewrite, whatever order
    the judge saw.
    """
    record_id: str = ""
    answers: Dict[str, Preference] = Field(default_factory=dict)
    rationales: Dict[str, str] = Field(default_factory=dict)
    order_flipped: bool = False


class ReviewDecision(BaseModel):
    """Final groundedness call for one record after optional human review."""
    record_id: str
    verdict: JudgeVerdict
    human_override: Optional[Literal["approve", "overrule"]] = None
    final: Literal["grounded", "rejected"]


class ReviewItem(BaseModel):
    verdict: JudgeVerdict
    original: str
    rewrite: str


# -----------------------------------------------------------------------------
# Prompts and parsing
# -----------------------------------------------------------------------------

def _ordered(original: str, rewrite: str, rng: np.random.Generator) -> Tuple[str, str, bool]:
    if not original.strip() or not rewrite.strip():
        raise InvalidArgumentError("Both texts must be non-empty to be judged")
    flipped = bool(rng.random() < 0.5)
    return (rewrite, original, True) if flipped else (original, rewrite, False)


def render_groundedness_prompt(original: str, rewrite: str, rng: np.random.Generator) -> JudgePrompt:
    """
    Render the groundedness prompt with the two texts in random A/B order.

    Args:
        original: The source text
        rewrite: The model's rewrite
        rng: Decides the order

    Returns:
        The prompt text and whether the rewrite was shown as version A
    """
    version_a, version_b, flipped = _ordered(original, rewrite, rng)
    return JudgePrompt(text=GROUNDEDNESS_TEMPLATE.substitute(version_a=version_a, version_b=version_b),
                       order_flipped=flipped)


def render_dimension_judge_prompt(original: str, rewrite: str, rng: np.random.Generator) -> JudgePrompt:
    version_a, version_b, flipped = _ordered(original, rewrite, rng)
    return JudgePrompt(text=DIMENSION_TEMPLATE.substitute(version_a=version_a, version_b=version_b),
                       order_flipped=flipped)


def _extract_json_object(text: str) -> Optional[Dict[str, Any]]:
    """Find a JSON object in free text, tolerating code fences, prose and trailing commas."""
    candidates = [match.group(1) for match in _FENCED_RE.finditer(text)] + [text]
    for candidate in candidates:
        start, end = candidate.find("{"), candidate.rfind("}")
        if start < 0 or end <= start:
            continue
        snippet = _TRAILING_COMMA_RE.sub(r"\1", candidate[start:end + 1])
        try:
            data = json.loads(snippet)
        except json.JSONDecodeError:
            continue
        if isinstance(data, dict):
            return data
    return None


def _scalar(value: Any) -> Optional[str]:
    if isinstance(value, list):
        value = value[0] if value else None
    if value is None:
        return None
    return str(value).strip().strip("[]\"' ").strip()


def _yes_no(value: Any) -> Answer:
    text = (_scalar(value) or "").lower()
    if text == "yes":
        return "Yes"
    if text == "no":
        return "No"
    return None


def _preference(value: Any) -> Preference:
    text = (_scalar(value) or "").lower().rstrip(",.")
    return {"a": "A", "b": "B", "tie": "Tie"}.get(text)


def parse_judge_response(text: str, record_id: str = "", order_flipped: bool = False) -> JudgeVerdict:
    """
    Extract the Yes/No answer and rationale from a groundedness response.

    Falls back to regex extraction when no JSON object parses; answer is None when
    neither finds a Yes/No.
    """
    data = _extract_json_object(text or "")
    answer: Answer = None
    rationale = ""
    if data is not None:
        answer = _yes_no(data.get("answer"))
        rationale = _scalar(data.get("rationale")) or ""
    if answer is None:
        match = _ANSWER_RE.search(text or "")
        if match:
            answer = "Yes" if match.group(1).lower() == "yes" else "No"
            rationale_match = _RATIONALE_RE.search(text)
            rationale = rationale or (rationale_match.group(1) if rationale_match else "")
    if answer is None:
        logger.warning(f"Could not parse a judge answer for {record_id or 'response'}")
    return JudgeVerdict(record_id=record_id, answer=answer, rationale=rationale, order_flipped=order_flipped)


def _deflip(preference: Preference) -> Preference:
    return {"A": "B", "B": "A"}.get(preference, preference) if preference else None


def parse_dimension_judgments(text: str, record_id: str = "", order_flipped: bool = False) -> DimensionJudgment:
    """
    Extract the four per-dimension answers; a missing or unparsable key leaves that dimension None.

    When order_flipped is set the answers are relabeled so that A is the original.
    """
    data = _extract_json_object(text or "") or {}
    answers: Dict[str, Preference] = {}
    rationales: Dict[str, str] = {}
    for key, dimension in DIMENSION_KEYS.items():
        value = data.get(key)
        preference: Preference = None
        if isinstance(value, dict):
            preference = _preference(value.get("answer"))
            rationales[dimension] = _scalar(value.get("rationale")) or ""
        elif value is not None:
            preference = _preference(value)
        if preference is None:
            match = re.search(DIMENSION_FALLBACK_PATTERN.format(key=key), text or "", re.IGNORECASE)
            if match:
                preference = _preference(match.group(1))
        answers[dimension] = _deflip(preference) if order_flipped else preference
    return DimensionJudgment(record_id=record_id, answers=answers, rationales=rationales, order_flipped=order_flipped)


# -----------------------------------------------------------------------------
# Client
# -----------------------------------------------------------------------------

class JudgeClient(BaseClient):
    """Client for the judge endpoint, which may serve a different model than the one evaluated."""

    async def _ask(self, prompt: JudgePrompt) -> str:
        result = await self.post_chat(self.create_payload(prompt.text, temperature=0.0))
        return result.text

    async def judge_groundedness(
        self, original: str, rewrite: str, rng: np.random.Generator, record_id: str = ""
    ) -> JudgeVerdict:
        """Ask whether the rewrite is grounded in the original; transport failures yield a None answer."""
        prompt = render_groundedness_prompt(original, rewrite, rng)
        try:
            text = await self._ask(prompt)
        except TransportFailureError as e:
            logger.error(f"Judge request failed for {record_id}: {e}")
            return JudgeVerdict(record_id=record_id, rationale=TRANSPORT_RATIONALE.format(error=e),
                                order_flipped=prompt.order_flipped)
        return parse_judge_response(text, record_id=record_id, order_flipped=prompt.order_flipped)

    async def judge_dimensions(
        self, original: str, rewrite: str, rng: np.random.Generator, record_id: str = ""
    ) -> DimensionJudgment:
        prompt = render_dimension_judge_prompt(original, rewrite, rng)
        try:
            text = await self._ask(prompt)
        except TransportFailureError as e:
            logger.error(f"Dimension judge request failed for {record_id}: {e}")
            text = ""
        return parse_dimension_judgments(text, record_id=record_id, order_flipped=prompt.order_flipped)


def _judgeable(records: Iterable[ResponseRecord], probe: Probe) -> List[Tuple[ResponseRecord, str]]:
    sources = {item.item_id: item.source_text for item in probe.items}
    pairs = []
    for record in records:
        if record.selected and record.rewrite_text and record.filter_status == FilterStatus.PENDING:
            if record.item_id not in sources:
                raise InvalidArgumentError(f"Record {record.record_id} refers to unknown item {record.item_id}")
            pairs.append((record, sources[record.item_id]))
    return pairs


async def judge_responses(
    records: Sequence[ResponseRecord],
    probe: Probe,
    client: JudgeClient,
    seed: int = 0,
    parallelism: int = DEFAULT_PARALLELISM,
) -> List[JudgeVerdict]:
    """
    Judge groundedness for every selected, pending record with a rewrite.

    Each record's A/B order comes from its own generator seeded by (seed, position),
    so the orders do not depend on request completion order.

    Returns:
        Verdicts in record order
    """
    if parallelism < 1:
        raise InvalidArgumentError(f"parallelism must be positive, got {parallelism}")
    pairs = _judgeable(records, probe)
    semaphore = asyncio.Semaphore(parallelism)

    async def judge_one(position: int, record: ResponseRecord, original: str) -> JudgeVerdict:
        async with semaphore:
            return await client.judge_groundedness(
                original, record.rewrite_text, np.random.default_rng([seed, position]), record_id=record.record_id
            )

    logger.info(f"Judging groundedness of {len(pairs)} records")
    return list(await asyncio.gather(*(judge_one(i, record, original) for i, (record, original) in enumerate(pairs))))


async def judge_dimension_validity(
    records: Sequence[ResponseRecord],
    probe: Probe,
    client: JudgeClient,
    seed: int = 0,
    parallelism: int = DEFAULT_PARALLELISM,
) -> List[DimensionJudgment]:
    """Ask the judge which of original and rewrite is higher on each goal dimension."""
    sources = {item.item_id: item.source_text for item in probe.items}
    eligible = [record for record in records if record.selected and record.rewrite_text and record.item_id in sources]
    semaphore = asyncio.Semaphore(parallelism)

    async def judge_one(position: int, record: ResponseRecord) -> DimensionJudgment:
        async with semaphore:
            return await client.judge_dimensions(
                sources[record.item_id], record.rewrite_text, np.random.default_rng([seed, position]),
                record_id=record.record_id,
            )

    return list(await asyncio.gather(*(judge_one(i, record) for i, record in enumerate(eligible))))


def dimension_agreement(
    judgments: Sequence[DimensionJudgment], metrics: Sequence[MetricRecord]
) -> Dict[str, TauResult]:
    """
    Kendall's tau between the judge's "which is higher" answers and measured goal movement.

    A canonical "B" (rewrite higher) counts as +1, "A" as -1 and "Tie" as 0; the measured
    side is the sign of ẑ − z0 on that dimension. Dimensions with an undefined tau are omitted.
    """
    by_record = {metric.record_id: metric for metric in metrics}
    signs = {"A": -1.0, "B": 1.0, "Tie": 0.0}
    pairs: Dict[str, List[Tuple[float, float]]] = {}
    for judgment in judgments:
        metric = by_record.get(judgment.record_id)
        if metric is None:
            continue
        achieved = metric.achieved
        for dimension, answer in judgment.answers.items():
            if answer is None or dimension not in metric.dimensions:
                continue
            position = metric.dimensions.index(dimension)
            pairs.setdefault(dimension, []).append((signs[answer], float(np.sign(achieved[position]))))
    results = {}
    for dimension, dimension_pairs in pairs.items():
        try:
            results[dimension] = kendall_tau(dimension_pairs)
        except (UndefinedTauError, InvalidArgumentError) as e:
            logger.warning(f"No agreement for {dimension}: {e}")
    return results


def save_verdicts(verdicts: Iterable[BaseModel], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for verdict in verdicts:
            handle.write(verdict.model_dump_json() + "\n")


def load_verdicts(path: Union[str, Path]) -> List[JudgeVerdict]:
    return [JudgeVerdict.model_validate(data) for data in read_jsonl(path) if data]


# -----------------------------------------------------------------------------
# Review
# -----------------------------------------------------------------------------

def final_status(verdict: JudgeVerdict, human_override: Optional[str] = None) -> Literal["grounded", "rejected"]:
    """A Yes verdict is grounded, No/None rejected; a human overrule flips the call."""
    grounded = verdict.answer == "Yes"
    if human_override == OVERRULE:
        grounded = not grounded
    elif human_override not in (None, APPROVE):
        raise InvalidArgumentError(f"Unknown review decision '{human_override}'")
    return "grounded" if grounded else "rejected"


def build_review_queue(
    verdicts: Sequence[JudgeVerdict], rng: np.random.Generator, yes_sample: int = REVIEW_YES_SAMPLE
) -> List[JudgeVerdict]:
    """
    Flag every No/None verdict plus a random sample of Yes verdicts for human review.

    Returns:
        Flagged verdicts followed by the sampled Yes verdicts, each group in input order
    """
    flagged = [verdict for verdict in verdicts if verdict.answer != "Yes"]
    yes = [verdict for verdict in verdicts if verdict.answer == "Yes"]
    if len(yes) > yes_sample:
        keep = np.sort(rng.choice(len(yes), size=yes_sample, replace=False))
        yes = [yes[index] for index in keep]
    logger.info(f"Review queue: {len(flagged)} flagged, {len(yes)} sampled Yes verdicts")
    return flagged + yes


def review_items(
    queue: Sequence[JudgeVerdict], records: Sequence[ResponseRecord], probe: Probe
) -> List[ReviewItem]:
    """Attach the original and rewritten texts to each queued verdict."""
    by_id = {record.record_id: record for record in records}
    sources = {item.item_id: item.source_text for item in probe.items}
    items = []
    for verdict in queue:
        record = by_id.get(verdict.record_id)
        if record is None:
            raise InvalidArgumentError(f"Verdict refers to unknown record {verdict.record_id}")
        items.append(ReviewItem(verdict=verdict, original=sources[record.item_id], rewrite=record.rewrite_text or ""))
    return items


Decider = Callable[[ReviewItem], str]


class ReviewSession:
    """
    Review decisions persisted to a JSONL file.

    The file is rewritten atomically after every decision, so an interrupted session keeps
    what was decided and a new session over the same file resumes where it stopped.
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.decisions: Dict[str, ReviewDecision] = {}
        if self.path.exists():
            for data in read_jsonl(self.path):
                if data:
                    decision = ReviewDecision.model_validate(data)
                    self.decisions[decision.record_id] = decision
            logger.info(f"Resuming review with {len(self.decisions)} decisions from {self.path}")

    def _persist(self) -> None:
        tmp_path = self.path.with_name(self.path.name + ".tmp")
        with open(tmp_path, "w", encoding="utf-8") as handle:
            for decision in self.decisions.values():
                handle.write(decision.model_dump_json() + "\n")
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp_path, self.path)

    def decide(self, verdict: JudgeVerdict, human_override: Optional[str]) -> ReviewDecision:
        decision = ReviewDecision(
            record_id=verdict.record_id,
            verdict=verdict,
            human_override=human_override,
            final=final_status(verdict, human_override),
        )
        self.decisions[verdict.record_id] = decision
        self._persist()
        return decision

    def run(self, queue: Sequence[ReviewItem], decider: Decider) -> List[ReviewDecision]:
        """Ask the decider about every queued item not decided yet."""
        for item in queue:
            if item.verdict.record_id in self.decisions:
                continue
            choice = decider(item)
            if choice not in (APPROVE, OVERRULE):
                raise InvalidArgumentError(f"Review decision must be '{APPROVE}' or '{OVERRULE}', got '{choice}'")
            decision = self.decide(item.verdict, choice)
            logger.debug(f"{decision.record_id}: {choice} -> {decision.final}")
        return [self.decisions[item.verdict.record_id] for item in queue]

    def finalize(self, verdicts: Sequence[JudgeVerdict]) -> List[ReviewDecision]:
        """Record the judge's own call for every verdict nobody reviewed."""
        for verdict in verdicts:
            if verdict.record_id not in self.decisions:
                self.decisions[verdict.record_id] = ReviewDecision(
                    record_id=verdict.record_id, verdict=verdict, final=final_status(verdict)
                )
        self._persist()
        return [self.decisions[verdict.record_id] for verdict in verdicts]


def load_decisions(path: Union[str, Path]) -> List[ReviewDecision]:
    return [ReviewDecision.model_validate(data) for data in read_jsonl(path) if data]


def apply_decisions(records: Sequence[ResponseRecord], decisions: Iterable[ReviewDecision]) -> List[ResponseRecord]:
    """Set each decided record's filter status; records without a decision are returned unchanged."""
    finals = {decision.record_id: decision.final for decision in decisions}
    updated = []
    for record in records:
        final = finals.get(record.record_id)
        if final == "grounded":
            record = record.model_copy(update={"filter_status": FilterStatus.GROUNDED})
        elif final == "rejected":
            record = record.model_copy(update={"filter_status": FilterStatus.REJECTED, "reject_reason": REJECT_JUDGE})
        updated.append(record)
    return updated


def groundedness_counts(decisions: Iterable[ReviewDecision]) -> Dict[str, int]:
    counts = {"grounded": 0, "rejected": 0, "overruled_yes": 0, "overruled_no": 0, "none_verdicts": 0, "reviewed": 0}
    for decision in decisions:
        counts[decision.final] += 1
        if decision.verdict.answer is None:
            counts["none_verdicts"] += 1
        if decision.human_override is not None:
            counts["reviewed"] += 1
        if decision.human_override == OVERRULE:
            counts["overruled_yes" if decision.verdict.answer == "Yes" else "overruled_no"] += 1
    return counts
