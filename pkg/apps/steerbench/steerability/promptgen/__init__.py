"""
Prompt generator: renders rewrite prompts for probe items under the supported strategies,
and the prompt that condenses chain-of-thought edits into reusable instructions.
"""

import logging
import re
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from steerability.errors import InvalidArgumentError, InvalidStrategyError, OutOfRangeError
from steerability.promptgen.constants import (
    CHAIN_OF_THOUGHT_SCAFFOLD,
    DIMENSION_PHRASES,
    INSTRUCTION_BANK,
    INSTRUCTION_EXTRACTION_TEMPLATE,
    INSTRUCTION_INTRO,
    MAX_DELTA,
    MIN_DELTA,
    MUCH_ABOVE,
    NEGATIVE_PROMPT,
    OPEN_REWRITE_TEMPLATE,
    RESPOND_ONLY,
    REWRITE_TEMPLATE,
    SLIGHTLY_BELOW,
    UNDERSPECIFIED_PHRASES,
)

if TYPE_CHECKING:
    from steerability.probegen import ProbeItem

# Configure logging
logger = logging.getLogger(__name__)

_DELTA_TOLERANCE = 1e-9
_LIST_ITEM_RE = re.compile(r"^\s*(?:\d+[.)]|[-*•])\s+(.+?)\s*$")


class PromptKind(str, Enum):
    DIRECT = "direct"
    UNDERSPECIFIED = "underspecified"
    INSTRUCTION_ONLY = "instruction_only"
    DIRECT_PLUS_INSTRUCTION = "direct_plus_instruction"
    CHAIN_OF_THOUGHT = "chain_of_thought"

    @property
    def names_dimensions(self) -> bool:
        return self in (PromptKind.DIRECT, PromptKind.DIRECT_PLUS_INSTRUCTION, PromptKind.CHAIN_OF_THOUGHT)

    @property
    def uses_instructions(self) -> bool:
        return self in (PromptKind.INSTRUCTION_ONLY, PromptKind.DIRECT_PLUS_INSTRUCTION)


class Modifier(str, Enum):
    SLIGHTLY = "slightly"
    NONE = "none"
    MUCH = "much"


def _check_strategy(kind: PromptKind, negative: bool) -> None:
    if negative and not kind.names_dimensions:
        raise InvalidStrategyError(f"Negative prompting needs named dimensions; '{kind.value}' names none")


class PromptStrategy(BaseModel):
    """A prompt kind plus the optional negative-prompt flag."""
    kind: PromptKind = PromptKind.DIRECT
    negative: bool = False

    @model_validator(mode="after")
    def check_negative(self) -> "PromptStrategy":
        _check_strategy(self.kind, self.negative)
        return self

    @property
    def id(self) -> str:
        return f"{self.kind.value}+negative" if self.negative else self.kind.value

    @classmethod
    def from_id(cls, strategy_id: str) -> "PromptStrategy":
        """Parse ids such as "direct", "chain_of_thought+negative"."""
        name, _, suffix = strategy_id.partition("+")
        if suffix not in ("", "negative"):
            raise InvalidStrategyError(f"Unknown strategy suffix in '{strategy_id}'")
        try:
            kind = PromptKind(name)
        except ValueError as e:
            raise InvalidStrategyError(f"Unknown prompt kind '{name}'") from e
        _check_strategy(kind, suffix == "negative")
        return cls(kind=kind, negative=suffix == "negative")


class RenderedPrompt(BaseModel):
    """The instruction part of a rewrite prompt; the source text is appended when sending."""
    text: str
    strategy: PromptStrategy
    slot_order: List[str] = Field(default_factory=list)
    instructions: List[str] = Field(default_factory=list)
    underspecified_phrase: Optional[str] = None

    def message(self, source_text: str) -> str:
        return f"{self.text}\n\n{source_text}"


def modifier_for(delta: float) -> Modifier:
    """
    Pick the adverb for a requested change.

    Raises:
        OutOfRangeError: |delta| is outside [0.1, 0.7]
    """
    magnitude = abs(delta)
    if magnitude < MIN_DELTA - _DELTA_TOLERANCE or magnitude > MAX_DELTA + _DELTA_TOLERANCE:
        raise OutOfRangeError(f"|delta| must lie in [{MIN_DELTA}, {MAX_DELTA}], got {delta}")
    if magnitude < SLIGHTLY_BELOW:
        return Modifier.SLIGHTLY
    if magnitude > MUCH_ABOVE:
        return Modifier.MUCH
    return Modifier.NONE


def dimension_phrase(dimension_id: str, delta: float) -> str:
    """Phrase such as "much more formal" for one active dimension."""
    modifier = modifier_for(delta)
    increase, decrease = DIMENSION_PHRASES.get(
        dimension_id,
        (f"{{mod}}higher in {dimension_id.replace('_', ' ')}", f"{{mod}}lower in {dimension_id.replace('_', ' ')}"),
    )
    template = increase if delta > 0 else decrease
    mod = "" if modifier is Modifier.NONE else f"{modifier.value} "
    return template.format(mod=mod)


def join_slots(phrases: Sequence[str]) -> str:
    if not phrases:
        raise InvalidArgumentError("At least one slot is required")
    if len(phrases) == 1:
        return phrases[0]
    return ", ".join(phrases[:-1]) + ", and " + phrases[-1]


def _bank_instructions(slot_order: Sequence[str], deltas: dict, rng: np.random.Generator) -> List[str]:
    instructions = []
    for dimension_id in slot_order:
        options = INSTRUCTION_BANK.get((dimension_id, 1 if deltas[dimension_id] > 0 else -1))
        if options:
            instructions.append(options[int(rng.integers(len(options)))])
    return instructions


def render_prompt(
    item: "ProbeItem",
    strategy: PromptStrategy,
    rng: np.random.Generator,
    instructions: Optional[Sequence[str]] = None,
) -> RenderedPrompt:
    """
    Render the rewrite prompt for a probe item.

    Active dimensions are named in a random order drawn from rng; every active dimension
    appears exactly once. Instruction strategies use the supplied instruction list or,
    when none is given, one bundled edit per active dimension.

    Args:
        item: The probe item (source text, goal deltas)
        strategy: Prompt strategy
        rng: Random generator, consumed deterministically
        instructions: Optional instruction list for instruction strategies

    Returns:
        RenderedPrompt whose message(source_text) is sent to the model
    """
    _check_strategy(strategy.kind, strategy.negative)
    active_ids = [dim for dim, active in zip(item.dimensions, item.active) if active]
    if not active_ids:
        raise InvalidArgumentError(f"Probe item {item.item_id} has no active dimension")
    kind = strategy.kind
    slot_order = [active_ids[position] for position in rng.permutation(len(active_ids))]

    parts: List[str] = []
    phrase = None
    if kind is PromptKind.UNDERSPECIFIED:
        phrase = UNDERSPECIFIED_PHRASES[int(rng.integers(len(UNDERSPECIFIED_PHRASES)))]
        parts.append(REWRITE_TEMPLATE.format(slots=phrase))
    elif kind is PromptKind.INSTRUCTION_ONLY:
        parts.append(OPEN_REWRITE_TEMPLATE)
    else:
        parts.append(REWRITE_TEMPLATE.format(slots=join_slots([dimension_phrase(dim, item.deltas[dim]) for dim in slot_order])))
    if strategy.negative:
        parts.append(NEGATIVE_PROMPT)
    parts.append(RESPOND_ONLY)
    text = " ".join(parts)

    chosen: List[str] = []
    if kind.uses_instructions:
        chosen = list(instructions) if instructions else _bank_instructions(slot_order, item.deltas, rng)
        if not chosen:
            raise InvalidArgumentError(f"No instructions available for item {item.item_id}")
        bullets = "\n".join(f"- {instruction}" for instruction in chosen)
        text = f"{text} {INSTRUCTION_INTRO}\n\n{bullets}"
    if kind is PromptKind.CHAIN_OF_THOUGHT:
        text = f"{text}\n\n{CHAIN_OF_THOUGHT_SCAFFOLD}"

    return RenderedPrompt(
        text=text,
        strategy=strategy,
        slot_order=slot_order if kind.names_dimensions else [],
        instructions=chosen,
        underspecified_phrase=phrase,
    )


def render_instruction_extraction_prompt(edits: str) -> str:
    """Prompt asking a model to condense proposed edits into a numbered instruction list."""
    if not edits.strip():
        raise InvalidArgumentError("Edits text is empty")
    return INSTRUCTION_EXTRACTION_TEMPLATE.format(edits=edits.strip())


def parse_instruction_list(text: str) -> List[str]:
    """Parse numbered or bulleted lines; other lines are ignored."""
    instructions = []
    for line in text.splitlines():
        match = _LIST_ITEM_RE.match(line)
        if match:
            instructions.append(match.group(1))
    return instructions


def extract_edits(raw_text: str) -> Optional[str]:
    """Return the "## Edits" section of a chain-of-thought response, if present."""
    match = re.search(r"#{1,4}\s*Edits\s*:?\s*\n(.*?)(?=\n#{1,4}\s*Rewritten text|\Z)", raw_text, re.IGNORECASE | re.DOTALL)
    if not match or not match.group(1).strip():
        return None
    return match.group(1).strip()


def load_instructions(path: Union[str, Path]) -> List[str]:
    """Load an instruction list, one instruction per line (bullets and numbering are stripped)."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    instructions = []
    for line in lines:
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        match = _LIST_ITEM_RE.match(line)
        instructions.append(match.group(1) if match else line.strip())
    logger.info(f"Loaded {len(instructions)} instructions from {path}")
    return instructions


def save_instructions(instructions: Sequence[str], path: Union[str, Path]) -> None:
    Path(path).write_text("".join(f"{index}. {text}\n" for index, text in enumerate(instructions, 1)), encoding="utf-8")


def strategy_choices() -> Tuple[str, ...]:
    """Every valid strategy id, for CLI option validation."""
    ids = []
    for kind in PromptKind:
        ids.append(kind.value)
        if kind.names_dimensions:
            ids.append(f"{kind.value}+negative")
    return tuple(ids)
