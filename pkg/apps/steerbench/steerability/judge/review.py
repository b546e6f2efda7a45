"""
Command-line review dialog for judge verdicts, with a scripted mode that feeds
decisions from a file instead of the terminal.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import click

from steerability.errors import InvalidArgumentError
from steerability.judge import Decider, ReviewDecision, ReviewItem, ReviewSession
from steerability.judge.constants import APPROVE, OVERRULE
from steerability.probegen import read_jsonl

# Configure logging
logger = logging.getLogger(__name__)

RULE = "-" * 72
# Scripted mode echoes the same line click.prompt prints for the choice
REVIEW_QUESTION = "Approve or overrule the judge?"


def render_review_card(item: ReviewItem) -> str:
    """The text shown to the reviewer for one verdict."""
    verdict = item.verdict
    return "\n".join([
        RULE,
        f"Record: {verdict.record_id}",
        RULE,
        "ORIGINAL:",
        item.original,
        "",
        "REWRITE:",
        item.rewrite,
        "",
        f"Judge decision: {verdict.answer or 'None'}",
        f"Rationale: {verdict.rationale or '(none)'}",
        RULE,
    ])


def interactive_decider(item: ReviewItem) -> str:
    click.echo(render_review_card(item))
    return click.prompt(REVIEW_QUESTION, type=click.Choice([APPROVE, OVERRULE]))


class ScriptedDecider:
    """Take decisions from a mapping of record id to approve/overrule."""

    def __init__(self, decisions: Dict[str, str], default: Optional[str] = None, echo: bool = True):
        self.decisions = decisions
        self.default = default
        self.echo = echo

    @classmethod
    def from_file(cls, path: Union[str, Path], default: Optional[str] = None) -> "ScriptedDecider":
        """Read a JSONL file of {"record_id": ..., "decision": "approve"|"overrule"} lines."""
        decisions = {}
        for data in read_jsonl(path):
            if data:
                decisions[data["record_id"]] = data["decision"]
        return cls(decisions, default=default)

    def __call__(self, item: ReviewItem) -> str:
        if self.echo:
            click.echo(render_review_card(item))
        choice = self.decisions.get(item.verdict.record_id, self.default)
        if choice is None:
            raise InvalidArgumentError(f"No scripted decision for {item.verdict.record_id}")
        if self.echo:
            click.echo(f"{REVIEW_QUESTION} ({APPROVE}, {OVERRULE}): {choice}")
        return choice


def interactive_review(
    queue: Sequence[ReviewItem], path: Union[str, Path], decider: Optional[Decider] = None
) -> List[ReviewDecision]:
    """
    Walk the reviewer through the queue, persisting after every decision.

    Args:
        queue: Items to review
        path: Decisions file; existing decisions are kept and skipped
        decider: Source of decisions; the terminal dialog by default

    Returns:
        The decisions for the queued items
    """
    session = ReviewSession(path)
    try:
        return session.run(queue, decider or interactive_decider)
    except (click.Abort, KeyboardInterrupt):
        logger.warning(f"Review aborted; {len(session.decisions)} decisions kept in {path}")
        raise
