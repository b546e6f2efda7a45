"""
Constants for the LLM runner.
Contains response post-processing patterns and default decoding parameters.
"""

from pathlib import Path

BOILERPLATE_PATH = Path(__file__).parent / "resources" / "boilerplate.tsv"

THINK_BLOCK_PATTERN = r"<think>.*?</think>"
THINK_CLOSE_TAG = "</think>"
THINK_OPEN_TAG = "<think>"

REWRITTEN_SECTION_PATTERN = r"^\s*#{1,4}\s*\**rewritten text\**\s*:?\s*$"

DEFAULT_PARALLELISM = 8

# Sampled decoding used for best-of-N and RL rollouts.
SAMPLED_TEMPERATURE = 1.0
SAMPLED_MIN_P = 0.2
SAMPLED_FREQUENCY_PENALTY = 0.1

REJECT_TRANSPORT = "transport-failure"
REJECT_EXTRACTION = "extraction-failure"
