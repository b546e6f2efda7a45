"""
Deterministic text metrics behind the goal-space dimensions.

Every metric works on a TokenizedText so one tokenization is shared by all dimensions
of a text. Tokenization, syllable counting and part-of-speech tagging are rule-based and
use the bundled resource tables, so the same text always maps to the same values.
"""

import logging
import re
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Sequence, Tuple

from sacrebleu.metrics import BLEU

from steerability.errors import BelowValidityFloorError, InvalidArgumentError, UndefinedMetricError
from steerability.textmetrics.constants import (
    ARTICLES,
    FK_INTERCEPT,
    FK_SYLLABLES_PER_WORD,
    FK_WORDS_PER_SENTENCE,
    HIATUS_BLOCKERS,
    HIATUS_PAIRS,
    LEXICON_PATH,
    MTLD_MIN_TOKENS,
    MTLD_THRESHOLD,
    SENTENCE_TERMINATORS,
    SUFFIX_RULES,
    SYLLABLE_EXCEPTIONS_PATH,
    TOKEN_PATTERN,
    VOWELS,
)

# Configure logging
logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(TOKEN_PATTERN)
_HAS_ALNUM_RE = re.compile(r"[^\W_]")
_NUMERIC_RE = re.compile(r"^\d+(?:[.,]\d+)*$")


class PosTag(str, Enum):
    NOUN = "NOUN"
    ADJ = "ADJ"
    ADP = "ADP"
    ART = "ART"
    PRON = "PRON"
    VERB = "VERB"
    ADV = "ADV"
    INTJ = "INTJ"
    OTHER = "OTHER"


DEICTIC_TAGS = frozenset({PosTag.NOUN, PosTag.ADJ, PosTag.ADP, PosTag.ART})
NON_DEICTIC_TAGS = frozenset({PosTag.PRON, PosTag.VERB, PosTag.ADV, PosTag.INTJ})


@dataclass(frozen=True)
class TokenizedText:
    """
    A text split into word tokens, punctuation tokens and sentence spans.

    Sentence spans are half-open ranges over word-token indices; every span holds at least one word.
    """
    word_tokens: Tuple[str, ...]
    punct_tokens: Tuple[str, ...]
    sentences: Tuple[Tuple[int, int], ...]

    @property
    def word_count(self) -> int:
        return len(self.word_tokens)

    def sentence_words(self) -> List[Tuple[str, ...]]:
        return [self.word_tokens[start:end] for start, end in self.sentences]


@dataclass(frozen=True)
class RawMetricValue:
    """An unnormalized metric value for one goal dimension."""
    dimension: str
    value: float


def tokenize(text: str) -> TokenizedText:
    """
    Split a text into word tokens, punctuation tokens and sentences.

    Words are alphanumeric runs, optionally joined by apostrophes or hyphens, and decimal
    numbers. A punctuation token containing '.', '!', '?' or an ellipsis ends the current
    sentence. Trailing words without a terminator form a final sentence.

    Args:
        text: Any Unicode string, possibly empty

    Returns:
        The TokenizedText for the input
    """
    words: List[str] = []
    puncts: List[str] = []
    sentences: List[Tuple[int, int]] = []
    start = 0
    for match in _TOKEN_RE.finditer(text):
        token = match.group(0)
        if _HAS_ALNUM_RE.search(token):
            words.append(token)
            continue
        puncts.append(token)
        if any(char in SENTENCE_TERMINATORS for char in token) and len(words) > start:
            sentences.append((start, len(words)))
            start = len(words)
    if len(words) > start:
        sentences.append((start, len(words)))
    return TokenizedText(tuple(words), tuple(puncts), tuple(sentences))


def _load_table(path: Path) -> Dict[str, str]:
    table: Dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, value = line.split("\t")
            table.setdefault(key.lower(), value)
    return table


@lru_cache(maxsize=1)
def _syllable_exceptions() -> Dict[str, int]:
    return {word: int(count) for word, count in _load_table(SYLLABLE_EXCEPTIONS_PATH).items()}


@lru_cache(maxsize=1)
def _lexicon() -> Dict[str, PosTag]:
    table = {word: PosTag(tag) for word, tag in _load_table(LEXICON_PATH).items()}
    logger.debug(f"Loaded POS lexicon with {len(table)} entries")
    return table


def _is_vowel(word: str, index: int) -> bool:
    char = word[index]
    if char == "y":
        # Leading 'y' and 'y' before a vowel behave as consonants ("yes", "beyond").
        if index == 0:
            return False
        return index + 1 >= len(word) or word[index + 1] not in VOWELS
    if char == "u" and index > 0 and word[index - 1] == "q":
        return False
    return char in VOWELS


def count_syllables(word: str) -> int:
    """
    Count the syllables of an English word with vowel-group heuristics.

    Args:
        word: A non-empty word token

    Returns:
        The syllable count, at least 1
    """
    if not word or not word.strip():
        raise InvalidArgumentError("count_syllables requires a non-empty word")
    lowered = word.lower().replace("’", "'")
    exceptions = _syllable_exceptions()
    if lowered in exceptions:
        return exceptions[lowered]

    letters = re.sub(r"[^a-z]", "", lowered)
    if not letters:
        return 1

    count = 0
    group_start = None
    for index in range(len(letters) + 1):
        vowel = index < len(letters) and _is_vowel(letters, index)
        if vowel and group_start is None:
            group_start = index
        elif not vowel and group_start is not None:
            group = letters[group_start:index]
            count += 1
            for pair in HIATUS_PAIRS:
                position = group.find(pair)
                if position < 0:
                    continue
                preceding = letters[group_start + position - 1] if group_start + position > 0 else ""
                if preceding not in HIATUS_BLOCKERS:
                    count += 1
            group_start = None

    if count > 1 and len(letters) > 2:
        if letters.endswith("e") and not _is_vowel(letters, len(letters) - 2):
            if not (letters.endswith("le") and not _is_vowel(letters, len(letters) - 3)):
                count -= 1
        elif letters.endswith("ed") and letters[-3] not in "td" and not _is_vowel(letters, len(letters) - 3):
            count -= 1
        elif letters.endswith("es") and letters[-3] not in "sxzcgh" and not _is_vowel(letters, len(letters) - 3):
            count -= 1
    return max(count, 1)


def _tag_word(token: str, sentence_initial: bool) -> PosTag:
    lowered = token.lower().replace("’", "'")
    if lowered in ARTICLES:
        return PosTag.ART
    if _NUMERIC_RE.match(lowered):
        return PosTag.OTHER
    lexicon = _lexicon()
    if lowered in lexicon:
        return lexicon[lowered]
    if "'" in lowered:
        head = lowered.split("'", 1)[0]
        if head in ARTICLES:
            return PosTag.ART
        if head in lexicon:
            return lexicon[head]
    # Plural or third-person forms of lexicon entries.
    for suffix, replacement in (("ies", "y"), ("es", ""), ("s", "")):
        if lowered.endswith(suffix) and len(lowered) > len(suffix) + 1:
            stem = lowered[: -len(suffix)] + replacement
            if stem in lexicon and lexicon[stem] in (PosTag.NOUN, PosTag.VERB):
                return lexicon[stem]
    if token[:1].isupper() and not sentence_initial:
        return PosTag.NOUN
    if not lowered.isalpha() and "-" not in lowered:
        return PosTag.OTHER
    for suffix, tag in SUFFIX_RULES:
        if lowered.endswith(suffix) and len(lowered) > len(suffix) + 2:
            return PosTag(tag)
    return PosTag.NOUN


def pos_tag(text: TokenizedText) -> List[PosTag]:
    """
    Tag every word token with a coarse part of speech.

    Lookup order is articles, the bundled lexicon (including contraction heads and plural
    stems), capitalization for mid-sentence proper nouns, suffix rules, and finally NOUN.
    Numbers fall back to OTHER.

    Args:
        text: The tokenized text

    Returns:
        One PosTag per word token
    """
    sentence_starts = {start for start, _ in text.sentences}
    return [_tag_word(token, index in sentence_starts) for index, token in enumerate(text.word_tokens)]


def pos_distribution(text: TokenizedText) -> Dict[PosTag, float]:
    """Percentage of word tokens per tag."""
    if not text.word_tokens:
        raise UndefinedMetricError("POS distribution requires at least one word")
    counts = Counter(pos_tag(text))
    return {tag: 100.0 * counts.get(tag, 0) / text.word_count for tag in PosTag}


def flesch_kincaid(text: TokenizedText) -> float:
    """
    Flesch-Kincaid grade level.

    Raises:
        UndefinedMetricError: The text has no words or no sentences
    """
    if not text.word_tokens or not text.sentences:
        raise UndefinedMetricError("Flesch-Kincaid is undefined without words and sentences")
    words = text.word_count
    syllables = sum(count_syllables(word) for word in text.word_tokens)
    return (
        FK_WORDS_PER_SENTENCE * words / len(text.sentences)
        + FK_SYLLABLES_PER_WORD * syllables / words
        + FK_INTERCEPT
    )


def heylighen_dewaele(text: TokenizedText) -> float:
    """
    Heylighen-Dewaele formality F-score in [0, 100].

    Deictic and non-deictic shares are percentages of all word tokens; OTHER tokens count
    toward the denominator only.
    """
    if not text.word_tokens:
        raise UndefinedMetricError("Formality is undefined without words")
    tags = pos_tag(text)
    deictic = 100.0 * sum(tag in DEICTIC_TAGS for tag in tags) / len(tags)
    non_deictic = 100.0 * sum(tag in NON_DEICTIC_TAGS for tag in tags) / len(tags)
    return (deictic - non_deictic + 100.0) / 2.0


def _mtld_direction(tokens: Sequence[str], threshold: float) -> float:
    types = set()
    token_count = 0
    factors = 0.0
    for token in tokens:
        token_count += 1
        types.add(token)
        if len(types) / token_count < threshold:
            factors += 1.0
            types.clear()
            token_count = 0
    if token_count > 0:
        ttr = len(types) / token_count
        factors += (1.0 - ttr) / (1.0 - threshold)
    if factors <= 0:
        return float(len(tokens))
    return len(tokens) / factors


def mtld(text: TokenizedText, min_tokens: int = MTLD_MIN_TOKENS, threshold: float = MTLD_THRESHOLD) -> float:
    """
    Measure of Textual Lexical Diversity, averaged over a forward and a reverse pass.

    Args:
        text: The tokenized text
        min_tokens: Validity floor; pass 1 to score short texts such as model rewrites
        threshold: Type-token ratio at which a factor closes

    Returns:
        The MTLD value

    Raises:
        BelowValidityFloorError: Fewer than min_tokens word tokens
    """
    if text.word_count < max(min_tokens, 1):
        raise BelowValidityFloorError(f"MTLD needs at least {min_tokens} words, got {text.word_count}")
    tokens = [token.lower() for token in text.word_tokens]
    forward = _mtld_direction(tokens, threshold)
    backward = _mtld_direction(tokens[::-1], threshold)
    return (forward + backward) / 2.0


def word_count(text: TokenizedText) -> float:
    return float(text.word_count)


_BLEU = BLEU(tokenize="none", smooth_method="add-k", smooth_value=1, effective_order=True)


def sentence_bleu(reference: TokenizedText, candidate: TokenizedText) -> float:
    """
    Sentence-level BLEU with add-one smoothing on the 2- to 4-gram precisions.

    Args:
        reference: The source text
        candidate: The rewrite

    Returns:
        BLEU in [0, 1]; 0 when the candidate is empty
    """
    if not candidate.word_tokens or not reference.word_tokens:
        return 0.0
    score = _BLEU.sentence_score(" ".join(candidate.word_tokens), [" ".join(reference.word_tokens)])
    return min(max(score.score / 100.0, 0.0), 1.0)


def sentence_bleu_text(reference: str, candidate: str) -> float:
    return sentence_bleu(tokenize(reference), tokenize(candidate))


METRICS: Dict[str, Callable[[TokenizedText], float]] = {
    "flesch_kincaid": flesch_kincaid,
    "heylighen_dewaele": heylighen_dewaele,
    "mtld": mtld,
    "word_count": word_count,
}


def measure(metric: str, text: TokenizedText, enforce_validity_floor: bool = True) -> float:
    """
    Compute one registered metric.

    Args:
        metric: Metric id, one of METRICS
        text: The tokenized text
        enforce_validity_floor: When False, MTLD is computed for texts below its floor

    Returns:
        The raw metric value
    """
    if metric not in METRICS:
        raise InvalidArgumentError(f"Unknown metric '{metric}'. Choose from {sorted(METRICS)}")
    if metric == "mtld" and not enforce_validity_floor:
        return mtld(text, min_tokens=1)
    return METRICS[metric](text)


def measure_all(text: str, metrics: Iterable[str] = tuple(METRICS)) -> Dict[str, float]:
    """Tokenize once and compute each requested metric."""
    tokenized = tokenize(text)
    return {metric: measure(metric, tokenized) for metric in metrics}
