"""Synthetic corpora shared by the unit and integration tests."""

import itertools
from typing import Dict, List, Optional, Sequence

import numpy as np

from steerability.goalspace import default_config
from steerability.probegen import ProbeSpec, build_probe, ingest_corpus
from steerability.promptgen import PromptStrategy
from steerability.steermetrics import MetricRecord, binned_metrics, evaluate

NOUNS = ["cat", "dog", "house", "garden", "river", "teacher", "student", "market", "city", "book",
         "window", "mountain", "village", "report", "project", "family", "computer", "picture", "song", "road"]
VERBS = ["runs", "sees", "finds", "builds", "reads", "writes", "watches", "follows", "opens", "helps"]
ADJECTIVES = ["small", "bright", "quiet", "important", "beautiful", "different", "simple", "complex",
              "national", "personal", "careful", "remarkable", "historical", "natural"]
ADVERBS = ["quickly", "slowly", "often", "rarely", "carefully", "really", "very", "never"]
PRONOUNS = ["he", "she", "they", "we", "it", "you"]
PREPOSITIONS = ["in", "on", "near", "behind", "with", "under", "across"]
DIMENSIONS = ["reading_difficulty", "formality", "textual_diversity", "text_length"]

_ITEM_COUNTER = itertools.count()


def make_text(n_words: int, seed: int, formal_bias: float = 0.5, sentence_length: int = 10) -> str:
    """Build a grammatical-looking text of roughly n_words words."""
    rng = np.random.default_rng(seed)
    words: List[str] = []
    sentences: List[str] = []
    current: List[str] = []
    while len(words) < n_words:
        if rng.random() < formal_bias:
            chunk = ["the", str(rng.choice(ADJECTIVES)), str(rng.choice(NOUNS)),
                     str(rng.choice(PREPOSITIONS)), "the", str(rng.choice(NOUNS))]
        else:
            chunk = [str(rng.choice(PRONOUNS)), str(rng.choice(ADVERBS)), str(rng.choice(VERBS))]
        current.extend(chunk)
        words.extend(chunk)
        if len(current) >= sentence_length:
            sentence = " ".join(current)
            sentences.append(sentence[0].upper() + sentence[1:] + ".")
            current = []
    if current:
        sentence = " ".join(current)
        sentences.append(sentence[0].upper() + sentence[1:] + ".")
    return " ".join(sentences)


def make_seed_records(n: int, seed: int = 0) -> List[Dict[str, str]]:
    """Seed corpus records with varied length, formality and sentence structure."""
    rng = np.random.default_rng(seed)
    records = []
    for index in range(n):
        records.append({
            "id": f"seed-{index:04d}",
            "source": ["news", "blogs", "reviews"][index % 3],
            "text": make_text(
                n_words=int(rng.integers(60, 400)),
                seed=seed * 100_000 + index,
                formal_bias=float(rng.uniform(0.1, 0.9)),
                sentence_length=int(rng.integers(5, 30)),
            ),
        })
    return records


def make_probe(n_sources: int = 4, goals_per_source: int = 1, n_active: int = 2, strategy=None, seed: int = 0):
    """A small probe over synthetic seeds mapped with the default goal-space."""
    report = ingest_corpus(make_seed_records(max(n_sources, 5), seed=seed), config=default_config())
    spec = ProbeSpec(
        n_sources=n_sources,
        goals_per_source=goals_per_source,
        n_active=n_active,
        strategy=strategy or PromptStrategy(),
        rng_seed=seed,
        reweight=False,
    )
    return build_probe(spec, report.seeds, report.config)


def make_metric_record(
    z0: Sequence[float],
    z_star: Sequence[float],
    z_hat: Sequence[float],
    seed_id: str = "seed-0000",
    item_id: Optional[str] = None,
    dimensions: Optional[Sequence[str]] = None,
    bleu: float = 0.5,
    is_copy: bool = False,
) -> MetricRecord:
    """A metric record built directly from goal vectors; dimensions differing from z0 are active."""
    dimensions = list(dimensions or DIMENSIONS[: len(z0)])
    item_id = item_id or f"{seed_id}:{next(_ITEM_COUNTER)}"
    return MetricRecord(
        record_id=f"{item_id}#0",
        item_id=item_id,
        seed_id=seed_id,
        strategy="direct",
        dimensions=dimensions,
        active=[float(a) != float(b) for a, b in zip(z0, z_star)],
        z0=[float(value) for value in z0],
        z_star=[float(value) for value in z_star],
        z_hat=[float(value) for value in z_hat],
        raw=evaluate(z0, z_star, z_hat),
        binned=binned_metrics(z0, z_star, z_hat),
        bleu=bleu,
        is_copy=is_copy,
    )
