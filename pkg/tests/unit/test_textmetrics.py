import math
from collections import Counter

import pytest

from steerability.errors import BelowValidityFloorError, InvalidArgumentError, UndefinedMetricError
from steerability.textmetrics import (
    PosTag,
    count_syllables,
    flesch_kincaid,
    heylighen_dewaele,
    measure,
    measure_all,
    mtld,
    pos_distribution,
    pos_tag,
    sentence_bleu,
    sentence_bleu_text,
    tokenize,
    word_count,
)
from tests.helpers import make_text


def test_tokenize_splits_words_punctuation_and_sentences():
    text = tokenize("Hello, world!")
    assert text.word_tokens == ("Hello", "world")
    assert text.punct_tokens == (",", "!")
    assert text.sentences == ((0, 2),)


def test_tokenize_empty_text():
    text = tokenize("")
    assert text.word_tokens == ()
    assert text.punct_tokens == ()
    assert text.sentences == ()


def test_tokenize_keeps_contractions_hyphens_and_decimals_together():
    text = tokenize("It's a well-known fact: pi is 3.14. Isn't it?")
    assert "It's" in text.word_tokens
    assert "well-known" in text.word_tokens
    assert "3.14" in text.word_tokens
    assert len(text.sentences) == 2


def test_tokenize_sentences_cover_every_word_once():
    text = tokenize(make_text(120, seed=3))
    covered = [index for start, end in text.sentences for index in range(start, end)]
    assert covered == list(range(len(text.word_tokens)))
    assert all(end > start for start, end in text.sentences)
    assert all(any(char.isalnum() for char in token) for token in text.word_tokens)


def test_tokenize_trailing_words_without_terminator_form_a_sentence():
    assert tokenize("One sentence. And a tail").sentences == ((0, 2), (2, 5))


@pytest.mark.parametrize(
    "word, expected",
    [("cat", 1), ("animals", 3), ("queue", 1), ("table", 2), ("happy", 2), ("are", 1),
     ("jumped", 1), ("wanted", 2), ("beyond", 2), ("nation", 2), ("piano", 3), ("the", 1)],
)
def test_count_syllables(word, expected):
    assert count_syllables(word) == expected


def test_count_syllables_is_at_least_one():
    assert count_syllables("2024") == 1
    assert count_syllables("hmm") == 1


def test_count_syllables_rejects_empty_word():
    with pytest.raises(InvalidArgumentError):
        count_syllables("")


def test_pos_tag_uses_lexicon_and_articles():
    tags = pos_tag(tokenize("The cats sleep."))
    assert tags == [PosTag.ART, PosTag.NOUN, PosTag.VERB]


def test_pos_tag_suffix_rules_and_numbers():
    tags = pos_tag(tokenize("Happiness grows remarkably in 2024."))
    assert tags[0] == PosTag.NOUN
    assert tags[2] == PosTag.ADV
    assert tags[-1] == PosTag.OTHER


def test_pos_tag_contraction_uses_head_word():
    assert pos_tag(tokenize("It's fine."))[0] == PosTag.PRON


def test_pos_distribution_sums_to_100():
    distribution = pos_distribution(tokenize(make_text(80, seed=1)))
    assert sum(distribution.values()) == pytest.approx(100.0)


def test_flesch_kincaid_reference_values():
    assert flesch_kincaid(tokenize("Cats are animals.")) == pytest.approx(5.2467, abs=1e-4)
    assert flesch_kincaid(tokenize("Go.")) == pytest.approx(-3.40, abs=1e-9)


def test_flesch_kincaid_undefined_for_empty_text():
    with pytest.raises(UndefinedMetricError):
        flesch_kincaid(tokenize(""))


def test_flesch_kincaid_grows_with_sentence_length():
    short = flesch_kincaid(tokenize(make_text(200, seed=2, sentence_length=5)))
    long = flesch_kincaid(tokenize(make_text(200, seed=2, sentence_length=40)))
    assert long > short


def test_heylighen_dewaele_extremes():
    assert heylighen_dewaele(tokenize("The cat on the mat.")) == pytest.approx(100.0)
    assert heylighen_dewaele(tokenize("Run. Jump. Swim.")) == pytest.approx(0.0)


def test_heylighen_dewaele_balanced_counts_give_50():
    # two deictic (the, cat), two non-deictic (she, sees), one OTHER (42)
    assert heylighen_dewaele(tokenize("She sees the cat 42.")) == pytest.approx(50.0)


def test_heylighen_dewaele_stays_in_range():
    for seed in range(5):
        value = heylighen_dewaele(tokenize(make_text(100, seed=seed)))
        assert 0.0 <= value <= 100.0


def test_mtld_requires_fifty_words():
    with pytest.raises(BelowValidityFloorError):
        mtld(tokenize(" ".join(["word"] * 49)))


def test_mtld_identical_tokens_is_finite_and_deterministic():
    text = tokenize(" ".join(["word"] * 60))
    assert mtld(text) == pytest.approx(2.0)
    assert mtld(text) == mtld(text)


def test_mtld_is_case_insensitive():
    lower = tokenize(make_text(120, seed=4).lower())
    mixed = tokenize(make_text(120, seed=4))
    assert mtld(lower) == pytest.approx(mtld(mixed))


def test_mtld_all_unique_tokens_returns_length():
    words = [f"w{index}" for index in range(60)]
    assert mtld(tokenize(" ".join(words))) == pytest.approx(60.0)


def test_mtld_short_text_allowed_without_floor():
    assert mtld(tokenize("a b c a"), min_tokens=1) > 0


def test_word_count():
    assert word_count(tokenize("Hello, world!")) == 2.0
    assert word_count(tokenize("")) == 0.0
    assert word_count(tokenize("?!")) == 0.0


def test_word_count_is_additive():
    first, second = "The cat sat on the mat.", "Then it slept, briefly!"
    combined = word_count(tokenize(f"{first} {second}"))
    assert combined == word_count(tokenize(first)) + word_count(tokenize(second)) == 10.0


def test_measure_rejects_unknown_metric():
    with pytest.raises(InvalidArgumentError):
        measure("perplexity", tokenize("Hello."))


def test_measure_all_computes_every_metric():
    values = measure_all(make_text(100, seed=5))
    assert set(values) == {"flesch_kincaid", "heylighen_dewaele", "mtld", "word_count"}


def test_sentence_bleu_identity_and_disjoint():
    text = tokenize("The quick brown fox jumps over the lazy dog.")
    assert sentence_bleu(text, text) == pytest.approx(1.0)
    assert sentence_bleu(text, tokenize("Completely unrelated words here.")) == 0.0
    assert sentence_bleu(text, tokenize("")) == 0.0


def test_sentence_bleu_partial_overlap_is_between_bounds():
    score = sentence_bleu_text("The quick brown fox jumps over the lazy dog.", "The quick brown cat sleeps.")
    assert 0.0 < score < 1.0


# -----------------------------------------------------------------------------
# Hand-counted fixtures
# -----------------------------------------------------------------------------

# text, words, sentences, syllables, deictic tags (noun/adj/adposition/article), non-deictic tags
COUNTED_TEXTS = [
    ("The cat sat on the table.", 6, 1, 7, 5, 1),
    ("She sees the dog.", 4, 1, 4, 2, 2),
    ("The old man walked slowly. He was happy.", 8, 2, 10, 4, 4),
    ("A little bird sings in the green tree.", 8, 1, 9, 7, 1),
    ("We played with the children in the garden today.", 9, 1, 12, 6, 3),
    ("It is cold. It is very cold. They run.", 9, 3, 10, 2, 7),
    ("The water under the house was warm.", 7, 1, 9, 6, 1),
    ("The teacher reads a book. The children played.", 8, 2, 10, 6, 2),
    ("Today the sun is hot! We sat under a beautiful tree.", 11, 2, 15, 7, 4),
    ("The woman walked from the city over the river.", 9, 1, 13, 8, 1),
    ("He runs fast. She runs quickly. They are happy.", 9, 3, 11, 1, 8),
    ("A small dog ran after the red cat.", 8, 1, 9, 7, 1),
    ("The music in the school was very beautiful.", 8, 1, 12, 6, 2),
    ("Rain. Rain on the window. Rain in the morning.", 9, 3, 11, 9, 0),
    ("They open the window. It is warm.", 7, 2, 9, 3, 4),
    ("The yellow sun sat over the green garden.", 8, 1, 11, 7, 1),
    ("She eats with the old woman? He jumps!", 8, 2, 9, 4, 4),
    ("The big house in the city is very old.", 9, 1, 11, 7, 2),
    ("Happy children played in the water. The teacher sat on a table. It was hot.", 15, 3, 20, 11, 4),
    ("We walked slowly. They played quickly. He reads today.", 9, 3, 12, 0, 9),
    ("A warm morning sun is over the little city.", 9, 1, 13, 8, 1),
]


@pytest.mark.parametrize("text, words, sentences, syllables, deictic, non_deictic", COUNTED_TEXTS)
def test_flesch_kincaid_matches_hand_counts(text, words, sentences, syllables, deictic, non_deictic):
    tokens = tokenize(text)
    assert word_count(tokens) == words
    assert len(tokens.sentences) == sentences
    assert sum(count_syllables(word) for word in tokens.word_tokens) == syllables
    expected = 0.39 * words / sentences + 11.8 * syllables / words - 15.59
    assert flesch_kincaid(tokens) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("text, words, sentences, syllables, deictic, non_deictic", COUNTED_TEXTS)
def test_heylighen_dewaele_matches_hand_tags(text, words, sentences, syllables, deictic, non_deictic):
    expected = (100.0 * deictic / words - 100.0 * non_deictic / words + 100.0) / 2.0
    assert heylighen_dewaele(tokenize(text)) == pytest.approx(expected, abs=1e-9)


def _mtld_by_factor_simulation(words, threshold=0.72):
    def one_pass(sequence):
        factors, start = 0.0, 0
        for end in range(1, len(sequence) + 1):
            segment = sequence[start:end]
            if len(set(segment)) / len(segment) < threshold:
                factors += 1
                start = end
        rest = sequence[start:]
        if rest:
            factors += (1 - len(set(rest)) / len(rest)) / (1 - threshold)
        return len(sequence) / factors if factors > 0 else float(len(sequence))

    lowered = [word.lower() for word in words]
    return (one_pass(lowered) + one_pass(lowered[::-1])) / 2


MTLD_TEXTS = (
    [make_text(n_words, seed=seed) for n_words, seed in [(50, 0), (60, 1), (75, 2), (90, 3), (120, 4), (150, 5)]]
    + [make_text(n_words, seed=seed, formal_bias=0.1) for n_words, seed in [(55, 6), (80, 7), (110, 8)]]
    + [make_text(n_words, seed=seed, formal_bias=0.9) for n_words, seed in [(55, 9), (80, 10), (110, 11)]]
    + [
        " ".join(["word"] * 100),
        " ".join(f"w{index}" for index in range(50)),
        " ".join(f"w{index % 7}" for index in range(70)),
        " ".join(f"w{index % 23}" for index in range(92)),
        " ".join(["Alpha", "alpha", "beta", "Gamma"] * 15),
        " ".join(f"t{index}" for index in range(40)) + " " + " ".join(["t1"] * 20),
        " ".join(["t1"] * 20) + " " + " ".join(f"t{index}" for index in range(40)),
        " ".join(f"w{(index * index) % 31}" for index in range(64)),
    ]
)


@pytest.mark.parametrize("text", MTLD_TEXTS)
def test_mtld_matches_factor_simulation(text):
    tokens = tokenize(text)
    assert mtld(tokens) == pytest.approx(_mtld_by_factor_simulation(tokens.word_tokens), abs=1e-9)


def test_mtld_closed_form_examples():
    assert mtld(tokenize(" ".join(["word"] * 100))) == pytest.approx(2.0)
    assert mtld(tokenize(" ".join(f"w{index}" for index in range(50)))) == pytest.approx(50.0)


def _bleu_by_ngram_counting(reference, candidate):
    ref, hyp = tokenize(reference).word_tokens, tokenize(candidate).word_tokens
    if not ref or not hyp:
        return 0.0
    log_precision = 0.0
    for n in range(1, 5):
        hyp_ngrams = Counter(hyp[i:i + n] for i in range(len(hyp) - n + 1))
        ref_ngrams = Counter(ref[i:i + n] for i in range(len(ref) - n + 1))
        matches = sum(min(count, ref_ngrams[ngram]) for ngram, count in hyp_ngrams.items())
        total = max(len(hyp) - n + 1, 0)
        if n == 1:
            if matches == 0:
                return 0.0
            log_precision += math.log(matches / total)
        else:
            log_precision += math.log((matches + 1) / (total + 1))
    brevity = 1.0 if len(hyp) >= len(ref) else math.exp(1 - len(ref) / len(hyp))
    return brevity * math.exp(log_precision / 4)


BLEU_PAIRS = [
    ("The cat sat on the table.", "The cat sat on the table."),
    ("The cat sat on the table.", "The cat sat on a table."),
    ("The cat sat on the table.", "A cat was on the table."),
    ("The cat sat on the table.", "The cat sat."),
    ("The cat sat on the table.", "The cat sat on the big old table in the house."),
    ("The cat sat on the table.", "table the on sat cat The"),
    ("The cat sat on the table.", "the the the the the the"),
    ("The cat sat on the table.", "Dogs run fast."),
    ("She sees the dog.", "She sees the dog today."),
    ("She sees the dog.", "she sees the dog."),
    ("She sees the dog.", "Dog."),
    ("The old man walked slowly. He was happy.", "The old man walked. He was very happy."),
    ("The old man walked slowly. He was happy.", "An elderly man strolled, and he was content."),
    ("A little bird sings in the green tree.", "In the green tree a little bird sings."),
    ("We played with the children in the garden today.", "Today we played in the garden with the children."),
    ("Rain. Rain on the window. Rain in the morning.", "Rain on the window in the morning."),
    ("The music in the school was very beautiful.", "The school music was beautiful, very beautiful."),
    ("The big house in the city is very old.", "The house in the city is old and big."),
    ("It is cold. It is very cold.", "It is cold. It is cold. It is very cold."),
    ("He runs fast.", "He runs."),
    ("The water under the house was warm.", "Warm water was under the house."),
]


@pytest.mark.parametrize("reference, candidate", BLEU_PAIRS)
def test_sentence_bleu_matches_ngram_counting(reference, candidate):
    expected = _bleu_by_ngram_counting(reference, candidate)
    assert sentence_bleu_text(reference, candidate) == pytest.approx(expected, rel=1e-9, abs=1e-12)
