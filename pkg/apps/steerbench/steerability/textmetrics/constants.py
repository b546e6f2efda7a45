"""
Constants for the text metrics.
Contains tokenizer patterns, readability coefficients and lexical-diversity parameters.
"""

from pathlib import Path

RESOURCES_DIR = Path(__file__).parent / "resources"
LEXICON_PATH = RESOURCES_DIR / "lexicon.tsv"
SYLLABLE_EXCEPTIONS_PATH = RESOURCES_DIR / "syllable_exceptions.tsv"

# Decimal numbers first, then alphanumeric runs joined by apostrophes or hyphens,
# then runs of punctuation, then underscores (which \w would otherwise swallow).
TOKEN_PATTERN = r"\d+(?:[.,]\d+)+|[^\W_]+(?:['’\-][^\W_]+)*|[^\w\s]+|_+"

SENTENCE_TERMINATORS = frozenset(".!?…")

VOWELS = frozenset("aeiouy")

# Vowel pairs usually pronounced as two syllables ("medium", "usual", "piano").
HIATUS_PAIRS = ("ia", "iu", "io", "ua", "uo")

# Preceding consonants that merge a hiatus pair into one syllable ("special", "nation").
HIATUS_BLOCKERS = frozenset("tcsx")

# Flesch-Kincaid grade level: 0.39 * words/sentence + 11.8 * syllables/word - 15.59
FK_WORDS_PER_SENTENCE = 0.39
FK_SYLLABLES_PER_WORD = 11.8
FK_INTERCEPT = -15.59

MTLD_THRESHOLD = 0.72
MTLD_MIN_TOKENS = 50

ARTICLES = frozenset({"a", "an", "the"})

# Suffix rules applied after the lexicon misses, longest suffixes first.
SUFFIX_RULES = (
    ("ically", "ADV"),
    ("ness", "NOUN"),
    ("ment", "NOUN"),
    ("tion", "NOUN"),
    ("sion", "NOUN"),
    ("ship", "NOUN"),
    ("hood", "NOUN"),
    ("ance", "NOUN"),
    ("ence", "NOUN"),
    ("ity", "NOUN"),
    ("ism", "NOUN"),
    ("ist", "NOUN"),
    ("dom", "NOUN"),
    ("ous", "ADJ"),
    ("ful", "ADJ"),
    ("ive", "ADJ"),
    ("able", "ADJ"),
    ("ible", "ADJ"),
    ("less", "ADJ"),
    ("ical", "ADJ"),
    ("ish", "ADJ"),
    ("ic", "ADJ"),
    ("al", "ADJ"),
    ("ly", "ADV"),
    ("ing", "VERB"),
    ("ize", "VERB"),
    ("ise", "VERB"),
    ("ify", "VERB"),
    ("ed", "VERB"),
)
