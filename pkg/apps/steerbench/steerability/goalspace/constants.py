"""
Constants for the goal-space.
Contains the default dimension registry and the delta bins used for discretization.
"""

SCHEMA_VERSION = 1

LOWER_QUANTILE = 0.025
UPPER_QUANTILE = 0.975
MIN_SEEDS_PER_DIMENSION = 40

# Default dimensions in canonical order: (dimension id, metric id, raw 2.5% quantile, raw 97.5% quantile)
DEFAULT_DIMENSIONS = (
    ("reading_difficulty", "flesch_kincaid", 2.8, 12.9),
    ("formality", "heylighen_dewaele", 40.4, 69.1),
    ("textual_diversity", "mtld", 44.8, 128.5),
    ("text_length", "word_count", 78.0, 1509.0),
)

# |delta| below SLIGHT_UPPER is a slight change, above MUCH_LOWER a large one; both edges fall in the middle bin.
SLIGHT_UPPER = 0.2
MUCH_LOWER = 0.5

REPRESENTATIVE_SLIGHT = 0.1
REPRESENTATIVE_MODERATE = 0.35
REPRESENTATIVE_MUCH = 0.75
