"""
Constants for probe generation.
Contains seed validity floors and the sampling-goal delta ranges.
"""

MIN_SEED_WORDS = 50
MAX_SEED_WORDS = 2048

# Requested per-dimension change magnitudes.
MIN_DELTA = 0.1
MAX_DELTA = 0.7

# Density-ratio classifier.
DEFAULT_L2 = 1e-4
GRADIENT_TOLERANCE = 1e-6
MAX_ITERATIONS = 10_000

REJECT_MALFORMED = "malformed"
REJECT_DUPLICATE = "duplicate_id"
REJECT_BELOW_FLOOR = "below_floor"
REJECT_ABOVE_CAP = "above_cap"
REJECT_METRIC_ERROR = "metric_error"
