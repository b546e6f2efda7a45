"""
Constants for the steerability metrics.
Contains the reward-function ids used in RL ablations and the random-baseline batch size.
"""

# Number of goal vectors drawn per batch by the random baseline
BASELINE_BATCH_SIZE = 250_000

REWARD_STEERING_ERROR = "steering_error"
REWARD_SQUARED_STEERING_ERROR = "squared_steering_error"
REWARD_MISCALIBRATION = "miscalibration"
REWARD_ORTHOGONALITY = "orthogonality"

# Whitespace runs collapse to one space before the copy-paste comparison
WHITESPACE_PATTERN = r"\s+"
