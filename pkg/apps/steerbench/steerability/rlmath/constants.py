"""
Constants for the RL objective.
Contains the default hyperparameters of the regularized leave-one-out objective.
"""

DEFAULT_BETA = 0.01
DEFAULT_LAMBDA_TAU = 1.0
DEFAULT_TAU = 1.0
DEFAULT_K = 16

MIN_GROUP_SIZE = 2
