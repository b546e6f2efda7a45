"""
Constants for the analysis.
Contains quantile levels, test-method thresholds and flow-field grid defaults.
"""

QUANTILE_METHOD = "linear"
IQR_QUANTILES = (0.25, 0.75)
CI_QUANTILES = (0.025, 0.975)

# Largest group size for which Mann-Whitney U uses the exact null distribution
MANN_WHITNEY_EXACT_MAX = 10
# Largest number of non-zero differences for which the Wilcoxon test is exact
WILCOXON_EXACT_MAX = 25
# Largest number of non-zero differences tested exactly when zeros or tied magnitudes occur
TIED_EXACT_MAX = 10
# Permutations evaluated per vectorized call of an exact permutation test
PERMUTATION_BATCH = 20_000

DEFAULT_GRID_N = 10
# Minimum total kernel weight for a supported flow-field cell
MIN_CELL_WEIGHT = 0.5

# Residual norms below this count as zero in the entanglement analysis
RESIDUAL_TOLERANCE = 1e-10

REPORT_FILENAME = "report.json"
FLOW_FILENAME = "flow_{dim_a}_{dim_b}.csv"

SUMMARY_METRICS = ("steering_error", "miscalibration", "orthogonality")
