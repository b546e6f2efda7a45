"""
Value-level math of the regularized leave-one-out policy objective: sample weights,
advantages, rejection sampling, the IPO-style margin and the objective value itself.

Log-probabilities are supplied by the caller; nothing here updates parameters.
"""

import itertools
import logging
from enum import Enum
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from steerability.errors import InvalidArgumentError
from steerability.goalspace import GoalVector
from steerability.probegen import SamplingWeights, read_jsonl
from steerability.rlmath.constants import DEFAULT_BETA, DEFAULT_K, DEFAULT_LAMBDA_TAU, DEFAULT_TAU, MIN_GROUP_SIZE
from steerability.steermetrics import reward

# Configure logging
logger = logging.getLogger(__name__)


# -----------------------------------------------------------------------------
# Data Models
# -----------------------------------------------------------------------------

class Rollout(BaseModel):
    """One sampled completion with its reward and per-token log-probabilities."""
    reward: float
    logprobs_policy: List[float]
    logprobs_ref: List[float]

    @model_validator(mode="after")
    def check_tokens(self) -> "Rollout":
        if not self.logprobs_policy or len(self.logprobs_policy) != len(self.logprobs_ref):
            raise ValueError("Policy and reference log-probabilities need equal, non-zero lengths")
        if max(self.logprobs_policy) > 0 or max(self.logprobs_ref) > 0:
            raise ValueError("Log-probabilities must be <= 0")
        return self

    @property
    def token_count(self) -> int:
        return len(self.logprobs_policy)

    @property
    def token_logratios(self) -> np.ndarray:
        return np.asarray(self.logprobs_policy) - np.asarray(self.logprobs_ref)

    @property
    def logratio(self) -> float:
        """Sequence log-ratio log π(y) − log π_ref(y), unnormalized by length."""
        return float(self.token_logratios.sum())


class RolloutGroup(BaseModel):
    """All completions sampled for one prompt."""
    group_id: str = ""
    z0: Optional[List[float]] = None
    z_star: Optional[List[float]] = None
    rollouts: List[Rollout]

    @field_validator("rollouts")
    @classmethod
    def check_size(cls, rollouts: List[Rollout]) -> List[Rollout]:
        if len(rollouts) < MIN_GROUP_SIZE:
            raise ValueError(f"A rollout group needs at least {MIN_GROUP_SIZE} completions")
        return rollouts

    @property
    def rewards(self) -> np.ndarray:
        return np.asarray([rollout.reward for rollout in self.rollouts], dtype=float)

    @classmethod
    def from_record(cls, data: dict, group_id: str = "") -> "RolloutGroup":
        """Build a group from {rewards, token_logprobs_policy, token_logprobs_ref, z0, z_star}."""
        rewards = data["rewards"]
        policy, ref = data["token_logprobs_policy"], data["token_logprobs_ref"]
        if not len(rewards) == len(policy) == len(ref):
            raise InvalidArgumentError("rewards and log-probability lists must have one entry per completion")
        return cls(
            group_id=str(data.get("group_id", group_id)),
            z0=data.get("z0"),
            z_star=data.get("z_star"),
            rollouts=[Rollout(reward=r, logprobs_policy=p, logprobs_ref=q) for r, p, q in zip(rewards, policy, ref)],
        )


class RLHyperparams(BaseModel):
    beta: float = Field(default=DEFAULT_BETA, ge=0.0)
    lambda_tau: float = Field(default=DEFAULT_LAMBDA_TAU, ge=0.0)
    tau: float = Field(default=DEFAULT_TAU, gt=0.0)
    k: int = Field(default=DEFAULT_K, ge=2)

    @field_validator("k")
    @classmethod
    def even_k(cls, k: int) -> int:
        if k % 2:
            raise ValueError(f"Rejection sample size must be even, got {k}")
        return k


class PairSet(str, Enum):
    """Which completion pairs enter the margin regularizer."""
    PREFERENCE_ORDERED = "preference_ordered"
    TOP_BOTTOM = "top_bottom"
    ALL_ORDERED = "all_ordered"


class ObjectiveDecomposition(BaseModel):
    group_id: str = ""
    selected: List[int]
    policy_term: float
    kl_term: float
    loop_value: float
    regularizer_term: float
    n_pairs: int
    weight: float
    value: float


# -----------------------------------------------------------------------------
# Operations
# -----------------------------------------------------------------------------

def weight_from_probability(probability: float) -> float:
    """Density ratio (1 − p) / p from the classifier's seed probability."""
    if not 0.0 < probability <= 1.0:
        raise InvalidArgumentError(f"Probability must lie in (0, 1], got {probability}")
    return (1.0 - probability) / probability


def sample_weight(z0: Union[GoalVector, np.ndarray], weights: SamplingWeights) -> float:
    """Importance weight of a source goal vector; 1 when no density-ratio model was fitted."""
    if weights.model is None:
        return 1.0
    return weights.weight_for(z0)


def loo_advantage(rewards: Sequence[float]) -> np.ndarray:
    """
    Leave-one-out advantages: each reward minus the mean of the others.

    Equals |G| / (|G| − 1) · (r_i − mean(r)).
    """
    values = np.asarray(rewards, dtype=float)
    if values.size < MIN_GROUP_SIZE:
        raise InvalidArgumentError(f"Leave-one-out advantages need at least {MIN_GROUP_SIZE} rewards")
    return values.size / (values.size - 1) * (values - values.mean())


def _preference_order(rewards: np.ndarray, indices: Iterable[int]) -> List[int]:
    return sorted(indices, key=lambda index: (-rewards[index], index))


def rejection_sample(rewards: Sequence[float], k: int) -> List[int]:
    """
    Keep the k/2 highest- and k/2 lowest-reward completions; ties go to the lower index
    for the top half and the higher index for the bottom half.

    Returns:
        Selected completion indices in ascending order
    """
    values = np.asarray(rewards, dtype=float)
    if k % 2 or k < 2 or k > values.size:
        raise InvalidArgumentError(f"k must be even and within [2, {values.size}], got {k}")
    order = _preference_order(values, range(values.size))
    half = k // 2
    return sorted(order[:half] + order[values.size - half:])


def ipo_margin(logratio_j: float, logratio_k: float, reward_j: float, reward_k: float, tau: float) -> float:
    """Implicit-reward gap minus the scaled reward gap; antisymmetric in (j, k)."""
    if tau <= 0:
        raise InvalidArgumentError(f"tau must be positive, got {tau}")
    return (logratio_j - logratio_k) - (reward_j - reward_k) / tau


def regularizer_pairs(rewards: np.ndarray, selected: Sequence[int], pair_set: PairSet) -> List[Tuple[int, int]]:
    """Completion pairs (preferred, dispreferred) for the margin penalty."""
    ordered = _preference_order(rewards, selected)
    if pair_set is PairSet.PREFERENCE_ORDERED:
        return list(itertools.combinations(ordered, 2))
    if pair_set is PairSet.ALL_ORDERED:
        return list(itertools.permutations(ordered, 2))
    half = len(ordered) // 2
    return list(itertools.product(ordered[:half], ordered[half:]))


def maloop_objective(
    group: RolloutGroup,
    selected: Sequence[int],
    hparams: RLHyperparams,
    weight: float = 1.0,
    advantages: Optional[Sequence[float]] = None,
    pair_set: PairSet = PairSet.PREFERENCE_ORDERED,
) -> ObjectiveDecomposition:
    """
    Evaluate the weighted, margin-regularized leave-one-out objective for one group.

    The policy term sums per-token probability ratios times each completion's advantage
    and the KL term uses the per-token log-ratio estimator; both are normalized by the
    total token count of the selected completions. The margin penalty sums squared
    margins over the pair set, using unnormalized sequence log-ratios.

    Args:
        group: The rollout group
        selected: Completion indices kept by rejection sampling
        hparams: β, λ_τ and τ (k is not used here)
        weight: Importance weight of the prompt's source text
        advantages: Per-completion advantages over the whole group; leave-one-out by default
        pair_set: Pairs entering the margin penalty

    Returns:
        The objective value and its parts
    """
    if not selected:
        raise InvalidArgumentError("The selected completion set is empty")
    n = len(group.rollouts)
    if any(index < 0 or index >= n for index in selected) or len(set(selected)) != len(selected):
        raise InvalidArgumentError(f"Selected indices must be distinct and within [0, {n})")
    rewards = group.rewards
    adv = loo_advantage(rewards) if advantages is None else np.asarray(advantages, dtype=float)
    if adv.shape != (n,):
        raise InvalidArgumentError(f"Expected {n} advantages, got {adv.shape}")

    total_tokens = sum(group.rollouts[index].token_count for index in selected)
    policy_sum = 0.0
    kl_sum = 0.0
    for index in selected:
        logratios = group.rollouts[index].token_logratios
        policy_sum += float(np.exp(logratios).sum()) * adv[index]
        kl_sum += float(logratios.sum())
    policy_term = policy_sum / total_tokens
    kl_term = hparams.beta * kl_sum / total_tokens
    loop_value = policy_term - kl_term

    pairs = regularizer_pairs(rewards, selected, pair_set)
    regularizer = sum(
        ipo_margin(group.rollouts[j].logratio, group.rollouts[k].logratio, rewards[j], rewards[k], hparams.tau) ** 2
        for j, k in pairs
    )
    value = weight * (loop_value + hparams.lambda_tau * regularizer)
    return ObjectiveDecomposition(
        group_id=group.group_id,
        selected=sorted(selected),
        policy_term=policy_term,
        kl_term=kl_term,
        loop_value=loop_value,
        regularizer_term=float(regularizer),
        n_pairs=len(pairs),
        weight=weight,
        value=float(value),
    )


def group_rewards(
    z0: Sequence[float], z_star: Sequence[float], z_hats: Sequence[Sequence[float]], reward_name: str = "steering_error"
) -> List[float]:
    """Rewards for each completion's achieved goal vector under one of the reward functions."""
    return [reward(reward_name, z0, z_star, z_hat) for z_hat in z_hats]


def load_rollout_groups(path: Union[str, Path]) -> List[RolloutGroup]:
    groups = []
    for position, data in enumerate(read_jsonl(path)):
        if data:
            groups.append(RolloutGroup.from_record(data, group_id=str(position)))
    logger.info(f"Loaded {len(groups)} rollout groups from {path}")
    return groups


def evaluate_groups(
    groups: Sequence[RolloutGroup],
    hparams: RLHyperparams,
    weights: Optional[SamplingWeights] = None,
    pair_set: PairSet = PairSet.PREFERENCE_ORDERED,
) -> List[ObjectiveDecomposition]:
    """Rejection-sample each group with k = min(K, |G| rounded down to even) and evaluate the objective."""
    results = []
    for group in groups:
        size = len(group.rollouts)
        k = min(hparams.k, size - size % 2)
        selected = rejection_sample(group.rewards, k)
        weight = sample_weight(np.asarray(group.z0), weights) if weights is not None and group.z0 else 1.0
        results.append(maloop_objective(group, selected, hparams, weight=weight, pair_set=pair_set))
    return results
