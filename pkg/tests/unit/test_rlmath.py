import json

import numpy as np
import pytest
from pydantic import ValidationError

from steerability.errors import InvalidArgumentError
from steerability.probegen import DensityRatioModel, SamplingWeights
from steerability.rlmath import (
    PairSet,
    RLHyperparams,
    Rollout,
    RolloutGroup,
    evaluate_groups,
    group_rewards,
    ipo_margin,
    load_rollout_groups,
    loo_advantage,
    maloop_objective,
    rejection_sample,
    sample_weight,
    weight_from_probability,
)


def random_group(rng, size=6, max_tokens=12):
    rollouts = []
    for _ in range(size):
        length = int(rng.integers(1, max_tokens))
        rollouts.append(Rollout(
            reward=float(-rng.random()),
            logprobs_policy=list(-rng.random(length) * 3),
            logprobs_ref=list(-rng.random(length) * 3),
        ))
    return RolloutGroup(rollouts=rollouts)


def two_completion_group(logratio_j, logratio_k, reward_j, reward_k):
    # one token each, reference log-probability fixed at -2
    return RolloutGroup(rollouts=[
        Rollout(reward=reward_j, logprobs_policy=[-2.0 + logratio_j], logprobs_ref=[-2.0]),
        Rollout(reward=reward_k, logprobs_policy=[-2.0 + logratio_k], logprobs_ref=[-2.0]),
    ])


# -----------------------------------------------------------------------------
# Weights and advantages
# -----------------------------------------------------------------------------

def test_weight_from_probability():
    assert weight_from_probability(0.8) == pytest.approx(0.25)
    assert weight_from_probability(0.5) == pytest.approx(1.0)
    with pytest.raises(InvalidArgumentError):
        weight_from_probability(0.0)


def test_sample_weight_uses_density_ratio_model():
    flat = SamplingWeights(seed_ids=["a"], weights=[1.0],
                           model=DensityRatioModel(coef=[0.0, 0.0], intercept=0.0, l2=1e-4))
    assert sample_weight(np.array([0.3, 0.7]), flat) == pytest.approx(1.0)
    skewed = flat.model_copy(update={"model": DensityRatioModel(coef=[0.0, 0.0], intercept=np.log(4), l2=1e-4)})
    assert sample_weight(np.array([0.3, 0.7]), skewed) == pytest.approx(0.25)
    assert sample_weight(np.array([0.3, 0.7]), SamplingWeights(seed_ids=["a"], weights=[1.0])) == 1.0


def test_loo_advantage_examples():
    assert loo_advantage([1, 0]) == pytest.approx([1, -1])
    assert loo_advantage([3, 1, 2]) == pytest.approx([1.5, -1.5, 0])
    assert loo_advantage([0.4] * 5) == pytest.approx([0] * 5)
    with pytest.raises(InvalidArgumentError):
        loo_advantage([1.0])


def test_loo_advantage_sums_to_zero_and_is_shift_invariant():
    rng = np.random.default_rng(0)
    for _ in range(200):
        rewards = rng.normal(size=int(rng.integers(2, 20)))
        advantages = loo_advantage(rewards)
        assert abs(advantages.sum()) < 1e-12
        assert loo_advantage(rewards + 3.7) == pytest.approx(advantages, abs=1e-12)
        for index in range(rewards.size):
            others = np.delete(rewards, index)
            assert advantages[index] == pytest.approx(rewards[index] - others.mean())


# -----------------------------------------------------------------------------
# Rejection sampling and margins
# -----------------------------------------------------------------------------

def test_rejection_sample_examples():
    assert rejection_sample([4, 1, 3, 2], 2) == [0, 1]
    assert rejection_sample([5, 5, 5, 5, 5, 5], 4) == [0, 1, 4, 5]
    assert rejection_sample([0.1, 0.3, 0.2], 2) == [0, 1]
    assert rejection_sample([1, 2, 3, 4], 4) == [0, 1, 2, 3]


def test_rejection_sample_rejects_bad_k():
    with pytest.raises(InvalidArgumentError):
        rejection_sample([1, 2, 3, 4], 3)
    with pytest.raises(InvalidArgumentError):
        rejection_sample([1, 2], 4)


def test_rejection_sample_keeps_extremes():
    rng = np.random.default_rng(1)
    for _ in range(100):
        rewards = rng.normal(size=16)
        chosen = rejection_sample(rewards, 8)
        assert len(chosen) == 8
        assert int(np.argmax(rewards)) in chosen and int(np.argmin(rewards)) in chosen


def test_ipo_margin_examples():
    assert ipo_margin(0.7, 0.5, 0.5, 0.3, 1.0) == pytest.approx(0.0)
    assert ipo_margin(0.7, 0.2, 0.5, 0.3, 1.0) == pytest.approx(0.3)
    assert ipo_margin(0.2, 0.7, 0.3, 0.5, 1.0) == pytest.approx(-0.3)
    assert ipo_margin(0.7, 0.2, 0.5, 0.3, 2.0) == pytest.approx(0.4)


# -----------------------------------------------------------------------------
# Objective
# -----------------------------------------------------------------------------

def test_objective_is_zero_for_identical_policies_and_equal_rewards():
    group = RolloutGroup(rollouts=[
        Rollout(reward=-0.4, logprobs_policy=[-1.0, -0.5], logprobs_ref=[-1.0, -0.5]) for _ in range(4)
    ])
    result = maloop_objective(group, [0, 1, 2, 3], RLHyperparams(k=4))
    assert result.value == pytest.approx(0.0)
    assert result.regularizer_term == pytest.approx(0.0)


def test_objective_single_pair_penalty():
    group = two_completion_group(0.5, 0.0, 0.2, 0.0)
    hparams = RLHyperparams(beta=0.0, lambda_tau=1.0, tau=1.0, k=2)
    result = maloop_objective(group, [0, 1], hparams, weight=0.5, advantages=[0.0, 0.0])
    assert result.n_pairs == 1
    assert result.value == pytest.approx(0.5 * 0.09)
    doubled = maloop_objective(group, [0, 1], hparams, weight=1.0, advantages=[0.0, 0.0])
    assert doubled.value == pytest.approx(2 * result.value)


def test_full_double_sum_counts_each_pair_in_both_orders():
    group = two_completion_group(0.5, 0.0, 0.2, 0.0)
    hparams = RLHyperparams(beta=0.0, lambda_tau=1.0, tau=1.0, k=2)
    result = maloop_objective(group, [0, 1], hparams, weight=0.5, advantages=[0.0, 0.0], pair_set=PairSet.ALL_ORDERED)
    assert result.n_pairs == 2
    assert result.regularizer_term == pytest.approx(0.18)
    assert result.value == pytest.approx(0.5 * 0.18)


def test_pair_sets():
    group = random_group(np.random.default_rng(2), size=4)
    hparams = RLHyperparams(k=4)
    preference = maloop_objective(group, [0, 1, 2, 3], hparams)
    all_ordered = maloop_objective(group, [0, 1, 2, 3], hparams, pair_set=PairSet.ALL_ORDERED)
    top_bottom = maloop_objective(group, [0, 1, 2, 3], hparams, pair_set=PairSet.TOP_BOTTOM)
    assert (preference.n_pairs, all_ordered.n_pairs, top_bottom.n_pairs) == (6, 12, 4)
    assert all_ordered.regularizer_term == pytest.approx(2 * preference.regularizer_term)


def _reference_loop(group, selected, beta):
    advantages = []
    rewards = [rollout.reward for rollout in group.rollouts]
    for index, value in enumerate(rewards):
        others = rewards[:index] + rewards[index + 1:]
        advantages.append(value - sum(others) / len(others))
    total = 0.0
    tokens = 0
    for index in selected:
        rollout = group.rollouts[index]
        for policy, ref in zip(rollout.logprobs_policy, rollout.logprobs_ref):
            total += np.exp(policy - ref) * advantages[index] - beta * (policy - ref)
            tokens += 1
    return total / tokens


def test_objective_without_regularizer_matches_reference():
    rng = np.random.default_rng(3)
    for _ in range(50):
        group = random_group(rng, size=8)
        selected = rejection_sample(group.rewards, 4)
        hparams = RLHyperparams(beta=0.05, lambda_tau=0.0, k=4)
        result = maloop_objective(group, selected, hparams)
        assert result.value == pytest.approx(_reference_loop(group, selected, 0.05), abs=1e-9)


def test_objective_rejects_bad_selection():
    group = random_group(np.random.default_rng(4), size=3)
    with pytest.raises(InvalidArgumentError):
        maloop_objective(group, [0, 0], RLHyperparams(k=2))
    with pytest.raises(InvalidArgumentError):
        maloop_objective(group, [0, 5], RLHyperparams(k=2))


def test_validation_of_rollouts_and_hyperparameters():
    with pytest.raises(ValidationError):
        Rollout(reward=0.0, logprobs_policy=[-1.0], logprobs_ref=[-1.0, -2.0])
    with pytest.raises(ValidationError):
        Rollout(reward=0.0, logprobs_policy=[0.5], logprobs_ref=[-1.0])
    with pytest.raises(ValidationError):
        RolloutGroup(rollouts=[Rollout(reward=0.0, logprobs_policy=[-1.0], logprobs_ref=[-1.0])])
    with pytest.raises(ValidationError):
        RLHyperparams(k=3)


def test_group_rewards_and_loading(tmp_path):
    rewards = group_rewards([0.2, 0.2], [0.6, 0.2], [[0.6, 0.2], [0.2, 0.2]])
    assert rewards == pytest.approx([0.0, -0.4])
    path = tmp_path / "groups.jsonl"
    record = {
        "rewards": rewards,
        "token_logprobs_policy": [[-0.1, -0.2], [-0.3]],
        "token_logprobs_ref": [[-0.2, -0.2], [-0.1]],
        "z0": [0.2, 0.2],
        "z_star": [0.6, 0.2],
    }
    path.write_text(json.dumps(record) + "\n")
    groups = load_rollout_groups(path)
    assert len(groups) == 1 and groups[0].group_id == "0"
    results = evaluate_groups(groups, RLHyperparams(k=16))
    assert results[0].selected == [0, 1]
    assert results[0].weight == 1.0
