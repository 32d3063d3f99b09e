"""Advantage rules and the clipped-surrogate training loop.

Three algorithms share one update: grpo (mean-centered per-generation
rewards), divrl (rewards plus a lambda-weighted cluster-size bonus, mean
centered), and pepo (marginal set advantages from the subset machinery; no
scaling-factor correction is applied, it folds into the learning rate).

Generations are atomic actions, so the per-token normalizations collapse:
each generation counts as one token, making GRPO's per-length divisor and
the shared-max-length divisor both exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import comb
from typing import Iterator, Sequence

import numpy as np

from . import objectives
from .clustering import Judge, cluster
from .core import GenerationBatch, HyperParams, validate_batch
from .errors import (
    DegenerateNError,
    DimensionMismatchError,
    InvalidParamsError,
    KOutOfRangeError,
    MissingClustersError,
)
from .metrics import cluster_diagnostics
from .objectives import SetObjective, divrl_bonus
from .sets import enumerate_subsets, marginal_advantages, sample_subsets, score_sets
from .simulator import (
    SyntheticTask,
    TabularPolicy,
    exact_marginal_advantage,
    exact_mean_reward,
    exact_setrl_gradient,
    exact_standard_gradient,
    sample_batch,
)

ALGORITHMS = ("grpo", "divrl", "pepo")


@dataclass(frozen=True)
class AdvantageVector:
    values: tuple[float, ...]
    algorithm: str


@dataclass(frozen=True)
class ExperimentRecord:
    """One training step's metrics row."""

    step: int
    accuracy: float
    distinct_correct_clusters: int
    distinct_incorrect_clusters: int
    mean_advantage: float
    policy_entropy: float

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "accuracy": self.accuracy,
            "distinct_correct_clusters": self.distinct_correct_clusters,
            "distinct_incorrect_clusters": self.distinct_incorrect_clusters,
            "mean_advantage": self.mean_advantage,
            "policy_entropy": self.policy_entropy,
        }

    FIELDS = (
        "step",
        "accuracy",
        "distinct_correct_clusters",
        "distinct_incorrect_clusters",
        "mean_advantage",
        "policy_entropy",
    )


def grpo_advantages(rewards: Sequence[float]) -> AdvantageVector:
    """Reward minus the batch mean; no std normalization."""
    n = len(rewards)
    if n < 2:
        raise DegenerateNError("need at least 2 rewards to form a baseline")
    mean = sum(rewards) / n
    return AdvantageVector(tuple(r - mean for r in rewards), "grpo")


def divrl_advantages(
    rewards: Sequence[float],
    clusters,
    bonus_weight: float,
) -> AdvantageVector:
    """Mean-centered shaped rewards r_i + lambda * bonus_i.

    bonus_weight 0 reduces exactly to grpo_advantages.
    """
    if clusters is None:
        raise MissingClustersError("divrl advantages need cluster assignments")
    n = len(rewards)
    if n < 2:
        raise DegenerateNError("need at least 2 rewards to form a baseline")
    if len(clusters) != n:
        raise DimensionMismatchError(f"{len(clusters)} assignments for {n} rewards")
    if bonus_weight < 0:
        raise InvalidParamsError("bonus weight must be nonnegative")
    shaped = [r + bonus_weight * divrl_bonus(i, clusters) for i, r in enumerate(rewards)]
    mean = sum(shaped) / n
    return AdvantageVector(tuple(s - mean for s in shaped), "divrl")


def pepo_advantages(
    batch: GenerationBatch,
    params: HyperParams,
    objective: SetObjective | None = None,
    rng: np.random.Generator | None = None,
) -> AdvantageVector:
    """Marginal set advantages over K subsets of the batch.

    K == C(N, n) enumerates every subset (deterministic, no rng use);
    otherwise K subsets are sampled uniformly without replacement.
    """
    validate_batch(batch)
    n_gen = batch.size
    set_size = params.set_size
    if objective is None:
        objective = objectives.polychromic(set_size)
    k_all = comb(n_gen, set_size) if set_size < n_gen else 0
    num_sets = k_all if params.num_sets == "all" else int(params.num_sets)
    if k_all and not 1 < num_sets <= k_all:
        raise KOutOfRangeError(f"num_sets {num_sets} outside (1, {k_all}]")
    if num_sets == k_all:
        subsets = enumerate_subsets(n_gen, set_size)
    else:
        source = rng if rng is not None else params.seed
        subsets = sample_subsets(n_gen, set_size, num_sets, source)
    collection = score_sets(batch, subsets, objective)
    marg = marginal_advantages(collection, n_gen)
    return AdvantageVector(marg.values, "pepo")


def compute_advantages(
    algorithm: str,
    batch: GenerationBatch,
    params: HyperParams,
    rng: np.random.Generator | None = None,
    objective_kind: str = "polychromic",
) -> AdvantageVector:
    if algorithm == "grpo":
        return grpo_advantages(batch.rewards)
    if algorithm == "divrl":
        return divrl_advantages(batch.rewards, batch.clusters, params.divrl_lambda)
    if algorithm == "pepo":
        objective = objectives.objective_from_kind(objective_kind, params.set_size)
        return pepo_advantages(batch, params, objective=objective, rng=rng)
    raise InvalidParamsError(f"unknown algorithm {algorithm!r}")


@dataclass
class TrainState:
    """Policy plus deterministic rng streams; parameters are snapshots."""

    policy: TabularPolicy
    params: HyperParams
    step: int
    rng_sampler: np.random.Generator
    rng_sets: np.random.Generator


def init_train_state(policy: TabularPolicy, params: HyperParams) -> TrainState:
    root = np.random.default_rng(params.seed)
    sampler, sets_stream = root.spawn(2)
    return TrainState(
        policy=policy, params=params, step=0, rng_sampler=sampler, rng_sets=sets_stream
    )


def clipped_update(
    state: TrainState,
    batch: GenerationBatch,
    advantages: AdvantageVector,
    old_policy: TabularPolicy | None = None,
    length_norm: str = "max_length",
) -> TrainState:
    """One ascent step on the clipped surrogate.

    The surrogate averages min(ratio * A, clip(ratio, 1-eps_low, 1+eps_high) * A)
    over generations (and over each generation's single token). With
    old_policy omitted the ratios are 1, and the step is exactly a plain
    policy-gradient step with the supplied advantages.
    """
    if length_norm not in ("max_length", "per_generation"):
        raise InvalidParamsError(f"unknown length_norm {length_norm!r}")
    validate_batch(batch)
    n = batch.size
    if len(advantages.values) != n:
        raise DimensionMismatchError(f"{len(advantages.values)} advantages for batch of {n}")
    policy = state.policy
    old = old_policy if old_policy is not None else policy
    actions = [g.action_index for g in batch.generations]
    adv = np.asarray(advantages.values, dtype=float)
    log_new = policy.logprobs()[actions]
    log_old = old.logprobs()[actions]
    ratio = np.exp(log_new - log_old)
    lo = 1.0 - state.params.clip_low
    hi = 1.0 + state.params.clip_high
    unclipped = ratio * adv
    clipped = np.clip(ratio, lo, hi) * adv
    # gradient flows only where the unclipped branch attains the min
    coeff = np.where(unclipped <= clipped, ratio * adv, 0.0)
    # atomic actions: every generation is one token under either normalization
    token_divisor = np.ones(n)
    direction = (coeff / (n * token_divisor)) @ policy.logprob_grads(actions)
    new_policy = policy.step(direction, state.params.learning_rate)
    return replace(state, policy=new_policy, step=state.step + 1)


@dataclass(frozen=True)
class TrainConfig:
    task: SyntheticTask
    judge: Judge
    algorithm: str
    params: HyperParams
    steps: int
    inner_epochs: int = 1
    objective_kind: str = "polychromic"
    initial_theta: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InvalidParamsError(f"unknown algorithm {self.algorithm!r}")
        if self.steps < 0:
            raise InvalidParamsError("steps must be >= 0")
        if self.inner_epochs < 1:
            raise InvalidParamsError("inner_epochs must be >= 1")


def train(config: TrainConfig) -> Iterator[ExperimentRecord]:
    """Run the loop, yielding one record per step; returns the final state.

    Each step: sample N rollouts, cluster them, compute advantages, then one
    clipped update per inner epoch against the sampling policy's ratios.
    Metrics describe the batch and the policy that produced it.
    """
    theta = (
        np.zeros(config.task.num_actions)
        if config.initial_theta is None
        else np.asarray(config.initial_theta, dtype=float)
    )
    policy = TabularPolicy(theta, config.params.temperature)
    state = init_train_state(policy, config.params)
    for step in range(config.steps):
        batch = sample_batch(state.policy, config.task, config.params.rollouts, state.rng_sampler)
        assignments = cluster(config.judge, batch)
        batch = batch.with_clusters(assignments)
        adv = compute_advantages(
            config.algorithm, batch, config.params, rng=state.rng_sets,
            objective_kind=config.objective_kind,
        )
        correct, incorrect = cluster_diagnostics(batch)
        record = ExperimentRecord(
            step=step,
            accuracy=1.0 if any(r == 1.0 for r in batch.rewards) else 0.0,
            distinct_correct_clusters=correct,
            distinct_incorrect_clusters=incorrect,
            mean_advantage=float(np.mean(adv.values)),
            policy_entropy=state.policy.entropy(),
        )
        sampling_policy = state.policy
        for _ in range(config.inner_epochs):
            state = clipped_update(state, batch, adv, old_policy=sampling_policy)
        yield record
    return state


def run_training(config: TrainConfig) -> tuple[TrainState, list[ExperimentRecord]]:
    """Drive ``train`` to completion; returns (final state, records)."""
    records: list[ExperimentRecord] = []
    gen = train(config)
    while True:
        try:
            records.append(next(gen))
        except StopIteration as stop:
            return stop.value, records


def verify_logit_shift(
    policy: TabularPolicy,
    task: SyntheticTask,
    objective: SetObjective | None,
    set_size: int,
    step_size: float,
    algorithm: str = "set",
) -> float:
    """Deviation from the first-order logit-shift law after one exact step.

    Set RL: log pi(y) moves by step * n * pi(y) * marginal_advantage(y) minus
    a shared normalizer constant; standard RL: step * pi(y) * (r(y) - E[r])
    minus the analogous constant. The constant is the first-order change of
    the log partition function, step * sum_z pi(z) * per_action_term(z), so
    the only thing left over is the second-order softmax remainder. Returns
    the max absolute residual, which must vanish like step_size^2.
    Temperature-tau policies scale the per-action term by 1/tau^2.
    """
    if step_size <= 0:
        raise InvalidParamsError("step_size must be positive")
    probs = policy.probs()
    tau2 = policy.temperature**2
    if algorithm == "set":
        if objective is None:
            raise InvalidParamsError("set-RL check needs an objective")
        grad = exact_setrl_gradient(policy, task, objective, set_size)
        marginal = np.array(
            [
                exact_marginal_advantage(policy, task, objective, set_size, a)
                for a in range(task.num_actions)
            ]
        )
        per_action = step_size * set_size * probs * marginal / tau2
    elif algorithm == "standard":
        grad = exact_standard_gradient(policy, task)
        advantages = task.rewards_array() - exact_mean_reward(policy, task)
        per_action = step_size * probs * advantages / tau2
    else:
        raise InvalidParamsError(f"unknown algorithm {algorithm!r}")
    stepped = policy.step(grad, step_size)
    shift = stepped.logprobs() - policy.logprobs()
    predicted = per_action - float(probs @ per_action)
    residual = shift - predicted
    return float(np.max(np.abs(residual)))
