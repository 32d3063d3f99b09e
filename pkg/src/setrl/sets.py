"""Set construction and the per-generation gradient signal.

The pipeline: draw N generations once, build K size-n index subsets over
them (all of C(N, n) or a uniform sample without replacement), score every
subset with a set objective, subtract the mean score as baseline, and credit
each generation with the summed advantage of the subsets containing it.
That per-generation credit ("marginal set advantage") is what multiplies
grad log-prob in the estimator. Its expectation equals a known constant
``scaling_factor(N, n, K)`` times the exact set-objective gradient; training
never divides by that constant (it folds into the learning rate), the
verification suite does.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from math import comb
from typing import Sequence

import numpy as np

from .core import GenerationBatch, validate_batch
from .errors import (
    DimensionMismatchError,
    InvalidParamsError,
    KOutOfRangeError,
    SetSizeTooLargeError,
)
from .objectives import SetObjective


def enumerate_subsets(n_generations: int, set_size: int) -> list[tuple[int, ...]]:
    """All size-``set_size`` index subsets of range(n_generations), lexicographic."""
    if set_size >= n_generations:
        raise SetSizeTooLargeError(
            f"set size {set_size} must be < {n_generations} generations"
        )
    if set_size < 1:
        raise InvalidParamsError("set size must be positive")
    return list(combinations(range(n_generations), set_size))


def sample_subsets(
    n_generations: int,
    set_size: int,
    num_sets: int,
    seed: int | np.random.Generator,
) -> list[tuple[int, ...]]:
    """Uniform sample of ``num_sets`` distinct index subsets, without replacement.

    Output is sorted lexicographically so a subset collection has a single
    canonical form regardless of draw order. num_sets must lie in (1, C(N, n)].
    """
    if set_size >= n_generations:
        raise SetSizeTooLargeError(
            f"set size {set_size} must be < {n_generations} generations"
        )
    if set_size < 1:
        raise InvalidParamsError("set size must be positive")
    k_all = comb(n_generations, set_size)
    if not 1 < num_sets <= k_all:
        raise KOutOfRangeError(f"num_sets {num_sets} outside (1, {k_all}]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if k_all <= 200_000:
        universe = list(combinations(range(n_generations), set_size))
        picked = rng.choice(k_all, size=num_sets, replace=False)
        chosen = [universe[int(i)] for i in picked]
    else:
        # rejection sampling; each draw is a uniform random subset, so the
        # collected distinct subsets are a uniform sample without replacement
        seen: set[tuple[int, ...]] = set()
        while len(seen) < num_sets:
            cand = tuple(sorted(rng.choice(n_generations, size=set_size, replace=False).tolist()))
            seen.add(cand)
        chosen = list(seen)
    return sorted(chosen)


@dataclass(frozen=True)
class SubsetCollection:
    """Scored subsets over one batch.

    ``membership[i]`` lists the positions (into ``indices``) of the subsets
    containing generation i; generations in no subset have an empty entry.
    """

    indices: tuple[tuple[int, ...], ...]
    scores: tuple[float, ...]
    baseline: float
    set_advantages: tuple[float, ...]
    membership: tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class MarginalAdvantages:
    values: tuple[float, ...]


def score_sets(
    batch: GenerationBatch,
    subsets: Sequence[tuple[int, ...]],
    objective: SetObjective,
) -> SubsetCollection:
    """Score each subset and compute mean-baseline set advantages."""
    validate_batch(batch)
    if not subsets:
        raise InvalidParamsError("no subsets to score")
    n = batch.size
    scores = []
    for subset in subsets:
        if len(subset) != objective.arity:
            raise DimensionMismatchError(
                f"subset size {len(subset)} != objective arity {objective.arity}"
            )
        if any(not 0 <= i < n for i in subset):
            raise DimensionMismatchError(f"subset {subset} out of range for N={n}")
        member_rewards = [batch.rewards[i] for i in subset]
        member_clusters = (
            None if batch.clusters is None else [batch.clusters[i] for i in subset]
        )
        scores.append(objective.score(member_rewards, member_clusters))
    baseline = sum(scores) / len(scores)
    advantages = tuple(s - baseline for s in scores)
    containing: list[list[int]] = [[] for _ in range(n)]
    for pos, subset in enumerate(subsets):
        for i in subset:
            containing[i].append(pos)
    return SubsetCollection(
        indices=tuple(tuple(s) for s in subsets),
        scores=tuple(scores),
        baseline=baseline,
        set_advantages=advantages,
        membership=tuple(tuple(m) for m in containing),
    )


def marginal_advantages(collection: SubsetCollection, n_generations: int) -> MarginalAdvantages:
    """Per-generation credit: sum of set advantages over containing subsets.

    A generation appearing in no subset gets 0 (it also contributes no
    gradient term, so the value is inert). The values always sum to zero.
    """
    if len(collection.membership) != n_generations:
        raise DimensionMismatchError(
            f"collection built for N={len(collection.membership)}, got N={n_generations}"
        )
    values = tuple(
        sum(collection.set_advantages[pos] for pos in collection.membership[i])
        for i in range(n_generations)
    )
    return MarginalAdvantages(values=values)


def scaling_factor(
    n_generations: int,
    set_size: int,
    num_sets: int,
    formula: str = "auto",
) -> float:
    """Expected ratio between the estimator mean and the exact gradient.

    With full enumeration (num_sets == C(N, n)) the factor is
    C(N, n) - C(N-1, n-1). With a sampled collection of K subsets it is
    [K_all / C(K_all, K)] * (1/K) * C(K_all - 2, K - 2) * (C(N, n) - C(N-1, n-1))
    where K_all = C(N, n); the two expressions agree at K = K_all.
    ``formula`` forces one branch ("full" / "sampled") for cross-checks.
    """
    if set_size >= n_generations or set_size < 1:
        raise SetSizeTooLargeError(
            f"set size {set_size} invalid for N={n_generations}"
        )
    k_all = comb(n_generations, set_size)
    if not 1 < num_sets <= k_all:
        raise KOutOfRangeError(f"num_sets {num_sets} outside (1, {k_all}]")
    full = comb(n_generations, set_size) - comb(n_generations - 1, set_size - 1)
    if formula not in ("auto", "full", "sampled"):
        raise InvalidParamsError(f"unknown formula {formula!r}")
    if formula == "full" or (formula == "auto" and num_sets == k_all):
        if num_sets != k_all:
            raise KOutOfRangeError("full-enumeration factor needs num_sets == C(N, n)")
        return float(full)
    frac = (
        Fraction(k_all, comb(k_all, num_sets))
        * Fraction(1, num_sets)
        * comb(k_all - 2, num_sets - 2)
        * full
    )
    return float(frac)


def estimate_gradient(
    batch: GenerationBatch,
    marginals: MarginalAdvantages,
    logprob_grads: np.ndarray,
) -> np.ndarray:
    """Single-draw gradient estimate: sum_i grad log pi(y_i) * marginal_i.

    ``logprob_grads`` holds one row per generation (row i is the gradient of
    log pi(y_i) w.r.t. the policy parameters). No 1/K or scaling-factor
    normalization is applied here.
    """
    grads = np.asarray(logprob_grads, dtype=float)
    n = batch.size
    if len(marginals.values) != n:
        raise DimensionMismatchError(
            f"{len(marginals.values)} marginals for batch of {n}"
        )
    if grads.ndim != 2 or grads.shape[0] != n:
        raise DimensionMismatchError(
            f"logprob_grads shape {grads.shape} incompatible with batch of {n}"
        )
    return grads.T @ np.asarray(marginals.values, dtype=float)
