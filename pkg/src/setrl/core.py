"""Shared domain records for set-level RL experiments.

Everything here is an immutable value object: batches, cluster labels and
hyperparameters can be shared freely between threads and across steps.
Rewards are plain floats in [0, 1]; binarity is never assumed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import comb
from typing import Any, Iterable, Sequence

from .errors import (
    EmptyBatchError,
    InvalidParamsError,
    KOutOfRangeError,
    LengthMismatchError,
    SetSizeTooLargeError,
)

# Reserved judge bucket for degenerate outputs (gibberish, bare final answers,
# looped text). Members of this bucket never count toward diversity.
DEGENERATE_CLUSTER_ID = 100


@dataclass(frozen=True)
class Prompt:
    """One task instance. ``payload`` is whatever the task wants to carry."""

    id: str
    payload: Any = None


@dataclass(frozen=True)
class Generation:
    """A single sampled output.

    Generations are atomic actions: ``action_index`` points into a finite
    generation space and fully determines ``token_string`` and ``answer``
    (the canonical rendering of the parsed final answer).
    """

    token_string: str
    answer: str
    action_index: int


@dataclass(frozen=True)
class ClusterAssignment:
    """Judge-assigned strategy bucket for one generation."""

    cluster_id: int

    @property
    def is_degenerate(self) -> bool:
        return self.cluster_id == DEGENERATE_CLUSTER_ID


def _as_tuple(value: Iterable | None) -> tuple | None:
    if value is None:
        return None
    return tuple(value)


@dataclass(frozen=True)
class GenerationBatch:
    """N generations for one prompt, with rewards and optional clusters."""

    prompt: Prompt
    generations: tuple[Generation, ...]
    rewards: tuple[float, ...]
    clusters: tuple[ClusterAssignment, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "generations", tuple(self.generations))
        object.__setattr__(self, "rewards", tuple(float(r) for r in self.rewards))
        object.__setattr__(self, "clusters", _as_tuple(self.clusters))

    @property
    def size(self) -> int:
        return len(self.generations)

    def with_clusters(self, clusters: Sequence[ClusterAssignment]) -> "GenerationBatch":
        return replace(self, clusters=tuple(clusters))


def validate_batch(batch: GenerationBatch) -> GenerationBatch:
    """Check batch shape; returns the batch unchanged on success."""
    n = batch.size
    if n == 0:
        raise EmptyBatchError("batch holds no generations")
    if len(batch.rewards) != n:
        raise LengthMismatchError(
            f"{n} generations but {len(batch.rewards)} rewards"
        )
    if batch.clusters is not None and len(batch.clusters) != n:
        raise LengthMismatchError(
            f"{n} generations but {len(batch.clusters)} cluster assignments"
        )
    return batch


@dataclass(frozen=True)
class HyperParams:
    """Run hyperparameters; defaults are the standard experiment settings.

    ``num_sets`` is either a positive integer or the string ``"all"``
    (every size-``set_size`` subset of the rollouts).
    """

    rollouts: int = 8
    set_size: int = 4
    num_sets: int | str = 70
    learning_rate: float = 0.1
    clip_low: float = 0.20
    clip_high: float = 0.28
    temperature: float = 1.0
    divrl_lambda: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.rollouts < 2:
            raise InvalidParamsError("need at least 2 rollouts")
        if self.set_size < 1:
            raise InvalidParamsError("set_size must be positive")
        if self.set_size >= self.rollouts:
            raise SetSizeTooLargeError(
                f"set_size {self.set_size} must be < rollouts {self.rollouts}"
            )
        if isinstance(self.num_sets, str):
            if self.num_sets.lower() != "all":
                raise InvalidParamsError(f"bad num_sets {self.num_sets!r}")
            object.__setattr__(self, "num_sets", "all")
        else:
            k_all = comb(self.rollouts, self.set_size)
            if not 1 < self.num_sets <= k_all:
                raise KOutOfRangeError(
                    f"num_sets {self.num_sets} outside (1, {k_all}]"
                )
        if self.learning_rate <= 0:
            raise InvalidParamsError("learning_rate must be positive")
        if self.temperature <= 0:
            raise InvalidParamsError("temperature must be positive")
        if self.clip_low < 0 or self.clip_high < 0:
            raise InvalidParamsError("clip widths must be nonnegative")
        if self.divrl_lambda < 0:
            raise InvalidParamsError("divrl_lambda must be nonnegative")

    @property
    def max_sets(self) -> int:
        return comb(self.rollouts, self.set_size)

    @property
    def resolved_num_sets(self) -> int:
        if self.num_sets == "all":
            return self.max_sets
        return int(self.num_sets)
