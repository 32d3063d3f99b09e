"""Set objectives: symmetric scores over a set of generations.

Three kinds are built in:

* ``mean_reward``  - average member reward.
* ``pass_at_n``    - best member reward (max); for binary rewards this is
  the indicator that the set contains a correct generation.
* ``polychromic``  - mean reward times cluster diversity, rewarding sets
  that are simultaneously good and strategically varied.

Diversity of a set is the number of distinct non-degenerate cluster ids
divided by the set size; degenerate members (cluster 100) are dropped from
the count but still occupy a slot in the denominator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .core import ClusterAssignment
from .errors import (
    DegenerateNError,
    InvalidParamsError,
    LengthMismatchError,
    MissingClustersError,
)

KINDS = ("polychromic", "pass_at_n", "mean_reward")


def diversity(clusters: Sequence[ClusterAssignment] | None, set_size: int) -> float:
    """Distinct non-degenerate clusters / set_size, in [0, 1]."""
    if clusters is None:
        raise MissingClustersError("diversity needs cluster assignments")
    if len(clusters) != set_size:
        raise LengthMismatchError(
            f"{len(clusters)} assignments for set of {set_size}"
        )
    if set_size < 1:
        raise InvalidParamsError("set_size must be positive")
    distinct = {c.cluster_id for c in clusters if not c.is_degenerate}
    return len(distinct) / set_size


def polychromic_score(
    rewards: Sequence[float],
    clusters: Sequence[ClusterAssignment] | None,
) -> float:
    """Mean reward of the set times its cluster diversity."""
    if clusters is None:
        raise MissingClustersError("polychromic score needs cluster assignments")
    if len(rewards) != len(clusters):
        raise LengthMismatchError(
            f"{len(rewards)} rewards vs {len(clusters)} assignments"
        )
    if not rewards:
        raise InvalidParamsError("empty set")
    mean = sum(rewards) / len(rewards)
    return mean * diversity(clusters, len(clusters))


def pass_at_n_score(rewards: Sequence[float]) -> float:
    """Best member reward; indicator of >=1 success for binary rewards."""
    if not rewards:
        raise InvalidParamsError("empty set")
    return max(rewards)


def mean_reward_score(rewards: Sequence[float]) -> float:
    if not rewards:
        raise InvalidParamsError("empty set")
    return sum(rewards) / len(rewards)


@dataclass(frozen=True)
class SetObjective:
    """A pluggable symmetric scorer over size-``arity`` sets."""

    kind: str
    arity: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParamsError(f"unknown objective kind {self.kind!r}")
        if self.arity < 1:
            raise InvalidParamsError("arity must be positive")

    @property
    def requires_clusters(self) -> bool:
        return self.kind == "polychromic"

    def score(
        self,
        rewards: Sequence[float],
        clusters: Sequence[ClusterAssignment] | None = None,
    ) -> float:
        if len(rewards) != self.arity:
            raise LengthMismatchError(
                f"set of {len(rewards)} scored by arity-{self.arity} objective"
            )
        if self.kind == "polychromic":
            return polychromic_score(rewards, clusters)
        if self.kind == "pass_at_n":
            return pass_at_n_score(rewards)
        return mean_reward_score(rewards)


def polychromic(arity: int) -> SetObjective:
    return SetObjective("polychromic", arity)

def pass_at_n(arity: int) -> SetObjective:
    return SetObjective("pass_at_n", arity)

def mean_reward(arity: int) -> SetObjective:
    return SetObjective("mean_reward", arity)


def objective_from_kind(kind: str, arity: int) -> SetObjective:
    return SetObjective(kind, arity)


def divrl_bonus(index: int, clusters: Sequence[ClusterAssignment]) -> float:
    """Per-generation diversity bonus (N / cluster_size - 1) / (N - 1).

    1 for a generation alone in its cluster, 0 when the whole batch shares
    one cluster. Degenerate members all share the 100 bucket, so a batch of
    gibberish earns no bonus spread. Needs N >= 2.
    """
    n = len(clusters)
    if n < 2:
        raise DegenerateNError("diversity bonus undefined for N < 2")
    if not 0 <= index < n:
        raise InvalidParamsError(f"index {index} outside batch of {n}")
    mine = clusters[index].cluster_id
    size = sum(1 for c in clusters if c.cluster_id == mine)
    return (n / size - 1.0) / (n - 1.0)


def analytic_passn_marginals(p: float, set_size: int) -> tuple[float, float]:
    """Exact marginal set advantages under the best-of-n objective.

    For i.i.d. binary-reward draws with success probability ``p``, swapping a
    known-correct generation into a set shifts the objective by (1-p)^n,
    and a known-incorrect one by (1-p)^n - (1-p)^(n-1).
    """
    if not 0.0 <= p <= 1.0:
        raise InvalidParamsError("p must lie in [0, 1]")
    if set_size < 1:
        raise InvalidParamsError("set_size must be positive")
    q = 1.0 - p
    return q**set_size, q**set_size - q ** (set_size - 1)
