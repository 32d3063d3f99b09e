"""Evaluation metrics: pass@k, majority voting, cluster and branching diagnostics.

The eval corpus format is line-delimited JSON, one prompt per line with the
sampled generations, rewards and parsed answers; metric tables go out as CSV.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass
from math import comb
from pathlib import Path
from typing import Sequence

from .core import GenerationBatch, validate_batch
from .errors import (
    EmptyInputError,
    InvalidParamsError,
    KExceedsNError,
    MissingClustersError,
)


def pass_at_k(n_samples: int, n_correct: int, k: int) -> float:
    """Unbiased probability that a random size-k subset contains a success.

    Computed as 1 - C(n-c, k)/C(n, k) with exact integer combinatorics, which
    matches exhaustive subset enumeration bit for bit.
    """
    if n_samples < 1:
        raise EmptyInputError("need at least one sample")
    if not 0 <= n_correct <= n_samples:
        raise InvalidParamsError(f"n_correct {n_correct} outside [0, {n_samples}]")
    if not 1 <= k <= n_samples:
        raise KExceedsNError(f"k {k} outside [1, {n_samples}]")
    total = comb(n_samples, k)
    return (total - comb(n_samples - n_correct, k)) / total


@dataclass(frozen=True)
class MajorityVote:
    winner: str
    vote_share: float
    is_correct: bool


def majority_at_k(answers: Sequence[str], correct_answer: str) -> MajorityVote:
    """Plurality vote over canonical answer renderings.

    Ties break toward the lexicographically smallest rendering so the vote
    is deterministic.
    """
    if not answers:
        raise EmptyInputError("no answers to vote over")
    counts = Counter(str(a) for a in answers)
    winner = min(counts, key=lambda a: (-counts[a], a))
    return MajorityVote(
        winner=winner,
        vote_share=counts[winner] / len(answers),
        is_correct=winner == str(correct_answer),
    )


def cluster_diagnostics(batch: GenerationBatch) -> tuple[int, int]:
    """(distinct non-degenerate clusters among reward-1 generations,
    same among reward-0 generations)."""
    validate_batch(batch)
    if batch.clusters is None:
        raise MissingClustersError("diagnostics need cluster assignments")
    correct = {
        c.cluster_id
        for c, r in zip(batch.clusters, batch.rewards)
        if r == 1.0 and not c.is_degenerate
    }
    incorrect = {
        c.cluster_id
        for c, r in zip(batch.clusters, batch.rewards)
        if r == 0.0 and not c.is_degenerate
    }
    return len(correct), len(incorrect)


@dataclass(frozen=True)
class BranchProfile:
    """counts[t] = distinct (t+1)-token prefixes among strings still that long."""

    counts: tuple[int, ...]


def branching_profile(strings: Sequence[str]) -> BranchProfile:
    """Prefix-tree width per position, over character tokens.

    The tree has a single root, so the counts are non-decreasing while every
    string is still alive; once shorter strings end the width may shrink.
    """
    if not strings:
        raise EmptyInputError("no strings to profile")
    if any(not s for s in strings):
        raise EmptyInputError("strings must be nonempty")
    longest = max(len(s) for s in strings)
    counts = []
    for position in range(longest):
        prefixes = {s[: position + 1] for s in strings if len(s) > position}
        counts.append(len(prefixes))
    return BranchProfile(counts=tuple(counts))


@dataclass(frozen=True)
class EvalSample:
    """One evaluated prompt: N generations with rewards and parsed answers."""

    prompt_id: str
    generations: tuple[str, ...]
    rewards: tuple[float, ...]
    answers: tuple[str, ...]
    correct_answer: str | None = None

    def __post_init__(self):
        n = len(self.generations)
        if n == 0:
            raise EmptyInputError("eval sample holds no generations")
        if len(self.rewards) != n or len(self.answers) != n:
            raise InvalidParamsError("generations, rewards and answers must align")

    @property
    def n_correct(self) -> int:
        return sum(1 for r in self.rewards if r == 1.0)


def load_eval_corpus(path: str | Path) -> list[EvalSample]:
    samples = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        samples.append(
            EvalSample(
                prompt_id=row["prompt_id"],
                generations=tuple(row["generations"]),
                rewards=tuple(float(r) for r in row["rewards"]),
                answers=tuple(row["answers"]),
                correct_answer=row.get("correct_answer"),
            )
        )
    if not samples:
        raise EmptyInputError(f"no eval records in {path}")
    return samples


def dump_eval_corpus(samples: Sequence[EvalSample], path: str | Path) -> None:
    lines = []
    for s in samples:
        row = {
            "prompt_id": s.prompt_id,
            "generations": list(s.generations),
            "rewards": list(s.rewards),
            "answers": list(s.answers),
        }
        if s.correct_answer is not None:
            row["correct_answer"] = s.correct_answer
        lines.append(json.dumps(row, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def sample_metrics_row(sample: EvalSample, ks: Sequence[int]) -> dict:
    """Flat metric row for one prompt; columns stay stable for CSV output."""
    n = len(sample.generations)
    row: dict = {
        "prompt_id": sample.prompt_id,
        "n_samples": n,
        "n_correct": sample.n_correct,
    }
    for k in ks:
        row[f"pass_at_{k}"] = pass_at_k(n, sample.n_correct, k)
    if sample.correct_answer is not None:
        for k in ks:
            vote = majority_at_k(sample.answers[:k], sample.correct_answer)
            row[f"majority_at_{k}_correct"] = int(vote.is_correct)
            row[f"majority_at_{k}_share"] = vote.vote_share
    return row


def write_metrics_csv(rows: Sequence[dict], path: str | Path) -> None:
    if not rows:
        raise EmptyInputError("no metric rows to write")
    fieldnames = list(rows[0])
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
