"""Finite-action softmax policies and synthetic tasks with exact oracles.

Generation spaces are small and enumerable, so expectations, gradients and
marginal set advantages can be computed exactly by summing over ordered
n-tuples with product weights. Those sums are the ground truth the Monte
Carlo estimator is verified against.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Mapping, Sequence

import numpy as np

from .core import (
    DEGENERATE_CLUSTER_ID,
    ClusterAssignment,
    Generation,
    GenerationBatch,
    Prompt,
)
from .errors import (
    DimensionMismatchError,
    EnumerationTooLargeError,
    InvalidParamsError,
)
from .objectives import SetObjective

# Exact oracles refuse to enumerate beyond this many ordered tuples.
DEFAULT_MAX_TUPLES = 2_000_000


@dataclass(frozen=True, eq=False)
class TabularPolicy:
    """Softmax over a finite action space: pi = softmax(theta / temperature)."""

    theta: np.ndarray
    temperature: float = 1.0

    def __post_init__(self):
        arr = np.array(self.theta, dtype=float, copy=True)
        if arr.ndim != 1 or arr.size < 1:
            raise InvalidParamsError("theta must be a nonempty vector")
        if not np.all(np.isfinite(arr)):
            raise InvalidParamsError("theta must be finite")
        if self.temperature <= 0:
            raise InvalidParamsError("temperature must be positive")
        arr.setflags(write=False)
        object.__setattr__(self, "theta", arr)

    @property
    def num_actions(self) -> int:
        return int(self.theta.size)

    def logprobs(self) -> np.ndarray:
        z = self.theta / self.temperature
        z = z - z.max()
        return z - np.log(np.exp(z).sum())

    def probs(self) -> np.ndarray:
        z = self.theta / self.temperature
        z = z - z.max()
        e = np.exp(z)
        return e / e.sum()

    def entropy(self) -> float:
        p = self.probs()
        return float(-(p * np.log(p)).sum())

    def logprob_grads(self, actions: Sequence[int]) -> np.ndarray:
        """Rows of grad_theta log pi(a): (onehot(a) - pi) / temperature."""
        p = self.probs()
        acts = np.asarray(actions, dtype=int)
        if acts.ndim != 1:
            raise DimensionMismatchError("actions must be a flat index sequence")
        if acts.size and (acts.min() < 0 or acts.max() >= self.num_actions):
            raise DimensionMismatchError("action index outside the generation space")
        rows = -np.tile(p, (acts.size, 1))
        rows[np.arange(acts.size), acts] += 1.0
        return rows / self.temperature

    def step(self, direction: np.ndarray, learning_rate: float) -> "TabularPolicy":
        direction = np.asarray(direction, dtype=float)
        if direction.shape != self.theta.shape:
            raise DimensionMismatchError(
                f"direction shape {direction.shape} vs theta {self.theta.shape}"
            )
        return TabularPolicy(self.theta + learning_rate * direction, self.temperature)


@dataclass(frozen=True, eq=False)
class SyntheticTask:
    """A finite generation space with reward and clustering rules attached.

    ``action_clusters`` is the task-intrinsic assignment per action; bandits
    carry their table verbatim (``literal_cluster_ids``), other tasks use
    first-appearance ids over the space.
    """

    kind: str
    prompt: Prompt
    generations: tuple[Generation, ...]
    rewards: tuple[float, ...]
    action_clusters: tuple[ClusterAssignment, ...]
    literal_cluster_ids: bool = False

    def __post_init__(self):
        if not self.generations:
            raise InvalidParamsError("task has an empty generation space")
        if len(self.rewards) != len(self.generations) or len(self.action_clusters) != len(
            self.generations
        ):
            raise InvalidParamsError("rewards/clusters must match the generation space")
        if any(not 0.0 <= r <= 1.0 for r in self.rewards):
            raise InvalidParamsError("rewards must lie in [0, 1]")
        for i, g in enumerate(self.generations):
            if g.action_index != i:
                raise InvalidParamsError("generation space must be indexed 0..|Y|-1")

    @property
    def num_actions(self) -> int:
        return len(self.generations)

    def rewards_array(self) -> np.ndarray:
        return np.asarray(self.rewards, dtype=float)

    def batch_from_actions(self, actions: Sequence[int]) -> GenerationBatch:
        return GenerationBatch(
            prompt=self.prompt,
            generations=tuple(self.generations[int(a)] for a in actions),
            rewards=tuple(self.rewards[int(a)] for a in actions),
        )


def _poly_eval(coefficients: Sequence[int], x: int) -> int:
    total = 0
    for c in reversed(list(coefficients)):
        total = total * x + c
    return total


def _make_polynomial(params: Mapping) -> SyntheticTask:
    coefficients = tuple(int(c) for c in params.get("coefficients", (7, 3, 1)))
    bound = int(params.get("bound", 2))
    distractors = int(params.get("distractors", 0))
    if bound < 0 or not coefficients:
        raise InvalidParamsError("polynomial needs coefficients and bound >= 0")
    if distractors < 0:
        raise InvalidParamsError("distractors must be >= 0")
    poly_text = " + ".join(
        f"{c}*x^{i}" if i else str(c) for i, c in enumerate(coefficients) if c
    )
    xs = list(range(-bound, bound + 1))
    pairs = [(x, _poly_eval(coefficients, x)) for x in xs]
    for i in range(distractors):
        x = xs[i % len(xs)]
        y = _poly_eval(coefficients, x) + 1 + i // len(xs)
        pairs.append((x, y))
    generations, rewards, keys = [], [], []
    for idx, (x, y) in enumerate(pairs):
        rendering = f"({x}, {y})"
        generations.append(Generation(token_string=rendering, answer=rendering, action_index=idx))
        rewards.append(1.0 if y == _poly_eval(coefficients, x) else 0.0)
        keys.append(rendering)
    return SyntheticTask(
        kind="polynomial",
        prompt=Prompt(id="polynomial", payload=f"Find integer pairs (x, y) with y = {poly_text}."),
        generations=tuple(generations),
        rewards=tuple(rewards),
        action_clusters=_appearance_clusters(keys),
    )


def _signed_part(base: int, delta: int) -> str:
    sign = "+" if delta >= 0 else "-"
    return f"({base}{sign}{abs(delta)})"


def _make_multiplication(params: Mapping) -> SyntheticTask:
    a = int(params.get("a", 343))
    b = int(params.get("b", 67))
    max_delta = int(params.get("max_delta", 3))
    if a <= 0 or b <= 0 or max_delta < 1:
        raise InvalidParamsError("multiplication needs positive a, b and max_delta >= 1")
    if max_delta >= min(a, b):
        raise InvalidParamsError("max_delta too large for the factors")
    deltas = [d for d in range(-max_delta, max_delta + 1) if d != 0]
    generations, rewards, keys = [], [], []
    idx = 0
    for q in deltas:
        for t in deltas:
            p, s = a - q, b - t
            for slip in (False, True):
                # expand (p+q)(s+t); the slip variant flips the sign of the
                # q*t term, a classic arithmetic error that keeps the strategy
                terms = [(p * s, f"{p}*{s}"), (p * t, f"{p}*{abs(t)}"), (q * s, f"{abs(q)}*{s}")]
                qt = -q * t if slip else q * t
                terms.append((qt, f"{abs(q)}*{abs(t)}"))
                total = sum(v for v, _ in terms)
                body = terms[0][1]
                for value, text in terms[1:]:
                    body += f" + {text}" if value >= 0 else f" - {text}"
                lhs = _signed_part(p, q) + _signed_part(s, t)
                rendering = f"{lhs} = {body} = {total}"
                generations.append(
                    Generation(token_string=rendering, answer=str(total), action_index=idx)
                )
                rewards.append(1.0 if total == a * b else 0.0)
                # template family: which way each factor was rounded
                keys.append(((q > 0) - (q < 0), (t > 0) - (t < 0)))
                idx += 1
    return SyntheticTask(
        kind="multiplication",
        prompt=Prompt(id="multiplication", payload=f"Compute {a} x {b} by decomposition."),
        generations=tuple(generations),
        rewards=tuple(rewards),
        action_clusters=_appearance_clusters(keys),
    )


def _make_bandit(params: Mapping) -> SyntheticTask:
    if "rewards" not in params or "clusters" not in params:
        raise InvalidParamsError("bandit needs rewards and clusters tables")
    rewards = tuple(float(r) for r in params["rewards"])
    cluster_ids = tuple(int(c) for c in params["clusters"])
    if len(rewards) != len(cluster_ids) or not rewards:
        raise InvalidParamsError("bandit tables must be nonempty and equal length")
    if any(c < 1 for c in cluster_ids):
        raise InvalidParamsError("bandit cluster ids must be positive")
    answers = params.get("answers")
    if answers is None:
        answers = [f"arm_{i}" for i in range(len(rewards))]
    if len(answers) != len(rewards):
        raise InvalidParamsError("answers table must match rewards")
    generations = tuple(
        Generation(token_string=str(ans), answer=str(ans), action_index=i)
        for i, ans in enumerate(answers)
    )
    return SyntheticTask(
        kind="multi_solution_bandit",
        prompt=Prompt(id="bandit", payload=str(params.get("context", "pick an arm"))),
        generations=generations,
        rewards=rewards,
        action_clusters=tuple(ClusterAssignment(c) for c in cluster_ids),
        literal_cluster_ids=True,
    )


def _appearance_clusters(keys: Sequence[object]) -> tuple[ClusterAssignment, ...]:
    ids: dict[object, int] = {}
    out = []
    for key in keys:
        if key not in ids:
            ids[key] = len(ids) + 1
        out.append(ClusterAssignment(ids[key]))
    return tuple(out)


_TASK_BUILDERS = {
    "polynomial": _make_polynomial,
    "multiplication": _make_multiplication,
    "multi_solution_bandit": _make_bandit,
}


def make_task(kind: str, params: Mapping | None = None) -> SyntheticTask:
    """Build a synthetic task. Kinds: polynomial, multiplication, multi_solution_bandit."""
    builder = _TASK_BUILDERS.get(kind)
    if builder is None:
        raise InvalidParamsError(f"unknown task kind {kind!r}")
    return builder(dict(params or {}))


def sample_batch(
    policy: TabularPolicy,
    task: SyntheticTask,
    n_rollouts: int,
    seed: int | np.random.Generator,
) -> GenerationBatch:
    """Draw N i.i.d. generations; rewards come from the task rule, no clusters yet."""
    if policy.num_actions != task.num_actions:
        raise DimensionMismatchError(
            f"policy over {policy.num_actions} actions, task has {task.num_actions}"
        )
    if n_rollouts < 1:
        raise InvalidParamsError("need at least one rollout")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    actions = rng.choice(task.num_actions, size=n_rollouts, p=policy.probs())
    return task.batch_from_actions(actions.tolist())


def _tuple_space(num_actions: int, arity: int, max_tuples: int):
    if num_actions**arity > max_tuples:
        raise EnumerationTooLargeError(
            f"{num_actions}^{arity} ordered tuples exceed the {max_tuples} cap"
        )
    return product(range(num_actions), repeat=arity)


def score_action_tuple(task: SyntheticTask, objective: SetObjective, members: Sequence[int]) -> float:
    """Objective score of an ordered tuple of actions, using the task tables."""
    rewards = [task.rewards[a] for a in members]
    clusters = [task.action_clusters[a] for a in members] if objective.requires_clusters else None
    return objective.score(rewards, clusters)


def exact_expected_objective(
    policy: TabularPolicy,
    task: SyntheticTask,
    objective: SetObjective,
    set_size: int,
    max_tuples: int = DEFAULT_MAX_TUPLES,
) -> float:
    """E[f(Y_1..Y_n)] by full enumeration over ordered tuples."""
    _check_alignment(policy, task, objective, set_size)
    probs = policy.probs()
    total = 0.0
    for tup in _tuple_space(task.num_actions, set_size, max_tuples):
        weight = 1.0
        for a in tup:
            weight *= probs[a]
        total += weight * score_action_tuple(task, objective, tup)
    return total


def exact_setrl_gradient(
    policy: TabularPolicy,
    task: SyntheticTask,
    objective: SetObjective,
    set_size: int,
    max_tuples: int = DEFAULT_MAX_TUPLES,
) -> np.ndarray:
    """grad_theta E[f] via enumerated score-function terms."""
    _check_alignment(policy, task, objective, set_size)
    probs = policy.probs()
    grad_rows = policy.logprob_grads(range(task.num_actions))
    grad = np.zeros(task.num_actions)
    for tup in _tuple_space(task.num_actions, set_size, max_tuples):
        weight = 1.0
        for a in tup:
            weight *= probs[a]
        f = score_action_tuple(task, objective, tup)
        if f == 0.0:
            continue
        score_sum = np.zeros(task.num_actions)
        for a in tup:
            score_sum += grad_rows[a]
        grad += weight * f * score_sum
    return grad


def exact_marginal_advantage(
    policy: TabularPolicy,
    task: SyntheticTask,
    objective: SetObjective,
    set_size: int,
    action: int,
    max_tuples: int = DEFAULT_MAX_TUPLES,
) -> float:
    """E[f(y, Y_2..Y_n)] - E[f(Y_1..Y_n)] for a fixed generation y."""
    _check_alignment(policy, task, objective, set_size)
    if not 0 <= action < task.num_actions:
        raise DimensionMismatchError(f"action {action} outside the space")
    probs = policy.probs()
    conditional = 0.0
    if set_size == 1:
        conditional = score_action_tuple(task, objective, (action,))
    else:
        for tail in _tuple_space(task.num_actions, set_size - 1, max_tuples):
            weight = 1.0
            for a in tail:
                weight *= probs[a]
            conditional += weight * score_action_tuple(task, objective, (action, *tail))
    return conditional - exact_expected_objective(policy, task, objective, set_size, max_tuples)


def exact_mean_reward(policy: TabularPolicy, task: SyntheticTask) -> float:
    _check_space(policy, task)
    return float(policy.probs() @ task.rewards_array())


def exact_standard_gradient(policy: TabularPolicy, task: SyntheticTask) -> np.ndarray:
    """grad_theta E[r] with the mean reward as baseline (identical value)."""
    _check_space(policy, task)
    probs = policy.probs()
    advantages = task.rewards_array() - exact_mean_reward(policy, task)
    grad_rows = policy.logprob_grads(range(task.num_actions))
    return (probs * advantages) @ grad_rows


def _check_space(policy: TabularPolicy, task: SyntheticTask):
    if policy.num_actions != task.num_actions:
        raise DimensionMismatchError(
            f"policy over {policy.num_actions} actions, task has {task.num_actions}"
        )


def _check_alignment(policy, task, objective: SetObjective, set_size: int):
    _check_space(policy, task)
    if objective.arity != set_size:
        raise DimensionMismatchError(
            f"objective arity {objective.arity} != set size {set_size}"
        )
    if set_size < 1:
        raise InvalidParamsError("set size must be positive")
