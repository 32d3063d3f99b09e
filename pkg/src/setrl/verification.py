"""Oracle-equivalence checks tying the estimator to exact enumeration.

Every check pits two independent computational routes against each other:
Monte Carlo estimator vs enumerated gradient, first-order logit-shift law vs
an actual gradient step, closed-form marginal advantages vs brute-force
expectations, closed-form pass@k vs exhaustive subsets, and so on. A check
never trusts the code path it is checking.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, product
from math import comb
from typing import Sequence

import numpy as np

from . import objectives
from .errors import EnumerationTooLargeError, InvalidParamsError
from .core import ClusterAssignment, Generation, GenerationBatch, Prompt
from .metrics import pass_at_k
from .objectives import SetObjective, diversity
from .sets import (
    enumerate_subsets,
    estimate_gradient,
    marginal_advantages,
    sample_subsets,
    scaling_factor,
    score_sets,
)
from .simulator import (
    SyntheticTask,
    TabularPolicy,
    exact_marginal_advantage,
    exact_mean_reward,
    exact_setrl_gradient,
    exact_standard_gradient,
    make_task,
    score_action_tuple,
)
from .training import verify_logit_shift


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"[{status}] {self.name}: measured={self.measured:.3e} "
            f"tolerance={self.tolerance:.3e} {self.detail}".rstrip()
        )


# ---------------------------------------------------------------------------
# reference fixtures

def reference_bandit() -> SyntheticTask:
    """5-arm bandit with mixed rewards and a degenerate arm."""
    return make_task(
        "multi_solution_bandit",
        {"rewards": (1.0, 0.0, 1.0, 0.0, 1.0), "clusters": (1, 2, 2, 100, 3)},
    )


def reference_policy() -> TabularPolicy:
    return TabularPolicy(np.array([0.6, -0.2, 0.1, -0.4, 0.3]))


def _random_bandit(rng: np.random.Generator, num_actions: int, binary: bool = False):
    if binary:
        rewards = rng.integers(0, 2, size=num_actions).astype(float)
    else:
        rewards = np.round(rng.random(num_actions), 6)
    ids = rng.integers(1, num_actions + 1, size=num_actions)
    degenerate = rng.random(num_actions) < 0.15
    clusters = [100 if d else int(c) for c, d in zip(ids, degenerate)]
    task = make_task(
        "multi_solution_bandit",
        {"rewards": tuple(rewards.tolist()), "clusters": tuple(clusters)},
    )
    policy = TabularPolicy(rng.normal(0.0, 1.0, size=num_actions))
    return task, policy


# ---------------------------------------------------------------------------
# Monte Carlo estimator harness (vectorized; bit-equivalent to the
# score_sets -> marginal_advantages -> estimate_gradient path, see tests)

def objective_table(task: SyntheticTask, objective: SetObjective, set_size: int) -> np.ndarray:
    """Score of every ordered action tuple, as an |Y|^n lookup table."""
    num = task.num_actions
    if num**set_size > 2_000_000:
        raise EnumerationTooLargeError(f"{num}^{set_size} tuples exceed the table cap")
    table = np.empty((num,) * set_size)
    for tup in product(range(num), repeat=set_size):
        table[tup] = score_action_tuple(task, objective, tup)
    return table


@dataclass(frozen=True)
class MCGradient:
    mean: np.ndarray
    stderr: np.ndarray
    exact: np.ndarray
    scaling: float
    max_abs_z: float
    draws: int
    actions: np.ndarray | None = None
    subset_positions: np.ndarray | None = None
    per_draw: np.ndarray | None = None


def mc_gradient(
    policy: TabularPolicy,
    task: SyntheticTask,
    objective: SetObjective,
    n_rollouts: int,
    set_size: int,
    num_sets: int,
    draws: int,
    seed: int,
    scale_override: float | None = None,
    keep_details: bool = False,
) -> MCGradient:
    """Mean single-draw estimator gradient over many i.i.d. draws.

    Each draw: N fresh generations and, when num_sets < C(N, n), a fresh
    uniform subset collection. The mean is compared against
    scaling_factor(N, n, K) times the enumerated exact gradient, coordinate
    by coordinate in standard-error units.
    """
    subsets_all = enumerate_subsets(n_rollouts, set_size)
    k_all = len(subsets_all)
    if not 1 < num_sets <= k_all:
        raise InvalidParamsError(f"num_sets {num_sets} outside (1, {k_all}]")
    table = objective_table(task, objective, set_size)
    probs = policy.probs()
    num_actions = task.num_actions
    rng = np.random.default_rng(seed)
    actions = rng.choice(num_actions, size=(draws, n_rollouts), p=probs)

    scores_all = np.stack(
        [table[tuple(actions[:, list(s)].T)] for s in subsets_all], axis=1
    )  # (draws, k_all)
    membership_all = np.zeros((k_all, n_rollouts))
    for pos, subset in enumerate(subsets_all):
        membership_all[pos, list(subset)] = 1.0

    if num_sets == k_all:
        advantages = scores_all - scores_all.mean(axis=1, keepdims=True)
        marginal = advantages @ membership_all  # (draws, N)
        positions = np.tile(np.arange(k_all), (draws, 1)) if keep_details else None
    else:
        if comb(k_all, num_sets) > 1_000_000:
            raise EnumerationTooLargeError("too many subset collections to enumerate")
        collections = np.array(list(combinations(range(k_all), num_sets)))
        positions = collections[rng.integers(0, len(collections), size=draws)]
        chosen = np.take_along_axis(scores_all, positions, axis=1)
        advantages = chosen - chosen.mean(axis=1, keepdims=True)
        marginal = np.einsum("rk,rkn->rn", advantages, membership_all[positions])

    # sum_i marginal_i * (onehot(a_i) - probs) / temperature, per draw
    total = marginal.sum(axis=1)
    per_draw = np.empty((draws, num_actions))
    for a in range(num_actions):
        hits = ((actions == a) * marginal).sum(axis=1)
        per_draw[:, a] = (hits - probs[a] * total) / policy.temperature

    mean = per_draw.mean(axis=0)
    stderr = per_draw.std(axis=0, ddof=1) / np.sqrt(draws)
    exact = exact_setrl_gradient(policy, task, objective, set_size)
    scaling = (
        scaling_factor(n_rollouts, set_size, num_sets)
        if scale_override is None
        else float(scale_override)
    )
    target = scaling * exact
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(stderr > 0, (mean - target) / stderr, np.where(mean == target, 0.0, np.inf))
    return MCGradient(
        mean=mean,
        stderr=stderr,
        exact=exact,
        scaling=scaling,
        max_abs_z=float(np.abs(z).max()),
        draws=draws,
        actions=actions if keep_details else None,
        subset_positions=positions if keep_details else None,
        per_draw=per_draw if keep_details else None,
    )


def estimator_gradient_reference(
    policy: TabularPolicy,
    task: SyntheticTask,
    objective: SetObjective,
    subsets: Sequence[tuple[int, ...]],
    actions: Sequence[int],
) -> np.ndarray:
    """Production-path single-draw gradient, for cross-checking the harness."""
    batch = task.batch_from_actions(actions)
    if objective.requires_clusters:
        batch = batch.with_clusters([task.action_clusters[a] for a in actions])
    collection = score_sets(batch, subsets, objective)
    marginal = marginal_advantages(collection, batch.size)
    return estimate_gradient(batch, marginal, policy.logprob_grads(list(actions)))


# ---------------------------------------------------------------------------
# individual checks

Z_LIMIT = 4.0


def check_unbiasedness_full(
    draws: int = 200_000, seed: int = 20260819, scale_override: float | None = None
) -> CheckResult:
    """Estimator mean vs M x exact gradient, every subset enumerated."""
    result = mc_gradient(
        reference_policy(), reference_bandit(), objectives.polychromic(3),
        n_rollouts=5, set_size=3, num_sets=10, draws=draws, seed=seed,
        scale_override=scale_override,
    )
    return CheckResult(
        name="unbiasedness_full_enumeration",
        passed=result.max_abs_z <= Z_LIMIT,
        measured=result.max_abs_z,
        tolerance=Z_LIMIT,
        detail=f"N=5 n=3 K=10 M={result.scaling:g} draws={draws} (polychromic)",
    )


def check_unbiasedness_sampled(
    draws: int = 200_000, seed: int = 20260820, scale_override: float | None = None
) -> CheckResult:
    """Estimator mean vs M x exact gradient with per-draw sampled collections."""
    result = mc_gradient(
        reference_policy(), reference_bandit(), objectives.polychromic(3),
        n_rollouts=5, set_size=3, num_sets=4, draws=draws, seed=seed,
        scale_override=scale_override,
    )
    return CheckResult(
        name="unbiasedness_sampled_collections",
        passed=result.max_abs_z <= Z_LIMIT,
        measured=result.max_abs_z,
        tolerance=Z_LIMIT,
        detail=f"N=5 n=3 K=4 M={result.scaling:g} draws={draws} (polychromic)",
    )


def _logit_shift_fixture():
    task = make_task(
        "multi_solution_bandit",
        {"rewards": (1.0, 0.0, 1.0, 0.5), "clusters": (1, 2, 1, 3)},
    )
    policy = TabularPolicy(np.array([0.3, -0.1, 0.2, -0.5]))
    return task, policy


def check_logit_shift(step_small: float = 1e-3, step_big: float = 1e-2) -> CheckResult:
    """First-order shift law for set RL and standard RL, plus step^2 scaling."""
    task, policy = _logit_shift_fixture()
    objective = objectives.polychromic(3)
    devs = {}
    for algo in ("set", "standard"):
        obj = objective if algo == "set" else None
        devs[algo] = {
            step: verify_logit_shift(policy, task, obj, 3, step, algorithm=algo)
            for step in (step_small, step_big)
        }
    worst_small = max(devs[a][step_small] for a in devs)
    ratios = [devs[a][step_big] / devs[a][step_small] for a in devs]
    ratio_ok = all(50.0 <= r <= 200.0 for r in ratios)
    passed = worst_small < 1e-5 and ratio_ok
    return CheckResult(
        name="logit_shift_law",
        passed=passed,
        measured=worst_small,
        tolerance=1e-5,
        detail=f"ratios={[round(r, 2) for r in ratios]} (want within [50, 200])",
    )


def check_passn_analytics() -> CheckResult:
    """Closed-form best-of-n marginal advantages vs enumeration, p in {0,.25,.5,1}."""
    cases = {
        0.0: ((0.0, 0.0, 0.0, 0.0), (1, 2, 3, 4)),
        0.25: ((1.0, 0.0, 0.0, 0.0), (1, 2, 3, 4)),
        0.5: ((1.0, 1.0, 0.0, 0.0), (1, 2, 3, 4)),
        1.0: ((1.0, 1.0, 1.0, 1.0), (1, 2, 3, 4)),
    }
    worst = 0.0
    for p, (rewards, clusters) in cases.items():
        task = make_task("multi_solution_bandit", {"rewards": rewards, "clusters": clusters})
        policy = TabularPolicy(np.zeros(len(rewards)))
        for set_size in (2, 3):
            objective = objectives.pass_at_n(set_size)
            correct_adv, incorrect_adv = objectives.analytic_passn_marginals(p, set_size)
            for action, reward in enumerate(rewards):
                expected = correct_adv if reward == 1.0 else incorrect_adv
                got = exact_marginal_advantage(policy, task, objective, set_size, action)
                worst = max(worst, abs(got - expected))
    return CheckResult(
        name="passn_analytic_marginals",
        passed=worst < 1e-12,
        measured=worst,
        tolerance=1e-12,
    )


def polychromic_marginal_decomposition(
    policy: TabularPolicy, task: SyntheticTask, set_size: int, action: int
) -> dict[str, float]:
    """Four-term split of the polychromic marginal advantage, by brute force.

    term_cond_mean  : [r(y)/n + (n-1)/n E[r]] * E[d(y, tail)]
    term_uncond_mean: -E[r] * E[d(full set)]
    term_cond_cov   : Cov over tails of (mean set reward with y fixed, d(y, tail))
    term_uncond_cov : -Cov over full sets of (r(Y_1), d(set))
    """
    probs = policy.probs()
    rewards = task.rewards_array()
    clusters = task.action_clusters
    num = task.num_actions
    mean_r = float(probs @ rewards)
    r_y = float(rewards[action])

    def tuple_weight(tup):
        w = 1.0
        for a in tup:
            w *= probs[a]
        return w

    # expectations over tails (size n-1) with y prepended
    e_d_cond = e_a = e_ad = 0.0
    for tail in product(range(num), repeat=set_size - 1):
        w = tuple_weight(tail)
        members = (action, *tail)
        d = diversity([clusters[a] for a in members], set_size)
        set_mean_reward = (r_y + sum(rewards[a] for a in tail)) / set_size
        e_d_cond += w * d
        e_a += w * set_mean_reward
        e_ad += w * set_mean_reward * d
    cov_cond = e_ad - e_a * e_d_cond

    # expectations over unconditioned full sets
    e_d_full = e_r1 = e_r1d = 0.0
    for tup in product(range(num), repeat=set_size):
        w = tuple_weight(tup)
        d = diversity([clusters[a] for a in tup], set_size)
        e_d_full += w * d
        e_r1 += w * rewards[tup[0]]
        e_r1d += w * rewards[tup[0]] * d
    cov_full = e_r1d - e_r1 * e_d_full

    terms = {
        "term_cond_mean": (r_y / set_size + (set_size - 1) / set_size * mean_r) * e_d_cond,
        "term_uncond_mean": -mean_r * e_d_full,
        "term_cond_cov": cov_cond,
        "term_uncond_cov": -cov_full,
    }
    terms["total"] = sum(terms.values())
    return terms


def check_polychromic_decomposition(instances: int = 20, seed: int = 7) -> CheckResult:
    """Decomposition total vs direct enumeration of E[f|y] - E[f]."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        num_actions = int(rng.integers(2, 7))
        set_size = int(rng.integers(2, 4))
        task, policy = _random_bandit(rng, num_actions, binary=bool(rng.integers(0, 2)))
        objective = objectives.polychromic(set_size)
        action = int(rng.integers(0, num_actions))
        direct = exact_marginal_advantage(policy, task, objective, set_size, action)
        decomposed = polychromic_marginal_decomposition(policy, task, set_size, action)["total"]
        worst = max(worst, abs(direct - decomposed))
    return CheckResult(
        name="polychromic_decomposition",
        passed=worst < 1e-10,
        measured=worst,
        tolerance=1e-10,
        detail=f"{instances} randomized instances",
    )


def check_mean_reward_collapse(step_size: float = 1e-3) -> CheckResult:
    """Mean-reward marginals collapse to (r - E[r]) / n; shift laws coincide."""
    task = reference_bandit()
    policy = reference_policy()
    set_size = 3
    objective = objectives.mean_reward(set_size)
    mean_r = exact_mean_reward(policy, task)
    probs = policy.probs()
    worst = 0.0
    marginals = []
    for action in range(task.num_actions):
        got = exact_marginal_advantage(policy, task, objective, set_size, action)
        expected = (task.rewards[action] - mean_r) / set_size
        worst = max(worst, abs(got - expected))
        marginals.append(got)
    worst = max(worst, abs(float(probs @ np.array(marginals))))
    # one exact step under either gradient moves every logit identically
    set_shift = (
        policy.step(exact_setrl_gradient(policy, task, objective, set_size), step_size).logprobs()
        - policy.logprobs()
    )
    std_shift = (
        policy.step(exact_standard_gradient(policy, task), step_size).logprobs()
        - policy.logprobs()
    )
    worst = max(worst, float(np.abs(set_shift - std_shift).max()))
    return CheckResult(
        name="mean_reward_collapse",
        passed=worst < 1e-12,
        measured=worst,
        tolerance=1e-12,
    )


def check_reward_shaping_threshold(configs: int = 50, seed: int = 11) -> CheckResult:
    """Sign of the shaped advantage of a zero-reward generation matches
    d(y) > p/lambda + E[d], under exact expectations."""
    rng = np.random.default_rng(seed)
    checked = 0
    margin = np.inf
    for _ in range(configs):
        num_actions = int(rng.integers(3, 9))
        rewards = rng.integers(0, 2, size=num_actions).astype(float)
        rewards[int(rng.integers(0, num_actions))] = 0.0
        div_values = rng.random(num_actions)
        weight = float(rng.choice([0.25, 0.5, 1.0, 2.0]))
        policy = TabularPolicy(rng.normal(0.0, 1.0, size=num_actions))
        probs = policy.probs()
        p = float(probs @ rewards)
        mean_d = float(probs @ div_values)
        for action in np.flatnonzero(rewards == 0.0):
            shaped = (0.0 - p) + weight * (div_values[action] - mean_d)
            predicate = div_values[action] > p / weight + mean_d
            if (shaped > 0) != predicate:
                return CheckResult(
                    name="reward_shaping_threshold",
                    passed=False,
                    measured=shaped,
                    tolerance=0.0,
                    detail=f"sign mismatch at config with p={p:.4f} lambda={weight}",
                )
            checked += 1
            margin = min(margin, abs(shaped))
    return CheckResult(
        name="reward_shaping_threshold",
        passed=True,
        measured=float(margin),
        tolerance=0.0,
        detail=f"{checked} zero-reward generations across {configs} configs",
    )


def check_zero_sum_symmetry(batches: int = 1000, seed: int = 13) -> CheckResult:
    """Set advantages and marginals sum to zero; member order is irrelevant."""
    rng = np.random.default_rng(seed)
    prompt = Prompt(id="fuzz")
    worst = 0.0
    for _ in range(batches):
        n_gen = int(rng.integers(3, 9))
        set_size = int(rng.integers(2, n_gen))
        kind = ("polychromic", "pass_at_n", "mean_reward")[int(rng.integers(0, 3))]
        objective = objectives.objective_from_kind(kind, set_size)
        rewards = rng.random(n_gen)
        ids = [
            100 if rng.random() < 0.15 else int(rng.integers(1, n_gen + 1))
            for _ in range(n_gen)
        ]
        batch = GenerationBatch(
            prompt=prompt,
            generations=tuple(
                Generation(token_string=f"g{i}", answer=f"g{i}", action_index=i)
                for i in range(n_gen)
            ),
            rewards=tuple(rewards.tolist()),
            clusters=tuple(ClusterAssignment(c) for c in ids),
        )
        k_all = comb(n_gen, set_size)
        if k_all > 2 and rng.integers(0, 2):
            num_sets = int(rng.integers(2, k_all + 1))
            subsets = sample_subsets(n_gen, set_size, num_sets, rng)
        else:
            subsets = enumerate_subsets(n_gen, set_size)
        collection = score_sets(batch, subsets, objective)
        scale = max(1.0, sum(abs(s) for s in collection.scores))
        worst = max(worst, abs(sum(collection.set_advantages)) / scale)
        marginal = marginal_advantages(collection, n_gen)
        worst = max(worst, abs(sum(marginal.values)) / scale)
        # symmetry: shuffle the members of one subset
        subset = list(collection.indices[int(rng.integers(0, len(collection.indices)))])
        shuffled = [subset[i] for i in rng.permutation(len(subset))]
        score_a = score_action_tuple_from_batch(batch, objective, subset)
        score_b = score_action_tuple_from_batch(batch, objective, shuffled)
        worst = max(worst, abs(score_a - score_b))
    return CheckResult(
        name="zero_sum_and_symmetry",
        passed=worst < 1e-10,
        measured=worst,
        tolerance=1e-10,
        detail=f"{batches} randomized batches",
    )


def score_action_tuple_from_batch(
    batch: GenerationBatch, objective: SetObjective, indices: Sequence[int]
) -> float:
    rewards = [batch.rewards[i] for i in indices]
    clusters = None
    if batch.clusters is not None:
        clusters = [batch.clusters[i] for i in indices]
    return objective.score(rewards, clusters if objective.requires_clusters else None)


def check_pass_at_k_exact(max_samples: int = 12) -> CheckResult:
    """Closed-form pass@k equals exhaustive subset counting, bit for bit."""
    worst = 0.0
    cases = 0
    for n_samples in range(1, max_samples + 1):
        for k in range(1, n_samples + 1):
            subsets = list(combinations(range(n_samples), k))
            for n_correct in range(0, n_samples + 1):
                # the first n_correct indices are the correct ones
                hits = sum(1 for s in subsets if s[0] < n_correct)
                oracle = hits / len(subsets)
                got = pass_at_k(n_samples, n_correct, k)
                if got != oracle:
                    worst = max(worst, abs(got - oracle))
                cases += 1
    return CheckResult(
        name="pass_at_k_exact",
        passed=worst == 0.0,
        measured=worst,
        tolerance=0.0,
        detail=f"{cases} (N, c, k) cases up to N={max_samples}",
    )


def check_finite_differences(
    num_policies: int = 10, seed: int = 17, step: float = 1e-5
) -> CheckResult:
    """Enumerated gradient vs central differences of the enumerated objective."""
    task = reference_bandit()
    set_size = 3
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(num_policies):
        theta = rng.normal(0.0, 1.0, size=task.num_actions)
        for kind in ("mean_reward", "pass_at_n", "polychromic"):
            objective = objectives.objective_from_kind(kind, set_size)
            policy = TabularPolicy(theta)
            grad = exact_setrl_gradient(policy, task, objective, set_size)
            fd = np.empty_like(grad)
            for j in range(task.num_actions):
                bump = np.zeros_like(theta)
                bump[j] = step
                up = _expected(theta + bump, task, objective, set_size)
                down = _expected(theta - bump, task, objective, set_size)
                fd[j] = (up - down) / (2 * step)
            scale = max(float(np.abs(grad).max()), 1e-12)
            worst = max(worst, float(np.abs(grad - fd).max()) / scale)
    return CheckResult(
        name="finite_difference_gradients",
        passed=worst < 1e-5,
        measured=worst,
        tolerance=1e-5,
        detail=f"{num_policies} random policies x 3 objectives",
    )


def _expected(theta, task, objective, set_size):
    from .simulator import exact_expected_objective

    return exact_expected_objective(TabularPolicy(theta), task, objective, set_size)


# ---------------------------------------------------------------------------
# suite driver

def run_all(fast: bool = False) -> list[CheckResult]:
    """Run every oracle-equivalence check; ``fast`` shrinks the MC draws."""
    draws = 20_000 if fast else 200_000
    batches = 200 if fast else 1000
    return [
        check_unbiasedness_full(draws=draws),
        check_unbiasedness_sampled(draws=draws),
        check_logit_shift(),
        check_passn_analytics(),
        check_polychromic_decomposition(),
        check_mean_reward_collapse(),
        check_reward_shaping_threshold(),
        check_zero_sum_symmetry(batches=batches),
        check_pass_at_k_exact(),
        check_finite_differences(),
    ]


def report_dict(results: Sequence[CheckResult]) -> dict:
    return {
        "all_passed": bool(all(r.passed for r in results)),
        "checks": [
            {
                "name": r.name,
                "passed": bool(r.passed),
                "measured": float(r.measured),
                "tolerance": float(r.tolerance),
                "detail": r.detail,
            }
            for r in results
        ],
    }
