"""Acceptance gate: every guarantee the library makes, exercised end to end
at its stated tolerance. Each test prints one [PASS]/[FAIL] line so a full
run reads as a checklist even when everything is green."""

import statistics
from pathlib import Path

import numpy as np

from setrl import objectives
from setrl.clustering import JudgeRequest, RemoteJudge, RuleJudge, build_judge_prompt, cluster
from setrl.core import ClusterAssignment, HyperParams
from setrl.simulator import make_task
from setrl.training import TrainConfig, pepo_advantages, run_training
from setrl.verification import (
    check_finite_differences,
    check_logit_shift,
    check_mean_reward_collapse,
    check_pass_at_k_exact,
    check_passn_analytics,
    check_polychromic_decomposition,
    check_reward_shaping_threshold,
    check_unbiasedness_full,
    check_unbiasedness_sampled,
    check_zero_sum_symmetry,
)
from tests.conftest import make_batch

GOLDEN_PROMPT = Path(__file__).parent / "data" / "judge_prompt_golden.txt"


def announce(capsys, line: str):
    with capsys.disabled():
        print(line)


def run_check(capsys, result):
    announce(capsys, result.line())
    assert result.passed, result.line()


def test_estimator_unbiased_full_enumeration(capsys):
    run_check(capsys, check_unbiasedness_full(draws=200_000))


def test_estimator_unbiased_sampled_collections(capsys):
    run_check(capsys, check_unbiasedness_sampled(draws=200_000))


def test_logit_shift_first_order_law(capsys):
    run_check(capsys, check_logit_shift(step_small=1e-3, step_big=1e-2))


def test_passn_marginals_match_analytics(capsys):
    run_check(capsys, check_passn_analytics())


def test_polychromic_marginal_decomposition(capsys):
    run_check(capsys, check_polychromic_decomposition(instances=20))


def test_mean_reward_objective_collapses(capsys):
    run_check(capsys, check_mean_reward_collapse())


def test_reward_shaping_sign_threshold(capsys):
    run_check(capsys, check_reward_shaping_threshold(configs=50))


def test_set_advantages_zero_sum_and_symmetric(capsys):
    run_check(capsys, check_zero_sum_symmetry(batches=1000))


def test_pass_at_k_matches_enumeration(capsys):
    run_check(capsys, check_pass_at_k_exact(max_samples=12))


def test_exact_gradients_match_finite_differences(capsys):
    run_check(capsys, check_finite_differences())


def test_training_direction_under_matched_updates(capsys):
    """Marginal-set training holds distinct correct solutions that
    per-generation advantages abandon, at matched effective step size."""
    task = make_task("polynomial", {"bound": 4, "distractors": 4})
    steps, seeds, base_lr, m_factor = 400, (1, 2, 3, 4, 5), 8.0, 35.0

    def final_and_initial(algo, lr, seed):
        params = HyperParams(
            rollouts=8, set_size=4, num_sets=70, learning_rate=lr, seed=seed
        )
        config = TrainConfig(
            task=task, judge=RuleJudge(task), algorithm=algo, params=params, steps=steps
        )
        _, records = run_training(config)
        return records[-1].distinct_correct_clusters, records[0].distinct_correct_clusters

    # marginal advantages carry the un-normalized factor M, so matched
    # effective updates need the learning rate divided by it
    pepo = [final_and_initial("pepo", base_lr / m_factor, s) for s in seeds]
    grpo = [final_and_initial("grpo", base_lr, s) for s in seeds]
    pepo_final = statistics.median(p[0] for p in pepo)
    grpo_final = statistics.median(g[0] for g in grpo)
    grpo_initial = statistics.median(g[1] for g in grpo)

    keeps_diversity = pepo_final >= 1.5 * grpo_final
    collapses = grpo_final <= grpo_initial
    passed = keeps_diversity and collapses
    announce(capsys, (
        f"[{'PASS' if passed else 'FAIL'}] training_direction: "
        f"pepo_final_median={pepo_final:g} grpo_final_median={grpo_final:g} "
        f"grpo_initial_median={grpo_initial:g} "
        f"(want pepo >= 1.5 x grpo final and grpo final <= grpo initial; "
        f"{len(seeds)} seeds, {steps} steps)"
    ))
    assert keeps_diversity, (pepo_final, grpo_final)
    assert collapses, (grpo_final, grpo_initial)


class AlwaysDownSession:
    def post(self, url, json=None, headers=None, timeout=None):
        import requests

        raise requests.ConnectionError("judge is down")


def test_judge_protocol_and_fallback(capsys):
    """Prompt bytes are frozen, the degenerate bucket earns no diversity
    credit, and an unreachable judge degrades to zero diversity signal."""
    prompt = build_judge_prompt(JudgeRequest(
        context="Find integers (x, y) with y = x^2 + 3x + 7.",
        responses=tuple(f"solution text {i}" for i in range(1, 9)),
    ))
    golden_ok = prompt.encode("utf-8") == GOLDEN_PROMPT.read_bytes()

    half = objectives.diversity(
        [ClusterAssignment(c) for c in (1, 100, 100, 2)], set_size=4
    )

    judge = RemoteJudge(
        endpoint="https://judge.example/v1/chat/completions",
        model="judge-model",
        api_key="k",
        retry_wait=0.0,
        session=AlwaysDownSession(),
    )
    batch = make_batch([1.0, 0.0, 1.0, 1.0])
    assignments = cluster(judge, batch, on_failure="fallback")
    shared = all(a.cluster_id == 1 and not a.is_degenerate for a in assignments)
    batch = batch.with_clusters(assignments)

    # one shared cluster makes every subset's diversity 1/n, so the
    # polychromic advantages reduce to mean-reward advantages / n
    params = HyperParams(rollouts=4, set_size=2, num_sets="all")
    poly = np.array(pepo_advantages(batch, params).values)
    mean = np.array(
        pepo_advantages(batch, params, objective=objectives.mean_reward(2)).values
    )
    fallback_scale_ok = np.allclose(poly, mean / 2.0, atol=1e-12)

    passed = golden_ok and half == 0.5 and shared and fallback_scale_ok
    announce(capsys, (
        f"[{'PASS' if passed else 'FAIL'}] judge_protocol_and_fallback: "
        f"golden_prompt_bytes={'ok' if golden_ok else 'DIFF'} "
        f"degenerate_diversity={half:g} (want 0.5) "
        f"fallback_shared_cluster={'ok' if shared else 'NO'} "
        f"fallback_polychromic==mean_reward/n={'ok' if fallback_scale_ok else 'NO'}"
    ))
    assert golden_ok
    assert half == 0.5
    assert shared
    assert fallback_scale_ok
