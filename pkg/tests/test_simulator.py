import numpy as np
import pytest

from setrl.core import ClusterAssignment
from setrl.errors import (
    DimensionMismatchError,
    EnumerationTooLargeError,
    InvalidParamsError,
)
from setrl.objectives import mean_reward, pass_at_n, polychromic
from setrl.simulator import (
    SyntheticTask,
    TabularPolicy,
    exact_expected_objective,
    exact_marginal_advantage,
    exact_mean_reward,
    exact_setrl_gradient,
    exact_standard_gradient,
    make_task,
    sample_batch,
    score_action_tuple,
)


class TestTabularPolicy:
    def test_probs_sum_to_one(self):
        policy = TabularPolicy(np.array([3.0, -1.0, 0.5]))
        probs = policy.probs()
        assert probs.sum() == pytest.approx(1.0)
        assert (probs > 0).all()

    def test_uniform_logits(self):
        policy = TabularPolicy(np.zeros(4))
        assert policy.probs() == pytest.approx(np.full(4, 0.25))
        assert policy.entropy() == pytest.approx(np.log(4))

    def test_extreme_logit_dominates(self):
        policy = TabularPolicy(np.array([50.0, 0.0, 0.0]))
        assert policy.probs()[0] == pytest.approx(1.0, abs=1e-12)

    def test_temperature_keeps_argmax(self):
        theta = np.array([0.3, 1.7, -0.2])
        cold = TabularPolicy(theta, temperature=1.0)
        warm = TabularPolicy(theta, temperature=2.0)
        assert np.argmax(cold.probs()) == np.argmax(warm.probs())
        # warmer means flatter
        assert warm.entropy() > cold.entropy()

    def test_logprob_grads_rows(self):
        policy = TabularPolicy(np.array([0.1, 0.2, 0.3]))
        grads = policy.logprob_grads([0, 2])
        probs = policy.probs()
        assert grads[0] == pytest.approx(
            (np.array([1.0, 0.0, 0.0]) - probs)
        )
        assert grads[1] == pytest.approx((np.array([0.0, 0.0, 1.0]) - probs))
        # each row sums to zero
        assert grads.sum(axis=1) == pytest.approx(np.zeros(2), abs=1e-12)

    def test_step_returns_new_policy(self):
        policy = TabularPolicy(np.zeros(3))
        moved = policy.step(np.array([1.0, 0.0, -1.0]), 0.5)
        assert moved is not policy
        assert moved.theta == pytest.approx([0.5, 0.0, -0.5])
        assert policy.theta == pytest.approx(np.zeros(3))

    def test_theta_is_read_only(self):
        policy = TabularPolicy(np.zeros(3))
        with pytest.raises(ValueError):
            policy.theta[0] = 1.0


class TestTaskBuilders:
    def test_polynomial_space(self):
        task = make_task("polynomial", {})
        assert task.num_actions == 5
        strings = [g.token_string for g in task.generations]
        assert "(1, 11)" in strings
        assert all(r == 1.0 for r in task.rewards)
        ids = [c.cluster_id for c in task.action_clusters]
        assert sorted(ids) == [1, 2, 3, 4, 5]

    def test_polynomial_distractors_are_wrong(self):
        task = make_task("polynomial", {"bound": 2, "distractors": 3})
        assert task.num_actions == 8
        assert sum(1 for r in task.rewards if r == 0.0) == 3
        # distractor answers must not collide with the correct pairs
        correct = {g.answer for g, r in zip(task.generations, task.rewards) if r == 1.0}
        wrong = {g.answer for g, r in zip(task.generations, task.rewards) if r == 0.0}
        assert not correct & wrong

    def test_multiplication_reference_decomposition(self):
        task = make_task("multiplication", {})
        strings = [g.token_string for g in task.generations]
        target = "(340+3)(70-3) = 340*70 - 340*3 + 3*70 - 3*3 = 22981"
        assert target in strings
        idx = strings.index(target)
        assert task.rewards[idx] == 1.0
        assert task.generations[idx].answer == "22981"

    def test_multiplication_slips_share_family(self):
        task = make_task("multiplication", {"a": 12, "b": 9, "max_delta": 1})
        # 2 deltas per factor, 2 variants: 8 actions in 4 sign families
        assert task.num_actions == 8
        assert sum(task.rewards) == 4.0
        families = {c.cluster_id for c in task.action_clusters}
        assert len(families) == 4
        for i in range(0, 8, 2):
            correct, slipped = task.action_clusters[i], task.action_clusters[i + 1]
            assert correct.cluster_id == slipped.cluster_id
            assert task.rewards[i] == 1.0 and task.rewards[i + 1] == 0.0

    def test_bandit_literal_tables(self):
        task = make_task(
            "multi_solution_bandit",
            {"rewards": (1.0, 0.5), "clusters": (4, 100)},
        )
        assert task.literal_cluster_ids
        assert task.rewards == (1.0, 0.5)
        assert [c.cluster_id for c in task.action_clusters] == [4, 100]
        assert [g.answer for g in task.generations] == ["arm_0", "arm_1"]

    def test_unknown_kind(self):
        with pytest.raises(InvalidParamsError):
            make_task("crosswords", {})

    @pytest.mark.parametrize(
        "kind,params",
        [
            ("polynomial", {"bound": -1}),
            ("polynomial", {"distractors": -2}),
            ("multiplication", {"max_delta": 0}),
            ("multiplication", {"a": 4, "b": 4, "max_delta": 5}),
            ("multi_solution_bandit", {"rewards": (1.0,)}),
            ("multi_solution_bandit", {"rewards": (1.0,), "clusters": (0,)}),
            ("multi_solution_bandit", {"rewards": (2.0,), "clusters": (1,)}),
        ],
    )
    def test_bad_params(self, kind, params):
        with pytest.raises(InvalidParamsError):
            make_task(kind, params)

    def test_batch_from_actions(self):
        task = make_task("polynomial", {})
        batch = task.batch_from_actions([4, 0])
        assert batch.size == 2
        assert batch.generations[0] == task.generations[4]
        assert batch.rewards == (task.rewards[4], task.rewards[0])


class TestSampling:
    def test_law_of_large_numbers(self):
        task = make_task(
            "multi_solution_bandit",
            {"rewards": (1.0, 0.0, 1.0, 0.0), "clusters": (1, 2, 3, 4)},
        )
        policy = TabularPolicy(np.zeros(4))
        rng = np.random.default_rng(2024)
        batch = sample_batch(policy, task, 4000, rng)
        counts = np.bincount(
            [g.action_index for g in batch.generations], minlength=4
        )
        freqs = counts / 4000
        assert freqs == pytest.approx(np.full(4, 0.25), abs=0.02)

    def test_peaked_policy_sticks_to_argmax(self):
        task = make_task("polynomial", {})
        policy = TabularPolicy(np.array([30.0, 0.0, 0.0, 0.0, 0.0]))
        batch = sample_batch(policy, task, 100, np.random.default_rng(0))
        assert all(g.action_index == 0 for g in batch.generations)

    def test_integer_seed_accepted(self):
        task = make_task("polynomial", {})
        policy = TabularPolicy(np.zeros(5))
        a = sample_batch(policy, task, 6, 42)
        b = sample_batch(policy, task, 6, 42)
        assert [g.action_index for g in a.generations] == [
            g.action_index for g in b.generations
        ]


class TestExactOracles:
    def uniform_bandit(self):
        return make_task(
            "multi_solution_bandit",
            {"rewards": (1.0, 0.0, 0.0), "clusters": (1, 2, 3)},
        )

    def test_constant_objective_normalizes(self):
        task = self.uniform_bandit()
        policy = TabularPolicy(np.array([0.4, -0.8, 0.1]))
        # all-ones rewards make pass@n and mean reward constant 1
        ones = make_task(
            "multi_solution_bandit",
            {"rewards": (1.0, 1.0, 1.0), "clusters": (1, 2, 3)},
        )
        assert exact_expected_objective(policy, ones, pass_at_n(2), 2) == pytest.approx(1.0)
        grad = exact_setrl_gradient(policy, ones, mean_reward(2), 2)
        assert grad == pytest.approx(np.zeros(3), abs=1e-12)

    def test_mean_reward_linearity(self):
        task = self.uniform_bandit()
        policy = TabularPolicy(np.array([1.0, 0.0, -1.0]))
        expected = float(policy.probs() @ task.rewards_array())
        assert exact_expected_objective(policy, task, mean_reward(3), 3) == pytest.approx(expected)
        assert exact_mean_reward(policy, task) == pytest.approx(expected)

    def test_pass_two_half_probability(self):
        task = make_task(
            "multi_solution_bandit", {"rewards": (1.0, 0.0), "clusters": (1, 2)}
        )
        policy = TabularPolicy(np.zeros(2))
        assert exact_expected_objective(policy, task, pass_at_n(2), 2) == pytest.approx(0.75)

    def test_uniform_gradient_hand_value(self):
        # d/d theta_0 of E[mean reward of a pair] at the uniform policy
        task = self.uniform_bandit()
        policy = TabularPolicy(np.zeros(3))
        grad = exact_setrl_gradient(policy, task, mean_reward(2), 2)
        assert grad == pytest.approx((2 / 9, -1 / 9, -1 / 9))

    def test_gradient_matches_standard_for_mean_reward(self):
        task = self.uniform_bandit()
        policy = TabularPolicy(np.array([0.7, -0.2, 0.4]))
        set_grad = exact_setrl_gradient(policy, task, mean_reward(3), 3)
        std_grad = exact_standard_gradient(policy, task)
        assert set_grad == pytest.approx(std_grad, abs=1e-12)

    def test_marginal_advantage_conditional_definition(self):
        task = self.uniform_bandit()
        policy = TabularPolicy(np.array([0.2, -0.1, 0.6]))
        objective = pass_at_n(2)
        base = exact_expected_objective(policy, task, objective, 2)
        probs = policy.probs()
        for action in range(3):
            conditional = sum(
                probs[z] * score_action_tuple(task, objective, (action, z))
                for z in range(3)
            )
            expected = conditional - base
            got = exact_marginal_advantage(policy, task, objective, 2, action)
            assert got == pytest.approx(expected, abs=1e-12)

    def test_marginals_average_to_zero(self):
        task = self.uniform_bandit()
        policy = TabularPolicy(np.array([0.3, 0.0, -0.3]))
        probs = policy.probs()
        total = sum(
            probs[a] * exact_marginal_advantage(policy, task, polychromic(2), 2, a)
            for a in range(3)
        )
        assert total == pytest.approx(0.0, abs=1e-12)

    def test_enumeration_guard(self):
        task = make_task(
            "multi_solution_bandit",
            {"rewards": tuple([1.0] * 40), "clusters": tuple(range(1, 41))},
        )
        policy = TabularPolicy(np.zeros(40))
        with pytest.raises(EnumerationTooLargeError):
            exact_expected_objective(policy, task, mean_reward(5), 5)

    def test_policy_task_size_mismatch(self):
        task = self.uniform_bandit()
        policy = TabularPolicy(np.zeros(4))
        with pytest.raises(DimensionMismatchError):
            exact_mean_reward(policy, task)


class TestTaskValidation:
    def test_rewards_must_be_unit_interval(self):
        with pytest.raises(InvalidParamsError):
            SyntheticTask(
                kind="multi_solution_bandit",
                prompt=make_task("polynomial", {}).prompt,
                generations=make_task("polynomial", {}).generations[:1],
                rewards=(1.5,),
                action_clusters=(ClusterAssignment(1),),
            )

    def test_action_indices_must_align(self):
        base = make_task("polynomial", {})
        with pytest.raises(InvalidParamsError):
            SyntheticTask(
                kind="polynomial",
                prompt=base.prompt,
                generations=(base.generations[1],),
                rewards=(1.0,),
                action_clusters=(ClusterAssignment(1),),
            )
