"""Set-level reinforcement learning toolkit.

Trains policies against objectives defined on sets of generations rather
than on single samples: subset enumeration and sampling, unbiased set-level
gradient estimation, diversity-aware objectives, cluster judges, a tabular
simulator with exact oracles, and an oracle-equivalence verification suite.
"""

from .clustering import (
    ExactAnswerJudge,
    Judge,
    JudgeRequest,
    JudgeResult,
    MockJudge,
    RemoteJudge,
    ResponseLabel,
    RuleJudge,
    build_judge_prompt,
    cluster,
    cluster_many,
    parse_judge_response,
)
from .core import (
    DEGENERATE_CLUSTER_ID,
    ClusterAssignment,
    Generation,
    GenerationBatch,
    HyperParams,
    Prompt,
    validate_batch,
)
from .errors import SetRLError
from .metrics import (
    BranchProfile,
    EvalSample,
    MajorityVote,
    branching_profile,
    cluster_diagnostics,
    load_eval_corpus,
    dump_eval_corpus,
    majority_at_k,
    pass_at_k,
    sample_metrics_row,
    write_metrics_csv,
)
from .objectives import (
    SetObjective,
    analytic_passn_marginals,
    diversity,
    divrl_bonus,
    mean_reward,
    mean_reward_score,
    objective_from_kind,
    pass_at_n,
    pass_at_n_score,
    polychromic,
    polychromic_score,
)
from .sets import (
    MarginalAdvantages,
    SubsetCollection,
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
    exact_expected_objective,
    exact_marginal_advantage,
    exact_mean_reward,
    exact_setrl_gradient,
    exact_standard_gradient,
    make_task,
    sample_batch,
    score_action_tuple,
)
from .training import (
    ALGORITHMS,
    AdvantageVector,
    ExperimentRecord,
    TrainConfig,
    TrainState,
    clipped_update,
    compute_advantages,
    divrl_advantages,
    grpo_advantages,
    init_train_state,
    pepo_advantages,
    run_training,
    train,
    verify_logit_shift,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "AdvantageVector",
    "BranchProfile",
    "ClusterAssignment",
    "DEGENERATE_CLUSTER_ID",
    "EvalSample",
    "ExactAnswerJudge",
    "ExperimentRecord",
    "Generation",
    "GenerationBatch",
    "HyperParams",
    "Judge",
    "JudgeRequest",
    "JudgeResult",
    "MajorityVote",
    "MarginalAdvantages",
    "MockJudge",
    "Prompt",
    "RemoteJudge",
    "ResponseLabel",
    "RuleJudge",
    "SetObjective",
    "SetRLError",
    "SubsetCollection",
    "SyntheticTask",
    "TabularPolicy",
    "TrainConfig",
    "TrainState",
    "analytic_passn_marginals",
    "branching_profile",
    "build_judge_prompt",
    "cluster",
    "cluster_diagnostics",
    "cluster_many",
    "clipped_update",
    "compute_advantages",
    "diversity",
    "divrl_advantages",
    "divrl_bonus",
    "dump_eval_corpus",
    "enumerate_subsets",
    "estimate_gradient",
    "exact_expected_objective",
    "exact_marginal_advantage",
    "exact_mean_reward",
    "exact_setrl_gradient",
    "exact_standard_gradient",
    "grpo_advantages",
    "init_train_state",
    "load_eval_corpus",
    "majority_at_k",
    "make_task",
    "marginal_advantages",
    "mean_reward",
    "mean_reward_score",
    "objective_from_kind",
    "parse_judge_response",
    "pass_at_k",
    "pass_at_n",
    "pass_at_n_score",
    "pepo_advantages",
    "polychromic",
    "polychromic_score",
    "run_training",
    "sample_batch",
    "sample_metrics_row",
    "sample_subsets",
    "scaling_factor",
    "score_action_tuple",
    "score_sets",
    "train",
    "validate_batch",
    "verify_logit_shift",
    "write_metrics_csv",
]
