"""Experiment runner and verification CLI.

``setrl run`` trains one algorithm on one synthetic task and writes a config
echo (JSON), a metrics table (CSV), the per-step record stream (JSONL), a
final policy snapshot and an evaluation summary. Identical config and seed
give byte-identical outputs. ``setrl verify`` runs the oracle-equivalence
suite and writes its report.

Config files may be TOML or JSON; flags override file values. The remote
judge API key is read from the SETRL_JUDGE_API_KEY environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import verification
from .clustering import ExactAnswerJudge, MockJudge, RemoteJudge, RuleJudge, cluster
from .core import HyperParams
from .errors import ConfigInvalidError, SetRLError
from .metrics import (
    EvalSample,
    branching_profile,
    cluster_diagnostics,
    dump_eval_corpus,
    majority_at_k,
    pass_at_k,
    sample_metrics_row,
    write_metrics_csv,
)
from .simulator import make_task, sample_batch
from .training import ALGORITHMS, ExperimentRecord, TrainConfig, run_training

API_KEY_ENV = "SETRL_JUDGE_API_KEY"

DEFAULT_CONFIG = {
    "task": {"kind": "polynomial", "params": {}},
    "algorithm": "pepo",
    "judge": {"kind": "rule"},
    "hyperparams": {},
    "steps": 50,
    "inner_epochs": 1,
    "objective": "polychromic",
    "eval": {"ks": [1, 2, 4, 8], "rollouts": 8},
    "out": "runs/latest",
}

JUDGE_KINDS = ("exact", "rule", "mock", "remote")


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved run description; serializes to the config echo."""

    task: dict
    algorithm: str
    judge: dict
    hyperparams: HyperParams
    steps: int
    inner_epochs: int
    objective: str
    eval_ks: tuple[int, ...]
    eval_rollouts: int
    out: str
    raw_hyperparams: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "algorithm": self.algorithm,
            "judge": self.judge,
            "hyperparams": {
                "rollouts": self.hyperparams.rollouts,
                "set_size": self.hyperparams.set_size,
                "num_sets": self.hyperparams.num_sets,
                "learning_rate": self.hyperparams.learning_rate,
                "clip_low": self.hyperparams.clip_low,
                "clip_high": self.hyperparams.clip_high,
                "temperature": self.hyperparams.temperature,
                "divrl_lambda": self.hyperparams.divrl_lambda,
                "seed": self.hyperparams.seed,
            },
            "steps": self.steps,
            "inner_epochs": self.inner_epochs,
            "objective": self.objective,
            "eval": {"ks": list(self.eval_ks), "rollouts": self.eval_rollouts},
            "out": self.out,
        }


def config_from_dict(data: dict) -> ExperimentConfig:
    """Validate a raw config mapping; raises CONFIG_INVALID on any problem."""
    try:
        task = dict(data.get("task") or {})
        if "kind" not in task:
            raise ConfigInvalidError("task.kind is required")
        task.setdefault("params", {})
        algorithm = data.get("algorithm", "pepo")
        if algorithm not in ALGORITHMS:
            raise ConfigInvalidError(f"unknown algorithm {algorithm!r}")
        judge = dict(data.get("judge") or {})
        judge.setdefault("kind", "rule")
        if judge["kind"] not in JUDGE_KINDS:
            raise ConfigInvalidError(f"unknown judge kind {judge['kind']!r}")
        if judge["kind"] == "remote":
            if not judge.get("endpoint") or not judge.get("model"):
                raise ConfigInvalidError("remote judge needs endpoint and model")
        if judge["kind"] == "mock" and not judge.get("script"):
            raise ConfigInvalidError("mock judge needs a script in the config file")
        hp_raw = dict(data.get("hyperparams") or {})
        try:
            hyperparams = HyperParams(**hp_raw)
        except TypeError as exc:
            raise ConfigInvalidError(f"bad hyperparams: {exc}") from exc
        steps = int(data.get("steps", 50))
        inner_epochs = int(data.get("inner_epochs", 1))
        if steps < 0 or inner_epochs < 1:
            raise ConfigInvalidError("steps must be >= 0 and inner_epochs >= 1")
        objective = data.get("objective", "polychromic")
        eval_spec = dict(data.get("eval") or {})
        eval_ks = tuple(int(k) for k in eval_spec.get("ks", [1, 2, 4, 8]))
        eval_rollouts = int(eval_spec.get("rollouts", max((8, *eval_ks))))
        if not eval_ks or any(k < 1 for k in eval_ks):
            raise ConfigInvalidError("eval ks must be positive")
        if eval_rollouts < max(eval_ks):
            raise ConfigInvalidError("eval rollouts must cover the largest k")
        out = str(data.get("out", "runs/latest"))
        # surface task construction errors now rather than mid-run
        make_task(task["kind"], task["params"])
        return ExperimentConfig(
            task=task,
            algorithm=algorithm,
            judge=judge,
            hyperparams=hyperparams,
            steps=steps,
            inner_epochs=inner_epochs,
            objective=objective,
            eval_ks=eval_ks,
            eval_rollouts=eval_rollouts,
            out=out,
            raw_hyperparams=hp_raw,
        )
    except ConfigInvalidError:
        raise
    except SetRLError as exc:
        raise ConfigInvalidError(f"{exc.code}: {exc}") from exc
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigInvalidError(str(exc)) from exc


def _load_config_file(path: str) -> dict:
    text = Path(path).read_bytes()
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text.decode("utf-8"))
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalidError(f"config file {path} is not valid JSON: {exc}") from exc


def build_judge(config: ExperimentConfig, task):
    kind = config.judge["kind"]
    if kind == "exact":
        return ExactAnswerJudge()
    if kind == "rule":
        return RuleJudge(task)
    if kind == "mock":
        script = config.judge.get("script")
        if not script:
            raise ConfigInvalidError("mock judge needs a script in the config file")
        return MockJudge(script, cycle=bool(config.judge.get("cycle", True)))
    return RemoteJudge(
        endpoint=config.judge["endpoint"],
        model=config.judge["model"],
        api_key=os.environ.get(API_KEY_ENV),
        temperature=float(config.judge.get("judge_temperature", 0.0)),
        timeout=float(config.judge.get("timeout", 30.0)),
        max_attempts=int(config.judge.get("max_attempts", 3)),
        retry_wait=float(config.judge.get("retry_wait", 1.0)),
    )


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _evaluate_final_policy(config: ExperimentConfig, state, task, judge) -> tuple[dict, EvalSample]:
    rng = np.random.default_rng([config.hyperparams.seed, 0xE7A1])
    batch = sample_batch(state.policy, task, config.eval_rollouts, rng)
    assignments = cluster(judge, batch, on_failure=config.judge.get("on_failure", "fallback"))
    batch = batch.with_clusters(assignments)
    n_correct = sum(1 for r in batch.rewards if r == 1.0)
    correct_answers = {g.answer for g, r in zip(batch.generations, batch.rewards) if r == 1.0}
    answers = [g.answer for g in batch.generations]
    majority = {}
    for k in config.eval_ks:
        vote = majority_at_k(answers[:k], answers[0])
        majority[str(k)] = {
            "winner": vote.winner,
            "vote_share": vote.vote_share,
            "winner_is_correct": vote.winner in correct_answers,
        }
    distinct_correct, distinct_incorrect = cluster_diagnostics(batch)
    summary = {
        "rollouts": config.eval_rollouts,
        "n_correct": n_correct,
        "pass_at_k": {str(k): pass_at_k(config.eval_rollouts, n_correct, k) for k in config.eval_ks},
        "majority_at_k": majority,
        "distinct_correct_clusters": distinct_correct,
        "distinct_incorrect_clusters": distinct_incorrect,
        "branching_profile": list(branching_profile([g.token_string for g in batch.generations]).counts),
    }
    sample = EvalSample(
        prompt_id=task.prompt.id,
        generations=tuple(g.token_string for g in batch.generations),
        rewards=batch.rewards,
        answers=tuple(answers),
    )
    return summary, sample


def run_experiment(config: ExperimentConfig) -> Path:
    """Train, evaluate and persist one experiment; returns the output dir."""
    task = make_task(config.task["kind"], config.task["params"])
    judge = build_judge(config, task)
    train_config = TrainConfig(
        task=task,
        judge=judge,
        algorithm=config.algorithm,
        params=config.hyperparams,
        steps=config.steps,
        inner_epochs=config.inner_epochs,
        objective_kind=config.objective,
    )
    state, records = run_training(train_config)

    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(config.to_dict(), out / "config.json")

    with open(out / "metrics.csv", "w", encoding="utf-8", newline="") as handle:
        handle.write(",".join(ExperimentRecord.FIELDS) + "\n")
        for record in records:
            row = record.to_dict()
            handle.write(",".join(str(row[name]) for name in ExperimentRecord.FIELDS) + "\n")
    with open(out / "metrics.jsonl", "w", encoding="utf-8", newline="") as handle:
        for record in records:
            handle.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")

    _dump_json(
        {"theta": state.policy.theta.tolist(), "temperature": state.policy.temperature},
        out / "policy.json",
    )

    summary, sample = _evaluate_final_policy(config, state, task, judge)
    _dump_json(summary, out / "eval.json")
    dump_eval_corpus([sample], out / "eval_corpus.jsonl")
    write_metrics_csv([sample_metrics_row(sample, config.eval_ks)], out / "eval_metrics.csv")
    return out


def run_verification_suite(fast: bool = False, out: str | None = None) -> bool:
    """Run the oracle-equivalence checks; prints one line per check."""
    results = verification.run_all(fast=fast)
    for result in results:
        print(result.line())
    if out:
        _dump_json(verification.report_dict(results), Path(out))
    return all(r.passed for r in results)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="setrl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train one algorithm on one synthetic task")
    run.add_argument("--config", help="TOML or JSON config file")
    run.add_argument("--task", choices=("polynomial", "multiplication", "multi_solution_bandit"))
    run.add_argument("--algo", choices=ALGORITHMS)
    run.add_argument("--rollouts", type=int)
    run.add_argument("--set-size", type=int)
    run.add_argument("--num-sets", help="positive integer or 'all'")
    run.add_argument("--steps", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--lr", type=float)
    run.add_argument("--lambda", dest="divrl_lambda", type=float)
    run.add_argument("--judge", choices=JUDGE_KINDS)
    run.add_argument("--judge-endpoint")
    run.add_argument("--judge-model")
    run.add_argument("--eval-k", help="comma-separated k values for pass@k")
    run.add_argument("--eval-rollouts", type=int)
    run.add_argument("--out")

    verify = sub.add_parser("verify", help="run the oracle-equivalence suite")
    verify.add_argument("--fast", action="store_true", help="fewer Monte Carlo draws")
    verify.add_argument("--out", help="write the JSON report here")
    return parser


def _merge_flags(base: dict, args: argparse.Namespace) -> dict:
    data = json.loads(json.dumps(base))  # deep copy, JSON-shaped by construction
    if args.task:
        data["task"] = {"kind": args.task, "params": {}}
    if args.algo:
        data["algorithm"] = args.algo
    hp = data.setdefault("hyperparams", {})
    if args.rollouts is not None:
        hp["rollouts"] = args.rollouts
    if args.set_size is not None:
        hp["set_size"] = args.set_size
    if args.num_sets is not None:
        hp["num_sets"] = args.num_sets if args.num_sets == "all" else int(args.num_sets)
    if args.seed is not None:
        hp["seed"] = args.seed
    if args.lr is not None:
        hp["learning_rate"] = args.lr
    if args.divrl_lambda is not None:
        hp["divrl_lambda"] = args.divrl_lambda
    if args.steps is not None:
        data["steps"] = args.steps
    if args.judge:
        judge = data.setdefault("judge", {})
        judge["kind"] = args.judge
    if args.judge_endpoint:
        data.setdefault("judge", {})["endpoint"] = args.judge_endpoint
    if args.judge_model:
        data.setdefault("judge", {})["model"] = args.judge_model
    if args.eval_k:
        data.setdefault("eval", {})["ks"] = [int(k) for k in args.eval_k.split(",")]
    if args.eval_rollouts is not None:
        data.setdefault("eval", {})["rollouts"] = args.eval_rollouts
    if args.out:
        data["out"] = args.out
    return data


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            ok = run_verification_suite(fast=args.fast, out=args.out)
            return 0 if ok else 1
        base = dict(DEFAULT_CONFIG)
        if args.config:
            base = _load_config_file(args.config)
        config = config_from_dict(_merge_flags(base, args))
        out = run_experiment(config)
        print(f"run written to {out}")
        return 0
    except SetRLError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "IO_ERROR", "message": str(exc)}), file=sys.stderr)
        return 1
    except ValueError as exc:
        print(json.dumps({"error": "CONFIG_INVALID", "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
