"""Strategy clustering of generations via pluggable judges.

The wire protocol for the LM judge: one prompt carrying a fixed instruction
block (a versioned text asset, with the response count substituted) plus the
task context and the numbered responses; the reply must be a JSON object
with exactly N keys "1".."N", each holding a chain_of_thought and a
cluster_id. Cluster 100 is the reserved degenerate bucket, which is why a
request may hold at most 99 responses.

Rule-based judges cover the synthetic tasks: exact-answer identity and the
task's own cluster table. A scripted mock judge serves tests.
"""

from __future__ import annotations

import json
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from typing import Protocol, Sequence

from .core import (
    DEGENERATE_CLUSTER_ID,
    ClusterAssignment,
    GenerationBatch,
    validate_batch,
)
from .errors import (
    InvalidParamsError,
    JudgeUnavailableError,
    LengthMismatchError,
    MalformedJsonError,
    MissingClusterIdError,
    TooManyResponsesError,
    WrongKeyCountError,
)

# All generations land in this single bucket when a remote judge stays
# unreachable: every set then has the minimum nonzero diversity, so a flaky
# judge can never inflate the polychromic score.
FALLBACK_CLUSTER_ID = 1

_ASSETS = resources.files(__package__).joinpath("assets")
JUDGE_INSTRUCTIONS_TEMPLATE = (
    _ASSETS.joinpath("judge_instructions.txt").read_bytes().decode("utf-8")
)
JUDGE_SUFFIX_TEMPLATE = (
    _ASSETS.joinpath("judge_suffix.txt").read_bytes().decode("utf-8")
)


@dataclass(frozen=True)
class JudgeRequest:
    """Context plus the N response renderings to cluster (N < 100)."""

    context: str
    responses: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "responses", tuple(self.responses))


@dataclass(frozen=True)
class ResponseLabel:
    chain_of_thought: str
    cluster_id: int


@dataclass(frozen=True)
class JudgeResult:
    """Parsed judge output: labels keyed "1".."N"."""

    labels: dict[str, ResponseLabel]

    def assignments(self) -> tuple[ClusterAssignment, ...]:
        ordered = sorted(self.labels, key=int)
        return tuple(ClusterAssignment(self.labels[k].cluster_id) for k in ordered)


def build_judge_prompt(request: JudgeRequest) -> str:
    """Render the full judge prompt for one request.

    Deterministic: same request, same bytes. The instruction block is used
    verbatim apart from the response-count substitution.
    """
    n = len(request.responses)
    if n < 1:
        raise InvalidParamsError("request holds no responses")
    if n >= DEGENERATE_CLUSTER_ID:
        raise TooManyResponsesError(
            f"{n} responses would collide with the degenerate bucket id"
        )
    instructions = JUDGE_INSTRUCTIONS_TEMPLATE.rstrip("\n").format(n_responses=n)
    numbered = "\n".join(
        f"{i}. {text}" for i, text in enumerate(request.responses, start=1)
    )
    suffix = f"**Context:**\n{request.context}\n\n**Responses:**\n{numbered}"
    return f"{instructions}\n\n{suffix}"


def _loads_lenient(raw: str) -> object:
    """json.loads with tolerance for code fences and surrounding prose."""
    text = raw.strip()
    fenced = re.match(r"^```(?:json)?\s*\n(.*)\n```\s*$", text, flags=re.S)
    if fenced:
        text = fenced.group(1).strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        start, end = text.find("{"), text.rfind("}")
        if start != -1 and end > start:
            try:
                return json.loads(text[start : end + 1])
            except json.JSONDecodeError:
                pass
    raise MalformedJsonError("judge reply is not parseable JSON")


def parse_judge_response(raw: str, n_responses: int) -> JudgeResult:
    """Validate and normalize one judge reply.

    Requires exactly the keys "1".."N". Cluster ids outside {1..N, 100} are
    remapped to unused in-range ids, preserving which responses share a
    bucket (the ids themselves carry no meaning beyond equality).
    """
    data = _loads_lenient(raw)
    if not isinstance(data, dict):
        raise MalformedJsonError("judge reply is not a JSON object")
    expected = {str(i) for i in range(1, n_responses + 1)}
    if set(data) != expected:
        raise WrongKeyCountError(
            f"expected keys 1..{n_responses}, got {sorted(data)[:12]}"
        )
    raw_ids: dict[str, int] = {}
    notes: dict[str, str] = {}
    for key in sorted(data, key=int):
        entry = data[key]
        if not isinstance(entry, dict):
            raise MalformedJsonError(f"entry {key} is not an object")
        if "cluster_id" not in entry:
            raise MissingClusterIdError(f"entry {key} lacks cluster_id")
        cid = entry["cluster_id"]
        if isinstance(cid, bool) or not isinstance(cid, int):
            raise MalformedJsonError(f"entry {key} cluster_id {cid!r} is not an integer")
        raw_ids[key] = cid
        note = entry.get("chain_of_thought", "")
        notes[key] = note if isinstance(note, str) else str(note)

    def in_range(cid: int) -> bool:
        return 1 <= cid <= n_responses or cid == DEGENERATE_CLUSTER_ID

    used = {cid for cid in raw_ids.values() if in_range(cid)}
    fresh = iter(i for i in range(1, n_responses + 1) if i not in used)
    remap: dict[int, int] = {}
    labels: dict[str, ResponseLabel] = {}
    for key in sorted(raw_ids, key=int):
        cid = raw_ids[key]
        if not in_range(cid):
            if cid not in remap:
                remap[cid] = next(fresh)
            cid = remap[cid]
        labels[key] = ResponseLabel(chain_of_thought=notes[key], cluster_id=cid)
    return JudgeResult(labels=labels)


class Judge(Protocol):
    def assign_clusters(self, batch: GenerationBatch) -> tuple[ClusterAssignment, ...]:
        ...


def _partition_by_key(keys: Sequence[object]) -> tuple[ClusterAssignment, ...]:
    """Assign ids 1.. in order of first appearance; DEGENERATE keys get 100."""
    ids: dict[object, int] = {}
    out = []
    for key in keys:
        if key == DEGENERATE_CLUSTER_ID:
            out.append(ClusterAssignment(DEGENERATE_CLUSTER_ID))
            continue
        if key not in ids:
            ids[key] = len(ids) + 1
        out.append(ClusterAssignment(ids[key]))
    return tuple(out)


class ExactAnswerJudge:
    """Clusters by canonical answer equality."""

    def assign_clusters(self, batch: GenerationBatch) -> tuple[ClusterAssignment, ...]:
        return _partition_by_key([g.answer for g in batch.generations])


class RuleJudge:
    """Applies a synthetic task's own clustering rule.

    Tasks with literal cluster tables (bandits) pass ids through verbatim;
    the others get canonical per-batch ids in order of first appearance.
    """

    def __init__(self, task):
        self._task = task

    def assign_clusters(self, batch: GenerationBatch) -> tuple[ClusterAssignment, ...]:
        table = self._task.action_clusters
        picked = [table[g.action_index] for g in batch.generations]
        if self._task.literal_cluster_ids:
            return tuple(picked)
        keys = [
            DEGENERATE_CLUSTER_ID if c.is_degenerate else c.cluster_id for c in picked
        ]
        return _partition_by_key(keys)


class MockJudge:
    """Replays scripted assignments verbatim, one batch per script entry."""

    def __init__(self, script: Sequence[Sequence[int]], cycle: bool = False):
        if not script:
            raise InvalidParamsError("mock judge needs a nonempty script")
        self._script = [tuple(int(c) for c in row) for row in script]
        self._cycle = cycle
        self._cursor = 0

    def assign_clusters(self, batch: GenerationBatch) -> tuple[ClusterAssignment, ...]:
        if self._cursor >= len(self._script):
            if not self._cycle:
                raise InvalidParamsError("mock judge script exhausted")
            self._cursor = 0
        row = self._script[self._cursor]
        self._cursor += 1
        if len(row) != batch.size:
            raise LengthMismatchError(
                f"scripted row of {len(row)} for batch of {batch.size}"
            )
        return tuple(ClusterAssignment(c) for c in row)


class RemoteJudge:
    """LM judge over a chat-completions style HTTP endpoint.

    Sends the full prompt as a single user message at temperature 0 and
    parses the JSON reply. Transient failures are retried; after
    ``max_attempts`` total attempts the judge reports itself unavailable.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        temperature: float = 0.0,
        timeout: float = 30.0,
        max_attempts: int = 3,
        retry_wait: float = 1.0,
        session=None,
    ):
        if max_attempts < 1:
            raise InvalidParamsError("max_attempts must be >= 1")
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.temperature = temperature
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.retry_wait = retry_wait
        if session is None:
            import requests

            session = requests.Session()
        self._session = session

    def _call_once(self, prompt: str, n_responses: int) -> tuple[ClusterAssignment, ...]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        }
        response = self._session.post(
            self.endpoint, json=payload, headers=headers, timeout=self.timeout
        )
        response.raise_for_status()
        content = response.json()["choices"][0]["message"]["content"]
        return parse_judge_response(content, n_responses).assignments()

    def assign_clusters(self, batch: GenerationBatch) -> tuple[ClusterAssignment, ...]:
        request = JudgeRequest(
            context=str(batch.prompt.payload if batch.prompt.payload is not None else batch.prompt.id),
            responses=tuple(g.token_string for g in batch.generations),
        )
        prompt = build_judge_prompt(request)
        last: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                return self._call_once(prompt, batch.size)
            except Exception as exc:  # noqa: BLE001 - any failure is retryable here
                last = exc
                if attempt + 1 < self.max_attempts and self.retry_wait > 0:
                    time.sleep(self.retry_wait)
        raise JudgeUnavailableError(f"judge unreachable after {self.max_attempts} attempts: {last}")


def cluster(
    provider: Judge,
    batch: GenerationBatch,
    on_failure: str = "fallback",
) -> tuple[ClusterAssignment, ...]:
    """Cluster one batch with the given provider.

    When a remote judge stays unavailable: ``on_failure="fallback"`` puts the
    whole batch in one shared non-degenerate cluster, ``"raise"`` propagates.
    """
    if on_failure not in ("fallback", "raise"):
        raise InvalidParamsError(f"unknown on_failure {on_failure!r}")
    validate_batch(batch)
    try:
        assignments = provider.assign_clusters(batch)
    except JudgeUnavailableError:
        if on_failure == "raise":
            raise
        assignments = tuple(
            ClusterAssignment(FALLBACK_CLUSTER_ID) for _ in range(batch.size)
        )
    if len(assignments) != batch.size:
        raise LengthMismatchError(
            f"judge returned {len(assignments)} assignments for batch of {batch.size}"
        )
    return tuple(assignments)


def cluster_many(
    provider: Judge,
    batches: Sequence[GenerationBatch],
    on_failure: str = "fallback",
    parallel: int = 4,
) -> list[tuple[ClusterAssignment, ...]]:
    """Cluster several batches, at most ``parallel`` in flight, in input order."""
    if parallel < 1:
        raise InvalidParamsError("parallel must be >= 1")
    with ThreadPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(lambda b: cluster(provider, b, on_failure), batches))
