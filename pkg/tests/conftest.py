import pytest

from setrl.core import ClusterAssignment, Generation, GenerationBatch, Prompt


def make_batch(rewards, clusters=None, prompt_id="p"):
    """Batch with one synthetic generation per reward; action i has answer str(i)."""
    gens = tuple(
        Generation(token_string=f"gen-{i}", answer=str(i), action_index=i)
        for i in range(len(rewards))
    )
    assignments = None
    if clusters is not None:
        assignments = tuple(ClusterAssignment(c) for c in clusters)
    return GenerationBatch(
        prompt=Prompt(id=prompt_id),
        generations=gens,
        rewards=tuple(float(r) for r in rewards),
        clusters=assignments,
    )


@pytest.fixture
def batch_factory():
    return make_batch
