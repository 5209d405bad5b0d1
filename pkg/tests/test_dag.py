import random

import pytest

from cofeesim.dag import (
    COMPLETED,
    FAILED,
    DagSpec,
    LateCompletion,
    PipelineInstance,
    TaskDef,
    apportion,
    unroll,
)
from cofeesim.model import ConfigError


def make_dag(edges, thetas=None, deadline=100.0, dag_id="d"):
    names = sorted({t for e in edges for t in e}) if edges else ["A"]
    thetas = thetas or {}
    tasks = {n: TaskDef(n, thetas.get(n, 10.0), 1000) for n in names}
    return DagSpec(dag_id, tasks, edges, deadline)


def test_unroll_diamond_duplicates_shared_tail():
    dag = make_dag([("A", "B"), ("B", "C"), ("B", "D"), ("C", "E"), ("D", "E")])
    chains = unroll(dag)
    assert chains == [["A", "B", "C", "E"], ["A", "B", "D", "E"]]
    # E appears once per chain: duplicate execution is intended
    assert sum(c.count("E") for c in chains) == 2


def test_unroll_linear_chain_is_single_pipeline():
    dag = make_dag([("A", "B"), ("B", "C")])
    assert unroll(dag) == [["A", "B", "C"]]


def test_cycle_rejected():
    with pytest.raises(ConfigError):
        make_dag([("A", "B"), ("B", "C"), ("C", "A")])


def test_multiple_roots_rejected():
    with pytest.raises(ConfigError):
        make_dag([("A", "C"), ("B", "C")])


def count_paths_oracle(dag):
    """Independent root-to-leaf path counter via topological DP."""
    order = []
    indeg = {t: 0 for t in dag.tasks}
    for t in dag.tasks:
        for s in dag.successors(t):
            indeg[s] += 1
    frontier = [t for t, d in indeg.items() if d == 0]
    while frontier:
        t = frontier.pop()
        order.append(t)
        for s in dag.successors(t):
            indeg[s] -= 1
            if indeg[s] == 0:
                frontier.append(s)
    paths = {t: 0 for t in dag.tasks}
    paths[dag.root] = 1
    total = 0
    for t in order:
        succs = dag.successors(t)
        if not succs:
            total += paths[t]
        for s in succs:
            paths[s] += paths[t]
    return total


def random_single_root_dag(rng, n):
    """Random DAG on a topological ordering with node 0 as the only root."""
    edges = []
    for j in range(1, n):
        parents = rng.sample(range(j), k=min(j, rng.randint(1, 2)))
        for p in parents:
            edges.append((f"t{p}", f"t{j}"))
    return make_dag(sorted(set(edges)))


def test_unroll_chain_count_matches_path_enumeration():
    rng = random.Random(7)
    for _ in range(60):
        dag = random_single_root_dag(rng, rng.randint(2, 12))
        chains = unroll(dag)
        assert len(chains) == count_paths_oracle(dag)
        for chain in chains:
            assert chain[0] == dag.root
            assert not dag.successors(chain[-1])
            for a, b in zip(chain, chain[1:]):
                assert b in dag.successors(a)


def test_apportion_proportional_split():
    assert apportion([10, 30, 60], 110.0) == pytest.approx([11.0, 33.0, 66.0], rel=1e-6)


def test_apportion_single_task_gets_full_deadline():
    assert apportion([42.0], 17.0) == pytest.approx([17.0])


def test_apportion_equal_tasks_split_evenly():
    spans = apportion([5.0] * 4, 100.0)
    assert spans == pytest.approx([25.0] * 4)


def test_apportion_sums_to_deadline_exactly():
    rng = random.Random(3)
    for _ in range(50):
        thetas = [rng.uniform(0.1, 80.0) for _ in range(rng.randint(1, 9))]
        delta = rng.uniform(1.0, 500.0)
        spans = apportion(thetas, delta)
        assert sum(spans) == pytest.approx(delta, rel=1e-12)


def pipeline(tasks=("A", "B"), thetas=(10.0, 10.0), trigger=100.0, delta=50.0):
    p = PipelineInstance("p1", "d", list(tasks), "mb1", trigger)
    p.init_deadlines(list(thetas), delta)
    return p


def test_pipeline_final_subdeadline_is_trigger_plus_delta():
    rng = random.Random(11)
    for _ in range(30):
        k = rng.randint(1, 7)
        trigger = rng.uniform(0, 1e4)
        delta = rng.uniform(10, 400)
        p = pipeline(
            tasks=[f"t{i}" for i in range(k)],
            thetas=[rng.uniform(1, 60) for _ in range(k)],
            trigger=trigger,
            delta=delta,
        )
        assert p.sub_deadlines[-1] == trigger + delta  # exact, not approximate
        spans = [b - a for a, b in zip([trigger] + p.sub_deadlines, p.sub_deadlines)]
        assert sum(spans) == pytest.approx(delta, rel=1e-12)
        assert all(s > 0 for s in spans)


def test_advance_returns_next_task_then_completes():
    p = pipeline()
    nxt = p.advance("A", p.sub_deadlines[0] - 1.0, "mb-out")
    assert nxt == "B"
    assert p.status == "running"
    assert p.advance("B", p.sub_deadlines[1], "mb-out2") is None
    assert p.status == COMPLETED


def test_single_task_pipeline_completes_immediately():
    p = pipeline(tasks=("A",), thetas=(10.0,))
    assert p.advance("A", p.sub_deadlines[0] - 0.5, "out") is None
    assert p.status == COMPLETED


def test_late_completion_fails_pipeline():
    p = pipeline()
    with pytest.raises(LateCompletion):
        p.advance("A", p.sub_deadlines[0] + 0.001, "out")
    assert p.status == FAILED
