"""DAG definitions, unrolling into linear pipelines, and deadline splitting."""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import ConfigError

RUNNING = "running"
COMPLETED = "completed"
FAILED = "failed"


@dataclass
class TaskDef:
    """One DAG vertex: base-resource duration and expected output size."""

    task_id: str
    base_time: float
    out_bytes: int

    def __post_init__(self):
        if self.base_time <= 0:
            raise ConfigError(f"task {self.task_id}: base_time must be positive")
        if self.out_bytes <= 0:
            raise ConfigError(f"task {self.task_id}: out_bytes must be positive")


@dataclass
class DagSpec:
    dag_id: str
    tasks: dict  # task_id -> TaskDef
    edges: list  # (upstream, downstream) pairs
    deadline: float
    filter: object = None  # FilterQuery; optional for unit scenarios

    def __post_init__(self):
        if self.deadline <= 0:
            raise ConfigError(f"dag {self.dag_id}: deadline must be positive")
        self._succ: dict[str, list] = {t: [] for t in self.tasks}
        indeg = {t: 0 for t in self.tasks}
        for a, b in self.edges:
            if a not in self.tasks or b not in self.tasks:
                raise ConfigError(f"dag {self.dag_id}: edge ({a}, {b}) references unknown task")
            self._succ[a].append(b)
            indeg[b] += 1
        for succs in self._succ.values():
            succs.sort()
        self._check_acyclic(indeg)
        roots = [t for t, d in indeg.items() if d == 0]
        if len(roots) != 1:
            raise ConfigError(f"dag {self.dag_id}: exactly one root required, found {sorted(roots)}")
        self.root = roots[0]

    def _check_acyclic(self, indeg):
        # Kahn's algorithm; anything left over sits on a cycle
        indeg = dict(indeg)
        frontier = [t for t, d in indeg.items() if d == 0]
        seen = 0
        while frontier:
            t = frontier.pop()
            seen += 1
            for s in self._succ[t]:
                indeg[s] -= 1
                if indeg[s] == 0:
                    frontier.append(s)
        if seen != len(self.tasks):
            raise ConfigError(f"dag {self.dag_id}: cycle detected")

    def successors(self, task_id: str) -> list:
        return self._succ[task_id]

    def critical_path_time(self) -> float:
        """Longest root-to-leaf chain duration on base (edge) resources."""
        memo: dict[str, float] = {}

        def longest(t):
            if t not in memo:
                succs = self._succ[t]
                tail = max((longest(s) for s in succs), default=0.0)
                memo[t] = self.tasks[t].base_time + tail
            return memo[t]

        return longest(self.root)


def unroll(dag: DagSpec) -> list:
    """One task chain per distinct root-to-leaf path.

    Tasks shared by several paths appear in each resulting chain; the
    duplicate execution is accepted by design.
    """
    chains = []
    stack = [dag.root]

    def walk(task_id):
        stack_copy_needed = dag.successors(task_id)
        if not stack_copy_needed:
            chains.append(list(stack))
            return
        for s in stack_copy_needed:
            stack.append(s)
            walk(s)
            stack.pop()

    walk(dag.root)
    return chains


def apportion(base_times, delta: float):
    """Split a pipeline deadline into per-task spans proportional to base time.

    Spans are returned as differences of cumulative fractions so that they
    telescope to exactly `delta`.
    """
    if delta <= 0:
        raise ValueError("deadline must be positive")
    total = sum(base_times)
    spans = []
    prev = 0.0
    acc = 0.0
    for theta in base_times:
        acc += theta
        cum = delta * (acc / total)
        spans.append(cum - prev)
        prev = cum
    return spans


class LateCompletion(Exception):
    """A task finished after its sub-deadline."""


@dataclass
class PipelineInstance:
    """A linear chain bound to one triggering micro-batch.

    `sub_deadlines` are absolute simulation times; the last one equals
    trigger_time + deadline exactly.
    """

    pipeline_id: str
    dag_id: str
    tasks: list  # task ids in execution order
    trigger_mb: str
    trigger_time: float
    sub_deadlines: list = field(default_factory=list)
    cursor: int = 0
    status: str = RUNNING
    cost_total: float = 0.0
    completion_time: float | None = None

    def init_deadlines(self, base_times, delta: float):
        spans = apportion(base_times, delta)
        acc = self.trigger_time
        self.sub_deadlines = []
        for s in spans:
            acc += s
            self.sub_deadlines.append(acc)
        # guard against float drift on the final absolute deadline
        self.sub_deadlines[-1] = self.trigger_time + delta

    @property
    def current_task(self) -> str:
        return self.tasks[self.cursor]

    @property
    def current_deadline(self) -> float:
        return self.sub_deadlines[self.cursor]

    def advance(self, completed_task: str, completion_time: float, output_mb):
        """Move the cursor after a completion; returns the next task id or
        None when the chain is done.  Late completions fail the pipeline."""
        if self.status != RUNNING:
            raise RuntimeError(f"pipeline {self.pipeline_id} is not running")
        if completed_task != self.current_task:
            raise RuntimeError(
                f"pipeline {self.pipeline_id}: completed {completed_task}, "
                f"expected {self.current_task}"
            )
        if completion_time > self.current_deadline:
            self.status = FAILED
            raise LateCompletion(completed_task)
        self.cursor += 1
        if self.cursor == len(self.tasks):
            self.status = COMPLETED
            self.completion_time = completion_time
            return None
        return self.tasks[self.cursor]

    def fail(self):
        self.status = FAILED
