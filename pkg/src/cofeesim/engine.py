"""Seeded deterministic discrete-event core.

One SimRun owns the clock, the event heap, micro-batch generation, edge
failure injection and the generic pipeline bookkeeping; the scheduling
policy object decides placements and drives the protocol-specific events.

Determinism contract: identical (topology, dags, workload, policy, seed)
yields an identical event sequence, trace and metrics report.  Every random
draw comes from named substreams derived from the run seed, and event ties
are broken by insertion sequence.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field

from .dag import COMPLETED, FAILED, LateCompletion, PipelineInstance, unroll
from .metrics import AuditError, MetricsReport, audit_report
from .model import CLOUD, EDGE, FOG, ConfigError, MicroBatchMeta
from .query import QueryRegistry

# event kinds (trace vocabulary)
MB_GENERATED = "MicroBatchGenerated"
QUERY_MATCHED = "QueryMatched"
TRIGGER_DAG = "TriggerDag"
INQUIRY_DELIVERED = "InquiryDelivered"
BID_DELIVERED = "BidDelivered"
SELECTION_TIMEOUT = "SelectionTimeout"
ACCEPT_DELIVERED = "AcceptDelivered"
REJECT_DELIVERED = "RejectDelivered"
TRANSFER_COMPLETE = "TransferComplete"
TASK_STARTED = "TaskStarted"
TASK_COMPLETED = "TaskCompleted"
EDGE_FAILED = "EdgeFailed"
SLOT_TIMER = "SlotTimerFired"
FREE_SLOT_REPORT = "FreeSlotReport"
PIPELINE_DONE = "PipelineDone"

_MAX_EVENTS = 50_000_000


def substream(seed: int, name: str) -> random.Random:
    """Independent child RNG; stable across platforms and processes."""
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


@dataclass
class WorkloadConfig:
    rate_per_min: float
    size_min_bytes: int = 500_000
    size_max_bytes: int = 1_500_000
    duration: float = 1200.0
    edge_mtbf: float | None = None  # seconds; None means reliable edges

    def __post_init__(self):
        if self.rate_per_min < 0:
            raise ConfigError("trigger rate must be >= 0")
        if self.size_min_bytes > self.size_max_bytes or self.size_min_bytes <= 0:
            raise ConfigError("bad micro-batch size range")
        if self.duration <= 0:
            raise ConfigError("run duration must be positive")
        if self.edge_mtbf is not None and self.edge_mtbf <= 0:
            raise ConfigError("edge MTBF must be positive")


def inject_failures(edges, mtbf: float | None, duration: float, rng: random.Random) -> dict:
    """At most one permanent failure time per edge, uniform over the run,
    calibrated so the expected count is len(edges) * duration / mtbf."""
    if mtbf is None:
        return {}
    p = min(1.0, duration / mtbf)
    schedule = {}
    for edge in sorted(edges, key=lambda e: e.id):
        if rng.random() < p:
            schedule[edge.id] = rng.uniform(0.0, duration)
    return schedule


@dataclass
class TaskRun:
    """One task instance of one pipeline, from dispatch to terminal state."""

    key: str
    pipeline: PipelineInstance
    index: int
    task_id: str
    base_time: float
    out_bytes: int
    input_mb: MicroBatchMeta
    sub_deadline: float
    # set while executing
    worker: str | None = None
    accept_time: float | None = None
    start_time: float | None = None
    expected_completion: float | None = None
    edge_failed: bool = False
    backup_rid: int | None = None
    fog_id: str | None = None
    cache_ready: float | None = None
    outcome: str | None = None  # edge|fog|cloud|failed
    costs: dict = field(default_factory=dict)


class SimRun:
    def __init__(self, topology, dags, workload: WorkloadConfig, policy,
                 master_cfg, seed: int, keep_trace: bool = False):
        # private copy: the run flips edge liveness, callers keep theirs intact
        self.topology = topology.validate().clone()
        self.dags = {d.dag_id: d for d in dags}
        self.workload = workload
        self.policy = policy
        self.master_cfg = master_cfg
        self.seed = seed
        self.keep_trace = keep_trace
        self.trace: list = []

        self.now = 0.0
        self._heap: list = []
        self._seq = 0
        self._inquiry_seq = 0
        self._mb_seq = 0
        self._pipe_seq = 0

        net = self.topology.network
        self.lat_fog_master = net.tier_latency(FOG, CLOUD)
        self.lat_cloud_master = net.tier_latency(CLOUD, CLOUD)
        self.lat_edge_fog = net.tier_latency(EDGE, FOG)
        if master_cfg is not None and master_cfg.inquiry_timeout < 2 * self.lat_fog_master:
            raise ConfigError(
                "inquiry timeout must cover a bid round trip "
                f"({master_cfg.inquiry_timeout} < 2 x {self.lat_fog_master})"
            )

        self.registry = QueryRegistry()
        self.chains = {}
        for dag in dags:
            self.chains[dag.dag_id] = unroll(dag)
            if dag.filter is not None:
                self.registry.register(dag.filter)

        self.mbs: dict[str, MicroBatchMeta] = {}
        self.pipelines: list[PipelineInstance] = []
        self.taskruns: list[TaskRun] = []
        self.active_pipelines = 0

        self.report = MetricsReport(policy=policy.name, seed=seed)
        self._per_dag_latency: dict[str, list] = {}
        self._edge_coords = {e.id: (0.01 * i, 0.01 * i)
                             for i, e in enumerate(sorted(self.topology.edges, key=lambda r: r.id))}

    # -- event plumbing --------------------------------------------------------

    def schedule(self, at: float, etype: str | None, handler, payload: dict | None = None):
        if at < self.now - 1e-9:
            raise RuntimeError(f"event {etype} scheduled in the past ({at} < {self.now})")
        heapq.heappush(self._heap, (at, self._seq, etype, handler, payload or {}))
        self._seq += 1

    def _emit(self, etype: str, payload: dict):
        if self.keep_trace and etype is not None:
            entry = {"t": self.now, "event": etype}
            for k in ("mb", "task", "dag", "worker", "edge", "fog", "pipeline", "cost", "status"):
                if k in payload and payload[k] is not None:
                    entry[k] = payload[k]
            self.trace.append(entry)

    def run(self) -> MetricsReport:
        self._generate_workload()
        self._schedule_failures()
        self.policy.attach(self)
        self.policy.on_run_start()
        processed = 0
        while self._heap:
            at, _, etype, handler, payload = heapq.heappop(self._heap)
            self.now = at
            self._emit(etype, payload)
            handler(payload)
            processed += 1
            if processed > _MAX_EVENTS:
                raise RuntimeError("event budget exceeded; run is not quiescing")
        return self._finalize()

    # -- workload and failures ---------------------------------------------------

    def _generate_workload(self):
        rng = substream(self.seed, "workload")
        edges = sorted(self.topology.edges, key=lambda e: e.id)
        dag_ids = sorted(self.dags)
        if not edges or not dag_ids or self.workload.rate_per_min <= 0:
            return
        rate_per_sec = self.workload.rate_per_min / 60.0
        t = 0.0
        while True:
            t += rng.expovariate(rate_per_sec)
            if t >= self.workload.duration:
                break
            edge = edges[rng.randrange(len(edges))]
            dag_id = dag_ids[rng.randrange(len(dag_ids))]
            size = rng.randint(self.workload.size_min_bytes, self.workload.size_max_bytes)
            self.schedule(t, MB_GENERATED, self._on_mb_generated,
                          {"edge": edge.id, "dag": dag_id, "size": size})

    def _schedule_failures(self):
        rng = substream(self.seed, "failures")
        self.failure_schedule = inject_failures(
            self.topology.edges, self.workload.edge_mtbf, self.workload.duration, rng)
        for edge_id, at in sorted(self.failure_schedule.items()):
            self.schedule(at, EDGE_FAILED, self._on_edge_failed, {"edge": edge_id})

    def _on_mb_generated(self, p):
        edge = self.topology.resources[p["edge"]]
        if not edge.alive:
            return  # dead sensors stop producing
        self.report.mb_generated += 1
        self._mb_seq += 1
        lat, lon = self._edge_coords[edge.id]
        mb = MicroBatchMeta(
            id=f"mb{self._mb_seq}",
            sid=f"s-{edge.id}",
            t_begin=max(0.0, self.now - 60.0),
            t_end=self.now,
            lat=lat,
            lon=lon,
            kv=frozenset({("app", p["dag"])}),
            size_bytes=p["size"],
            location=edge.id,
        )
        self.mbs[mb.id] = mb
        # metadata event reaches the parent fog's matching engine
        self.schedule(self.now + self.lat_edge_fog, QUERY_MATCHED,
                      self._on_query_matched, {"mb": mb.id, "fog": edge.partition})

    def _on_query_matched(self, p):
        mb = self.mbs[p["mb"]]
        for dag_id in sorted(self.registry.match(mb)):
            self.schedule(self.now + self.lat_fog_master, TRIGGER_DAG,
                          self._on_trigger, {"mb": mb.id, "dag": dag_id})

    def _on_trigger(self, p):
        mb = self.mbs[p["mb"]]
        source = self.topology.resources[mb.location]
        if not source.alive:
            # the micro-batch died with its edge before scheduling began
            self.report.mb_untriggered += 1
            return
        dag = self.dags[p["dag"]]
        for chain in self.chains[dag.dag_id]:
            self._pipe_seq += 1
            pipe = PipelineInstance(
                pipeline_id=f"p{self._pipe_seq}",
                dag_id=dag.dag_id,
                tasks=list(chain),
                trigger_mb=mb.id,
                trigger_time=self.now,
            )
            pipe.init_deadlines([dag.tasks[t].base_time for t in chain], dag.deadline)
            self.pipelines.append(pipe)
            self.report.pipelines_triggered += 1
            self.active_pipelines += 1
            tr = self._make_taskrun(pipe, 0, mb)
            self.policy.on_task_ready(tr)

    def _on_edge_failed(self, p):
        edge = self.topology.resources[p["edge"]]
        if not edge.alive:
            return
        edge.alive = False
        self.report.edge_failures += 1
        self.policy.on_edge_failure(edge)

    # -- pipeline/task bookkeeping --------------------------------------------------

    def _make_taskrun(self, pipe: PipelineInstance, index: int, input_mb) -> TaskRun:
        dag = self.dags[pipe.dag_id]
        task_id = pipe.tasks[index]
        tdef = dag.tasks[task_id]
        tr = TaskRun(
            key=f"{pipe.pipeline_id}#{index}",
            pipeline=pipe,
            index=index,
            task_id=task_id,
            base_time=tdef.base_time,
            out_bytes=tdef.out_bytes,
            input_mb=input_mb,
            sub_deadline=pipe.sub_deadlines[index],
        )
        self.taskruns.append(tr)
        self.report.tasks_triggered += 1
        return tr

    def next_inquiry_id(self) -> int:
        self._inquiry_seq += 1
        return self._inquiry_seq

    def charge(self, tr: TaskRun, component: str, amount: float):
        if amount:
            tr.costs[component] = tr.costs.get(component, 0.0) + amount
            tr.pipeline.cost_total += amount

    def count_scheduled(self, at: float):
        minute = int(at // 60.0)
        buckets = self.report.tasks_per_minute
        while len(buckets) <= minute:
            buckets.append(0)
        buckets[minute] += 1

    def make_output(self, tr: TaskRun, worker) -> MicroBatchMeta:
        self._mb_seq += 1
        src = tr.input_mb
        mb = MicroBatchMeta(
            id=f"mb{self._mb_seq}",
            sid=src.sid,
            t_begin=src.t_begin,
            t_end=src.t_end,
            lat=src.lat,
            lon=src.lon,
            kv=src.kv,
            size_bytes=tr.out_bytes,
            location=worker.id,
        )
        self.mbs[mb.id] = mb
        return mb

    def complete_task(self, tr: TaskRun, completion_time: float, worker):
        """Record a successful execution and hand control back to the policy."""
        tr.outcome = worker.tier
        if worker.tier == EDGE:
            self.report.tasks_completed_edge += 1
        elif worker.tier == FOG:
            self.report.tasks_completed_fog += 1
        else:
            self.report.tasks_completed_cloud += 1
        output = self.make_output(tr, worker)
        self.policy.on_task_complete(tr, completion_time, output)

    def advance_pipeline(self, tr: TaskRun, completion_time: float, output_mb):
        """Move a pipeline past a completed task; returns the next TaskRun or
        None.  A completion past the sub-deadline fails the pipeline."""
        pipe = tr.pipeline
        try:
            nxt = pipe.advance(tr.task_id, completion_time, output_mb)
        except LateCompletion:
            self._pipeline_done(pipe)
            return None
        if nxt is None:
            self._per_dag_latency.setdefault(pipe.dag_id, []).append(
                pipe.completion_time - pipe.trigger_time)
            self._pipeline_done(pipe)
            return None
        return self._make_taskrun(pipe, pipe.cursor, output_mb)

    def fail_task(self, tr: TaskRun, reason: str):
        tr.outcome = "failed"
        self.report.tasks_failed += 1
        pipe = tr.pipeline
        if pipe.status == FAILED:
            raise RuntimeError(f"pipeline {pipe.pipeline_id} failed twice")
        pipe.fail()
        self._pipeline_done(pipe, reason=reason)

    def _pipeline_done(self, pipe: PipelineInstance, reason: str | None = None):
        self.active_pipelines -= 1
        if pipe.status == COMPLETED:
            self.report.pipelines_completed += 1
            status = COMPLETED
        else:
            self.report.pipelines_failed += 1
            status = FAILED
        self.schedule(self.now, PIPELINE_DONE, lambda p: None,
                      {"pipeline": pipe.pipeline_id, "dag": pipe.dag_id, "status": status})

    # -- finish -----------------------------------------------------------------

    def _finalize(self) -> MetricsReport:
        rep = self.report
        total = 0.0
        wasted = 0.0
        for pipe in self.pipelines:
            total += pipe.cost_total
        for tr in self.taskruns:
            if tr.pipeline.status == FAILED:
                wasted += sum(tr.costs.values())
            else:
                wasted += tr.costs.get("attempt_exec", 0.0)
        rep.total_cost = total
        rep.wasted_cost = wasted
        rep.successful_cost = total - wasted
        rep.per_dag_latency = {
            dag_id: sum(vals) / len(vals)
            for dag_id, vals in sorted(self._per_dag_latency.items())
        }
        pad = int(self.workload.duration // 60.0)
        while len(rep.tasks_per_minute) < pad:
            rep.tasks_per_minute.append(0)
        rep.finalize()
        audit_report(rep)
        self._audit_state()
        return rep

    def _audit_state(self):
        if self.active_pipelines != 0:
            raise AuditError(f"{self.active_pipelines} pipelines still active at drain")
        for tr in self.taskruns:
            if tr.outcome is None:
                raise AuditError(f"task {tr.key} has no terminal state")
        leak_check = getattr(self.policy, "audit_leaks", None)
        if leak_check:
            leak_check()
