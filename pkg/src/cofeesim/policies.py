"""Scheduling policies: the reservation-backed bidding scheduler plus the
cloud-only and local-fog-partition baselines.

All three share the engine's trigger/pipeline machinery and metrics, so
reports are directly comparable.  A pluggable slot is left for ILP-style
schedulers (see make_policy)."""

from __future__ import annotations

from dataclasses import dataclass, field

from . import engine as ev
from .fogsched import FogScheduler
from .master import Inquiry, MasterConfig, cloud_bid, pick_winner, select_candidate_fogs
from .model import CLOUD, EDGE, ConfigError, exec_cost, transfer_cost, transfer_time
from .slotcal import PERMANENT, PRIMARY


class SchedulerPolicy:
    """Hook points every policy implements; the engine drives them."""

    name = "abstract"

    def attach(self, engine):
        self.engine = engine

    def on_run_start(self):
        pass

    def on_task_ready(self, tr):
        raise NotImplementedError

    def on_task_complete(self, tr, completion_time, output_mb):
        raise NotImplementedError

    def on_edge_failure(self, edge):
        pass

    # -- shared helpers ---------------------------------------------------------

    def _input_src(self, tr):
        return self.engine.topology.resources[tr.input_mb.location]

    def _input_alive_or_fail(self, tr) -> bool:
        if not self._input_src(tr).alive:
            self.engine.fail_task(tr, "input-lost")
            return False
        return True

    def _bill_edge_attempt(self, tr, edge, now):
        """Charge the burned time of an edge attempt cut short at `now`."""
        if tr.start_time is not None and tr.start_time <= now:
            amount = self.engine.topology.billing.cost(now - tr.start_time, edge)
            self.engine.charge(tr, "attempt_exec", amount)


@dataclass
class _InquiryState:
    tr: object
    inquiry: Inquiry
    mb: object
    expected: int
    bids: list = field(default_factory=list)
    decided: bool = False


class CofeePolicy(SchedulerPolicy):
    """Inquiry-bid-select with backup/primary slot reservation on fogs."""

    name = "cofee"

    def __init__(self, master_cfg: MasterConfig | None = None,
                 oversub_ratio="edge-capacity", failure_prob_mode="fixed"):
        self.master_cfg = master_cfg or MasterConfig()
        self.oversub_ratio = oversub_ratio
        self.failure_prob_mode = failure_prob_mode

    def attach(self, engine):
        self.engine = engine
        self.reports: dict[str, list] = {}
        self.inquiries: dict[int, _InquiryState] = {}
        self.task_by_key: dict[str, object] = {}
        self.fogs_by_id = {f.id: f for f in engine.topology.fogs}
        self.fogscheds: dict[str, FogScheduler] = {}
        for fog in sorted(engine.topology.fogs, key=lambda f: f.id):
            children = engine.topology.children(fog.id)
            ratio = self.oversub_ratio
            if ratio == "edge-capacity":
                ratio = max(1, len(children))
            self.fogscheds[fog.id] = FogScheduler(
                fog, children, engine.topology,
                inquiry_timeout=self.master_cfg.inquiry_timeout,
                oversub_ratio=float(ratio),
                failure_prob_fn=self._failure_prob_fn(),
            )

    def _failure_prob_fn(self):
        mode = self.failure_prob_mode
        if mode == "zero":
            return lambda edge, now: 0.0
        if mode == "fixed":
            return lambda edge, now: edge.failure_prob
        if mode == "mtbf-remaining":
            wl = self.engine.workload
            if wl.edge_mtbf is None:
                return lambda edge, now: 0.0
            mtbf = wl.edge_mtbf
            duration = wl.duration
            return lambda edge, now: min(1.0, max(0.0, duration - now) / mtbf)
        raise ConfigError(f"unknown failure probability mode {mode!r}")

    def on_run_start(self):
        for fog_id in self.fogscheds:
            self.engine.schedule(0.0, None, self._send_report, {"fog": fog_id})

    # -- periodic free-slot reports ---------------------------------------------

    def _send_report(self, p):
        eng = self.engine
        fog_id = p["fog"]
        slots = self.fogscheds[fog_id].top_free(self.master_cfg.report_top_k, eng.now)
        eng.schedule(eng.now + eng.lat_fog_master, ev.FREE_SLOT_REPORT,
                     self._report_arrived, {"fog": fog_id, "slots": slots})
        if eng.now < eng.workload.duration or eng.active_pipelines > 0:
            eng.schedule(eng.now + self.master_cfg.report_period, None,
                         self._send_report, {"fog": fog_id})

    def _report_arrived(self, p):
        self.reports[p["fog"]] = p["slots"]

    # -- inquiry-bid-select -------------------------------------------------------

    def on_task_ready(self, tr):
        eng = self.engine
        now = eng.now
        if now >= tr.sub_deadline or not self._input_alive_or_fail(tr):
            if now >= tr.sub_deadline and tr.outcome is None:
                eng.fail_task(tr, "deadline-passed")
            return
        self.task_by_key[tr.key] = tr
        mb = tr.input_mb
        inquiry = Inquiry(
            inquiry_id=eng.next_inquiry_id(),
            task_key=tr.key,
            task_id=tr.task_id,
            base_time=tr.base_time,
            sub_deadline=tr.sub_deadline,
            mb_id=mb.id,
            mb_size=mb.size_bytes,
            mb_location=mb.location,
            issue_time=now,
        )
        fogs = select_candidate_fogs(inquiry, self.reports, self.fogs_by_id,
                                     now, self.master_cfg.fanout)
        st = _InquiryState(tr, inquiry, mb, expected=len(fogs))
        self.inquiries[inquiry.inquiry_id] = st
        for fog_id in fogs:
            eng.schedule(now + eng.lat_fog_master, ev.INQUIRY_DELIVERED,
                         self._inquiry_delivered,
                         {"inq": inquiry.inquiry_id, "fog": fog_id, "task": tr.key})
        timeout_at = now + self.master_cfg.inquiry_timeout if fogs else now
        eng.schedule(timeout_at, ev.SELECTION_TIMEOUT, self._selection_timeout,
                     {"inq": inquiry.inquiry_id, "task": tr.key})

    def _inquiry_delivered(self, p):
        eng = self.engine
        st = self.inquiries[p["inq"]]
        fs = self.fogscheds[p["fog"]]
        bid, moved = fs.compute_bid(st.inquiry, st.mb, eng.now)
        self._refresh_timers(fs, moved)
        eng.schedule(eng.now + eng.lat_fog_master, ev.BID_DELIVERED,
                     self._bid_delivered,
                     {"inq": bid.inquiry_id, "fog": fs.fog.id, "task": st.tr.key,
                      "bid": bid})

    def _refresh_timers(self, fs, moved):
        """Re-arm slot timers for permanent reservations repositioned by
        defragmentation; stale timers detect the move and no-op."""
        for rid, _old_start in moved:
            if fs.calendar.contains(rid) and fs.calendar.info(rid).state == PERMANENT:
                new_start = fs.calendar.start_of(rid)
                self.engine.schedule(new_start, ev.SLOT_TIMER, self._slot_timer,
                                     {"fog": fs.fog.id, "rid": rid, "expected": new_start})

    def _bid_delivered(self, p):
        st = self.inquiries.get(p["inq"])
        bid = p["bid"]
        if st is None or st.decided:
            # selection already ran: cancel whatever the fog holds for us
            if bid.reservation_rid is not None:
                self._send_reject(bid)
            return
        st.bids.append(bid)
        if len(st.bids) == st.expected:
            self._decide(st)

    def _selection_timeout(self, p):
        st = self.inquiries.get(p["inq"])
        if st is not None and not st.decided:
            self._decide(st)

    def _send_reject(self, bid):
        eng = self.engine
        eng.schedule(eng.now + eng.lat_fog_master, ev.REJECT_DELIVERED,
                     self._reject_delivered,
                     {"inq": bid.inquiry_id, "fog": bid.bidder})

    def _cloud_worker_for(self, mb):
        res = self.engine.topology.resources.get(mb.location)
        if res is not None and res.tier == CLOUD:
            return res
        return min(self.engine.topology.clouds, key=lambda c: c.id)

    def _decide(self, st):
        eng = self.engine
        st.decided = True
        cloud = self._cloud_worker_for(st.mb)
        cbid = cloud_bid(st.inquiry, cloud, st.mb, eng.topology, eng.now,
                         control_latency=eng.lat_cloud_master)
        winner = pick_winner(st.bids + [cbid])
        for bid in st.bids:
            if bid is not winner and bid.reservation_rid is not None:
                self._send_reject(bid)
        if winner is None:
            eng.fail_task(st.tr, "no-viable-bid")
        elif winner is cbid:
            self._assign_cloud(st.tr, cloud)
        else:
            eng.schedule(eng.now + eng.lat_fog_master, ev.ACCEPT_DELIVERED,
                         self._accept_delivered,
                         {"inq": winner.inquiry_id, "fog": winner.bidder,
                          "task": st.tr.key, "worker": winner.worker})

    def _reject_delivered(self, p):
        self.fogscheds[p["fog"]].on_reject(p["inq"])

    # -- accepted work ------------------------------------------------------------

    def _accept_delivered(self, p):
        eng = self.engine
        st = self.inquiries[p["inq"]]
        tr = st.tr
        fs = self.fogscheds[p["fog"]]
        pend = fs.on_accept(p["inq"], eng.now)
        now = eng.now
        topo = eng.topology
        src = topo.resources[tr.input_mb.location]
        tr.accept_time = now
        tr.fog_id = fs.fog.id
        tr.backup_rid = pend.rid
        eng.count_scheduled(now)
        tr.cache_ready = now + transfer_time(tr.input_mb, src, fs.fog, topo.network)

        if pend.edge_id is not None:
            edge = topo.resources[pend.edge_id]
            tr.worker = edge.id
            fs.assigned[edge.id] = tr
            d = transfer_time(tr.input_mb, src, edge, topo.network)
            arrival = now + (d if d > 0 else eng.lat_edge_fog)
            tr.start_time = arrival
            tr.expected_completion = arrival + tr.base_time / edge.speed
            eng.charge(tr, "transfer", transfer_cost(tr.input_mb, src, edge, topo.network))
            if src.id == edge.id:
                eng.charge(tr, "cache",
                           transfer_cost(tr.input_mb, edge, fs.fog, topo.network))
            if edge.alive:
                eng.schedule(arrival, ev.TRANSFER_COMPLETE, self._edge_transfer_done,
                             {"task": tr.key, "worker": edge.id, "fog": fs.fog.id})
            else:
                tr.edge_failed = True  # died during the bid round; backup covers it
        else:
            tr.worker = fs.fog.id
            eng.charge(tr, "transfer", transfer_cost(tr.input_mb, src, fs.fog, topo.network))
            eng.schedule(tr.cache_ready, ev.TRANSFER_COMPLETE, self._noop,
                         {"task": tr.key, "worker": fs.fog.id, "fog": fs.fog.id})
        start = fs.calendar.start_of(pend.rid)
        eng.schedule(start, ev.SLOT_TIMER, self._slot_timer,
                     {"fog": fs.fog.id, "rid": pend.rid, "expected": start})

    def _noop(self, p):
        pass

    def _edge_transfer_done(self, p):
        tr = self.task_by_key[p["task"]]
        if tr.edge_failed:
            return
        self.engine.schedule(self.engine.now, ev.TASK_STARTED, self._edge_started,
                             {"task": tr.key, "worker": tr.worker})

    def _edge_started(self, p):
        tr = self.task_by_key[p["task"]]
        if tr.edge_failed:
            return
        eng = self.engine
        edge = eng.topology.resources[tr.worker]
        cost = exec_cost(tr.base_time, edge, eng.topology.billing)
        eng.schedule(tr.expected_completion, ev.TASK_COMPLETED, self._edge_completed,
                     {"task": tr.key, "worker": edge.id, "fog": tr.fog_id, "cost": cost})

    def _edge_completed(self, p):
        tr = self.task_by_key[p["task"]]
        if tr.edge_failed:
            return
        eng = self.engine
        fs = self.fogscheds[tr.fog_id]
        edge = eng.topology.resources[tr.worker]
        fs.free_edge(edge.id)
        fs.release_backup(tr.backup_rid)
        eng.charge(tr, "exec", p["cost"])
        eng.complete_task(tr, eng.now, edge)

    # -- fog timers ------------------------------------------------------------------

    def _slot_timer(self, p):
        fs = self.fogscheds[p["fog"]]
        rid = p["rid"]
        cal = fs.calendar
        if not cal.contains(rid) or cal.start_of(rid) != p["expected"]:
            return  # released on success, or repositioned (a fresh timer exists)
        res = cal.info(rid)
        tr = self.task_by_key[res.task_key]
        eng = self.engine
        if res.kind != PRIMARY and not tr.edge_failed:
            return  # edge is completing this very instant; completion will clean up
        if fs.busy_until > eng.now + 1e-12:
            if res.kind == PRIMARY:
                # primaries never share; a busy fog here is a calendar bug
                raise RuntimeError(f"primary slot fired while fog {fs.fog.id} busy")
            # over-subscribed slot already consumed by an earlier claimant
            fs.release_backup(rid)
            eng.fail_task(tr, "overbooked-backup")
            return
        if tr.cache_ready is not None and tr.cache_ready > eng.now + 1e-9:
            raise RuntimeError(f"cached input not staged before slot start for {tr.key}")
        cal.lock(rid)
        end = eng.now + res.duration
        fs.busy_until = end
        tr.start_time = eng.now
        tr.expected_completion = end
        cost = exec_cost(tr.base_time, fs.fog, eng.topology.billing)
        eng.schedule(end, ev.TASK_COMPLETED, self._fog_completed,
                     {"task": tr.key, "worker": fs.fog.id, "fog": fs.fog.id,
                      "rid": rid, "cost": cost})

    def _fog_completed(self, p):
        tr = self.task_by_key[p["task"]]
        eng = self.engine
        fs = self.fogscheds[p["fog"]]
        fs.calendar.release(p["rid"])
        eng.charge(tr, "exec", p["cost"])
        eng.complete_task(tr, eng.now, fs.fog)

    # -- cloud fallback -----------------------------------------------------------------

    def _assign_cloud(self, tr, cloud):
        eng = self.engine
        now = eng.now
        topo = eng.topology
        src = topo.resources[tr.input_mb.location]
        tr.worker = cloud.id
        tr.accept_time = now
        eng.count_scheduled(now)
        arrival = now + eng.lat_cloud_master + transfer_time(tr.input_mb, src, cloud, topo.network)
        eng.charge(tr, "transfer", transfer_cost(tr.input_mb, src, cloud, topo.network))
        tr.start_time = arrival
        tr.expected_completion = arrival + tr.base_time / cloud.speed
        cost = exec_cost(tr.base_time, cloud, topo.billing)
        eng.schedule(arrival, ev.TRANSFER_COMPLETE, self._noop,
                     {"task": tr.key, "worker": cloud.id})
        eng.schedule(tr.expected_completion, ev.TASK_COMPLETED, self._cloud_completed,
                     {"task": tr.key, "worker": cloud.id, "cost": cost})

    def _cloud_completed(self, p):
        tr = self.task_by_key[p["task"]]
        eng = self.engine
        cloud = eng.topology.resources[p["worker"]]
        eng.charge(tr, "exec", p["cost"])
        eng.complete_task(tr, eng.now, cloud)

    # -- completions and failures ----------------------------------------------------------

    def on_task_complete(self, tr, completion_time, output_mb):
        eng = self.engine
        worker = eng.topology.resources[tr.worker]
        if worker.tier == CLOUD:
            delay = eng.lat_cloud_master
        elif worker.tier == EDGE:
            delay = eng.lat_edge_fog + eng.lat_fog_master
        else:
            delay = eng.lat_fog_master
        eng.schedule(completion_time + delay, None, self._advance_at_master,
                     {"tr": tr, "completion": completion_time, "out": output_mb})

    def _advance_at_master(self, p):
        nxt = self.engine.advance_pipeline(p["tr"], p["completion"], p["out"])
        if nxt is not None:
            self.on_task_ready(nxt)

    def on_edge_failure(self, edge):
        fs = self.fogscheds[edge.partition]
        tr = fs.assigned.get(edge.id)
        if tr is None or tr.edge_failed or tr.outcome is not None:
            return
        # a completion at exactly the failure instant still counts as done
        if tr.expected_completion is not None and tr.expected_completion <= self.engine.now:
            return
        tr.edge_failed = True
        self._bill_edge_attempt(tr, edge, self.engine.now)

    def audit_leaks(self):
        for fs in self.fogscheds.values():
            if fs.pending:
                raise RuntimeError(f"fog {fs.fog.id} still holds temporary bids at drain")
            if len(fs.calendar) != 0:
                raise RuntimeError(f"fog {fs.fog.id} calendar not drained")


class CloudOnlyPolicy(SchedulerPolicy):
    """Every task runs on a cloud worker; capacity is never a constraint."""

    name = "cloud-only"

    def attach(self, engine):
        self.engine = engine
        self.task_by_key = {}

    def _worker_for(self, mb):
        res = self.engine.topology.resources.get(mb.location)
        if res is not None and res.tier == CLOUD:
            return res
        return min(self.engine.topology.clouds, key=lambda c: c.id)

    def on_task_ready(self, tr):
        if not self._input_alive_or_fail(tr):
            return
        eng = self.engine
        now = eng.now
        self.task_by_key[tr.key] = tr
        topo = eng.topology
        worker = self._worker_for(tr.input_mb)
        src = topo.resources[tr.input_mb.location]
        tr.worker = worker.id
        tr.accept_time = now
        eng.count_scheduled(now)
        arrival = now + eng.lat_cloud_master + transfer_time(tr.input_mb, src, worker, topo.network)
        eng.charge(tr, "transfer", transfer_cost(tr.input_mb, src, worker, topo.network))
        tr.start_time = arrival
        tr.expected_completion = arrival + tr.base_time / worker.speed
        cost = exec_cost(tr.base_time, worker, topo.billing)
        eng.schedule(arrival, ev.TRANSFER_COMPLETE, lambda p: None,
                     {"task": tr.key, "worker": worker.id})
        eng.schedule(tr.expected_completion, ev.TASK_COMPLETED, self._completed,
                     {"task": tr.key, "worker": worker.id, "cost": cost})

    def _completed(self, p):
        tr = self.task_by_key[p["task"]]
        eng = self.engine
        eng.charge(tr, "exec", p["cost"])
        eng.complete_task(tr, eng.now, eng.topology.resources[p["worker"]])

    def on_task_complete(self, tr, completion_time, output_mb):
        eng = self.engine
        eng.schedule(completion_time + eng.lat_cloud_master, None, self._advance,
                     {"tr": tr, "completion": completion_time, "out": output_mb})

    def _advance(self, p):
        nxt = self.engine.advance_pipeline(p["tr"], p["completion"], p["out"])
        if nxt is not None:
            self.on_task_ready(nxt)


class LocalFogPolicy(SchedulerPolicy):
    """Greedy immediate placement inside the source micro-batch's partition;
    no reservations, no cloud, no retries."""

    name = "lfp"

    def __init__(self, inquiry_timeout: float = 1.0):
        self.inquiry_timeout = inquiry_timeout

    def attach(self, engine):
        self.engine = engine
        self.task_by_key = {}
        self.fog_busy_until = {f.id: 0.0 for f in engine.topology.fogs}
        self.edge_running: dict[str, object] = {}
        self.partition_of_pipe: dict[str, str] = {}

    def _partition_for(self, mb):
        res = self.engine.topology.resources[mb.location]
        return res.partition if res.partition is not None else None

    def on_task_ready(self, tr):
        # entry point for source tasks: the master forwards the decision to
        # the partition owning the triggering micro-batch
        eng = self.engine
        part = self._partition_for(tr.input_mb)
        self.partition_of_pipe[tr.pipeline.pipeline_id] = part
        eng.schedule(eng.now + eng.lat_fog_master, None, self._place, {"tr": tr})

    def _place(self, p):
        tr = p["tr"]
        eng = self.engine
        now = eng.now
        if not self._input_alive_or_fail(tr):
            return
        self.task_by_key[tr.key] = tr
        topo = eng.topology
        fog_id = self.partition_of_pipe[tr.pipeline.pipeline_id]
        fog = topo.resources[fog_id]
        src = topo.resources[tr.input_mb.location]
        slack = tr.sub_deadline - now

        chosen = None
        for edge in sorted(topo.children(fog_id), key=lambda e: (e.price, e.id)):
            if not edge.alive or self.edge_running.get(edge.id) is not None:
                continue
            d = transfer_time(tr.input_mb, src, edge, topo.network)
            if self.inquiry_timeout + d + tr.base_time / edge.speed <= slack:
                chosen = (edge, d)
                break
        if chosen is not None:
            edge, d = chosen
            tr.worker = edge.id
            tr.fog_id = fog_id
            tr.accept_time = now
            eng.count_scheduled(now)
            self.edge_running[edge.id] = tr
            arrival = now + (d if d > 0 else eng.lat_edge_fog)
            tr.start_time = arrival
            tr.expected_completion = arrival + tr.base_time / edge.speed
            eng.charge(tr, "transfer", transfer_cost(tr.input_mb, src, edge, topo.network))
            cost = exec_cost(tr.base_time, edge, topo.billing)
            eng.schedule(arrival, ev.TRANSFER_COMPLETE, lambda q: None,
                         {"task": tr.key, "worker": edge.id})
            eng.schedule(tr.expected_completion, ev.TASK_COMPLETED, self._edge_done,
                         {"task": tr.key, "worker": edge.id, "cost": cost})
            return

        d_fog = transfer_time(tr.input_mb, src, fog, topo.network)
        if (self.fog_busy_until[fog_id] <= now
                and self.inquiry_timeout + d_fog + tr.base_time / fog.speed <= slack):
            tr.worker = fog_id
            tr.fog_id = fog_id
            tr.accept_time = now
            eng.count_scheduled(now)
            arrival = now + d_fog
            tr.start_time = arrival
            tr.expected_completion = arrival + tr.base_time / fog.speed
            self.fog_busy_until[fog_id] = tr.expected_completion
            eng.charge(tr, "transfer", transfer_cost(tr.input_mb, src, fog, topo.network))
            cost = exec_cost(tr.base_time, fog, topo.billing)
            eng.schedule(arrival, ev.TRANSFER_COMPLETE, lambda q: None,
                         {"task": tr.key, "worker": fog_id})
            eng.schedule(tr.expected_completion, ev.TASK_COMPLETED, self._fog_done,
                         {"task": tr.key, "worker": fog_id, "cost": cost})
            return

        eng.fail_task(tr, "no-local-resource")

    def _edge_done(self, p):
        tr = self.task_by_key[p["task"]]
        if tr.edge_failed:
            return
        eng = self.engine
        self.edge_running[p["worker"]] = None
        eng.charge(tr, "exec", p["cost"])
        eng.complete_task(tr, eng.now, eng.topology.resources[p["worker"]])

    def _fog_done(self, p):
        tr = self.task_by_key[p["task"]]
        eng = self.engine
        eng.charge(tr, "exec", p["cost"])
        eng.complete_task(tr, eng.now, eng.topology.resources[p["worker"]])

    def on_task_complete(self, tr, completion_time, output_mb):
        # the parent fog decides the next placement locally
        eng = self.engine
        worker = eng.topology.resources[tr.worker]
        delay = eng.lat_edge_fog if worker.tier == EDGE else 0.0
        eng.schedule(completion_time + delay, None, self._advance_local,
                     {"tr": tr, "completion": completion_time, "out": output_mb})

    def _advance_local(self, p):
        nxt = self.engine.advance_pipeline(p["tr"], p["completion"], p["out"])
        if nxt is not None:
            self._place({"tr": nxt})

    def on_edge_failure(self, edge):
        tr = self.edge_running.get(edge.id)
        if tr is None or tr.outcome is not None:
            return
        if tr.expected_completion is not None and tr.expected_completion <= self.engine.now:
            return
        tr.edge_failed = True
        self.edge_running[edge.id] = None
        self._bill_edge_attempt(tr, edge, self.engine.now)
        self.engine.fail_task(tr, "edge-died")


_POLICIES = {
    "cofee": CofeePolicy,
    "cloud-only": CloudOnlyPolicy,
    "lfp": LocalFogPolicy,
}


def make_policy(name: str, master_cfg=None, oversub_ratio="edge-capacity",
                failure_prob_mode="fixed"):
    """Policy factory keyed by the CLI/config string.  Unknown names raise,
    which is also where an ILP-style scheduler would plug in."""
    if name == "cofee":
        return CofeePolicy(master_cfg, oversub_ratio, failure_prob_mode)
    if name == "cloud-only":
        return CloudOnlyPolicy()
    if name == "lfp":
        cfg = master_cfg or MasterConfig()
        return LocalFogPolicy(inquiry_timeout=cfg.inquiry_timeout)
    raise ConfigError(f"unknown policy {name!r} (expected one of {sorted(_POLICIES)})")
