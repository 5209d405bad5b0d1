"""Experiment harness: config ingestion, run fan-out, CSV and summary output.

Configs are JSON files (bundled presets can be named directly, e.g.
"reliable"); see README for the schema.  Every (policy, seed) run is
isolated, so seeds can be fanned out across worker threads without
affecting results or output ordering.
"""

from __future__ import annotations

import csv
import json
import math
import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from importlib import resources as importlib_resources
from pathlib import Path

from .dag import DagSpec, TaskDef
from .engine import SimRun, WorkloadConfig
from .master import MasterConfig
from .metrics import MetricsReport
from .model import CLOUD, EDGE, FOG, ConfigError, Resource, Topology, build_network
from .policies import make_policy
from .query import (
    DomainPredicate,
    FilterQuery,
    SpatialPredicate,
    TemporalPredicate,
)

PRESET_NAMES = ("desk", "reliable", "m100", "m40", "wl2x")

CSV_NAME = "metrics.csv"
SUMMARY_NAME = "summary.txt"


@dataclass
class RunSetup:
    """A fully validated run description."""

    name: str
    topology: Topology
    dags: list
    workload: WorkloadConfig
    master_cfg: MasterConfig
    policy: str = "cofee"
    oversub_ratio: object = "edge-capacity"
    failure_prob_mode: str = "mtbf-remaining"


def _expect(cond, path, message):
    if not cond:
        raise ConfigError(f"{path}: {message}")


def _get(d, key, path, default=None, required=False):
    if key not in d:
        if required:
            raise ConfigError(f"{path}.{key}: required field missing")
        return default
    return d[key]


def _build_topology(cfg: dict) -> Topology:
    path = "topology"
    sizes = _get(cfg, "edges_per_fog", path, required=True)
    _expect(isinstance(sizes, list) and sizes, path + ".edges_per_fog", "non-empty list required")
    n_cloud = _get(cfg, "cloud_workers", path, required=True)
    speed = _get(cfg, "speed", path, {"edge": 1.0, "fog": 8.0, "cloud": 50.0})
    price_hr = _get(cfg, "price_cents_per_hour", path,
                    {"edge": 0.167, "fog": 1.467, "cloud": 10.0})
    increment = float(_get(cfg, "billing_increment_sec", path, 1.0))
    _expect(increment > 0, path + ".billing_increment_sec", "must be positive")
    per_inc = {tier: price_hr[tier] * increment / 3600.0 for tier in ("edge", "fog", "cloud")}

    resources = {}
    edge_idx = 0
    for i, count in enumerate(sizes):
        _expect(int(count) >= 1, f"{path}.edges_per_fog[{i}]", "each fog needs >= 1 edge")
        fog_id = f"f{i:02d}"
        resources[fog_id] = Resource(fog_id, FOG, float(speed["fog"]), per_inc["fog"],
                                     partition=fog_id)
        for _ in range(int(count)):
            eid = f"e{edge_idx:03d}"
            resources[eid] = Resource(eid, EDGE, float(speed["edge"]), per_inc["edge"],
                                      partition=fog_id)
            edge_idx += 1
    for k in range(int(n_cloud)):
        cid = f"c{k:02d}"
        resources[cid] = Resource(cid, CLOUD, float(speed["cloud"]), per_inc["cloud"])

    net_cfg = _get(cfg, "network", path, {})
    defaults = {
        "edge_fog": {"bandwidth_mbps": 60.0, "latency_ms": 1.0},
        "fog_fog": {"bandwidth_mbps": 100.0, "latency_ms": 5.0},
        "fog_cloud": {"bandwidth_mbps": 100.0, "latency_ms": 5.0},
        "cloud_cloud": {"bandwidth_mbps": 1000.0, "latency_ms": 1.0},
    }
    tier_pairs = {
        "edge_fog": (EDGE, FOG),
        "fog_fog": (FOG, FOG),
        "fog_cloud": (FOG, CLOUD),
        "cloud_cloud": (CLOUD, CLOUD),
    }
    prices = net_cfg.get("transfer_price_cents_per_byte", {})
    pair_params = {}
    for key, pair in tier_pairs.items():
        params = {**defaults[key], **net_cfg.get(key, {})}
        _expect(params["bandwidth_mbps"] >= 0, f"{path}.network.{key}", "bandwidth must be >= 0")
        pair_params[pair] = {
            "bandwidth_bps": params["bandwidth_mbps"] * 1e6,
            "latency_s": params["latency_ms"] / 1e3,
            "price_per_byte": float(prices.get(key, 0.0)),
        }
    topo = Topology(resources=resources,
                    network=build_network(pair_params, resources))
    topo.billing.increment = increment
    return topo.validate()


def _build_filter(dag_id: str, cfg: dict | None) -> FilterQuery:
    if cfg is None:
        return FilterQuery(dag_id, domain=DomainPredicate(kv=("app", dag_id)))
    spatial = temporal = domain = None
    if "kv" in cfg:
        domain = DomainPredicate(kv=tuple(cfg["kv"]))
    elif "sid" in cfg:
        domain = DomainPredicate(sid=cfg["sid"])
    if "temporal" in cfg:
        t = cfg["temporal"]
        temporal = TemporalPredicate(t["op"], float(t["begin"]), float(t["end"]))
    if "spatial" in cfg:
        s = cfg["spatial"]
        spatial = SpatialPredicate(s["op"], *[float(x) for x in s["rect"]])
    return FilterQuery(dag_id, spatial=spatial, temporal=temporal, domain=domain)


def _load_dag_defs(cfg: dict, base_dir: Path | None) -> list:
    if "bundled" in cfg:
        name = cfg["bundled"]
        _expect(name == "iot-30", "dags.bundled", f"unknown bundled workload {name!r}")
        raw = importlib_resources.files("cofeesim.presets").joinpath("dags_iot30.json")
        return json.loads(raw.read_text())["dags"]
    if "file" in cfg:
        p = Path(cfg["file"])
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        return json.loads(p.read_text())["dags"]
    if "inline" in cfg:
        return cfg["inline"]
    raise ConfigError("dags: one of bundled / file / inline required")


def _build_dags(cfg: dict, deadline_factor: float, theta_scale: float,
                base_dir: Path | None) -> list:
    defs = _load_dag_defs(cfg, base_dir)
    _expect(bool(defs), "dags", "at least one DAG required")
    dags = []
    for i, d in enumerate(defs):
        path = f"dags[{i}]"
        dag_id = _get(d, "id", path, required=True)
        tasks = {}
        for tid, t in _get(d, "tasks", path, required=True).items():
            base = float(t["base_time"]) * theta_scale
            out_bytes = int(t["out_kb"] * 1000) if "out_kb" in t else int(t["out_bytes"])
            tasks[tid] = TaskDef(tid, base, out_bytes)
        edges = [tuple(e) for e in _get(d, "edges", path, required=True)]
        flt = _build_filter(dag_id, d.get("filter"))
        # deadline = factor x critical path on base (edge) resources
        probe = DagSpec(dag_id, tasks, edges, deadline=1.0, filter=None)
        deadline = deadline_factor * probe.critical_path_time()
        dags.append(DagSpec(dag_id, tasks, edges, deadline=deadline, filter=flt))
    return dags


def load_config(source) -> RunSetup:
    """Load and validate a run description.

    `source` is a preset name (see PRESET_NAMES), a path to a JSON file, or
    an already-parsed dict.
    """
    base_dir = None
    if isinstance(source, dict):
        cfg = source
        name = cfg.get("name", "inline")
    else:
        text = str(source)
        if text in PRESET_NAMES:
            raw = importlib_resources.files("cofeesim.presets").joinpath(f"{text}.json")
            cfg = json.loads(raw.read_text())
        else:
            p = Path(text)
            if not p.exists():
                raise ConfigError(
                    f"config {text!r} is neither a preset ({', '.join(PRESET_NAMES)}) "
                    "nor an existing file")
            cfg = json.loads(p.read_text())
            base_dir = p.parent
        name = cfg.get("name", Path(text).stem)

    topology = _build_topology(_get(cfg, "topology", "config", required=True))

    deadline_factor = float(_get(cfg, "deadline_factor", "config", 1.1))
    _expect(deadline_factor > 0, "deadline_factor", "must be positive")
    theta_scale = float(_get(cfg, "theta_scale", "config", 1.0))
    _expect(theta_scale > 0, "theta_scale", "must be positive")
    dags = _build_dags(_get(cfg, "dags", "config", required=True),
                       deadline_factor, theta_scale, base_dir)

    wl = _get(cfg, "workload", "config", required=True)
    mtbf_min = _get(wl, "edge_mtbf_min", "workload")
    size_kb = _get(wl, "size_kb", "workload", [500, 1500])
    workload = WorkloadConfig(
        rate_per_min=float(_get(wl, "rate_per_min", "workload", required=True)),
        size_min_bytes=int(size_kb[0] * 1000),
        size_max_bytes=int(size_kb[1] * 1000),
        duration=float(_get(wl, "duration_min", "workload", required=True)) * 60.0,
        edge_mtbf=None if mtbf_min is None else float(mtbf_min) * 60.0,
    )

    m = _get(cfg, "master", "config", {})
    master_cfg = MasterConfig(
        fanout=int(_get(m, "fanout", "master", 2)),
        inquiry_timeout=float(_get(m, "inquiry_timeout_sec", "master", 1.0)),
        report_top_k=int(_get(m, "report_top_k", "master", 3)),
        report_period=float(_get(m, "report_period_sec", "master", 5.0)),
    )

    fog_cfg = _get(cfg, "fog", "config", {})
    oversub = _get(fog_cfg, "oversub_ratio", "fog", "edge-capacity")
    if oversub != "edge-capacity":
        oversub = float(oversub)
        _expect(oversub >= 1.0, "fog.oversub_ratio", "must be >= 1")

    return RunSetup(
        name=name,
        topology=topology,
        dags=dags,
        workload=workload,
        master_cfg=master_cfg,
        policy=_get(cfg, "policy", "config", "cofee"),
        oversub_ratio=oversub,
        failure_prob_mode=_get(cfg, "failure_prob_mode", "config", "mtbf-remaining"),
    )


# -- running ----------------------------------------------------------------------


def run_one(setup: RunSetup, policy_name: str, seed: int, keep_trace=False):
    """One isolated simulation run; returns (MetricsReport, trace)."""
    policy = make_policy(policy_name, setup.master_cfg,
                         oversub_ratio=setup.oversub_ratio,
                         failure_prob_mode=setup.failure_prob_mode)
    sim = SimRun(setup.topology, setup.dags, setup.workload, policy,
                 setup.master_cfg, seed, keep_trace=keep_trace)
    report = sim.run()
    return report, sim.trace


def run_experiment(setup: RunSetup, policies, seeds, workers: int = 1,
                   out_dir=None, keep_trace=False):
    """Run the (policy x seed) grid; optionally write CSV/summary/traces.

    Results come back sorted by (policy, seed) regardless of worker count.
    """
    jobs = [(p, s) for p in policies for s in seeds]
    results = {}
    traces = {}
    if workers <= 1:
        for p, s in jobs:
            results[(p, s)], traces[(p, s)] = run_one(setup, p, s, keep_trace)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = {pool.submit(run_one, setup, p, s, keep_trace): (p, s) for p, s in jobs}
            for fut, key in futs.items():
                results[key], traces[key] = fut.result()
    reports = [results[key] for key in sorted(results)]
    if out_dir is not None:
        emit_report(reports, out_dir)
        if keep_trace:
            _write_traces(traces, out_dir)
    return reports


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_traces(traces, out_dir):
    out = Path(out_dir)
    for (policy, seed), entries in sorted(traces.items()):
        lines = "".join(json.dumps(e, sort_keys=True) + "\n" for e in entries)
        _atomic_write(out / f"trace_{policy}_{seed}.ndjson", lines)


def emit_report(reports, out_dir):
    """Write metrics.csv (one row per run) and a human summary, atomically."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cols = [f.name for f in fields(MetricsReport)]
    rows = []
    for rep in reports:
        row = rep.to_row()
        rows.append([_cell(row[c]) for c in cols])
    buf = []
    buf.append(",".join(cols))
    for row in rows:
        buf.append(",".join(row))
    csv_text = "\n".join(buf) + "\n"
    _atomic_write(out / CSV_NAME, csv_text)
    _atomic_write(out / SUMMARY_NAME, render_summary(reports))
    return out / CSV_NAME, out / SUMMARY_NAME


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace('"', '""') + '"' if ("," in value or '"' in value) else value
    return str(value)


def parse_metrics_csv(path) -> list:
    """Inverse of emit_report: reconstruct MetricsReport values exactly."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [MetricsReport.from_row(row) for row in reader]


def _sig4(x: float) -> str:
    if x == 0:
        return "0"
    return f"{x:.4g}"


def render_summary(reports) -> str:
    by_policy: dict[str, list] = {}
    for rep in reports:
        by_policy.setdefault(rep.policy, []).append(rep)

    def agg(vals):
        m = statistics.fmean(vals)
        sd = statistics.pstdev(vals) if len(vals) > 1 else 0.0
        return f"{_sig4(m)} +/- {_sig4(sd)}"

    lines = []
    lines.append(f"{'policy':<12} {'runs':>4} {'success':>16} {'total cost (c)':>22} "
                 f"{'avg cost/pipeline (c)':>24} {'edge':>12} {'fog':>12} {'cloud':>12}")
    for policy in sorted(by_policy):
        reps = by_policy[policy]
        lines.append(
            f"{policy:<12} {len(reps):>4} "
            f"{agg([r.success_rate for r in reps]):>16} "
            f"{agg([r.total_cost for r in reps]):>22} "
            f"{agg([r.avg_cost_per_successful_pipeline for r in reps]):>24} "
            f"{agg([r.frac_edge for r in reps]):>12} "
            f"{agg([r.frac_fog for r in reps]):>12} "
            f"{agg([r.frac_cloud for r in reps]):>12}"
        )
    lines.append("")
    lines.append("per-run details are in metrics.csv (full precision)")
    return "\n".join(lines) + "\n"


def median_tasks_per_minute(report: MetricsReport, duration_min: int | None = None) -> float:
    buckets = report.tasks_per_minute
    if duration_min:
        buckets = buckets[:duration_min]
    if not buckets:
        return 0.0
    return statistics.median(buckets)
