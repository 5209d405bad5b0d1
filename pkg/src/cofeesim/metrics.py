"""Run metrics, conservation audits and report structures."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields


class AuditError(AssertionError):
    """An internal conservation invariant failed for a run."""


@dataclass
class MetricsReport:
    """Everything a single (policy, seed) run reports.

    Costs are cents at full precision; rates are fractions in [0, 1].
    The CSV writer round-trips every field exactly.
    """

    policy: str = ""
    seed: int = 0
    mb_generated: int = 0
    mb_untriggered: int = 0
    pipelines_triggered: int = 0
    pipelines_completed: int = 0
    pipelines_failed: int = 0
    success_rate: float = 0.0
    failure_rate: float = 0.0
    total_cost: float = 0.0
    successful_cost: float = 0.0
    wasted_cost: float = 0.0
    avg_cost_per_successful_pipeline: float = 0.0
    tasks_triggered: int = 0
    tasks_completed_edge: int = 0
    tasks_completed_fog: int = 0
    tasks_completed_cloud: int = 0
    tasks_failed: int = 0
    frac_edge: float = 0.0
    frac_fog: float = 0.0
    frac_cloud: float = 0.0
    edge_failures: int = 0
    tasks_per_minute: list = field(default_factory=list)
    per_dag_latency: dict = field(default_factory=dict)

    def finalize(self):
        total_pipes = self.pipelines_completed + self.pipelines_failed
        if total_pipes:
            self.success_rate = self.pipelines_completed / total_pipes
            self.failure_rate = self.pipelines_failed / total_pipes
        done = self.tasks_completed_edge + self.tasks_completed_fog + self.tasks_completed_cloud
        if done:
            self.frac_edge = self.tasks_completed_edge / done
            self.frac_fog = self.tasks_completed_fog / done
            self.frac_cloud = self.tasks_completed_cloud / done
        if self.pipelines_completed:
            self.avg_cost_per_successful_pipeline = self.successful_cost / self.pipelines_completed
        return self

    def to_row(self) -> dict:
        row = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (list, dict)):
                v = json.dumps(v, sort_keys=True)
            row[f.name] = v
        return row

    @classmethod
    def from_row(cls, row: dict) -> "MetricsReport":
        kwargs = {}
        for f in fields(cls):
            raw = row[f.name]
            if f.type == "int":
                kwargs[f.name] = int(raw)
            elif f.type == "float":
                kwargs[f.name] = float(raw)
            elif f.type in ("list", "dict"):
                kwargs[f.name] = json.loads(raw) if isinstance(raw, str) else raw
            else:
                kwargs[f.name] = raw
        return cls(**kwargs)


def audit_report(report: MetricsReport, atol: float = 1e-9):
    """Conservation checks every run must satisfy."""
    if report.pipelines_completed + report.pipelines_failed != report.pipelines_triggered:
        raise AuditError(
            f"pipeline conservation broken: {report.pipelines_completed} + "
            f"{report.pipelines_failed} != {report.pipelines_triggered}"
        )
    done = (report.tasks_completed_edge + report.tasks_completed_fog
            + report.tasks_completed_cloud + report.tasks_failed)
    if done != report.tasks_triggered:
        raise AuditError(
            f"task conservation broken: {done} terminal states for "
            f"{report.tasks_triggered} triggered tasks"
        )
    if abs(report.successful_cost + report.wasted_cost - report.total_cost) > atol:
        raise AuditError("cost split does not sum to the total")


def recompute_costs_from_trace(trace) -> float:
    """Independent cost total summed from per-event billing records."""
    total = 0.0
    for entry in trace:
        total += entry.get("cost", 0.0)
    return total
