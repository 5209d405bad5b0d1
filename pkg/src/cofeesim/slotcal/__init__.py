"""Fog reservation calendar: worst-fit slot placement with slide
defragmentation, optional backup-slot sharing, and a compiled core.

The heavy interval arithmetic lives in a small kernel with two
interchangeable implementations: `_core_cy` (Cython) and `_core_py`
(pure Python).  The compiled one is preferred when present; set
COFEESIM_PURE_CALENDAR=1 to force the fallback.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from ._core_py import BACKUP, INF, PRIMARY
from ._core_py import CalendarCore as _PyCore

if os.environ.get("COFEESIM_PURE_CALENDAR"):
    _Core = _PyCore
    BACKEND = "python"
else:
    try:
        from ._core_cy import CalendarCore as _CyCore

        _Core = _CyCore
        BACKEND = "cython"
    except ImportError:
        _Core = _PyCore
        BACKEND = "python"

TEMPORARY = "temporary"
PERMANENT = "permanent"


@dataclass
class Reservation:
    """Bookkeeping view of one calendar slot."""

    rid: int
    kind: int  # PRIMARY or BACKUP
    task_key: object
    earliest_start: float
    latest_end: float
    duration: float
    state: str = TEMPORARY


class SlotCalendar:
    """One fog's future timeline of primary/backup reservations."""

    def __init__(self, oversub_ratio: float = 1.0, core_cls=None):
        if oversub_ratio < 1.0:
            raise ValueError("over-subscription ratio must be >= 1")
        self.oversub_ratio = oversub_ratio
        cls = core_cls or _Core
        self._core = cls(int(oversub_ratio))
        self._meta: dict[int, Reservation] = {}

    def __len__(self):
        return len(self._meta)

    def reserve(self, kind, duration, earliest_start, latest_end, now, task_key=None):
        """Place a slot of `duration` inside [earliest_start, latest_end].

        Returns (Reservation, moved) or None; `moved` lists (rid, new_start)
        for reservations repositioned by defragmentation so callers can
        refresh any timers keyed on the old start.
        """
        got = self._core.reserve(kind, duration, earliest_start, latest_end, now)
        if got is None:
            return None
        rid, start, moved = got
        res = Reservation(rid, kind, task_key, earliest_start, latest_end, duration)
        self._meta[rid] = res
        return res, moved

    def defragment(self, kind, needed, earliest_start, latest_end, now):
        """Widen a free interval inside the window; see core docs."""
        return self._core.defragment(kind, needed, earliest_start, latest_end, now)

    def release(self, rid):
        if rid not in self._meta:
            raise KeyError(f"unknown reservation {rid}")
        del self._meta[rid]
        self._core.release(rid)

    def make_permanent(self, rid):
        self._meta[rid].state = PERMANENT

    def lock(self, rid):
        self._core.lock(rid)

    def contains(self, rid):
        return rid in self._meta

    def start_of(self, rid):
        return self._core.start_of(rid)

    def end_of(self, rid):
        return self._core.end_of(rid)

    def info(self, rid) -> Reservation:
        return self._meta[rid]

    def top_free(self, k, now):
        return self._core.top_free(k, now)

    def free_slots(self, kind, now):
        return self._core.free_slots(kind, now)

    def temporaries(self):
        return [r for r in self._meta.values() if r.state == TEMPORARY]

    def snapshot(self):
        return self._core.snapshot()


__all__ = [
    "BACKEND",
    "BACKUP",
    "INF",
    "PERMANENT",
    "PRIMARY",
    "Reservation",
    "SlotCalendar",
    "TEMPORARY",
]
