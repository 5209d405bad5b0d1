"""Pure-Python reservation timeline for one fog.

Reservations are half-open intervals [start, start+dur) on the fog's future
timeline.  Primary slots never share time with anything; backup slots may
stack up to `backup_share_cap` deep on top of each other (the
over-subscription knob), but never under a primary.

Placement is worst-fit over the free intervals for the requested kind; when
nothing fits, neighbours of each free interval are slid within their own
[earliest_start, latest_end] bounds to widen it (successor as far future as
possible, then predecessor as far past as possible), largest interval first.
All moves of a failed attempt are rolled back.

The compiled backend in _core_cy.pyx implements the same algorithm; keep
the two in lockstep (tests assert identical behaviour on random workloads).
"""

from __future__ import annotations

INF = float("inf")

PRIMARY = 0
BACKUP = 1


class CalendarCore:
    def __init__(self, backup_share_cap: int = 1):
        self.cap = max(1, int(backup_share_cap))
        self._next_rid = 0
        self._rids = []
        self._starts = []
        self._durs = []
        self._omegas = []
        self._sigmas = []
        self._kinds = []
        self._locked = []
        self._index = {}  # rid -> position in the parallel lists

    def __len__(self):
        return len(self._rids)

    # -- accessors ---------------------------------------------------------

    def contains(self, rid):
        return rid in self._index

    def start_of(self, rid):
        return self._starts[self._index[rid]]

    def end_of(self, rid):
        i = self._index[rid]
        return self._starts[i] + self._durs[i]

    def kind_of(self, rid):
        return self._kinds[self._index[rid]]

    def lock(self, rid):
        """Freeze a reservation (its timer fired); it can no longer slide."""
        self._locked[self._index[rid]] = 1

    def snapshot(self):
        rows = [
            (self._rids[i], self._starts[i], self._durs[i], self._omegas[i],
             self._sigmas[i], self._kinds[i], self._locked[i])
            for i in range(len(self._rids))
        ]
        rows.sort()
        return rows

    # -- free / blocked geometry -------------------------------------------

    def _blocked(self, kind, exclude: int = -1):
        """Merged intervals where a reservation of `kind` cannot sit.

        `exclude` skips one list position (used when sliding that entry).
        """
        hard = []       # primaries always block; for a primary, everything blocks
        backups = []
        n = len(self._rids)
        for i in range(n):
            if i == exclude:
                continue
            s = self._starts[i]
            e = s + self._durs[i]
            if kind == PRIMARY or self._kinds[i] == PRIMARY:
                hard.append((s, e))
            else:
                backups.append((s, e))
        if kind == BACKUP and backups:
            # regions where existing backups already reach the sharing cap
            bounds = []
            for s, e in backups:
                bounds.append((s, 1))
                bounds.append((e, -1))
            bounds.sort()
            depth = 0
            region_start = 0.0
            i = 0
            nb = len(bounds)
            while i < nb:
                t = bounds[i][0]
                d = 0
                while i < nb and bounds[i][0] == t:
                    d += bounds[i][1]
                    i += 1
                new_depth = depth + d
                if depth < self.cap <= new_depth:
                    region_start = t
                elif new_depth < self.cap <= depth:
                    hard.append((region_start, t))
                depth = new_depth
        if not hard:
            return []
        hard.sort()
        merged = [hard[0]]
        for s, e in hard[1:]:
            ls, le = merged[-1]
            if s <= le:
                if e > le:
                    merged[-1] = (ls, e)
            else:
                merged.append((s, e))
        return merged

    def free_slots(self, kind, now):
        """Free intervals for `kind` in [now, inf); the last one is unbounded."""
        out = []
        cursor = now
        for s, e in self._blocked(kind):
            if e <= cursor:
                continue
            if s > cursor:
                out.append((cursor, s))
            cursor = max(cursor, e)
        out.append((cursor, INF))
        return out

    def exclusive_free(self, now):
        """Free intervals treating every reservation as blocking (report view)."""
        return self.free_slots(PRIMARY, now)

    def top_free(self, k, now):
        """Top-k free intervals of the exclusive view, longest first."""
        slots = self.exclusive_free(now)
        slots.sort(key=lambda se: (-(se[1] - se[0]), se[0]))
        return slots[:k]

    # -- placement -----------------------------------------------------------

    def _fit_start(self, slot_s, slot_e, duration, omega, sigma):
        start = slot_s if slot_s > omega else omega
        if start + duration <= slot_e and start + duration <= sigma:
            return start
        return None

    def reserve(self, kind, duration, omega, sigma, now):
        """Worst-fit placement; retries once after defragmentation.

        Returns (rid, start, moved) where `moved` lists (rid, new_start)
        pairs of reservations slid by defragmentation, or None if the window
        cannot be satisfied (calendar left untouched in that case).
        """
        if duration <= 0 or omega >= sigma or omega + duration > sigma:
            return None
        slots = self.free_slots(kind, now)
        slots.sort(key=lambda se: (-(se[1] - se[0]), se[0]))
        for s, e in slots:
            start = self._fit_start(s, e, duration, omega, sigma)
            if start is not None:
                rid = self._place(kind, start, duration, omega, sigma)
                return rid, start, []
        got = self.defragment(kind, duration, omega, sigma, now)
        if got is None:
            return None
        (ws, we), moved = got
        start = self._fit_start(ws, we, duration, omega, sigma)
        rid = self._place(kind, start, duration, omega, sigma)
        return rid, start, moved

    def _place(self, kind, start, duration, omega, sigma):
        rid = self._next_rid
        self._next_rid += 1
        self._index[rid] = len(self._rids)
        self._rids.append(rid)
        self._starts.append(start)
        self._durs.append(duration)
        self._omegas.append(omega)
        self._sigmas.append(sigma)
        self._kinds.append(kind)
        self._locked.append(0)
        return rid

    def release(self, rid):
        i = self._index.pop(rid)
        last = len(self._rids) - 1
        if i != last:
            for arr in (self._rids, self._starts, self._durs, self._omegas,
                        self._sigmas, self._kinds, self._locked):
                arr[i] = arr[last]
            self._index[self._rids[i]] = i
        for arr in (self._rids, self._starts, self._durs, self._omegas,
                    self._sigmas, self._kinds, self._locked):
            arr.pop()

    # -- defragmentation -----------------------------------------------------

    def _slide_right_limit(self, i, now):
        """Largest start this entry could take by sliding continuously right."""
        if self._locked[i]:
            return self._starts[i]
        dur = self._durs[i]
        bound = self._sigmas[i] - dur
        cur_end = self._starts[i] + dur
        for s, e in self._blocked(self._kinds[i], exclude=i):
            if s >= cur_end:
                if s - dur < bound:
                    bound = s - dur
                break
        return bound if bound > self._starts[i] else self._starts[i]

    def _slide_left_limit(self, i, now):
        """Smallest start this entry could take by sliding continuously left."""
        if self._locked[i]:
            return self._starts[i]
        bound = self._omegas[i] if self._omegas[i] > now else now
        cur_start = self._starts[i]
        prev_end = -INF
        for s, e in self._blocked(self._kinds[i], exclude=i):
            if e <= cur_start:
                if e > prev_end:
                    prev_end = e
            else:
                break
        if prev_end > bound:
            bound = prev_end
        return bound if bound < cur_start else cur_start

    def _covering(self, kind, point):
        """List positions whose entry both covers `point` and blocks `kind` there."""
        hits = []
        backup_hits = []
        for i in range(len(self._rids)):
            s = self._starts[i]
            if s <= point < s + self._durs[i]:
                if kind == PRIMARY or self._kinds[i] == PRIMARY:
                    hits.append(i)
                else:
                    backup_hits.append(i)
        if kind == BACKUP and len(backup_hits) >= self.cap:
            hits.extend(backup_hits)
        return hits

    def _move(self, i, new_start, moved):
        moved.append((self._rids[i], self._starts[i]))
        self._starts[i] = new_start

    def _rollback(self, moved):
        while moved:
            rid, old = moved.pop()
            self._starts[self._index[rid]] = old

    def _containing_free(self, kind, point, now):
        for s, e in self.free_slots(kind, now):
            if s <= point < e:
                return s, e
        return None

    def defragment(self, kind, needed, omega, sigma, now):
        """Try to widen a free interval inside [omega, sigma] to >= needed.

        On success the slides are committed and ((t, t'), moved) is returned
        with the widened free interval clipped to the window; on failure the
        calendar is exactly as before and None is returned.
        """
        slots = []
        for s, e in self.free_slots(kind, now):
            cs = s if s > omega else omega
            ce = e if e < sigma else sigma
            if ce > cs:
                slots.append((ce - cs, cs, s, e))
        slots.sort(key=lambda t: (-t[0], t[1]))
        for _, probe, raw_s, raw_e in slots:
            moved = []
            # slide the successor as far future as possible
            if raw_e < INF:
                best = -1
                best_gain = 0.0
                for i in self._covering(kind, raw_e):
                    gain = self._slide_right_limit(i, now) - self._starts[i]
                    if gain > best_gain or (gain == best_gain and gain > 0.0
                                            and (best < 0 or self._rids[i] < self._rids[best])):
                        best = i
                        best_gain = gain
                if best >= 0 and best_gain > 0.0:
                    self._move(best, self._starts[best] + best_gain, moved)
                    got = self._try_window(kind, probe, needed, omega, sigma, now)
                    if got is not None:
                        return got, moved
            # also slide the predecessor as far past as possible
            if raw_s > now:
                best = -1
                best_gain = 0.0
                for i in self._covering(kind, raw_s - 1e-12):
                    gain = self._starts[i] - self._slide_left_limit(i, now)
                    if gain > best_gain or (gain == best_gain and gain > 0.0
                                            and (best < 0 or self._rids[i] < self._rids[best])):
                        best = i
                        best_gain = gain
                if best >= 0 and best_gain > 0.0:
                    self._move(best, self._starts[best] - best_gain, moved)
            if moved:
                got = self._try_window(kind, probe, needed, omega, sigma, now)
                if got is not None:
                    return got, moved
                self._rollback(moved)
        return None

    def _try_window(self, kind, probe, needed, omega, sigma, now):
        found = self._containing_free(kind, probe, now)
        if found is None:
            return None
        ws, we = found
        cs = ws if ws > omega else omega
        ce = we if we < sigma else sigma
        if ce - cs >= needed and self._fit_start(ws, we, needed, omega, sigma) is not None:
            return cs, ce
        return None
