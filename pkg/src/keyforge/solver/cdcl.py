"""Embedded CDCL SAT engine.

Two-watched-literal propagation, first-UIP learning with recursive clause
minimization, VSIDS-style activity ordering with phase saving, Luby restarts
and LBD-driven learned-clause reduction.  The engine is incremental: clauses
may be added between ``solve`` calls and learned clauses are kept.

Internally a literal is ``2*var + sign`` (sign 1 = negated); the public
interface speaks DIMACS integers.
"""

from __future__ import annotations

import heapq
import random
import time
from dataclasses import dataclass
from typing import Iterable, Sequence


class _Clause(list):
    __slots__ = ("learnt", "lbd", "act", "keep")


@dataclass
class Stats:
    conflicts: int = 0
    decisions: int = 0
    propagations: int = 0
    restarts: int = 0
    learned: int = 0
    learned_literals: int = 0

    def copy(self) -> Stats:
        return Stats(**vars(self))

    def minus(self, other: Stats) -> Stats:
        return Stats(**{k: v - getattr(other, k) for k, v in vars(self).items()})


def luby(y: float, x: int) -> float:
    size, seq = 1, 0
    while size < x + 1:
        seq += 1
        size = 2 * size + 1
    while size - 1 != x:
        size = (size - 1) >> 1
        seq -= 1
        x = x % size
    return y**seq


def _to_int(lit: int) -> int:
    return (lit << 1) if lit > 0 else ((-lit) << 1) | 1


def _to_dimacs(lit: int) -> int:
    v = lit >> 1
    return -v if lit & 1 else v


class CDCLSolver:
    """Incremental CDCL solver.

    ``solve`` returns ``True`` (SAT), ``False`` (UNSAT) or ``None`` when the
    conflict budget or deadline ran out.
    """

    def __init__(
        self,
        num_vars: int = 0,
        *,
        seed: int = 0,
        var_decay: float = 0.95,
        clause_decay: float = 0.999,
        restart_base: int = 100,
        first_reduce: int = 2000,
        reduce_increment: int = 300,
        export_max_len: int = 8,
        export_max_lbd: int = 4,
    ):
        self.num_vars = 0
        self.assign: list[int] = [0, 0]
        self.level: list[int] = [0]
        self.reason: list[_Clause | None] = [None]
        self.activity: list[float] = [0.0]
        self.phase: list[int] = [1]
        self.seen: list[int] = [0]
        self.watches: list[list[_Clause]] = [[], []]
        self.trail: list[int] = []
        self.trail_lim: list[int] = []
        self.qhead = 0
        self.clauses: list[_Clause] = []
        self.learnts: list[_Clause] = []
        self.ok = True
        self.heap: list[tuple[float, int]] = []
        self.var_inc = 1.0
        self.var_decay = var_decay
        self.cla_inc = 1.0
        self.clause_decay = clause_decay
        self.restart_base = restart_base
        self.first_reduce = first_reduce
        self.next_reduce = first_reduce
        self.reduce_increment = reduce_increment
        self.export_max_len = export_max_len
        self.export_max_lbd = export_max_lbd
        self.stats = Stats()
        self.model: list[bool] | None = None
        self.rng = random.Random(seed) if seed else None
        self._pending_export: list[_Clause] = []
        self.ensure_vars(num_vars)

    # ------------------------------------------------------------------ setup

    def ensure_vars(self, n: int) -> None:
        grow = n - self.num_vars
        if grow <= 0:
            return
        self.assign.extend([0] * (2 * grow))
        self.level.extend([0] * grow)
        self.reason.extend([None] * grow)
        if self.rng is None:
            self.activity.extend([0.0] * grow)
        else:
            self.activity.extend(self.rng.random() * 1e-5 for _ in range(grow))
        self.phase.extend([1] * grow)
        self.seen.extend([0] * grow)
        self.watches.extend([] for _ in range(2 * grow))
        for v in range(self.num_vars + 1, n + 1):
            self.heap.append((-self.activity[v], v))
        heapq.heapify(self.heap)
        self.num_vars = n

    def add_clause(self, lits: Iterable[int]) -> bool:
        """Add a permanent clause (DIMACS literals).  Returns ``False`` once UNSAT."""
        if not self.ok:
            return False
        self._cancel_until(0)
        assign = self.assign
        out = []
        seen = set()
        for d in lits:
            if d == 0:
                raise ValueError("literal 0")
            if abs(d) > self.num_vars:
                self.ensure_vars(abs(d))
            lit = _to_int(d)
            if lit in seen:
                continue
            if lit ^ 1 in seen or assign[lit] == 1:
                return True
            seen.add(lit)
            if assign[lit] == 0:
                out.append(lit)
        if not out:
            self.ok = False
            return False
        if len(out) == 1:
            self._enqueue(out[0], None)
            if self._propagate() is not None:
                self.ok = False
            return self.ok
        c = _Clause(out)
        c.learnt = False
        c.lbd = 0
        c.act = 0.0
        c.keep = True
        self.clauses.append(c)
        self.watches[out[0]].append(c)
        self.watches[out[1]].append(c)
        return True

    # -------------------------------------------------------------- internals

    def _enqueue(self, lit: int, reason) -> None:
        v = lit >> 1
        self.assign[lit] = 1
        self.assign[lit ^ 1] = -1
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.trail.append(lit)

    def _propagate(self):
        assign = self.assign
        watches = self.watches
        trail = self.trail
        level = self.level
        reason = self.reason
        dl = len(self.trail_lim)
        qhead = self.qhead
        confl = None
        while qhead < len(trail):
            false_lit = trail[qhead] ^ 1
            qhead += 1
            ws = watches[false_lit]
            n = len(ws)
            i = j = 0
            while i < n:
                c = ws[i]
                i += 1
                first = c[0]
                if first == false_lit:
                    first = c[1]
                    c[0] = first
                    c[1] = false_lit
                if assign[first] == 1:
                    ws[j] = c
                    j += 1
                    continue
                for k in range(2, len(c)):
                    lk = c[k]
                    if assign[lk] != -1:
                        c[1] = lk
                        c[k] = false_lit
                        watches[lk].append(c)
                        break
                else:
                    ws[j] = c
                    j += 1
                    if assign[first] == -1:
                        confl = c
                        while i < n:
                            ws[j] = ws[i]
                            j += 1
                            i += 1
                    else:
                        v = first >> 1
                        assign[first] = 1
                        assign[first ^ 1] = -1
                        level[v] = dl
                        reason[v] = c
                        trail.append(first)
            del ws[j:]
            if confl is not None:
                break
        self.stats.propagations += qhead - self.qhead
        self.qhead = qhead
        return confl

    def _cancel_until(self, lvl: int) -> None:
        if len(self.trail_lim) <= lvl:
            return
        lim = self.trail_lim[lvl]
        assign = self.assign
        reason = self.reason
        phase = self.phase
        act = self.activity
        heap = self.heap
        push = heapq.heappush
        for lit in self.trail[lim:]:
            v = lit >> 1
            assign[lit] = 0
            assign[lit ^ 1] = 0
            reason[v] = None
            phase[v] = lit & 1
            push(heap, (-act[v], v))
        del self.trail[lim:]
        del self.trail_lim[lvl:]
        if self.qhead > lim:
            self.qhead = lim
        if len(heap) > 4 * self.num_vars + 1000:
            self._rebuild_heap()

    def _rebuild_heap(self) -> None:
        act = self.activity
        assign = self.assign
        self.heap = [(-act[v], v) for v in range(1, self.num_vars + 1) if assign[v << 1] == 0]
        heapq.heapify(self.heap)

    def _bump_var(self, v: int) -> None:
        act = self.activity
        act[v] += self.var_inc
        if act[v] > 1e100:
            for u in range(1, self.num_vars + 1):
                act[u] *= 1e-100
            self.var_inc *= 1e-100
            self._rebuild_heap()
        elif self.assign[v << 1] == 0:
            heapq.heappush(self.heap, (-act[v], v))

    def _bump_clause(self, c: _Clause) -> None:
        c.act += self.cla_inc
        if c.act > 1e20:
            for d in self.learnts:
                d.act *= 1e-20
            self.cla_inc *= 1e-20

    def _pick_branch(self) -> int | None:
        heap = self.heap
        assign = self.assign
        act = self.activity
        pop = heapq.heappop
        while heap:
            a, v = pop(heap)
            if assign[v << 1] != 0 or -a != act[v]:
                continue
            return (v << 1) | self.phase[v]
        return None

    def _analyze(self, confl: _Clause) -> tuple[list[int], int, int]:
        seen = self.seen
        level = self.level
        reason = self.reason
        trail = self.trail
        dl = len(self.trail_lim)
        learnt = [0]
        path = 0
        p = -1
        idx = len(trail) - 1
        to_clear = []
        while True:
            if confl.learnt:
                self._bump_clause(confl)
            for q in confl if p == -1 else confl[1:]:
                v = q >> 1
                if not seen[v] and level[v] > 0:
                    seen[v] = 1
                    to_clear.append(v)
                    self._bump_var(v)
                    if level[v] >= dl:
                        path += 1
                    else:
                        learnt.append(q)
            while not seen[trail[idx] >> 1]:
                idx -= 1
            p = trail[idx]
            idx -= 1
            confl = reason[p >> 1]
            seen[p >> 1] = 0
            path -= 1
            if path == 0:
                break
        learnt[0] = p ^ 1

        # recursive minimization
        abstract = 0
        for q in learnt[1:]:
            abstract |= 1 << (level[q >> 1] & 31)
        kept = [learnt[0]]
        for q in learnt[1:]:
            if reason[q >> 1] is None or not self._redundant(q, abstract, to_clear):
                kept.append(q)
        learnt = kept

        bt = 0
        if len(learnt) > 1:
            best = 1
            for i in range(2, len(learnt)):
                if level[learnt[i] >> 1] > level[learnt[best] >> 1]:
                    best = i
            learnt[1], learnt[best] = learnt[best], learnt[1]
            bt = level[learnt[1] >> 1]
        lbd = len({level[q >> 1] for q in learnt})
        for v in to_clear:
            seen[v] = 0
        return learnt, bt, lbd

    def _redundant(self, p: int, abstract: int, to_clear: list[int]) -> bool:
        seen = self.seen
        level = self.level
        reason = self.reason
        stack = [p]
        top = len(to_clear)
        while stack:
            c = reason[stack.pop() >> 1]
            for q in c[1:]:
                v = q >> 1
                if seen[v] or level[v] == 0:
                    continue
                if reason[v] is not None and (1 << (level[v] & 31)) & abstract:
                    seen[v] = 1
                    stack.append(q)
                    to_clear.append(v)
                else:
                    for u in to_clear[top:]:
                        seen[u] = 0
                    del to_clear[top:]
                    return False
        return True

    def _reduce_db(self) -> None:
        reason = self.reason
        assign = self.assign

        def locked(c):
            return reason[c[0] >> 1] is c and assign[c[0]] == 1

        cands = [c for c in self.learnts if not c.keep and c.lbd > 2 and not locked(c)]
        cands.sort(key=lambda c: (-c.lbd, c.act))
        drop = {id(c) for c in cands[: len(cands) // 2]}
        if not drop:
            return
        self.learnts = [c for c in self.learnts if id(c) not in drop]
        watches = [[] for _ in range(2 * self.num_vars + 2)]
        for c in self.clauses:
            watches[c[0]].append(c)
            watches[c[1]].append(c)
        for c in self.learnts:
            watches[c[0]].append(c)
            watches[c[1]].append(c)
        self.watches = watches

    def _search(self, budget: int, assumptions: Sequence[int], conflict_limit: int | None, deadline: float | None):
        stats = self.stats
        conflicts_here = 0
        trail_lim = self.trail_lim
        assign = self.assign
        while True:
            confl = self._propagate()
            if confl is not None:
                stats.conflicts += 1
                conflicts_here += 1
                if not trail_lim:
                    self.ok = False
                    return False
                learnt, bt, lbd = self._analyze(confl)
                self._cancel_until(bt)
                stats.learned += 1
                stats.learned_literals += len(learnt)
                if len(learnt) == 1:
                    self._enqueue(learnt[0], None)
                else:
                    c = _Clause(learnt)
                    c.learnt = True
                    c.lbd = lbd
                    c.act = 0.0
                    c.keep = False
                    self._bump_clause(c)
                    self.learnts.append(c)
                    self.watches[learnt[0]].append(c)
                    self.watches[learnt[1]].append(c)
                    self._enqueue(learnt[0], c)
                    if len(learnt) <= self.export_max_len and lbd <= self.export_max_lbd:
                        self._pending_export.append(c)
                self.var_inc /= self.var_decay
                self.cla_inc /= self.clause_decay
                if conflict_limit is not None and stats.conflicts >= conflict_limit:
                    return None
                if deadline is not None and time.perf_counter() > deadline:
                    return None
                continue
            if conflicts_here >= budget:
                self._cancel_until(0)
                stats.restarts += 1
                return "restart"
            if stats.conflicts >= self.next_reduce:
                self.next_reduce = stats.conflicts + self.next_reduce_gap()
                self._reduce_db()
            nxt = -1
            while len(trail_lim) < len(assumptions):
                p = assumptions[len(trail_lim)]
                if assign[p] == 1:
                    trail_lim.append(len(self.trail))
                elif assign[p] == -1:
                    return False
                else:
                    nxt = p
                    break
            if nxt == -1:
                nxt = self._pick_branch()
                if nxt is None:
                    return True
                stats.decisions += 1
                if deadline is not None and not stats.decisions & 1023 and time.perf_counter() > deadline:
                    return None
            trail_lim.append(len(self.trail))
            self._enqueue(nxt, None)

    def next_reduce_gap(self) -> int:
        self._reduces = getattr(self, "_reduces", 0) + 1
        return self.first_reduce + self.reduce_increment * self._reduces

    # -------------------------------------------------------------- public

    def solve(
        self,
        assumptions: Sequence[int] = (),
        conflict_limit: int | None = None,
        deadline: float | None = None,
    ) -> bool | None:
        """Solve under ``assumptions`` (DIMACS literals).

        ``conflict_limit`` counts conflicts over this call; ``deadline`` is a
        ``time.perf_counter()`` value.
        """
        self.model = None
        if not self.ok:
            return False
        self._cancel_until(0)
        if self._propagate() is not None:
            self.ok = False
            return False
        for d in assumptions:
            self.ensure_vars(abs(d))
        assumps = [_to_int(d) for d in assumptions]
        limit = None if conflict_limit is None else self.stats.conflicts + conflict_limit
        restarts = 0
        while True:
            status = self._search(int(luby(2, restarts) * self.restart_base), assumps, limit, deadline)
            if status != "restart":
                break
            restarts += 1
        if status is True:
            assign = self.assign
            self.model = [False] + [assign[v << 1] == 1 for v in range(1, self.num_vars + 1)]
        self._cancel_until(0)
        return status

    def take_exports(self) -> list[list[int]]:
        """Short, low-LBD clauses learned since the last call, as DIMACS lists.

        Exported clauses are pinned so database reduction never drops them.
        """
        out = []
        for c in self._pending_export:
            if c.keep:
                continue
            c.keep = True
            out.append([_to_dimacs(l) for l in c])
        self._pending_export = []
        return out

    def model_dict(self) -> dict[int, bool] | None:
        if self.model is None:
            return None
        return {v: self.model[v] for v in range(1, self.num_vars + 1)}

    def value(self, d: int) -> bool | None:
        if self.model is None:
            return None
        b = self.model[abs(d)]
        return b if d > 0 else not b
