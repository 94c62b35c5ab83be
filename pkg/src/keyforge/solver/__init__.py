"""Solver backends: the embedded CDCL engine and external DIMACS solvers."""

from __future__ import annotations

import os
import resource
import shlex
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..cnf import CnfFormula, parse_solver_output, to_dimacs
from ..errors import MalformedOutput, SessionClosed, SolverError, SpawnFailure
from .cdcl import CDCLSolver, Stats

SAT, UNSAT, TIMEOUT, ERROR = "SAT", "UNSAT", "TIMEOUT", "ERROR"

# Set by the test suite: every SAT model is re-checked against its formula.
CHECK_MODELS = os.environ.get("KEYFORGE_CHECK_MODELS", "") not in ("", "0")

_POLL = 0.005


@dataclass
class ResourceReport:
    wall_time: float = 0.0
    peak_memory: int = 0
    conflicts: int | None = None
    decisions: int | None = None
    propagations: int | None = None
    restarts: int | None = None
    learned: int | None = None
    mean_learned_len: float | None = None


@dataclass
class SolveResult:
    status: str
    model: dict[int, bool] | None = None
    learned: list[list[int]] | None = None
    resources: ResourceReport = field(default_factory=ResourceReport)

    @property
    def sat(self) -> bool:
        return self.status == SAT


@dataclass(frozen=True)
class BackendSpec:
    """How to solve: ``kind`` is ``"embedded"`` or ``"external"``.

    External commands are argument lists containing a ``{cnf}`` placeholder,
    e.g. ``("minisat", "{cnf}")``.  ``timeout`` is in seconds.
    """

    kind: str = "embedded"
    command: tuple[str, ...] = ()
    timeout: float | None = None
    name: str = ""
    seed: int = 0

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.kind == "embedded":
            return "embedded"
        return os.path.basename(self.command[0]) if self.command else "external"

    def check(self) -> None:
        if self.kind == "embedded":
            return
        if self.kind != "external":
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if not self.command:
            raise SpawnFailure("external backend has an empty command")
        exe = self.command[0]
        if not (os.path.isabs(exe) and os.access(exe, os.X_OK)) and shutil.which(exe) is None:
            raise SpawnFailure(f"solver executable {exe!r} not found")


def backend_from_string(text: str, timeout: float | None = None) -> BackendSpec:
    """``"embedded"`` or a shell-style command line (``{cnf}`` appended if absent)."""
    if text.strip() in ("", "embedded"):
        return BackendSpec("embedded", timeout=timeout)
    cmd = shlex.split(text)
    if not any("{cnf}" in a for a in cmd):
        cmd.append("{cnf}")
    return BackendSpec("external", tuple(cmd), timeout)


def _self_peak_bytes() -> int:
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024


def _check_model(clauses: Iterable[Sequence[int]], model: dict[int, bool]) -> None:
    for c in clauses:
        if not any(model.get(abs(l), False) == (l > 0) for l in c):
            raise SolverError(f"model violates clause {list(c)}")


def _report(stats: Stats, wall: float) -> ResourceReport:
    return ResourceReport(
        wall_time=wall,
        peak_memory=_self_peak_bytes(),
        conflicts=stats.conflicts,
        decisions=stats.decisions,
        propagations=stats.propagations,
        restarts=stats.restarts,
        learned=stats.learned,
        mean_learned_len=(stats.learned_literals / stats.learned) if stats.learned else 0.0,
    )


def solve_embedded(
    f: CnfFormula,
    assumptions: Sequence[int] = (),
    *,
    conflict_limit: int | None = None,
    timeout: float | None = None,
    seed: int = 0,
) -> SolveResult:
    """Solve ``f`` from scratch with the embedded engine."""
    start = time.perf_counter()
    s = CDCLSolver(f.num_vars, seed=seed)
    for c in f.clauses:
        if not s.add_clause(c):
            break
    deadline = None if timeout is None else start + timeout
    status = s.solve(assumptions, conflict_limit=conflict_limit, deadline=deadline)
    wall = time.perf_counter() - start
    res = _result(s, status, s.stats, wall)
    if CHECK_MODELS and res.model is not None:
        _check_model(f.clauses, res.model)
        _check_model([[a] for a in assumptions], res.model)
    return res


def _result(s: CDCLSolver, status, stats: Stats, wall: float) -> SolveResult:
    report = _report(stats, wall)
    if status is None:
        return SolveResult(TIMEOUT, resources=report)
    learned = s.take_exports()
    if status:
        return SolveResult(SAT, s.model_dict(), learned, report)
    return SolveResult(UNSAT, None, learned, report)


class IncrementalSession:
    """An embedded solver kept alive across calls, retaining learned clauses."""

    def __init__(self, num_vars: int = 0, seed: int = 0):
        self._solver = CDCLSolver(num_vars, seed=seed)
        self._closed = False
        self._all: list[list[int]] | None = [] if CHECK_MODELS else None
        self.calls = 0

    @property
    def solver(self) -> CDCLSolver:
        return self._solver

    def add_clauses(self, clauses: Iterable[Sequence[int]]) -> None:
        if self._closed:
            raise SessionClosed("session is closed")
        s = self._solver
        for c in clauses:
            if self._all is not None:
                self._all.append(list(c))
            s.add_clause(c)

    def solve(
        self,
        new_clauses: Iterable[Sequence[int]] = (),
        assumptions: Sequence[int] = (),
        *,
        conflict_limit: int | None = None,
        timeout: float | None = None,
        deadline: float | None = None,
    ) -> SolveResult:
        if self._closed:
            raise SessionClosed("session is closed")
        start = time.perf_counter()
        self.add_clauses(new_clauses)
        before = self._solver.stats.copy()
        if timeout is not None:
            d = start + timeout
            deadline = d if deadline is None else min(deadline, d)
        status = self._solver.solve(assumptions, conflict_limit=conflict_limit, deadline=deadline)
        self.calls += 1
        res = _result(self._solver, status, self._solver.stats.minus(before), time.perf_counter() - start)
        if self._all is not None and res.model is not None:
            _check_model(self._all, res.model)
            _check_model([[a] for a in assumptions], res.model)
        return res

    def close(self) -> None:
        self._closed = True
        self._solver = None  # type: ignore[assignment]

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def solve_incremental(session: IncrementalSession, new_clauses=(), assumptions=(), **kw) -> SolveResult:
    return session.solve(new_clauses, assumptions, **kw)


def solve_external(f: CnfFormula, spec: BackendSpec) -> SolveResult:
    """Run an external solver on ``f`` and parse its competition-format output.

    Peak memory is the child's maximum resident set size as reported by
    ``wait4``.  The child is killed when ``spec.timeout`` elapses.
    """
    spec.check()
    with tempfile.TemporaryDirectory(prefix="keyforge-") as tmp:
        cnf_path = os.path.join(tmp, "formula.cnf")
        out_path = os.path.join(tmp, "solver.out")
        with open(cnf_path, "w") as fh:
            fh.write(to_dimacs(f))
        argv = [a.replace("{cnf}", cnf_path) for a in spec.command]
        start = time.perf_counter()
        with open(out_path, "w") as out:
            try:
                proc = subprocess.Popen(argv, stdout=out, stderr=subprocess.DEVNULL, stdin=subprocess.DEVNULL)
            except OSError as exc:
                raise SpawnFailure(f"cannot start {argv[0]!r}: {exc}") from exc
            timed_out = False
            while True:
                pid, status, usage = os.wait4(proc.pid, os.WNOHANG)
                if pid:
                    break
                if spec.timeout is not None and time.perf_counter() - start > spec.timeout:
                    proc.kill()
                    pid, status, usage = os.wait4(proc.pid, 0)
                    timed_out = True
                    break
                time.sleep(_POLL)
            proc.returncode = os.waitstatus_to_exitcode(status)
        wall = time.perf_counter() - start
        report = ResourceReport(wall_time=wall, peak_memory=usage.ru_maxrss * 1024)
        if timed_out:
            return SolveResult(TIMEOUT, resources=report)
        with open(out_path) as fh:
            text = fh.read()
    code = proc.returncode
    try:
        parsed = parse_solver_output(text, code)
    except MalformedOutput:
        if code not in (0, 10, 20):
            raise SpawnFailure(f"{argv[0]!r} exited with status {code}") from None
        raise
    if parsed.status == "UNKNOWN":
        return SolveResult(ERROR, resources=report)
    if parsed.status == "SAT":
        model = {v: parsed.model.get(v, False) for v in range(1, f.num_vars + 1)}
        if CHECK_MODELS:
            _check_model(f.clauses, model)
        return SolveResult(SAT, model, None, report)
    return SolveResult(UNSAT, None, None, report)


def solve(f: CnfFormula, backend: BackendSpec, assumptions: Sequence[int] = (), timeout: float | None = None) -> SolveResult:
    """Dispatch a one-shot solve to ``backend``."""
    timeout = backend.timeout if timeout is None else timeout
    if backend.kind == "embedded":
        return solve_embedded(f, assumptions, timeout=timeout, seed=backend.seed)
    if assumptions:
        f = CnfFormula(f.num_vars, list(f.clauses) + [[a] for a in assumptions])
    spec = BackendSpec(backend.kind, backend.command, timeout, backend.name, backend.seed)
    return solve_external(f, spec)


__all__ = [
    "SAT",
    "UNSAT",
    "TIMEOUT",
    "ERROR",
    "BackendSpec",
    "CDCLSolver",
    "IncrementalSession",
    "ResourceReport",
    "SolveResult",
    "backend_from_string",
    "solve",
    "solve_embedded",
    "solve_external",
    "solve_incremental",
]
