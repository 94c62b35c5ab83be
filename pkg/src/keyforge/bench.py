"""Benchmark harness: lock every circuit with every scheme and overhead, attack
each instance repeatedly, and summarise time, memory and iteration counts.

Every attack runs in its own worker process.  Finished records are appended to
a JSON-lines journal by the parent, so an interrupted matrix can be resumed.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import multiprocessing
import os
import statistics
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

from .attack import AttackLimits, sat_attack
from .corpus import default_corpus
from .errors import CorpusEmpty, EmptyInput, KeyforgeError, NoBackend
from .netlist import Circuit, c17, load_bench, load_corpus, parse_bench, write_bench
from .obfuscate import SCHEMES, lock
from .solver import BackendSpec, backend_from_string

DEFAULT_OVERHEADS = (1.0, 2.0, 3.0, 5.0, 10.0, 25.0)
DEFAULT_REPETITIONS = 15
SOLVED, TIMEOUT, ERROR = "solved", "timeout", "error"


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment matrix.

    ``circuits`` holds ``.bench`` files, directories of them, or the built-in
    sets ``@c17``, ``@corpus`` and ``@corpus:<count>``.
    """

    circuits: tuple[str, ...]
    schemes: tuple[str, ...] = SCHEMES
    overheads: tuple[float, ...] = DEFAULT_OVERHEADS
    backends: tuple[BackendSpec, ...] = (BackendSpec(),)
    repetitions: int = DEFAULT_REPETITIONS
    timeout: float = 3600.0
    seed: int = 0
    workers: int = 1
    pin_cpus: bool = False

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if not self.overheads:
            raise ValueError("overheads must not be empty")
        bad = set(self.schemes) - set(SCHEMES)
        if bad:
            raise ValueError(f"unknown schemes: {sorted(bad)}")


@dataclass(frozen=True)
class RunRecord:
    circuit: str
    scheme: str
    overhead: float
    backend: str
    repetition: int
    seed: int
    status: str
    wall_time: float
    peak_memory: int
    iterations: int
    mean_learned_len: float
    key_verified: bool

    @property
    def cell(self) -> tuple:
        return (self.circuit, self.scheme, self.overhead, self.backend, self.repetition)


RECORD_FIELDS = tuple(f.name for f in fields(RunRecord))


def cell_seed(base: int, circuit: str, scheme: str, overhead: float, backend: str, repetition: int) -> int:
    """Stable 31-bit seed for one repetition of one matrix cell."""
    text = f"{base}|{circuit}|{scheme}|{overhead:g}|{backend}|{repetition}"
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "big") >> 1


def resolve_circuits(entries: Iterable[str]) -> list[Circuit]:
    circuits: list[Circuit] = []
    for entry in entries:
        if entry == "@c17":
            circuits.append(c17())
        elif entry == "@corpus" or entry.startswith("@corpus:"):
            count = int(entry.split(":", 1)[1]) if ":" in entry else 20
            circuits.extend(default_corpus(count))
        elif Path(entry).is_dir():
            circuits.extend(load_corpus(entry))
        else:
            circuits.append(load_bench(entry))
    if not circuits:
        raise CorpusEmpty("the experiment names no circuits")
    names = [c.name for c in circuits]
    if len(set(names)) != len(names):
        raise CorpusEmpty("circuit names must be unique within an experiment")
    return circuits


def _tasks(spec: ExperimentSpec, circuits: Sequence[Circuit]) -> list[dict]:
    tasks = []
    for c in circuits:
        text = write_bench(c)
        for scheme in spec.schemes:
            for ov in spec.overheads:
                for b in spec.backends:
                    for r in range(spec.repetitions):
                        tasks.append(
                            {
                                "bench": text,
                                "circuit": c.name,
                                "scheme": scheme,
                                "overhead": float(ov),
                                "backend": b,
                                "repetition": r,
                                "seed": cell_seed(spec.seed, c.name, scheme, float(ov), b.label, r),
                                "timeout": spec.timeout,
                            }
                        )
    return tasks


def run_cell(task: dict) -> RunRecord:
    """Lock, attack and verify one instance; never raises for module errors."""
    backend: BackendSpec = task["backend"]
    base = dict(
        circuit=task["circuit"],
        scheme=task["scheme"],
        overhead=task["overhead"],
        backend=backend.label,
        repetition=task["repetition"],
        seed=task["seed"],
    )
    try:
        c = parse_bench(task["bench"], task["circuit"])
        lc = lock(c, task["scheme"], task["overhead"], seed=task["seed"])
        key, trace = sat_attack(lc, c, backend, AttackLimits(timeout=task["timeout"]))
    except KeyforgeError:
        return RunRecord(**base, status=ERROR, wall_time=0.0, peak_memory=0, iterations=0,
                         mean_learned_len=0.0, key_verified=False)
    status = SOLVED if key is not None else TIMEOUT
    return RunRecord(
        **base,
        status=status,
        wall_time=trace.total_time,
        peak_memory=trace.peak_memory,
        iterations=trace.iterations,
        mean_learned_len=round(trace.mean_learned_len, 6),
        key_verified=bool(key and key.verified),
    )


def _pin(counter) -> None:
    with counter.get_lock():
        slot = counter.value
        counter.value += 1
    cpus = sorted(os.sched_getaffinity(0))
    os.sched_setaffinity(0, {cpus[slot % len(cpus)]})


def read_journal(path: str | Path) -> list[RunRecord]:
    path = Path(path)
    if not path.exists():
        return []
    out = []
    for line in path.read_text().splitlines():
        if line.strip():
            try:
                out.append(RunRecord(**json.loads(line)))
            except (json.JSONDecodeError, TypeError):
                # a torn last line from an interrupted run
                continue
    return out


def run_matrix(spec: ExperimentSpec, journal: str | Path | None = None) -> list[RunRecord]:
    """Run every cell and repetition of ``spec``; records come back in matrix order.

    With a ``journal`` path, cells already recorded there are skipped and new
    records are appended as they finish.  ``workers=0`` runs in-process.
    """
    if not spec.backends:
        raise NoBackend("the experiment names no solver backend")
    for b in spec.backends:
        try:
            b.check()
        except KeyforgeError as exc:
            raise NoBackend(str(exc)) from exc
    circuits = resolve_circuits(spec.circuits)
    tasks = _tasks(spec, circuits)
    order = {(t["circuit"], t["scheme"], t["overhead"], t["backend"].label, t["repetition"]): i
             for i, t in enumerate(tasks)}
    done = {r.cell: r for r in read_journal(journal)} if journal else {}
    todo = [t for t in tasks if (t["circuit"], t["scheme"], t["overhead"], t["backend"].label, t["repetition"]) not in done]

    fh = open(journal, "a") if journal else None
    try:
        def record(r: RunRecord) -> None:
            done[r.cell] = r
            if fh:
                fh.write(json.dumps(asdict(r)) + "\n")
                fh.flush()

        if spec.workers <= 0:
            for t in todo:
                record(run_cell(t))
        elif todo:
            ctx = multiprocessing.get_context("fork" if hasattr(os, "fork") else "spawn")
            init, args = (None, ())
            if spec.pin_cpus and hasattr(os, "sched_setaffinity"):
                init, args = _pin, (ctx.Value("i", 0),)
            # one attack per process keeps peak-memory readings per attack
            with ctx.Pool(spec.workers, initializer=init, initargs=args, maxtasksperchild=1) as pool:
                for r in pool.imap_unordered(run_cell, todo):
                    record(r)
    finally:
        if fh:
            fh.close()
    return sorted((r for r in done.values() if r.cell in order), key=lambda r: order[r.cell])


# --------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class SummaryRow:
    view: str  # "all" (timeouts censored at the limit) or "solved-only"
    group_by: str  # "scheme" or "backend"
    group: str
    overhead: float
    runs: int
    solved: int
    timeouts: int
    errors: int
    censored: int  # timed-out runs counted at the limit
    time_sum: float
    time_median: float
    time_q1: float
    time_q3: float
    memory_sum: int
    memory_median: float
    memory_q1: float
    memory_q3: float
    iterations_median: float


@dataclass
class SummaryTable:
    rows: list[SummaryRow] = field(default_factory=list)
    censored_at: float | None = None

    def select(self, view: str = "all", group_by: str = "scheme") -> list[SummaryRow]:
        return [r for r in self.rows if r.view == view and r.group_by == group_by]

    def get(self, group: str, overhead: float, view: str = "all", group_by: str = "scheme") -> SummaryRow:
        for r in self.select(view, group_by):
            if r.group == group and r.overhead == overhead:
                return r
        raise KeyError((group, overhead, view, group_by))


def _quartiles(values: list[float]) -> tuple[float, float, float]:
    if len(values) == 1:
        return values[0], values[0], values[0]
    q1, q2, q3 = statistics.quantiles(values, n=4, method="inclusive")
    return q1, q2, q3


def _summarise(view: str, group_by: str, group: str, overhead: float, members: list[RunRecord],
               timeout: float | None) -> SummaryRow:
    times = []
    for r in members:
        t = r.wall_time
        if r.status == TIMEOUT and timeout is not None:
            t = timeout
        times.append(t)
    mems = [r.peak_memory for r in members]
    iters = [r.iterations for r in members]
    if members:
        tq1, tmed, tq3 = _quartiles(sorted(times))
        mq1, mmed, mq3 = _quartiles(sorted(mems))
        imed = statistics.median(iters)
    else:
        tq1 = tmed = tq3 = mq1 = mmed = mq3 = imed = 0.0
    return SummaryRow(
        view, group_by, group, overhead,
        runs=len(members),
        solved=sum(r.status == SOLVED for r in members),
        timeouts=sum(r.status == TIMEOUT for r in members),
        errors=sum(r.status == ERROR for r in members),
        censored=sum(r.status == TIMEOUT for r in members) if timeout is not None else 0,
        time_sum=math.fsum(times), time_median=tmed, time_q1=tq1, time_q3=tq3,
        memory_sum=sum(mems), memory_median=mmed, memory_q1=mq1, memory_q3=mq3,
        iterations_median=imed,
    )


def aggregate(records: Iterable[RunRecord], timeout: float | None = None) -> SummaryTable:
    """Sum, median and quartiles per (scheme, overhead) and per (backend, overhead).

    The ``all`` view counts timed-out runs at ``timeout`` seconds when given
    (censored); the ``solved-only`` view drops everything but solved runs.
    Error records carry zero time and memory.
    """
    records = list(records)
    if not records:
        raise EmptyInput("no records to aggregate")
    table = SummaryTable(censored_at=timeout)
    for group_by in ("scheme", "backend"):
        groups: dict[tuple[str, float], list[RunRecord]] = {}
        for r in records:
            groups.setdefault((getattr(r, group_by), r.overhead), []).append(r)
        for (g, ov) in sorted(groups):
            members = groups[(g, ov)]
            table.rows.append(_summarise("all", group_by, g, ov, members, timeout))
            solved = [r for r in members if r.status == SOLVED]
            table.rows.append(_summarise("solved-only", group_by, g, ov, solved, timeout))
    return table


# --------------------------------------------------------------------------
# output


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_csv(data: Sequence[RunRecord] | SummaryTable, redact_resources: bool = False) -> str:
    """RFC-4180 CSV of run records or of a summary table.

    ``redact_resources`` blanks the wall-time and memory columns, which are
    the only fields that vary between identical seeded runs.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    if isinstance(data, SummaryTable):
        names = [f.name for f in fields(SummaryRow)]
        rows = [asdict(r) for r in data.rows]
    else:
        data = list(data)
        if not data:
            raise EmptyInput("no records to write")
        names = list(RECORD_FIELDS)
        rows = [asdict(r) for r in data]
    w.writerow(names)
    for row in rows:
        if redact_resources:
            for k in ("wall_time", "peak_memory"):
                if k in row:
                    row[k] = ""
        w.writerow([_fmt(row[n]) if row[n] != "" else "" for n in names])
    return buf.getvalue()


_CASTS = {
    "overhead": float, "repetition": int, "seed": int, "wall_time": float, "peak_memory": int,
    "iterations": int, "mean_learned_len": float, "key_verified": lambda s: s == "true",
}


def read_csv(text: str) -> list[RunRecord]:
    """Inverse of :func:`emit_csv` for run records (redacted fields read as zero)."""
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for row in rows:
        vals = {}
        for name in RECORD_FIELDS:
            raw = row[name]
            if raw == "" and name in ("wall_time", "peak_memory"):
                raw = "0"
            vals[name] = _CASTS.get(name, str)(raw)
        out.append(RunRecord(**vals))
    return out


PLOT_KINDS = ("time", "backend", "memory")


def emit_plot(table: SummaryTable, kind: str = "time") -> str:
    """SVG chart from a summary table.

    ``time``: summed attack time against overhead, one line per scheme.
    ``backend``: summed time per backend, grouped bars per overhead.
    ``memory``: median peak memory against overhead, one line per scheme.
    """
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; expected one of {', '.join(PLOT_KINDS)}")
    if not table.rows:
        raise EmptyInput("empty summary table")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "keyforge"
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    if kind == "backend":
        rows = table.select("all", "backend")
        backends = sorted({r.group for r in rows})
        overheads = sorted({r.overhead for r in rows})
        width = 0.8 / max(1, len(backends))
        for j, b in enumerate(backends):
            xs = [i + j * width for i in range(len(overheads))]
            ys = [next((r.time_sum for r in rows if r.group == b and r.overhead == ov), 0.0) for ov in overheads]
            ax.bar(xs, ys, width, label=b)
        ax.set_xticks([i + 0.4 - width / 2 for i in range(len(overheads))], [f"{ov:g}%" for ov in overheads])
        ax.set_ylabel("total attack time [s]")
    else:
        rows = table.select("all", "scheme")
        for scheme in sorted({r.group for r in rows}):
            pts = sorted((r.overhead, r.time_sum if kind == "time" else r.memory_median / 2**20)
                         for r in rows if r.group == scheme)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=scheme)
        ax.set_xlabel("overhead [%]")
        ax.set_ylabel("total attack time [s]" if kind == "time" else "median peak memory [MiB]")
        if kind == "time":
            ax.set_yscale("symlog", linthresh=1e-2)
    ax.legend(fontsize="small")
    fig.tight_layout()
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


# --------------------------------------------------------------------------
# configuration


def _backend_from_config(item, timeout: float) -> BackendSpec:
    if isinstance(item, str):
        return backend_from_string(item, timeout)
    if isinstance(item, dict):
        kind = item.get("kind", "external" if item.get("command") else "embedded")
        cmd = item.get("command", ())
        if isinstance(cmd, str):
            cmd = backend_from_string(cmd).command
        return BackendSpec(kind, tuple(cmd), timeout, item.get("name", ""), int(item.get("seed", 0)))
    raise ValueError(f"cannot read backend entry {item!r}")


def load_config(path: str | Path) -> ExperimentSpec:
    """Read an experiment from a JSON document.

    Keys: ``circuits`` (required), ``schemes``, ``overheads``, ``backends``,
    ``repetitions``, ``timeout``, ``seed``, ``workers``, ``pin_cpus``.
    Relative circuit paths resolve against the config file's directory.
    """
    path = Path(path)
    doc = json.loads(path.read_text())
    return spec_from_dict(doc, base=path.parent)


def spec_from_dict(doc: dict, base: Path | None = None) -> ExperimentSpec:
    known = {"circuits", "schemes", "overheads", "backends", "repetitions", "timeout", "seed", "workers", "pin_cpus"}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "circuits" not in doc:
        raise ValueError("config needs a 'circuits' list")
    circuits = doc["circuits"]
    if isinstance(circuits, str):
        circuits = [circuits]
    resolved = []
    for entry in circuits:
        if not entry.startswith("@") and base is not None and not Path(entry).is_absolute():
            entry = str(base / entry)
        resolved.append(entry)
    timeout = float(doc.get("timeout", 3600.0))
    backends = doc.get("backends", ["embedded"])
    return ExperimentSpec(
        circuits=tuple(resolved),
        schemes=tuple(doc.get("schemes", SCHEMES)),
        overheads=tuple(float(x) for x in doc.get("overheads", DEFAULT_OVERHEADS)),
        backends=tuple(_backend_from_config(b, timeout) for b in backends),
        repetitions=int(doc.get("repetitions", DEFAULT_REPETITIONS)),
        timeout=timeout,
        seed=int(doc.get("seed", 0)),
        workers=int(doc.get("workers", 1)),
        pin_cpus=bool(doc.get("pin_cpus", False)),
    )
