"""Oracle-guided SAT attack on locked netlists.

Each round asks the solver for an input on which two keys, both consistent
with every previous observation, disagree.  The oracle's answer on that
input is then imposed on both key copies.  Once no such input exists, any
key satisfying the accumulated constraints is functionally correct.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

from . import cnf
from .analysis import exhaustive_inputs, simulate, simulate_block, simulate_nets
from .errors import InvalidObfuscation, SolverError, TooLarge
from .netlist import Circuit
from .obfuscate import LockedCircuit
from .solver import (
    SAT,
    TIMEOUT,
    UNSAT,
    BackendSpec,
    IncrementalSession,
    SolveResult,
    solve,
)

DEFAULT_TIMEOUT = 24 * 3600.0


@dataclass
class AttackLimits:
    timeout: float = DEFAULT_TIMEOUT
    max_iterations: int | None = None


@dataclass
class IterationRecord:
    index: int
    x_di: tuple[int, ...] | None
    y_f: tuple[int, ...] | None
    solve_time: float
    num_vars: int
    num_clauses: int
    learned: int
    mean_learned_len: float
    exported: int
    conflicts: int | None


@dataclass
class AttackTrace:
    circuit: str
    scheme: str
    key_size: int
    backend: str
    mode: str
    dis: list[tuple[tuple[int, ...], tuple[int, ...]]] = field(default_factory=list)
    rounds: list[IterationRecord] = field(default_factory=list)
    status: str = "running"
    total_time: float = 0.0
    keygen_time: float = 0.0
    oracle_queries: int = 0
    peak_memory: int = 0
    learned_total: int = 0
    learned_literals: int = 0
    lcac_size: int = 0

    @property
    def iterations(self) -> int:
        return len(self.dis)

    @property
    def mean_learned_len(self) -> float:
        return self.learned_literals / self.learned_total if self.learned_total else 0.0

    @property
    def solver_time(self) -> float:
        return sum(r.solve_time for r in self.rounds) + self.keygen_time

    def log_lines(self) -> list[str]:
        lines = [
            f"attack {self.circuit} scheme={self.scheme} K={self.key_size} backend={self.backend} mode={self.mode}"
        ]
        for r in self.rounds:
            di = "".join(map(str, r.x_di)) if r.x_di is not None else "-"
            yf = "".join(map(str, r.y_f)) if r.y_f is not None else "-"
            lines.append(
                f"iter {r.index} di={di} yf={yf} t={r.solve_time:.4f}s vars={r.num_vars} "
                f"clauses={r.num_clauses} learned={r.learned} mean_len={r.mean_learned_len:.2f}"
            )
        lines.append(
            f"done status={self.status} iterations={self.iterations} total={self.total_time:.4f}s "
            f"mean_learned_len={self.mean_learned_len:.2f} peak_mem={self.peak_memory}"
        )
        return lines


@dataclass(frozen=True)
class RecoveredKey:
    bits: tuple[int, ...]
    verified: bool

    def __str__(self):
        return "".join(map(str, self.bits))


class Oracle:
    """Query interface over the original netlist; counts queries."""

    def __init__(self, circuit: Circuit, input_order: Sequence[str], output_order: Sequence[str]):
        missing = set(input_order) ^ set(circuit.primary_inputs)
        if missing:
            raise ValueError(f"oracle inputs differ from locked data inputs: {sorted(missing)}")
        if set(output_order) != set(circuit.primary_outputs):
            raise ValueError("oracle outputs differ from locked outputs")
        self.circuit = circuit
        self.inputs = tuple(input_order)
        self.outputs = tuple(output_order)
        self.queries = 0

    def __call__(self, x: Sequence[int]) -> tuple[int, ...]:
        self.queries += 1
        out = simulate(self.circuit, dict(zip(self.inputs, x)))
        return tuple(out[o] for o in self.outputs)


def sat_attack(
    lc: LockedCircuit,
    oracle: Circuit,
    backend: BackendSpec | None = None,
    limits: AttackLimits | None = None,
    *,
    incremental: bool | None = None,
    propagate_constants: bool = True,
    verify: bool = True,
    on_iteration: Callable[[IterationRecord], None] | None = None,
) -> tuple[RecoveredKey | None, AttackTrace]:
    """Recover a functionally correct key for ``lc`` using ``oracle`` queries.

    With the embedded backend the formula is solved incrementally and the
    solver's short learned clauses are kept as LCAC; external backends re-solve
    the whole formula every round.  On timeout the partial trace is returned
    with no key.
    """
    backend = backend or BackendSpec()
    limits = limits or AttackLimits()
    if not lc.key_inputs:
        raise ValueError("locked circuit has no key inputs")
    if incremental is None:
        incremental = backend.kind == "embedded"
    if incremental and backend.kind != "embedded":
        raise ValueError("incremental solving needs the embedded backend")

    start = time.perf_counter()
    deadline = start + limits.timeout
    query = Oracle(oracle, lc.data_inputs, lc.circuit.primary_outputs)
    state = cnf.build_kdc(lc, propagate_constants=propagate_constants)
    trace = AttackTrace(
        lc.base_name, lc.scheme, lc.key_size, backend.label, "incremental" if incremental else "re-encode"
    )
    session = IncrementalSession(seed=backend.seed) if incremental else None
    pending = list(state.base)

    def run(formula_clauses) -> SolveResult:
        remaining = deadline - time.perf_counter()
        if remaining <= 0:
            return SolveResult(TIMEOUT)
        if session is not None:
            return session.solve(formula_clauses, deadline=deadline)
        return solve(state.snapshot(), backend, timeout=remaining)

    try:
        while True:
            if limits.max_iterations is not None and trace.iterations >= limits.max_iterations:
                trace.status = "iteration-limit"
                break
            res = run(pending)
            pending = []
            _account(trace, res)
            if res.status == TIMEOUT:
                trace.status = "timeout"
                break
            if res.status not in (SAT, UNSAT):
                raise SolverError(f"solver returned {res.status}")
            exported = res.learned or []
            if exported:
                cnf.add_learned(state, exported)
                trace.lcac_size = len(state.lcac)
            if res.status == UNSAT:
                rec = IterationRecord(
                    trace.iterations + 1, None, None, res.resources.wall_time, state.num_vars,
                    state.num_clauses(), res.resources.learned or 0,
                    res.resources.mean_learned_len or 0.0, len(exported), res.resources.conflicts,
                )
                trace.rounds.append(rec)
                if on_iteration:
                    on_iteration(rec)
                trace.status = "exhausted"
                break
            x_di = state.input_values(res.model)
            y_f = query(x_di)
            pending = cnf.add_divc(state, x_di, y_f)
            trace.dis.append((x_di, y_f))
            rec = IterationRecord(
                trace.iterations, x_di, y_f, res.resources.wall_time, state.num_vars, state.num_clauses(),
                res.resources.learned or 0, res.resources.mean_learned_len or 0.0, len(exported),
                res.resources.conflicts,
            )
            trace.rounds.append(rec)
            if on_iteration:
                on_iteration(rec)
    finally:
        if session is not None:
            session.close()
    trace.oracle_queries = query.queries

    key = None
    if trace.status == "exhausted":
        remaining = deadline - time.perf_counter()
        if remaining <= 0:
            trace.status = "timeout"
        else:
            kg = solve(cnf.build_keygen(state), backend, timeout=remaining)
            trace.keygen_time = kg.resources.wall_time
            trace.peak_memory = max(trace.peak_memory, kg.resources.peak_memory)
            if kg.status == TIMEOUT:
                trace.status = "timeout"
            elif kg.status == UNSAT:
                trace.total_time = time.perf_counter() - start
                raise InvalidObfuscation(
                    f"no key is consistent with the {trace.iterations} observed input/output pairs"
                )
            elif kg.status != SAT:
                raise SolverError(f"key extraction returned {kg.status}")
            else:
                bits = state.key_values(kg.model, 1)
                ok = verify_key(lc, bits, oracle) if verify else False
                key = RecoveredKey(bits, ok)
                trace.status = "solved"
    trace.total_time = time.perf_counter() - start
    return key, trace


def _account(trace: AttackTrace, res: SolveResult) -> None:
    r = res.resources
    trace.peak_memory = max(trace.peak_memory, r.peak_memory)
    if r.learned:
        trace.learned_total += r.learned
        trace.learned_literals += round(r.learned * (r.mean_learned_len or 0.0))


# --------------------------------------------------------------------------
# verification and brute-force references


def _key_for_oracle(lc: LockedCircuit, oracle: Circuit) -> None:
    if set(oracle.primary_inputs) != set(lc.data_inputs):
        raise ValueError("oracle inputs differ from locked data inputs")


def verify_key(lc: LockedCircuit, key: Sequence[int], oracle: Circuit, backend: BackendSpec | None = None) -> bool:
    """True iff ``lc`` with ``key`` applied is equivalent to ``oracle``.

    Equivalence is decided by an UNSAT miter; for up to 16 data inputs the
    verdict is also cross-checked by exhaustive simulation.
    """
    if len(key) != lc.key_size:
        raise ValueError(f"key has {len(key)} bits, expected {lc.key_size}")
    _key_for_oracle(lc, oracle)
    applied = lc.with_key(key)
    formula, _ = cnf.miter(oracle, applied)
    res = solve(formula, backend or BackendSpec())
    if res.status not in (SAT, UNSAT):
        raise SolverError(f"equivalence check returned {res.status}")
    equivalent = res.status == UNSAT
    if len(lc.data_inputs) <= 16:
        words, width = exhaustive_inputs(lc.data_inputs)
        a = simulate_block(oracle, words, width)
        b = simulate_block(applied, words, width)
        if (a == b) != equivalent:
            raise SolverError("miter verdict disagrees with exhaustive simulation")
    return equivalent


def _consistent_keys(lc: LockedCircuit, x: Sequence[int], y: Sequence[int]) -> int:
    """Bitmask over all ``2**K`` keys (key index bit j = key bit j) matching ``y`` on ``x``."""
    words, width = exhaustive_inputs(lc.key_inputs)
    mask = (1 << width) - 1
    for name, bit in zip(lc.data_inputs, x):
        words[name] = mask if bit else 0
    values = simulate_nets(lc.circuit, words, width)
    ok = mask
    for po, bit in zip(lc.circuit.primary_outputs, y):
        ok &= values[po] if bit else values[po] ^ mask
    return ok


def _key_tuple(index: int, k: int) -> tuple[int, ...]:
    return tuple((index >> j) & 1 for j in range(k))


def _mask_to_keys(mask: int, k: int) -> set[tuple[int, ...]]:
    out = set()
    i = 0
    while mask:
        if mask & 1:
            out.add(_key_tuple(i, k))
        mask >>= 1
        i += 1
    return out


def brute_force_svk(lc: LockedCircuit, oracle: Circuit) -> set[tuple[int, ...]]:
    """Exact set of valid keys by enumerating every (input, key) pair."""
    k, n = lc.key_size, len(lc.data_inputs)
    if k > 16 or n > 16:
        raise TooLarge(f"brute force limited to 16 key and 16 data bits (got K={k}, N={n})")
    _key_for_oracle(lc, oracle)
    if k <= n:
        words, width = exhaustive_inputs(lc.data_inputs)
        ref = simulate_block(oracle, words, width)
        valid = set()
        mask = (1 << width) - 1
        for i in range(1 << k):
            key = _key_tuple(i, k)
            w = dict(words)
            for name, bit in zip(lc.key_inputs, key):
                w[name] = mask if bit else 0
            got = simulate_block(lc.circuit, w, width)
            if all(got[po] == ref[po] for po in lc.circuit.primary_outputs):
                valid.add(key)
        return valid
    q = Oracle(oracle, lc.data_inputs, lc.circuit.primary_outputs)
    ok = (1 << (1 << k)) - 1
    for t in range(1 << n):
        x = _key_tuple(t, n)
        ok &= _consistent_keys(lc, x, q(x))
        if not ok:
            break
    return _mask_to_keys(ok, k)


def brute_force_sck(lc: LockedCircuit, dis: Sequence[tuple[Sequence[int], Sequence[int]]]) -> list[set[tuple[int, ...]]]:
    """Candidate-key sets before any DI and after each DI in ``dis``."""
    k = lc.key_size
    if k > 16:
        raise TooLarge("brute force limited to 16 key bits")
    ok = (1 << (1 << k)) - 1
    out = [_mask_to_keys(ok, k)]
    for x, y in dis:
        ok &= _consistent_keys(lc, x, y)
        out.append(_mask_to_keys(ok, k))
    return out


def keygen_models(state: cnf.SatcState, limit: int = 1 << 16) -> set[tuple[int, ...]]:
    """All K1 projections of KeyGenCircuit models, by blocking-clause enumeration."""
    session = IncrementalSession()
    session.add_clauses(cnf.build_keygen(state).clauses)
    keys = set()
    k1 = [state.varmap.k1[k] for k in state.key_inputs]
    while len(keys) < limit:
        res = session.solve()
        if res.status != SAT:
            break
        bits = tuple(int(res.model[v]) for v in k1)
        keys.add(bits)
        session.add_clauses([[-v if b else v for v, b in zip(k1, bits)]])
    return keys
