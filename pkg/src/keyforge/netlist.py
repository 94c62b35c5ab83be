"""Gate-level combinational netlists and the ISCAS-85 ``.bench`` format.

A :class:`Circuit` is immutable and validated on construction, so every
instance in circulation is an acyclic, fully driven netlist.  Nets are
referred to by name; ``Circuit.net_index`` gives the dense integer id.
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    ArityMismatch,
    BenchSyntaxError,
    CombinationalLoop,
    MultipleDrivers,
    UndrivenNet,
    UnknownGateKind,
)

GATE_KINDS = ("AND", "NAND", "OR", "NOR", "XOR", "XNOR", "NOT", "BUF", "MUX2", "LUT")

# Prefix reserved for nets synthesized by decomposition and locking.
SYNTH_PREFIX = "__kf_"

_ALIASES = {"BUFF": "BUF", "INV": "NOT", "MUX": "MUX2"}
_SEQUENTIAL = {"DFF", "DFFR", "DFFS", "LATCH", "FF"}


@dataclass(frozen=True)
class Gate:
    """One gate.  For MUX2, ``inputs[0]`` is the select: out = inputs[2] if sel else inputs[1]."""

    kind: str
    inputs: tuple[str, ...]
    output: str
    lut_table: int | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise UnknownGateKind(f"unknown gate kind {self.kind!r}", net=self.output)
        n = len(self.inputs)
        if self.kind in ("NOT", "BUF"):
            ok = n == 1
        elif self.kind == "MUX2":
            ok = n == 3
        elif self.kind == "LUT":
            ok = n >= 1
        else:
            ok = n >= 2
        if not ok:
            raise ArityMismatch(f"{self.kind} gate driving {self.output!r} has {n} inputs", net=self.output)
        if self.kind == "LUT":
            if self.lut_table is None or not 0 <= self.lut_table < (1 << (1 << n)):
                raise ArityMismatch(
                    f"LUT driving {self.output!r} needs a table of {1 << n} bits", net=self.output
                )
        elif self.lut_table is not None:
            raise ArityMismatch(f"only LUT gates carry a table ({self.output!r})", net=self.output)


@dataclass(frozen=True, eq=False)
class Circuit:
    name: str
    gates: tuple[Gate, ...]
    primary_inputs: tuple[str, ...]
    primary_outputs: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        object.__setattr__(self, "primary_inputs", tuple(self.primary_inputs))
        object.__setattr__(self, "primary_outputs", tuple(self.primary_outputs))
        self._validate()

    def _validate(self):
        drivers: dict[str, int] = {}
        for pi in self.primary_inputs:
            if pi in drivers:
                raise MultipleDrivers(f"input {pi!r} declared twice", net=pi)
            drivers[pi] = -1
        for i, g in enumerate(self.gates):
            if g.output in drivers:
                raise MultipleDrivers(f"net {g.output!r} has more than one driver", net=g.output)
            drivers[g.output] = i
        for g in self.gates:
            for a in g.inputs:
                if a not in drivers:
                    raise UndrivenNet(f"net {a!r} (input of {g.output!r}) is never driven", net=a)
        for po in self.primary_outputs:
            if po not in drivers:
                raise UndrivenNet(f"output {po!r} is never driven", net=po)
        object.__setattr__(self, "_drivers", drivers)
        # raises CombinationalLoop
        self.topo_gates

    def __eq__(self, other):
        if not isinstance(other, Circuit):
            return NotImplemented
        return self.structurally_equal(other)

    def __hash__(self):
        return hash((self.gates, self.primary_inputs, self.primary_outputs))

    def structurally_equal(self, other: Circuit) -> bool:
        """Same gates (kind, ordered inputs, output, table) and same PI/PO lists.  Name is ignored."""
        return (
            self.primary_inputs == other.primary_inputs
            and self.primary_outputs == other.primary_outputs
            and sorted(self.gates, key=_gate_key) == sorted(other.gates, key=_gate_key)
        )

    @cached_property
    def nets(self) -> tuple[str, ...]:
        """All nets: primary inputs first, then gate outputs in declaration order."""
        return self.primary_inputs + tuple(g.output for g in self.gates)

    @cached_property
    def net_index(self) -> dict[str, int]:
        return {n: i for i, n in enumerate(self.nets)}

    @cached_property
    def driver(self) -> dict[str, Gate]:
        return {g.output: g for g in self.gates}

    @cached_property
    def fanout(self) -> dict[str, tuple[Gate, ...]]:
        out: dict[str, list[Gate]] = {n: [] for n in self.nets}
        for g in self.topo_gates:
            for a in dict.fromkeys(g.inputs):
                out[a].append(g)
        return {n: tuple(v) for n, v in out.items()}

    @cached_property
    def topo_gates(self) -> tuple[Gate, ...]:
        index = {g.output: i for i, g in enumerate(self.gates)}
        pending = [0] * len(self.gates)
        users: dict[str, list[int]] = {}
        for i, g in enumerate(self.gates):
            for a in dict.fromkeys(g.inputs):
                if a in index:
                    pending[i] += 1
                    users.setdefault(a, []).append(i)
        ready = [i for i, p in enumerate(pending) if p == 0]
        heapq.heapify(ready)
        order = []
        while ready:
            i = heapq.heappop(ready)
            order.append(self.gates[i])
            for u in users.get(self.gates[i].output, ()):
                pending[u] -= 1
                if pending[u] == 0:
                    heapq.heappush(ready, u)
        if len(order) != len(self.gates):
            stuck = next(g.output for i, g in enumerate(self.gates) if pending[i] > 0)
            raise CombinationalLoop(f"combinational loop through net {stuck!r}", net=stuck)
        return tuple(order)

    @property
    def internal_nets(self) -> tuple[str, ...]:
        return tuple(g.output for g in self.gates)

    def transitive_fanout(self, net: str) -> set[str]:
        """Nets reachable from ``net`` (inclusive)."""
        seen = {net}
        stack = [net]
        fo = self.fanout
        while stack:
            for g in fo[stack.pop()]:
                if g.output not in seen:
                    seen.add(g.output)
                    stack.append(g.output)
        return seen

    def transitive_fanin(self, net: str) -> set[str]:
        seen = {net}
        stack = [net]
        drv = self.driver
        while stack:
            g = drv.get(stack.pop())
            if g is None:
                continue
            for a in g.inputs:
                if a not in seen:
                    seen.add(a)
                    stack.append(a)
        return seen

    def renamed(self, name: str) -> Circuit:
        return Circuit(name, self.gates, self.primary_inputs, self.primary_outputs)


def _gate_key(g: Gate):
    return (g.output, g.kind, g.inputs, g.lut_table if g.lut_table is not None else -1)


def topo_order(c: Circuit) -> list[Gate]:
    """Gates ordered so that every gate follows the drivers of its inputs.

    Ties are broken by declaration index, so the order is deterministic.
    """
    return list(c.topo_gates)


def _depth(c: Circuit) -> int:
    level = {pi: 0 for pi in c.primary_inputs}
    for g in c.topo_gates:
        level[g.output] = 1 + max(level[a] for a in g.inputs)
    return max((level[po] for po in c.primary_outputs), default=0)


def stats(c: Circuit) -> dict[str, int]:
    """Gate/PI/PO counts and the longest PI-to-PO path measured in gates."""
    return {
        "gates": len(c.gates),
        "pis": len(c.primary_inputs),
        "pos": len(c.primary_outputs),
        "depth": _depth(c),
    }


# --------------------------------------------------------------------------
# .bench parsing / writing

_IO_RE = re.compile(r"^(INPUT|OUTPUT)\s*\(\s*([^()\s,]+)\s*\)$", re.IGNORECASE)
_GATE_RE = re.compile(
    r"^([^=\s]+)\s*=\s*([A-Za-z_][A-Za-z0-9_]*)\s*(0[xX][0-9a-fA-F]+)?\s*\((.*)\)$"
)


def parse_bench(text: str, name: str = "circuit") -> Circuit:
    """Parse ``.bench`` text into a validated :class:`Circuit`.

    Supports ``INPUT(x)``, ``OUTPUT(y)``, ``y = KIND(a, b, ...)``, ``#``
    comments and the LUT extension ``y = LUT 0x<table> (i0, ..., iL-1)``.
    ``MUX`` with more than three operands is read as ``MUX(s0..sk-1,
    d0..d(2^k-1))`` and decomposed into a MUX2 tree.
    """
    pis: list[str] = []
    pos: list[str] = []
    gates: list[Gate] = []
    line_of: dict[str, int] = {}
    driven: set[str] = set()
    used_at: dict[str, int] = {}
    fresh = _FreshNames(SYNTH_PREFIX + "dec")

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _IO_RE.match(line)
        if m:
            (pis if m.group(1).upper() == "INPUT" else pos).append(m.group(2))
            line_of.setdefault(m.group(2), lineno)
            continue
        m = _GATE_RE.match(line)
        if not m:
            raise BenchSyntaxError(f"cannot parse {raw.strip()!r}", line=lineno)
        out, kind, table, args = m.group(1), m.group(2).upper(), m.group(3), m.group(4)
        operands = [a.strip() for a in args.split(",")] if args.strip() else []
        if any(not a for a in operands):
            raise BenchSyntaxError(f"empty operand in {raw.strip()!r}", line=lineno)
        kind = _ALIASES.get(kind, kind)
        if kind in _SEQUENTIAL:
            raise UnknownGateKind(
                f"sequential element {kind} driving {out!r} is not supported", net=out, line=lineno
            )
        if kind not in GATE_KINDS:
            raise UnknownGateKind(f"unknown gate kind {m.group(2)!r} driving {out!r}", net=out, line=lineno)
        if (table is not None) != (kind == "LUT"):
            raise ArityMismatch(f"table annotation only valid on LUT ({out!r})", net=out, line=lineno)
        if out in driven or out in pis:
            raise MultipleDrivers(f"net {out!r} has more than one driver", net=out, line=lineno)
        driven.add(out)
        line_of.setdefault(out, lineno)
        for a in operands:
            used_at.setdefault(a, lineno)
        try:
            if kind == "MUX2" and len(operands) > 3:
                gates.extend(_decompose_mux(out, operands, fresh, lineno))
            else:
                gates.append(Gate(kind, tuple(operands), out, int(table, 16) if table else None))
        except (ArityMismatch, UnknownGateKind) as exc:
            exc.line = lineno
            exc.args = (f"line {lineno}: {exc.args[0]}",)
            raise
    try:
        return Circuit(name, gates, pis, pos)
    except (UndrivenNet, MultipleDrivers, CombinationalLoop) as exc:
        where = used_at if isinstance(exc, UndrivenNet) else line_of
        line = where.get(exc.net, line_of.get(exc.net))
        if line is not None and exc.line is None:
            exc.line = line
            exc.args = (f"line {line}: {exc.args[0]}",)
        raise


def _decompose_mux(out: str, operands: Sequence[str], fresh: _FreshNames, lineno: int) -> list[Gate]:
    n = len(operands)
    k = 1
    while k + (1 << k) < n:
        k += 1
    if k + (1 << k) != n:
        raise ArityMismatch(f"MUX driving {out!r} has {n} operands; expected k + 2^k", net=out, line=lineno)
    sels, layer = operands[:k], list(operands[k:])
    gates = []
    for level, s in enumerate(sels):
        nxt = []
        for j in range(0, len(layer), 2):
            o = out if level == k - 1 else fresh()
            gates.append(Gate("MUX2", (s, layer[j], layer[j + 1]), o))
            nxt.append(o)
        layer = nxt
    return gates


class _FreshNames:
    def __init__(self, stem: str, taken: Iterable[str] = ()):
        self.stem = stem
        self.count = 0
        self.taken = set(taken)

    def __call__(self) -> str:
        while True:
            name = f"{self.stem}{self.count}"
            self.count += 1
            if name not in self.taken:
                self.taken.add(name)
                return name


def write_bench(c: Circuit, header: Sequence[str] = ()) -> str:
    """Serialize to ``.bench``.  ``header`` lines are emitted as ``#`` comments."""
    out = [f"# {h}" if h else "#" for h in header]
    out.append(f"# {c.name}: {len(c.primary_inputs)} inputs, {len(c.primary_outputs)} outputs, {len(c.gates)} gates")
    out.extend(f"INPUT({pi})" for pi in c.primary_inputs)
    out.append("")
    out.extend(f"OUTPUT({po})" for po in c.primary_outputs)
    out.append("")
    for g in c.gates:
        args = ", ".join(g.inputs)
        if g.kind == "LUT":
            width = 1 << len(g.inputs)
            out.append(f"# LUT {g.output}: {len(g.inputs)} inputs, table bits {g.lut_table:0{width}b} (MSB = row {width - 1})")
            out.append(f"{g.output} = LUT 0x{g.lut_table:X} ({args})")
        else:
            kind = "MUX" if g.kind == "MUX2" else g.kind
            out.append(f"{g.output} = {kind}({args})")
    return "\n".join(out) + "\n"


def load_bench(path: str | Path) -> Circuit:
    path = Path(path)
    return parse_bench(path.read_text(), name=path.stem)


def load_corpus(directory: str | Path) -> list[Circuit]:
    """Every ``*.bench`` file in ``directory``, sorted by file name."""
    return [load_bench(p) for p in sorted(Path(directory).glob("*.bench"))]


C17_BENCH = """\
# c17 -- ISCAS-85
INPUT(1)
INPUT(2)
INPUT(3)
INPUT(6)
INPUT(7)

OUTPUT(22)
OUTPUT(23)

10 = NAND(1, 3)
11 = NAND(3, 6)
16 = NAND(2, 11)
19 = NAND(11, 7)
22 = NAND(10, 16)
23 = NAND(16, 19)
"""


def c17() -> Circuit:
    return parse_bench(C17_BENCH, name="c17")
