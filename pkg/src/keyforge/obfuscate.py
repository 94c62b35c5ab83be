"""Key-gate insertion schemes and key-programmable-gate conversions."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Sequence

from .analysis import (
    DEFAULT_FAULT_PATTERNS,
    FaultImpact,
    exhaustive_inputs,
    fault_impact,
    interference_graph,
    signal_probabilities,
    simulate_nets,
)
from .errors import TooFewLocations
from .netlist import SYNTH_PREFIX, Circuit, Gate, write_bench, parse_bench

SCHEMES = ("rnd", "dac12", "toc13xor", "toc13mux", "iolts14")
KEY_PREFIX = "keyinput"

# Fault-impact candidates considered by dac12, as a multiple of the key count.
DAC12_POOL_FACTOR = 3
SIGNAL_PATTERNS = 10_000


@dataclass(frozen=True)
class LockedCircuit:
    circuit: Circuit
    key_inputs: tuple[str, ...]
    correct_key: tuple[int, ...]
    scheme: str
    base_name: str
    seed: int | None = None
    overhead_pct: float | None = None

    def __post_init__(self):
        if len(self.key_inputs) != len(self.correct_key):
            raise ValueError("key_inputs and correct_key differ in length")
        pis = set(self.circuit.primary_inputs)
        if not set(self.key_inputs) <= pis:
            raise ValueError("key inputs must be primary inputs of the circuit")

    @property
    def data_inputs(self) -> tuple[str, ...]:
        keys = set(self.key_inputs)
        return tuple(pi for pi in self.circuit.primary_inputs if pi not in keys)

    @property
    def key_size(self) -> int:
        return len(self.key_inputs)

    def key_assignment(self, key: Sequence[int] | None = None) -> dict[str, int]:
        key = self.correct_key if key is None else key
        return dict(zip(self.key_inputs, (int(b) for b in key)))

    def with_key(self, key: Sequence[int] | None = None) -> Circuit:
        """The locked netlist with ``key`` hard-wired through constant gates.

        Each key input becomes an internal net computed as XOR/XNOR of a data
        input with itself, so the result has exactly the data inputs.
        """
        data = self.data_inputs
        if not data:
            raise ValueError("cannot hard-wire a key into a circuit without data inputs")
        anchor = data[0]
        consts = [
            Gate("XNOR" if bit else "XOR", (anchor, anchor), name)
            for name, bit in self.key_assignment(key).items()
        ]
        c = self.circuit
        return Circuit(c.name, consts + list(c.gates), data, c.primary_outputs)

    def to_bench(self, strip_key: bool = False) -> str:
        header = [f"keyforge locked netlist: base={self.base_name} scheme={self.scheme}"]
        if self.seed is not None:
            header.append(f"seed={self.seed} overhead={self.overhead_pct}")
        header.append("key_inputs=" + ",".join(self.key_inputs))
        if not strip_key:
            header.append("correct_key=" + "".join(str(b) for b in self.correct_key))
        return write_bench(self.circuit, header)


def key_count(gate_count: int, overhead_pct: float) -> int:
    """``max(1, round(overhead/100 * gates))`` with halves rounded up."""
    return max(1, math.floor(overhead_pct / 100 * gate_count + 0.5))


def parse_locked(text: str, name: str = "locked", key_inputs: Sequence[str] | None = None) -> LockedCircuit:
    """Read a locked ``.bench`` back, recovering key names and (if present) the key.

    Without a ``key_inputs=`` header, inputs named ``keyinput*`` are taken as keys.
    When the correct key was stripped, ``correct_key`` is all zeros and
    ``scheme`` is ``"unknown"`` unless recorded.
    """
    c = parse_bench(text, name)
    meta: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line.startswith("#"):
            continue
        for tok in line[1:].split():
            if "=" in tok:
                k, v = tok.split("=", 1)
                meta[k] = v
    if key_inputs is None:
        if "key_inputs" in meta:
            key_inputs = [k for k in meta["key_inputs"].split(",") if k]
        else:
            key_inputs = [pi for pi in c.primary_inputs if pi.startswith(KEY_PREFIX)]
    key = meta.get("correct_key")
    correct = tuple(int(ch) for ch in key) if key else (0,) * len(key_inputs)
    seed = int(meta["seed"]) if "seed" in meta else None
    overhead = float(meta["overhead"]) if "overhead" in meta else None
    return LockedCircuit(
        c, tuple(key_inputs), correct, meta.get("scheme", "unknown"), meta.get("base", name), seed, overhead
    )


class _Inserter:
    """Mutable working copy used while key gates are being inserted."""

    def __init__(self, c: Circuit):
        self.base = c
        self.gates = list(c.gates)
        self.pos = {g.output: i for i, g in enumerate(self.gates)}
        self.keys: list[str] = []
        self.key_bits: list[int] = []
        taken = set(c.nets)
        self._taken = taken
        self._fresh = 0

    def fresh(self) -> str:
        while True:
            name = f"{SYNTH_PREFIX}{self._fresh}"
            self._fresh += 1
            if name not in self._taken:
                self._taken.add(name)
                return name

    def new_key(self, bit: int) -> str:
        name = f"{KEY_PREFIX}{len(self.keys)}"
        while name in self._taken:
            name = "_" + name
        self._taken.add(name)
        self.keys.append(name)
        self.key_bits.append(bit)
        return name

    def detach(self, net: str) -> str:
        """Move the driver of internal ``net`` onto a fresh net and return it."""
        pre = self.fresh()
        i = self.pos.pop(net)
        g = self.gates[i]
        self.gates[i] = Gate(g.kind, g.inputs, pre, g.lut_table)
        self.pos[pre] = i
        return pre

    def insert(self, net: str, kind: str, operands_for: callable) -> None:
        pre = self.detach(net)
        g = Gate(kind, operands_for(pre), net)
        self.pos[net] = len(self.gates)
        self.gates.append(g)

    def circuit(self) -> Circuit:
        return Circuit(self.base.name, self.gates, self.base.primary_inputs + tuple(self.keys), self.base.primary_outputs)


def _xor_lock(ins: _Inserter, nets: Sequence[str], rng: random.Random) -> None:
    for net in nets:
        bit = rng.randrange(2)
        key = ins.new_key(bit)
        ins.insert(net, "XNOR" if bit else "XOR", lambda pre, key=key: (pre, key))


def _fault_impacts(c: Circuit, seed: int) -> dict[str, FaultImpact]:
    """Fault impact of internal nets; exhaustive when the input space fits the pattern budget."""
    if 1 << len(c.primary_inputs) <= DEFAULT_FAULT_PATTERNS:
        words, width = exhaustive_inputs(c.primary_inputs)
        impacts = fault_impact(c, width, inputs=words)
    else:
        impacts = fault_impact(c, seed=seed)
    internal = set(c.internal_nets)
    return {fi.net: fi for fi in impacts if fi.net in internal}


def _ranked(c: Circuit, impacts: dict[str, FaultImpact]) -> list[str]:
    """Observable internal nets by descending fault impact, ties by net index."""
    index = c.net_index
    live = [n for n, fi in impacts.items() if fi.score > 0]
    return sorted(live, key=lambda n: (-impacts[n].score, index[n]))


def _dac12_select(c: Circuit, ranked: list[str], k: int) -> list[str]:
    pool = ranked[: max(k, DAC12_POOL_FACTOR * k)]
    graph = interference_graph(c, pool)
    if not graph.edges:
        return ranked[:k]
    adj = graph.adjacency()
    rank = {n: i for i, n in enumerate(pool)}
    chosen: list[str] = []
    remaining = set(pool)
    while len(chosen) < k and remaining:
        if chosen:
            common = set.intersection(*(adj[n] for n in chosen)) & remaining
            touching = set().union(*(adj[n] for n in chosen)) & remaining
            options = common or touching or remaining
        else:
            options = remaining
        best = max(options, key=lambda n: (len(adj[n] & remaining), -rank[n]))
        chosen.append(best)
        remaining.discard(best)
    return chosen


def _signal_probs(c: Circuit, seed: int) -> dict[str, float]:
    if 1 << len(c.primary_inputs) <= SIGNAL_PATTERNS:
        words, width = exhaustive_inputs(c.primary_inputs)
        values = simulate_nets(c, words, width)
        return {n: values[n].bit_count() / width for n in c.nets}
    return signal_probabilities(c, SIGNAL_PATTERNS, seed=seed)


def lock(c: Circuit, scheme: str, overhead_pct: float, seed: int = 0) -> LockedCircuit:
    """Insert key gates into ``c`` with one of the five supported schemes.

    The key count is ``key_count(len(c.gates), overhead_pct)``.  XOR/XNOR key
    gates encode the correct bit in the gate type (XOR needs 0, XNOR needs 1).
    Only nets whose faults are observable at some output are eligible, so no
    key bit is vacuous by construction; ``TooFewLocations`` is raised when
    the key count exceeds the eligible nets.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {', '.join(SCHEMES)}")
    if not 0 < overhead_pct <= 100:
        raise ValueError("overhead_pct must be in (0, 100]")
    if not c.gates:
        raise TooFewLocations("circuit has no internal nets")
    k = key_count(len(c.gates), overhead_pct)
    impacts = _fault_impacts(c, seed)
    if scheme == "iolts14":
        probs = _signal_probs(c, seed)
        # AND-insertion needs an observable stuck-at-0, OR-insertion a stuck-at-1
        eligible = [
            n for n, fi in impacts.items() if (fi.nop0 > 0 if probs[n] < 0.5 else fi.nop1 > 0)
        ]
    else:
        eligible = _ranked(c, impacts)
    if k > len(eligible):
        raise TooFewLocations(
            f"{k} key gates requested but only {len(eligible)} eligible nets in {c.name!r}"
        )
    rng = random.Random(f"{scheme}:{seed}")
    ins = _Inserter(c)

    if scheme == "rnd":
        index = c.net_index
        _xor_lock(ins, rng.sample(sorted(eligible, key=index.__getitem__), k), rng)
    elif scheme == "toc13xor":
        _xor_lock(ins, eligible[:k], rng)
    elif scheme == "dac12":
        _xor_lock(ins, _dac12_select(c, eligible, k), rng)
    elif scheme == "toc13mux":
        for net in eligible[:k]:
            current = ins.circuit()
            cone = current.transitive_fanout(net)
            keys = set(ins.keys)
            decoys = [n for n in current.nets if n not in cone and n not in keys]
            if not decoys:
                raise TooFewLocations(f"no decoy net outside the fanout cone of {net!r}")
            decoy = rng.choice(decoys)
            bit = rng.randrange(2)
            key = ins.new_key(bit)
            ins.insert(
                net,
                "MUX2",
                lambda pre, key=key, bit=bit, decoy=decoy: (key, decoy, pre) if bit else (key, pre, decoy),
            )
    else:  # iolts14
        index = c.net_index
        chosen = sorted(eligible, key=lambda n: (-abs(probs[n] - 0.5), index[n]))[:k]
        for net in chosen:
            if probs[net] < 0.5:
                key = ins.new_key(1)
                ins.insert(net, "AND", lambda pre, key=key: (pre, key))
            else:
                key = ins.new_key(0)
                ins.insert(net, "OR", lambda pre, key=key: (pre, key))

    return LockedCircuit(
        ins.circuit(), tuple(ins.keys), tuple(ins.key_bits), scheme, c.name, seed, overhead_pct
    )


# --------------------------------------------------------------------------
# keyless cells -> key-programmable gates


@dataclass(frozen=True)
class KPG:
    """Replacement subcircuit for one obfuscated cell."""

    gates: tuple[Gate, ...]
    key_inputs: tuple[str, ...]
    correct_key: tuple[int, ...]
    output: str


def _mux_tree(selects: Sequence[str], data: Sequence[str], output: str, fresh) -> list[Gate]:
    """MUX2 tree picking ``data[t]`` where bit ``j`` of ``t`` is ``selects[j]``."""
    layer = list(data)
    gates = []
    for level, s in enumerate(selects):
        nxt = []
        for j in range(0, len(layer), 2):
            o = output if level == len(selects) - 1 else fresh()
            gates.append(Gate("MUX2", (s, layer[j], layer[j + 1]), o))
            nxt.append(o)
        layer = nxt
    return gates


def _namer(stem: str):
    count = iter(range(1 << 30))
    return lambda: f"{stem}{next(count)}"


def lut_to_kpg(gate: Gate, key_names: Sequence[str] | None = None, fresh=None) -> KPG:
    """Replace an L-input LUT by a MUX tree over ``2**L`` key inputs.

    The LUT inputs drive the selects; key bit ``t`` is the table entry for
    input valuation ``t``, so the correct key is the table itself.
    """
    if gate.kind != "LUT":
        raise ValueError("lut_to_kpg needs a LUT gate")
    n = len(gate.inputs)
    fresh = fresh or _namer(f"{SYNTH_PREFIX}{gate.output}_lut")
    keys = tuple(key_names) if key_names is not None else tuple(f"{KEY_PREFIX}_{gate.output}_{t}" for t in range(1 << n))
    if len(keys) != 1 << n:
        raise ValueError(f"need {1 << n} key names")
    bits = tuple((gate.lut_table >> t) & 1 for t in range(1 << n))
    return KPG(tuple(_mux_tree(gate.inputs, keys, gate.output, fresh)), keys, bits, gate.output)


def camo_to_kpg(
    gate_inputs: Sequence[str],
    possibilities: Sequence[str],
    true_index: int,
    output: str = "y",
    key_names: Sequence[str] | None = None,
    fresh=None,
) -> KPG:
    """Expose a camouflaged cell with ``M`` candidate functions as a keyed MUX.

    All candidates are instantiated on the same inputs and selected by
    ``ceil(log2 M)`` key bits (bit 0 is the least significant select).
    Select codes past ``M - 1`` choose the last candidate.
    """
    m = len(possibilities)
    if m < 2:
        raise ValueError("a camouflaged cell needs at least two possibilities")
    if not 0 <= true_index < m:
        raise ValueError("true_index out of range")
    nbits = max(1, math.ceil(math.log2(m)))
    fresh = fresh or _namer(f"{SYNTH_PREFIX}{output}_camo")
    keys = tuple(key_names) if key_names is not None else tuple(f"{KEY_PREFIX}_{output}_{j}" for j in range(nbits))
    if len(keys) != nbits:
        raise ValueError(f"need {nbits} key names")
    cand_nets = []
    gates = []
    for kind in possibilities:
        o = fresh()
        gates.append(Gate(kind, tuple(gate_inputs), o))
        cand_nets.append(o)
    data = cand_nets + [cand_nets[-1]] * ((1 << nbits) - m)
    gates.extend(_mux_tree(keys, data, output, fresh))
    bits = tuple((true_index >> j) & 1 for j in range(nbits))
    return KPG(tuple(gates), keys, bits, output)


def luts_to_kpc(c: Circuit) -> LockedCircuit:
    """Turn every LUT of ``c`` into a KPG; the result is the attacker's view."""
    gates: list[Gate] = []
    keys: list[str] = []
    bits: list[int] = []
    taken = set(c.nets)
    for g in c.gates:
        if g.kind != "LUT":
            gates.append(g)
            continue
        names = []
        for t in range(1 << len(g.inputs)):
            name = f"{KEY_PREFIX}{len(keys) + t}"
            while name in taken:
                name = "_" + name
            taken.add(name)
            names.append(name)
        kpg = lut_to_kpg(g, names)
        gates.extend(kpg.gates)
        keys.extend(kpg.key_inputs)
        bits.extend(kpg.correct_key)
    kpc = Circuit(c.name, gates, c.primary_inputs + tuple(keys), c.primary_outputs)
    return LockedCircuit(kpc, tuple(keys), tuple(bits), "lut", c.name)
