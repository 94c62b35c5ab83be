"""Logic simulation and the structural metrics used by the locking schemes.

Parallel-pattern simulation packs one pattern per bit of a Python integer.
The semantic block width is 64, but any width works because Python integers
are unbounded; callers that want every input combination at once simply ask
for a ``2**n``-wide block.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import MissingInput
from .netlist import Circuit, Gate

WORD = 64
DEFAULT_FAULT_PATTERNS = 1000


def eval_gate(g: Gate, vals: Sequence[int], mask: int) -> int:
    """Evaluate ``g`` bitwise over packed operand words ``vals``."""
    k = g.kind
    if k == "AND" or k == "NAND":
        r = mask
        for v in vals:
            r &= v
        return r if k == "AND" else r ^ mask
    if k == "OR" or k == "NOR":
        r = 0
        for v in vals:
            r |= v
        return r if k == "OR" else r ^ mask
    if k == "XOR" or k == "XNOR":
        r = 0
        for v in vals:
            r ^= v
        return r if k == "XOR" else r ^ mask
    if k == "NOT":
        return vals[0] ^ mask
    if k == "BUF":
        return vals[0]
    if k == "MUX2":
        s, d0, d1 = vals
        return (d0 & ~s & mask) | (d1 & s)
    # LUT: OR over table rows of (row minterm AND row bit)
    r = 0
    n = len(vals)
    for row in range(1 << n):
        if not (g.lut_table >> row) & 1:
            continue
        term = mask
        for j, v in enumerate(vals):
            term &= v if (row >> j) & 1 else v ^ mask
        r |= term
    return r


def _propagate(c: Circuit, values: dict[str, int], mask: int, gates: Iterable[Gate] | None = None) -> dict[str, int]:
    for g in c.topo_gates if gates is None else gates:
        values[g.output] = eval_gate(g, [values[a] for a in g.inputs], mask)
    return values


def simulate_nets(c: Circuit, inputs: Mapping[str, int], width: int = 1) -> dict[str, int]:
    """Packed values of every net for ``width`` parallel patterns."""
    missing = [pi for pi in c.primary_inputs if pi not in inputs]
    if missing:
        raise MissingInput(f"no value for primary input(s) {', '.join(missing)}")
    mask = (1 << width) - 1
    values = {pi: int(inputs[pi]) & mask for pi in c.primary_inputs}
    return _propagate(c, values, mask)


def simulate(c: Circuit, inputs: Mapping[str, int | bool]) -> dict[str, int]:
    """Evaluate one input pattern; returns ``{output: 0|1}``."""
    values = simulate_nets(c, {k: int(bool(v)) for k, v in inputs.items()}, 1)
    return {po: values[po] for po in c.primary_outputs}


def simulate_block(c: Circuit, inputs: Mapping[str, int], width: int = WORD) -> dict[str, int]:
    """Bit ``i`` of every returned word is the output under pattern ``i``."""
    values = simulate_nets(c, inputs, width)
    return {po: values[po] for po in c.primary_outputs}


def exhaustive_inputs(names: Sequence[str]) -> tuple[dict[str, int], int]:
    """Packed words enumerating all ``2**len(names)`` assignments.

    Pattern ``t`` assigns ``names[j]`` the value of bit ``j`` of ``t``.
    """
    n = len(names)
    width = 1 << n
    words = {}
    for j, name in enumerate(names):
        # period 2^(j+1): 2^j zeros then 2^j ones, starting at pattern 0
        block = ((1 << (1 << j)) - 1) << (1 << j)
        period = 1 << (j + 1)
        w = 0
        for start in range(0, width, period):
            w |= block << start
        words[name] = w
    return words, width


def random_inputs(names: Sequence[str], width: int, rng: random.Random) -> dict[str, int]:
    return {n: rng.getrandbits(width) for n in names}


def signal_probabilities(c: Circuit, n_patterns: int = 10_000, seed: int = 0) -> dict[str, float]:
    """Empirical probability that each net is 1 under uniform random inputs."""
    if n_patterns < 1:
        raise ValueError("n_patterns must be positive")
    rng = random.Random(seed)
    values = simulate_nets(c, random_inputs(c.primary_inputs, n_patterns, rng), n_patterns)
    return {net: values[net].bit_count() / n_patterns for net in c.nets}


@dataclass(frozen=True)
class FaultImpact:
    net: str
    score: int
    nop0: int = 0
    noo0: int = 0
    nop1: int = 0
    noo1: int = 0


def fault_impact(
    c: Circuit,
    n_patterns: int = DEFAULT_FAULT_PATTERNS,
    seed: int = 0,
    inputs: Mapping[str, int] | None = None,
) -> list[FaultImpact]:
    """Stuck-at fault impact of every net, in ``c.nets`` order.

    ``score = NoP0*NoO0 + NoP1*NoO1`` where NoPv counts patterns on which
    stuck-at-v flips at least one output and NoOv sums the flipped output
    bits.  Pass ``inputs`` (packed words over ``n_patterns`` bits) to fix the
    pattern set, e.g. to an exhaustive block.
    """
    if inputs is None:
        inputs = random_inputs(c.primary_inputs, n_patterns, random.Random(seed))
    mask = (1 << n_patterns) - 1
    good = simulate_nets(c, inputs, n_patterns)
    pos = c.primary_outputs
    order = {g.output: i for i, g in enumerate(c.topo_gates)}
    topo = c.topo_gates
    result = []
    for net in c.nets:
        cone = c.transitive_fanout(net)
        cone_gates = [topo[order[n]] for n in sorted((n for n in cone if n in order and n != net), key=order.__getitem__)]
        counts = []
        for stuck in (0, mask):
            if good[net] == stuck:
                counts.extend((0, 0))
                continue
            faulty = dict(good)
            faulty[net] = stuck
            _propagate(c, faulty, mask, cone_gates)
            any_flip = 0
            flips = 0
            for po in pos:
                d = faulty[po] ^ good[po]
                any_flip |= d
                flips += d.bit_count()
            counts.extend((any_flip.bit_count(), flips))
        nop0, noo0, nop1, noo1 = counts
        result.append(FaultImpact(net, nop0 * noo0 + nop1 * noo1, nop0, noo0, nop1, noo1))
    return result


@dataclass
class InterferenceGraph:
    vertices: list[str]
    edges: set[frozenset[str]]

    def neighbors(self, v: str) -> set[str]:
        return {next(iter(e - {v})) for e in self.edges if v in e}

    def degree(self, v: str) -> int:
        return sum(1 for e in self.edges if v in e)

    def adjacency(self) -> dict[str, set[str]]:
        adj: dict[str, set[str]] = {v: set() for v in self.vertices}
        for e in self.edges:
            a, b = tuple(e)
            adj[a].add(b)
            adj[b].add(a)
        return adj


def _po_reach(c: Circuit, removed: str | None = None) -> dict[str, int]:
    """Bitmask of primary outputs reachable from each net, with ``removed`` cut out."""
    po_bit: dict[str, int] = {}
    for i, po in enumerate(c.primary_outputs):
        po_bit[po] = po_bit.get(po, 0) | (1 << i)
    reach = {}
    for g in reversed(c.topo_gates):
        r = 0 if g.output == removed else po_bit.get(g.output, 0)
        if g.output != removed:
            for user in c.fanout[g.output]:
                r |= reach[user.output]
        reach[g.output] = r
    for pi in c.primary_inputs:
        r = 0
        if pi != removed:
            r = po_bit.get(pi, 0)
            for user in c.fanout[pi]:
                r |= reach[user.output]
        reach[pi] = r
    return reach


def interference_graph(c: Circuit, locations: Sequence[str]) -> InterferenceGraph:
    """Pairs of candidate nets whose key effects would interfere.

    ``u`` and ``v`` are joined when their output cones share a primary output
    and neither net lies on every path from the other to the shared outputs.
    """
    locations = list(dict.fromkeys(locations))
    full = _po_reach(c)
    without = {u: _po_reach(c, removed=u) for u in locations}
    edges: set[frozenset[str]] = set()
    for i, u in enumerate(locations):
        for v in locations[i + 1 :]:
            shared = full[u] & full[v]
            if not shared:
                continue
            u_blocks_v = not (without[u][v] & shared)
            v_blocks_u = not (without[v][u] & shared)
            if not u_blocks_v and not v_blocks_u:
                edges.add(frozenset((u, v)))
    return InterferenceGraph(locations, edges)
