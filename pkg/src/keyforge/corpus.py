"""Synthetic benchmark circuits.

Random DAGs stand in for the ISCAS-85/MCNC suites when those files are not
at hand; ``load_corpus`` in :mod:`keyforge.netlist` reads real ones.
"""

from __future__ import annotations

import random

from .analysis import eval_gate, exhaustive_inputs
from .netlist import Circuit, Gate, c17

_KINDS = ("AND", "NAND", "OR", "NOR", "XOR", "XNOR", "NOT")
_WEIGHTS = (4, 4, 4, 4, 2, 2, 1)
_PATTERNS = 1024
_RETRIES = 30


def random_circuit(
    n_gates: int,
    n_inputs: int | None = None,
    n_outputs: int | None = None,
    seed: int = 0,
    name: str | None = None,
    max_fanin: int = 3,
) -> Circuit:
    """A random combinational DAG with ``n_gates`` gates, no floating nets and no constant gates.

    Gates draw their operands mostly from recently created nets, which gives
    the reconvergent, layered structure typical of real netlists.  Every sink
    becomes a primary output; ``n_outputs`` only adds extra taps.
    """
    rng = random.Random(seed)
    if n_inputs is None:
        n_inputs = max(3, min(24, n_gates // 6 + 2))
    if n_outputs is None:
        n_outputs = max(1, n_gates // 12)
    pis = [f"i{j}" for j in range(n_inputs)]
    # simulate while building so that no gate is constant or a copy of an operand
    if n_inputs <= 10:
        words, width = exhaustive_inputs(pis)
    else:
        width = _PATTERNS
        words = {p: rng.getrandbits(width) for p in pis}
    mask = (1 << width) - 1
    nets = list(pis)
    unused = set(pis)
    gates = []
    for g in range(n_gates):
        out = f"n{g}"
        for _ in range(_RETRIES):
            gate = _draw_gate(rng, nets, unused, out, max_fanin)
            w = eval_gate(gate, [words[o] for o in gate.inputs], mask)
            if w in (0, mask):
                continue
            if gate.kind != "NOT" and any(w in (words[o], words[o] ^ mask) for o in gate.inputs):
                continue
            break
        words[out] = w
        gates.append(gate)
        for o in gate.inputs:
            unused.discard(o)
        unused.add(out)
        nets.append(out)
    sinks = [n for n in nets if n in unused and n not in pis]
    outs = list(sinks)
    internal = [g.output for g in gates if g.output not in unused]
    extra = max(0, n_outputs - len(outs))
    if extra and internal:
        outs.extend(rng.sample(internal, min(extra, len(internal))))
    # dangling primary inputs: tie them into the last gate's cone via XOR
    dangling = [p for p in pis if p in unused]
    for j, p in enumerate(dangling):
        tgt = outs[j % len(outs)]
        new = f"t{j}"
        idx = next(i for i, g in enumerate(gates) if g.output == tgt)
        g = gates[idx]
        gates[idx] = Gate(g.kind, g.inputs, new)
        gates.append(Gate("XOR", (new, p), tgt))
    order = {n: i for i, n in enumerate(nets)}
    outs.sort(key=lambda n: order.get(n, len(order)))
    return Circuit(name or f"rand{n_gates}_s{seed}", gates, pis, outs)


def _draw_gate(rng: random.Random, nets: list[str], unused: set[str], out: str, max_fanin: int) -> Gate:
    kind = rng.choices(_KINDS, _WEIGHTS)[0]
    arity = 1 if kind == "NOT" else (3 if max_fanin >= 3 and rng.random() < 0.25 else 2)
    arity = min(arity, len(nets))
    if kind != "NOT" and arity < 2:
        kind, arity = "NOT", 1
    window = nets[-max(8, len(nets) // 2):]
    ops: list[str] = []
    # feed a still-unused net first so the DAG stays connected
    if unused and rng.random() < 0.7:
        ops.append(rng.choice(sorted(unused)))
    while len(ops) < arity:
        cand = rng.choice(window if rng.random() < 0.8 else nets)
        if cand not in ops:
            ops.append(cand)
    return Gate(kind, tuple(ops), out)


def default_corpus(count: int = 20, min_gates: int = 10, max_gates: int = 200, seed: int = 2018) -> list[Circuit]:
    """c17 plus ``count - 1`` random DAGs with sizes spread over [min_gates, max_gates]."""
    circuits = [c17()]
    n = count - 1
    for j in range(n):
        size = round(min_gates * (max_gates / min_gates) ** (j / max(1, n - 1)))
        circuits.append(random_circuit(size, seed=seed + j, name=f"rand{j:02d}_g{size}"))
    return circuits
