import itertools
import math
import random
import statistics

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from keyforge.analysis import (
    exhaustive_inputs,
    fault_impact,
    interference_graph,
    signal_probabilities,
    simulate,
    simulate_block,
)
from keyforge.corpus import random_circuit
from keyforge.errors import MissingInput
from keyforge.netlist import Circuit, Gate, parse_bench

from conftest import brute_eval, brute_fault_impact


def test_and_truth_table(and_circuit):
    for a, b in itertools.product((0, 1), repeat=2):
        assert simulate(and_circuit, {"a": a, "b": b}) == {"y": a & b}


def test_lut_table_definition():
    c = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = LUT 0x8 (a, b)")
    for a, b in itertools.product((0, 1), repeat=2):
        assert simulate(c, {"a": a, "b": b})["y"] == int(a == b == 1)


def test_missing_input(and_circuit):
    with pytest.raises(MissingInput):
        simulate(and_circuit, {"a": 1})


def test_c17_against_brute(c17_circuit):
    zeros = {pi: 0 for pi in c17_circuit.primary_inputs}
    # hand trace: every first-level NAND is 1, so both outputs are NAND(1, 1) = 0
    assert simulate(c17_circuit, zeros) == brute_eval(c17_circuit, zeros) == {"22": 0, "23": 0}
    for bits in itertools.product((0, 1), repeat=5):
        a = dict(zip(c17_circuit.primary_inputs, bits))
        assert simulate(c17_circuit, a) == brute_eval(c17_circuit, a)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000), st.integers(3, 30))
def test_block_matches_scalar(seed, size):
    c = random_circuit(size, seed=seed)
    rng = random.Random(seed)
    words = {pi: rng.getrandbits(64) for pi in c.primary_inputs}
    block = simulate_block(c, words)
    for i in range(64):
        one = simulate(c, {pi: (w >> i) & 1 for pi, w in words.items()})
        assert all(((block[po] >> i) & 1) == one[po] for po in c.primary_outputs)


def test_exhaustive_inputs_enumerates():
    words, width = exhaustive_inputs(["a", "b", "c"])
    assert width == 8
    for t in range(8):
        assert [(words[n] >> t) & 1 for n in "abc"] == [(t >> j) & 1 for j in range(3)]


def test_signal_probabilities_basic():
    c = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(p)\nOUTPUT(q)\np = AND(a, b)\nq = XOR(a, b)")
    probs = signal_probabilities(c, 10_000, seed=3)
    assert probs["a"] == pytest.approx(0.5, abs=0.05)
    assert probs["b"] == pytest.approx(0.5, abs=0.05)
    assert probs["p"] == pytest.approx(0.25, abs=0.05)
    assert probs["q"] == pytest.approx(0.5, abs=0.05)
    assert signal_probabilities(c, 640, seed=9) == signal_probabilities(c, 640, seed=9)


def test_signal_probability_standard_error():
    # SE ~ 1/sqrt(n): quadrupling the pattern count halves it
    c = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(p)\np = AND(a, b)")
    trials = 200
    sd = {}
    for n in (1024, 4096):
        est = [signal_probabilities(c, n, seed=s)["p"] for s in range(trials)]
        sd[n] = statistics.stdev(est)
        theory = math.sqrt(0.25 * 0.75 / n)
        tol = 2 * theory / math.sqrt(2 * (trials - 1))
        assert abs(sd[n] - theory) <= tol
    assert sd[1024] / sd[4096] == pytest.approx(2.0, rel=0.2)


def test_buf_fault_impact():
    c = parse_bench("INPUT(a)\nOUTPUT(y)\ny = BUF(a)")
    words = {"a": 0b1011_0110}
    fi = {f.net: f for f in fault_impact(c, 8, inputs=words)}
    ones = bin(words["a"]).count("1")
    assert fi["a"].nop0 == ones and fi["a"].noo0 == ones
    assert fi["a"].nop1 == 8 - ones and fi["a"].noo1 == 8 - ones


def test_unobservable_net_scores_zero():
    c = Circuit("t", [Gate("AND", ("a", "b"), "y"), Gate("OR", ("a", "b"), "dead")], ("a", "b"), ("y",))
    fi = {f.net: f.score for f in fault_impact(c, 64, seed=1)}
    assert fi["dead"] == 0


def test_three_gate_exhaustive():
    c = parse_bench("INPUT(a)\nINPUT(b)\nINPUT(c)\nOUTPUT(y)\nOUTPUT(z)\nt = NAND(a, b)\ny = XOR(t, c)\nz = OR(t, a)")
    words, width = exhaustive_inputs(c.primary_inputs)
    got = {f.net: f.score for f in fault_impact(c, width, inputs=words)}
    assert got == brute_fault_impact(c)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10_000))
def test_fault_impact_exhaustive_property(seed):
    c = random_circuit(random.Random(seed).randint(4, 12), n_inputs=4, seed=seed)
    words, width = exhaustive_inputs(c.primary_inputs)
    got = {f.net: f.score for f in fault_impact(c, width, inputs=words)}
    assert got == brute_fault_impact(c)


def test_fault_impact_deterministic(c17_circuit):
    assert fault_impact(c17_circuit, seed=5) == fault_impact(c17_circuit, seed=5)


def test_interference_disjoint_cones():
    c = parse_bench("INPUT(a)\nINPUT(b)\nINPUT(c)\nINPUT(d)\nOUTPUT(y)\nOUTPUT(z)\ny = AND(a, b)\nz = OR(c, d)")
    assert interference_graph(c, ["y", "z"]).edges == set()


def test_interference_sole_fanout():
    c = parse_bench("INPUT(a)\nINPUT(b)\nOUTPUT(y)\nt = AND(a, b)\ny = NOT(t)")
    assert interference_graph(c, ["t", "y"]).edges == set()


def test_interference_convergent_pair():
    c = parse_bench("INPUT(a)\nINPUT(b)\nINPUT(c)\nOUTPUT(y)\nt = AND(a, b)\nu = OR(b, c)\ny = XOR(t, u)")
    assert interference_graph(c, ["t", "u"]).edges == {frozenset(("t", "u"))}


def _all_paths(c, src, dst):
    fan = {n: [g.output for g in c.gates if n in g.inputs] for n in c.nets}
    out = []

    def walk(node, path):
        if node == dst:
            out.append(path)
        for nxt in fan[node]:
            walk(nxt, path + [nxt])

    walk(src, [src])
    return out


def oracle_edges(c, locations):
    edges = set()
    for u, v in itertools.combinations(locations, 2):
        shared = [o for o in c.primary_outputs if _all_paths(c, u, o) and _all_paths(c, v, o)]
        if not shared:
            continue
        u_on_all_v = all(u in p for o in shared for p in _all_paths(c, v, o))
        v_on_all_u = all(v in p for o in shared for p in _all_paths(c, u, o))
        if not u_on_all_v and not v_on_all_u:
            edges.add(frozenset((u, v)))
    return edges


@pytest.mark.parametrize("seed", range(6))
def test_interference_matches_path_enumeration(seed):
    c = random_circuit(10, n_inputs=4, seed=seed)
    locs = list(c.nets)
    assert interference_graph(c, locs).edges == oracle_edges(c, locs)
