"""Tseitin encoding, DIMACS I/O and the miter formulas driven by the SAT attack.

Literals are DIMACS integers (``v`` or ``-v``, ``v >= 1``).

Per-gate Tseitin clauses (``y`` the output, ``a``/``b``/``ai`` inputs):

=========  ===========================================================  =======
kind       clauses                                                      count
=========  ===========================================================  =======
AND        ``(-a1 .. -an  y)``, ``(ai -y)`` for each i                   n + 1
OR         ``(a1 .. an -y)``, ``(-ai y)`` for each i                     n + 1
NAND/NOR   as AND/OR with ``y`` negated                                  n + 1
XOR2       the four parity rows                                          4
XORn       chain of XOR2 through n - 2 fresh variables                   4(n-1)
XNOR       as XOR with the output negated                                as XOR
NOT/BUF    two binary clauses                                            2
MUX2       four select-split clauses plus two agreement clauses          6
LUT        one clause per table row                                      2^L
=========  ===========================================================  =======
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .errors import ForeignVariable, MalformedOutput
from .netlist import Circuit

Clause = list[int]


@dataclass
class CnfFormula:
    num_vars: int
    clauses: list[Clause] = field(default_factory=list)

    def __post_init__(self):
        for c in self.clauses:
            for lit in c:
                if lit == 0:
                    raise ValueError("literal 0 is not a variable")
                if abs(lit) > self.num_vars:
                    self.num_vars = abs(lit)

    def satisfied_by(self, model: Mapping[int, bool]) -> bool:
        return all(any(model.get(abs(l), False) == (l > 0) for l in c) for c in self.clauses)

    @property
    def num_clauses(self) -> int:
        return len(self.clauses)


def normalize_clause(lits: Iterable[int]) -> Clause | None:
    """Drop duplicate literals; ``None`` for tautologies."""
    out = list(dict.fromkeys(lits))
    seen = set(out)
    if any(-l in seen for l in out):
        return None
    return out


# --------------------------------------------------------------------------
# DIMACS


def to_dimacs(f: CnfFormula, comments: Sequence[str] = ()) -> str:
    lines = [f"c {c}" for c in comments]
    lines.append(f"p cnf {f.num_vars} {len(f.clauses)}")
    lines.extend(" ".join(map(str, c)) + " 0" for c in f.clauses)
    return "\n".join(lines) + "\n"


def parse_dimacs(text: str) -> CnfFormula:
    num_vars = None
    clauses: list[Clause] = []
    current: Clause = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise MalformedOutput(f"bad DIMACS header {line!r}")
            num_vars = int(parts[2])
            continue
        for tok in line.split():
            lit = int(tok)
            if lit == 0:
                clauses.append(current)
                current = []
            else:
                current.append(lit)
    if current:
        clauses.append(current)
    if num_vars is None:
        raise MalformedOutput("missing 'p cnf' header")
    return CnfFormula(num_vars, clauses)


@dataclass
class SolverOutput:
    status: str  # "SAT" | "UNSAT" | "UNKNOWN"
    model: dict[int, bool] | None = None


def parse_solver_output(text: str, exit_code: int | None = None) -> SolverOutput:
    """Parse SAT-competition style output (``s`` status line, ``v`` model lines).

    Exit codes 10/20 are honoured when no status line is present.
    """
    status = None
    model: dict[int, bool] = {}
    terminated = False
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("s "):
            word = line[2:].strip().upper()
            if word == "SATISFIABLE":
                status = "SAT"
            elif word == "UNSATISFIABLE":
                status = "UNSAT"
            elif word in ("UNKNOWN", "INDETERMINATE"):
                status = "UNKNOWN"
            else:
                raise MalformedOutput(f"unrecognised status line {line!r}")
        elif line.startswith("v ") or line == "v":
            for tok in line[1:].split():
                try:
                    lit = int(tok)
                except ValueError as exc:
                    raise MalformedOutput(f"bad model token {tok!r}") from exc
                if lit == 0:
                    terminated = True
                else:
                    model[abs(lit)] = lit > 0
    if status is None:
        if exit_code == 10:
            status = "SAT"
        elif exit_code == 20:
            status = "UNSAT"
        else:
            raise MalformedOutput("no status line in solver output")
    if status == "SAT":
        if not model and not terminated and exit_code != 10:
            raise MalformedOutput("SAT reported without a model")
        return SolverOutput("SAT", model)
    return SolverOutput(status)


# --------------------------------------------------------------------------
# Tseitin


class VarPool:
    """Monotone fresh-variable counter."""

    def __init__(self, start: int = 0):
        self.top = start

    def __call__(self) -> int:
        self.top += 1
        return self.top


def _xor2(y: int, a: int, b: int, out: list[Clause]) -> None:
    out.append([-a, -b, -y])
    out.append([a, b, -y])
    out.append([a, -b, y])
    out.append([-a, b, y])


def encode_gate(
    kind: str,
    ins: Sequence[int],
    y: int,
    new_var: Callable[[], int],
    out: list[Clause],
    table: int | None = None,
) -> None:
    """Append the Tseitin clauses of one gate (inputs ``ins``, output literal ``y``)."""
    k = kind
    if k in ("NAND", "NOR", "XNOR"):
        y = -y
        k = {"NAND": "AND", "NOR": "OR", "XNOR": "XOR"}[k]
    if k == "AND":
        out.append([-a for a in ins] + [y])
        out.extend([a, -y] for a in ins)
    elif k == "OR":
        out.append(list(ins) + [-y])
        out.extend([-a, y] for a in ins)
    elif k == "XOR":
        acc = ins[0]
        for i, b in enumerate(ins[1:], start=1):
            t = y if i == len(ins) - 1 else new_var()
            _xor2(t, acc, b, out)
            acc = t
    elif k == "NOT":
        a = ins[0]
        out.append([a, y])
        out.append([-a, -y])
    elif k == "BUF":
        a = ins[0]
        out.append([-a, y])
        out.append([a, -y])
    elif k == "MUX2":
        s, d0, d1 = ins
        out.append([s, -d0, y])
        out.append([s, d0, -y])
        out.append([-s, -d1, y])
        out.append([-s, d1, -y])
        out.append([-d0, -d1, y])
        out.append([d0, d1, -y])
    elif k == "LUT":
        n = len(ins)
        for row in range(1 << n):
            bit = (table >> row) & 1
            # (inputs != row) or (y == bit)
            out.append([-a if (row >> j) & 1 else a for j, a in enumerate(ins)] + [y if bit else -y])
    else:  # pragma: no cover - Gate validates kinds
        raise ValueError(k)


def tseitin(
    c: Circuit,
    new_var: Callable[[], int],
    varmap: dict[str, int] | None = None,
) -> tuple[dict[str, int], list[Clause]]:
    """Encode ``c``; nets already present in ``varmap`` reuse their literal.

    Returns the completed net->literal map and the clause list.
    """
    vm = {} if varmap is None else dict(varmap)
    clauses: list[Clause] = []
    for pi in c.primary_inputs:
        if pi not in vm:
            vm[pi] = new_var()
    for g in c.topo_gates:
        y = vm.get(g.output)
        if y is None:
            y = vm[g.output] = new_var()
        encode_gate(g.kind, [vm[a] for a in g.inputs], y, new_var, clauses, g.lut_table)
    return vm, clauses


def tseitin_formula(c: Circuit) -> tuple[CnfFormula, dict[str, int]]:
    """Stand-alone encoding with variables 1..n in ``c.nets`` order."""
    pool = VarPool()
    vm = {n: pool() for n in c.nets}
    vm, clauses = tseitin(c, pool, vm)
    return CnfFormula(pool.top, clauses), vm


def _const_gate(kind: str, consts: list[int], lits: list[int]):
    """Simplify a gate whose inputs are partly constant.

    ``consts`` are known input bits, ``lits`` the remaining literals.  Returns
    ``("const", bit)``, ``("lit", literal)`` or ``("gate", kind, lits)``.
    """
    neg = kind in ("NAND", "NOR", "XNOR")
    base = {"NAND": "AND", "NOR": "OR", "XNOR": "XOR"}.get(kind, kind)
    if base == "AND" or base == "OR":
        absorbing = 0 if base == "AND" else 1
        if absorbing in consts:
            return ("const", absorbing ^ neg)
        lits = list(dict.fromkeys(lits))
        if any(-l in lits for l in lits):
            return ("const", absorbing ^ neg)
        if not lits:
            return ("const", (1 - absorbing) ^ neg)
        if len(lits) == 1:
            return ("lit", -lits[0] if neg else lits[0])
        return ("gate", kind, lits)
    if base == "XOR":
        parity = (sum(consts) & 1) ^ neg
        if not lits:
            return ("const", parity)
        if len(lits) == 1:
            return ("lit", -lits[0] if parity else lits[0])
        return ("gate", "XNOR" if parity else "XOR", lits)
    raise AssertionError(kind)


def tseitin_partial(
    c: Circuit,
    new_var: Callable[[], int],
    fixed: Mapping[str, int],
    varmap: Mapping[str, int],
) -> tuple[dict[str, int | bool], list[Clause]]:
    """Encode ``c`` with some nets known constant, propagating the constants.

    Nets that reduce to a constant map to ``True``/``False``; nets that reduce
    to a (possibly negated) existing literal are aliased without a new variable.
    """
    val: dict[str, int | bool] = {}
    for n, v in varmap.items():
        val[n] = v
    for n, b in fixed.items():
        val[n] = bool(b)
    clauses: list[Clause] = []
    for g in c.topo_gates:
        ins = [val[a] for a in g.inputs]
        if g.kind in ("NOT", "BUF"):
            a = ins[0]
            if isinstance(a, bool):
                val[g.output] = a if g.kind == "BUF" else not a
            else:
                val[g.output] = -a if g.kind == "NOT" else a
            continue
        if g.kind == "MUX2":
            s, d0, d1 = ins
            if isinstance(s, bool):
                val[g.output] = d1 if s else d0
                continue
            if d0 is d1 is True or d0 is d1 is False:
                val[g.output] = d0
                continue
            if not isinstance(d0, bool) and not isinstance(d1, bool) and d0 == d1:
                val[g.output] = d0
                continue
            y = new_var()
            encode_gate(g.kind, [_as_lit(x, new_var, clauses) for x in ins], y, new_var, clauses, g.lut_table)
            val[g.output] = y
            continue
        if g.kind == "LUT":
            if all(isinstance(x, bool) for x in ins):
                row = sum(int(x) << j for j, x in enumerate(ins))
                val[g.output] = bool((g.lut_table >> row) & 1)
                continue
            y = new_var()
            encode_gate(g.kind, [_as_lit(x, new_var, clauses) for x in ins], y, new_var, clauses, g.lut_table)
            val[g.output] = y
            continue
        consts = [int(x) for x in ins if isinstance(x, bool)]
        lits = [x for x in ins if not isinstance(x, bool)]
        res = _const_gate(g.kind, consts, lits)
        if res[0] == "const":
            val[g.output] = bool(res[1])
        elif res[0] == "lit":
            val[g.output] = res[1]
        else:
            y = new_var()
            encode_gate(res[1], res[2], y, new_var, clauses)
            val[g.output] = y
    return val, clauses


def _as_lit(x: int | bool, new_var: Callable[[], int], clauses: list[Clause]) -> int:
    if not isinstance(x, bool):
        return x
    v = new_var()
    clauses.append([v] if x else [-v])
    return v


# --------------------------------------------------------------------------
# attack formulas


@dataclass
class VarMap:
    """Variables of the two key-differentiating copies."""

    x: dict[str, int]
    k1: dict[str, int]
    k2: dict[str, int]
    copy1: dict[str, int]
    copy2: dict[str, int]
    diff: list[int]

    def check_disjoint(self) -> None:
        k1, k2 = set(self.k1.values()), set(self.k2.values())
        xs = set(self.x.values())
        if k1 & k2 or (k1 | k2) & xs:
            raise AssertionError("key/input variable ranges collide")
        keys_and_x = set(self.x) | set(self.k1)
        in1 = {v for n, v in self.copy1.items() if n not in keys_and_x}
        in2 = {v for n, v in self.copy2.items() if n not in keys_and_x}
        if in1 & in2 or (in1 | in2) & (k1 | k2 | xs):
            raise AssertionError("internal copy variables collide")


@dataclass
class SatcState:
    """Growing SAT-attack formula: KDC base, DIVC groups (SCKVC) and learned clauses (LCAC)."""

    circuit: Circuit
    key_inputs: tuple[str, ...]
    data_inputs: tuple[str, ...]
    base: list[Clause]
    varmap: VarMap
    pool: VarPool
    sckvc: list[list[Clause]] = field(default_factory=list)
    lcac: list[Clause] = field(default_factory=list)
    dis: list[tuple[tuple[int, ...], tuple[int, ...]]] = field(default_factory=list)
    propagate_constants: bool = True

    @property
    def num_vars(self) -> int:
        return self.pool.top

    @property
    def d(self) -> int:
        return len(self.sckvc)

    def num_clauses(self) -> int:
        return len(self.base) + sum(len(g) for g in self.sckvc) + len(self.lcac)

    def snapshot(self) -> CnfFormula:
        """SATC = KDC and SCKVC and LCAC as an immutable formula."""
        clauses = [list(c) for c in self.base]
        for group in self.sckvc:
            clauses.extend(list(c) for c in group)
        clauses.extend(list(c) for c in self.lcac)
        return CnfFormula(self.pool.top, clauses)

    def key_values(self, model: Mapping[int, bool], which: int = 1) -> tuple[int, ...]:
        km = self.varmap.k1 if which == 1 else self.varmap.k2
        return tuple(int(model.get(km[k], False)) for k in self.key_inputs)

    def input_values(self, model: Mapping[int, bool]) -> tuple[int, ...]:
        return tuple(int(model.get(self.varmap.x[x], False)) for x in self.data_inputs)


def build_kdc(lc, propagate_constants: bool = True) -> SatcState:
    """Two copies of the locked circuit sharing X, with their outputs forced to differ."""
    c = lc.circuit
    keys = tuple(lc.key_inputs)
    data = tuple(lc.data_inputs)
    if not keys:
        raise ValueError("locked circuit has no key inputs")
    pool = VarPool()
    x = {n: pool() for n in data}
    k1 = {n: pool() for n in keys}
    k2 = {n: pool() for n in keys}
    copy1, cl1 = tseitin(c, pool, {**x, **k1})
    copy2, cl2 = tseitin(c, pool, {**x, **k2})
    base = cl1 + cl2
    diff = []
    for po in c.primary_outputs:
        d = pool()
        _xor2(d, copy1[po], copy2[po], base)
        diff.append(d)
    base.append(list(diff))
    vm = VarMap(x, k1, k2, copy1, copy2, diff)
    vm.check_disjoint()
    return SatcState(c, keys, data, base, vm, pool, propagate_constants=propagate_constants)


def divc_clauses(s: SatcState, x_di: Sequence[int], y_f: Sequence[int]) -> list[Clause]:
    """Clauses forcing both key copies to reproduce ``y_f`` on input ``x_di``."""
    c = s.circuit
    if len(x_di) != len(s.data_inputs):
        raise ValueError(f"DI has {len(x_di)} bits, circuit has {len(s.data_inputs)} data inputs")
    if len(y_f) != len(c.primary_outputs):
        raise ValueError("oracle output width mismatch")
    group: list[Clause] = []
    for keymap in (s.varmap.k1, s.varmap.k2):
        if s.propagate_constants:
            fixed = dict(zip(s.data_inputs, x_di))
            val, clauses = tseitin_partial(c, s.pool, fixed, keymap)
            group.extend(clauses)
            for po, bit in zip(c.primary_outputs, y_f):
                v = val[po]
                if isinstance(v, bool):
                    if v != bool(bit):
                        group.append([])
                else:
                    group.append([v] if bit else [-v])
        else:
            xs = {n: s.pool() for n in s.data_inputs}
            for n, bit in zip(s.data_inputs, x_di):
                group.append([xs[n]] if bit else [-xs[n]])
            vm, clauses = tseitin(c, s.pool, {**xs, **keymap})
            group.extend(clauses)
            for po, bit in zip(c.primary_outputs, y_f):
                group.append([vm[po]] if bit else [-vm[po]])
    return group


def add_divc(s: SatcState, x_di: Sequence[int], y_f: Sequence[int]) -> list[Clause]:
    """Append one DIVC group to SCKVC; returns the new clauses."""
    group = divc_clauses(s, x_di, y_f)
    s.sckvc.append(group)
    s.dis.append((tuple(int(b) for b in x_di), tuple(int(b) for b in y_f)))
    return group


def add_learned(s: SatcState, clauses: Iterable[Sequence[int]]) -> list[Clause]:
    """Append solver-learned clauses to LCAC."""
    added = []
    for c in clauses:
        c = list(c)
        for lit in c:
            if lit == 0 or abs(lit) > s.pool.top:
                raise ForeignVariable(f"literal {lit} references no variable of this formula")
        added.append(c)
    s.lcac.extend(added)
    return added


def build_keygen(s: SatcState) -> CnfFormula:
    """SCKVC plus K1 = K2; every model's K1 projection is a valid key."""
    clauses: list[Clause] = []
    for group in s.sckvc:
        clauses.extend(list(c) for c in group)
    for k in s.key_inputs:
        a, b = s.varmap.k1[k], s.varmap.k2[k]
        clauses.append([-a, b])
        clauses.append([a, -b])
    return CnfFormula(s.pool.top, clauses)


def miter(a: Circuit, b: Circuit) -> tuple[CnfFormula, dict[str, int]]:
    """Satisfiable iff ``a`` and ``b`` differ on some input.

    Both circuits must have the same primary inputs and outputs (by name).
    Returns the formula and the input-variable map.
    """
    if set(a.primary_inputs) != set(b.primary_inputs):
        raise ValueError("miter needs identical primary inputs")
    if list(a.primary_outputs) != list(b.primary_outputs):
        raise ValueError("miter needs identical primary outputs")
    pool = VarPool()
    x = {n: pool() for n in a.primary_inputs}
    va, ca = tseitin(a, pool, x)
    vb, cb = tseitin(b, pool, x)
    clauses = ca + cb
    diff = []
    for po in a.primary_outputs:
        d = pool()
        _xor2(d, va[po], vb[po], clauses)
        diff.append(d)
    clauses.append(diff)
    return CnfFormula(pool.top, clauses), x


def sidecar_map(s: SatcState) -> str:
    """``var <id> = <copy>:<net>`` lines for debugging DIMACS dumps."""
    lines = []
    for copy, vm in (("kdc1", s.varmap.copy1), ("kdc2", s.varmap.copy2)):
        for net, v in vm.items():
            lines.append(f"var {v} = {copy}:{net}")
    return "\n".join(lines) + "\n"
