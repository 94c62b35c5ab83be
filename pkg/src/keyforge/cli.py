"""Command-line front end: ``keyforge lock|attack|verify|convert|stats|bench``.

Exit codes: 0 success, 1 operational failure, 2 usage error, 3 timeout.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from . import bench as benchmod
from .attack import AttackLimits, sat_attack, verify_key
from .cnf import build_kdc, miter, sidecar_map, to_dimacs, tseitin_formula
from .errors import KeyforgeError
from .netlist import load_bench, stats
from .obfuscate import SCHEMES, LockedCircuit, lock, parse_locked
from .solver import UNSAT, BackendSpec, backend_from_string, solve

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_TIMEOUT = 0, 1, 2, 3
BACKEND_ENV = "KEYFORGE_BACKEND"


class UsageError(Exception):
    pass


def _backend(args) -> BackendSpec:
    text = args.backend if args.backend is not None else os.environ.get(BACKEND_ENV, "embedded")
    return backend_from_string(text, getattr(args, "timeout", None))


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def key_sidecar_text(lc: LockedCircuit) -> str:
    return f"key_inputs={','.join(lc.key_inputs)}\ncorrect_key={''.join(map(str, lc.correct_key))}\n"


def read_key_sidecar(path: str | Path) -> tuple[list[str], tuple[int, ...]]:
    names: list[str] = []
    bits: tuple[int, ...] = ()
    for line in Path(path).read_text().splitlines():
        k, _, v = line.strip().partition("=")
        if k == "key_inputs":
            names = [n for n in v.split(",") if n]
        elif k == "correct_key":
            bits = _parse_key(v)
    return names, bits


def _parse_key(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text or set(text) - {"0", "1"}:
        raise UsageError(f"a key is a string of 0/1 characters, got {text!r}")
    return tuple(int(ch) for ch in text)


def _load_locked(path: str) -> LockedCircuit:
    return parse_locked(Path(path).read_text(), Path(path).stem)


# -------------------------------------------------------------------------- commands


def cmd_lock(args) -> int:
    c = load_bench(args.input)
    lc = lock(c, args.scheme, args.overhead, seed=args.seed)
    Path(args.output).write_text(lc.to_bench(strip_key=args.strip_key))
    Path(args.output + ".key").write_text(key_sidecar_text(lc))
    print(f"locked {c.name} with {args.scheme}: {lc.key_size} key gates -> {args.output}")
    return EXIT_OK


def cmd_attack(args) -> int:
    lc = _load_locked(args.locked)
    oracle = load_bench(args.oracle)
    backend = _backend(args)
    limits = AttackLimits(timeout=args.timeout) if args.timeout is not None else AttackLimits()
    incremental = False if args.reencode else None
    key, trace = sat_attack(lc, oracle, backend, limits, incremental=incremental)
    if args.log:
        Path(args.log).write_text("\n".join(trace.log_lines()) + "\n")
    print(f"iterations: {trace.iterations}")
    print(f"time: {trace.total_time:.3f} s")
    print(f"peak memory: {trace.peak_memory} bytes")
    print(f"mean learned clause length: {trace.mean_learned_len:.2f}")
    if key is None:
        print(f"status: {trace.status}")
        return EXIT_TIMEOUT
    print(f"key: {key}")
    print(f"verified: {'yes' if key.verified else 'no'}")
    return EXIT_OK if key.verified else EXIT_FAIL


def cmd_verify(args) -> int:
    oracle = load_bench(args.oracle)
    lc = _load_locked(args.netlist)
    backend = _backend(args)
    if not lc.key_inputs:
        f, _ = miter(oracle, lc.circuit)
        res = solve(f, backend)
        equivalent = res.status == UNSAT
    else:
        if args.key is not None:
            key = _parse_key(args.key)
        else:
            sidecar = args.key_file or args.netlist + ".key"
            if Path(sidecar).exists():
                names, key = read_key_sidecar(sidecar)
                if names and tuple(names) != lc.key_inputs:
                    raise UsageError(f"{sidecar} names different key inputs than {args.netlist}")
            elif "correct_key=" in Path(args.netlist).read_text():
                key = lc.correct_key
            else:
                raise UsageError("no key given: pass --key, --key-file or keep the .key sidecar")
        if len(key) != lc.key_size:
            raise UsageError(f"key has {len(key)} bits, netlist has {lc.key_size} key inputs")
        equivalent = verify_key(lc, key, oracle, backend)
    print("equivalent" if equivalent else "NOT equivalent")
    return EXIT_OK if equivalent else EXIT_FAIL


def cmd_convert(args) -> int:
    if args.satc:
        lc = _load_locked(args.input)
        if not lc.key_inputs:
            raise UsageError("--satc needs a locked netlist with key inputs")
        state = build_kdc(lc)
        formula = state.snapshot()
        text = to_dimacs(formula, comments=[f"SATC (no DIs yet) for {lc.base_name}, K={lc.key_size}"])
        if args.map:
            Path(args.map).write_text(sidecar_map(state))
    else:
        c = load_bench(args.input)
        formula, vm = tseitin_formula(c)
        text = to_dimacs(formula)
        if args.map:
            Path(args.map).write_text("".join(f"var {v} = circuit:{n}\n" for n, v in vm.items()))
    _write(args.output, text)
    return EXIT_OK


def cmd_stats(args) -> int:
    rows = []
    for path in args.inputs:
        c = load_bench(path)
        s = stats(c)
        rows.append((c.name, s["gates"], s["pis"], s["pos"], s["depth"]))
    width = max([len("circuit")] + [len(r[0]) for r in rows])
    print(f"{'circuit':<{width}}  {'gates':>6}  {'pis':>5}  {'pos':>5}  {'depth':>5}")
    for name, g, p, o, d in rows:
        print(f"{name:<{width}}  {g:>6}  {p:>5}  {o:>5}  {d:>5}")
    return EXIT_OK


def cmd_bench(args) -> int:
    spec = benchmod.load_config(args.config)
    overrides = {}
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.repetitions is not None:
        overrides["repetitions"] = args.repetitions
    if overrides:
        spec = dataclasses.replace(spec, **overrides)
    records = benchmod.run_matrix(spec, journal=args.journal)
    _write(args.output, benchmod.emit_csv(records, redact_resources=args.redact_resources))
    table = benchmod.aggregate(records, timeout=spec.timeout)
    if args.summary:
        Path(args.summary).write_text(benchmod.emit_csv(table))
    if args.plots:
        out = Path(args.plots)
        out.mkdir(parents=True, exist_ok=True)
        for kind in benchmod.PLOT_KINDS:
            (out / f"{kind}.svg").write_text(benchmod.emit_plot(table, kind))
    solved = sum(r.status == benchmod.SOLVED for r in records)
    print(f"{len(records)} runs, {solved} solved", file=sys.stderr)
    return EXIT_OK


# -------------------------------------------------------------------------- parser


def _percentage(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 < v <= 100:
        raise argparse.ArgumentTypeError("overhead must be in (0, 100]")
    return v


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="keyforge", description="Logic locking and SAT-attack workbench.")
    sub = p.add_subparsers(dest="command", required=True)

    backend_help = f"'embedded' or an external solver command line (default: ${BACKEND_ENV} or embedded)"

    q = sub.add_parser("lock", help="insert key gates into a netlist")
    q.add_argument("input")
    q.add_argument("--scheme", required=True, choices=SCHEMES)
    q.add_argument("--overhead", required=True, type=_percentage, help="key gates as a percentage of gates")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--strip-key", action="store_true", help="omit the correct key from the netlist header")
    q.add_argument("-o", "--output", required=True, help="locked netlist; the key goes to <output>.key")
    q.set_defaults(func=cmd_lock)

    q = sub.add_parser("attack", help="recover the key of a locked netlist")
    q.add_argument("locked")
    q.add_argument("--oracle", required=True, help="original netlist used as the functional oracle")
    q.add_argument("--backend", default=None, help=backend_help)
    q.add_argument("--timeout", type=_positive, default=None, help="seconds (default 24 h)")
    q.add_argument("--reencode", action="store_true", help="re-solve from scratch each round")
    q.add_argument("--log", help="write the per-iteration trace here")
    q.set_defaults(func=cmd_attack)

    q = sub.add_parser("verify", help="check a netlist (with key) against an oracle")
    q.add_argument("netlist")
    q.add_argument("--oracle", required=True)
    q.add_argument("--key", help="key bits, keyinput0 first")
    q.add_argument("--key-file", help="key sidecar (default: <netlist>.key)")
    q.add_argument("--backend", default=None, help=backend_help)
    q.set_defaults(func=cmd_verify)

    q = sub.add_parser("convert", help="emit DIMACS for a circuit or a SAT-attack formula")
    q.add_argument("input")
    q.add_argument("--satc", action="store_true", help="emit the initial attack formula of a locked netlist")
    q.add_argument("--map", help="write a variable map sidecar")
    q.add_argument("-o", "--output", default=None)
    q.set_defaults(func=cmd_convert)

    q = sub.add_parser("stats", help="gate, input, output counts and depth")
    q.add_argument("inputs", nargs="+")
    q.set_defaults(func=cmd_stats)

    q = sub.add_parser("bench", help="run an experiment matrix from a JSON config")
    q.add_argument("config")
    q.add_argument("-o", "--output", default=None, help="per-run CSV (default stdout)")
    q.add_argument("--summary", help="aggregated CSV")
    q.add_argument("--plots", help="directory for SVG plots")
    q.add_argument("--journal", help="JSON-lines journal enabling resume")
    q.add_argument("--workers", type=int, default=None)
    q.add_argument("--repetitions", type=int, default=None)
    q.add_argument("--redact-resources", action="store_true", help="blank time and memory columns")
    q.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"keyforge: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KeyforgeError, OSError, ValueError) as exc:
        print(f"keyforge: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
