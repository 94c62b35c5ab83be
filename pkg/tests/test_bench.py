import json
import random
import statistics

import pytest

from keyforge import bench
from keyforge.bench import (
    RECORD_FIELDS,
    ExperimentSpec,
    RunRecord,
    aggregate,
    cell_seed,
    emit_csv,
    emit_plot,
    read_csv,
    read_journal,
    resolve_circuits,
    run_cell,
    run_matrix,
)
from keyforge.corpus import random_circuit
from keyforge.errors import CorpusEmpty, EmptyInput, NoBackend
from keyforge.netlist import write_bench
from keyforge.solver import BackendSpec


def _rec(scheme="rnd", overhead=5.0, status="solved", t=1.0, mem=100, rep=0, circuit="c", backend="embedded"):
    return RunRecord(circuit, scheme, overhead, backend, rep, 0, status, t, mem, 3, 2.5, status == "solved")


def _small_spec(**kw):
    base = dict(circuits=("@c17",), schemes=("rnd",), overheads=(10.0, 25.0), repetitions=3, timeout=60, workers=0)
    base.update(kw)
    return ExperimentSpec(**base)


def test_matrix_cardinality():
    records = run_matrix(_small_spec())
    assert len(records) == 1 * 1 * 2 * 1 * 3
    assert len({r.cell for r in records}) == 6
    assert all(r.status == "solved" and r.key_verified for r in records)


def test_matrix_with_pool():
    records = run_matrix(_small_spec(workers=1))
    assert [r.cell for r in records] == [r.cell for r in run_matrix(_small_spec())]


def test_timeout_cell():
    c = random_circuit(200, n_inputs=24, seed=1)
    task = dict(circuit=c.name, bench=write_bench(c), scheme="rnd", overhead=25.0,
                backend=BackendSpec(), repetition=0, seed=1, timeout=0.3)
    r = run_cell(task)
    assert r.status == "timeout" and not r.key_verified
    assert 0.3 <= r.wall_time <= 0.3 + 2.0


def test_error_cell_is_recorded():
    # a circuit with no gates cannot be locked; the matrix records it and goes on
    task = dict(circuit="wire", bench="INPUT(a)\nOUTPUT(a)\n", scheme="rnd", overhead=5.0,
                backend=BackendSpec(), repetition=0, seed=0, timeout=5)
    assert run_cell(task).status == "error"


def test_seeded_runs_repeat():
    a = run_matrix(_small_spec(overheads=(25.0,)))
    b = run_matrix(_small_spec(overheads=(25.0,)))
    assert [(r.seed, r.iterations, r.mean_learned_len) for r in a] == [
        (r.seed, r.iterations, r.mean_learned_len) for r in b
    ]


def test_cell_seed_distinct_and_stable():
    seeds = {cell_seed(0, "c17", s, ov, "embedded", rep)
             for s in ("rnd", "dac12") for ov in (1.0, 5.0) for rep in range(5)}
    assert len(seeds) == 20
    assert cell_seed(3, "c", "rnd", 1.0, "e", 0) == cell_seed(3, "c", "rnd", 1.0, "e", 0)
    assert all(0 <= s < 2**31 for s in seeds)


def test_aggregate_sums_and_median():
    table = aggregate([_rec(t=1.0, rep=0), _rec(t=3.0, rep=1)])
    row = table.get("rnd", 5.0)
    assert row.time_sum == 4.0 and row.time_median == 2.0 and row.runs == 2


def test_aggregate_against_independent_fixture():
    rng = random.Random(0)
    records = [
        _rec(scheme=rng.choice(["rnd", "dac12"]), overhead=rng.choice([1.0, 5.0]),
             status=rng.choice(["solved", "solved", "timeout"]), t=rng.uniform(0, 10),
             mem=rng.randint(1, 1000), rep=i)
        for i in range(100)
    ]
    table = aggregate(records, timeout=10.0)
    for scheme in ("rnd", "dac12"):
        for ov in (1.0, 5.0):
            members = [r for r in records if r.scheme == scheme and r.overhead == ov]
            times = [10.0 if r.status == "timeout" else r.wall_time for r in members]
            row = table.get(scheme, ov)
            assert row.time_sum == pytest.approx(sum(times))
            assert row.time_median == pytest.approx(statistics.median(times))
            assert row.memory_sum == sum(r.peak_memory for r in members)
            assert row.censored == row.timeouts == sum(r.status == "timeout" for r in members)
            solved = table.get(scheme, ov, view="solved-only")
            assert solved.runs == solved.solved == sum(r.status == "solved" for r in members)
            assert solved.time_sum == pytest.approx(sum(r.wall_time for r in members if r.status == "solved"))
    shuffled = records[:]
    random.Random(1).shuffle(shuffled)
    assert aggregate(shuffled, timeout=10.0).rows == table.rows


def test_solved_only_excludes_timeouts():
    table = aggregate([_rec(t=1.0), _rec(status="timeout", t=99.0, rep=1)], timeout=100.0)
    assert table.get("rnd", 5.0).time_sum == 101.0
    only = table.get("rnd", 5.0, view="solved-only")
    assert only.time_sum == 1.0 and only.timeouts == 0 and only.censored == 0


def test_backend_grouping():
    table = aggregate([_rec(backend="a", t=1.0), _rec(backend="b", t=2.0)])
    assert table.get("a", 5.0, group_by="backend").time_sum == 1.0
    assert table.get("rnd", 5.0).time_sum == 3.0


def test_csv_round_trip():
    records = run_matrix(_small_spec(overheads=(25.0,)))
    text = emit_csv(records)
    assert text.split("\r\n")[0].split(",") == list(RECORD_FIELDS)
    assert read_csv(text) == records


def test_csv_quoting():
    r = _rec(circuit='odd,"name"')
    assert read_csv(emit_csv([r]))[0].circuit == 'odd,"name"'


def test_redacted_csv_identical_across_runs():
    a = emit_csv(run_matrix(_small_spec()), redact_resources=True)
    b = emit_csv(run_matrix(_small_spec()), redact_resources=True)
    assert a == b


def test_summary_csv_has_censor_column():
    text = emit_csv(aggregate([_rec()], timeout=5.0))
    assert "censored" in text.splitlines()[0].split(",")


def test_journal_resume(tmp_path):
    spec = _small_spec()
    full = run_matrix(spec)
    journal = tmp_path / "j.jsonl"
    run_matrix(spec, journal=journal)
    lines = journal.read_text().splitlines()
    assert len(lines) == 6
    # an interrupted run: two complete lines and a torn third
    journal.write_text("\n".join(lines[:2]) + "\n" + lines[2][:15])
    assert len(read_journal(journal)) == 2
    resumed = run_matrix(spec, journal=journal)
    strip = lambda rs: [(r.cell, r.seed, r.status, r.iterations, r.mean_learned_len, r.key_verified) for r in rs]
    assert strip(resumed) == strip(full)
    assert resumed[:2] == [RunRecord(**json.loads(l)) for l in lines[:2]]


def test_resolve_circuits(tmp_path):
    assert [c.name for c in resolve_circuits(["@c17"])] == ["c17"]
    assert len(resolve_circuits(["@corpus:3"])) == 3
    (tmp_path / "x.bench").write_text("INPUT(a)\nOUTPUT(y)\ny = NOT(a)\n")
    assert [c.name for c in resolve_circuits([str(tmp_path)])] == ["x"]


def test_corpus_errors(tmp_path):
    with pytest.raises(CorpusEmpty):
        resolve_circuits([])
    with pytest.raises(CorpusEmpty):
        resolve_circuits(["@c17", "@c17"])
    with pytest.raises(CorpusEmpty):
        run_matrix(_small_spec(circuits=(str(tmp_path),)))


def test_no_backend():
    with pytest.raises(NoBackend):
        run_matrix(_small_spec(backends=()))
    with pytest.raises(NoBackend):
        run_matrix(_small_spec(backends=(BackendSpec("external", ("/nonexistent/solver", "{cnf}")),)))


def test_empty_input():
    with pytest.raises(EmptyInput):
        aggregate([])
    with pytest.raises(EmptyInput):
        emit_csv([])


@pytest.mark.parametrize("kind", bench.PLOT_KINDS)
def test_plots_are_svg(kind):
    table = aggregate([_rec(t=1.0), _rec(scheme="dac12", overhead=10.0, t=2.0)])
    svg = emit_plot(table, kind)
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg
    assert svg == emit_plot(table, kind)


def test_plot_unknown_kind():
    with pytest.raises(ValueError):
        emit_plot(aggregate([_rec()]), "pie")


def test_spec_validation():
    with pytest.raises(ValueError):
        _small_spec(repetitions=0)
    with pytest.raises(ValueError):
        _small_spec(schemes=("bogus",))
    with pytest.raises(ValueError):
        _small_spec(overheads=())


def test_config_loader(tmp_path):
    (tmp_path / "a.bench").write_text("INPUT(a)\nINPUT(b)\nOUTPUT(y)\ny = AND(a, b)\n")
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({
        "circuits": ["a.bench", "@c17"], "schemes": ["rnd"], "overheads": [5],
        "backends": ["embedded", {"name": "ext", "command": ["mysolver", "{cnf}"]}],
        "repetitions": 2, "timeout": 9,
    }))
    spec = bench.load_config(cfg)
    assert spec.circuits == (str(tmp_path / "a.bench"), "@c17")
    assert spec.overheads == (5.0,) and spec.repetitions == 2 and spec.timeout == 9.0
    assert spec.backends[0].kind == "embedded"
    assert spec.backends[1].command == ("mysolver", "{cnf}") and spec.backends[1].label == "ext"
    cfg.write_text(json.dumps({"circuits": ["@c17"], "color": "red"}))
    with pytest.raises(ValueError):
        bench.load_config(cfg)
