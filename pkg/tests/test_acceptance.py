"""Acceptance criteria, one test each.  A summary line per criterion is printed at the end of the run."""

import time
from fractions import Fraction

import numpy as np
import pytest

from evolve.ctmc import build_explicit, transient
from evolve.ctmc.exp2 import (
    DEFAULT_CONV,
    agreement,
    check_dominance,
    check_loss_ordering,
    check_monotone_in_time,
    exp2,
    model_cells,
    read_csv,
    time_grid,
    write_csv,
)
from evolve.devices import (
    ScenarioScript,
    bundled_pair,
    builtin_handlers,
    cleaning_robot_device,
    run_scenario,
)
from evolve.evolution import (
    ConditionsViolated,
    EvolutionPair,
    UnreachableStates,
    check_conditions,
    gate_for_runtime,
)
from evolve.mapek import Converter, build_knowledge, passive
from evolve.clock import VirtualClock
from evolve.statechart import Unreachable, event_path, machine
from evolve.tracefmt import format_trace, parse_trace

from helpers import bfs_layer_path, random_machine, random_script, random_validated_pairs, reference_converter
from live import FakeDevice, switch_session


def summary(trace):
    return [(r.mode, list(r.action.events), r.o_after, r.n_after) for r in trace]


def robot(script):
    return run_scenario(bundled_pair("robot"), cleaning_robot_device(spot_duration_ms=1000), script,
                        builtin_handlers("robot", move_duration_ms=500))


def test_ac1_robot_spot_trace(record):
    t0 = time.perf_counter()
    script = ScenarioScript.of(("clean", 0), ("spot", 1000))
    a, b = robot(script), robot(script)
    elapsed = time.perf_counter() - t0
    expected = [
        ("existing", ["clean"], "on", "on"),
        ("new", [], "on", "move"),
        ("existing", ["spot"], "spot", "spot"),
        ("existing", ["endSpot"], "on", "on"),
    ]
    identical = format_trace(a.trace) == format_trace(b.trace)
    ok = summary(a.trace) == expected and identical and elapsed < 1
    record("AC1 robot spot golden trace", ok, f"{len(a.trace)} records, identical={identical}, {elapsed:.3f}s")
    assert summary(a.trace) == expected
    assert identical and parse_trace(format_trace(a.trace)) == a.trace
    assert elapsed < 1


def test_ac2_robot_wait_trace(record):
    t0 = time.perf_counter()
    res = robot(ScenarioScript.of(("clean", 0), ("clean", 1000), ("clean", 2000), ("clean", 2500)))
    elapsed = time.perf_counter() - t0
    s3, s4 = res.trace[2], res.trace[3]
    got3 = (s3.mode, s3.action.kind, s3.action.handler, s3.o_after, s3.n_after)
    got4 = (s4.mode, list(s4.action.events), s4.o_after, s4.n_after)
    ok = got3 == ("new", "invoke", "spotWait", "clean", "spotWait") and got4 == (
        "existing", ["clean", "spot"], "spot", "spot") and elapsed < 1
    record("AC2 robot spot-wait golden trace", ok, f"step3={got3}, step4={got4}, {elapsed:.3f}s")
    assert got3 == ("new", "invoke", "spotWait", "clean", "spotWait")
    assert got4 == ("existing", ["clean", "spot"], "spot", "spot")
    assert elapsed < 1


def _without(m, state=None, event=None, rename=None):
    tr = []
    for t in m.transitions:
        if state in (t.source, t.target) or t.event == event:
            continue
        f = {rename[0]: rename[1]}.get if rename else (lambda x, d: d)
        tr.append((f(t.source, t.source), t.event, f(t.target, t.target)))
    states = [rename[1] if rename and s == rename[0] else s for s in m.states if s != state]
    events = [e for e in m.events if e != event]
    initial = rename[1] if rename and m.initial == rename[0] else m.initial
    return machine(m.name, initial, tr, states=states, events=events,
                   timeouts=[(t.state, t.delay_ms, t.emits) for t in m.timeouts
                             if t.state != state and t.emits != event])


def test_ac3_evolution_validator(record):
    t0 = time.perf_counter()
    outcomes = []
    for kind in ("lightbulb", "robot"):
        outcomes.append(("pass " + kind, gate_for_runtime(bundled_pair(kind)).report.ok))
    o, n = bundled_pair("robot").original, bundled_pair("robot").evolved

    r = check_conditions(EvolutionPair(o, _without(n, state="clean")))
    outcomes.append(("drop state", not r.ok and r.missing_states == {"clean"}))
    r = check_conditions(EvolutionPair(o, _without(n, event="endSpot")))
    outcomes.append(("drop event", not r.ok and r.missing_events == {"endSpot"}))
    r = check_conditions(EvolutionPair(o, _without(n, rename=("spot", "spotlight"))))
    outcomes.append(("rename state", not r.ok and r.missing_states == {"spot"} and r.missing_events == set()))
    orphan = machine(n.name, n.initial, [(t.source, t.event, t.target) for t in n.transitions],
                     states=sorted(n.states) + ["dock"], events=n.events,
                     timeouts=[(t.state, t.delay_ms, t.emits) for t in n.timeouts])
    try:
        gate_for_runtime(EvolutionPair(o, orphan))
        outcomes.append(("unreachable new state", False))
    except UnreachableStates as exc:
        outcomes.append(("unreachable new state", exc.states == ["dock"]))
    try:
        gate_for_runtime(EvolutionPair(o, _without(n, state="clean")))
        outcomes.append(("gate refuses dropped state", False))
    except ConditionsViolated:
        outcomes.append(("gate refuses dropped state", True))
    elapsed = time.perf_counter() - t0
    failed = [name for name, ok in outcomes if not ok]
    record("AC3 evolution validator", not failed and elapsed < 1,
           f"{len(outcomes) - len(failed)}/{len(outcomes)} cases, {elapsed:.3f}s" + (f", failed {failed}" if failed else ""))
    assert not failed
    assert elapsed < 1


def test_ac4_planner_oracle(record):
    import random

    rng = random.Random(20240)
    t0 = time.perf_counter()
    checked = mismatches = 0
    for _ in range(500):
        m = random_machine(rng, max_states=10, max_events=5)
        for a in sorted(m.states):
            for b in sorted(m.states):
                expected = bfs_layer_path(m, a, b)
                try:
                    got = event_path(m, a, b)
                except Unreachable:
                    got = None
                checked += 1
                mismatches += got != expected
    elapsed = time.perf_counter() - t0
    record("AC4 planner oracle", mismatches == 0 and elapsed < 30,
           f"{checked} state pairs on 500 machines, {mismatches} mismatches, {elapsed:.2f}s")
    assert mismatches == 0
    assert elapsed < 30


def test_ac5_converter_reference(record):
    import random

    t0 = time.perf_counter()
    rng = random.Random(55)
    pairs = random_validated_pairs(505, 200)
    mismatches = 0
    for vp in pairs:
        script = random_script(rng, vp.evolved.events, 20)
        k = build_knowledge(vp, {s: passive for s in vp.diff.new_states})
        conv = Converter(k, sink=lambda e: None, clock=VirtualClock(), running=True)
        for e in script:
            conv.enqueue(e)
        got = [(r.mode, r.action.events, r.action.handler, r.o_after, r.n_after) for r in conv.drain()]
        mismatches += got != reference_converter(vp.original, vp.evolved, script)
    elapsed = time.perf_counter() - t0
    record("AC5 converter vs reference", mismatches == 0 and elapsed < 60,
           f"200 pairs x 20 events, {mismatches} mismatching runs, {elapsed:.2f}s")
    assert mismatches == 0
    assert elapsed < 60


def test_ac6_sync_and_containment(record):
    import random

    rng = random.Random(66)
    violations = steps = 0
    for vp in random_validated_pairs(606, 300):
        sent = []
        k = build_knowledge(vp, {s: passive for s in vp.diff.new_states})
        conv = Converter(k, sink=sent.append, clock=VirtualClock(), running=True)
        for e in random_script(rng, vp.evolved.events, 30):
            conv.enqueue(e)
        for r in conv.drain():
            steps += 1
            violations += r.mode == "existing" and r.o_after != r.n_after
        violations += sum(e not in vp.original.events for e in sent)
    record("AC6 synchronization and containment", violations == 0, f"{steps} steps, {violations} violations")
    assert violations == 0


@pytest.fixture(scope="module")
def agreement_rows():
    t0 = time.perf_counter()
    rows = exp2(times=(20, 60, 100), runs=100_000, seed=2024)
    return rows, time.perf_counter() - t0


def test_ac7_uniformization_vs_simulation(record, agreement_rows):
    rows, elapsed = agreement_rows
    worst, failures = agreement(rows, runs=100_000, k=3.0)
    cells = {(r.model, r.conv_mean_s) for r in rows}
    compared = sum(r.method == "simulation" for r in rows) * 2
    ok = not failures and len(cells) == 5 and elapsed < 300
    record("AC7 CTMC cross-validation", ok,
           f"{compared} comparisons, worst {worst:.2f} SE, {len(failures)} beyond 3 SE, {elapsed:.1f}s")
    assert len(cells) == 5
    assert not failures, failures
    assert elapsed < 300


@pytest.fixture(scope="module")
def exp2_csv():
    rows = exp2(times=time_grid(200, 5), methods=("uniformization",))
    return write_csv(rows)


def test_ac8_shape_claims(record, exp2_csv):
    rows = read_csv(exp2_csv)
    verdicts = [check_monotone_in_time(rows), check_dominance(rows), check_loss_ordering(rows, at=100.0)]
    ok = all(v.ok for v in verdicts)
    record("AC8 shape claims from CSV", ok, "; ".join(str(v) for v in verdicts))
    for v in verdicts:
        assert v.ok, str(v)


def test_ac9_normalization(record):
    worst = 0.0
    count = 0
    for _, _, model in model_cells(DEFAULT_CONV):
        mc = build_explicit(model)
        for T in time_grid(200, 5):
            d = transient(mc, T).distribution
            worst = max(worst, abs(d.sum() - 1.0))
            count += 1
    record("AC9 normalization", worst <= 1e-9, f"{count} distributions, max |sum-1| = {worst:.2e}")
    assert worst <= 1e-9


def test_ac10_live_mode(record):
    t0 = time.perf_counter()
    dev = FakeDevice()
    try:
        code, out, err, replies = switch_session(dev.endpoint)
    finally:
        dev.close()
    elapsed = time.perf_counter() - t0
    trace = parse_trace(out)
    modes = [r.mode for r in trace]
    paused = replies[2]
    ok = (code == 0 and modes == ["existing", "new", "new"] and paused["queue_depth"] == 1
          and not paused["running"] and replies[-1]["ok"] and dev.received == ["switch"] and elapsed < 10)
    record("AC10 live mode", ok, f"exit={code}, modes={modes}, device got {dev.received}, {elapsed:.2f}s")
    assert code == 0, err
    assert modes == ["existing", "new", "new"]
    assert [r.event.seq for r in trace] == [1, 2, 3]
    assert paused["queue_depth"] == 1 and paused["steps_executed"] == 1 and not paused["running"]
    assert replies[-1]["ok"] and replies[-1]["command"] == "exit"
    assert dev.received == ["switch"]
    assert elapsed < 10
