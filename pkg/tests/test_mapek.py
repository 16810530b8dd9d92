import random

import pytest
from hypothesis import given, settings, strategies as st

from evolve.clock import VirtualClock
from evolve.evolution import EvolutionPair, UnreachableStates, gate_for_runtime
from evolve.mapek import (
    ActionSpec,
    Converter,
    DuplicateHandler,
    EventQueue,
    IncomingEvent,
    InvalidCommand,
    MissingHandler,
    QueueClosed,
    HandlerRegistry,
    build_knowledge,
    passive,
    step,
)
from evolve.statechart import machine

from helpers import random_pair, random_script, reference_converter


def passive_for(vp):
    return {s: passive for s in vp.diff.new_states}


def converter_for(vp, handlers=None, clock=None, sink=None):
    k = build_knowledge(vp, handlers if handlers is not None else passive_for(vp))
    sent = []
    conv = Converter(k, sink=sink or sent.append, clock=clock or VirtualClock(), running=True)
    return conv, sent


def feed(conv, events, source="controller"):
    out = []
    for e in events:
        conv.enqueue(e, source)
        out.extend(conv.drain())
    return out


def test_build_knowledge_requires_handlers(bulb_pair):
    with pytest.raises(MissingHandler):
        build_knowledge(bulb_pair, {"wait": passive})
    with pytest.raises(TypeError):
        build_knowledge(bulb_pair.pair, passive_for(bulb_pair))


def test_duplicate_handler():
    reg = HandlerRegistry().register("a", passive)
    with pytest.raises(DuplicateHandler):
        reg.register("a", passive)


def test_step_is_pure(robot_pair):
    k = build_knowledge(robot_pair, passive_for(robot_pair))
    rec = step(k, IncomingEvent("clean", "controller", 1))
    assert (rec.mode, rec.action.events, rec.o_after, rec.n_after) == ("existing", ("clean",), "on", "on")
    assert (k.o_state, k.n_state) == ("off", "off")


def test_step_modes(robot_pair):
    k = build_knowledge(robot_pair, passive_for(robot_pair))
    k.o_state = k.n_state = "on"
    new = step(k, IncomingEvent("spot", "controller", 1))
    assert new.mode == "new" and new.action == ActionSpec.invoke("move") and new.o_after == "on"
    rej = step(k, IncomingEvent("endSpot", "controller", 2))
    assert rej.mode == "rejected" and rej.action.kind == "none"
    assert (rej.o_after, rej.n_after) == ("on", "on")


def test_empty_plan_is_existing_without_action():
    o = machine("o", "a", [("a", "go", "b"), ("b", "go", "a")])
    n = machine("n", "a", [("a", "go", "b"), ("b", "go", "a"), ("a", "stay", "a")])
    conv, sent = converter_for(gate_for_runtime(EvolutionPair(o, n)))
    (rec,) = feed(conv, ["stay"])
    assert rec.mode == "existing" and rec.action.kind == "none"
    assert sent == []


def test_plan_failure_rejects_with_note():
    o = machine("o", "a", [("a", "go", "b")], states=["c"])
    n = machine("n", "a", [("a", "go", "b"), ("b", "jump", "c")])
    conv, sent = converter_for(gate_for_runtime(EvolutionPair(o, n)))
    recs = feed(conv, ["go", "jump"])
    assert recs[1].mode == "rejected"
    assert recs[1].error.startswith("PlanFailure")
    assert conv.status()["nState"] == "b"


def test_multi_event_plan(robot_pair):
    conv, sent = converter_for(robot_pair)
    recs = feed(conv, ["clean", "clean", "clean", "clean", "clean"])
    # on -> clean, then the wait state, then clean -> spot needs two original events
    assert [r.mode for r in recs[:4]] == ["existing", "existing", "new", "existing"]
    assert recs[3].action.events == ("clean", "spot")
    assert sent == ["clean", "clean", "clean", "spot"]


def test_sink_failure_recorded(bulb_pair):
    def broken(ev):
        raise OSError("device gone")

    conv, _ = converter_for(bulb_pair, sink=broken)
    (rec,) = feed(conv, ["switch"])
    assert rec.mode == "existing" and "SinkFailure" in rec.error
    assert conv.status()["oState"] == "on"


def test_timeout_fires_and_restarts(bulb_pair):
    clock = VirtualClock()
    conv, sent = converter_for(bulb_pair, clock=clock)
    feed(conv, ["switch", "switch"])
    assert conv.status()["nState"] == "wait"
    clock.advance_to(1999, after_each=conv.drain)
    assert conv.status()["nState"] == "wait"
    clock.advance_to(2000, after_each=conv.drain)
    last = conv.trace[-1]
    assert (last.event.name, last.event.source, last.mode) == ("timeout", "internal", "existing")
    assert last.action.events == ("switch",)
    assert conv.status()["nState"] == "off"


def test_timer_cancelled_when_leaving_state(bulb_pair):
    clock = VirtualClock()
    conv, _ = converter_for(bulb_pair, clock=clock)
    feed(conv, ["switch", "switch", "switch"])
    assert conv.status()["nState"] == "incandescentOn"
    while clock.fire_next():
        conv.drain()
    assert [r.event.name for r in conv.trace] == ["switch"] * 3


def test_handler_can_post_internal_events(robot_pair):
    clock = VirtualClock()
    reg = HandlerRegistry()
    reg.register("move", lambda ctx: ctx.enqueue("arriveSpot"))
    reg.register("spotWait", passive)
    conv, sent = converter_for(robot_pair, handlers=reg, clock=clock)
    feed(conv, ["clean"])
    feed(conv, ["spot"])
    while clock.fire_next():
        conv.drain()
    assert [r.event.source for r in conv.trace] == ["controller", "controller", "internal"]
    assert conv.status()["oState"] == "spot"


def test_control_commands(bulb_pair):
    conv, _ = converter_for(bulb_pair)
    conv.control("stop")
    conv.enqueue("switch")
    assert conv.drain() == []
    st_ = conv.control("status")
    assert st_["queue_depth"] == 1 and not st_["running"]
    conv.control("start")
    assert len(conv.drain()) == 1
    with pytest.raises(InvalidCommand):
        conv.control("pause")
    reply = conv.control("exit")
    assert reply["ok"] and conv.run_loop() == "exited"
    with pytest.raises(QueueClosed):
        conv.enqueue("switch")


def test_queue_sequence_numbers():
    q = EventQueue()
    assert [q.put("a"), q.put("b", "device"), q.put("c", "internal")] == [1, 2, 3]
    assert [q.pop().name for _ in range(3)] == ["a", "b", "c"]
    assert q.pop() is None
    with pytest.raises(ValueError):
        q.put("x", "elsewhere")


# -- properties over random validated pairs ---------------------------------


def _pair_and_script(seed):
    rng = random.Random(seed)
    vp = None
    while vp is None:
        vp = random_pair(rng)
    return vp, random_script(rng, vp.evolved.events, rng.randint(1, 25))


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matches_reference_interpreter(seed):
    vp, script = _pair_and_script(seed)
    conv, _ = converter_for(vp)
    recs = feed(conv, script)
    got = [(r.mode, r.action.events, r.action.handler, r.o_after, r.n_after) for r in recs]
    assert got == reference_converter(vp.original, vp.evolved, script)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sync_containment_stasis(seed):
    vp, script = _pair_and_script(seed)
    conv, sent = converter_for(vp)
    for r in feed(conv, script):
        if r.mode == "existing":
            assert r.o_after == r.n_after
        if r.mode == "new":
            assert r.o_after == r.o_before and r.n_after not in vp.original.states
        if r.mode == "rejected":
            assert (r.o_after, r.n_after) == (r.o_before, r.n_before)
            assert r.action.kind == "none"
    assert set(sent) <= vp.original.events


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_identity_evolution_tracks_the_device(seed):
    """With no evolution, each accepted event moves the device by at most one original event."""
    vp, script = _pair_and_script(seed)
    o = vp.original
    try:
        same = gate_for_runtime(EvolutionPair(o, o))
    except UnreachableStates:
        return
    conv, sent = converter_for(same)
    for r in feed(conv, [e for e in script if e in o.events]):
        assert r.mode in ("existing", "rejected")
        if r.mode == "existing":
            assert r.o_after == o.table[(r.o_before, r.event.name)]
            assert len(r.action.events) == (0 if r.o_before == r.o_after else 1)


def test_sequence_numbers_follow_arrival_order(robot_pair):
    conv, _ = converter_for(robot_pair)
    conv.control("stop")
    for e, src in [("clean", "controller"), ("endSpot", "device"), ("spot", "controller")]:
        conv.enqueue(e, src)
    conv.control("start")
    recs = conv.drain()
    assert [r.event.seq for r in recs] == [1, 2, 3]
    assert [r.event.source for r in recs] == ["controller", "device", "controller"]


def test_bulb_switch_cycle(bulb_pair):
    conv, sent = converter_for(bulb_pair)
    recs = feed(conv, ["switch"] * 4)
    assert [r.mode for r in recs] == ["existing", "new", "new", "existing"]
    assert (recs[2].action.handler, recs[2].o_after, recs[2].n_after) == ("incandescentOn", "on", "incandescentOn")
    assert recs[3].action.events == ("switch",)
    assert (recs[3].o_after, recs[3].n_after) == ("off", "off")
    assert sent == ["switch", "switch"]
