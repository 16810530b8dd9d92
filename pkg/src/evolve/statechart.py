"""Flat, deterministic, event-driven state machine models.

A machine is the triple (events, states, transitions) plus an initial
state and optional per-state timers.  Transitions form a partial function
``(state, event) -> state``; a missing entry means the event is not
accepted in that state.

Models are stored as JSON documents::

    {"name": "bulb", "initial": "off", "events": ["switch"],
     "states": [{"name": "off"}, {"name": "on"}],
     "transitions": [{"from": "off", "event": "switch", "to": "on"}, ...]}

A state may carry ``"timeout_ms"`` and ``"timeout_event"``: entering it
arms a one-shot timer that emits that event.
"""

from __future__ import annotations

import json
import re
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

NAME_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")

_TOP_FIELDS = {"name", "initial", "events", "states", "transitions"}
_STATE_FIELDS = {"name", "timeout_ms", "timeout_event"}
_TRANSITION_FIELDS = {"from", "event", "to"}


class ModelSyntaxError(ValueError):
    """Malformed machine document.  ``line``/``column`` are 1-based when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)


class InvariantError(ValueError):
    """A well-formed document describes an invalid machine."""

    def __init__(self, invariant: str, detail: str):
        self.invariant = invariant
        super().__init__(f"{invariant}: {detail}")


class Unreachable(LookupError):
    def __init__(self, source: str, target: str):
        self.source = source
        self.target = target
        super().__init__(f"no event path from {source!r} to {target!r}")


@dataclass(frozen=True, order=True)
class Transition:
    source: str
    event: str
    target: str

    def __str__(self) -> str:
        return f"({self.source}, {self.event}) -> {self.target}"


@dataclass(frozen=True, order=True)
class TimeoutSpec:
    state: str
    delay_ms: int
    emits: str


@dataclass(frozen=True)
class StateMachine:
    name: str
    events: frozenset[str]
    states: frozenset[str]
    initial: str
    transitions: tuple[Transition, ...]
    timeouts: tuple[TimeoutSpec, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "events", frozenset(self.events))
        object.__setattr__(self, "states", frozenset(self.states))
        object.__setattr__(self, "transitions", tuple(sorted(self.transitions)))
        object.__setattr__(self, "timeouts", tuple(sorted(self.timeouts)))
        self._check()

    def _check(self):
        for kind, names in (("state", self.states), ("event", self.events)):
            for n in names:
                if not isinstance(n, str) or not NAME_RE.match(n):
                    raise InvariantError("name-pattern", f"invalid {kind} name {n!r}")
        if not NAME_RE.match(self.name):
            raise InvariantError("name-pattern", f"invalid machine name {self.name!r}")
        if self.initial not in self.states:
            raise InvariantError("initial-in-states", f"initial state {self.initial!r} is not a state")
        seen: dict[tuple[str, str], str] = {}
        for t in self.transitions:
            if t.source not in self.states or t.target not in self.states:
                raise InvariantError("transition-endpoints", f"{t} references an unknown state")
            if t.event not in self.events:
                raise InvariantError("transition-event", f"{t} uses unknown event {t.event!r}")
            key = (t.source, t.event)
            if key in seen:
                raise InvariantError("deterministic", f"duplicate transition for {key}")
            seen[key] = t.target
        timed = set()
        for spec in self.timeouts:
            if spec.state not in self.states:
                raise InvariantError("timeout-state", f"timer on unknown state {spec.state!r}")
            if spec.state in timed:
                raise InvariantError("timeout-unique", f"more than one timer on {spec.state!r}")
            timed.add(spec.state)
            if not isinstance(spec.delay_ms, int) or isinstance(spec.delay_ms, bool) or spec.delay_ms <= 0:
                raise InvariantError("timeout-positive", f"timer on {spec.state!r} has delay {spec.delay_ms!r}")
            if spec.emits not in self.events:
                raise InvariantError("timeout-event", f"timer on {spec.state!r} emits unknown event {spec.emits!r}")
            if (spec.state, spec.emits) not in seen:
                raise InvariantError(
                    "timeout-effective",
                    f"timer on {spec.state!r} emits {spec.emits!r} but no transition consumes it there",
                )

    @cached_property
    def table(self) -> Mapping[tuple[str, str], str]:
        return {(t.source, t.event): t.target for t in self.transitions}

    @cached_property
    def _outgoing(self) -> Mapping[str, tuple[tuple[str, str], ...]]:
        out: dict[str, list[tuple[str, str]]] = {s: [] for s in self.states}
        for t in self.transitions:
            out[t.source].append((t.event, t.target))
        return {s: tuple(sorted(v)) for s, v in out.items()}

    def outgoing(self, state: str) -> tuple[tuple[str, str], ...]:
        """(event, target) pairs leaving ``state``, sorted lexicographically."""
        return self._outgoing.get(state, ())

    def timeout_for(self, state: str) -> TimeoutSpec | None:
        for spec in self.timeouts:
            if spec.state == state:
                return spec
        return None


def machine(
    name: str,
    initial: str,
    transitions: Iterable[tuple[str, str, str]],
    states: Iterable[str] = (),
    events: Iterable[str] = (),
    timeouts: Iterable[tuple[str, int, str]] = (),
) -> StateMachine:
    """Convenience constructor; states and events default to those the transitions mention."""
    ts = [Transition(*t) for t in transitions]
    all_states = set(states) | {initial} | {t.source for t in ts} | {t.target for t in ts}
    all_events = set(events) | {t.event for t in ts}
    return StateMachine(
        name=name,
        events=frozenset(all_events),
        states=frozenset(all_states),
        initial=initial,
        transitions=tuple(ts),
        timeouts=tuple(TimeoutSpec(*spec) for spec in timeouts),
    )


# -- parsing -----------------------------------------------------------------


def _expect(cond: bool, message: str):
    if not cond:
        raise ModelSyntaxError(message)


def _check_fields(obj, allowed: set[str], required: set[str], where: str):
    _expect(isinstance(obj, dict), f"{where} must be an object")
    unknown = set(obj) - allowed
    _expect(not unknown, f"unknown field(s) in {where}: {', '.join(sorted(unknown))}")
    missing = required - set(obj)
    _expect(not missing, f"missing field(s) in {where}: {', '.join(sorted(missing))}")


def _name(value, where: str) -> str:
    _expect(isinstance(value, str), f"{where} must be a string")
    return value


def _unique(names: list[str], kind: str) -> frozenset[str]:
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise InvariantError(f"unique-{kind}s", f"duplicate {kind}(s): {', '.join(dup)}")
    return frozenset(names)


def parse_machine(doc: str) -> StateMachine:
    """Parse a machine document.  Raises ModelSyntaxError or InvariantError."""
    try:
        data = json.loads(doc)
    except json.JSONDecodeError as exc:
        raise ModelSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    return machine_from_dict(data)


def machine_from_dict(data) -> StateMachine:
    _check_fields(data, _TOP_FIELDS, _TOP_FIELDS, "machine")
    name = _name(data["name"], "name")
    initial = _name(data["initial"], "initial")
    _expect(isinstance(data["events"], list), "events must be a list")
    events = _unique([_name(e, "event") for e in data["events"]], "event")
    _expect(isinstance(data["states"], list), "states must be a list")
    state_names = []
    timeouts = []
    for i, st in enumerate(data["states"]):
        _check_fields(st, _STATE_FIELDS, {"name"}, f"states[{i}]")
        sname = _name(st["name"], f"states[{i}].name")
        state_names.append(sname)
        has_ms, has_ev = "timeout_ms" in st, "timeout_event" in st
        _expect(has_ms == has_ev, f"states[{i}] needs both timeout_ms and timeout_event")
        if has_ms:
            ms = st["timeout_ms"]
            _expect(isinstance(ms, int) and not isinstance(ms, bool), f"states[{i}].timeout_ms must be an integer")
            timeouts.append(TimeoutSpec(sname, ms, _name(st["timeout_event"], f"states[{i}].timeout_event")))
    states = _unique(state_names, "state")
    _expect(isinstance(data["transitions"], list), "transitions must be a list")
    transitions = []
    for i, tr in enumerate(data["transitions"]):
        _check_fields(tr, _TRANSITION_FIELDS, _TRANSITION_FIELDS, f"transitions[{i}]")
        transitions.append(
            Transition(
                _name(tr["from"], f"transitions[{i}].from"),
                _name(tr["event"], f"transitions[{i}].event"),
                _name(tr["to"], f"transitions[{i}].to"),
            )
        )
    return StateMachine(name, events, states, initial, tuple(transitions), tuple(timeouts))


def machine_to_dict(m: StateMachine) -> dict:
    states = []
    for s in sorted(m.states):
        entry: dict = {"name": s}
        spec = m.timeout_for(s)
        if spec is not None:
            entry["timeout_ms"] = spec.delay_ms
            entry["timeout_event"] = spec.emits
        states.append(entry)
    return {
        "name": m.name,
        "initial": m.initial,
        "events": sorted(m.events),
        "states": states,
        "transitions": [{"from": t.source, "event": t.event, "to": t.target} for t in m.transitions],
    }


def serialize_machine(m: StateMachine) -> str:
    """Canonical document: every list sorted lexicographically."""
    return json.dumps(machine_to_dict(m), indent=2) + "\n"


def load_machine(path) -> StateMachine:
    with open(path, encoding="utf-8") as fh:
        return parse_machine(fh.read())


# -- queries -----------------------------------------------------------------


def exists_state(m: StateMachine, s: str) -> bool:
    return s in m.states


def exists_transition(m: StateMachine, s: str, e: str) -> bool:
    return (s, e) in m.table


def next_state(m: StateMachine, s: str, e: str) -> str | None:
    return m.table.get((s, e))


def event_path(m: StateMachine, source: str, target: str) -> list[str]:
    """Shortest event sequence driving ``m`` from ``source`` to ``target``.

    Breadth-first, expanding each state's transitions in (event, target)
    order, so among equally short paths the lexicographically smallest
    event sequence wins.
    """
    if source == target:
        return []
    parent: dict[str, tuple[str, str]] = {source: ("", "")}
    frontier = deque([source])
    while frontier:
        s = frontier.popleft()
        for event, t in m.outgoing(s):
            if t in parent:
                continue
            parent[t] = (s, event)
            if t == target:
                path = []
                while t != source:
                    t, ev = parent[t]
                    path.append(ev)
                return path[::-1]
            frontier.append(t)
    raise Unreachable(source, target)


def reachable_states(m: StateMachine, start: str | None = None) -> set[str]:
    start = m.initial if start is None else start
    seen = {start}
    stack = [start]
    while stack:
        for _, t in m.outgoing(stack.pop()):
            if t not in seen:
                seen.add(t)
                stack.append(t)
    return seen


@dataclass(frozen=True, order=True)
class Diagnostic:
    kind: str  # unreachable | terminal | dead-timer
    state: str
    detail: str = field(default="", compare=False)

    def __str__(self):
        return f"{self.kind}({self.state})" + (f": {self.detail}" if self.detail else "")


def validate_machine(m: StateMachine) -> list[Diagnostic]:
    """Structural warnings: unreachable states, terminal states, dead timers."""
    out = []
    reach = reachable_states(m)
    for s in sorted(m.states - reach):
        out.append(Diagnostic("unreachable", s, "no path from the initial state"))
    for s in sorted(m.states):
        if not m.outgoing(s):
            out.append(Diagnostic("terminal", s, "no outgoing transitions"))
    for spec in m.timeouts:
        # construction rejects these; kept so hand-built diagnostics stay honest
        if (spec.state, spec.emits) not in m.table:
            out.append(Diagnostic("dead-timer", spec.state, f"{spec.emits} has no effect"))
    return out
