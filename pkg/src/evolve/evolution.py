"""Checks that an evolved model extends the original one, and what changed.

The evolved model must keep every original event and every original state;
transitions may be added or redirected.  ``diff`` classifies the change
and ``gate_for_runtime`` is the single entry point that turns a pair of
models into something the converter will accept.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .statechart import StateMachine, Transition, reachable_states, validate_machine


class ConditionsViolated(ValueError):
    def __init__(self, report: "ConditionReport"):
        self.report = report
        parts = []
        if report.missing_events:
            parts.append("missing events: " + ", ".join(sorted(report.missing_events)))
        if report.missing_states:
            parts.append("missing states: " + ", ".join(sorted(report.missing_states)))
        super().__init__("evolved model drops original elements (" + "; ".join(parts) + ")")


class UnreachableStates(ValueError):
    def __init__(self, states):
        self.states = sorted(states)
        super().__init__("unreachable states in evolved model: " + ", ".join(self.states))


class InitialStateMismatch(ValueError):
    def __init__(self, original: str, evolved: str):
        self.original = original
        self.evolved = evolved
        super().__init__(f"initial states differ: original {original!r}, evolved {evolved!r}")


@dataclass(frozen=True)
class EvolutionPair:
    original: StateMachine
    evolved: StateMachine


@dataclass(frozen=True)
class ConditionReport:
    condition1_holds: bool
    condition2_holds: bool
    missing_events: frozenset[str] = frozenset()
    missing_states: frozenset[str] = frozenset()

    @property
    def ok(self) -> bool:
        return self.condition1_holds and self.condition2_holds

    def to_dict(self) -> dict:
        return {
            "condition1_holds": self.condition1_holds,
            "condition2_holds": self.condition2_holds,
            "missing_events": sorted(self.missing_events),
            "missing_states": sorted(self.missing_states),
        }


@dataclass(frozen=True)
class EvolutionDiff:
    new_states: frozenset[str]
    new_events: frozenset[str]
    retained_transitions: frozenset[Transition]
    added_transitions: frozenset[Transition]
    # (original, evolved) pairs sharing (source, event)
    modified_transitions: frozenset[tuple[Transition, Transition]]
    removed_transitions: frozenset[Transition]
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        def tr(t: Transition) -> dict:
            return {"from": t.source, "event": t.event, "to": t.target}

        return {
            "new_states": sorted(self.new_states),
            "new_events": sorted(self.new_events),
            "retained_transitions": [tr(t) for t in sorted(self.retained_transitions)],
            "added_transitions": [tr(t) for t in sorted(self.added_transitions)],
            "modified_transitions": [
                {"from": o.source, "event": o.event, "original_to": o.target, "evolved_to": n.target}
                for o, n in sorted(self.modified_transitions)
            ],
            "removed_transitions": [tr(t) for t in sorted(self.removed_transitions)],
            "warnings": list(self.warnings),
        }


def check_conditions(pair: EvolutionPair) -> ConditionReport:
    o, n = pair.original, pair.evolved
    missing_events = frozenset(o.events - n.events)
    missing_states = frozenset(o.states - n.states)
    return ConditionReport(
        condition1_holds=not missing_events,
        condition2_holds=not missing_states,
        missing_events=missing_events,
        missing_states=missing_states,
    )


def diff(pair: EvolutionPair) -> EvolutionDiff:
    report = check_conditions(pair)
    if not report.ok:
        raise ConditionsViolated(report)
    o, n = pair.original, pair.evolved
    retained, added, modified, removed = set(), set(), set(), set()
    for t in n.transitions:
        before = o.table.get((t.source, t.event))
        if before is None:
            added.add(t)
        elif before == t.target:
            retained.add(t)
        else:
            modified.add((Transition(t.source, t.event, before), t))
    for t in o.transitions:
        if (t.source, t.event) not in n.table:
            removed.add(t)
    warnings = tuple(f"removed transition {t}" for t in sorted(removed))
    return EvolutionDiff(
        new_states=frozenset(n.states - o.states),
        new_events=frozenset(n.events - o.events),
        retained_transitions=frozenset(retained),
        added_transitions=frozenset(added),
        modified_transitions=frozenset(modified),
        removed_transitions=frozenset(removed),
        warnings=warnings,
    )


@dataclass(frozen=True)
class ValidatedPair:
    """A pair that passed ``gate_for_runtime``; only construct it through the gate."""

    pair: EvolutionPair
    report: ConditionReport
    diff: EvolutionDiff
    warnings: tuple[str, ...] = field(default=())

    @property
    def original(self) -> StateMachine:
        return self.pair.original

    @property
    def evolved(self) -> StateMachine:
        return self.pair.evolved


def gate_for_runtime(pair: EvolutionPair) -> ValidatedPair:
    report = check_conditions(pair)
    if not report.ok:
        raise ConditionsViolated(report)
    unreachable = pair.evolved.states - reachable_states(pair.evolved)
    if unreachable:
        raise UnreachableStates(unreachable)
    if pair.original.initial != pair.evolved.initial:
        raise InitialStateMismatch(pair.original.initial, pair.evolved.initial)
    d = diff(pair)
    warnings = [f"original: {w}" for w in validate_machine(pair.original)]
    warnings += [f"evolved: {w}" for w in validate_machine(pair.evolved)]
    warnings += list(d.warnings)
    return ValidatedPair(pair, report, d, tuple(warnings))


def report_json(pair: EvolutionPair) -> dict:
    """Everything ``evolve validate`` prints; ``gate`` is null when the pair passes."""
    report = check_conditions(pair)
    out: dict = {"conditions": report.to_dict(), "diff": None, "gate": None}
    if report.ok:
        out["diff"] = diff(pair).to_dict()
    try:
        gate_for_runtime(pair)
    except (ConditionsViolated, UnreachableStates, InitialStateMismatch) as exc:
        out["gate"] = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, UnreachableStates):
            out["gate"]["states"] = exc.states
    return out


def dumps_report(data: dict) -> str:
    return json.dumps(data, indent=2, sort_keys=True)
