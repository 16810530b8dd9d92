"""Trace serialization.

Tabular form, one line per step::

    seq=3\tevent=arriveSpot\tsrc=internal\tmode=existing\tsent=spot\thandler=-\to=on>spot\tn=move>spot

An ``error=<text>`` column is appended only when the step carried an error.

The block form (log style ``paper``) renders each step as a Monitor/Analyze/Plan/Execute
block with capitalized state and event names.  It is lossless for models
whose names start with a lowercase letter, and ``parse_blocks`` inverts it.
"""

from __future__ import annotations

import re

from .mapek import ActionSpec, IncomingEvent, StepRecord

_HEADER = {"controller": "button_event", "device": "device_event", "internal": "internal_event"}
_SOURCE = {v: k for k, v in _HEADER.items()}
_MODE = {"existing": "Use existing functions", "new": "Use new functions", "rejected": "Reject event"}
_MODE_BACK = {v: k for k, v in _MODE.items()}


class TraceFormatError(ValueError):
    pass


def format_record(rec: StepRecord) -> str:
    a = rec.action
    cols = [
        f"seq={rec.event.seq}",
        f"event={rec.event.name}",
        f"src={rec.event.source}",
        f"mode={rec.mode}",
        "sent=" + (",".join(a.events) if a.events else "-"),
        "handler=" + (a.handler if a.kind == "invoke" else "-"),
        f"o={rec.o_before}>{rec.o_after}",
        f"n={rec.n_before}>{rec.n_after}",
    ]
    if rec.error:
        cols.append("error=" + rec.error.replace("\t", " ").replace("\n", " "))
    return "\t".join(cols)


def format_trace(records) -> str:
    return "".join(format_record(r) + "\n" for r in records)


def _action(sent: str, handler: str) -> ActionSpec:
    if sent != "-":
        return ActionSpec.forward(sent.split(","))
    if handler != "-":
        return ActionSpec.invoke(handler)
    return ActionSpec.none()


def parse_record(line: str) -> StepRecord:
    try:
        fields = dict(col.split("=", 1) for col in line.rstrip("\n").split("\t"))
        o_before, o_after = fields["o"].split(">")
        n_before, n_after = fields["n"].split(">")
        return StepRecord(
            IncomingEvent(fields["event"], fields["src"], int(fields["seq"])),
            fields["mode"],
            _action(fields["sent"], fields["handler"]),
            o_before,
            o_after,
            n_before,
            n_after,
            fields.get("error"),
        )
    except (KeyError, ValueError) as exc:
        raise TraceFormatError(f"bad trace line {line!r}: {exc}") from None


def parse_trace(text: str) -> list[StepRecord]:
    """Parse tabular trace text; blank lines and ``#`` notes (live-mode peer events) are skipped."""
    return [parse_record(line) for line in text.splitlines() if line.strip() and not line.startswith("#")]


def cap(name: str) -> str:
    return name[:1].upper() + name[1:]


def uncap(name: str) -> str:
    return name[:1].lower() + name[1:]


def render_blocks(rec: StepRecord) -> str:
    e = rec.event
    lines = [
        f"----   {_HEADER[e.source]} : {cap(e.name)}   -----   #{e.seq}",
        "",
        "Monitor",
        f" inputs {cap(e.name)} event.",
        "Analyze",
        f" original_current_state: {cap(rec.o_before)}",
        f" new_current_state: {cap(rec.n_before)}",
        f" mode: {_MODE[rec.mode]}",
        "Plan",
    ]
    if not rec.action.events:
        lines.append(" MAPE-K loop does not send events.")
    lines.append("Execute")
    for ev in rec.action.events:
        lines.append(f" MAPE-K loop will send this event : {cap(ev)}")
    if rec.action.kind == "invoke":
        lines.append(f" Operate existing functions for {cap(rec.action.handler)} in the another thread")
    lines.append(f" original_current_state: {cap(rec.o_after)}")
    lines.append(f" new_current_state: {cap(rec.n_after)}")
    if rec.error:
        lines.append(f" error: {rec.error}")
    lines.append("")
    return "\n".join(lines) + "\n"


def render_blocks_trace(records) -> str:
    return "".join(render_blocks(r) for r in records)


_HEADER_RE = re.compile(r"^----   (\w+) : (\w+)   -----   #(\d+)$")


def parse_blocks(text: str) -> list[StepRecord]:
    blocks: list[list[str]] = []
    for line in text.splitlines():
        if _HEADER_RE.match(line):
            blocks.append([line])
        elif blocks:
            blocks[-1].append(line)
        elif line.strip():
            raise TraceFormatError(f"text before first step header: {line!r}")
    return [_parse_block(b) for b in blocks]


def _parse_block(block: list[str]) -> StepRecord:
    kind, name, seq = _HEADER_RE.match(block[0]).groups()
    states: list[str] = []
    sent: list[str] = []
    handler = None
    mode = None
    error = None
    for line in block[1:]:
        s = line.strip()
        if s.startswith("original_current_state:") or s.startswith("new_current_state:"):
            states.append(uncap(s.split(":", 1)[1].strip()))
        elif s.startswith("mode:"):
            mode = _MODE_BACK[s.split(":", 1)[1].strip()]
        elif s.startswith("MAPE-K loop will send this event :"):
            sent.append(uncap(s.split(":", 1)[1].strip()))
        elif s.startswith("Operate existing functions for "):
            handler = uncap(s[len("Operate existing functions for ") :].split()[0])
        elif s.startswith("error:"):
            error = s.split(":", 1)[1].strip()
    if mode is None or len(states) != 4:
        raise TraceFormatError(f"incomplete step block starting {block[0]!r}")
    if sent:
        action = ActionSpec.forward(sent)
    elif handler is not None:
        action = ActionSpec.invoke(handler)
    else:
        action = ActionSpec.none()
    o_before, n_before, o_after, n_after = states
    return StepRecord(
        IncomingEvent(uncap(name), _SOURCE[kind], int(seq)), mode, action, o_before, o_after, n_before, n_after, error
    )
