"""The event converter: a monitor/analyze/plan/execute loop over shared knowledge.

Events from the controller, the device and from new-function handlers
enter one FIFO queue.  For each event the converter looks the transition
up in the evolved model.  If the evolved model moves to a state the
device already has, the converter plans the shortest original-model event
sequence from the device's current state and forwards it; if the target is
a new state, the registered handler runs instead and the device is left
alone.  Events the evolved model does not accept are dropped.

``step`` is pure: it only decides.  ``Converter`` applies the decision
(device sends, handler launches, timers) and owns all mutable state.
"""

from __future__ import annotations

import logging
import threading
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Mapping

from .evolution import ValidatedPair
from .statechart import StateMachine, Unreachable, event_path

log = logging.getLogger(__name__)

Source = Literal["controller", "device", "internal"]
Mode = Literal["existing", "new", "rejected"]
SOURCES = ("controller", "device", "internal")
COMMANDS = ("start", "stop", "status", "exit")


class QueueClosed(RuntimeError):
    pass


class MissingHandler(LookupError):
    def __init__(self, state: str):
        self.state = state
        super().__init__(f"no handler registered for new state {state!r}")


class DuplicateHandler(ValueError):
    def __init__(self, state: str):
        self.state = state
        super().__init__(f"handler for {state!r} already registered")


class InvalidCommand(ValueError):
    pass


@dataclass(frozen=True)
class IncomingEvent:
    name: str
    source: Source
    seq: int


@dataclass(frozen=True)
class ActionSpec:
    kind: Literal["forward", "invoke", "none"]
    events: tuple[str, ...] = ()
    handler: str | None = None

    @classmethod
    def forward(cls, events) -> "ActionSpec":
        events = tuple(events)
        return cls("forward", events) if events else cls.none()

    @classmethod
    def invoke(cls, handler: str) -> "ActionSpec":
        return cls("invoke", (), handler)

    @classmethod
    def none(cls) -> "ActionSpec":
        return cls("none")


@dataclass(frozen=True)
class StepRecord:
    event: IncomingEvent
    mode: Mode
    action: ActionSpec
    o_before: str
    o_after: str
    n_before: str
    n_after: str
    error: str | None = None


# -- handlers ----------------------------------------------------------------


@dataclass
class HandlerContext:
    """What a new-function handler gets: a way to post events, and nothing that mutates knowledge."""

    state: str
    record: StepRecord
    clock: object
    shared: dict
    _post: Callable[[str], int]

    def enqueue(self, event: str) -> int:
        return self._post(event)


Handler = Callable[[HandlerContext], None]


class HandlerRegistry(dict):
    """Maps a new state's name to the function that implements it."""

    def register(self, state: str, entry: Handler) -> "HandlerRegistry":
        if state in self:
            raise DuplicateHandler(state)
        self[state] = entry
        return self


def register_handler(reg: HandlerRegistry, state: str, entry: Handler) -> HandlerRegistry:
    return reg.register(state, entry)


def passive(ctx: HandlerContext) -> None:
    """Handler for new states whose behaviour is entirely timers and transitions."""


# -- knowledge ---------------------------------------------------------------


@dataclass(frozen=True)
class TableEntry:
    next: str
    kind: Literal["forward", "invoke"]
    handler: str | None = None


@dataclass
class Knowledge:
    original: StateMachine
    evolved: StateMachine
    o_state: str
    n_state: str
    table: Mapping[tuple[str, str], TableEntry]
    handlers: Mapping[str, Handler]

    def get_transition(self, state: str, event: str) -> TableEntry | None:
        return self.table.get((state, event))


def build_knowledge(pair: ValidatedPair, handlers: Mapping[str, Handler]) -> Knowledge:
    if not isinstance(pair, ValidatedPair):
        raise TypeError("build_knowledge needs a pair produced by gate_for_runtime")
    o, n = pair.original, pair.evolved
    for state in sorted(pair.diff.new_states):
        if state not in handlers:
            raise MissingHandler(state)
    table = {}
    for t in n.transitions:
        if t.target in o.states:
            table[(t.source, t.event)] = TableEntry(t.target, "forward")
        else:
            table[(t.source, t.event)] = TableEntry(t.target, "invoke", t.target)
    return Knowledge(o, n, o.initial, n.initial, table, dict(handlers))


def step(k: Knowledge, e: IncomingEvent) -> StepRecord:
    """Decide what to do with one event.  Does not touch ``k``."""
    o_state, n_state = k.o_state, k.n_state
    entry = k.get_transition(n_state, e.name)
    if entry is None:
        return StepRecord(e, "rejected", ActionSpec.none(), o_state, o_state, n_state, n_state)
    if entry.kind == "forward":
        try:
            plan = event_path(k.original, o_state, entry.next)
        except Unreachable as exc:
            return StepRecord(
                e, "rejected", ActionSpec.none(), o_state, o_state, n_state, n_state, f"PlanFailure: {exc}"
            )
        return StepRecord(e, "existing", ActionSpec.forward(plan), o_state, entry.next, n_state, entry.next)
    return StepRecord(e, "new", ActionSpec.invoke(entry.handler), o_state, o_state, n_state, entry.next)


# -- queue -------------------------------------------------------------------


class EventQueue:
    """Multi-producer FIFO with a single consumer."""

    def __init__(self):
        self.cond = threading.Condition()
        self._items: deque[IncomingEvent] = deque()
        self._seq = 0
        self.closed = False

    def put(self, name: str, source: Source = "controller") -> int:
        if source not in SOURCES:
            raise ValueError(f"unknown event source {source!r}")
        with self.cond:
            if self.closed:
                raise QueueClosed("event queue is closed")
            self._seq += 1
            self._items.append(IncomingEvent(name, source, self._seq))
            self.cond.notify_all()
            return self._seq

    def pop(self) -> IncomingEvent | None:
        with self.cond:
            return self._items.popleft() if self._items else None

    def close(self):
        with self.cond:
            self.closed = True
            self.cond.notify_all()

    def __len__(self):
        with self.cond:
            return len(self._items)


def enqueue(q: EventQueue, name: str, source: Source = "controller") -> int:
    return q.put(name, source)


# -- the loop ----------------------------------------------------------------


@dataclass
class Converter:
    knowledge: Knowledge
    sink: Callable[[str], None]
    clock: object
    queue: EventQueue = field(default_factory=EventQueue)
    running: bool = False
    shared: dict = field(default_factory=dict)
    listeners: list[Callable[[StepRecord], None]] = field(default_factory=list)

    def __post_init__(self):
        self.trace: list[StepRecord] = []
        self.delivered: list[str] = []
        self.steps_executed = 0
        self.exited = False
        self._step_lock = threading.RLock()
        self._timer_lock = threading.Lock()
        self._timer_gen = 0
        self._timer = None
        self._arm_timer(self.knowledge.n_state)

    # producers

    def enqueue(self, name: str, source: Source = "controller") -> int:
        return self.queue.put(name, source)

    # consumer

    def process_next(self) -> StepRecord | None:
        """Take one event off the queue and handle it, if the loop is running."""
        with self._step_lock:
            if self.exited or not self.running:
                return None
            event = self.queue.pop()
            if event is None:
                return None
            record = self._apply(step(self.knowledge, event))
            self.trace.append(record)
            self.steps_executed += 1
        for listener in self.listeners:
            listener(record)
        return record

    def drain(self) -> list[StepRecord]:
        out = []
        while (rec := self.process_next()) is not None:
            out.append(rec)
        return out

    def run_loop(self) -> str:
        """Blocking consumer for live mode.  Returns once ``exit`` is received."""
        q = self.queue
        while True:
            with q.cond:
                q.cond.wait_for(lambda: self.exited or (self.running and len(q._items) > 0))
                if self.exited:
                    return "exited"
            self.process_next()

    def _apply(self, rec: StepRecord) -> StepRecord:
        k = self.knowledge
        k.o_state, k.n_state = rec.o_after, rec.n_after
        errors = [rec.error] if rec.error else []
        if rec.action.kind == "forward":
            for ev in rec.action.events:
                try:
                    self.sink(ev)
                except Exception as exc:  # device trouble must not stop the converter
                    log.warning("sink failed on %s: %s", ev, exc)
                    errors.append(f"SinkFailure: {ev}: {exc}")
                    break
                self.delivered.append(ev)
        if rec.mode != "rejected":
            self._arm_timer(rec.n_after)
        if errors:
            rec = replace(rec, error="; ".join(errors))
        if rec.action.kind == "invoke":
            entry = k.handlers[rec.action.handler]
            ctx = HandlerContext(rec.n_after, rec, self.clock, self.shared, self._post_internal)
            self.clock.spawn(lambda: entry(ctx))
        return rec

    def _post_internal(self, name: str) -> int:
        return self.queue.put(name, "internal")

    def _arm_timer(self, state: str):
        with self._timer_lock:
            self._timer_gen += 1
            if self._timer is not None:
                self._timer.cancel()
                self._timer = None
            spec = self.knowledge.evolved.timeout_for(state)
            if spec is None:
                return
            gen = self._timer_gen

            def fire():
                with self._timer_lock:
                    if gen != self._timer_gen:
                        return
                    self._timer = None
                try:
                    self.queue.put(spec.emits, "internal")
                except QueueClosed:
                    pass

            self._timer = self.clock.schedule(spec.delay_ms, fire)

    # control channel

    def status(self) -> dict:
        with self._step_lock:
            return {
                "running": self.running,
                "oState": self.knowledge.o_state,
                "nState": self.knowledge.n_state,
                "queue_depth": len(self.queue),
                "steps_executed": self.steps_executed,
            }

    def control(self, cmd: str) -> dict:
        cmd = cmd.strip()
        if cmd not in COMMANDS:
            raise InvalidCommand(f"unknown command {cmd!r}; expected one of {', '.join(COMMANDS)}")
        if cmd == "status":
            return self.status()
        with self.queue.cond:
            if cmd == "start" and not self.exited:
                self.running = True
            elif cmd == "stop":
                self.running = False
            elif cmd == "exit":
                self.running = False
                self.exited = True
            self.queue.cond.notify_all()
        if cmd == "exit":
            self.queue.close()
            with self._timer_lock:
                self._timer_gen += 1
                if self._timer is not None:
                    self._timer.cancel()
                    self._timer = None
            cancel_all = getattr(self.clock, "cancel_all", None)
            if cancel_all is not None:
                cancel_all()
        reply = {"ok": True, "command": cmd}
        reply.update(self.status())
        return reply
