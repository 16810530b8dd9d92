"""Simulated appliances and a deterministic scenario harness.

The simulated devices only understand their original model: they change
state on events their machine accepts and ignore everything else.  A
device may also emit feedback events by itself after dwelling in a state
(the robot reports ``endSpot`` when spot cleaning is done).

``run_scenario`` wires a controller script, a device, the converter, its
handlers and timers onto one ``VirtualClock``, so a run is a pure function
of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

from .clock import TimerHandle, VirtualClock
from .evolution import EvolutionPair, ValidatedPair, gate_for_runtime
from .mapek import Converter, HandlerContext, HandlerRegistry, QueueClosed, StepRecord, build_knowledge, passive
from .statechart import StateMachine, parse_machine

DEVICE_KINDS = ("lightbulb", "robot")


class UnknownDeviceKind(ValueError):
    pass


class ScriptError(ValueError):
    pass


class ScenarioError(RuntimeError):
    pass


def bundled_text(name: str) -> str:
    return resources.files("evolve").joinpath("data", name).read_text(encoding="utf-8")


def bundled_machine(kind: str, variant: str) -> StateMachine:
    """``variant`` is ``original`` or ``evolved``."""
    if kind not in DEVICE_KINDS:
        raise UnknownDeviceKind(kind)
    return parse_machine(bundled_text(f"{kind}_{variant}.json"))


def bundled_pair(kind: str) -> EvolutionPair:
    return EvolutionPair(bundled_machine(kind, "original"), bundled_machine(kind, "evolved"))


@dataclass(frozen=True)
class LogEntry:
    time_ms: int
    kind: str  # recv | emit
    event: str
    state: str
    note: str = ""

    def __str__(self):
        if self.kind == "emit":
            return f"t={self.time_ms} emit={self.event}"
        line = f"t={self.time_ms} recv={self.event} state={self.state}"
        return line + (f" note={self.note}" if self.note else "")


@dataclass
class SimulatedDevice:
    machine: StateMachine
    emissions: dict[str, tuple[int, str]] = field(default_factory=dict)  # state -> (dwell_ms, event)
    state: str = ""
    log: list[LogEntry] = field(default_factory=list)

    def __post_init__(self):
        self.state = self.state or self.machine.initial
        for st, (dwell, ev) in self.emissions.items():
            if st not in self.machine.states or ev not in self.machine.events or dwell <= 0:
                raise ValueError(f"bad emission rule {st} -> ({dwell}, {ev})")
        self._clock = None
        self._feedback: Callable[[str], object] | None = None
        self._pending: TimerHandle | None = None

    def attach(self, clock, feedback: Callable[[str], object]):
        self._clock = clock
        self._feedback = feedback
        self._enter(self.state)

    def _now(self) -> int:
        return self._clock.now_ms() if self._clock is not None else 0

    def receive(self, event: str):
        if event not in self.machine.events:
            self.log.append(LogEntry(self._now(), "recv", event, self.state, "unknown-event"))
            return
        target = self.machine.table.get((self.state, event))
        if target is None:
            self.log.append(LogEntry(self._now(), "recv", event, self.state, "no-transition"))
            return
        self.state = target
        self.log.append(LogEntry(self._now(), "recv", event, self.state))
        self._enter(target)

    def _enter(self, state: str):
        if self._pending is not None:
            self._pending.cancel()
            self._pending = None
        rule = self.emissions.get(state)
        if rule is None or self._clock is None:
            return
        dwell, event = rule
        self._pending = self._clock.schedule(dwell, lambda: self._emit(state, event))

    def _emit(self, state: str, event: str):
        if self.state != state:
            return
        self._pending = None
        self.log.append(LogEntry(self._now(), "emit", event, self.state))
        target = self.machine.table.get((self.state, event))
        if target is not None:
            self.state = target
            self._enter(target)
        if self._feedback is not None:
            self._feedback(event)

    def applied_events(self) -> list[str]:
        """Events that reached the device's own machine, in order (received and self-emitted)."""
        return [e.event for e in self.log if e.kind == "emit" or not e.note]


def light_bulb_device() -> SimulatedDevice:
    return SimulatedDevice(bundled_machine("lightbulb", "original"))


def cleaning_robot_device(spot_duration_ms: int = 1000) -> SimulatedDevice:
    if spot_duration_ms <= 0:
        raise ValueError("spot_duration_ms must be positive")
    return SimulatedDevice(bundled_machine("robot", "original"), {"spot": (spot_duration_ms, "endSpot")})


def make_device(kind: str, **config) -> SimulatedDevice:
    if kind == "lightbulb":
        return light_bulb_device()
    if kind == "robot":
        return cleaning_robot_device(config.get("spot_duration_ms", 1000))
    raise UnknownDeviceKind(kind)


def builtin_handlers(device_kind: str, move_duration_ms: int = 500) -> HandlerRegistry:
    reg = HandlerRegistry()
    if device_kind == "robot":

        def move(ctx: HandlerContext):
            def arrived():
                ctx.shared["position"] = "spot"
                try:
                    ctx.enqueue("arriveSpot")
                except QueueClosed:
                    pass

            ctx.shared["position"] = "moving"
            ctx.clock.schedule(move_duration_ms, arrived)

        reg.register("move", move)
        reg.register("spotWait", passive)
    elif device_kind == "lightbulb":

        def incandescent_on(ctx: HandlerContext):
            ctx.shared["color"] = "incandescent"

        reg.register("wait", passive)
        reg.register("incandescentOn", incandescent_on)
    else:
        raise UnknownDeviceKind(device_kind)
    return reg


# -- scripts -----------------------------------------------------------------


@dataclass(frozen=True)
class ScriptStep:
    at_ms: int
    event: str | None  # None: only advance the clock


@dataclass(frozen=True)
class ScenarioScript:
    steps: tuple[ScriptStep, ...]

    def __post_init__(self):
        last = 0
        for s in self.steps:
            if s.at_ms < last:
                raise ScriptError(f"timestamps must be nondecreasing ({s.at_ms} after {last})")
            last = s.at_ms

    @classmethod
    def of(cls, *items) -> "ScenarioScript":
        """``ScenarioScript.of(("clean", 0), ("spot", 1000), 3000)``; a bare int advances the clock."""
        steps = []
        for item in items:
            if isinstance(item, int):
                steps.append(ScriptStep(item, None))
            else:
                event, at = item
                steps.append(ScriptStep(at, event))
        return cls(tuple(steps))


def parse_script(text: str) -> ScenarioScript:
    steps = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "at" and len(parts) == 3:
                steps.append(ScriptStep(int(parts[1]), parts[2]))
            elif parts[0] == "advance" and len(parts) == 2:
                steps.append(ScriptStep(int(parts[1]), None))
            else:
                raise ValueError
        except ValueError:
            raise ScriptError(f"line {lineno}: expected 'at <ms> <event>' or 'advance <ms>', got {raw!r}") from None
        if steps[-1].at_ms < 0:
            raise ScriptError(f"line {lineno}: negative time")
    return ScenarioScript(tuple(steps))


# -- scenario runs -----------------------------------------------------------


@dataclass
class ScenarioResult:
    trace: list[StepRecord]
    device: SimulatedDevice
    converter: Converter
    end_ms: int

    @property
    def device_log(self) -> list[LogEntry]:
        return self.device.log

    @property
    def final_states(self) -> tuple[str, str]:
        k = self.converter.knowledge
        return k.o_state, k.n_state


def run_scenario(
    pair: EvolutionPair | ValidatedPair,
    device: SimulatedDevice,
    script: ScenarioScript,
    handlers,
    clock: VirtualClock | None = None,
    max_steps: int = 10_000,
    listeners=(),
) -> ScenarioResult:
    """Run a script to quiescence: after the last step, pending timers keep firing until none remain."""
    validated = pair if isinstance(pair, ValidatedPair) else gate_for_runtime(pair)
    if device.machine != validated.original:
        raise ScenarioError("device machine differs from the original model of the pair")
    clock = clock or VirtualClock()
    knowledge = build_knowledge(validated, handlers)
    conv = Converter(knowledge, sink=device.receive, clock=clock, running=True, listeners=list(listeners))
    device.attach(clock, lambda ev: conv.enqueue(ev, "device"))

    def drain():
        conv.drain()
        if conv.steps_executed > max_steps:
            raise ScenarioError(f"more than {max_steps} steps; the scenario does not settle")

    drain()
    for s in script.steps:
        clock.advance_to(s.at_ms, after_each=drain)
        if s.event is not None:
            conv.enqueue(s.event, "controller")
            drain()
    while clock.fire_next():
        drain()
    return ScenarioResult(conv.trace, device, conv, clock.now_ms())
