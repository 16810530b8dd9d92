"""``evolve`` command line: validate model pairs, replay scenarios, run live, sweep the CTMC study.

Exit codes: 0 success, 1 domain failure (gate, invariant check), 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import socket
import socketserver
import sys
import threading
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from . import tracefmt
from .clock import WallClock
from .devices import (
    DEVICE_KINDS,
    ScriptError,
    builtin_handlers,
    bundled_machine,
    bundled_text,
    make_device,
    parse_script,
    run_scenario,
)
from .evolution import (
    ConditionsViolated,
    EvolutionPair,
    InitialStateMismatch,
    UnreachableStates,
    dumps_report,
    gate_for_runtime,
    report_json,
)
from .mapek import Converter, InvalidCommand, QueueClosed, build_knowledge
from .statechart import InvariantError, ModelSyntaxError, load_machine

log = logging.getLogger("evolve")

GATE_ERRORS = (ConditionsViolated, UnreachableStates, InitialStateMismatch)


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    original: str | None
    evolved: str | None
    device: str  # a device kind, or host:port of an external device
    handlers: str | None
    clock: str  # virtual | wall
    listen: str | None = None
    control: str | None = None
    trace: str | None = None
    log_style: str = "tabular"

    @property
    def external_device(self) -> bool:
        return self.device not in DEVICE_KINDS

    @property
    def handler_set(self) -> str:
        kind = self.handlers or (None if self.external_device else self.device)
        if kind is None:
            raise UsageError("--handlers is required with an external device endpoint")
        return kind

    def check(self):
        if self.clock not in ("virtual", "wall"):
            raise UsageError(f"unknown clock mode {self.clock!r}")
        if self.clock == "virtual" and (self.external_device or self.listen or self.control):
            raise UsageError("the virtual clock cannot be used with network endpoints")
        if self.external_device:
            parse_endpoint(self.device)
        for p in (self.original, self.evolved):
            if p is not None and not Path(p).exists():
                raise UsageError(f"no such file: {p}")
        if self.log_style not in ("tabular", "paper"):
            raise UsageError(f"unknown log style {self.log_style!r}")

    def pair(self) -> EvolutionPair:
        kind = self.handler_set
        original = load_machine(self.original) if self.original else bundled_machine(kind, "original")
        evolved = load_machine(self.evolved) if self.evolved else bundled_machine(kind, "evolved")
        return EvolutionPair(original, evolved)


def parse_endpoint(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise UsageError(f"expected host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8"), True


# -- validate ----------------------------------------------------------------


def cmd_validate(args) -> int:
    pair = EvolutionPair(load_machine(args.original), load_machine(args.evolved))
    data = report_json(pair)
    print(dumps_report(data))
    return 0 if data["gate"] is None else 1


# -- scenario ----------------------------------------------------------------


def _read_script(ref: str) -> str:
    if ref.startswith("bundled:"):
        name = ref.split(":", 1)[1].removesuffix(".script") + ".script"
        try:
            return bundled_text(name)
        except OSError:
            raise UsageError(f"no bundled script named {name}") from None
    try:
        return Path(ref).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read script {ref}: {exc.strerror}") from None


def cmd_scenario(args) -> int:
    cfg = RunConfig(args.original, args.evolved, args.device, args.handlers, "virtual",
                    trace=args.trace, log_style=args.log_style)
    cfg.check()
    if cfg.external_device:
        raise UsageError(f"unknown device kind {args.device!r}; expected one of {', '.join(DEVICE_KINDS)}")
    script = parse_script(_read_script(args.script))
    pair = cfg.pair()
    validated = gate_for_runtime(pair)
    device = make_device(args.device, spot_duration_ms=args.spot_ms)
    handlers = builtin_handlers(cfg.handler_set, move_duration_ms=args.move_ms)
    result = run_scenario(validated, device, script, handlers)
    out, close = _open_out(args.trace)
    try:
        if args.log_style == "paper":
            out.write(tracefmt.render_blocks_trace(result.trace))
        else:
            out.write(tracefmt.format_trace(result.trace))
    finally:
        if close:
            out.close()
    if args.device_log:
        Path(args.device_log).write_text("".join(f"{e}\n" for e in result.device_log), encoding="utf-8")
    o, n = result.final_states
    log.info("final states: original=%s evolved=%s at t=%d ms", o, n, result.end_ms)
    return 0


# -- run (live) --------------------------------------------------------------


class _LineServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


def _line_handler(on_line, on_close):
    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            peer = "%s:%d" % self.client_address[:2]
            try:
                for raw in self.rfile:
                    line = raw.decode("utf-8", "replace").strip()
                    if line:
                        reply = on_line(line)
                        if reply is not None:
                            self.wfile.write((reply + "\n").encode("utf-8"))
                            self.wfile.flush()
            except (ConnectionError, OSError):
                pass
            finally:
                on_close(peer)

    return Handler


class LiveSession:
    """Sockets around one converter: controller events in, device events both ways, control commands."""

    def __init__(self, cfg: RunConfig, out, start_running: bool = True):
        self.cfg = cfg
        self.out = out
        self.clock = WallClock()
        self._out_lock = threading.Lock()
        validated = gate_for_runtime(cfg.pair())
        handlers = builtin_handlers(cfg.handler_set)
        self._device_sock = None
        self._device = None
        if cfg.external_device:
            self._device_sock = socket.create_connection(parse_endpoint(cfg.device), timeout=5)
            self._device_sock.settimeout(None)
            sink = self._send_device
        else:
            self._device = make_device(cfg.device)
            sink = self._device.receive
        knowledge = build_knowledge(validated, handlers)
        self.converter = Converter(knowledge, sink=sink, clock=self.clock, listeners=[self._write_record])
        if self._device is not None:
            self._device.attach(self.clock, lambda ev: self._post(ev, "device"))
        self.controller_server = _LineServer(
            parse_endpoint(cfg.listen or "127.0.0.1:0"),
            _line_handler(lambda line: self._post(line, "controller"), lambda p: self._note(f"controller {p} disconnected")),
        )
        self.control_server = _LineServer(
            parse_endpoint(cfg.control or "127.0.0.1:0"),
            _line_handler(self._control, lambda p: self._note(f"control {p} disconnected")),
        )
        if start_running:
            self.converter.control("start")

    @property
    def endpoints(self) -> dict:
        def fmt(server):
            host, port = server.server_address[:2]
            return f"{host}:{port}"

        return {"controller": fmt(self.controller_server), "control": fmt(self.control_server)}

    def _send_device(self, event: str):
        self._device_sock.sendall((event + "\n").encode("utf-8"))

    def _device_reader(self):
        try:
            with self._device_sock.makefile("rb") as fh:
                for raw in fh:
                    line = raw.decode("utf-8", "replace").strip()
                    if line:
                        self._post(line, "device")
        except (ConnectionError, OSError, ValueError):
            pass
        if not self.converter.exited:
            self._note("device disconnected")

    def _post(self, name: str, source: str):
        try:
            self.converter.enqueue(name, source)
        except QueueClosed:
            self._note(f"dropped {source} event {name}: converter exited")
        return None

    def _control(self, line: str) -> str:
        try:
            reply = self.converter.control(line)
        except InvalidCommand as exc:
            reply = {"ok": False, "error": str(exc)}
        return json.dumps(reply, sort_keys=True)

    def _write(self, text: str):
        with self._out_lock:
            self.out.write(text)
            self.out.flush()

    def _write_record(self, rec):
        if self.cfg.log_style == "paper":
            self._write(tracefmt.render_blocks(rec))
        else:
            self._write(tracefmt.format_record(rec) + "\n")

    def _note(self, text: str):
        log.info(text)
        self._write(f"# {text}\n")

    def serve(self) -> str:
        threads = [
            threading.Thread(target=self.controller_server.serve_forever, daemon=True),
            threading.Thread(target=self.control_server.serve_forever, daemon=True),
        ]
        if self._device_sock is not None:
            threads.append(threading.Thread(target=self._device_reader, daemon=True))
        for t in threads:
            t.start()
        try:
            return self.converter.run_loop()
        finally:
            self.shutdown()

    def shutdown(self):
        for server in (self.controller_server, self.control_server):
            server.shutdown()
            server.server_close()
        self.clock.cancel_all()
        if self._device_sock is not None:
            try:
                self._device_sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self._device_sock.close()


def cmd_run(args) -> int:
    cfg = RunConfig(args.original, args.evolved, args.device, args.handlers, "wall",
                    listen=args.listen, control=args.control, trace=args.trace, log_style=args.log_style)
    cfg.check()
    out, close = _open_out(args.trace)
    try:
        try:
            session = LiveSession(cfg, out, start_running=not args.paused)
        except OSError as exc:
            print(f"evolve: cannot open endpoint: {exc}", file=sys.stderr)
            return 1
        print(json.dumps({"listening": session.endpoints}), file=sys.stderr, flush=True)
        status = session.serve()
        log.info("loop %s after %d steps", status, session.converter.steps_executed)
    finally:
        if close:
            out.close()
    return 0


# -- exp2 --------------------------------------------------------------------


def _fractions(text: str) -> list[Fraction]:
    try:
        values = [Fraction(part) for part in text.replace(" ", ",").split(",") if part]
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None
    if not values or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError("values must be positive")
    return values


def cmd_exp2(args) -> int:
    from .ctmc import exp2 as sweep_mod
    from .ctmc.model import Exp2Params

    conv = [c for group in args.conv for c in group] if args.conv else list(sweep_mod.DEFAULT_CONV)
    methods = ("uniformization", "simulation") if args.method == "both" else (args.method,)
    times = sweep_mod.time_grid(args.t_max, args.step)
    base = Exp2Params(emb_lost_rate=args.emb_lost_rate)
    rows = sweep_mod.exp2(conv, times, args.runs, args.seed, base, methods, include_baseline=not args.no_baseline)
    out, close = _open_out(args.out)
    try:
        sweep_mod.write_csv(rows, out)
    finally:
        if close:
            out.close()
    verdicts = []
    if "uniformization" in methods:
        verdicts += [sweep_mod.check_monotone_in_time(rows), sweep_mod.check_dominance(rows),
                     sweep_mod.check_loss_ordering(rows)]
    if len(methods) == 2:
        worst, failures = sweep_mod.agreement(rows, args.runs)
        detail = f"worst {worst:.2f} SE"
        if failures:
            detail += "; " + ", ".join(f"{m} {c} T={t:g} {metric}" for m, c, t, metric, *_ in failures[:5])
        verdicts.append(sweep_mod.Verdict("AGREEMENT", not failures, detail))
    print("; ".join(str(v) for v in verdicts), file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return 0 if all(v.ok for v in verdicts) else 1


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evolve", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check an original/evolved model pair")
    v.add_argument("--original", required=True)
    v.add_argument("--evolved", required=True)
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("scenario", help="replay a controller script on a simulated device (virtual clock)")
    s.add_argument("--device", required=True, choices=DEVICE_KINDS)
    s.add_argument("--script", required=True, help="script file, or bundled:<name>")
    s.add_argument("--original")
    s.add_argument("--evolved")
    s.add_argument("--handlers", choices=DEVICE_KINDS)
    s.add_argument("--trace", help="trace output (default stdout)")
    s.add_argument("--device-log")
    s.add_argument("--log-style", choices=("tabular", "paper"), default="tabular")
    s.add_argument("--move-ms", type=int, default=500)
    s.add_argument("--spot-ms", type=int, default=1000)
    s.set_defaults(func=cmd_scenario)

    r = sub.add_parser("run", help="run the converter live on TCP sockets")
    r.add_argument("--device", required=True, help=f"{' | '.join(DEVICE_KINDS)} | host:port")
    r.add_argument("--handlers", choices=DEVICE_KINDS)
    r.add_argument("--original")
    r.add_argument("--evolved")
    r.add_argument("--listen", default="127.0.0.1:0", help="controller endpoint host:port")
    r.add_argument("--control", default="127.0.0.1:0", help="control endpoint host:port")
    r.add_argument("--trace")
    r.add_argument("--log-style", choices=("tabular", "paper"), default="tabular")
    r.add_argument("--paused", action="store_true", help="wait for 'start' before consuming events")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("exp2", help="CTMC sweep over conversion times")
    e.add_argument("--conv", type=_fractions, action="append", help="mean conversion times, e.g. 0.25,0.5")
    e.add_argument("--t-max", type=float, default=200.0)
    e.add_argument("--step", type=float, default=5.0)
    e.add_argument("--runs", type=int, default=100_000)
    e.add_argument("--seed", type=int, default=2024)
    e.add_argument("--emb-lost-rate", type=Fraction, default=Fraction(1))
    e.add_argument("--method", choices=("both", "uniformization", "simulation"), default="both")
    e.add_argument("--no-baseline", action="store_true")
    e.add_argument("--out", help="CSV output (default stdout)")
    e.set_defaults(func=cmd_exp2)
    return p


def main(argv=None) -> int:
    level = logging.getLevelName(os.environ.get("EVOLVE_LOG", "WARNING").upper())
    logging.basicConfig(
        level=level if isinstance(level, int) else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ModelSyntaxError, InvariantError, ScriptError, UsageError) as exc:
        print(f"evolve: {exc}", file=sys.stderr)
        return 2
    except GATE_ERRORS as exc:
        print(f"evolve: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
