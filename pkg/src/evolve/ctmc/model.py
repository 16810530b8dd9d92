"""Guarded-command CTMC models for the converter performance study.

A model is a set of modules.  Each module owns some bounded integer or
boolean variables and a list of commands ``[label] guard -> rate : update``.
Commands sharing a label across modules fire together with the product of
their rates; a label used by only one module, or no label, interleaves.
An omitted rate counts as 1.  Transition rewards are attached to labels.

Rates and constants are kept as ``Fraction`` until the explicit chain is
assembled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping

Valuation = Mapping[str, int]


@dataclass(frozen=True)
class Variable:
    name: str
    low: int
    high: int
    init: int
    boolean: bool = False

    @classmethod
    def flag(cls, name: str, init: bool = False) -> "Variable":
        return cls(name, 0, 1, int(init), boolean=True)

    def __post_init__(self):
        if not self.low <= self.init <= self.high:
            raise ValueError(f"initial value of {self.name} outside [{self.low}..{self.high}]")


@dataclass(frozen=True)
class Command:
    label: str | None
    guard: Callable[[Valuation], bool]
    update: Callable[[Valuation], dict[str, int]]
    rate: Fraction | None = None  # None: unspecified, i.e. 1
    text: str = ""

    def rate_value(self) -> Fraction:
        return Fraction(1) if self.rate is None else Fraction(self.rate)


@dataclass(frozen=True)
class Module:
    name: str
    variables: tuple[Variable, ...]
    commands: tuple[Command, ...]


@dataclass(frozen=True)
class GuardedModel:
    name: str
    modules: tuple[Module, ...]
    rewards: Mapping[str, Fraction] = field(default_factory=dict)  # label -> reward per firing
    constants: Mapping[str, Fraction] = field(default_factory=dict)

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError("variable declared twice")
        for label in self.rewards:
            if label not in self.labels:
                raise ValueError(f"reward on unknown label {label!r}")

    @property
    def variables(self) -> tuple[Variable, ...]:
        return tuple(v for m in self.modules for v in m.variables)

    @property
    def labels(self) -> set[str]:
        return {c.label for m in self.modules for c in m.commands if c.label is not None}

    def initial(self) -> dict[str, int]:
        return {v.name: v.init for v in self.variables}


@dataclass(frozen=True)
class Exp2Params:
    st_max: int = 20
    event_arrive: Fraction = Fraction(1, 2)
    emb_internal_process: Fraction = Fraction(1)
    conv_mean_s: Fraction = Fraction(1, 4)
    emb_lost_rate: Fraction = Fraction(1)

    def __post_init__(self):
        for name in ("event_arrive", "emb_internal_process", "conv_mean_s", "emb_lost_rate"):
            value = Fraction(getattr(self, name))
            object.__setattr__(self, name, value)
            if value <= 0:
                raise ValueError(f"{name} must be positive")
        if self.st_max < 1:
            raise ValueError("st_max must be at least 1")

    @property
    def conv_internal_process(self) -> Fraction:
        return 1 / self.conv_mean_s


def _set(**kw):
    return lambda v: dict(kw)


def proposed_model(p: Exp2Params = Exp2Params()) -> GuardedModel:
    """Converter in front of the embedded system; the controller is implicit in the arrival rate."""
    st_max = p.st_max
    converter = Module(
        "Converter",
        (Variable.flag("arrived"), Variable("conv_st", 1, st_max, 1)),
        (
            Command("arrived", lambda v: not v["arrived"], _set(arrived=1), p.event_arrive,
                    "[arrived] arrived=false -> event_arrive : (arrived'=true)"),
            Command("conv_lost", lambda v: v["arrived"], _set(arrived=1), p.event_arrive,
                    "[conv_lost] arrived=true -> event_arrive : (arrived'=true)"),
            Command("control", lambda v: v["arrived"],
                    lambda v: {"conv_st": min(v["conv_st"] + 1, st_max), "arrived": 0},
                    p.conv_internal_process,
                    "[control] arrived -> conv_internal_process : (conv_st'=min(conv_st+1,st_max))&(arrived'=false)"),
        ),
    )
    embedded = Module(
        "EmbeddedSystem",
        (Variable.flag("emb_controlled"), Variable.flag("lost"), Variable("emb_st", 1, st_max, 1)),
        (
            Command("control", lambda v: not v["emb_controlled"], _set(emb_controlled=1), None,
                    "[control] emb_controlled=false -> (emb_controlled'=true)"),
            Command("control", lambda v: v["emb_controlled"], _set(lost=1), None,
                    "[control] emb_controlled=true -> (lost'=true)"),
            Command("emb_lost", lambda v: v["lost"], _set(lost=0), p.emb_lost_rate,
                    "[emb_lost] lost=true -> (lost'=false)"),
            Command("process", lambda v: v["emb_controlled"],
                    lambda v: {"emb_st": min(v["emb_st"] + 1, st_max), "emb_controlled": 0, "lost": 0},
                    p.emb_internal_process,
                    "[process] emb_controlled=true -> emb_internal_process : "
                    "(emb_st'=min(emb_st+1,st_max))&(emb_controlled'=false)&(lost'=false)"),
        ),
    )
    return GuardedModel(
        f"proposed(conv={p.conv_mean_s})",
        (converter, embedded),
        rewards={"conv_lost": Fraction(1), "emb_lost": Fraction(1)},
        constants={
            "st_max": Fraction(st_max),
            "event_arrive": p.event_arrive,
            "emb_internal_process": p.emb_internal_process,
            "conv_internal_process": p.conv_internal_process,
        },
    )


def baseline_model(p: Exp2Params = Exp2Params()) -> GuardedModel:
    """The embedded system receiving controller events directly.

    An event arriving while the system is still busy is lost and paid for
    immediately; otherwise the system starts processing it.
    """
    st_max = p.st_max
    embedded = Module(
        "EmbeddedSystem",
        (Variable.flag("emb_controlled"), Variable.flag("lost"), Variable("emb_st", 1, st_max, 1)),
        (
            Command("arrive", lambda v: not v["emb_controlled"], _set(emb_controlled=1), p.event_arrive,
                    "[arrive] emb_controlled=false -> event_arrive : (emb_controlled'=true)"),
            Command("emb_lost", lambda v: v["emb_controlled"], _set(lost=1), p.event_arrive,
                    "[emb_lost] emb_controlled=true -> event_arrive : (lost'=true)"),
            Command("process", lambda v: v["emb_controlled"],
                    lambda v: {"emb_st": min(v["emb_st"] + 1, st_max), "emb_controlled": 0, "lost": 0},
                    p.emb_internal_process,
                    "[process] emb_controlled=true -> emb_internal_process : "
                    "(emb_st'=min(emb_st+1,st_max))&(emb_controlled'=false)&(lost'=false)"),
        ),
    )
    return GuardedModel(
        "baseline",
        (embedded,),
        rewards={"emb_lost": Fraction(1)},
        constants={
            "st_max": Fraction(st_max),
            "event_arrive": p.event_arrive,
            "emb_internal_process": p.emb_internal_process,
        },
    )
