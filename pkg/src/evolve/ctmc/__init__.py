from .analysis import TransientResult, expected_lost, poisson_weights, reach_probability, sweep, transient
from .explicit import Channel, DomainOverflow, ExplicitCtmc, build_explicit
from .model import Command, Exp2Params, GuardedModel, Module, Variable, baseline_model, proposed_model
from .simulate import SimResult, simulate

__all__ = [
    "Channel",
    "Command",
    "DomainOverflow",
    "Exp2Params",
    "ExplicitCtmc",
    "GuardedModel",
    "Module",
    "SimResult",
    "TransientResult",
    "Variable",
    "baseline_model",
    "build_explicit",
    "expected_lost",
    "poisson_weights",
    "proposed_model",
    "reach_probability",
    "simulate",
    "sweep",
    "transient",
]
