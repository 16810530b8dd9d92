"""Explicit state-space construction for guarded-command models."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy import sparse

from .model import GuardedModel


class DomainOverflow(ValueError):
    pass


@dataclass(frozen=True)
class Channel:
    """One way a state can fire: joint command, its rate, and the reward paid."""

    target: int
    rate: Fraction
    reward: Fraction
    label: str | None


@dataclass
class ExplicitCtmc:
    variables: tuple[str, ...]
    states: list[tuple[int, ...]]
    rates: sparse.csr_matrix  # off-diagonal only
    exit_rates: np.ndarray
    reward_rates: np.ndarray  # includes rewarded self-loops
    channels: list[list[Channel]]
    initial: int = 0

    @property
    def n(self) -> int:
        return len(self.states)

    def valuation(self, i: int) -> dict[str, int]:
        return dict(zip(self.variables, self.states[i]))

    def column(self, name: str) -> np.ndarray:
        j = self.variables.index(name)
        return np.fromiter((s[j] for s in self.states), dtype=np.int64, count=self.n)

    def mask(self, predicate: Callable[[dict], bool]) -> np.ndarray:
        return np.array([bool(predicate(self.valuation(i))) for i in range(self.n)])


def _joint_commands(model: GuardedModel, val: dict[str, int]):
    """Yield (label, [commands]) for every enabled joint firing."""
    by_label: dict[str, list[list]] = {}
    for module in model.modules:
        seen_here: dict[str, list] = {}
        for cmd in module.commands:
            if cmd.label is None:
                if cmd.guard(val):
                    yield None, [(module, cmd)]
                continue
            seen_here.setdefault(cmd.label, [])
            if cmd.guard(val):
                seen_here[cmd.label].append((module, cmd))
        for label, enabled in seen_here.items():
            by_label.setdefault(label, []).append(enabled)
    for label in sorted(by_label):
        for combo in itertools.product(*by_label[label]):
            yield label, list(combo)


def _successor(model: GuardedModel, val: dict[str, int], parts) -> dict[str, int]:
    new = dict(val)
    domains = {v.name: v for v in model.variables}
    for module, cmd in parts:
        own = {v.name for v in module.variables}
        for name, value in cmd.update(val).items():
            if name not in own:
                raise ValueError(f"module {module.name} updates foreign variable {name}")
            var = domains[name]
            if not var.low <= value <= var.high:
                raise DomainOverflow(f"{cmd.text or cmd.label}: {name}={value} outside [{var.low}..{var.high}]")
            new[name] = int(value)
    return new


def build_explicit(model: GuardedModel) -> ExplicitCtmc:
    names = tuple(v.name for v in model.variables)
    init = tuple(v.init for v in model.variables)
    index = {init: 0}
    states = [init]
    channels: list[list[Channel]] = []
    todo = deque([init])
    while todo:
        s = todo.popleft()
        val = dict(zip(names, s))
        out = []
        for label, parts in _joint_commands(model, val):
            rate = Fraction(1)
            for _, cmd in parts:
                rate *= cmd.rate_value()
            if rate <= 0:
                continue
            succ = _successor(model, val, parts)
            key = tuple(succ[n] for n in names)
            if key not in index:
                index[key] = len(states)
                states.append(key)
                todo.append(key)
            reward = model.rewards.get(label, Fraction(0)) if label is not None else Fraction(0)
            out.append(Channel(index[key], rate, reward, label))
        channels.append(out)

    n = len(states)
    agg: dict[tuple[int, int], Fraction] = {}
    reward_rates = np.zeros(n)
    for i, chans in enumerate(channels):
        rr = Fraction(0)
        for ch in chans:
            rr += ch.rate * ch.reward
            if ch.target != i:
                agg[(i, ch.target)] = agg.get((i, ch.target), Fraction(0)) + ch.rate
        reward_rates[i] = float(rr)
    if agg:
        rows, cols = zip(*agg)
        vals = [float(r) for r in agg.values()]
    else:
        rows, cols, vals = (), (), ()
    rates = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    exit_rates = np.asarray(rates.sum(axis=1)).ravel()
    return ExplicitCtmc(names, states, rates, exit_rates, reward_rates, channels, 0)
