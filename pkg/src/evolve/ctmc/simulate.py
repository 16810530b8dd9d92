"""Exact-jump stochastic simulation of an explicit chain.

Independent check for the uniformization results: it draws exponential
holding times and categorical jumps from the per-state firing channels
(rewarded self-loops included) and counts reward at each rewarded firing,
instead of integrating reward rates.  All runs advance in lockstep as
numpy vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .explicit import ExplicitCtmc


@dataclass(frozen=True)
class SimResult:
    times: np.ndarray
    reach_mean: np.ndarray
    reach_se: np.ndarray
    lost_mean: np.ndarray
    lost_se: np.ndarray
    runs: int


def _channel_tables(mc: ExplicitCtmc):
    width = max(1, max((len(c) for c in mc.channels), default=1))
    cum = np.zeros((mc.n, width))
    target = np.tile(np.arange(mc.n)[:, None], (1, width))
    reward = np.zeros((mc.n, width))
    total = np.zeros(mc.n)
    for i, chans in enumerate(mc.channels):
        acc = 0.0
        for j, ch in enumerate(chans):
            acc += float(ch.rate)
            cum[i, j] = acc
            target[i, j] = ch.target
            reward[i, j] = float(ch.reward)
        cum[i, len(chans):] = np.inf
        total[i] = acc
    return cum, target, reward, total


def simulate(
    mc: ExplicitCtmc,
    times: float | Sequence[float],
    runs: int,
    seed: int | Sequence[int],
    mask: np.ndarray | None = None,
) -> SimResult:
    """Estimate P[state in mask at t] and E[reward on [0, t]] for each t in ``times``."""
    if runs < 1:
        raise ValueError("runs must be at least 1")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(np.diff(times) < 0) or np.any(times < 0):
        raise ValueError("times must be nonnegative and sorted")
    if mask is None:
        mask = np.zeros(mc.n, dtype=bool)
    rng = np.random.default_rng(seed)
    cum, target, reward_tab, total = _channel_tables(mc)

    n_t = len(times)
    state = np.full(runs, mc.initial, dtype=np.int64)
    clock = np.zeros(runs)
    reward = np.zeros(runs)
    nxt = np.zeros(runs, dtype=np.int64)  # index of the next checkpoint per run
    seen_state = np.zeros((n_t, runs), dtype=np.int64)
    seen_reward = np.zeros((n_t, runs))
    active = np.arange(runs)

    while active.size:
        s = state[active]
        rate = total[s]
        with np.errstate(divide="ignore"):
            hold = rng.exponential(size=active.size) / rate
        leave = clock[active] + hold
        # record every checkpoint passed while sitting in the current state
        for c in range(n_t):
            hit = (nxt[active] == c) & (leave > times[c])
            if hit.any():
                idx = active[hit]
                seen_state[c, idx] = state[idx]
                seen_reward[c, idx] = reward[idx]
                nxt[idx] += 1
        alive = nxt[active] < n_t
        active, s, rate, leave = active[alive], s[alive], rate[alive], leave[alive]
        if not active.size:
            break
        u = rng.random(active.size) * rate
        pick = (cum[s] <= u[:, None]).sum(axis=1)
        reward[active] += reward_tab[s, pick]
        state[active] = target[s, pick]
        clock[active] = leave

    hits = mask[seen_state].astype(float)
    sq = np.sqrt(runs)
    return SimResult(
        times,
        hits.mean(axis=1),
        hits.std(axis=1, ddof=1) / sq if runs > 1 else np.zeros(n_t),
        seen_reward.mean(axis=1),
        seen_reward.std(axis=1, ddof=1) / sq if runs > 1 else np.zeros(n_t),
        runs,
    )
