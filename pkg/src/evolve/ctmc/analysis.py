"""Transient analysis by uniformization.

With ``q = unif_factor * max exit rate`` the chain is the Poisson(q t)
subordination of the jump chain ``P = I + Q/q``, so

    pi(T)            = sum_k  w_k(qT)              * pi0 P^k
    int_0^T pi(t) dt = sum_k  P[N(qT) > k] / q     * pi0 P^k

where ``w_k`` are Poisson weights.  Both sums are truncated once the
neglected Poisson mass drops below ``eps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .explicit import ExplicitCtmc

UNIF_FACTOR = 1.02
DEFAULT_EPS = 1e-10


@dataclass(frozen=True)
class PoissonWeights:
    weights: np.ndarray  # w_0..w_K
    tails: np.ndarray  # P[N > k] for k = 0..K
    right: int  # truncation point: 1 - sum(w_0..w_right) <= eps
    error: float


def poisson_weights(lam: float, eps: float = DEFAULT_EPS) -> PoissonWeights:
    """Poisson(lam) probabilities by recurrence outward from the mode."""
    if lam < 0:
        raise ValueError("Poisson mean must be nonnegative")
    if lam == 0:
        return PoissonWeights(np.array([1.0]), np.array([0.0]), 0, 0.0)
    mode = int(math.floor(lam))
    hi = int(math.ceil(lam + 12.0 * math.sqrt(lam) + 40))
    w = np.zeros(hi + 1)
    w[mode] = math.exp(-lam + mode * math.log(lam) - math.lgamma(mode + 1))
    for k in range(mode, hi):
        w[k + 1] = w[k] * lam / (k + 1)
    for k in range(mode, 0, -1):
        w[k - 1] = w[k] * k / lam
    # tails[k] = P[N > k], summed from the far end so small tails keep their precision
    tails = np.concatenate([np.cumsum(w[::-1])[::-1][1:], [0.0]])
    below = np.nonzero(tails <= eps)[0]
    right = int(below[0]) if below.size else hi
    return PoissonWeights(w[: right + 1], tails[: right + 1], right, float(tails[right]))


@dataclass(frozen=True)
class TransientResult:
    time: float
    distribution: np.ndarray
    error_bound: float
    unif_rate: float
    terms: int


def _uniform_rate(mc: ExplicitCtmc) -> float:
    top = float(mc.exit_rates.max()) if mc.n else 0.0
    return UNIF_FACTOR * top if top > 0 else 1.0


def _initial(mc: ExplicitCtmc) -> np.ndarray:
    pi = np.zeros(mc.n)
    pi[mc.initial] = 1.0
    return pi


def _powers(mc: ExplicitCtmc, q: float, count: int):
    """Yield pi0 P^k for k = 0..count-1."""
    rates_t = mc.rates.T.tocsr()
    stay = 1.0 - mc.exit_rates / q
    pi = _initial(mc)
    for _ in range(count):
        yield pi
        pi = pi * stay + (rates_t @ pi) / q


def transient(mc: ExplicitCtmc, T: float, eps: float = DEFAULT_EPS) -> TransientResult:
    if T < 0:
        raise ValueError("T must be nonnegative")
    q = _uniform_rate(mc)
    pw = poisson_weights(q * T, eps)
    dist = np.zeros(mc.n)
    for w, pi in zip(pw.weights, _powers(mc, q, pw.right + 1)):
        dist += w * pi
    return TransientResult(T, dist, pw.error, q, pw.right + 1)


def reach_probability(mc: ExplicitCtmc, predicate: Callable[[dict], bool] | np.ndarray, T: float,
                      eps: float = DEFAULT_EPS) -> float:
    mask = predicate if isinstance(predicate, np.ndarray) else mc.mask(predicate)
    return float(transient(mc, T, eps).distribution[mask].sum())


def expected_lost(mc: ExplicitCtmc, T: float, eps: float = DEFAULT_EPS) -> float:
    """Expected reward accumulated on [0, T] (the lost-event count for the converter models)."""
    return float(sweep(mc, [T], np.zeros(mc.n, dtype=bool), eps)[1][0])


def sweep(mc: ExplicitCtmc, times: Sequence[float], mask: np.ndarray, eps: float = DEFAULT_EPS):
    """Reach probability of ``mask`` and expected cumulative reward at every time in ``times``.

    The kernel powers are shared across all times.
    """
    times = [float(t) for t in times]
    if any(t < 0 for t in times):
        raise ValueError("times must be nonnegative")
    q = _uniform_rate(mc)
    weights = [poisson_weights(q * t, eps) for t in times]
    count = max(pw.right for pw in weights) + 1
    in_mask = np.empty(count)
    reward = np.empty(count)
    maskf = mask.astype(float)
    for k, pi in enumerate(_powers(mc, q, count)):
        in_mask[k] = maskf @ pi
        reward[k] = mc.reward_rates @ pi
    reach = np.array([pw.weights @ in_mask[: pw.right + 1] for pw in weights])
    lost = np.array([pw.tails @ reward[: pw.right + 1] / q for pw in weights])
    return reach, lost
