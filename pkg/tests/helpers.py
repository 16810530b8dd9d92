"""Random model generators and independent reference implementations for the tests.

Nothing here calls into the planner or the converter under test.
"""

from __future__ import annotations

import math
import random

from evolve.evolution import EvolutionPair, gate_for_runtime
from evolve.statechart import StateMachine, machine

# -- generators ----------------------------------------------------------------


def random_machine(rng: random.Random, max_states=10, max_events=5, density=None, name="m") -> StateMachine:
    n_states = rng.randint(1, max_states)
    n_events = rng.randint(1, max_events)
    states = [f"s{i}" for i in range(n_states)]
    events = [f"e{i}" for i in range(n_events)]
    p = rng.uniform(0.15, 0.8) if density is None else density
    transitions = [(s, e, rng.choice(states)) for s in states for e in events if rng.random() < p]
    return machine(name, states[0], transitions, states=states, events=events)


def random_pair(rng: random.Random, max_states=6, max_events=3, max_new_states=3, max_new_events=2):
    """A pair that passes the runtime gate.  Returns None when a draw does not."""
    o = random_machine(rng, max_states, max_events, name="orig")
    new_states = [f"n{i}" for i in range(rng.randint(0, max_new_states))]
    new_events = [f"x{i}" for i in range(rng.randint(0, max_new_events))]
    states = sorted(o.states) + new_states
    events = sorted(o.events) + new_events
    table = dict(o.table)
    # redirect or drop some original transitions
    for key in list(table):
        r = rng.random()
        if r < 0.2:
            table[key] = rng.choice(states)
        elif r < 0.25:
            del table[key]
    # make every new state reachable, then sprinkle more transitions
    known = sorted(o.states)
    for ns in new_states:
        for _ in range(10):
            key = (rng.choice(known), rng.choice(events))
            if key not in table:
                table[key] = ns
                break
        known.append(ns)
    for s in states:
        for e in events:
            if (s, e) not in table and rng.random() < 0.3:
                table[(s, e)] = rng.choice(states)
    n = machine("evol", o.initial, [(s, e, t) for (s, e), t in table.items()], states=states, events=events)
    try:
        return gate_for_runtime(EvolutionPair(o, n))
    except ValueError:
        return None


def random_validated_pairs(seed: int, count: int, **kw):
    rng = random.Random(seed)
    out = []
    while len(out) < count:
        vp = random_pair(rng, **kw)
        if vp is not None:
            out.append(vp)
    return out


def random_script(rng: random.Random, events, length=20):
    return [rng.choice(sorted(events)) for _ in range(length)]


# -- shortest-path oracle --------------------------------------------------------


def all_pairs_distance(m: StateMachine) -> dict:
    """Floyd-Warshall over the transition graph (unit weights)."""
    states = sorted(m.states)
    d = {(a, b): (0 if a == b else math.inf) for a in states for b in states}
    for (s, _), t in m.table.items():
        if s != t:
            d[(s, t)] = 1
    for k in states:
        for i in states:
            dik = d[(i, k)]
            if dik == math.inf:
                continue
            for j in states:
                if dik + d[(k, j)] < d[(i, j)]:
                    d[(i, j)] = dik + d[(k, j)]
    return d


def oracle_path(m: StateMachine, source: str, target: str, dist=None):
    """Lexicographically smallest among the shortest event sequences, or None if unreachable.

    Depth-first over event sequences in sorted order, pruned to branches that
    can still reach the target within the known shortest length.
    """
    dist = dist or all_pairs_distance(m)
    length = dist[(source, target)]
    if length == math.inf:
        return None
    events = sorted(m.events)

    def dfs(u, remaining):
        if remaining == 0:
            return [] if u == target else None
        for e in events:
            v = m.table.get((u, e))
            if v is not None and dist[(v, target)] <= remaining - 1:
                rest = dfs(v, remaining - 1)
                if rest is not None:
                    return [e] + rest
        return None

    return dfs(source, length)


def brute_force_path(m: StateMachine, source: str, target: str):
    """Enumerate every event sequence by length, then lexicographically (small machines only)."""
    import itertools

    events = sorted(m.events)
    for length in range(len(m.states) + 1):
        for seq in itertools.product(events, repeat=length):
            s = source
            for e in seq:
                s = m.table.get((s, e))
                if s is None:
                    break
            if s == target:
                return list(seq)
    return None


def fold(m: StateMachine, start: str, events):
    s = start
    for e in events:
        s = m.table.get((s, e), s)
    return s


# -- reference converter -----------------------------------------------------------


def reference_converter(original: StateMachine, evolved: StateMachine, script):
    """Straight transcription of the converter loop, one tuple per event.

    Tuple: (mode, sent events, handler, o_after, n_after).  The original
    state is set to the evolved target after a forward plan (the plan may
    hold several events), and a target the original machine cannot reach
    from its current state rejects the event.
    """
    o_state, n_state = original.initial, evolved.initial
    out = []
    dist = all_pairs_distance(original)
    for event in script:
        if (n_state, event) in evolved.table:
            nxt = evolved.table[(n_state, event)]
            if nxt in original.states:
                plan = oracle_path(original, o_state, nxt, dist)
                if plan is None:
                    out.append(("rejected", (), None, o_state, n_state))
                    continue
                o_state = nxt
                n_state = nxt
                out.append(("existing", tuple(plan), None, o_state, n_state))
            else:
                n_state = nxt
                out.append(("new", (), nxt, o_state, n_state))
        else:
            out.append(("rejected", (), None, o_state, n_state))
    return out


def bfs_layer_path(m: StateMachine, source: str, target: str):
    """Layered breadth-first search keeping, per state, the smallest sequence of its first layer.

    Equal-length sequences compare like their prefixes, so extending each
    layer's minimal prefixes yields the minimal path of the next layer.
    """
    best = {source: []}
    frontier = {source}
    while target not in best and frontier:
        layer: dict = {}
        for u in frontier:
            for (s, e), v in m.table.items():
                if s == u and v not in best:
                    cand = best[u] + [e]
                    if v not in layer or cand < layer[v]:
                        layer[v] = cand
        best.update(layer)
        frontier = set(layer)
    return best.get(target)
