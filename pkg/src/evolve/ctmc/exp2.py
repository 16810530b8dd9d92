"""The converter performance/robustness sweep.

For the baseline system and the converter-mediated system at several mean
conversion times, compute over a time grid

* the probability that the embedded system is in its final step
  (``emb_st = st_max``) at exactly time T, and
* the expected number of lost events up to T,

both by uniformization and by simulation, and check the orderings the
curves are expected to show.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from .analysis import DEFAULT_EPS, sweep
from .explicit import ExplicitCtmc, build_explicit
from .model import Exp2Params, baseline_model, proposed_model
from .simulate import simulate

DEFAULT_CONV = (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4), Fraction(1))
CSV_FIELDS = ("model", "conv_mean_s", "T", "reach_prob", "expected_lost", "reach_se", "lost_se", "method")
# orderings are only meaningful up to the truncation error of the analysis
TOL = 1e-9


@dataclass(frozen=True)
class Row:
    model: str
    conv_mean_s: Fraction | None
    T: float
    reach_prob: float
    expected_lost: float
    reach_se: float | None
    lost_se: float | None
    method: str

    def as_csv(self) -> dict:
        return {
            "model": self.model,
            "conv_mean_s": "" if self.conv_mean_s is None else _num(float(self.conv_mean_s)),
            "T": _num(self.T),
            "reach_prob": repr(self.reach_prob),
            "expected_lost": repr(self.expected_lost),
            "reach_se": "" if self.reach_se is None else repr(self.reach_se),
            "lost_se": "" if self.lost_se is None else repr(self.lost_se),
            "method": self.method,
        }


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def time_grid(t_max: float, step: float) -> list[float]:
    if step <= 0:
        raise ValueError("step must be positive")
    n = int(math.floor(t_max / step + 1e-9))
    return [round(i * step, 9) for i in range(n + 1)]


def model_cells(conv: Sequence[Fraction] = DEFAULT_CONV, base: Exp2Params = Exp2Params(),
                include_baseline: bool = True):
    """(name, conv_mean_s or None, explicit chain) for each model of the sweep."""
    cells = []
    if include_baseline:
        cells.append(("baseline", None, baseline_model(base)))
    for c in conv:
        cells.append(("proposed", Fraction(c), proposed_model(replace(base, conv_mean_s=Fraction(c)))))
    return cells


def final_step_mask(mc: ExplicitCtmc, st_max: int) -> np.ndarray:
    return mc.column("emb_st") == st_max


def exp2(
    conv: Sequence[Fraction] = DEFAULT_CONV,
    times: Sequence[float] = tuple(range(0, 201, 5)),
    runs: int = 100_000,
    seed: int = 2024,
    base: Exp2Params = Exp2Params(),
    methods: Sequence[str] = ("uniformization", "simulation"),
    include_baseline: bool = True,
    eps: float = DEFAULT_EPS,
    workers: int | None = None,
) -> list[Row]:
    cells = model_cells(conv, base, include_baseline)
    times = sorted(float(t) for t in times)

    def run_cell(args):
        index, (name, c, model) = args
        mc = build_explicit(model)
        mask = final_step_mask(mc, base.st_max)
        rows = []
        if "uniformization" in methods:
            reach, lost = sweep(mc, times, mask, eps)
            rows += [Row(name, c, t, float(r), float(l), None, None, "uniformization")
                     for t, r, l in zip(times, reach, lost)]
        if "simulation" in methods:
            # one independent stream per cell
            sim = simulate(mc, times, runs, [seed, index], mask)
            rows += [Row(name, c, t, float(r), float(l), float(rs), float(ls), "simulation")
                     for t, r, l, rs, ls in zip(times, sim.reach_mean, sim.lost_mean, sim.reach_se, sim.lost_se)]
        return rows

    with ThreadPoolExecutor(max_workers=workers) as pool:
        per_cell = list(pool.map(run_cell, enumerate(cells)))
    return [row for rows in per_cell for row in rows]


def write_csv(rows: Sequence[Row], fh=None) -> str:
    buf = fh if fh is not None else io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row.as_csv())
    return buf.getvalue() if fh is None else ""


def read_csv(text: str) -> list[Row]:
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append(Row(
            rec["model"],
            Fraction(rec["conv_mean_s"]) if rec["conv_mean_s"] else None,
            float(rec["T"]),
            float(rec["reach_prob"]),
            float(rec["expected_lost"]),
            float(rec["reach_se"]) if rec["reach_se"] else None,
            float(rec["lost_se"]) if rec["lost_se"] else None,
            rec["method"],
        ))
    return rows


# -- checks ------------------------------------------------------------------


def _curves(rows, method="uniformization"):
    """{(model, conv): (times, reach, lost)} for one method."""
    out: dict = {}
    for r in rows:
        if r.method == method:
            out.setdefault((r.model, r.conv_mean_s), []).append(r)
    return {k: (np.array([r.T for r in v]), np.array([r.reach_prob for r in v]), np.array([r.expected_lost for r in v]))
            for k, v in ((k, sorted(v, key=lambda r: r.T)) for k, v in out.items())}


@dataclass(frozen=True)
class Verdict:
    name: str
    ok: bool
    detail: str

    def __str__(self):
        return f"{self.name} {'OK' if self.ok else 'FAIL'}" + (f" ({self.detail})" if self.detail else "")


def check_monotone_in_time(rows) -> Verdict:
    bad = []
    for key, (t, reach, lost) in _curves(rows).items():
        if np.any(np.diff(reach) < -TOL):
            bad.append(f"reach {key}")
        if np.any(np.diff(lost) < -TOL):
            bad.append(f"lost {key}")
    return Verdict("MONOTONE", not bad, ", ".join(map(str, bad)))


def check_dominance(rows) -> Verdict:
    """Faster conversion never hurts: reach falls and loss grows as the mean conversion time grows."""
    curves = _curves(rows)
    proposed = sorted((c, v) for (m, c), v in curves.items() if m == "proposed")
    bad = []
    for (c1, (t1, r1, l1)), (c2, (t2, r2, l2)) in zip(proposed, proposed[1:]):
        if not np.array_equal(t1, t2):
            bad.append(f"grids differ for {c1} and {c2}")
            continue
        if np.any(r2 - r1 > TOL):
            bad.append(f"reach {c2} > {c1}")
        if np.any(l1 - l2 > TOL):
            bad.append(f"lost {c1} > {c2}")
    return Verdict("DOMINANCE", not bad, "; ".join(bad))


def check_loss_ordering(rows, at: float = 100.0, conv_faster=(Fraction(1, 4), Fraction(1, 2), Fraction(3, 4))) -> Verdict:
    curves = _curves(rows)
    if ("baseline", None) not in curves:
        return Verdict("LOSS-ORDER", True, "skipped: no baseline")
    t, _, lost = curves[("baseline", None)]
    if at not in t:
        return Verdict("LOSS-ORDER", True, f"skipped: T={at:g} not on grid")
    base = lost[list(t).index(at)]
    bad = []
    for c in conv_faster:
        if ("proposed", c) not in curves:
            continue
        tc, _, lc = curves[("proposed", c)]
        value = lc[list(tc).index(at)]
        if not value < base:
            bad.append(f"conv={c}: {value:.4g} >= baseline {base:.4g}")
    return Verdict("LOSS-ORDER", not bad, "; ".join(bad))


def agreement(rows, runs: int, k: float = 3.0):
    """Pair uniformization and simulation rows; return (worst |delta|/SE, list of failures).

    The reach SE is the binomial SE at the analytic probability (the value
    under test), which stays meaningful when no run hit the final step.
    The loss SE is the sample SE.
    """
    exact = {(r.model, r.conv_mean_s, r.T): r for r in rows if r.method == "uniformization"}
    failures = []
    worst = 0.0
    for r in rows:
        if r.method != "simulation":
            continue
        u = exact.get((r.model, r.conv_mean_s, r.T))
        if u is None:
            continue
        p = min(max(u.reach_prob, 0.0), 1.0)
        checks = [
            ("reach", abs(u.reach_prob - r.reach_prob), math.sqrt(p * (1 - p) / runs)),
            ("lost", abs(u.expected_lost - r.expected_lost), r.lost_se or 0.0),
        ]
        for metric, delta, se in checks:
            z = delta / se if se > 0 else (0.0 if delta <= TOL else math.inf)
            worst = max(worst, z)
            if z > k:
                failures.append((r.model, r.conv_mean_s, r.T, metric, delta, se))
    return worst, failures
