"""Expected lost events at T=100 under alternative readings of the direct-connection baseline.

Prints one table: each proposed converter speed against three baselines,
and the proposed models again with rewarded self-loops left out.
"""

from fractions import Fraction

import numpy as np

from evolve.ctmc import Command, Exp2Params, GuardedModel, Module, Variable, baseline_model, build_explicit, proposed_model
from evolve.ctmc.analysis import sweep
from evolve.ctmc.exp2 import DEFAULT_CONV

T = 100.0


def lost(mc):
    return float(sweep(mc, [T], np.zeros(mc.n, dtype=bool))[1][0])


def lost_without_self_loops(mc):
    """Same as ``lost`` but only rewards firings that change the state."""
    rates = np.array([float(sum(c.rate * c.reward for c in chans if c.target != i))
                      for i, chans in enumerate(mc.channels)])
    mc.reward_rates = rates
    return lost(mc)


def reused_module_baseline(p: Exp2Params) -> GuardedModel:
    """The converter's embedded-system module fed directly by arrivals; loss paid only through emb_lost."""
    m = p.st_max
    emb = Module(
        "EmbeddedSystem",
        (Variable.flag("emb_controlled"), Variable.flag("lost"), Variable("emb_st", 1, m, 1)),
        (
            Command("arrive", lambda v: not v["emb_controlled"], lambda v: {"emb_controlled": 1}, p.event_arrive),
            Command("arrive", lambda v: v["emb_controlled"], lambda v: {"lost": 1}, p.event_arrive),
            Command("emb_lost", lambda v: v["lost"], lambda v: {"lost": 0}, p.emb_lost_rate),
            Command("process", lambda v: v["emb_controlled"],
                    lambda v: {"emb_st": min(v["emb_st"] + 1, m), "emb_controlled": 0, "lost": 0},
                    p.emb_internal_process),
        ),
    )
    return GuardedModel("baseline-reused", (emb,), rewards={"emb_lost": Fraction(1)})


def main():
    p = Exp2Params()
    base = build_explicit(baseline_model(p))
    print(f"baseline, loss per busy arrival:        {lost(base):8.3f}")
    print(f"baseline, same without self-loop loss:  {lost_without_self_loops(build_explicit(baseline_model(p))):8.3f}")
    print(f"baseline, reused embedded module:       {lost(build_explicit(reused_module_baseline(p))):8.3f}")
    print()
    print("conv_mean_s   lost   lost(no self-loops)")
    for c in DEFAULT_CONV:
        model = proposed_model(Exp2Params(conv_mean_s=c))
        print(f"{float(c):10.2f} {lost(build_explicit(model)):7.3f} {lost_without_self_loops(build_explicit(model)):10.3f}")


if __name__ == "__main__":
    main()
