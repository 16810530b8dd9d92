"""Replay the bundled device scenarios and print their traces in the Monitor/Analyze/Plan/Execute layout."""

import argparse

from evolve.devices import bundled_pair, bundled_text, builtin_handlers, make_device, parse_script, run_scenario
from evolve.tracefmt import format_trace, render_blocks_trace

SCENARIOS = [
    ("robot", "robot_spot.script"),
    ("robot", "robot_spot_wait.script"),
    ("lightbulb", "lightbulb_timeout.script"),
    ("lightbulb", "lightbulb_incandescent.script"),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--tabular", action="store_true", help="one line per step instead of blocks")
    args = ap.parse_args()
    for kind, script in SCENARIOS:
        res = run_scenario(bundled_pair(kind), make_device(kind), parse_script(bundled_text(script)),
                           builtin_handlers(kind))
        print(f"=== {kind}: {script} (ends at t={res.end_ms} ms, states {res.final_states}) ===")
        print(format_trace(res.trace) if args.tabular else render_blocks_trace(res.trace))
        print("device log:")
        for entry in res.device_log:
            print(f"  {entry}")
        print()


if __name__ == "__main__":
    main()
