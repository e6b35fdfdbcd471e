"""Print localization bounds and threshold windows for a channel configuration."""

import argparse
import json
from pathlib import Path

from slicewm.core import FACTORS
from slicewm.simulation import ExperimentConfig
from slicewm.theory import thm1_factor_bounds, thm1_global_bounds, threshold_window


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", help="JSON experiment config")
    args = ap.parse_args()
    config = ExperimentConfig.from_dict(json.loads(Path(args.config).read_text()) if args.config else {})
    params, layout = config.params, config.build_layout()
    for k in FACTORS:
        b = thm1_factor_bounds(params, k)
        win = threshold_window(params, k)
        span = "infeasible" if win is None else f"[{win.lo:g}, {win.hi:g})"
        print(f"{k.value:4s} {b.kind:5s} {b.value:.4f}  tau window {span}  |region|={layout.region_sizes[k]}")
    lo, hi = thm1_global_bounds(params, layout)
    print(f"global in [{lo:.4f}, {hi:.4f}]")


if __name__ == "__main__":
    main()
