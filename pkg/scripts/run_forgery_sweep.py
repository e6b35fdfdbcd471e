"""Keyless forgery sweep: empirical acceptance rates vs the Chernoff bounds."""

import argparse
import csv
import time
from pathlib import Path

from slicewm.core import build_layout
from slicewm.simulation import acceptance_slack, run_forgery_sweep


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--q", type=float, nargs="+", default=[0.1, 0.2, 0.25])
    ap.add_argument("--tau", type=float, nargs="+", default=[0.3, 0.35, 0.4])
    ap.add_argument("--h", type=int, default=8)
    ap.add_argument("--w", type=int, default=8)
    ap.add_argument("--layout", default="quadrant")
    ap.add_argument("--trials", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/forgery_sweep.csv")
    args = ap.parse_args()

    layout = build_layout(args.h, args.w, args.layout)
    t0 = time.perf_counter()
    reports = run_forgery_sweep(args.q, args.tau, layout, args.trials, args.seed, workers=args.workers)
    elapsed = time.perf_counter() - t0

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fields = ["q", "tau", "p_presence", "presence_bound", "presence_slack", "p_intact", "state1_bound", "state1_slack", "pass"]
    with out.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for r in reports:
            pb, sb = r.presence_bound.bound, r.state1_bound.bound
            writer.writerow({
                "q": r.q,
                "tau": r.tau_global,
                "p_presence": r.p_presence,
                "presence_bound": pb,
                "presence_slack": acceptance_slack(pb, r.trials),
                "p_intact": r.p_intact,
                "state1_bound": sb,
                "state1_slack": acceptance_slack(sb, r.trials),
                "pass": r.presence_pass and r.intact_pass,
            })
            print(f"q={r.q:<5} tau={r.tau_global:<5} P(present)={r.p_presence:.5f} <= {pb:.5f}   "
                  f"P(intact)={r.p_intact:.5f} <= {sb:.5f}   {'ok' if r.presence_pass and r.intact_pass else 'EXCEEDED'}")
    print(f"{len(reports)} grid points x {args.trials} trials in {elapsed:.1f}s -> {out}")


if __name__ == "__main__":
    main()
