"""Monte-Carlo check of the localization bounds under compliant simulated channels.

    python3 scripts/run_localization.py --trials 1000 --out results/localization
"""

import argparse
import json
import time
from pathlib import Path

from slicewm.simulation import ExperimentConfig, run_localization_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", help="JSON experiment config; defaults are used otherwise")
    ap.add_argument("--trials", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--placement", choices=["random", "adversarial"])
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/localization")
    args = ap.parse_args()

    data = json.loads(Path(args.config).read_text()) if args.config else {}
    for name, value in (("trials", args.trials), ("master_seed", args.seed), ("placement", args.placement)):
        if value is not None:
            data[name] = value
    config = ExperimentConfig.from_dict(data)

    t0 = time.perf_counter()
    report = run_localization_experiment(config, workers=args.workers)
    elapsed = time.perf_counter() - t0

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trials.csv").write_text(report.to_csv())
    summary = report.summary()
    summary["seconds"] = round(elapsed, 2)
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")

    print(f"{config.trials} trials in {elapsed:.1f}s, {report.violation_count} with violations")
    for k, s in summary["factors"].items():
        print(f"  {k}: m in [{s['min']:.4f}, {s['max']:.4f}]  {s['bound_kind']} bound {s['bound']:.4f}")
    g = summary["global"]
    print(f"  global: m in [{g['min']:.4f}, {g['max']:.4f}]  bounds [{g['bound_lower']:.4f}, {g['bound_upper']:.4f}]")


if __name__ == "__main__":
    main()
