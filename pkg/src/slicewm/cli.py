"""Command-line entry point.

Exit codes: 0 State I, 2 State II, 3 State III (``verify``); 0 success otherwise;
1 on any error, including bad usage.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import secrets
import sys
from collections.abc import Sequence
from pathlib import Path

from slicewm import slce
from slicewm.core import FACTORS, FactorKey, SecretKey, format_mask, read_mask, resolve_layout, validate_layout
from slicewm.detection import DEFAULT_LOCAL_RATIO, DEFAULT_TAU_GLOBAL, DEFAULT_TAU_LOCAL, ThresholdSet
from slicewm.pipeline import ImageBundle, StubDiffusionBackend, embed_pipeline, read_descriptors, verify_pipeline
from slicewm.simulation import ExperimentConfig, records_to_csv, run_forgery_experiment, run_localization_experiment
from slicewm.theory import ChannelParams, thm1_factor_bounds, thm1_global_bounds, thm2_presence_bound, thm2_state1_bound, threshold_window

KEY_ENV = "SLICE_KEY_PATH"


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _per_factor_arg(text: str) -> float | dict[str, float]:
    """``0.5`` or ``sub=0.5,env=0.4,act=0.5,det=0.5``."""
    if "=" not in text:
        return float(text)
    out = {}
    for part in text.split(","):
        name, _, value = part.partition("=")
        out[FactorKey.parse(name).value] = float(value)
    return out


def _seed_or_random(seed: int | None, label: str = "seed") -> int:
    if seed is not None:
        return seed
    seed = secrets.randbits(63)
    print(f"{label}: {seed}", file=sys.stderr)
    return seed


def _load_key(path: str | None) -> SecretKey:
    path = path or os.environ.get(KEY_ENV)
    if not path:
        raise CliError(f"no key given; pass --key or set {KEY_ENV}")
    if not Path(path).is_file():
        raise CliError(f"key file not found: {path}")
    return SecretKey.load(path)


def _thresholds(args: argparse.Namespace) -> ThresholdSet:
    return ThresholdSet(tau_global=args.tau_global, tau_local=args.tau_local, local_ratio=args.local_ratio)


def _add_threshold_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau-global", type=float, default=DEFAULT_TAU_GLOBAL, help="global match-ratio threshold")
    p.add_argument("--tau-local", type=_per_factor_arg, default=DEFAULT_TAU_LOCAL, help="per-position L2 distance threshold(s)")
    p.add_argument("--local-ratio", type=_per_factor_arg, default=DEFAULT_LOCAL_RATIO, help="per-region match-ratio threshold(s)")


def _write_or_print(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def keygen_bytes(seed: int | None = None) -> bytes:
    if seed is None:
        return secrets.token_bytes(SecretKey.LENGTH)
    # testing hook only: reproducible, not secret
    return hashlib.sha256(b"slicewm.keygen" + seed.to_bytes(8, "little")).digest()


def cmd_keygen(args: argparse.Namespace) -> int:
    SecretKey(keygen_bytes(args.seed)).save(args.out)
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    key = _load_key(args.key)
    if not Path(args.descriptors).is_file():
        raise CliError(f"descriptor file not found: {args.descriptors}")
    descriptors = read_descriptors(args.descriptors)
    layout = resolve_layout(args.h, args.w, args.layout)
    bundle, _ = embed_pipeline(descriptors, args.prompt, layout, args.d, key)
    bundle.save(args.out)
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    key = _load_key(args.key)
    if not Path(args.bundle).is_dir():
        raise CliError(f"bundle directory not found: {args.bundle}")
    bundle = ImageBundle.load(args.bundle)
    h, w, d = slce.read_header(bundle.payload)
    layout = resolve_layout(h, w, args.layout)
    seed = 0 if args.noise_sigma == 0 else _seed_or_random(args.seed)
    backend = StubDiffusionBackend(args.noise_sigma, seed)
    report = verify_pipeline(bundle, layout, d, key, _thresholds(args), backend)
    _write_or_print(report.to_json(), args.report)
    if args.report:
        print(f"state {report.state.value}", file=sys.stderr)
    return report.state.exit_code


def cmd_simulate_localization(args: argparse.Namespace) -> int:
    data = json.loads(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
    if args.trials is not None:
        data["trials"] = args.trials
    if args.placement is not None:
        data["placement"] = args.placement
    data["master_seed"] = args.seed if args.seed is not None else data.get("master_seed", _seed_or_random(None))
    config = ExperimentConfig.from_dict(data)
    report = run_localization_experiment(config, workers=args.workers)
    _write_or_print(report.to_csv(), args.csv)
    summary = json.dumps(report.summary(), indent=2) + "\n"
    _write_or_print(summary, args.summary)
    return 0 if report.violation_count == 0 else 4


def cmd_simulate_forgery(args: argparse.Namespace) -> int:
    layout = resolve_layout(args.h, args.w, args.layout)
    seed = _seed_or_random(args.seed)
    th = ThresholdSet(tau_global=args.tau_global, local_ratio=args.local_ratio)
    report = run_forgery_experiment(
        args.q, layout, th, args.trials, seed, workers=args.workers, keep_records=bool(args.csv)
    )
    if args.csv:
        Path(args.csv).write_text(records_to_csv(report.records), encoding="utf-8")
    _write_or_print(json.dumps(report.summary(), indent=2) + "\n", args.summary)
    return 0 if report.presence_pass and report.intact_pass else 4


BOUNDS_FIELDS = ["thm", "kind", "factor", "q", "tau", "hw", "bound", "log_bound", "applicable", "window_lo", "window_hi"]


def bounds_rows(args: argparse.Namespace) -> list[dict]:
    rows: list[dict] = []
    if args.thm == 2:
        if not args.q:
            raise CliError("--thm 2 needs --q")
        for q in args.q:
            for tau in args.tau_g:
                for hw in args.hw:
                    b = thm2_presence_bound(q, tau, hw)
                    rows.append(dict(thm=2, kind="presence", q=q, tau=tau, hw=hw, bound=b.bound, log_bound=b.log_bound, applicable=b.applicable))
            if args.local_ratio is not None:
                layout = resolve_layout(args.h, args.w, args.layout)
                ratio = ThresholdSet(local_ratio=args.local_ratio).local_ratio
                b = thm2_state1_bound(q, ratio, layout.region_sizes)
                tau_text = ";".join(f"{k.value}={ratio[k]}" for k in FACTORS)
                rows.append(dict(thm=2, kind="state1", q=q, tau=tau_text, hw=layout.hw, bound=b.bound, log_bound=b.log_bound, applicable=b.applicable))
    else:
        if not args.config:
            raise CliError("--thm 1 needs --config")
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        params = ChannelParams.from_dict(data.get("params", data))
        layout = resolve_layout(data.get("h", args.h), data.get("w", args.w), data.get("layout", args.layout))
        for k in FACTORS:
            fb = thm1_factor_bounds(params, k)
            win = threshold_window(params, k)
            rows.append(
                dict(
                    thm=1, kind=fb.kind, factor=k.value, hw=layout.hw, bound=fb.value, applicable=win is not None,
                    window_lo="" if win is None else win.lo, window_hi="" if win is None else win.hi,
                )
            )
        lo, hi = thm1_global_bounds(params, layout)
        rows.append(dict(thm=1, kind="global_lower", factor="global", hw=layout.hw, bound=lo, applicable=True))
        rows.append(dict(thm=1, kind="global_upper", factor="global", hw=layout.hw, bound=hi, applicable=True))
    return rows


def cmd_bounds(args: argparse.Namespace) -> int:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, BOUNDS_FIELDS, lineterminator="\n", restval="")
    writer.writeheader()
    for row in bounds_rows(args):
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    _write_or_print(buf.getvalue(), args.out)
    return 0


def cmd_layout_emit(args: argparse.Namespace) -> int:
    _write_or_print(format_mask(resolve_layout(args.h, args.w, args.spec)), args.out)
    return 0


def cmd_layout_validate(args: argparse.Namespace) -> int:
    if not Path(args.mask).is_file():
        raise CliError(f"mask file not found: {args.mask}")
    violations = validate_layout(read_mask(args.mask, strict=False))
    for v in violations:
        print(v)
    if not violations:
        print("ok")
    return 0 if not violations else 1


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="slicewm", description="Compartmentalized semantic latent watermarking.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("keygen", help="write a fresh 32-byte secret key")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="deterministic key (testing only)")
    p.set_defaults(func=cmd_keygen)

    def grid_args(p: argparse.ArgumentParser, dims: bool = True) -> None:
        if dims:
            p.add_argument("--h", type=int, default=64)
            p.add_argument("--w", type=int, default=64)
        p.add_argument("--layout", default="quadrant", help="quadrant | row-stripes | block-interleave:<b> | mask:<path>")

    p = sub.add_parser("embed", help="synthesize a watermarked latent and write an image bundle")
    p.add_argument("--descriptors", required=True, help="JSON file with keys sub, env, act, det")
    p.add_argument("--key", default=None, help=f"key file (default: ${KEY_ENV})")
    p.add_argument("--out", required=True, help="bundle directory")
    p.add_argument("--prompt", default="")
    p.add_argument("--d", type=int, default=4)
    grid_args(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("verify", help="verify an image bundle; exit 0/2/3 for State I/II/III")
    p.add_argument("--bundle", required=True)
    p.add_argument("--key", default=None, help=f"key file (default: ${KEY_ENV})")
    p.add_argument("--report", default=None, help="write the JSON report here instead of stdout")
    p.add_argument("--noise-sigma", type=float, default=0.0, help="stub inversion noise")
    p.add_argument("--seed", type=int, default=None)
    grid_args(p, dims=False)
    _add_threshold_args(p)
    p.set_defaults(func=cmd_verify)

    sim = sub.add_parser("simulate", help="Monte-Carlo bound validation")
    simsub = sim.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    p = simsub.add_parser("localization")
    p.add_argument("--config", default=None, help="JSON experiment config")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--placement", choices=("random", "adversarial"), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--csv", default=None)
    p.add_argument("--summary", default=None)
    p.set_defaults(func=cmd_simulate_localization)

    p = simsub.add_parser("forgery")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--tau-global", type=float, default=DEFAULT_TAU_GLOBAL)
    p.add_argument("--local-ratio", type=_per_factor_arg, default=DEFAULT_LOCAL_RATIO)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--csv", default=None)
    p.add_argument("--summary", default=None)
    grid_args(p)
    p.set_defaults(func=cmd_simulate_forgery)

    p = sub.add_parser("bounds", help="emit bound values as CSV")
    p.add_argument("--thm", type=int, choices=(1, 2), required=True)
    p.add_argument("--q", type=float, nargs="+", default=[])
    p.add_argument("--tau-g", type=float, nargs="+", default=[DEFAULT_TAU_GLOBAL])
    p.add_argument("--hw", type=int, nargs="+", default=[64 * 64])
    p.add_argument("--local-ratio", type=_per_factor_arg, default=None, help="also emit the State I bound")
    p.add_argument("--config", default=None, help="channel params JSON (thm 1)")
    p.add_argument("--out", default=None)
    grid_args(p)
    p.set_defaults(func=cmd_bounds)

    lay = sub.add_parser("layout", help="emit or validate mask files")
    laysub = lay.add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = laysub.add_parser("emit")
    p.add_argument("--h", type=int, default=64)
    p.add_argument("--w", type=int, default=64)
    p.add_argument("--spec", default="quadrant")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_layout_emit)
    p = laysub.add_parser("validate")
    p.add_argument("mask")
    p.set_defaults(func=cmd_layout_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ValueError, OSError) as exc:
        print(f"slicewm: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
