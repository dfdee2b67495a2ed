"""Command-line front end: attack a batch, sweep a knob, report a run."""

from __future__ import annotations

import argparse
import json
import sys

from .engine import DOMAIN_DCT, DOMAIN_PIXEL, AttackConfig
from .harness import (
    DEFAULT_THRESHOLDS,
    ExperimentConfig,
    load_run_record,
    run_experiment,
    sweep,
)


def _add_attack_args(parser: argparse.ArgumentParser) -> None:
    base = AttackConfig()
    parser.add_argument("--seed", type=int, required=True,
                        help="master seed; per-image streams derive from it")
    parser.add_argument("--out", required=True, help="output directory for the run")
    parser.add_argument("--oracle", required=True,
                        help="oracle spec as JSON, e.g. "
                             '\'{"kind": "patch", "target_patch": 0, "threshold": 0.6}\'')
    src = parser.add_argument_group("inputs")
    src.add_argument("--images", help="directory of .png inputs")
    src.add_argument("--labels", help="JSON file mapping image stem to true label")
    src.add_argument("--synthetic", type=int, metavar="N",
                     help="generate N smooth random images instead of loading files")
    src.add_argument("--height", type=int, default=32)
    src.add_argument("--width", type=int, default=32)
    src.add_argument("--channels", type=int, default=3)
    knobs = parser.add_argument_group("attack knobs")
    knobs.add_argument("--budget", type=int, default=base.budget)
    knobs.add_argument("--patch-size", type=int, default=base.d, dest="d")
    knobs.add_argument("--corner", type=int, default=base.r, dest="r",
                       help="low-frequency corner size r per patch")
    knobs.add_argument("--alpha", type=float, default=base.alpha)
    knobs.add_argument("--init-samples", type=int, default=base.init_samples)
    knobs.add_argument("--probes", type=int, default=base.probes)
    knobs.add_argument("--eps-smooth", type=float, default=base.eps_smooth)
    knobs.add_argument("--eta0", type=float, default=base.eta0)
    knobs.add_argument("--bs-tol", type=float, default=base.bs_tol)
    knobs.add_argument("--domain", choices=[DOMAIN_DCT, DOMAIN_PIXEL],
                       default=base.domain)
    knobs.add_argument("--probe-dist", choices=["gaussian", "uniform"],
                       default=base.probe_dist)
    rep = parser.add_argument_group("reporting")
    rep.add_argument("--epsilon", type=float, default=5.0,
                     help="success threshold for the aggregate report")
    rep.add_argument("--thresholds", default=",".join(f"{t:g}" for t in DEFAULT_THRESHOLDS),
                     help="comma-separated L2 thresholds for the success table")


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    if (args.synthetic is None) == (args.images is None):
        raise SystemExit("choose exactly one input source: --synthetic N or --images DIR")
    if args.synthetic is not None:
        inputs = {
            "kind": "synthetic",
            "count": args.synthetic,
            "height": args.height,
            "width": args.width,
            "channels": args.channels,
        }
    else:
        inputs = {"kind": "dir", "path": args.images}
        if args.labels:
            inputs["labels"] = args.labels
    attack = AttackConfig(
        d=args.d,
        r=args.r,
        alpha=args.alpha,
        budget=args.budget,
        init_samples=args.init_samples,
        probes=args.probes,
        eps_smooth=args.eps_smooth,
        eta0=args.eta0,
        bs_tol=args.bs_tol,
        seed=args.seed,
        domain=args.domain,
        probe_dist=args.probe_dist,
    )
    return ExperimentConfig(
        attack=attack,
        oracle_spec=json.loads(args.oracle),
        inputs=inputs,
        output_dir=args.out,
        master_seed=args.seed,
        thresholds=tuple(float(t) for t in args.thresholds.split(",")),
        epsilon_threshold=args.epsilon,
    )


def _cmd_attack(args: argparse.Namespace) -> int:
    record = run_experiment(_experiment_config(args))
    _print_record(record)
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _experiment_config(args)
    values = [v for v in args.values.split(",") if v]
    report = sweep(config, args.axis, values)
    failures = [c for c in report.cells if c.error]
    print(f"sweep over {args.axis}: {len(report.cells) - len(failures)} ok,"
          f" {len(failures)} failed; see {config.output_dir}/sweep.csv")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    record = load_run_record(args.run)
    _print_record(record)
    return 0


def _print_record(record) -> None:
    counts = record.counts
    print(
        f"images: {counts['total']} attacked: {counts['attacked']}"
        f" succeeded: {counts['succeeded']} skipped: {counts['skipped']}"
    )
    if record.report:
        rep = record.report
        print(
            f"l2 mean/median: {rep['mean_l2']:.4f}/{rep['median_l2']:.4f}"
            f"  psnr: {rep['mean_psnr']:.2f}/{rep['median_psnr']:.2f} dB"
            f"  ssim: {rep['mean_ssim']:.4f}/{rep['median_ssim']:.4f}"
        )
    for threshold, rate in sorted(
        record.success_rates.items(), key=lambda kv: float(kv[0])
    ):
        print(f"success rate @ L2<={float(threshold):g}: {rate:.3f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dctattack",
        description="Hard-label black-box attack in the patchwise DCT domain",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    attack = sub.add_parser("attack", help="attack a batch of images")
    _add_attack_args(attack)
    attack.set_defaults(func=_cmd_attack)

    swp = sub.add_parser("sweep", help="repeat a run across one knob's values")
    _add_attack_args(swp)
    swp.add_argument("--axis", required=True,
                     help="attack config field to sweep (r, alpha, d, ...)")
    swp.add_argument("--values", required=True, help="comma-separated values")
    swp.set_defaults(func=_cmd_sweep)

    report = sub.add_parser("report", help="print the aggregates of a finished run")
    report.add_argument("--run", required=True, help="run directory to load")
    report.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
