"""Command-line front end.

Subcommands:
  thin         thin a point file (or a sampled synthetic target) to a coreset
  mmd          exact MMD between two point files under a kernel
  experiment   run a plan.json decay-rate study
  powerkernel  resolve the closed-form power kernel of a kernel spec

Exit codes: 0 success, 2 usage error, 3 data error, 4 constraint error
(for example a power kernel with no closed form).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .discrepancy import DiscreteMeasure, mmd
from .harness import ExperimentPlan, run_experiment
from .kernels import KernelError, NoClosedFormPowerError, from_json as kernel_from_json, power_kernel
from .targets import IngestError, ingest, target_from_json_dict
from .thinning import DeltaSchedule, ThinningConfig, generalized_kt, kt_plus, power_kt, target_kt

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_CONSTRAINT = 4


def _load_points(spec: str, n: int | None, seed: int, fmt: str, burn_in: int) -> np.ndarray:
    """Points from a file path, or from a JSON target spec like
    {"kind": "mog", "components": 8} (requires --n)."""
    if os.path.exists(spec):
        return ingest(spec, format=fmt, burn_in=burn_in)
    try:
        obj = json.loads(spec)
    except json.JSONDecodeError:
        raise IngestError(
            f"--input {spec!r} is neither an existing file nor a JSON target spec"
        )
    target = target_from_json_dict(obj)
    if n is None:
        raise IngestError("sampling a synthetic target requires --n")
    return target.sample(n, seed)


def _cmd_thin(args) -> int:
    kernel = kernel_from_json(args.kernel)
    points = _load_points(args.input, args.n, args.seed, args.format, args.burn_in)
    cfg = ThinningConfig(
        m=args.m,
        delta_schedule=DeltaSchedule(args.delta_rule, args.delta),
        seed=args.seed,
    )
    split = kernel_from_json(args.split_kernel) if args.split_kernel else None
    if args.variant == "targetkt":
        coreset = target_kt(kernel, points, cfg)
    elif args.variant == "powerkt":
        coreset = power_kt(kernel, points, cfg, alpha=args.alpha, split_kernel=split)
    elif args.variant == "ktplus":
        coreset = kt_plus(kernel, points, cfg, alpha=args.alpha, split_kernel=split)
    else:  # generalized
        if split is None:
            raise KernelError("--variant generalized requires --split-kernel")
        coreset = generalized_kt(split, kernel, points, cfg)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(coreset.to_csv())
    side = os.path.splitext(args.out)[0] + ".json"
    with open(side, "w", encoding="utf-8") as fh:
        fh.write(coreset.to_json() + "\n")
    print(f"wrote {len(coreset)} indices to {args.out} (provenance in {side})")
    return EXIT_OK


def _cmd_mmd(args) -> int:
    kernel = kernel_from_json(args.kernel)
    a = ingest(args.a, format=args.format)
    b = ingest(args.b, format=args.format)
    value = mmd(kernel, DiscreteMeasure(a), DiscreteMeasure(b))
    print(format(value, ".12g"))
    return EXIT_OK


def _cmd_experiment(args) -> int:
    with open(args.plan, "r", encoding="utf-8") as fh:
        plan = ExperimentPlan.from_json(fh.read())
    report = run_experiment(plan, out_dir=args.out_dir)
    for key, fit in sorted(report.fits.items()):
        print(f"{key}: slope {fit['slope']:+.4f} (vs input n: {fit['slope_vs_input_n']:+.4f})")
    for row in report.skipped:
        print(f"skipped {row['variant']}: {row['reason']}")
    print(f"wrote {os.path.join(args.out_dir, 'raw.csv')} and report.json")
    return EXIT_OK


def _cmd_powerkernel(args) -> int:
    kernel = kernel_from_json(args.kernel)
    pair = power_kernel(kernel, args.alpha, dim=args.dim)
    print(pair.power.to_json())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kthin", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_thin = sub.add_parser("thin", help="thin points to a coreset")
    p_thin.add_argument("--input", required=True,
                        help="point file, or JSON target spec (with --n)")
    p_thin.add_argument("--kernel", required=True, help="kernel spec JSON")
    p_thin.add_argument("--variant", default="targetkt",
                        choices=["targetkt", "powerkt", "ktplus", "generalized"])
    p_thin.add_argument("--alpha", type=float, default=0.5)
    p_thin.add_argument("--split-kernel", default=None,
                        help="explicit split kernel JSON (required for generalized; "
                             "overrides the closed form for powerkt/ktplus)")
    p_thin.add_argument("-m", type=int, required=True, help="halvings; output floor(n/2^m)")
    p_thin.add_argument("--seed", type=int, default=0)
    p_thin.add_argument("--n", type=int, default=None, help="sample size for synthetic input")
    p_thin.add_argument("--format", default="csv", choices=["csv", "bin"])
    p_thin.add_argument("--burn-in", type=int, default=0)
    p_thin.add_argument("--delta", type=float, default=0.5)
    p_thin.add_argument("--delta-rule", default="known_n", choices=["known_n", "oblivious"])
    p_thin.add_argument("--out", required=True, help="output CSV of coreset indices")
    p_thin.set_defaults(func=_cmd_thin)

    p_mmd = sub.add_parser("mmd", help="MMD between two point files")
    p_mmd.add_argument("--kernel", required=True)
    p_mmd.add_argument("--a", required=True)
    p_mmd.add_argument("--b", required=True)
    p_mmd.add_argument("--format", default="csv", choices=["csv", "bin"])
    p_mmd.set_defaults(func=_cmd_mmd)

    p_exp = sub.add_parser("experiment", help="run a plan.json study")
    p_exp.add_argument("--plan", required=True)
    p_exp.add_argument("--out-dir", required=True)
    p_exp.set_defaults(func=_cmd_experiment)

    p_pow = sub.add_parser("powerkernel", help="resolve a closed-form power kernel")
    p_pow.add_argument("--kernel", required=True)
    p_pow.add_argument("--alpha", type=float, required=True)
    p_pow.add_argument("--dim", type=int, default=None,
                       help="point dimension (needed for matern/laplace validity)")
    p_pow.set_defaults(func=_cmd_powerkernel)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NoClosedFormPowerError as exc:
        print(f"constraint error: {exc}", file=sys.stderr)
        return EXIT_CONSTRAINT
    except (IngestError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (KernelError, ValueError) as exc:
        print(f"constraint error: {exc}", file=sys.stderr)
        return EXIT_CONSTRAINT


if __name__ == "__main__":
    sys.exit(main())
