"""Command-line front end for the study harness.

Each subcommand names a study; flags override the config file, which in
turn overrides the per-study defaults.  Output is the versioned CSV, either
written to --out (with a timing sidecar) or printed to stdout.
"""

from __future__ import annotations

import argparse
import json
import sys

from .study import (
    STUDY_NAMES,
    StudyConfig,
    format_study_csv,
    normalize_config,
    run_study,
    write_study_csv,
)


def _parse_levels(text: str) -> tuple[int, ...]:
    try:
        levels = tuple(int(tok) for tok in text.replace(" ", "").split(",") if tok)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad level list {text!r}") from exc
    if not levels:
        raise argparse.ArgumentTypeError("empty level list")
    return levels


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="migfem",
        description="Convergence and diagnostic studies on blended local reconstructions.",
    )
    sub = parser.add_subparsers(dest="study", required=True)
    for name in STUDY_NAMES:
        sp = sub.add_parser(name, help=f"run the {name} study")
        sp.add_argument("--config", default="", help="JSON file mirroring the study config")
        sp.add_argument("--case", default="", help="manufactured case name")
        sp.add_argument("--p", type=int, default=None, help="reconstruction degree")
        sp.add_argument("--s", type=int, default=None, help="patch layer depth")
        sp.add_argument("--levels", type=_parse_levels, default=None,
                        help="comma-separated mesh levels, e.g. 11,21,41")
        sp.add_argument("--delta", type=float, default=None,
                        help="interior node perturbation as a fraction of h")
        sp.add_argument("--seed", type=int, default=None, help="perturbation seed")
        sp.add_argument("--bc", default="", choices=("", "ba", "penalty", "qr"),
                        help="derivative boundary treatment")
        sp.add_argument("--method", default="", choices=("", "nc", "cc", "sd", "wg"),
                        help="solver arm")
        sp.add_argument("--out", default="", help="CSV output path")
    return parser


def config_from_args(args: argparse.Namespace) -> StudyConfig:
    base: dict = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as f:
            base = json.load(f)
        if base.get("study", args.study) != args.study:
            raise SystemExit(
                f"config file is for study {base['study']!r}, not {args.study!r}")
    base["study"] = args.study

    overrides = dict(case=args.case, method=args.method, bc_mode=args.bc,
                     p=args.p, s=args.s, levels=args.levels,
                     delta=args.delta, seed=args.seed, out=args.out)
    for key, val in overrides.items():
        if val is None or val == "":
            continue  # flag not given; keep config-file or default value
        base[key] = val
    if "levels" in base:
        base["levels"] = tuple(base["levels"])
    return StudyConfig(**base)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = normalize_config(config_from_args(args))
    result = run_study(cfg)
    if cfg.out:
        main_path, sidecar = write_study_csv(result, cfg.out)
        print(f"wrote {main_path}")
        print(f"wrote {sidecar}")
        for metric, value in result.rates:
            print(f"rate {metric} = {value:.3f}")
    else:
        sys.stdout.write(format_study_csv(result))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
