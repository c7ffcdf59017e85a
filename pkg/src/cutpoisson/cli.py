"""Command line entry point for the convergence studies.

Subcommands: delta-study, normal-study, levelset-study, solve. Options may
also come from a config file of ``key = value`` lines (keys are the flag
names without leading dashes); explicit flags override the file.
"""

from __future__ import annotations

import argparse
import sys

from .studies import (
    StudyConfig,
    format_rate_table,
    run_delta_study,
    run_levelset_study,
    run_normal_study,
    run_single,
    write_records_csv,
)

_RUNNERS = {
    "delta-study": ("delta", run_delta_study),
    "normal-study": ("normal", run_normal_study),
    "levelset-study": ("levelset", run_levelset_study),
    "solve": ("single", run_single),
}

_CONFIG_TYPES = {
    "p": int,
    "levels": int,
    "h0": float,
    "alpha": float,
    "alpha-n": float,
    "norm": str,
    "terms": int,
    "out": str,
}


def _load_config(path: str) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("_", "-")
            if key not in _CONFIG_TYPES:
                raise ValueError(f"{path}:{lineno}: unknown key '{key}'")
            values[key] = _CONFIG_TYPES[key](value)
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cutpoisson",
        description="Cut finite element Poisson solver convergence studies",
    )
    sub = parser.add_subparsers(dest="command")

    def add_common(sp, with_alpha=False, with_alpha_n=False):
        sp.add_argument("--p", type=int, default=None, help="polynomial degree (1-3)")
        sp.add_argument("--levels", type=int, default=None, help="refinement levels")
        sp.add_argument("--h0", type=float, default=None, help="coarsest mesh size")
        sp.add_argument("--terms", type=int, default=None, help="series truncation")
        sp.add_argument("--out", type=str, default=None, help="CSV output path")
        sp.add_argument("--config", type=str, default=None, help="key = value file")
        if with_alpha:
            sp.add_argument("--alpha", type=float, default=None, help="delta = h^alpha")
        if with_alpha_n:
            sp.add_argument(
                "--alpha-n", type=float, default=None, help="frequency exponent"
            )
            sp.add_argument(
                "--norm",
                type=str,
                default=None,
                choices=("energy", "h1", "l2"),
                help="norm whose optimal delta scaling is used",
            )

    add_common(sub.add_parser("delta-study", help="perturbed square study"), with_alpha=True)
    add_common(
        sub.add_parser("normal-study", help="normal approximation study"),
        with_alpha_n=True,
    )
    add_common(sub.add_parser("levelset-study", help="level-set geometry study"))
    add_common(sub.add_parser("solve", help="single solve on the square"), with_alpha=True)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2

    merged = {}
    if args.config is not None:
        try:
            merged.update(_load_config(args.config))
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    flag_map = {
        "p": "p",
        "levels": "levels",
        "h0": "h0",
        "terms": "terms",
        "out": "out",
        "alpha": "alpha",
        "alpha_n": "alpha-n",
        "norm": "norm",
    }
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            merged[key] = value

    study_name, runner = _RUNNERS[args.command]
    if args.command == "delta-study" and "alpha" not in merged:
        print("error: delta-study requires --alpha", file=sys.stderr)
        return 2
    if args.command == "normal-study" and "alpha-n" not in merged:
        print("error: normal-study requires --alpha-n", file=sys.stderr)
        return 2

    default_p = 2 if args.command == "normal-study" else 1
    cfg = StudyConfig(
        study=study_name,
        p=merged.get("p", default_p),
        levels=merged.get("levels"),
        h0=merged.get("h0"),
        alpha=merged.get("alpha"),
        alpha_n=merged.get("alpha-n"),
        norm_target=merged.get("norm", "energy"),
        n_terms=merged.get("terms"),
        out=merged.get("out"),
    )

    try:
        records = runner(cfg)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1

    out_path = cfg.out or f"{study_name}.csv"
    try:
        write_records_csv(records, out_path)
    except OSError as exc:
        print(f"runtime failure: cannot write {out_path}: {exc}", file=sys.stderr)
        return 1
    print(format_rate_table(records))
    print(f"wrote {out_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
