"""Command-line entry point for parameter sweeps."""

from __future__ import annotations

import argparse
import logging
import sys

from . import harness

EXIT_OK, EXIT_CONFIG, EXIT_ALL_FAILED = 0, 2, 3


def parse_seeds(text):
    """``"a..b"`` (inclusive) or a comma-separated list."""
    text = text.strip()
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            a, b = int(a), int(b)
            if b < a:
                raise ValueError
            return list(range(a, b + 1))
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed range {text!r}; use a..b or a,b,c") from None


def _floats(text):
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text):
    return [s.strip() for s in text.split(",") if s.strip()]


def build_parser():
    p = argparse.ArgumentParser(prog="cfran", description="Joint radio/fronthaul/cloud power sweeps.")
    p.add_argument("--config", help="YAML experiment file")
    p.add_argument("--preset", choices=sorted(harness.PRESETS), help="start from a built-in preset")
    p.add_argument("--seeds", type=parse_seeds, help="seed range a..b (inclusive) or list")
    p.add_argument("--scheme", type=_names, help="comma list of end_to_end, local, radio_only")
    p.add_argument("--restriction", type=_names, help="comma list of cell_free, small_cell")
    p.add_argument("--split", type=_names, help="8, 7.2 or both")
    p.add_argument("--se-target", type=_floats, help="SE targets in bit/s/Hz (power minimization)")
    p.add_argument("--lambda", dest="lambdas", type=_floats, help="sum-SE weights (switches to the sum-SE objective)")
    p.add_argument("--solver", choices=["exact", "ccp"])
    p.add_argument("--mc", type=int, help="Monte Carlo realizations per setup")
    p.add_argument("--workers", type=int, help="parallel worker processes over seeds")
    p.add_argument("--out", help="output directory")
    p.add_argument("--deterministic", action="store_true", help="single process, fixed ordering")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args):
    if args.config:
        ec = harness.load_config(args.config, args.preset)
    elif args.preset:
        ec = harness.preset_config(args.preset)
    else:
        ec = harness.ExperimentConfig()
    overrides = {
        "seeds": args.seeds,
        "schemes": args.scheme,
        "restrictions": args.restriction,
        "splits": args.split,
        "se_targets": args.se_target,
        "solver": args.solver,
        "n_mc": args.mc,
        "workers": args.workers,
        "out": args.out,
    }
    if args.lambdas is not None:
        overrides.update(lambdas=args.lambdas, objective="sum_se")
    data = ec.to_dict()
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return harness.ExperimentConfig(**data)
    except TypeError as exc:
        raise harness.ConfigError(str(exc)) from exc


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        ec = config_from_args(args)
    except harness.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    records = harness.run_experiment(ec, deterministic=args.deterministic)
    paths = harness.emit(records, ec.out, ec.formats, config=ec.to_dict())
    feasible = sum(r.feasible for r in records)
    print(f"{len(records)} records ({feasible} feasible) -> {ec.out}")
    for row in harness.aggregate(records):
        mark = " (suppressed)" if row["suppressed"] else ""
        mean = "-" if row["mean_power"] is None else f"{row['mean_power']:.2f} W"
        print(
            f"  {row['restriction']:<10} {row['scheme']:<10} split {row['split']:<3} "
            f"{row['axis']}={row['x']:<6g} feasible {row['feasible']}/{row['count']} mean {mean}{mark}"
        )
    log = logging.getLogger(__name__)
    log.info("wrote %s", ", ".join(map(str, paths)))
    return EXIT_OK if feasible else EXIT_ALL_FAILED


if __name__ == "__main__":
    sys.exit(main())
