"""Command-line entry point: ``proxshuffle {run,sweep-rate,verify}``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, ExperimentSpec, parse_config
from .experiment import ResultRow, SlopeRow, run_experiment, sweep_rate
from .verify import verify_suite


def _load(path: str, args: argparse.Namespace) -> ExperimentSpec:
    spec = parse_config(Path(path).read_text(encoding="utf-8"))
    updates = {}
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if args.stride is not None:
        updates["stride"] = args.stride
    if updates:
        # revalidate so overrides obey the same bounds as the document
        spec = ExperimentSpec.model_validate({**spec.model_dump(), **updates})
    return spec


def _print_rows(rows: list[ResultRow]) -> None:
    print(f"{'n':>5} {'K':>6} {'T':>8} {'tracker':<8} {'mean_gap':>12} {'ci95':>11} {'failed':>6}")
    for r in rows:
        print(f"{r.n:>5} {r.K:>6} {r.T:>8} {r.tracker:<8} {r.mean_gap:>12.5g} {r.ci_half_width:>11.3g} {r.failed:>6}")


def _print_slopes(slopes: list[SlopeRow]) -> None:
    print(f"{'n':>5} {'scheme':<6} {'schedule':<18} {'tracker':<8} {'slope':>8} {'r2':>7}")
    for s in slopes:
        print(f"{s.n:>5} {s.scheme:<6} {s.schedule:<18} {s.tracker:<8} {s.slope:>8.4f} {s.r2:>7.4f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proxshuffle",
                                     description="Proximal shuffling-gradient experiments and lemma checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("config", help="JSON experiment configuration")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--out", default="results", help="output directory (default: results)")
        p.add_argument("--threads", type=int, default=1, help="worker threads (default: 1)")
        p.add_argument("--stride", type=int, help="override the gap-recording stride")
        p.add_argument("--timings", action="store_true",
                       help="fill wall_time_ms (makes the CSV run-dependent)")

    experiment_args(sub.add_parser("run", help="run an experiment and write its CSV"))
    experiment_args(sub.add_parser("sweep-rate", help="run a sweep and fit log-log slopes against K"))
    v = sub.add_parser("verify", help="run the lemma verification suite")
    v.add_argument("--full", action="store_true", help="larger enumerations and 1e5 Monte-Carlo trials")
    v.add_argument("--seed", type=int, default=None, help="suite seed")
    v.add_argument("--json", dest="json_path", help="also write the machine-readable report here")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        kwargs = {} if args.seed is None else {"seed": args.seed}
        report = verify_suite("full" if args.full else "fast", **kwargs)
        print(report.summary())
        if args.json_path:
            Path(args.json_path).write_text(report.to_json() + "\n", encoding="utf-8")
        return 0 if report.passed else 1

    if args.threads < 1:
        print("error: --threads must be a positive integer", file=sys.stderr)
        return 2
    try:
        spec = _load(args.config, args)
        if args.command == "run":
            rows = run_experiment(spec, args.out, args.threads, args.timings)
            _print_rows(rows)
        else:
            rows, slopes = sweep_rate(spec, args.out, args.threads, args.timings)
            _print_rows(rows)
            print()
            _print_slopes(slopes)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(f"wrote {Path(args.out) / (spec.name + '.csv')}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
