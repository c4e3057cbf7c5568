"""``oddm-isac <verb> [options]``: run one experiment and write its CSV."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..scenario import load_config, profile, scenario_hash
from .experiments import ExperimentSpec, run
from .io import write_csv, write_json

log = logging.getLogger("oddm_isac")

VERBS = {
    "papr": "papr",
    "siso-rmse": "siso_rmse",
    "precoder-sweep": "precoder_sweep",
    "optimize-combiner": "optimize_combiner",
    "combiner-sweep": "combiner_sweep",
    "isac-tradeoff": "isac_tradeoff",
}
DEFAULT_TRIALS = {"papr": 10_000}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oddm-isac", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        p = sub.add_parser(verb)
        p.add_argument("--config", type=Path, help="flat key = value scenario file")
        p.add_argument("--profile", choices=("desk", "paper"), default=None,
                       help="base parameter set (default: desk; paper for papr)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", type=Path, default=None, help="CSV path (default: <verb>.csv)")
        p.add_argument("--summary", type=Path, default=None, help="optional JSON summary path")
        p.add_argument("--trials", type=int, default=None,
                       help="Monte-Carlo trials per point (frames for papr)")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--sweep", type=float, nargs="+", default=None,
                       help="override the sweep axis values")
        p.add_argument("--no-mutation", action="store_true",
                       help="crossover-only genetic search")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    kind = VERBS[args.verb]
    prof = args.profile or ("paper" if kind == "papr" else "desk")
    cfg = profile(prof)
    if args.config:
        cfg = load_config(args.config, cfg)
    options = {"mutation": False} if args.no_mutation else {}
    spec = ExperimentSpec(
        kind=kind, scenario=cfg, sweep_values=tuple(sorted(set(args.sweep or ()))),
        trials=args.trials or DEFAULT_TRIALS.get(kind, 50),
        output_path=str(args.out or Path(f"{args.verb}.csv")), seed=args.seed,
        workers=args.workers, options=options,
    )
    log.info("running %s (profile %s, seed %d, %d trials)", kind, prof, spec.seed, spec.trials)
    result = run(spec)
    write_csv(spec.output_path, result.columns, result.rows, cfg, spec.seed)
    if args.summary:
        write_json(args.summary, {"kind": kind, "seed": spec.seed, "profile": prof,
                                  "scenario_sha256": scenario_hash(cfg), "trials": spec.trials,
                                  "assertions": result.assertions, "metrics": result.metrics,
                                  "passed": result.passed})
    for name, ok in result.assertions.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
