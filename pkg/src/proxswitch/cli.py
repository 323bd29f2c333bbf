"""Command-line entry point: ``proxswitch <command> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import dgp, harness
from .config import ConfigError, load_scenario
from .data import DataFormatError, read_dataset, write_dataset, write_testset


def _common(p: argparse.ArgumentParser, reps=False, n_test=True):
    p.add_argument("--scenario", type=int, default=1, choices=range(1, 7), metavar="{1-6}")
    p.add_argument("--config", type=Path, default=None, help="scenario TOML file (default: bundled)")
    p.add_argument("--n-train", type=int, default=1000)
    if n_test:
        p.add_argument("--n-test", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--use-oracle-bridges", action="store_true",
                   help="use the true h and q instead of fitted bridges")
    p.add_argument("--parallelism", type=int, default=1)
    if reps:
        p.add_argument("--reps", type=int, default=20)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proxswitch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a training CSV (and a test CSV with --n-test)")
    _common(p, n_test=False)
    p.add_argument("--n-test", type=int, default=0)
    p.add_argument("--test-law", choices=dgp.TEST_LAWS, default="paper")

    p = sub.add_parser("fit-bridges", help="fit h and q on a dataset and save them")
    _common(p, n_test=False)
    p.add_argument("--data", type=Path, default=None, help="training CSV (default: simulate)")

    p = sub.add_parser("learn", help="fit the full pipeline and save the regimes")
    _common(p, n_test=False)
    p.add_argument("--data", type=Path, default=None, help="training CSV (default: simulate)")

    p = sub.add_parser("evaluate", help="one replication with test-set values")
    _common(p)
    p.add_argument("--test-law", choices=dgp.TEST_LAWS, default="paper")

    p = sub.add_parser("experiment", help="replicated simulation study")
    _common(p, reps=True)
    p.add_argument("--test-law", choices=dgp.TEST_LAWS, default="paper")
    p.add_argument("--pilot", action="store_true",
                   help="also record a bridge-recovery pilot (n=4000) in run.json")

    p = sub.add_parser("decompose", help="excess-value decomposition of one fitted pipeline")
    _common(p)
    p.add_argument("--n-mc", type=int, default=20_000)

    p = sub.add_parser("consistency", help="optimality gap across training sizes")
    _common(p, reps=True, n_test=True)
    p.add_argument("--n-list", type=int, nargs="+", default=[500, 1000, 4000])
    p.add_argument("--n-mc", type=int, default=20_000)
    return parser


def _load(args):
    return load_scenario(args.config, args.scenario)


def _train(args, cfg):
    path = getattr(args, "data", None)
    if path is not None:
        return read_dataset(path)
    return dgp.sample_training(cfg, args.n_train, args.seed)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=harness._json_default) + "\n", encoding="utf-8")


def cmd_simulate(args, cfg):
    args.out.mkdir(parents=True, exist_ok=True)
    write_dataset(dgp.sample_training(cfg, args.n_train, args.seed), args.out / "train.csv")
    if args.n_test > 0:
        write_testset(dgp.sample_testing(cfg, args.n_test, args.seed, law=args.test_law),
                      args.out / "test.csv")
    _write_json(args.out / "run.json", harness.provenance(cfg, {"command": "simulate", **_argdict(args)}))


def cmd_fit_bridges(args, cfg):
    train = _train(args, cfg)
    h, q = harness.fit_bridges(cfg, train, args.seed)
    out = args.out / "regimes"
    out.mkdir(parents=True, exist_ok=True)
    harness.save_bridge(h, out / "h.json")
    harness.save_bridge(q.pos, out / "q_pos.json")
    harness.save_bridge(q.neg, out / "q_neg.json")
    _write_json(args.out / "run.json", harness.provenance(cfg, {"command": "fit-bridges", **_argdict(args)}))


def cmd_learn(args, cfg):
    train = _train(args, cfg)
    pipe = harness.fit_pipeline(cfg, train, args.seed, args.use_oracle_bridges)
    harness.save_pipeline(pipe, args.out)
    _write_json(args.out / "run.json", harness.provenance(
        cfg, {"command": "learn", **_argdict(args)},
        {"identified": pipe.identified, "meta": pipe.meta, "union": pipe.union}))


def cmd_evaluate(args, cfg):
    res = harness.run_experiment(cfg, 1, args.n_train, args.n_test, args.seed - 1, 1,
                                 args.use_oracle_bridges, args.test_law)
    harness.write_experiment(res, args.out, {"command": "evaluate", **_argdict(args)})
    _print_summary(res)
    return 1 if res.failures else 0


def cmd_experiment(args, cfg):
    extra = {"command": "experiment", **_argdict(args)}
    if args.pilot:
        extra["pilot"] = harness.bridge_recovery_pilot(cfg, 4000, args.seed)
    res = harness.run_experiment(cfg, args.reps, args.n_train, args.n_test, args.seed,
                                 args.parallelism, args.use_oracle_bridges, args.test_law)
    harness.write_experiment(res, args.out, extra)
    _print_summary(res)
    return 0


def cmd_decompose(args, cfg):
    train = dgp.sample_training(cfg, args.n_train, args.seed)
    pipe = harness.fit_pipeline(cfg, train, args.seed, args.use_oracle_bridges)
    dec = harness.excess_value_decomposition(pipe, args.n_test, args.n_mc, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    _write_json(args.out / "decomposition.json", dec.to_dict())
    _write_json(args.out / "run.json", harness.provenance(cfg, {"command": "decompose", **_argdict(args)}))
    for k, v in dec.to_dict().items():
        print(f"{k:>14s}  {v: .6f}")


def cmd_consistency(args, cfg):
    sweep = harness.consistency_sweep(cfg, args.n_list, args.reps, args.seed, args.n_test, args.n_mc,
                                      args.parallelism)
    args.out.mkdir(parents=True, exist_ok=True)
    rows = sweep.trend_rows()
    (args.out / "consistency.csv").write_text(harness.csv_text(rows, ("n", "reps", "mean_gap", "se")),
                                              encoding="utf-8")
    _write_json(args.out / "run.json", harness.provenance(
        cfg, {"command": "consistency", **_argdict(args)},
        {"star_value": sweep.star_value, "gap_decreases": sweep.decreasing}))
    for r in rows:
        print(f"n={r['n']:>6d}  gap={r['mean_gap']: .4f}  se={r['se']:.4f}")


def _argdict(args) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}


def _print_summary(res):
    for row in res.summary_rows():
        print(f"{row['regime']:>10s}  median {row['median']: .4f}  "
              f"IQR [{row['q25']: .4f}, {row['q75']: .4f}]  ok {row['n_ok']}")
    if res.failures:
        print(f"{len(res.failures)} replication(s) failed; see failures.csv", file=sys.stderr)


COMMANDS = {"simulate": cmd_simulate, "fit-bridges": cmd_fit_bridges, "learn": cmd_learn,
            "evaluate": cmd_evaluate, "experiment": cmd_experiment, "decompose": cmd_decompose,
            "consistency": cmd_consistency}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        return COMMANDS[args.command](args, cfg) or 0
    except (ConfigError, DataFormatError, harness.StageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
