"""``sail`` command line: train, eval, demo-gen, corrupt-bench.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from ..agent import NumericError
from ..diffcore import CheckpointError, DiffError
from ..envs import EnvError, save_demos
from ..metrics import aggregate, eval_policy, write_corruption_diag, write_metrics
from ..reprlearn import METHODS
from .bench import corruption_bench
from .config import ConfigError, ExperimentConfig, load_config
from .run import RunAborted, build_demos, policy_from_checkpoint, rng_streams, run_training

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("sail")


def _setup_logging():
    level = os.environ.get("SAIL_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _add_common(p, out_default=None):
    p.add_argument("--config", help="key=value config file with [run]/[trpo]/[repr]/[gail] sections")
    p.add_argument("--seed", type=int)
    p.add_argument("--env")
    p.add_argument("--algo")
    p.add_argument("--n-expert", type=int)
    p.add_argument("--optimality", type=float, help="psi, the expert share of the demonstrations")
    p.add_argument("--iid-subsample", action="store_true", help="subsample demo pairs i.i.d. across episodes")
    p.add_argument("--out", default=out_default)
    p.add_argument("--barlow-paper-sign", action="store_true",
                   help="subtract the off-diagonal Barlow term instead of penalizing it")
    p.add_argument("--barlow-no-center", action="store_true", help="skip batch centering in the Barlow loss")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override any config key (repeatable)")


def build_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    over = {}
    for name, key in (("seed", "run.seed"), ("env", "run.env"), ("algo", "run.algo"),
                      ("n_expert", "run.n_expert"), ("optimality", "gail.psi"), ("out", "run.out")):
        val = getattr(args, name, None)
        if val is not None:
            over[key] = str(val)
    for flag, key, val in (("iid_subsample", "run.iid_subsample", "true"),
                           ("barlow_paper_sign", "repr.barlow_paper_sign", "true"),
                           ("barlow_no_center", "repr.barlow_center", "false")):
        if getattr(args, flag, False):
            over[key] = val
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        over[k.strip()] = v
    return cfg.with_overrides(over)


def cmd_train(args) -> int:
    cfg = build_config(args)
    result = run_training(cfg, out_dir=cfg.run.out)
    print(json.dumps({"out": cfg.run.out, "final_return": result.final_return,
                      "final_eval": result.evals[-1].as_dict(), "checkpoint_sha256": result.checkpoint_hash,
                      "log_sha256": result.log_hash}, indent=2))
    return EXIT_OK


def cmd_eval(args) -> int:
    reports = []
    for i, path in enumerate(args.checkpoint):
        env, policy, params, meta = policy_from_checkpoint(path)
        rng = np.random.default_rng(args.seed + i)
        rep = eval_policy(policy, params, env, args.episodes, rng, iteration=int(meta.get("iteration", -1)),
                          seed=int(meta.get("seed", -1)))
        reports.append(rep)
        print(json.dumps({"checkpoint": str(path), **rep.as_dict()}))
    if len(reports) > 1:
        print(json.dumps({"aggregate": aggregate(reports)}))
    if args.out:
        write_metrics(args.out, reports)
    return EXIT_OK


def cmd_demo_gen(args) -> int:
    cfg = build_config(args)
    from ..envs import make_env

    env = make_env(cfg.run.env)
    demos = build_demos(cfg, env, rng_streams(cfg.run.seed)["demos"])
    out = Path(args.out or f"demos_{cfg.run.env}_{cfg.run.seed}.csv")
    save_demos(demos, out)
    print(json.dumps({"out": str(out), "pairs": len(demos), "optimal": int(np.sum(demos.source == 0))}))
    return EXIT_OK


def cmd_corrupt_bench(args) -> int:
    methods = args.methods.split(",")
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown corruption method(s) {bad}; choose from {METHODS}")
    rates = [float(c) for c in args.rates.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    rows = corruption_bench(args.env, methods, rates, seeds, n_samples=args.samples, n_observed=args.observed,
                            k=args.k, threshold=args.threshold)
    write_corruption_diag(args.out, rows)
    for r in rows:
        print(json.dumps(r))
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sail", description="Sample-efficient adversarial imitation at desk scale")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("train", help="run the training loop")
    _add_common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoints with the deterministic policy")
    p.add_argument("--checkpoint", nargs="+", required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write metrics.csv here")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("demo-gen", help="generate a demonstration file")
    _add_common(p)
    p.set_defaults(fn=cmd_demo_gen)

    p = sub.add_parser("corrupt-bench", help="variance and LOF outliers of corrupted states")
    p.add_argument("--env", default="NoisyLinear5")
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--rates", default="0.3")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--observed", type=int, default=2000)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--threshold", type=float, default=1.5)
    p.add_argument("--out", default="corruption_diag.csv")
    p.set_defaults(fn=cmd_corrupt_bench)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    args = make_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, EnvError, CheckpointError, FileNotFoundError) as exc:
        print(f"sail: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunAborted as exc:
        print(f"sail: run aborted at {exc}", file=sys.stderr)
        return EXIT_NUMERIC if exc.numeric else 1
    except (NumericError, DiffError, FloatingPointError) as exc:
        print(f"sail: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
