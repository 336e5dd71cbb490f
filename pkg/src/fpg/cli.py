"""Command line entry point: ``fpg {train,eval,gradcheck,oracle,plot}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .divergence import GENERATORS
from .envs import ENVIRONMENTS, make_env
from .errors import FpgError


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fpg", description="f-divergence policy gradients for goal-conditioned RL")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run an experiment config over its seeds")
    t.add_argument("--config", type=Path, help="key = value experiment file")
    t.add_argument("--seed", type=int, help="run only this seed")
    t.add_argument("--out", type=Path, help="output directory")
    t.add_argument("--learner", choices=("fpg", "ppo-baseline", "soft-q"))
    t.add_argument("--divergence", choices=sorted(GENERATORS))
    t.add_argument("--env", choices=ENVIRONMENTS)

    e = sub.add_parser("eval", help="success rate of a saved checkpoint")
    e.add_argument("checkpoint", type=Path, help="checkpoint path (.json or .bin)")
    e.add_argument("--env", choices=ENVIRONMENTS, help="defaults to the env stored in the checkpoint")
    e.add_argument("--horizon", type=int)
    e.add_argument("--episodes", type=int, default=100)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--deterministic", action="store_true", help="act greedily / with the mean action")

    g = sub.add_parser("gradcheck", help="analytic gradient vs finite differences on random tiny MDPs")
    g.add_argument("--mdps", type=int, default=12)
    g.add_argument("--seed", type=int, default=0)

    o = sub.add_parser("oracle", help="exhaustive small-MDP property suite")
    o.add_argument("--seed", type=int, default=0)

    pl = sub.add_parser("plot", help="learning curves from JSONL logs or aggregate.csv")
    pl.add_argument("inputs", nargs="+", type=Path)
    pl.add_argument("--out", type=Path, default=Path("learning_curve.svg"))
    pl.add_argument("--metric", default="success_rate")
    return p


def cmd_train(args, parser) -> int:
    from .harness import ExperimentConfig, load_config, run_experiment

    if args.config is not None:
        if not args.config.is_file():
            parser.error(f"config file not found: {args.config}")
        cfg = load_config(args.config)
    else:
        cfg = ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seeds"] = (args.seed,)
    if args.out is not None:
        changes["out"] = str(args.out)
    if args.learner:
        changes["learner"] = args.learner
    if args.divergence:
        changes["divergence"] = args.divergence
    if args.env:
        changes["env"] = args.env
    cfg = cfg.replace(**changes)
    summary = run_experiment(cfg)
    for seed, succ in summary.get("final_success", {}).items():
        print(f"seed {seed}: final success {succ:.3f}")
    for seed, err in summary["failed"].items():
        print(f"seed {seed}: FAILED {err}")
    print(f"results in {cfg.out}")
    return 0 if not summary["failed"] else 1


def cmd_eval(args, parser) -> int:
    from .learner import evaluate
    from .policy import load_checkpoint

    path = args.checkpoint.with_suffix("")
    if not path.with_suffix(".json").is_file():
        parser.error(f"checkpoint not found: {args.checkpoint}")
    policy, header = load_checkpoint(path)
    env = args.env or header.get("env")
    if env is None:
        parser.error("checkpoint does not name its environment; pass --env")
    mdp = make_env(env, horizon=args.horizon or header.get("horizon"), layout_path=header.get("layout"))
    rate = evaluate(mdp, policy, args.episodes, np.random.default_rng(args.seed), args.deterministic)
    print(f"success rate {rate:.3f} over {args.episodes} episodes ({env})")
    return 0


def cmd_gradcheck(args, parser) -> int:
    from .oracles import gradcheck_suite

    results = gradcheck_suite(n_mdps=args.mdps, seed=args.seed)
    worst_rel = max(r.max_rel for r in results)
    worst_abs = max(r.max_abs_small for r in results)
    for name in GENERATORS:
        rs = [r for r in results if r.generator == name]
        print(f"{name:5s} max rel. error {max(r.max_rel for r in rs):.3e}  "
              f"max abs. error (small) {max(r.max_abs_small for r in rs):.3e}")
    ok = all(r.passed for r in results)
    print(f"max rel. error {worst_rel:.3e}, max abs. error {worst_abs:.3e} over {len(results)} cases: "
          f"{'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_oracle(args, parser) -> int:
    from .oracles import run_property_suite

    results = run_property_suite(args.seed)
    for name, passed, detail in results:
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return 0 if all(p for _, p, _ in results) else 1


def cmd_plot(args, parser) -> int:
    from .harness import plot_learning_curves

    missing = [p for p in args.inputs if not p.is_file()]
    if missing:
        parser.error(f"input not found: {missing[0]}")
    out = plot_learning_curves(args.inputs, args.out, args.metric)
    print(f"wrote {out}")
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "gradcheck": cmd_gradcheck, "oracle": cmd_oracle, "plot": cmd_plot}


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, parser)
    except FpgError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
