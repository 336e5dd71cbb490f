"""Seeded experiment runs.

Each seed writes ``seed_<n>.jsonl`` (one record per iteration), checkpoints
and heatmaps every ``checkpoint_every`` policy updates under
``checkpoints/`` and ``heatmaps/``.  After all seeds finish a single writer
produces ``aggregate.csv`` and ``summary.json``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .. import divergence as fdiv
from ..baselines import ppo_baseline_train, soft_q_train
from ..envs import make_env, rollout_batch
from ..errors import FpgError
from ..learner import evaluate, make_goal_density, train
from ..policy import GaussianMLPPolicy, TabularPolicy, save_checkpoint
from ..visitation import exact_visitation, fit_histogram, fit_kde
from .config import ExperimentConfig
from .heatmap import emit_heatmap, kde_grid, signal_field

log = logging.getLogger("fpg.harness")

AGGREGATE_COLUMNS = ("iteration", "mean_success", "std_success", "mean_entropy", "std_entropy")
RECORD_KEYS = ("seed", "learner", "iter", "policy_updates", "success_rate", "fdiv_estimate",
               "visitation_entropy", "mean_signal", "wall_clock")


class ExperimentError(FpgError):
    pass


def worker_count(n_jobs: int) -> int:
    """Workers for ``n_jobs`` seeds, capped by ``FPG_THREADS`` and the CPU count."""
    cap = os.environ.get("FPG_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            raise ExperimentError(f"FPG_THREADS must be an integer, got {cap!r}") from None
    return max(1, min(n_jobs, limit))


def seed_streams(seed: int):
    """Independent generators for policy init, training and evaluation."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(int(seed)).spawn(3)]


def build_env(cfg: ExperimentConfig):
    return make_env(cfg.env, horizon=cfg.horizon, layout_path=cfg.layout)


def build_policy(cfg: ExperimentConfig, mdp, rng):
    kind = cfg.policy
    if kind == "auto":
        kind = "tabular" if mdp.discrete else "mlp"
    if kind == "tabular":
        if not mdp.discrete:
            raise ExperimentError("tabular policies need a discrete environment")
        goals = [int(g) for g in mdp.goals]
        return TabularPolicy(mdp.n_states, mdp.n_actions, goals=goals if len(goals) > 1 else None)
    if mdp.discrete:
        raise ExperimentError("the MLP policy is for the continuous environments")
    off, scale = mdp.observation_scale()
    return GaussianMLPPolicy(mdp.state_dim + 2, mdp.action_dim, cfg.hidden, off, scale, rng=rng)


def _fields(cfg, mdp, policy, rng):
    """Visitation and f' fields over the layout for one goal."""
    goal = mdp.sample_goals(rng, 1)[0]
    spec = fdiv.get_generator(cfg.fpg.divergence)
    p_g = make_goal_density(cfg.fpg, mdp, goal)
    if mdp.discrete:
        if isinstance(policy, TabularPolicy):
            p = exact_visitation(mdp, policy.state_probs(None if policy.goals is None else int(goal))).probs
        else:
            trajs = rollout_batch(mdp, policy, np.repeat(goal, cfg.eval_episodes), rng)
            p = fit_histogram(trajs, mdp.n_states, cfg.fpg.smoothing).probs
        return p, signal_field(spec, p, p_g.table())
    trajs = rollout_batch(mdp, policy, np.repeat(goal[None], cfg.eval_episodes, axis=0), rng)
    model = fit_kde(np.concatenate([mdp.state_position(t.visited) for t in trajs]))
    p = kde_grid(model, mdp.layout)
    H, W = p.shape
    centres = np.stack(np.meshgrid(np.arange(W) + 0.5, np.arange(H) + 0.5), axis=-1).reshape(-1, 2)
    return p, signal_field(spec, p.reshape(-1), p_g.density(centres)).reshape(H, W)


def write_checkpoint(cfg, mdp, policy, seed, updates, out: Path, rng, vis=None):
    stem = f"seed{seed}_u{updates:06d}"
    save_checkpoint(policy, out / "checkpoints" / stem, env=cfg.env, horizon=mdp.horizon,
                    layout=cfg.layout, seed=seed, policy_updates=updates, learner=cfg.learner)
    p, sig = _fields(cfg, mdp, policy, rng)
    if vis is not None:
        p = vis
    hm = out / "heatmaps"
    emit_heatmap(p, mdp.layout, hm / f"{stem}_visitation.svg", title=f"visitation, seed {seed}, {updates} updates",
                 csv_path=hm / f"{stem}_visitation.csv")
    emit_heatmap(sig, mdp.layout, hm / f"{stem}_signal.svg", title=f"f' signal, seed {seed}, {updates} updates",
                 cmap="magma", csv_path=hm / f"{stem}_signal.csv")


def _clean(rec: dict) -> dict:
    out = {}
    for k, v in rec.items():
        if isinstance(v, (np.floating, np.integer)):
            v = v.item()
        if isinstance(v, float) and not np.isfinite(v):
            v = None
        out[k] = v
    return out


def run_seed(cfg: ExperimentConfig, seed: int, out) -> Path:
    """Train one seed; returns the JSONL path."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    init_rng, train_rng, eval_rng = seed_streams(seed)
    mdp = build_env(cfg)
    path = out / f"seed_{seed}.jsonl"

    if cfg.learner == "soft-q":
        sq = dataclasses.replace(cfg.softq, checkpoint_every=cfg.checkpoint_every, eval_episodes=cfg.eval_episodes)
        result = soft_q_train(mdp, config=sq, rng=train_rng)
        for k, vis in result.snapshots.items():
            write_checkpoint(cfg, mdp, result.policy, seed, k, out, eval_rng, vis=vis)
        records = [dict(r, eval_success=r["success_rate"]) for r in result.records]
        learner = result.learner
    else:
        policy = build_policy(cfg, mdp, init_rng)
        state = {"next": cfg.checkpoint_every}

        def callback(it, pol, tlog):
            rec = tlog.records[-1]
            if rec["policy_updates"] >= state["next"] or it == cfg.fpg.iterations:
                rec["eval_success"] = evaluate(mdp, pol, cfg.eval_episodes, eval_rng)
                write_checkpoint(cfg, mdp, pol, seed, rec["policy_updates"], out, eval_rng)
                while state["next"] <= rec["policy_updates"]:
                    state["next"] += cfg.checkpoint_every
            return False

        if cfg.learner == "fpg":
            tlog = train(cfg.fpg, mdp, policy, rng=train_rng, callback=callback)
        else:
            tlog = ppo_baseline_train(cfg.reward_spec(), mdp, policy, cfg.fpg, rng=train_rng, callback=callback)
        records = tlog.records
        learner = tlog.learner
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            full = {"seed": int(seed), "learner": learner, **rec}
            fh.write(json.dumps(_clean(full), sort_keys=True) + "\n")
    return path


def _run_seed_safe(cfg, seed, out):
    try:
        return seed, str(run_seed(cfg, seed, out)), None
    except Exception as e:  # a failed seed must not take the others down
        return seed, None, f"{type(e).__name__}: {e}\n{traceback.format_exc()}"


def read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def aggregate(jsonl_paths, out_csv) -> Path:
    """Mean and population std-dev across seeds for every iteration all seeds reached."""
    runs = [{r["iter"]: r for r in read_jsonl(p)} for p in jsonl_paths]
    if not runs:
        raise ExperimentError("nothing to aggregate")
    iters = sorted(set.intersection(*(set(r) for r in runs)))
    out_csv = Path(out_csv)
    with out_csv.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(AGGREGATE_COLUMNS)
        for it in iters:
            succ = np.array([r[it]["success_rate"] for r in runs], dtype=float)
            ent = np.array([np.nan if r[it]["visitation_entropy"] is None else r[it]["visitation_entropy"]
                            for r in runs], dtype=float)
            w.writerow([it, repr(float(succ.mean())), repr(float(succ.std())),
                        repr(float(ent.mean())), repr(float(ent.std()))])
    return out_csv


def run_experiment(cfg: ExperimentConfig, out=None) -> dict:
    """Run every seed, then aggregate.  Returns the summary dictionary.

    Seeds run in worker processes (at most ``FPG_THREADS``).  A failing seed
    is recorded in ``summary.json`` and the rest carry on; if every seed
    fails :class:`ExperimentError` is raised.
    """
    cfg.validate()
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    seeds = list(cfg.seeds)
    n = worker_count(len(seeds))
    if n == 1:
        results = [_run_seed_safe(cfg, s, out) for s in seeds]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_run_seed_safe, [cfg] * len(seeds), seeds, [out] * len(seeds)))
    ok = {s: p for s, p, err in results if err is None}
    failed = {s: err for s, _, err in results if err is not None}
    for s, err in failed.items():
        log.error("seed %s failed: %s", s, err.splitlines()[0])
        (out / f"seed_{s}.error.txt").write_text(err, encoding="utf-8")
    summary = {"seeds": seeds, "completed": sorted(ok), "failed": {str(s): e.splitlines()[0] for s, e in failed.items()},
               "workers": n}
    if ok:
        summary["aggregate"] = str(aggregate([ok[s] for s in sorted(ok)], out / "aggregate.csv"))
        finals = [read_jsonl(ok[s])[-1] for s in sorted(ok)]
        summary["final_success"] = {str(s): r.get("eval_success", r["success_rate"]) for s, r in zip(sorted(ok), finals)}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if not ok:
        raise ExperimentError(f"all {len(seeds)} seeds failed; see {out}")
    return summary
