"""Acceptance criteria, one test each.

Every test records a single PASS / FAIL line (see ``conftest.py``) before
asserting, so the summary at the end of a run lists all nine outcomes.
"""

import functools
import time

import numpy as np
import pytest
from scipy import stats

from fpg.baselines import RewardSpec, SoftQConfig, ppo_baseline_train, soft_q_train
from fpg.envs import make_env, rollout_batch
from fpg.harness import emit_heatmap, signal_field
from fpg.learner import (
    FpgConfig,
    analytic_gradient,
    build_signal_batch,
    clipped_surrogate_grad,
    evaluate,
    make_goal_density,
    train,
)
from fpg.oracles import (
    chi2_bound_holds,
    gradcheck_suite,
    grid_search,
    random_tiny_mdp,
    smaxent_objective,
    three_state_mdp,
)
from fpg.policy import GaussianMLPPolicy, TabularPolicy
from fpg.visitation import GoalDensity, exact_visitation

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)
THREE_STATE_GOAL = 2
ROOM_CFG = dict(lr=0.1, epochs=1, trajectories=32, gamma=0.99)


def _room():
    return make_env("gridworld-room", horizon=40)


@functools.lru_cache(maxsize=None)
def _room_policy(divergence, seed, iterations):
    mdp = _room()
    pol = TabularPolicy(mdp.n_states, 4)
    train(FpgConfig(divergence=divergence, iterations=iterations, **ROOM_CFG), mdp, pol, seed=seed)
    return pol


def _success(mdp, pol, seed):
    return evaluate(mdp, pol, 100, np.random.default_rng(100 + seed))


def _three_state_run(divergence, seed, **extra):
    mdp = three_state_mdp()
    pol = TabularPolicy(3, 2)
    cfg = FpgConfig(divergence=divergence, lr=0.05, iterations=300, trajectories=256, epochs=5, **extra)
    train(cfg, mdp, pol, seed=seed)
    return exact_visitation(mdp, pol.state_probs()).probs


def test_criterion_1_gradient_oracle(report):
    t = time.perf_counter()
    results = gradcheck_suite(n_mdps=12, seed=0)
    elapsed = time.perf_counter() - t
    rel = max(r.max_rel for r in results)
    small = max(r.max_abs_small for r in results)
    ok = all(r.passed for r in results) and rel <= 1e-3 and small <= 1e-6 and elapsed <= 60
    report(1, ok, f"{len(results)} cases, max rel {rel:.2e}, max abs (small) {small:.2e}, {elapsed:.0f}s")
    assert ok


def test_criterion_2_rkl_js_optimal(report):
    mdp = three_state_mdp()
    best, _, _ = grid_search(mdp, lambda vis: vis[:, THREE_STATE_GOAL])
    t = time.perf_counter()
    gaps = {(d, s): best - _three_state_run(d, s)[THREE_STATE_GOAL] for d in ("rkl", "js") for s in SEEDS}
    elapsed = time.perf_counter() - t
    worst = max(abs(g) for g in gaps.values())
    ok = worst <= 1e-2 and elapsed <= 300
    report(2, ok, f"grid max p(g) {best:.4f}, worst gap {worst:.4f} over rkl/js x 3 seeds, {elapsed:.0f}s")
    assert ok


def test_criterion_3_fkl_smaxent(report):
    mdp = three_state_mdp()
    eps = 0.2
    pg = GoalDensity("clipped-dirac", THREE_STATE_GOAL, support_size=3, epsilon=eps)
    objective = smaxent_objective(pg.log_density(np.arange(3)))
    best, _, _ = grid_search(mdp, objective)
    t = time.perf_counter()
    vals = [objective(_three_state_run("fkl", s, goal_epsilon=eps)[None])[0] for s in SEEDS]
    elapsed = time.perf_counter() - t
    worst = max(abs(best - v) for v in vals)
    ok = worst <= 1e-2 and elapsed <= 300
    report(3, ok, f"grid max {best:.4f}, reached {np.round(vals, 4).tolist()}, worst gap {worst:.4f}, {elapsed:.0f}s")
    assert ok


def test_criterion_4_chi2_bound(report):
    ok, worst = chi2_bound_holds(np.random.default_rng(0), n_pairs=1000, tol=1e-9)
    report(4, ok, f"1000 pairs, min(chi2 - (fkl - 1)) = {worst:.3e}")
    assert ok


def test_criterion_5_gridworld_room(report):
    mdp = _room()
    t = time.perf_counter()
    rates = {d: [_success(mdp, _room_policy(d, s, 500), s) for s in SEEDS] for d in ("fkl", "rkl")}
    sparse = []
    for s in SEEDS:
        pol = TabularPolicy(mdp.n_states, 4)
        ppo_baseline_train(RewardSpec("sparse"), mdp, pol, FpgConfig(iterations=500, **ROOM_CFG), seed=s)
        sparse.append(_success(mdp, pol, s))
    elapsed = time.perf_counter() - t
    ok = (all(sum(r >= 0.9 for r in rates[d]) >= 2 for d in rates)
          and max(sparse) <= 0.1 and elapsed <= 900)
    report(5, ok, f"fkl {rates['fkl']}, rkl {rates['rkl']}, sparse PPO {sparse}, {elapsed:.0f}s")
    assert ok


def test_criterion_6_entropy_vs_soft_q(report):
    mdp = _room()
    t = time.perf_counter()
    h_fpg = [exact_visitation(mdp, _room_policy("fkl", s, 1000).state_probs()).entropy() for s in SEEDS]
    h_sq = []
    for s in SEEDS:
        log = soft_q_train(mdp, 1.0, SoftQConfig(updates=2000, checkpoint_every=1000, eval_episodes=10), seed=s)
        h_sq.append(exact_visitation(mdp, log.policy.state_probs(mdp.goal_state)).entropy())
    elapsed = time.perf_counter() - t
    margin = min(h_fpg) - max(h_sq)
    ok = margin >= 0.2 and elapsed <= 900
    report(6, ok, f"fkl-PG H {np.round(h_fpg, 3).tolist()}, soft-Q H {np.round(h_sq, 3).tolist()}, "
                  f"margin {margin:.3f} nats, {elapsed:.0f}s")
    assert ok


def test_criterion_7_signal_shape(report, tmp_path):
    mdp = _room()
    t = time.perf_counter()
    pol = _room_policy("fkl", 0, 1000)
    p = exact_visitation(mdp, pol.state_probs()).probs
    pg = make_goal_density(FpgConfig(divergence="fkl"), mdp, mdp.goal_state)
    emit_heatmap(signal_field("fkl", p, pg.table()), mdp.layout, tmp_path / "signal.svg",
                 csv_path=tmp_path / "signal.csv")
    grid = np.loadtxt(tmp_path / "signal.csv", delimiter=",")
    free = ~mdp.layout.wall_mask()
    peak = tuple(int(i) for i in np.unravel_index(np.argmax(np.where(free, grid, -np.inf)), grid.shape))
    goal_cell = mdp.cell(mdp.goal_state)[::-1]
    sig = grid.ravel()
    others = np.array([s for s in range(mdp.n_states) if free.ravel()[s] and s != mdp.goal_state and p[s] > 0])
    rho = stats.spearmanr(p[others], sig[others]).statistic
    elapsed = time.perf_counter() - t
    ok = peak == goal_cell and rho > 0 and elapsed <= 120
    report(7, ok, f"f' argmax at cell {peak[::-1]} (goal {goal_cell[::-1]}), "
                  f"Spearman over {len(others)} visited non-goal cells {rho:.3f}, {elapsed:.0f}s")
    assert ok


def test_criterion_8_point_maze(report):
    mdp = make_env("pointmaze-u-hard", horizon=100)
    off, sc = mdp.observation_scale()
    cfg = FpgConfig(divergence="fkl", goal_density="gaussian", goal_scale=1.0, estimator="kde", iterations=200)
    t = time.perf_counter()
    rates = []
    for s in SEEDS:
        pol = GaussianMLPPolicy(6, 2, obs_offset=off, obs_scale=sc, rng=np.random.default_rng(s))
        train(cfg, mdp, pol, seed=s)
        rates.append(_success(mdp, pol, s))
    elapsed = time.perf_counter() - t
    ok = sum(r >= 0.7 for r in rates) >= 2
    report(8, ok, f"success {rates} after {cfg.iterations} iterations, {elapsed:.0f}s")
    assert ok


def _cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def test_criterion_9_estimator_agreement(report):
    rng = np.random.default_rng(0)
    t = time.perf_counter()
    worst = 1.0
    for _ in range(12):
        mdp = random_tiny_mdp(rng)
        # every state must be reachable, otherwise rkl is infinite
        while np.any(exact_visitation(mdp, np.full((mdp.n_states, mdp.n_actions), 0.5)).probs <= 0):
            mdp = random_tiny_mdp(rng)
        pol = TabularPolicy(mdp.n_states, mdp.n_actions, params=rng.normal(size=mdp.n_states * mdp.n_actions))
        goal = int(mdp.goals[0])
        pg = GoalDensity("clipped-dirac", goal, support_size=mdp.n_states)
        p = exact_visitation(mdp, pol.state_probs())
        trajs = rollout_batch(mdp, pol, np.full(10_000, goal), rng)
        for name in ("fkl", "rkl", "js", "chi2", "tv"):
            exact = analytic_gradient(pol, trajs, p, pg, name, baseline=True)
            surrogate = clipped_surrogate_grad(pol, build_signal_batch(trajs, p, pg, name, 1.0), 0.2, baseline=True)
            worst = min(worst, _cosine(exact, surrogate))
    elapsed = time.perf_counter() - t
    ok = worst >= 0.95 and elapsed <= 300
    report(9, ok, f"worst cosine {worst:.4f} over 12 MDPs x 5 generators, {elapsed:.0f}s")
    assert ok
