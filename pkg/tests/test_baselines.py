import math

import numpy as np
import pytest

from fpg.baselines import (
    REWARD_KINDS,
    RewardSpec,
    SoftQConfig,
    bellman_residual,
    ppo_baseline_train,
    shaped_reward,
    soft_q_train,
    soft_value,
    trajectory_rewards,
)
from fpg.envs import TabularMDP, make_env, rollout_batch
from fpg.errors import DomainError, UnsupportedError
from fpg.learner import FpgConfig, evaluate, fprime_signal, train
from fpg.oracles import three_state_mdp, two_state_mdp
from fpg.policy import TabularPolicy
from fpg.visitation import DiscreteVisitation, GoalDensity, exact_visitation

GRID_CFG = dict(lr=0.1, epochs=1, trajectories=32, iterations=500, gamma=0.99)


def test_reward_kind_validation():
    assert set(REWARD_KINDS) == {"sparse", "l2", "log-goal-density", "fkl-signal"}
    with pytest.raises(DomainError):
        RewardSpec("aim")


def test_sparse_reward():
    assert shaped_reward(RewardSpec("sparse"), 3, 4) == 0.0
    assert shaped_reward(RewardSpec("sparse"), 4, 4) == 1.0
    mdp = make_env("pointmaze-u-hard")
    g = np.array([1.5, 1.5])
    assert shaped_reward(RewardSpec("sparse"), np.array([1.5, 1.9, 0, 0]), g, mdp) == 1.0


def test_l2_reward():
    spec = RewardSpec("l2")
    assert shaped_reward(spec, 2.0, 2.0) == 0.0
    assert shaped_reward(spec, 0.0, 2.0) == -4.0
    mdp = make_env("gridworld-room")
    g = mdp.goal_state
    r = shaped_reward(spec, np.arange(mdp.n_states), g, mdp)
    assert r.max() == 0.0 and np.argmax(r) == g
    assert r[mdp.index((13, 8))] == -9.0


def test_log_goal_density_reward_closed_form():
    spec = RewardSpec("log-goal-density", scale=0.7)
    xs = np.linspace(-3, 3, 13)
    r = shaped_reward(spec, xs, 0.5)
    shift = r + (xs - 0.5) ** 2 / (2 * 0.7 ** 2)
    np.testing.assert_allclose(shift, shift[0], atol=1e-12)


def test_fkl_signal_reward():
    frozen = DiscreteVisitation(np.array([0.5, 0.3, 0.2]))
    pg = GoalDensity("clipped-dirac", 2, support_size=3, epsilon=0.1)
    r = shaped_reward(RewardSpec("fkl-signal"), np.arange(3), 2, p_g=pg, p_frozen=frozen)
    np.testing.assert_allclose(r, -fprime_signal("fkl", frozen.probs, pg.table()))
    with pytest.raises(DomainError):
        shaped_reward(RewardSpec("fkl-signal"), 0, 2)


def test_trajectory_rewards_add_sparse_term():
    mdp = make_env("gridworld-room", horizon=6)
    rng = np.random.default_rng(0)
    trajs = rollout_batch(mdp, TabularPolicy(mdp.n_states, 4), np.full(3, mdp.goal_state), rng)
    sparse = trajectory_rewards(RewardSpec("sparse"), mdp, trajs)
    l2 = trajectory_rewards(RewardSpec("l2", weight=0.5), mdp, trajs)
    assert sparse.shape == l2.shape == (3, 6)
    expected = sparse + 0.5 * np.array([shaped_reward(RewardSpec("l2"), t.visited, t.goal, mdp) for t in trajs])
    np.testing.assert_allclose(l2, expected)


def test_ppo_log_schema_matches_fpg():
    mdp = three_state_mdp()
    cfg = FpgConfig(iterations=3, trajectories=8)
    fpg = train(cfg, mdp, TabularPolicy(3, 2), seed=0)
    ppo = ppo_baseline_train(RewardSpec("l2"), mdp, TabularPolicy(3, 2), cfg, seed=0)
    assert set(fpg.records[0]) == set(ppo.records[0])
    assert ppo.learner == "ppo-l2"


def test_ppo_mean_signal_is_mean_reward():
    mdp = three_state_mdp()
    log = ppo_baseline_train(RewardSpec("sparse"), mdp, TabularPolicy(3, 2),
                             FpgConfig(iterations=4, trajectories=64, lr=1e-9), seed=1)
    # with a frozen policy the mean sparse reward is p(goal) of the start policy
    p_goal = exact_visitation(mdp, np.full((3, 2), 0.5)).probs[2]
    assert np.mean(log.column("mean_signal")) == pytest.approx(p_goal, abs=0.03)


def _grid_success(env, kind, seed):
    mdp = make_env(env, horizon=40)
    pol = TabularPolicy(mdp.n_states, 4)
    ppo_baseline_train(RewardSpec(kind), mdp, pol, FpgConfig(**GRID_CFG), seed=seed)
    return evaluate(mdp, pol, 100, np.random.default_rng(100 + seed))


def test_sparse_ppo_solves_open_grid():
    assert _grid_success("gridworld-open", "sparse", 0) >= 0.9


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_l2_ppo_stuck_behind_wall(seed):
    assert _grid_success("gridworld-room", "l2", seed) <= 0.1


# ---------------------------------------------------------------- soft Q


def test_soft_value_limits():
    q = np.array([1.0, 2.0, 3.0])
    assert soft_value(q, 1e-4) == pytest.approx(3.0, abs=1e-3)
    assert soft_value(q, 1.0) == pytest.approx(math.log(np.exp(q).sum()))


def test_softq_config_validation():
    for bad in (dict(temperature=0.0), dict(gamma=1.0), dict(lr=0.0), dict(lr=1.5), dict(backup="td"),
                dict(updates=0)):
        with pytest.raises(DomainError):
            SoftQConfig(**bad)


def _cfg(**kw):
    base = dict(updates=400, checkpoint_every=100, eval_episodes=10)
    base.update(kw)
    return SoftQConfig(**base)


def test_softq_high_temperature_is_uniform():
    mdp = three_state_mdp()
    log = soft_q_train(mdp, 1e6, _cfg(), seed=0)
    np.testing.assert_allclose(log.policy.state_probs(2), 0.5, atol=1e-4)


def test_softq_low_temperature_is_greedy():
    mdp = three_state_mdp()
    log = soft_q_train(mdp, 1e-3, _cfg(reward="sparse", gamma=0.9), seed=0)
    probs = log.policy.state_probs(2)
    q = log.q[0]
    assert np.all(probs[np.arange(3), q.argmax(axis=1)] > 0.999)


def test_softq_one_state_fixed_point():
    mdp = TabularMDP(np.ones((1, 1, 1)), 0, 0, 5)
    r, gamma = 0.3, 0.9
    log = soft_q_train(mdp, 1.0, _cfg(reward=np.array([r]), gamma=gamma, updates=500), seed=0)
    assert log.q[0, 0, 0] == pytest.approx(r / (1 - gamma), abs=1e-8)


def test_softq_residual_on_two_state():
    mdp = two_state_mdp()
    log = soft_q_train(mdp, 1.0, _cfg(updates=10_000, tol=1e-7, checkpoint_every=1000), seed=0)
    assert log.residuals[-1] < 1e-6
    assert len(log.residuals) <= 10_000
    assert log.residuals[-1] == pytest.approx(
        bellman_residual(log.q[0], mdp.transitions, np.log(GoalDensity(
            "clipped-dirac", 1, support_size=2).table()), 0.99, 1.0))


def test_softq_sampled_backup_reduces_residual():
    mdp = two_state_mdp()
    log = soft_q_train(mdp, 1.0, _cfg(backup="sampled", lr=0.1, updates=300, trajectories=8), seed=0)
    assert log.residuals[-1] < log.residuals[0]


def test_softq_log_and_snapshots():
    mdp = make_env("gridworld-room")
    log = soft_q_train(mdp, 1.0, _cfg(updates=60, checkpoint_every=25), seed=0)
    assert [r["iter"] for r in log.records] == [25, 50, 60]
    assert sorted(log.snapshots) == [25, 50, 60]
    snap = log.snapshots[60]
    assert snap.shape == (mdp.n_states,) and snap.sum() == pytest.approx(1.0)
    assert set(log.records[0]) >= {"success_rate", "fdiv_estimate", "visitation_entropy", "mean_signal"}


def test_softq_needs_tabular_mdp():
    with pytest.raises(UnsupportedError):
        soft_q_train(make_env("pointmaze-u"))
