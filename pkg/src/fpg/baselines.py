"""Reward-driven comparison learners.

``ppo_baseline_train`` runs the same collect / surrogate-update loop as
:func:`fpg.learner.train` with reward-to-go in place of the f' signal.
``soft_q_train`` is tabular soft Q-learning, the policy-entropy
(pi-MaxEnt) counterpart to f-PG's state-entropy objective.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import divergence as fdiv
from .envs import TabularMDP, rollout_batch
from .errors import DomainError, UnsupportedError
from .learner import FpgConfig, TrainingLog, evaluate, fprime_signal, train
from .policy import TabularPolicy
from .visitation import GoalDensity, exact_visitation

REWARD_KINDS = ("sparse", "l2", "log-goal-density", "fkl-signal")


@dataclass(frozen=True)
class RewardSpec:
    """Which reward a baseline optimises.

    Every kind except ``sparse`` is a shaping term added to the sparse task
    reward with coefficient ``weight``.  ``scale`` is the width of the
    Gaussian used by ``log-goal-density`` when no goal density is supplied.
    """

    kind: str = "sparse"
    weight: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in REWARD_KINDS:
            raise DomainError(f"unknown reward kind {self.kind!r}; expected one of {REWARD_KINDS}")


def _positions(mdp, states, goal):
    if mdp is None:
        s = np.asarray(states, dtype=float)
        g = np.asarray(goal, dtype=float)
        if s.ndim <= 1 and g.ndim == 0:
            s, g = s.reshape(-1, 1), g.reshape(1)
        return np.atleast_2d(s), g
    return np.atleast_2d(mdp.state_position(states)), np.asarray(mdp.goal_position(goal), dtype=float)


def shaped_reward(spec: RewardSpec, s, g, mdp=None, p_g=None, p_frozen=None):
    """Reward term of kind ``spec.kind`` for state(s) ``s`` and goal ``g``.

    ``sparse`` is 1 on the goal and 0 elsewhere; ``l2`` is ``-|s - g|^2``;
    ``log-goal-density`` is ``log p_g(s)``; ``fkl-signal`` is
    ``-f'(p_frozen(s) / p_g(s))`` for the forward KL.  Scalars in, scalar
    out; arrays of states give an array.  This is the raw term, without the
    sparse reward added.
    """
    scalar = np.ndim(s) == 0 or (mdp is not None and not mdp.discrete and np.ndim(s) == 1)
    states = np.atleast_1d(np.asarray(s)) if mdp is None or mdp.discrete else np.atleast_2d(s)
    if spec.kind == "sparse":
        if mdp is not None:
            out = mdp.goal_reached(states, np.broadcast_to(g, states.shape[:1] + np.shape(g))).astype(float)
        else:
            out = (states == g).astype(float)
    elif spec.kind == "l2":
        x, c = _positions(mdp, states, g)
        out = -np.sum((x[:, : c.size] - c.reshape(1, -1)) ** 2, axis=1)
    else:
        if p_g is None:
            center = g if mdp is None else (int(g) if mdp.discrete else mdp.goal_position(g))
            positions = mdp.positions if mdp is not None and mdp.discrete else None
            p_g = GoalDensity("gaussian", center, scale=spec.scale, positions=positions)
        if spec.kind == "log-goal-density":
            out = np.asarray(p_g.log_density(states if mdp is None or mdp.discrete
                                             else mdp.state_position(states)), dtype=float)
        else:
            if p_frozen is None:
                raise DomainError("fkl-signal reward needs the frozen visitation model")
            pts = states if mdp is None or mdp.discrete else mdp.state_position(states)
            out = -fprime_signal("fkl", p_frozen(pts), p_g(pts))
    out = np.asarray(out, dtype=float)
    return float(out[0]) if scalar else out


def trajectory_rewards(spec: RewardSpec, mdp, trajectories, models=None, p_gs=None) -> np.ndarray:
    """``(N, T)`` rewards at ``s_1 .. s_T``: sparse plus ``weight`` times shaping."""
    rows = []
    for i, tr in enumerate(trajectories):
        r = shaped_reward(RewardSpec("sparse"), tr.visited, tr.goal, mdp)
        if spec.kind != "sparse":
            pg = None if p_gs is None else p_gs[i]
            frozen = None if models is None else models[i]
            r = r + spec.weight * shaped_reward(spec, tr.visited, tr.goal, mdp, p_g=pg, p_frozen=frozen)
        rows.append(np.asarray(r, dtype=float).reshape(-1))
    return np.array(rows)


def ppo_baseline_train(reward: RewardSpec, mdp, policy, config: FpgConfig, rng=None, seed=None,
                       callback=None) -> TrainingLog:
    """Clipped-surrogate policy gradient on reward-to-go.

    The signal for the action at step ``t`` is ``-sum_{t'>t} gamma^t' r(s_t')``,
    so the update is exactly f-PG's with rewards standing in for f'.
    ``mean_signal`` in the log is the mean per-step reward.  The frozen
    model for ``fkl-signal`` is the visitation fitted on the current batch.
    """

    def costs(trajs, models, p_gs):
        return -trajectory_rewards(reward, mdp, trajs, models, p_gs)

    log = train(config, mdp, policy, rng=rng, seed=seed, callback=callback,
                learner=f"ppo-{reward.kind}", cost_fn=costs)
    for rec in log.records:
        rec["mean_signal"] = -rec["mean_signal"]
    return log


# ---------------------------------------------------------------- soft Q


@dataclass
class SoftQConfig:
    """Tabular soft Q-learning.

    ``backup="expected"`` applies full synchronous backups through the known
    transition matrix (one sweep is one update); ``"sampled"`` learns from
    rollouts of the current softmax policy, one update per iteration of
    ``trajectories`` episodes.  ``reward`` is ``"log-goal-density"`` (the
    clipped-Dirac log density, i.e. the reward f-PG's forward-KL objective
    implies), ``"sparse"``, or an explicit per-state vector.
    """

    temperature: float = 1.0
    gamma: float = 0.99
    updates: int = 2000
    lr: float = 1.0
    backup: str = "expected"
    reward: object = "log-goal-density"
    goal_epsilon: float | None = None
    trajectories: int = 32
    checkpoint_every: int = 50
    eval_episodes: int = 100
    tol: float = 0.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.temperature <= 0:
            raise DomainError("temperature must be positive")
        if not 0 <= self.gamma < 1:
            raise DomainError("gamma must lie in [0, 1)")
        if self.backup not in ("expected", "sampled"):
            raise DomainError(f"unknown backup {self.backup!r}")
        if not 0 < self.lr <= 1:
            raise DomainError("lr must lie in (0, 1]")
        for name in ("updates", "trajectories", "checkpoint_every", "eval_episodes"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be positive")
        if isinstance(self.reward, str) and self.reward not in ("log-goal-density", "sparse"):
            raise DomainError(f"unknown soft-Q reward {self.reward!r}")

    def to_dict(self):
        d = asdict(self)
        if not isinstance(self.reward, str):
            d["reward"] = np.asarray(self.reward).tolist()
        return d


def _state_rewards(config: SoftQConfig, mdp, goal) -> np.ndarray:
    n = mdp.n_states
    if not isinstance(config.reward, str):
        r = np.asarray(config.reward, dtype=float)
        if r.shape != (n,):
            raise DomainError(f"reward vector must have shape ({n},)")
        return r
    if config.reward == "sparse":
        return (np.arange(n) == goal).astype(float)
    return GoalDensity("clipped-dirac", int(goal), support_size=n, epsilon=config.goal_epsilon).log_density(np.arange(n))


def soft_value(Q, temperature) -> np.ndarray:
    """``alpha * logsumexp(Q / alpha)`` over the last axis."""
    z = Q / temperature
    m = z.max(axis=-1, keepdims=True)
    return temperature * (m[..., 0] + np.log(np.exp(z - m).sum(axis=-1)))


def soft_backup(Q, P, r, gamma, temperature) -> np.ndarray:
    """Expected soft Bellman target ``sum_s' P(s'|s,a) (r(s') + gamma V(s'))``."""
    return P @ (r + gamma * soft_value(Q, temperature))


def bellman_residual(Q, P, r, gamma, temperature) -> float:
    return float(np.abs(soft_backup(Q, P, r, gamma, temperature) - Q).max())


@dataclass
class SoftQLog(TrainingLog):
    q: np.ndarray | None = None
    residuals: list = field(default_factory=list)


def soft_q_train(mdp: TabularMDP, temperature: float | None = None, config: SoftQConfig | None = None,
                 rng=None, seed=None) -> SoftQLog:
    """Tabular soft Q-learning with policy ``softmax(Q / temperature)``.

    Snapshots of the exact visitation of that policy are kept every
    ``checkpoint_every`` updates (keyed by update count) for heatmaps.
    """
    if getattr(mdp, "transitions", None) is None:
        raise UnsupportedError("soft Q-learning needs a tabular MDP")
    config = config or SoftQConfig()
    if temperature is not None:
        config = SoftQConfig(**{**asdict(config), "temperature": float(temperature)})
    config.validate()
    rng = rng if rng is not None else np.random.default_rng(seed)
    alpha, gamma = config.temperature, config.gamma
    P = mdp.transitions
    goals = [int(g) for g in mdp.goals]
    R = np.array([_state_rewards(config, mdp, g) for g in goals])
    Q = np.zeros((len(goals), mdp.n_states, mdp.n_actions))
    policy = TabularPolicy(mdp.n_states, mdp.n_actions, goals=goals)
    log = SoftQLog(learner="soft-q", policy=policy)
    t0 = time.perf_counter()

    def sync():
        policy.params = (Q / alpha).reshape(-1).copy()

    def record(k):
        sync()
        vis = [exact_visitation(mdp, policy.state_probs(g)) for g in goals]
        divs, ents = [], []
        for g, v in zip(goals, vis):
            q = GoalDensity("clipped-dirac", g, support_size=mdp.n_states, epsilon=config.goal_epsilon).table()
            divs.append(fdiv.f_divergence("fkl", v.probs, q))
            ents.append(v.entropy())
        log.snapshots[k] = np.mean([v.probs for v in vis], axis=0)
        log.records.append({
            "iter": k,
            "policy_updates": k,
            "success_rate": evaluate(mdp, policy, config.eval_episodes, rng),
            "fdiv_estimate": float(np.mean(divs)),
            "visitation_entropy": float(np.mean(ents)),
            "mean_signal": log.residuals[-1],
            "wall_clock": time.perf_counter() - t0,
        })

    for k in range(1, config.updates + 1):
        if config.backup == "expected":
            for i in range(len(goals)):
                Q[i] += config.lr * (soft_backup(Q[i], P, R[i], gamma, alpha) - Q[i])
        else:
            sync()
            trajs = rollout_batch(mdp, policy, mdp.sample_goals(rng, config.trajectories), rng)
            for tr in trajs:
                i = goals.index(int(tr.goal))
                for s, a, s2 in zip(tr.states[:-1], tr.actions, tr.states[1:]):
                    target = R[i, s2] + gamma * soft_value(Q[i, s2], alpha)
                    Q[i, s, a] += config.lr * (target - Q[i, s, a])
        log.residuals.append(max(bellman_residual(Q[i], P, R[i], gamma, alpha) for i in range(len(goals))))
        done = config.tol and log.residuals[-1] < config.tol
        if k % config.checkpoint_every == 0 or k == config.updates or done:
            record(k)
        if done:
            break
    sync()
    log.q = Q
    return log
