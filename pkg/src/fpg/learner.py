"""f-policy-gradient estimators and the training loop.

The objective is ``J(theta) = D_f(p_theta || p_g)``.  Its gradient is a
score-function estimate weighted by the per-state signal
``f'(p_theta(s) / p_g(s))``; every gradient returned here points uphill on
``J`` and the optimiser descends it.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import divergence as fdiv
from .envs import GoalConditionedMDP, rollout_batch
from .errors import DomainError, NumericError, SignalError, StalePolicyError, UndefinedDivergenceError
from .policy import Adam, TabularPolicy
from .visitation import (
    DiscreteVisitation,
    GoalDensity,
    VisitationModel,
    exact_visitation,
    fit_histogram,
    fit_kde,
)

SIGNAL_MODES = ("reverse-cumulative", "full-sum", "discounted-grad")
MAX_LOG_RATIO = 20.0


# ---------------------------------------------------------------- signals


def fprime_signal(spec, p_vals, pg_vals) -> np.ndarray:
    """``f'(p / p_g)`` per state; states with ``p_g = 0`` get ``f'(inf)``."""
    spec = fdiv.get_generator(spec)
    p = np.asarray(p_vals, dtype=float)
    q = np.asarray(pg_vals, dtype=float)
    out = np.empty(np.broadcast(p, q).shape)
    zero = q <= 0
    if np.any(zero):
        if spec.fprime_at_infinity is None:
            raise UndefinedDivergenceError(
                f"{spec.name}: p_g vanishes at a visited state and f'(inf) is undefined; "
                "use a clipped goal density or the Dirac-form gradient"
            )
        out[zero] = spec.fprime_at_infinity
    live = ~zero
    with np.errstate(divide="ignore", invalid="ignore"):
        out[live] = spec.fprime(np.maximum(p[live], fdiv.LOG_FLOOR) / q[live])
    return out


def _pick(obj, i, traj):
    if isinstance(obj, (list, tuple)):
        return obj[i]
    if isinstance(obj, (VisitationModel, GoalDensity)):
        return obj
    if callable(obj):
        return obj(traj.goal)
    return obj


def _query(model, points):
    if isinstance(model, (VisitationModel, GoalDensity)) or callable(model):
        return np.asarray(model(points), dtype=float)
    raise TypeError(f"cannot query density {model!r}")


def trajectory_signals(trajectories, p_theta, p_g, spec, state_map=None) -> np.ndarray:
    """``(N, T)`` array of ``f'(p_theta(s_t) / p_g(s_t))`` for ``t = 1..T``."""
    rows = []
    for i, tr in enumerate(trajectories):
        pts = tr.visited if state_map is None else state_map(tr.visited)
        pv = _query(_pick(p_theta, i, tr), pts)
        qv = _query(_pick(p_g, i, tr), pts)
        sig = fprime_signal(spec, pv, qv)
        if not np.all(np.isfinite(sig)):
            bad = int(np.flatnonzero(~np.isfinite(sig))[0])
            raise SignalError(f"non-finite signal at state {np.asarray(tr.visited[bad]).tolist()!r} (trajectory {i}, t={bad + 1})")
        rows.append(sig)
    return np.array(rows)


def _flatten_steps(trajectories):
    T = trajectories[0].horizon
    states = np.concatenate([tr.states[:-1] for tr in trajectories])
    actions = np.concatenate([tr.actions for tr in trajectories])
    goals = np.repeat(np.asarray([tr.goal for tr in trajectories]), T, axis=0)
    return states, goals, actions, T


def _traj_weights(trajectories, weights):
    if weights is None:
        return np.full(len(trajectories), 1.0 / len(trajectories))
    w = np.asarray(weights, dtype=float)
    return w / w.sum()


# ---------------------------------------------------------------- gradients


def analytic_gradient(policy, trajectories, p_theta, p_g, spec, weights=None, baseline=False,
                      state_map=None) -> np.ndarray:
    """On-policy estimate of ``grad J``::

        1/T * E_tau[(sum_t grad log pi(a_t | s_t)) (sum_t f'(p_theta(s_t) / p_g(s_t)))]

    ``weights`` turns the sample mean into a weighted one (trajectory
    probabilities give the exact expectation on enumerable MDPs).  With
    ``baseline`` the weighted mean signal sum is subtracted first.
    """
    if not trajectories:
        raise DomainError("no trajectories")
    w = _traj_weights(trajectories, weights)
    sums = trajectory_signals(trajectories, p_theta, p_g, spec, state_map).sum(axis=1)
    if baseline:
        sums = sums - w @ sums
    states, goals, actions, T = _flatten_steps(trajectories)
    step_w = np.repeat(w * sums / T, T)
    return policy.grad_log_prob(states, goals, actions, step_w)


def dirac_scale(spec, p_goal) -> float:
    """``f'(p_theta(g)) - f'(inf)``; non-positive for ``p_theta(g) <= 1``."""
    spec = fdiv.get_generator(spec)
    if spec.fprime_at_infinity is None:
        raise UndefinedDivergenceError(f"{spec.name} has no f'(inf); the Dirac-form gradient is undefined")
    return float(spec.fprime(np.asarray(max(p_goal, fdiv.LOG_FLOOR)))) - spec.fprime_at_infinity


def dirac_gradient(policy, trajectories, p_theta_at_goal, spec, goal, weights=None) -> np.ndarray:
    """Gradient of ``D_f(p_theta || delta_g)``::

        (f'(p_theta(g)) - f'(inf)) / T * E_tau[eta_tau(g) sum_t grad log pi]

    Zero when no trajectory visits the goal.
    """
    scale = dirac_scale(spec, p_theta_at_goal)
    w = _traj_weights(trajectories, weights)
    eta = np.array([np.sum(tr.visited == goal) for tr in trajectories], dtype=float)
    states, goals, actions, T = _flatten_steps(trajectories)
    return policy.grad_log_prob(states, goals, actions, np.repeat(scale * w * eta / T, T))


@dataclass
class SignalBatch:
    """Per-step data for the clipped surrogate.

    Row ``k`` is step ``t`` of trajectory ``traj[k]``: the state ``s_t``
    the action was taken in, the action, its behaviour log-probability,
    ``fprime[k] = f'`` at ``s_{t+1}`` and the signal ``signals[k]``.
    """

    states: np.ndarray
    goals: np.ndarray
    actions: np.ndarray
    behavior_logprobs: np.ndarray
    fprime: np.ndarray
    signals: np.ndarray
    score_weights: np.ndarray
    traj: np.ndarray
    timestep: np.ndarray
    gamma: float
    mode: str
    horizon: int

    def __len__(self):
        return len(self.signals)

    def recompute_signals(self) -> np.ndarray:
        return _signals_from_fprime(self.fprime.reshape(-1, self.horizon), self.gamma, self.mode).reshape(-1)


def _signals_from_fprime(fp, gamma, mode):
    """``fp[i, k]`` is f' at ``s_{k+1}``; returns ``F[i, t]`` for actions ``t = 0..T-1``."""
    n, T = fp.shape
    if mode == "full-sum":
        return np.repeat(fp.sum(axis=1, keepdims=True), T, axis=1)
    disc = float(gamma) ** np.arange(1, T + 1)
    return np.cumsum((fp * disc)[:, ::-1], axis=1)[:, ::-1]


def build_signal_batch(trajectories, p_prev, p_g, spec, gamma, mode="reverse-cumulative",
                       state_map=None) -> SignalBatch:
    """Signals for each step.

    ``reverse-cumulative``: ``F_t = sum_{t'=t+1..T} gamma^t' f'(s_t')``.
    ``full-sum``: every step gets the undiscounted trajectory total.
    ``discounted-grad``: as reverse-cumulative, plus score weight ``gamma^t``.
    ``gamma = 0`` zeroes every signal since the sum starts at ``t' = 1``.
    """
    if mode not in SIGNAL_MODES:
        raise DomainError(f"unknown signal mode {mode!r}")
    fp = trajectory_signals(trajectories, p_prev, p_g, spec, state_map)
    return batch_from_costs(trajectories, fp, gamma, mode)


def batch_from_costs(trajectories, costs, gamma, mode="reverse-cumulative") -> SignalBatch:
    """:class:`SignalBatch` from per-state costs ``costs[i, k]`` at ``s_{k+1}``.

    f-PG passes f' values; reward learners pass negated rewards.
    """
    if mode not in SIGNAL_MODES:
        raise DomainError(f"unknown signal mode {mode!r}")
    if not 0 <= gamma <= 1:
        raise DomainError("gamma must lie in [0, 1]")
    fp = np.asarray(costs, dtype=float)
    F = _signals_from_fprime(fp, gamma, mode)
    states, goals, actions, T = _flatten_steps(trajectories)
    n = len(trajectories)
    ts = np.tile(np.arange(T), n)
    score_w = float(gamma) ** ts if mode == "discounted-grad" else np.ones(n * T)
    return SignalBatch(
        states=states,
        goals=goals,
        actions=actions,
        behavior_logprobs=np.concatenate([tr.behavior_logprobs for tr in trajectories]),
        fprime=fp.reshape(-1),
        signals=F.reshape(-1),
        score_weights=score_w,
        traj=np.repeat(np.arange(n), T),
        timestep=ts,
        gamma=float(gamma),
        mode=mode,
        horizon=T,
    )


def _advantages(batch, baseline, normalize):
    # minimisation: advantage is the negated signal
    adv = -batch.signals.astype(float)
    if baseline:
        # F_t shrinks with t, so a single constant leaves a large time trend
        # in the advantages; subtract the batch mean at each timestep instead
        means = np.bincount(batch.timestep, weights=adv) / np.bincount(batch.timestep)
        adv = adv - means[batch.timestep]
    if normalize:
        sd = adv.std()
        if sd > 1e-12:
            adv = adv / sd
    return adv


def clipped_surrogate_grad(policy, batch: SignalBatch, clip_eps=0.2, baseline=True, normalize=False,
                           return_info=False):
    """Gradient of ``J`` from the clipped importance-sampled surrogate.

    With ``A = -F`` the maximised surrogate is the usual pessimistic
    ``mean(min(r A, clip(r, 1-eps, 1+eps) A))``; the returned vector is the
    negated gradient of that mean, i.e. a descent direction for ``J``.
    """
    if not 0 < clip_eps < 1:
        raise DomainError("clip epsilon must lie in (0, 1)")
    logp = policy.log_prob(batch.states, batch.goals, batch.actions)
    log_ratio = logp - batch.behavior_logprobs
    if np.any(np.abs(log_ratio) > MAX_LOG_RATIO):
        raise StalePolicyError(f"log importance ratio up to {np.abs(log_ratio).max():.1f}; batch is stale")
    ratio = np.exp(log_ratio)
    adv = _advantages(batch, baseline, normalize) * batch.score_weights
    active = np.where(adv >= 0, ratio <= 1 + clip_eps, ratio >= 1 - clip_eps)
    w = -(active * adv * ratio) / len(batch)
    grad = policy.grad_log_prob(batch.states, batch.goals, batch.actions, w)
    if not return_info:
        return grad
    info = {
        "clip_fraction": float(1 - active.mean()),
        "approx_kl": float(np.mean(ratio - 1 - log_ratio)),
        "surrogate": float(np.mean(np.minimum(ratio * adv, np.clip(ratio, 1 - clip_eps, 1 + clip_eps) * adv))),
    }
    return grad, info


# ---------------------------------------------------------------- training


@dataclass
class FpgConfig:
    """Hyper-parameters of the training loop.

    ``estimator`` picks the visitation model (``histogram`` or ``exact`` for
    tabular MDPs, ``kde`` for continuous ones).  ``goal_density`` is
    ``clipped-dirac`` (discrete only), ``gaussian`` or ``laplacian``.
    ``epochs`` is the number of surrogate gradient steps per batch.
    """

    divergence: str = "fkl"
    clip_eps: float = 0.2
    gamma: float = 0.99
    lr: float = 3e-4
    epochs: int = 10
    trajectories: int = 32
    iterations: int = 100
    goal_density: str = "clipped-dirac"
    goal_scale: float = 1.0
    goal_epsilon: float | None = None
    estimator: str = "histogram"
    smoothing: float = 0.01
    normalize_advantages: bool = True
    baseline: bool = True
    signal_mode: str = "reverse-cumulative"
    max_kl: float = 0.05
    include_s0: bool = False
    eval_every: int = 0
    eval_episodes: int = 100

    def __post_init__(self):
        self.validate()

    def validate(self):
        fdiv.get_generator(self.divergence)
        if not 0 < self.clip_eps < 1:
            raise DomainError("clip_eps must lie in (0, 1)")
        if not 0 <= self.gamma < 1:
            raise DomainError("gamma must lie in [0, 1)")
        for name in ("epochs", "trajectories", "iterations", "eval_episodes"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be positive")
        if self.lr <= 0:
            raise DomainError("lr must be positive")
        if self.signal_mode not in SIGNAL_MODES:
            raise DomainError(f"unknown signal mode {self.signal_mode!r}")
        if self.estimator not in ("histogram", "exact", "kde"):
            raise DomainError(f"unknown estimator {self.estimator!r}")
        if self.goal_density not in ("clipped-dirac", "gaussian", "laplacian"):
            raise DomainError(f"unknown goal density {self.goal_density!r}")

    def to_dict(self):
        return asdict(self)


def make_goal_density(config: FpgConfig, mdp: GoalConditionedMDP, goal) -> GoalDensity:
    if mdp.discrete:
        n = mdp.n_states
        if config.goal_density == "clipped-dirac":
            return GoalDensity("clipped-dirac", int(goal), support_size=n, epsilon=config.goal_epsilon)
        return GoalDensity(config.goal_density, int(goal), scale=config.goal_scale, support_size=n,
                           positions=mdp.positions, normalize_over_support=True)
    if config.goal_density == "clipped-dirac":
        raise DomainError("clipped-dirac goal density needs a discrete state space")
    return GoalDensity(config.goal_density, mdp.goal_position(goal), scale=config.goal_scale)


def fit_visitation(config: FpgConfig, mdp, policy, trajectories):
    """One density model per trajectory (shared within a goal for discrete MDPs)."""
    if mdp.discrete:
        models = {}
        goals = [int(t.goal) for t in trajectories]
        for g in sorted(set(goals)):
            if config.estimator == "exact":
                table = policy.state_probs(g) if isinstance(policy, TabularPolicy) else None
                models[g] = exact_visitation(mdp, table, include_s0=config.include_s0)
            else:
                group = [t for t in trajectories if int(t.goal) == g]
                models[g] = fit_histogram(group, mdp.n_states, config.smoothing, config.include_s0)
        return [models[g] for g in goals]
    return [fit_kde(mdp.state_position(t.visited)) for t in trajectories]


def _fdiv_and_entropy(spec, mdp, models, p_gs, trajectories):
    if mdp.discrete:
        seen, divs, ents = set(), [], []
        for m, pg, tr in zip(models, p_gs, trajectories):
            if int(tr.goal) in seen:
                continue
            seen.add(int(tr.goal))
            q = pg.table()
            q = q / q.sum()
            try:
                divs.append(fdiv.f_divergence(spec, m.probs / m.probs.sum(), q))
            except UndefinedDivergenceError:
                divs.append(float("nan"))
            ents.append(m.entropy())
        return float(np.mean(divs)), float(np.mean(ents))
    divs, ents = [], []
    for m, pg, tr in zip(models, p_gs, trajectories):
        pts = mdp.state_position(tr.visited)
        lp = m.log_query(pts)
        lq = pg.log_density(pts)
        u = np.exp(np.clip(lp - lq, -700, 700))
        divs.append(float(np.mean(spec.f(u) / u)))
        ents.append(float(-np.mean(lp)))
    return float(np.mean(divs)), float(np.mean(ents))


def evaluate(mdp, policy, episodes=100, rng=None, deterministic=False) -> float:
    """Fraction of episodes that touch the goal."""
    rng = rng if rng is not None else np.random.default_rng(0)
    goals = mdp.sample_goals(rng, episodes)
    trajs = rollout_batch(mdp, policy, goals, rng, deterministic=deterministic)
    return float(np.mean([t.reached for t in trajs]))


@dataclass
class TrainingLog:
    learner: str
    records: list = field(default_factory=list)
    policy: object = None
    snapshots: dict = field(default_factory=dict)

    def last(self, key):
        return self.records[-1][key]

    def column(self, key):
        return [r[key] for r in self.records]


def policy_update_loop(policy, optimizer, batch, config, grad_fn):
    """Run up to ``config.epochs`` surrogate steps; a step whose KL from the
    behaviour policy exceeds ``config.max_kl`` is undone and ends the loop."""
    steps = 0
    for _ in range(config.epochs):
        grad = grad_fn(policy, batch)
        if not np.all(np.isfinite(grad)):
            raise NumericError("non-finite gradient")
        saved = (policy.params.copy(), optimizer.state())
        policy.params = optimizer.step(policy.params, grad)
        logp = policy.log_prob(batch.states, batch.goals, batch.actions)
        lr_ = logp - batch.behavior_logprobs
        kl = float(np.mean(np.expm1(lr_) - lr_))
        if not np.isfinite(kl) or kl > config.max_kl:
            policy.params, opt_state = saved
            optimizer.restore(opt_state)
            break
        steps += 1
    return steps


def train(config: FpgConfig, mdp: GoalConditionedMDP, policy, rng=None, seed: int | None = None,
          callback: Callable | None = None, learner: str = "fpg", cost_fn: Callable | None = None) -> TrainingLog:
    """Collect -> fit densities -> store signals -> surrogate updates, repeated.

    ``callback(iteration, policy, log)`` runs after each iteration and may
    return ``True`` to stop early.  ``cost_fn(trajectories, models, p_gs)``
    replaces the f' signal with other per-state costs (used by the reward
    baselines); it returns an ``(N, T)`` array.
    """
    config.validate()
    spec = fdiv.get_generator(config.divergence)
    rng = rng if rng is not None else np.random.default_rng(seed)
    opt = Adam(policy.n_params, lr=config.lr)
    log = TrainingLog(learner=learner, policy=policy)
    state_map = None if mdp.discrete else mdp.state_position
    updates = 0
    t0 = time.perf_counter()

    def grad_fn(pol, batch):
        return clipped_surrogate_grad(pol, batch, config.clip_eps, config.baseline, config.normalize_advantages)

    for it in range(1, config.iterations + 1):
        goals = mdp.sample_goals(rng, config.trajectories)
        trajs = rollout_batch(mdp, policy, goals, rng)
        models = fit_visitation(config, mdp, policy, trajs)
        p_gs = [make_goal_density(config, mdp, t.goal) for t in trajs]
        if cost_fn is None:
            batch = build_signal_batch(trajs, models, p_gs, spec, config.gamma, config.signal_mode, state_map)
        else:
            batch = batch_from_costs(trajs, cost_fn(trajs, models, p_gs), config.gamma, config.signal_mode)
        div, ent = _fdiv_and_entropy(spec, mdp, models, p_gs, trajs)
        updates += policy_update_loop(policy, opt, batch, config, grad_fn)
        rec = {
            "iter": it,
            "policy_updates": updates,
            "success_rate": float(np.mean([t.reached for t in trajs])),
            "fdiv_estimate": div,
            "visitation_entropy": ent,
            "mean_signal": float(batch.fprime.mean()),
            "wall_clock": time.perf_counter() - t0,
        }
        if config.eval_every and it % config.eval_every == 0:
            rec["eval_success"] = evaluate(mdp, policy, config.eval_episodes, rng)
        log.records.append(rec)
        if callback is not None and callback(it, policy, log):
            break
    return log


def expected_gradient(mdp, policy, spec, p_g, goal=None, baseline=False) -> np.ndarray:
    """Exact ``grad J`` on an enumerable tabular MDP (all trajectories, exact ``p_theta``)."""
    from .oracles import enumerate_trajectories

    table = policy.state_probs(goal)
    trajs, probs = enumerate_trajectories(mdp, table, goal=goal)
    p_theta = exact_visitation(mdp, table)
    return analytic_gradient(policy, trajs, p_theta, p_g, spec, weights=probs, baseline=baseline)


def train_expected(mdp, policy, spec, p_g, steps=2000, lr=0.05, goal=None, tol=0.0):
    """Adam descent on the exact gradient; returns the final visitation."""
    opt = Adam(policy.n_params, lr=lr)
    for _ in range(steps):
        g = expected_gradient(mdp, policy, spec, p_g, goal)
        if tol and np.linalg.norm(g) < tol:
            break
        policy.params = opt.step(policy.params, g)
    return exact_visitation(mdp, policy.state_probs(goal))
