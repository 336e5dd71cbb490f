"""Brute-force references for small tabular MDPs.

Everything here is deliberately naive: full trajectory enumeration,
finite differences and grid search over policies.  These are the
independent checks the fast paths are tested against.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import divergence as fdiv
from .envs import TabularMDP, Trajectory
from .policy import TabularPolicy
from .visitation import GoalDensity, exact_visitation, exact_visitation_batch


def enumerate_trajectories(mdp: TabularMDP, policy_table, goal=None, horizon=None):
    """All positive-probability trajectories with their probabilities."""
    pi = np.asarray(policy_table, dtype=float)
    P = mdp.transitions
    T = mdp.horizon if horizon is None else horizon
    goal = 0 if goal is None else goal
    out, probs = [], []

    def rec(states, actions, logps, prob):
        if len(actions) == T:
            out.append(Trajectory(goal, np.array(states), np.array(actions, dtype=int),
                                  np.array(logps), bool(np.any(np.array(states[1:]) == goal))))
            probs.append(prob)
            return
        s = states[-1]
        for a in np.flatnonzero(pi[s] > 0):
            for s2 in np.flatnonzero(P[s, a] > 0):
                rec(states + [int(s2)], actions + [int(a)], logps + [float(np.log(pi[s, a]))],
                    prob * pi[s, a] * P[s, a, s2])

    for s0 in np.flatnonzero(mdp.initial > 0):
        rec([int(s0)], [], [], float(mdp.initial[s0]))
    return out, np.array(probs)


def enumerated_visitation(mdp, policy_table, include_s0=False) -> np.ndarray:
    trajs, probs = enumerate_trajectories(mdp, policy_table)
    p = np.zeros(mdp.n_states)
    start = 0 if include_s0 else 1
    for tr, w in zip(trajs, probs):
        np.add.at(p, tr.states[start:], w)
    return p / p.sum()


def random_tiny_mdp(rng, n_states=None, n_actions=2, horizon=None, sparse=True) -> TabularMDP:
    n = int(n_states or rng.integers(2, 5))
    T = int(horizon or rng.integers(1, 4))
    P = rng.dirichlet(np.full(n, 0.7), size=(n, n_actions))
    if sparse:
        P[P < 0.05] = 0.0
        P /= P.sum(axis=2, keepdims=True)
    init = rng.dirichlet(np.ones(n)) if rng.random() < 0.5 else int(rng.integers(n))
    goal = int(rng.integers(n))
    return TabularMDP(P, init, goal, T, name="tiny")


def two_state_mdp(horizon=2) -> TabularMDP:
    """Start in 0, goal 1; action 1 tends to move to the goal, action 0 to stay."""
    P = np.zeros((2, 2, 2))
    P[0, 0] = [0.9, 0.1]
    P[0, 1] = [0.2, 0.8]
    P[1, 0] = [0.3, 0.7]
    P[1, 1] = [0.6, 0.4]
    return TabularMDP(P, 0, 1, horizon, positions=np.arange(2.0)[:, None], name="two-state")


def three_state_mdp(horizon=3) -> TabularMDP:
    """Start in 0, goal 2; action 1 advances, action 0 mostly stays put."""
    P = np.zeros((3, 2, 3))
    P[0, 0] = [0.8, 0.2, 0.0]
    P[0, 1] = [0.2, 0.8, 0.0]
    P[1, 0] = [0.3, 0.4, 0.3]
    P[1, 1] = [0.1, 0.2, 0.7]
    P[2, 0] = [0.0, 0.1, 0.9]
    P[2, 1] = [0.0, 0.5, 0.5]
    return TabularMDP(P, 0, 2, horizon, positions=np.arange(3.0)[:, None], name="three-state")


def fd_gradient(fun, x, h=1e-6) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def divergence_objective(mdp, policy, spec, q, goal=None):
    """``theta -> D_f(exact_visitation(pi_theta) || q)``."""
    q = np.asarray(q, dtype=float)

    def fun(theta):
        pol = policy.with_params(theta)
        return fdiv.f_divergence(spec, exact_visitation(mdp, pol.state_probs(goal)).probs, q)

    return fun


def gradient_error(analytic, numeric, small=1e-4):
    """``(max relative error over |fd| >= small, max abs error over |fd| < small)``."""
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    big = np.abs(numeric) >= small
    rel = np.abs(analytic - numeric)[big] / np.abs(numeric[big]) if np.any(big) else np.zeros(1)
    ab = np.abs(analytic - numeric)[~big] if np.any(~big) else np.zeros(1)
    return float(rel.max(initial=0.0)), float(ab.max(initial=0.0))


@dataclass
class GradcheckResult:
    generator: str
    mdp_index: int
    n_states: int
    horizon: int
    max_rel: float
    max_abs_small: float

    @property
    def passed(self) -> bool:
        return self.max_rel <= 1e-3 and self.max_abs_small <= 1e-6


def gradcheck_suite(n_mdps=12, seed=0, generators=("fkl", "rkl", "js", "chi2", "tv")):
    """Exact analytic gradient vs finite differences of ``D_f`` on random tiny MDPs."""
    from .learner import expected_gradient

    rng = np.random.default_rng(seed)
    results = []
    for k in range(n_mdps):
        # RKL is infinite while some state is unreachable; redraw those MDPs
        mdp = random_tiny_mdp(rng)
        while np.any(exact_visitation(mdp, np.full((mdp.n_states, mdp.n_actions), 0.5)).probs <= 0):
            mdp = random_tiny_mdp(rng)
        goal = int(mdp.goals[0])
        pol = TabularPolicy(mdp.n_states, mdp.n_actions, params=rng.normal(0, 1, mdp.n_states * mdp.n_actions))
        p_g = GoalDensity("clipped-dirac", goal, support_size=mdp.n_states)
        for name in generators:
            spec = fdiv.get_generator(name)
            ana = expected_gradient(mdp, pol, spec, p_g, goal=None)
            num = fd_gradient(divergence_objective(mdp, pol, spec, p_g.table()), pol.params)
            rel, ab = gradient_error(ana, num)
            results.append(GradcheckResult(name, k, mdp.n_states, mdp.horizon, rel, ab))
    return results


def policy_grid(n_states, resolution=0.02) -> np.ndarray:
    """Every two-action tabular policy whose probabilities lie on the grid; ``(N, S, 2)``."""
    ticks = np.round(np.arange(0, 1 + resolution / 2, resolution), 12)
    combos = np.array(list(itertools.product(ticks, repeat=n_states)))
    return np.stack([combos, 1 - combos], axis=2)


def grid_search(mdp, objective, resolution=0.02, chunk=20000):
    """Maximise ``objective(visitations)`` (rows of ``(N, S)``) over the policy grid.

    Returns ``(best value, best policy table, best visitation)``.
    """
    grid = policy_grid(mdp.n_states, resolution)
    best = (-np.inf, None, None)
    for lo in range(0, len(grid), chunk):
        tables = grid[lo: lo + chunk]
        vis = exact_visitation_batch(mdp, tables)
        vals = objective(vis)
        i = int(np.argmax(vals))
        if vals[i] > best[0]:
            best = (float(vals[i]), tables[i], vis[i])
    return best


def smaxent_objective(log_pg):
    """``E_p[log p_g] + H(p)`` for each visitation row."""
    log_pg = np.asarray(log_pg, dtype=float)

    def obj(vis):
        with np.errstate(divide="ignore", invalid="ignore"):
            plogp = np.where(vis > 0, vis * np.log(vis), 0.0)
        return vis @ log_pg - plogp.sum(axis=1)

    return obj


def chi2_bound_holds(rng, n_pairs=1000, max_support=16, tol=1e-9):
    worst = np.inf
    for _ in range(n_pairs):
        n = int(rng.integers(2, max_support + 1))
        p = rng.dirichlet(np.ones(n))
        q = rng.dirichlet(np.ones(n))
        gap = fdiv.f_divergence("chi2", p, q) - (fdiv.f_divergence("fkl", p, q) - 1.0)
        worst = min(worst, gap)
    return worst >= -tol, worst


def run_property_suite(seed=0):
    """Exhaustive small-MDP checks; returns ``[(name, passed, detail)]``."""
    from .learner import dirac_gradient, dirac_scale

    rng = np.random.default_rng(seed)
    out = []

    worst = 0.0
    for _ in range(40):
        mdp = random_tiny_mdp(rng, n_states=int(rng.integers(1, 5)), n_actions=int(rng.integers(1, 4)),
                              horizon=int(rng.integers(1, 5)))
        table = rng.dirichlet(np.ones(mdp.n_actions), size=mdp.n_states)
        worst = max(worst, np.abs(exact_visitation(mdp, table).probs - enumerated_visitation(mdp, table)).max())
    out.append(("exact visitation == enumeration", worst <= 1e-10, f"max err {worst:.2e}"))

    ok, gap = chi2_bound_holds(rng)
    out.append(("chi2 >= fkl - 1", ok, f"min gap {gap:.3e}"))

    neg, ident = np.inf, 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 17))
        p, q = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
        for name in fdiv.GENERATORS:
            neg = min(neg, fdiv.f_divergence(name, p, q))
            ident = max(ident, abs(fdiv.f_divergence(name, p, p)))
    out.append(("non-negativity", neg >= -1e-9, f"min {neg:.3e}"))
    out.append(("identity", ident <= 1e-9, f"max |D(p,p)| {ident:.3e}"))

    worst_rel, worst_scale = 0.0, -np.inf
    for _ in range(10):
        mdp = random_tiny_mdp(rng, n_actions=2)
        goal = int(mdp.goals[0])
        pol = TabularPolicy(mdp.n_states, 2, params=rng.normal(0, 1, mdp.n_states * 2))
        table = pol.state_probs()
        trajs, probs = enumerate_trajectories(mdp, table, goal=goal)
        p_goal = exact_visitation(mdp, table).probs[goal]
        delta = np.zeros(mdp.n_states)
        delta[goal] = 1.0
        for name in ("rkl", "js", "tv"):
            ana = dirac_gradient(pol, trajs, p_goal, name, goal, weights=probs)
            num = fd_gradient(divergence_objective(mdp, pol, name, delta), pol.params)
            worst_rel = max(worst_rel, gradient_error(ana, num)[0])
            worst_scale = max(worst_scale, dirac_scale(name, p_goal))
    out.append(("Dirac-form gradient == finite differences", worst_rel <= 1e-3, f"max rel {worst_rel:.2e}"))
    out.append(("Dirac scale <= 0", worst_scale <= 0, f"max {worst_scale:.3e}"))
    return out
