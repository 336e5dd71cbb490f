"""Goal-conditioned MDPs, trajectories and rollouts.

Episodes always run for exactly ``horizon`` steps; reaching the goal does
not terminate them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, ShapeError


@dataclass
class Trajectory:
    """One fixed-length episode.

    ``states`` has ``T + 1`` rows (``s_0 .. s_T``); ``actions`` and
    ``behavior_logprobs`` have ``T``.  Actions are stored in the policy's
    own parameterisation (pre-squash for squashed Gaussians).
    """

    goal: object
    states: np.ndarray
    actions: np.ndarray
    behavior_logprobs: np.ndarray
    reached: bool
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        T = len(self.actions)
        if len(self.states) != T + 1 or len(self.behavior_logprobs) != T:
            raise ShapeError(
                f"inconsistent trajectory lengths: {len(self.states)} states, "
                f"{T} actions, {len(self.behavior_logprobs)} logprobs"
            )

    @property
    def horizon(self) -> int:
        return len(self.actions)

    @property
    def visited(self) -> np.ndarray:
        """``s_1 .. s_T``, the states counted in the visitation."""
        return self.states[1:]


class GoalConditionedMDP:
    """Common surface of the discrete and continuous environments.

    Subclasses implement batched ``sample_initial``, ``sample_goals``,
    ``step_batch`` and ``goal_reached``; the scalar helpers wrap those.
    """

    discrete: bool = True
    horizon: int = 1

    def sample_initial(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def sample_goals(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def step_batch(self, states, actions, rng=None) -> np.ndarray:
        raise NotImplementedError

    def goal_reached(self, states, goals) -> np.ndarray:
        raise NotImplementedError

    def goal_position(self, goals) -> np.ndarray:
        """Coordinates of goals in the space goal densities live in."""
        raise NotImplementedError

    def state_position(self, states) -> np.ndarray:
        raise NotImplementedError

    def step(self, s, a, rng=None):
        out = self.step_batch(np.asarray([s]), np.asarray([a]), rng)
        return out[0].item() if self.discrete else out[0]

    def sparse_reward(self, s_next, g) -> int:
        hit = self.goal_reached(np.asarray([s_next]), np.asarray([g]))
        return int(bool(hit[0]))


def rollout_batch(mdp: GoalConditionedMDP, policy, goals, rng: np.random.Generator, deterministic=False):
    """Run ``len(goals)`` episodes in lockstep, one per goal."""
    goals = np.asarray(goals)
    n = len(goals)
    T = mdp.horizon
    states = [mdp.sample_initial(rng, n)]
    actions, logps = [], []
    for _ in range(T):
        a, lp = policy.act_batch(states[-1], goals, rng, deterministic=deterministic)
        actions.append(a)
        logps.append(lp)
        states.append(mdp.step_batch(states[-1], policy.env_action(a), rng))
    S = np.stack(states, axis=1)
    A = np.stack(actions, axis=1)
    L = np.stack(logps, axis=1)
    reached = np.zeros(n, dtype=bool)
    for t in range(1, T + 1):
        reached |= mdp.goal_reached(S[:, t], goals)
    return [Trajectory(goals[i], S[i], A[i], L[i], bool(reached[i])) for i in range(n)]


def rollout(mdp: GoalConditionedMDP, policy, goal, rng_seed) -> Trajectory:
    """Single episode; identical seeds give identical trajectories."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return rollout_batch(mdp, policy, np.asarray([goal]), rng)[0]


def success_rate(trajectories) -> float:
    if not trajectories:
        raise DomainError("no trajectories")
    return float(np.mean([t.reached for t in trajectories]))
