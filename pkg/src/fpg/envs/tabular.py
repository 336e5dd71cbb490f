"""Finite MDPs given by an explicit transition tensor, and the room gridworld."""

from __future__ import annotations

import numpy as np

from ..errors import DomainError, ShapeError
from .base import GoalConditionedMDP
from .layouts import Layout, room_layout

# (dx, dy) with y growing downwards, matching layout rows
MOVES = {"up": (0, -1), "right": (1, 0), "down": (0, 1), "left": (-1, 0)}
ACTION_NAMES = tuple(MOVES)


class TabularMDP(GoalConditionedMDP):
    """``transitions[s, a, s']`` is ``P(s' | s, a)``.

    ``goal_probs`` is the goal distribution over states; ``positions``
    (optional, ``(S, d)``) gives coordinates for metric goal densities.
    """

    discrete = True

    def __init__(self, transitions, initial, goal_probs, horizon, positions=None, name="tabular"):
        P = np.asarray(transitions, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ShapeError(f"transitions must be (S, A, S); got {P.shape}")
        if np.any(P < 0) or not np.allclose(P.sum(axis=2), 1.0, atol=1e-9):
            raise DomainError("transition rows must be probability vectors")
        if horizon < 1:
            raise DomainError("horizon must be >= 1")
        self.transitions = P
        self.initial = self._dist(initial, P.shape[0], "initial")
        self.goal_probs = self._dist(goal_probs, P.shape[0], "goal")
        self.horizon = int(horizon)
        self.positions = None if positions is None else np.asarray(positions, dtype=float)
        self.name = name
        self._cum = np.cumsum(P, axis=2)
        self._cum[..., -1] = 1.0

    @staticmethod
    def _dist(d, n, what):
        d = np.asarray(d, dtype=float)
        if d.ndim == 0:
            v = np.zeros(n)
            v[int(d)] = 1.0
            return v
        if d.shape != (n,) or np.any(d < 0) or abs(d.sum() - 1) > 1e-9:
            raise DomainError(f"bad {what} distribution")
        return d

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]

    @property
    def goals(self) -> np.ndarray:
        return np.flatnonzero(self.goal_probs > 0)

    def sample_initial(self, rng, n):
        return rng.choice(self.n_states, size=n, p=self.initial)

    def sample_goals(self, rng, n):
        return rng.choice(self.n_states, size=n, p=self.goal_probs)

    def step_batch(self, states, actions, rng=None):
        states = np.asarray(states, dtype=int)
        actions = np.asarray(actions, dtype=int)
        if np.any((actions < 0) | (actions >= self.n_actions)):
            raise DomainError(f"action index outside [0, {self.n_actions})")
        if rng is None:
            rows = self.transitions[states, actions]
            if not np.all(rows.max(axis=1) == 1.0):
                raise DomainError("stochastic transition needs an rng")
            return np.argmax(rows, axis=1)
        u = rng.random(len(states))
        return np.minimum((self._cum[states, actions] < u[:, None]).sum(axis=1), self.n_states - 1)

    def goal_reached(self, states, goals):
        return np.asarray(states) == np.asarray(goals)

    def state_position(self, states):
        if self.positions is None:
            return np.asarray(states, dtype=float)[..., None]
        return self.positions[np.asarray(states, dtype=int)]

    goal_position = state_position


class GridworldRoom(TabularMDP):
    """Deterministic 4-neighbour gridworld built from a :class:`Layout`.

    State index is ``y * width + x``.  Moves into walls or off the grid
    leave the agent in place.  Wall cells exist as states but are never
    entered.
    """

    def __init__(self, layout: Layout | None = None, horizon: int = 40):
        layout = layout or room_layout()
        self.layout = layout
        W, H = layout.width, layout.height
        walls = layout.wall_mask()
        n = W * H
        P = np.zeros((n, len(MOVES), n))
        for y in range(H):
            for x in range(W):
                s = y * W + x
                for a, (dx, dy) in enumerate(MOVES.values()):
                    nx, ny = x + dx, y + dy
                    if 0 <= nx < W and 0 <= ny < H and not walls[ny, nx]:
                        P[s, a, ny * W + nx] = 1.0
                    else:
                        P[s, a, s] = 1.0
        start = self._uniform([self.index(c) for c in layout.start_cells()], n)
        goal = self._uniform([self.index(c) for c in layout.goal_cells()], n)
        pos = np.array([(s % W, s // W) for s in range(n)], dtype=float)
        super().__init__(P, start, goal, horizon, positions=pos, name=layout.name)

    @staticmethod
    def _uniform(idx, n):
        v = np.zeros(n)
        v[idx] = 1.0 / len(idx)
        return v

    @property
    def width(self) -> int:
        return self.layout.width

    @property
    def height(self) -> int:
        return self.layout.height

    def index(self, cell) -> int:
        x, y = cell
        return int(y) * self.layout.width + int(x)

    def cell(self, s) -> tuple[int, int]:
        return int(s) % self.layout.width, int(s) // self.layout.width

    @property
    def start_state(self) -> int:
        return int(np.argmax(self.initial))

    @property
    def goal_state(self) -> int:
        return int(np.argmax(self.goal_probs))

    def free_mask(self) -> np.ndarray:
        return ~self.layout.wall_mask().reshape(-1)

    def to_grid(self, values) -> np.ndarray:
        return np.asarray(values, dtype=float).reshape(self.height, self.width)
