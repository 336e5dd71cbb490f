"""Continuous point mass in a maze of unit cells.

State is ``(x, y, vx, vy)``; the cell at column ``floor(x)``, row
``floor(y)`` of the layout decides whether a position is free.  Actions are
forces in ``[-1, 1]^2``.  Collisions are resolved one axis at a time: a move
that would enter a wall is cancelled on that axis and the velocity
component zeroed, so the mass slides along walls or stops in corners.
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError, ShapeError
from .base import GoalConditionedMDP
from .layouts import U_MAZE_HARD, Layout


class PointMassMaze(GoalConditionedMDP):
    discrete = False
    state_dim = 4
    action_dim = 2

    def __init__(
        self,
        layout: Layout = U_MAZE_HARD,
        horizon: int = 100,
        dt: float = 0.1,
        max_speed: float = 1.0,
        force_gain: float = 5.0,
        goal_radius: float = 0.5,
        spawn_margin: float = 0.2,
    ):
        if horizon < 1:
            raise DomainError("horizon must be >= 1")
        self.layout = layout
        self.horizon = int(horizon)
        self.dt = dt
        self.max_speed = max_speed
        self.force_gain = force_gain
        self.goal_radius = goal_radius
        self.spawn_margin = spawn_margin
        self._walls = layout.wall_mask()
        self._starts = np.array(layout.start_cells(), dtype=float)
        self._goals = np.array(layout.goal_cells(), dtype=float)
        self.name = layout.name

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros(2), np.array([self.layout.width, self.layout.height], dtype=float)

    def is_free(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        col = np.floor(x).astype(int)
        row = np.floor(y).astype(int)
        inside = (col >= 0) & (col < self.layout.width) & (row >= 0) & (row < self.layout.height)
        out = np.zeros(np.shape(x), dtype=bool)
        out[inside] = ~self._walls[row[inside], col[inside]]
        return out

    def _sample_in(self, cells, rng, n):
        pick = cells[rng.integers(len(cells), size=n)]
        m = self.spawn_margin
        return pick + m + (1 - 2 * m) * rng.random((n, 2))

    def sample_initial(self, rng, n):
        pos = self._sample_in(self._starts, rng, n)
        return np.concatenate([pos, np.zeros((n, 2))], axis=1)

    def sample_goals(self, rng, n):
        return self._sample_in(self._goals, rng, n)

    def step_batch(self, states, actions, rng=None):
        s = np.array(states, dtype=float, copy=True)
        a = np.asarray(actions, dtype=float)
        if s.ndim != 2 or s.shape[1] != 4 or a.shape != (len(s), 2):
            raise ShapeError("expected states (n, 4) and actions (n, 2)")
        if not np.all(np.isfinite(a)):
            raise DomainError("non-finite action")
        a = np.clip(a, -1.0, 1.0)
        lo, hi = self.bounds
        v = np.clip(s[:, 2:] + self.dt * self.force_gain * a, -self.max_speed, self.max_speed)
        x, y = s[:, 0], s[:, 1]

        nx = np.clip(x + self.dt * v[:, 0], lo[0], np.nextafter(hi[0], 0))
        blocked = ~self.is_free(nx, y)
        nx[blocked] = x[blocked]
        v[blocked, 0] = 0.0

        ny = np.clip(y + self.dt * v[:, 1], lo[1], np.nextafter(hi[1], 0))
        blocked = ~self.is_free(nx, ny)
        ny[blocked] = y[blocked]
        v[blocked, 1] = 0.0

        return np.stack([nx, ny, v[:, 0], v[:, 1]], axis=1)

    def goal_reached(self, states, goals):
        pos = np.asarray(states, dtype=float)[..., :2]
        g = np.asarray(goals, dtype=float)[..., :2]
        return np.linalg.norm(pos - g, axis=-1) <= self.goal_radius

    def state_position(self, states):
        return np.asarray(states, dtype=float)[..., :2]

    def goal_position(self, goals):
        return np.asarray(goals, dtype=float)[..., :2]

    def observation_scale(self) -> tuple[np.ndarray, np.ndarray]:
        """Offset and scale mapping ``(state, goal)`` inputs to roughly [-1, 1]."""
        W, H = self.layout.width, self.layout.height
        centre = np.array([W / 2, H / 2, 0, 0, W / 2, H / 2])
        scale = np.array([W / 2, H / 2, self.max_speed, self.max_speed, W / 2, H / 2])
        return centre, scale
