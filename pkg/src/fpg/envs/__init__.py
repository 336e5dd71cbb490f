from .base import GoalConditionedMDP, Trajectory, rollout, rollout_batch, success_rate
from .layouts import U_MAZE, U_MAZE_HARD, Layout, load_layout, open_layout, parse_layout, room_layout
from .pointmass import PointMassMaze
from .tabular import ACTION_NAMES, GridworldRoom, TabularMDP

ENVIRONMENTS = ("gridworld-room", "gridworld-open", "pointmaze-u", "pointmaze-u-hard")


def make_env(name: str, horizon: int | None = None, layout_path=None):
    """Build a named environment; ``layout_path`` overrides the built-in layout."""
    layout = load_layout(layout_path) if layout_path else None
    kw = {} if horizon is None else {"horizon": horizon}
    if name == "gridworld-room":
        return GridworldRoom(layout or room_layout(), **kw)
    if name == "gridworld-open":
        return GridworldRoom(layout or open_layout(), **kw)
    if name == "pointmaze-u":
        return PointMassMaze(layout or U_MAZE, **kw)
    if name == "pointmaze-u-hard":
        return PointMassMaze(layout or U_MAZE_HARD, **kw)
    raise KeyError(f"unknown environment {name!r}; choose from {ENVIRONMENTS}")


__all__ = [
    "ACTION_NAMES",
    "ENVIRONMENTS",
    "GoalConditionedMDP",
    "GridworldRoom",
    "Layout",
    "PointMassMaze",
    "TabularMDP",
    "Trajectory",
    "U_MAZE",
    "U_MAZE_HARD",
    "load_layout",
    "make_env",
    "open_layout",
    "parse_layout",
    "rollout",
    "rollout_batch",
    "room_layout",
    "success_rate",
]
