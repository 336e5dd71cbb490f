"""Plain-text maze layouts.

One character per cell, one line per row, row 0 first::

    #  wall
    .  free
    S  free, part of the start region
    G  free, part of the goal region

Blank lines and lines starting with ``;`` are ignored.  Rows must have
equal length.  With no ``S`` cells the start region is every free cell;
likewise for ``G``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DomainError, ShapeError

WALL, FREE, START, GOAL = "#", ".", "S", "G"


@dataclass(frozen=True)
class Layout:
    grid: tuple[str, ...]
    name: str = field(default="layout", compare=False)

    def __post_init__(self):
        if not self.grid:
            raise DomainError("layout has no rows")
        widths = {len(r) for r in self.grid}
        if len(widths) != 1:
            raise ShapeError(f"ragged layout rows: widths {sorted(widths)}")
        bad = set("".join(self.grid)) - {WALL, FREE, START, GOAL}
        if bad:
            raise DomainError(f"unknown layout characters {sorted(bad)}")

    @property
    def width(self) -> int:
        return len(self.grid[0])

    @property
    def height(self) -> int:
        return len(self.grid)

    def char(self, x: int, y: int) -> str:
        return self.grid[y][x]

    def wall_mask(self) -> np.ndarray:
        """Boolean array indexed ``[y, x]``."""
        return np.array([[c == WALL for c in row] for row in self.grid], dtype=bool)

    def cells(self, kind: str) -> list[tuple[int, int]]:
        return [
            (x, y) for y, row in enumerate(self.grid) for x, c in enumerate(row) if c == kind
        ]

    @property
    def walls(self) -> set[tuple[int, int]]:
        return set(self.cells(WALL))

    def free_cells(self) -> list[tuple[int, int]]:
        return [(x, y) for y, row in enumerate(self.grid) for x, c in enumerate(row) if c != WALL]

    def start_cells(self) -> list[tuple[int, int]]:
        return self.cells(START) or self.free_cells()

    def goal_cells(self) -> list[tuple[int, int]]:
        return self.cells(GOAL) or self.free_cells()

    def to_text(self) -> str:
        return "\n".join(self.grid) + "\n"


def parse_layout(text: str, name: str = "layout") -> Layout:
    rows = []
    for line in text.splitlines():
        line = line.rstrip()
        if not line or line.lstrip().startswith(";"):
            continue
        rows.append(line)
    return Layout(tuple(rows), name=name)


def load_layout(path) -> Layout:
    path = Path(path)
    return parse_layout(path.read_text(encoding="utf-8"), name=path.stem)


def room_layout(
    width: int = 20,
    height: int = 20,
    start: tuple[int, int] = (6, 13),
    room_origin: tuple[int, int] = (11, 3),
    interior: int = 3,
) -> Layout:
    """Open grid with a walled room whose only door faces away from ``start``.

    ``room_origin`` is the top-left wall cell of the room.  The door sits in
    the middle of the top wall, the goal in the middle of the room.
    """
    rows = [[FREE] * width for _ in range(height)]
    x0, y0 = room_origin
    side = interior + 2
    if x0 + side > width or y0 + side > height:
        raise DomainError("room does not fit in the grid")
    for i in range(side):
        for x, y in ((x0 + i, y0), (x0 + i, y0 + side - 1), (x0, y0 + i), (x0 + side - 1, y0 + i)):
            rows[y][x] = WALL
    mid = interior // 2 + 1
    rows[y0][x0 + mid] = FREE  # door
    rows[y0 + mid][x0 + mid] = GOAL
    sx, sy = start
    if rows[sy][sx] != FREE:
        raise DomainError("start cell is not free")
    rows[sy][sx] = START
    return Layout(tuple("".join(r) for r in rows), name="gridworld-room")


def open_layout(width: int = 20, height: int = 20, start=(6, 13), goal=(13, 5)) -> Layout:
    rows = [[FREE] * width for _ in range(height)]
    rows[start[1]][start[0]] = START
    rows[goal[1]][goal[0]] = GOAL
    return Layout(tuple("".join(r) for r in rows), name="gridworld-open")


U_MAZE = parse_layout(
    """
#####
#...#
###.#
#...#
#####
""",
    name="u-maze",
)

U_MAZE_HARD = parse_layout(
    """
#####
#G..#
###.#
#S..#
#####
""",
    name="u-maze-hard",
)
