"""Point-mass maze on a wall grid: a desk-scale navigation environment.

States are (x, y, vx, vy); actions are accelerations (ax, ay). Dynamics
per step: v <- clip(v + a*dt, ±vmax), then the position moves one axis at
a time so wall hits clamp that axis and zero its velocity component.
Reward is 1.0 when within goal_radius of the goal center, 0.0 otherwise;
an episode ends on reaching the goal or after max_steps.

Both reset modes jitter the start position uniformly inside the start
cell under the caller's RNG (the start *cell* is what "fixed" fixes), so
repeated evaluation episodes differ while staying seed-reproducible.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

WALL_CHAR = "#"
OPEN_CHAR = "."
START_CHAR = "S"
GOAL_CHAR = "G"

START_JITTER = 0.25      # cells; uniform jitter of the spawn position
VELOCITY_JITTER = 0.15   # units/s; uniform jitter of the spawn velocity


@dataclass(frozen=True)
class MazeSpec:
    """Immutable maze description plus dynamics constants."""

    name: str
    walls: np.ndarray            # (rows, cols) bool, True = wall
    start_cell: tuple[int, int]  # (row, col)
    goal_cell: tuple[int, int]
    scale: float = 1.0           # world units per cell
    goal_radius: float = 0.5
    max_steps: int = 250
    dt: float = 0.05
    vmax: float = 2.0
    amax: float = 5.0

    def __post_init__(self):
        if self.walls[self.start_cell] or self.walls[self.goal_cell]:
            raise ValidationError("start and goal cells must be open")
        if self.goal_cell not in reachable_cells(self.walls, self.start_cell):
            raise ValidationError("goal is not reachable from start")

    @property
    def rows(self) -> int:
        return self.walls.shape[0]

    @property
    def cols(self) -> int:
        return self.walls.shape[1]

    def is_wall(self, row: int, col: int) -> bool:
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            return True
        return bool(self.walls[row, col])

    def cell_center(self, cell: tuple[int, int]) -> np.ndarray:
        row, col = cell
        return np.array([(col + 0.5) * self.scale, (row + 0.5) * self.scale])

    def cell_of(self, position) -> tuple[int, int]:
        x, y = position
        return int(np.floor(y / self.scale)), int(np.floor(x / self.scale))

    def open_cells(self) -> list[tuple[int, int]]:
        rows, cols = np.nonzero(~self.walls)
        return [(int(r), int(c)) for r, c in zip(rows, cols)]

    @property
    def goal_center(self) -> np.ndarray:
        return self.cell_center(self.goal_cell)


@dataclass
class EnvState:
    """Mutable-by-replacement environment state; step() returns new ones."""

    position: np.ndarray
    velocity: np.ndarray
    steps: int = 0

    def observation(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity])


def reachable_cells(walls: np.ndarray, start: tuple[int, int]) -> set[tuple[int, int]]:
    """Open cells connected to start (4-neighborhood BFS)."""
    rows, cols = walls.shape
    seen = {start}
    queue = deque([start])
    while queue:
        r, c = queue.popleft()
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < rows and 0 <= nc < cols and not walls[nr, nc] and (nr, nc) not in seen:
                seen.add((nr, nc))
                queue.append((nr, nc))
    return seen


def shortest_cell_path(
    walls: np.ndarray, start: tuple[int, int], goal: tuple[int, int]
) -> list[tuple[int, int]] | None:
    """BFS shortest cell sequence start..goal, or None if unreachable."""
    parent: dict[tuple[int, int], tuple[int, int] | None] = {start: None}
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        if cell == goal:
            path = [cell]
            while parent[cell] is not None:
                cell = parent[cell]
                path.append(cell)
            return path[::-1]
        r, c = cell
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nxt = (r + dr, c + dc)
            if (
                0 <= nxt[0] < walls.shape[0]
                and 0 <= nxt[1] < walls.shape[1]
                and not walls[nxt]
                and nxt not in parent
            ):
                parent[nxt] = cell
                queue.append(nxt)
    return None


def parse_maze_text(text: str, name: str = "custom", **dynamics) -> MazeSpec:
    """Build a MazeSpec from a grid drawing ('#' wall, '.' open, 'S', 'G')."""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise ValidationError("empty maze text")
    width = len(lines[0])
    if any(len(line) != width for line in lines):
        raise ValidationError("maze rows have unequal width")
    walls = np.zeros((len(lines), width), dtype=bool)
    start = goal = None
    for r, line in enumerate(lines):
        for c, ch in enumerate(line):
            if ch == WALL_CHAR:
                walls[r, c] = True
            elif ch == START_CHAR:
                if start is not None:
                    raise ValidationError("multiple start cells")
                start = (r, c)
            elif ch == GOAL_CHAR:
                if goal is not None:
                    raise ValidationError("multiple goal cells")
                goal = (r, c)
            elif ch != OPEN_CHAR:
                raise ValidationError(f"unknown maze character {ch!r}")
    if start is None or goal is None:
        raise ValidationError("maze needs exactly one S and one G")
    return MazeSpec(name=name, walls=walls, start_cell=start, goal_cell=goal, **dynamics)


def load_maze(path, name: str | None = None, **dynamics) -> MazeSpec:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_maze_text(text, name=name or str(path), **dynamics)


U_MAZE = """
#####
#G..#
###.#
#S..#
#####
"""

MEDIUM_MAZE = """
########
#G...#.#
#.##...#
#..#.#.#
##...#.#
#.#.##.#
#....#S#
########
"""

LARGE_MAZE = """
############
#G..#...#..#
##.##.#.#.##
#..#..#....#
#.##.###.#.#
#....#...#.#
###.##.##.##
#....#....S#
############
"""

_BUILTIN = {
    "u": (U_MAZE, dict(max_steps=250)),
    "m": (MEDIUM_MAZE, dict(max_steps=500)),
    "l": (LARGE_MAZE, dict(max_steps=1200)),
}
_ALIASES = {"umaze": "u", "medium": "m", "large": "l"}


def builtin_maze(name: str) -> MazeSpec:
    """One of the three built-in mazes: 'u', 'm', or 'l'."""
    key = _ALIASES.get(name.lower(), name.lower())
    if key not in _BUILTIN:
        raise ValidationError(f"unknown maze {name!r}; choose from u, m, l")
    text, dynamics = _BUILTIN[key]
    return parse_maze_text(text, name=key, **dynamics)


def reset(spec: MazeSpec, rng: np.random.Generator, start_mode: str = "fixed") -> EnvState:
    """Spawn at the start cell (fixed) or a uniform open cell (random).

    Position is jittered inside the cell and velocity gets a small uniform
    jitter (never a perfect standstill), so repeated episodes differ while
    staying seed-reproducible. Draw order: position, then velocity.
    """
    if start_mode == "fixed":
        cell = spec.start_cell
    elif start_mode == "random":
        cells = spec.open_cells()
        cell = cells[int(rng.integers(len(cells)))]
    else:
        raise ValueError(f"unknown start_mode {start_mode!r}")
    jitter = rng.uniform(-START_JITTER, START_JITTER, size=2) * spec.scale
    velocity = rng.uniform(-VELOCITY_JITTER, VELOCITY_JITTER, size=2)
    return EnvState(position=spec.cell_center(cell) + jitter, velocity=velocity)


def step(spec: MazeSpec, state: EnvState, action) -> tuple[EnvState, float, bool]:
    """Advance one step; deterministic in (state, action)."""
    a = np.clip(np.asarray(action, dtype=np.float64).ravel(), -spec.amax, spec.amax)
    v = np.clip(state.velocity + a * spec.dt, -spec.vmax, spec.vmax)
    x, y = state.position
    vx, vy = v
    eps = 1e-9 * spec.scale

    row, col = spec.cell_of((x, y))
    nx = x + vx * spec.dt
    if spec.is_wall(row, int(np.floor(nx / spec.scale))):
        nx = (col + 1) * spec.scale - eps if vx > 0 else col * spec.scale + eps
        vx = 0.0
    ny = y + vy * spec.dt
    if spec.is_wall(int(np.floor(ny / spec.scale)), int(np.floor(nx / spec.scale))):
        ny = (row + 1) * spec.scale - eps if vy > 0 else row * spec.scale + eps
        vy = 0.0

    new = EnvState(position=np.array([nx, ny]), velocity=np.array([vx, vy]), steps=state.steps + 1)
    dist = float(np.linalg.norm(new.position - spec.goal_center))
    reward = 1.0 if dist <= spec.goal_radius else 0.0
    done = reward > 0.0 or new.steps >= spec.max_steps
    return new, reward, done


def distance_to_goal(spec: MazeSpec, position) -> float:
    return float(np.linalg.norm(np.asarray(position, dtype=np.float64) - spec.goal_center))
