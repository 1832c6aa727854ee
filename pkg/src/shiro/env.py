"""Goal-conditioned point-mass environments.

The agent is a 2-D point whose state is its position. Each step moves it by
``action * max_speed`` with axis-separated collision against axis-aligned wall
rectangles and the arena boundary. Reward is the negative Euclidean distance
to the episode goal.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

SUBGOAL_LIMIT = 10.0


class ContractError(ValueError):
    """Raised on inputs that break the environment contract (e.g. non-finite actions)."""


@dataclass(frozen=True)
class MazeLayout:
    arena_min: tuple
    arena_max: tuple
    walls: tuple = ()
    start: tuple = (0.0, 0.0)
    eval_goal: tuple = (0.0, 16.0)

    @classmethod
    def from_dict(cls, data: dict) -> "MazeLayout":
        w, h = data["arena"]
        # arena is given as [w, h]; "origin" optionally places its lower-left corner
        ox, oy = data.get("origin", (-2.0, -2.0))
        walls = tuple(tuple(float(v) for v in wall) for wall in data.get("walls", ()))
        for x0, y0, x1, y1 in walls:
            if x1 <= x0 or y1 <= y0:
                raise ValueError(f"degenerate wall rectangle {(x0, y0, x1, y1)}")
        return cls((float(ox), float(oy)), (float(ox + w), float(oy + h)), walls,
                   tuple(map(float, data.get("start", (0.0, 0.0)))),
                   tuple(map(float, data["eval_goal"])))

    def to_dict(self) -> dict:
        return {"arena": [self.arena_max[0] - self.arena_min[0], self.arena_max[1] - self.arena_min[1]],
                "origin": list(self.arena_min), "walls": [list(w) for w in self.walls],
                "start": list(self.start), "eval_goal": list(self.eval_goal)}


# 20x20 arena with a central block that leaves an 8-wide corridor shaped like ⊃
POINT_MAZE = MazeLayout((-2.0, -2.0), (18.0, 18.0), ((-2.0, 6.0, 10.0, 10.0),))
POINT_REACH = MazeLayout((-2.0, -2.0), (18.0, 18.0), ())

BUILTIN_LAYOUTS = {"point_maze": POINT_MAZE, "point_reach": POINT_REACH}


def inside_walls(layout: MazeLayout, pos) -> np.ndarray:
    """Boolean mask: which positions lie strictly inside some wall rectangle."""
    pos = np.asarray(pos, dtype=np.float64)
    hit = np.zeros(pos.shape[:-1], dtype=bool)
    for x0, y0, x1, y1 in layout.walls:
        hit |= (pos[..., 0] > x0) & (pos[..., 0] < x1) & (pos[..., 1] > y0) & (pos[..., 1] < y1)
    return hit


def _slide(layout, lo_fixed, hi_fixed, start, end, fixed, axis):
    # walls whose extent along the other axis strictly contains the fixed coordinate block motion
    for wall in layout.walls:
        a0, a1 = (wall[0], wall[2]) if axis == 0 else (wall[1], wall[3])
        b0, b1 = (wall[1], wall[3]) if axis == 0 else (wall[0], wall[2])
        across = (fixed > b0) & (fixed < b1)
        fwd = across & (end > start) & (start <= a0) & (end > a0)
        back = across & (end < start) & (start >= a1) & (end < a1)
        end = np.where(fwd, a0, np.where(back, a1, end))
    return np.clip(end, lo_fixed, hi_fixed)


def move(layout: MazeLayout, pos, action, max_speed: float = 1.0) -> np.ndarray:
    """Vectorised dynamics: x displacement and wall clamp, then the same for y."""
    pos = np.asarray(pos, dtype=np.float64)
    disp = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0) * max_speed
    x = _slide(layout, layout.arena_min[0], layout.arena_max[0],
               pos[..., 0], pos[..., 0] + disp[..., 0], pos[..., 1], axis=0)
    y = _slide(layout, layout.arena_min[1], layout.arena_max[1],
               pos[..., 1], pos[..., 1] + disp[..., 1], x, axis=1)
    return np.stack([x, y], axis=-1)


@dataclass
class PointMazeEnv:
    """Point mass in a walled arena; goals are absolute positions."""

    layout: MazeLayout = POINT_MAZE
    episode_horizon: int = 500
    max_speed: float = 1.0
    success_radius: float = 2.5
    eval_mode: bool = False
    name: str = "point_maze"
    position: np.ndarray = field(default=None, repr=False)
    goal: np.ndarray = field(default=None, repr=False)
    t: int = 0

    state_dim = 2
    goal_dim = 2
    action_dim = 2

    @property
    def action_limit(self) -> np.ndarray:
        return np.ones(self.action_dim)

    @property
    def subgoal_limit(self) -> np.ndarray:
        return np.full(self.goal_dim, SUBGOAL_LIMIT)

    def sample_goal(self, rng: np.random.Generator) -> np.ndarray:
        """Uniform over free space (rejection sampling)."""
        lo = np.array(self.layout.arena_min)
        hi = np.array(self.layout.arena_max)
        while True:
            g = rng.uniform(lo, hi)
            if not inside_walls(self.layout, g):
                return g

    def reset(self, rng: np.random.Generator | None = None):
        self.position = np.array(self.layout.start, dtype=np.float64)
        self.t = 0
        if self.eval_mode:
            self.goal = np.array(self.layout.eval_goal, dtype=np.float64)
        else:
            if rng is None:
                raise ValueError("training-mode reset needs a random stream")
            self.goal = self.sample_goal(rng)
        return self.position.copy(), self.goal.copy()

    def step(self, action):
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (self.action_dim,) or not np.all(np.isfinite(action)):
            raise ContractError(f"action must be a finite vector of length {self.action_dim}, got {action!r}")
        if np.any(np.abs(action) > 1.0):
            log.warning("action %s outside the box; clipping", action)
        self.position = move(self.layout, self.position, action, self.max_speed)
        self.t += 1
        reward = -float(np.linalg.norm(self.position - self.goal))
        done = self.t >= self.episode_horizon
        return self.position.copy(), reward, done

    def is_success(self, state, goal) -> bool:
        return bool(np.linalg.norm(np.asarray(state, float) - np.asarray(goal, float)) < self.success_radius)

    def get_state(self) -> dict:
        return {"position": None if self.position is None else self.position.tolist(),
                "goal": None if self.goal is None else self.goal.tolist(), "t": self.t}

    def set_state(self, data: dict):
        self.position = None if data["position"] is None else np.array(data["position"], dtype=np.float64)
        self.goal = None if data["goal"] is None else np.array(data["goal"], dtype=np.float64)
        self.t = int(data["t"])


def PointReachEnv(**kw) -> PointMazeEnv:
    """Open arena without walls; otherwise identical to the maze."""
    kw.setdefault("name", "point_reach")
    return PointMazeEnv(layout=POINT_REACH, **kw)


def load_layout(path) -> MazeLayout:
    return MazeLayout.from_dict(json.loads(Path(path).read_text()))


def make_env(name: str, eval_mode: bool = False, **kw) -> PointMazeEnv:
    """Builtin name (``point_maze`` / ``point_reach``) or path to a layout JSON file."""
    if name in BUILTIN_LAYOUTS:
        return PointMazeEnv(layout=BUILTIN_LAYOUTS[name], eval_mode=eval_mode, name=name, **kw)
    path = Path(name)
    if not path.exists():
        raise ValueError(f"unknown environment {name!r}")
    return PointMazeEnv(layout=load_layout(path), eval_mode=eval_mode, name=name, **kw)


def scripted_waypoints(layout: MazeLayout) -> list:
    """Waypoints that carry a point from the start to the eval goal."""
    if layout.walls == POINT_MAZE.walls:
        return [np.array([14.0, 2.0]), np.array([14.0, 14.0]), np.array(layout.eval_goal)]
    return [np.array(layout.eval_goal)]
