"""3D grid world where each agent's reward lives in a plane through its start.

Agents move along +/-x, +/-y, +/-z inside a bounded grid. On reset the agent
is placed uniformly at random and the reward is placed in the agent's plane
(through the reset position) at fixed in-plane coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, UsageError

#: Action index -> displacement; order fixed: +x, -x, +y, -y, +z, -z.
ACTION_VECTORS = (
    (1, 0, 0), (-1, 0, 0),
    (0, 1, 0), (0, -1, 0),
    (0, 0, 1), (0, 0, -1),
)
N_ACTIONS = len(ACTION_VECTORS)

PLANES = ("xy", "yz", "xz")

#: Default in-plane reward coordinates per plane type.
DEFAULT_GOALS = {"xy": (6, 11), "yz": (11, 6), "xz": (6, 6)}

#: Axes spanned by each plane (indices into (x, y, z)).
PLANE_AXES = {"xy": (0, 1), "yz": (1, 2), "xz": (0, 2)}


@dataclass
class SubGridWorld:
    plane: str = "xy"
    shape: tuple = (12, 12, 12)
    goal_coords: tuple | None = None   # in-plane coordinates of the reward
    episode_cap: int = 400
    position: tuple | None = field(default=None, repr=False)
    reward_position: tuple | None = field(default=None, repr=False)
    steps: int = field(default=0, repr=False)
    done: bool = field(default=True, repr=False)

    def __post_init__(self):
        if self.plane not in PLANES:
            raise ConfigurationError(f"plane must be one of {PLANES}")
        if self.goal_coords is None:
            self.goal_coords = DEFAULT_GOALS[self.plane]
        ax = PLANE_AXES[self.plane]
        for coord, axis in zip(self.goal_coords, ax):
            if not 0 <= coord < self.shape[axis]:
                raise ConfigurationError("goal coordinates outside the grid")

    def goal_for_start(self, start):
        """Reward cell for an episode starting at `start`."""
        goal = list(start)
        for coord, axis in zip(self.goal_coords, PLANE_AXES[self.plane]):
            goal[axis] = coord
        return tuple(goal)

    def reset(self, rng) -> tuple:
        self.position = tuple(int(rng.integers(0, s)) for s in self.shape)
        self.reward_position = self.goal_for_start(self.position)
        self.steps = 0
        self.done = False
        return self.position

    def set_state(self, position):
        """Start an episode at a chosen cell (used by evaluation and DP checks)."""
        position = tuple(int(c) for c in position)
        for c, s in zip(position, self.shape):
            if not 0 <= c < s:
                raise ConfigurationError("position outside the grid")
        self.position = position
        self.reward_position = self.goal_for_start(position)
        self.steps = 0
        self.done = False
        return self.position

    def step(self, action):
        """Apply an action; returns (position, reward, done)."""
        if self.done:
            raise UsageError("episode is finished; reset the world first")
        if not 0 <= action < N_ACTIONS:
            raise UsageError(f"action must be in [0, {N_ACTIONS})")
        move = ACTION_VECTORS[action]
        self.position = tuple(
            min(max(c + d, 0), s - 1)
            for c, d, s in zip(self.position, move, self.shape))
        self.steps += 1
        if self.position == self.reward_position:
            self.done = True
            return self.position, 1.0, True
        if self.steps >= self.episode_cap:
            self.done = True
            return self.position, 0.0, True
        return self.position, 0.0, False

    def in_plane_distance(self, position):
        """Manhattan distance to the reward within the agent's plane."""
        goal = self.goal_for_start(position)
        return sum(abs(p - g) for p, g in zip(position, goal))

    def all_positions(self):
        sx, sy, sz = self.shape
        return [(x, y, z) for x in range(sx) for y in range(sy) for z in range(sz)]


def move_clamped(position, action, shape):
    """Pure transition function shared with the DP oracles."""
    move = ACTION_VECTORS[action]
    return tuple(min(max(c + d, 0), s - 1) for c, d, s in zip(position, move, shape))


def observation_encoding(position, shape=(12, 12, 12), mode="factored"):
    """Encode a grid position as a real vector.

    "factored": concatenated per-axis one-hots (sum(shape) entries).
    "joint": a single one-hot over all cells (the encoder can then in
    principle pack several coordinates into one latent, which the factored
    encoding avoids).
    """
    if mode == "factored":
        out = np.zeros(sum(shape))
        offset = 0
        for coord, size in zip(position, shape):
            out[offset + coord] = 1.0
            offset += size
        return out
    if mode == "joint":
        out = np.zeros(int(np.prod(shape)))
        idx = (position[0] * shape[1] + position[1]) * shape[2] + position[2]
        out[idx] = 1.0
        return out
    raise ConfigurationError(f"unknown encoding mode {mode!r}")


def encode_positions(positions, shape=(12, 12, 12), mode="factored"):
    """Vectorized observation_encoding over an iterable of positions."""
    positions = np.asarray(list(positions), dtype=int)
    n = positions.shape[0]
    if mode == "factored":
        out = np.zeros((n, sum(shape)))
        offset = 0
        rows = np.arange(n)
        for axis, size in enumerate(shape):
            out[rows, offset + positions[:, axis]] = 1.0
            offset += size
        return out
    if mode == "joint":
        out = np.zeros((n, int(np.prod(shape))))
        idx = (positions[:, 0] * shape[1] + positions[:, 1]) * shape[2] + positions[:, 2]
        out[np.arange(n), idx] = 1.0
        return out
    raise ConfigurationError(f"unknown encoding mode {mode!r}")
