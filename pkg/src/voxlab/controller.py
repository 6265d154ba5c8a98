"""Neural-network controller: observations, forward pass, mutation.

The controller is a fixed two-layer perceptron over a flat parameter vector,
partitioned as [hidden x obs weights (row-major), hidden biases,
action x hidden weights (row-major), action biases]. For the 3x3 grid the
observation has 34 entries and the vector holds 1417 parameters.

Observations assign each corner-lattice site (row-major over the
(rows+1) x (cols+1) lattice, row 0 at the top) a fixed (x, y) slot pair
holding that mass's position relative to the robot's center of mass; sites
with no mass stay zero. The last two entries are the COM velocity. The slot
assignment depends only on the grid shape, never on which voxels exist.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .morphology import ACTIVE_TYPES, GridShape, Morphology
from .physics import ACTION_HIGH, ACTION_LOW, RobotBody, center_of_mass, com_velocity

HIDDEN_SIZE = 32


def observation_size(shape: GridShape) -> int:
    rows, cols = shape
    return 2 * (rows + 1) * (cols + 1) + 2


def action_size(shape: GridShape) -> int:
    rows, cols = shape
    return rows * cols


def param_count(shape: GridShape, hidden: int = HIDDEN_SIZE) -> int:
    n_obs = observation_size(shape)
    n_act = action_size(shape)
    return hidden * n_obs + hidden + n_act * hidden + n_act


@dataclass(frozen=True)
class ControllerGenome:
    """Immutable flat parameter vector for one controller."""

    params: np.ndarray
    shape: GridShape = (3, 3)

    def __post_init__(self):
        arr = np.array(self.params, dtype=np.float64, copy=True).ravel()
        expected = param_count(self.shape)
        if arr.size != expected:
            raise ValueError(f"expected {expected} parameters for grid {self.shape}, "
                             f"got {arr.size}")
        if not np.isfinite(arr).all():
            raise ValueError("controller parameters must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "params", arr)

    def split(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Views (W1, b1, W2, b2) into the flat vector."""
        n_obs = observation_size(self.shape)
        n_act = action_size(self.shape)
        h = HIDDEN_SIZE
        i0 = h * n_obs
        i1 = i0 + h
        i2 = i1 + n_act * h
        return (self.params[:i0].reshape(h, n_obs), self.params[i0:i1],
                self.params[i1:i2].reshape(n_act, h), self.params[i2:])


def zero_controller(shape: GridShape = (3, 3)) -> ControllerGenome:
    return ControllerGenome(np.zeros(param_count(shape)), shape)


# Fresh controllers start with weights this small so their actions sit near
# the 1.1 midpoint; search-relevant weight magnitudes come from mutation.
INIT_SCALE = 0.02


def random_controller(rng: np.random.Generator, shape: GridShape = (3, 3),
                      scale: float = INIT_SCALE) -> ControllerGenome:
    return ControllerGenome(rng.normal(0.0, scale, param_count(shape)), shape)


def observe(body: RobotBody, genome: Morphology) -> np.ndarray:
    rows, cols = genome.shape
    obs = np.zeros(observation_size(genome.shape))
    com = center_of_mass(body)
    obs[2 * body.corner_site] = body.pos[:, 0] - com[0]
    obs[2 * body.corner_site + 1] = body.pos[:, 1] - com[1]
    obs[-2:] = com_velocity(body)
    return obs


def act(params: ControllerGenome, obs: np.ndarray) -> np.ndarray:
    """Forward pass; every action lands inside (0.6, 1.6)."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (observation_size(params.shape),):
        raise ValueError(f"expected observation of size "
                         f"{observation_size(params.shape)}, got {obs.shape}")
    if not np.isfinite(obs).all():
        raise ValueError("observation must be finite")
    w1, b1, w2, b2 = params.split()
    hidden = np.tanh(w1 @ obs + b1)
    raw = w2 @ hidden + b2
    return ACTION_LOW + 0.5 * (np.tanh(raw) + 1.0)


def decode_actions(actions: np.ndarray, genome: Morphology) -> dict[int, float]:
    """Keep only the entries addressed to active voxels."""
    return {k: float(actions[k]) for k, v in enumerate(genome.cells)
            if v in ACTIVE_TYPES}


def mutate_controller(params: ControllerGenome, sigma: float,
                      rng: np.random.Generator) -> ControllerGenome:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return ControllerGenome(params.params + rng.normal(0.0, sigma, params.params.size),
                            params.shape)


def controller_to_bytes(params: ControllerGenome) -> bytes:
    """u32 count prefix followed by little-endian float64 entries."""
    arr = params.params
    return struct.pack("<I", arr.size) + arr.astype("<f8").tobytes()


def controller_from_bytes(data: bytes, shape: GridShape = (3, 3)) -> ControllerGenome:
    if len(data) < 4:
        raise ValueError("truncated controller blob")
    (count,) = struct.unpack_from("<I", data, 0)
    expected = 4 + 8 * count
    if len(data) != expected:
        raise ValueError(f"controller blob length {len(data)} != {expected}")
    arr = np.frombuffer(data, dtype="<f8", offset=4, count=count)
    return ControllerGenome(arr, shape)
