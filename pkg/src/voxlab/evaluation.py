"""Locomotion episode runner and fitness accounting.

One evaluation builds the robot, relaxes it to a resting pose under neutral
actuation (statically unstable shapes finish falling over before the clock
starts, and the 10% baseline expansion happens off the clock too), then repeatedly
queries the controller and holds each action for ``control_period`` simulator
steps. A step penalty
accrues at the start of every control step taken before the COM has moved
``target_distance`` along +x; the episode ends early once it has. Fitness is
the final displacement capped at the target plus the accumulated penalties,
so reaching the target sooner strictly dominates reaching it later.

Crossing the target mid-way through the final control step is not observed:
reach checks happen only at control-step starts. The cap still applies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .controller import ControllerGenome, act, observe
from .morphology import Morphology
from .physics import (ACTION_NEUTRAL, SimConfig, SimulationFault, TrajectoryWriter,
                      apply_actions, build_robot, center_of_mass, run_steps,
                      settle_body)


@dataclass(frozen=True)
class TaskConfig:
    target_distance: float = 5.0
    episode_control_steps: int = 100
    step_penalty: float = -0.05
    sim: SimConfig = field(default_factory=SimConfig)

    def __post_init__(self):
        if self.target_distance <= 0:
            raise ValueError("target_distance must be positive")
        if self.episode_control_steps < 1:
            raise ValueError("episode_control_steps must be >= 1")
        if self.step_penalty > 0:
            raise ValueError("step_penalty must be <= 0")

    @property
    def floor_fitness(self) -> float:
        """Score assigned to faulted episodes; also the no-progress baseline."""
        return self.episode_control_steps * self.step_penalty


@dataclass(frozen=True)
class FitnessResult:
    fitness: float
    reached_target: bool
    steps_to_target: int | None
    final_displacement: float
    faulted: bool = False

    def __post_init__(self):
        if self.reached_target != (self.steps_to_target is not None):
            raise ValueError("steps_to_target must be present iff target reached")


def evaluate(genome: Morphology, params: ControllerGenome, task: TaskConfig,
             trajectory_path=None) -> FitnessResult:
    """Run one episode; deterministic in (genome, params, task)."""
    if params.shape != genome.shape:
        raise ValueError("controller grid shape does not match morphology")
    sim = task.sim
    body = build_robot(genome, sim)
    try:
        # Relax at the controller's neutral action so controllers near the
        # output midpoint start from equilibrium instead of kicking the body.
        apply_actions(body, np.full(len(genome.cells), ACTION_NEUTRAL), sim)
        settle_body(body, sim)
    except SimulationFault:
        return FitnessResult(fitness=task.floor_fitness, reached_target=False,
                             steps_to_target=None, final_displacement=0.0,
                             faulted=True)
    start_x = center_of_mass(body)[0]
    penalties = 0.0
    reached = False
    steps_to_target = None
    writer = None
    if trajectory_path is not None:
        writer = TrajectoryWriter(trajectory_path, body.n)
    try:
        for t in range(task.episode_control_steps):
            displacement = center_of_mass(body)[0] - start_x
            if displacement >= task.target_distance:
                reached = True
                steps_to_target = t
                break
            penalties += task.step_penalty
            actions = act(params, observe(body, genome))
            apply_actions(body, actions, sim)
            run_steps(body, sim, sim.control_period)
            if writer is not None:
                writer.record(t, body)
    except SimulationFault:
        return FitnessResult(fitness=task.floor_fitness, reached_target=False,
                             steps_to_target=None, final_displacement=0.0,
                             faulted=True)
    finally:
        if writer is not None:
            writer.close()
    displacement = float(center_of_mass(body)[0] - start_x)
    fitness = min(displacement, task.target_distance) + penalties
    return FitnessResult(fitness=fitness, reached_target=reached,
                         steps_to_target=steps_to_target,
                         final_displacement=displacement)
