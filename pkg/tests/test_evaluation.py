"""Episode runner tests: fitness accounting, floor bound, determinism."""

import csv
import math

import numpy as np
import pytest

from voxlab.controller import mutate_controller, random_controller, zero_controller
from voxlab.evaluation import FitnessResult, TaskConfig, evaluate
from voxlab.morphology import Morphology, random_viable
from voxlab.physics import SimConfig


def test_task_config_defaults():
    task = TaskConfig()
    assert task.target_distance == 5.0
    assert task.episode_control_steps == 100
    assert task.step_penalty == -0.05
    assert task.floor_fitness == -5.0


def test_task_config_validation():
    with pytest.raises(ValueError):
        TaskConfig(target_distance=0.0)
    with pytest.raises(ValueError):
        TaskConfig(episode_control_steps=0)
    with pytest.raises(ValueError):
        TaskConfig(step_penalty=0.01)


def test_fitness_result_invariant():
    with pytest.raises(ValueError):
        FitnessResult(fitness=0.0, reached_target=True, steps_to_target=None,
                      final_displacement=0.0)
    with pytest.raises(ValueError):
        FitnessResult(fitness=0.0, reached_target=False, steps_to_target=3,
                      final_displacement=0.0)


def test_shape_mismatch_rejected():
    task = TaskConfig()
    morph = random_viable(np.random.default_rng(0))
    ctrl = zero_controller(shape=(2, 2))
    with pytest.raises(ValueError):
        evaluate(morph, ctrl, task)


def test_constant_midpoint_action_is_penalty_dominated():
    # A controller with zero weights outputs the 1.1 midpoint everywhere; on a
    # symmetric body that produces no net motion, so fitness is pure penalty.
    task = TaskConfig()
    sym = Morphology((3,) * 9)
    res = evaluate(sym, zero_controller(), task)
    assert abs(res.final_displacement) < 0.1
    assert abs(res.fitness - (-5.0)) <= 0.3
    assert not res.reached_target
    assert not res.faulted


def test_fitness_upper_bound_and_floor_over_random_robots():
    # Displacement is capped at the target and random fresh controllers stay
    # within the 0.5 settling allowance of the all-penalty floor.
    task = TaskConfig()
    rng = np.random.default_rng(1234)
    lo = task.floor_fitness - 0.5
    for _ in range(1000):
        morph = random_viable(rng)
        ctrl = random_controller(rng)
        res = evaluate(morph, ctrl, task)
        assert res.fitness <= task.target_distance
        assert res.fitness >= lo
        assert not res.faulted


def test_determinism():
    task = TaskConfig()
    rng = np.random.default_rng(5)
    morph = random_viable(rng)
    ctrl = mutate_controller(random_controller(rng), 0.5, rng)
    a = evaluate(morph, ctrl, task)
    b = evaluate(morph, ctrl, task)
    assert a == b


def _search_reaching(task, rng, tries=40):
    # Find two controllers on one body that reach a short target at different
    # speeds; mutation scale 0.5 gives strong gaits often enough.
    morph = Morphology((3, 3, 3, 1, 1, 1, 2, 2, 2))
    reached = {}
    for _ in range(tries):
        ctrl = mutate_controller(zero_controller(), 0.5, rng)
        res = evaluate(morph, ctrl, task)
        if res.reached_target:
            reached.setdefault(res.steps_to_target, (ctrl, res))
        if len(reached) >= 2:
            return [reached[k] for k in sorted(reached)]
    return None


def test_earlier_reach_scores_strictly_higher():
    task = TaskConfig(target_distance=0.1)
    found = _search_reaching(task, np.random.default_rng(99))
    assert found is not None, "no pair of target-reaching controllers found"
    (fast_ctrl, fast), (slow_ctrl, slow) = found
    assert fast.steps_to_target < slow.steps_to_target
    assert fast.fitness > slow.fitness


def test_early_stop_accounting_exact():
    # Once the target is reached no further penalty accrues, so fitness is an
    # exact affine function of the stop step.
    task = TaskConfig(target_distance=0.1)
    found = _search_reaching(task, np.random.default_rng(99))
    assert found is not None
    for _, res in found:
        assert res.reached_target
        assert res.steps_to_target < task.episode_control_steps
        expect = task.target_distance + res.steps_to_target * task.step_penalty
        assert math.isclose(res.fitness, expect, rel_tol=0, abs_tol=1e-12)
        assert res.final_displacement >= task.target_distance


def test_fault_returns_floor_with_flag():
    # Infinite stiffness makes any spring sitting at its rest length compute
    # inf * 0 = NaN force, which the runner reports as a faulted floor score.
    sim = SimConfig(stiffness_active=float("inf"))
    task = TaskConfig(sim=sim)
    morph = Morphology((3, 3, 3, 0, 0, 0, 0, 0, 0))
    res = evaluate(morph, zero_controller(), task)
    assert res.faulted
    assert res.fitness == task.floor_fitness
    assert res.final_displacement == 0.0
    assert not res.reached_target


def test_trajectory_written(tmp_path):
    task = TaskConfig(episode_control_steps=7)
    morph = Morphology((3, 3, 3, 1, 1, 1, 2, 2, 2))
    path = tmp_path / "episode.csv"
    res = evaluate(morph, zero_controller(), task, trajectory_path=path)
    assert not res.faulted
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], rows[1:]
    assert header[:5] == ["step", "com_x", "com_y", "com_vx", "com_vy"]
    assert len(data) == 7
    assert [int(r[0]) for r in data] == list(range(7))
    for r in data:
        assert all(math.isfinite(float(v)) for v in r[1:])
