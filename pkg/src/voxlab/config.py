"""Experiment configuration: a flat, canonically ordered key=value text form
whose sha256 stamps every derived artifact.

Two hashes are exposed. `config_hash` covers the whole experiment and stamps
run outputs. `task_hash` covers only what defines the fitness function (grid,
task, physics); artifacts with equal task hashes carry comparable fitness
values, which is the precondition for merging landscapes. Seed, worker count,
and output paths are deliberately not part of either hash: seeds are recorded
per run, and workers/paths must never change results.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path

from .controller import INIT_SCALE
from .evaluation import TaskConfig
from .evolution import EvolutionConfig
from .morphology import GridShape
from .physics import SimConfig

KINDS = ("map", "coopt_afpo", "coopt_mapelites", "morph_only")

_TASK_KEYS_PREFIXES = ("grid_", "task_", "sim_")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "coopt_afpo"
    grid: GridShape = (3, 3)
    budget: int = 30
    shard_size: int = 65536
    repetitions: int = 1
    pop_size: int = 20
    generations: int = 100
    p_body: float | None = None
    mutation_sigma: float = 0.1
    init_scale: float = INIT_SCALE
    batch_size: int = 20
    checkpoint_every: int = 100
    task: TaskConfig = field(default_factory=TaskConfig)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        rows, cols = self.grid
        if not (1 <= rows <= 255 and 1 <= cols <= 255):
            raise ValueError("grid dimensions must lie in [1, 255]")
        if self.budget < 0 or self.shard_size < 1 or self.repetitions < 1:
            raise ValueError("budget >= 0, shard_size/repetitions >= 1")
        # the remaining bounds are enforced by the evolution config; the
        # oracle itself is runtime data, so validation uses a placeholder
        self.evolution_config(oracle={} if self.kind == "morph_only" else None)

    def to_text(self) -> str:
        """Canonical form: one key=value per line, keys sorted."""
        items = dict(self._flat())
        return "".join(f"{k}={items[k]}\n" for k in sorted(items))

    def _flat(self):
        sim = self.task.sim
        yield "kind", self.kind
        yield "grid_rows", self.grid[0]
        yield "grid_cols", self.grid[1]
        yield "budget", self.budget
        yield "shard_size", self.shard_size
        yield "repetitions", self.repetitions
        yield "pop_size", self.pop_size
        yield "generations", self.generations
        yield "p_body", "" if self.p_body is None else repr(self.p_body)
        yield "mutation_sigma", repr(self.mutation_sigma)
        yield "init_scale", repr(self.init_scale)
        yield "batch_size", self.batch_size
        yield "checkpoint_every", self.checkpoint_every
        yield "task_target_distance", repr(self.task.target_distance)
        yield "task_episode_control_steps", self.task.episode_control_steps
        yield "task_step_penalty", repr(self.task.step_penalty)
        yield "sim_dt", repr(sim.dt)
        yield "sim_control_period", sim.control_period
        yield "sim_gravity_x", repr(sim.gravity[0])
        yield "sim_gravity_y", repr(sim.gravity[1])
        yield "sim_ground_height", repr(sim.ground_height)
        yield "sim_contact_stiffness", repr(sim.contact_stiffness)
        yield "sim_contact_damping", repr(sim.contact_damping)
        yield "sim_friction_coefficient", repr(sim.friction_coefficient)
        yield "sim_stiffness_soft", repr(sim.stiffness_soft)
        yield "sim_stiffness_rigid", repr(sim.stiffness_rigid)
        yield "sim_stiffness_active", repr(sim.stiffness_active)
        yield "sim_spring_damping", repr(sim.spring_damping)
        yield "sim_voxel_size", repr(sim.voxel_size)
        yield "sim_point_mass", repr(sim.point_mass)
        yield "sim_max_velocity_clamp", repr(sim.max_velocity_clamp)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    @property
    def task_hash(self) -> str:
        """Hash of the fitness-function identity (grid + task + physics)."""
        lines = [line for line in self.to_text().splitlines(keepends=True)
                 if line.startswith(_TASK_KEYS_PREFIXES)]
        return hashlib.sha256("".join(lines).encode()).hexdigest()

    def evolution_config(self, oracle=None, fixed_morphology=None,
                         ) -> EvolutionConfig:
        mode = "morph_only" if self.kind == "morph_only" else "brain_body"
        return EvolutionConfig(
            mode=mode, grid=self.grid, pop_size=self.pop_size,
            generations=self.generations, p_body=self.p_body,
            mutation_sigma=self.mutation_sigma, init_scale=self.init_scale,
            batch_size=self.batch_size, checkpoint_every=self.checkpoint_every,
            task=self.task,
            oracle=oracle if mode == "morph_only" else None,
            fixed_morphology=fixed_morphology)


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Rebuild a config from key=value lines; `overrides` win over the text.

    Unknown keys are an error; missing keys keep their defaults.
    """
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()

    known = dict(ExperimentConfig()._flat())
    unknown = set(values) - set(known)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")

    def take(key, cast):
        if key not in values:
            return None
        return cast(values.pop(key))

    kw: dict = {}
    if "kind" in values:
        kw["kind"] = values.pop("kind")
    rows = take("grid_rows", int)
    cols = take("grid_cols", int)
    if (rows is None) != (cols is None):
        raise ValueError("grid_rows and grid_cols must be given together")
    if rows is not None:
        kw["grid"] = (rows, cols)
    for key in ("budget", "shard_size", "repetitions", "pop_size",
                "generations", "batch_size", "checkpoint_every"):
        v = take(key, int)
        if v is not None:
            kw[key] = v
    if "p_body" in values:
        raw = values.pop("p_body")
        kw["p_body"] = None if raw == "" else float(raw)
    for key in ("mutation_sigma", "init_scale"):
        v = take(key, float)
        if v is not None:
            kw[key] = v

    task_kw: dict = {}
    v = take("task_target_distance", float)
    if v is not None:
        task_kw["target_distance"] = v
    v = take("task_episode_control_steps", int)
    if v is not None:
        task_kw["episode_control_steps"] = v
    v = take("task_step_penalty", float)
    if v is not None:
        task_kw["step_penalty"] = v

    sim_kw: dict = {}
    gx = take("sim_gravity_x", float)
    gy = take("sim_gravity_y", float)
    if (gx is None) != (gy is None):
        raise ValueError("sim_gravity_x and sim_gravity_y must be given together")
    if gx is not None:
        sim_kw["gravity"] = (gx, gy)
    v = take("sim_control_period", int)
    if v is not None:
        sim_kw["control_period"] = v
    for f in fields(SimConfig):
        key = f"sim_{f.name}"
        if key in values:
            sim_kw[f.name] = float(values.pop(key))
    assert not values, values

    if sim_kw or task_kw:
        task_kw["sim"] = SimConfig(**sim_kw)
        kw["task"] = TaskConfig(**task_kw)
    kw.update(overrides)
    return ExperimentConfig(**kw)


def load_config(path, **overrides) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), **overrides)
