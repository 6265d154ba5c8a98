import pytest

from voxlab.config import ExperimentConfig, load_config, parse_config
from voxlab.evaluation import TaskConfig
from voxlab.physics import SimConfig


def test_text_round_trip_is_identity():
    cfg = ExperimentConfig()
    assert parse_config(cfg.to_text()) == cfg
    custom = ExperimentConfig(
        kind="map", grid=(2, 2), budget=7, shard_size=16, repetitions=3,
        pop_size=5, generations=9, p_body=0.25, mutation_sigma=0.2,
        batch_size=8, checkpoint_every=4,
        task=TaskConfig(target_distance=1.5, episode_control_steps=20,
                        step_penalty=-0.01,
                        sim=SimConfig(dt=1 / 240, gravity=(0.1, -9.0),
                                      friction_coefficient=0.7)))
    assert parse_config(custom.to_text()) == custom


def test_canonical_text_is_sorted_and_flat():
    lines = ExperimentConfig().to_text().splitlines()
    keys = [line.split("=")[0] for line in lines]
    assert keys == sorted(keys)
    assert all(line.count("=") == 1 for line in lines)


def test_config_hash_tracks_every_field():
    base = ExperimentConfig()
    assert len(base.config_hash) == 64
    assert ExperimentConfig(pop_size=21).config_hash != base.config_hash
    assert ExperimentConfig(budget=31).config_hash != base.config_hash
    assert parse_config(base.to_text()).config_hash == base.config_hash


def test_task_hash_covers_only_fitness_identity():
    base = ExperimentConfig()
    # search hyperparameters do not change what fitness means
    assert ExperimentConfig(kind="map").task_hash == base.task_hash
    assert ExperimentConfig(pop_size=5, generations=7,
                            budget=2).task_hash == base.task_hash
    # grid, task, and physics do
    assert ExperimentConfig(grid=(2, 2)).task_hash != base.task_hash
    assert ExperimentConfig(
        task=TaskConfig(target_distance=1.0)).task_hash != base.task_hash
    assert ExperimentConfig(
        task=TaskConfig(sim=SimConfig(friction_coefficient=0.5))
    ).task_hash != base.task_hash


def test_parse_tolerates_comments_and_blanks():
    cfg = parse_config("# a comment\n\nkind=map\n  pop_size = 6 \n")
    assert cfg.kind == "map" and cfg.pop_size == 6


def test_parse_errors():
    with pytest.raises(ValueError, match="unknown"):
        parse_config("warp_factor=9\n")
    with pytest.raises(ValueError, match="key=value"):
        parse_config("just some words\n")
    with pytest.raises(ValueError, match="together"):
        parse_config("grid_rows=2\n")
    with pytest.raises(ValueError, match="together"):
        parse_config("sim_gravity_x=0.0\n")


def test_overrides_beat_file_values(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("kind=map\nbudget=3\npop_size=4\n")
    cfg = load_config(path, budget=9)
    assert (cfg.kind, cfg.budget, cfg.pop_size) == ("map", 9, 4)


def test_p_body_empty_means_default():
    cfg = parse_config("p_body=\n")
    assert cfg.p_body is None
    assert parse_config("p_body=0.3\n").p_body == 0.3
    text = ExperimentConfig(p_body=0.3).to_text()
    assert parse_config(text).p_body == 0.3


def test_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(kind="teleport")
    with pytest.raises(ValueError):
        ExperimentConfig(grid=(0, 3))
    with pytest.raises(ValueError):
        ExperimentConfig(grid=(3, 256))
    with pytest.raises(ValueError):
        ExperimentConfig(budget=-1)
    with pytest.raises(ValueError):
        ExperimentConfig(repetitions=0)
    with pytest.raises(ValueError):
        ExperimentConfig(pop_size=0)  # enforced via the evolution config


def test_evolution_config_mapping():
    cfg = ExperimentConfig(kind="morph_only", grid=(2, 2))
    evo = cfg.evolution_config(oracle={1: 0.0})
    assert evo.mode == "morph_only" and evo.oracle == {1: 0.0}
    assert evo.grid == (2, 2)
    coopt = ExperimentConfig(kind="coopt_mapelites", batch_size=7)
    evo = coopt.evolution_config()
    assert evo.mode == "brain_body" and evo.batch_size == 7
    assert evo.task == coopt.task
