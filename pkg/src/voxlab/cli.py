"""Command-line entry point.

Fixed output layout under --out:

- ``config.txt``      canonical experiment config (its sha256 stamps outputs)
- ``run_info.json``   timestamp sidecar (the only non-deterministic file)
- ``landscape/``      mapping shards, manifest, landscape.vlnd, traces.vtrc
- ``runs/<id>/``      one directory per evolutionary run
- ``analysis/``       CSV exports consumed by the plotting component

Identical config + seed produce byte-identical result files; --workers (or
the VOXLAB_WORKERS environment variable) changes wall-clock time only. Usage
errors exit with code 2, runtime faults with 1 (resumable state such as
mapping progress and run checkpoints stays on disk).
"""

from __future__ import annotations

import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import click

from .analysis import (RANKING_FRACTIONS, champion_diagnostics,
                       distribution_report, mann_whitney_u, mutation_effects,
                       ranking_correlation, write_champions_csv,
                       write_distribution_csv, write_mutation_csv,
                       write_ranking_csv, write_ruggedness_csv,
                       write_stats_tests_csv)
from .config import ExperimentConfig, load_config
from .evolution import run_experiment
from .landscape import (NearOptimalityConfig, export_csv, load_landscape,
                        load_traces, merge_update, ruggedness_stats,
                        run_mapping, save_landscape)
from .morphology import enumerate_viable, viable_count

ALGO_KINDS = {"afpo": "coopt_afpo", "map-elites": "coopt_mapelites",
              "morph-only": "morph_only"}


def _parse_grid(value: str) -> tuple[int, int]:
    try:
        rows, _, cols = value.lower().partition("x")
        return int(rows), int(cols)
    except ValueError:
        raise click.UsageError(f"grid must look like 3x3, got {value!r}")


def _build_config(config_path, kind, **overrides) -> ExperimentConfig:
    overrides = {k: v for k, v in overrides.items() if v is not None}
    overrides["kind"] = kind
    try:
        if config_path:
            return load_config(config_path, **overrides)
        return ExperimentConfig(**overrides)
    except ValueError as e:
        raise click.UsageError(str(e))


def _prepare_out(out: Path, cfg: ExperimentConfig, seed: int,
                 workers: int) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    # timestamps live here and nowhere else, keeping results byte-comparable
    (out / "run_info.json").write_text(json.dumps({
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "seed": seed, "workers": workers,
        "config_hash": cfg.config_hash, "task_hash": cfg.task_hash,
    }, indent=1))


@click.group()
def cli():
    """Map, evolve, and analyze voxel soft-robot fitness landscapes."""


@cli.command("enumerate")
@click.option("--grid", default="3x3", show_default=True,
              help="Grid shape, e.g. 3x3.")
@click.option("--list", "list_ids", is_flag=True,
              help="Print every viable morphology id instead of the count.")
def enumerate_cmd(grid, list_ids):
    """Count (or list) viable morphologies for a grid."""
    shape = _parse_grid(grid)
    if list_ids:
        for mid in enumerate_viable(shape):
            click.echo(int(mid))
    else:
        click.echo(viable_count(shape))


@cli.command("map")
@click.option("--grid", default=None, help="Grid shape, e.g. 2x2.")
@click.option("--budget", type=int, default=None,
              help="Controller-search generations per morphology.")
@click.option("--shard-size", type=int, default=None,
              help="Morphologies per shard file.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="Config file (flat key=value lines).")
@click.option("--workers", type=int, default=1, show_default=True,
              envvar="VOXLAB_WORKERS")
@click.option("--out", default="out", show_default=True,
              type=click.Path(file_okay=False))
def map_cmd(grid, budget, shard_size, seed, config_path, workers, out):
    """Exhaustively map a grid's viable space (sharded, resumable)."""
    cfg = _build_config(config_path, "map",
                        grid=_parse_grid(grid) if grid else None,
                        budget=budget, shard_size=shard_size)
    out = Path(out)
    _prepare_out(out, cfg, seed, workers)
    landscape, n_new = run_mapping(
        cfg.grid, cfg.budget, cfg.evolution_config(), seed,
        out / "landscape", task_hash=cfg.task_hash, workers=workers,
        shard_size=cfg.shard_size)
    click.echo(f"mapped {len(landscape)} morphologies "
               f"({n_new} new searches) -> {out / 'landscape'}")


@cli.command("evolve")
@click.option("--algo", type=click.Choice(sorted(ALGO_KINDS)), required=True)
@click.option("--runs", type=int, default=1, show_default=True,
              help="Repetitions; run i uses seed + i.")
@click.option("--grid", default=None, help="Grid shape, e.g. 3x3.")
@click.option("--generations", type=int, default=None)
@click.option("--pop-size", type=int, default=None)
@click.option("--oracle", "oracle_path", type=click.Path(exists=True),
              default=None,
              help="Landscape file supplying true fitness (morph-only; "
                   "defaults to <out>/landscape/landscape.vlnd).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None)
@click.option("--workers", type=int, default=1, show_default=True,
              envvar="VOXLAB_WORKERS")
@click.option("--out", default="out", show_default=True,
              type=click.Path(file_okay=False))
def evolve_cmd(algo, runs, grid, generations, pop_size, oracle_path, seed,
               config_path, workers, out):
    """Run evolutionary campaigns (checkpointed; rerun to resume)."""
    kind = ALGO_KINDS[algo]
    cfg = _build_config(config_path, kind,
                        grid=_parse_grid(grid) if grid else None,
                        generations=generations, pop_size=pop_size,
                        repetitions=runs)
    out = Path(out)
    _prepare_out(out, cfg, seed, workers)

    oracle = None
    task_hash = cfg.task_hash
    if kind == "morph_only":
        oracle_path = oracle_path or out / "landscape" / "landscape.vlnd"
        if not Path(oracle_path).exists():
            raise click.UsageError(
                f"morph-only needs a completed landscape at {oracle_path}")
        source = load_landscape(oracle_path)
        if source.grid != cfg.grid:
            raise click.UsageError(
                f"oracle landscape grid {source.grid} != config {cfg.grid}")
        oracle = source.fitness_table()
        task_hash = source.task_hash

    for i in range(cfg.repetitions):
        run_seed = seed + i
        run_dir = out / "runs" / f"{algo}-s{run_seed:04d}"
        result = run_experiment(
            kind, cfg.evolution_config(oracle=oracle), run_seed, run_dir,
            config_hash=cfg.config_hash, task_hash=task_hash)
        click.echo(f"{run_dir.name}: champion fitness "
                   f"{result.champion.fitness:.4f} at morphology "
                   f"{result.champion.morphology.id}")


@cli.command("merge")
@click.option("--out", default="out", show_default=True,
              type=click.Path(file_okay=False))
@click.option("--updates", "update_paths", multiple=True,
              type=click.Path(exists=True),
              help="Discovery files to fold in (default: all "
                   "<out>/runs/*/discoveries.vlnd).")
def merge_cmd(out, update_paths):
    """Fold run discoveries into the landscape (union, keep max fitness)."""
    out = Path(out)
    base_path = out / "landscape" / "landscape.vlnd"
    if not base_path.exists():
        raise click.UsageError(f"no landscape at {base_path}; run map first")
    paths = ([Path(p) for p in update_paths] if update_paths
             else sorted((out / "runs").glob("*/discoveries.vlnd")))
    if not paths:
        raise click.UsageError(f"no discovery files under {out / 'runs'}")
    base = load_landscape(base_path)
    total = 0
    for path in paths:
        base, improved = merge_update(base, load_landscape(path))
        total += improved
        click.echo(f"{path}: {improved} records added or improved")
    save_landscape(base_path, base)
    click.echo(f"merged {len(paths)} update(s), {total} improvements "
               f"-> {base_path}")


def _load_campaign(out: Path):
    path = out / "landscape" / "landscape.vlnd"
    if not path.exists():
        raise click.UsageError(f"no landscape at {path}; run map first")
    return load_landscape(path)


def _run_dirs(out: Path):
    runs = sorted(p for p in (out / "runs").glob("*") if
                  (p / "champion.json").exists())
    if not runs:
        raise click.UsageError(f"no finished runs under {out / 'runs'}")
    return runs


def _analysis_dir(out: Path) -> Path:
    d = out / "analysis"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _stamp(out: Path) -> str:
    info = out / "run_info.json"
    if info.exists():
        return json.loads(info.read_text())["config_hash"]
    return ""


def _analyze_distribution(out: Path, group_by: str) -> Path:
    landscape = _load_campaign(out)
    groups = distribution_report(landscape, group_by)
    path = _analysis_dir(out) / f"distribution_{group_by}.csv"
    write_distribution_csv(path, groups, _stamp(out), group_by)
    return path


def _analyze_ranking(out: Path) -> Path:
    traces_path = out / "landscape" / "traces.vtrc"
    if not traces_path.exists():
        raise click.UsageError(f"no traces at {traces_path}; run map first")
    traces, _, _ = load_traces(traces_path)
    usable = [f for f in RANKING_FRACTIONS if round(f * len(traces)) >= 2]
    if not usable:
        raise click.UsageError(
            f"{len(traces)} traces leave every fraction below 2 morphologies")
    curves = [ranking_correlation(traces, f) for f in usable]
    path = _analysis_dir(out) / "ranking.csv"
    write_ranking_csv(path, curves, _stamp(out))
    return path


def _analyze_champions(out: Path) -> Path:
    landscape = _load_campaign(out)
    diagnostics = champion_diagnostics(_run_dirs(out), landscape)
    gmax, gmin = landscape.global_extremes()
    threshold = NearOptimalityConfig().threshold(gmax, gmin)
    path = _analysis_dir(out) / "champions_diagnostics.csv"
    write_champions_csv(path, diagnostics, _stamp(out), threshold)
    return path


def _analyze_mutations(out: Path) -> Path:
    import numpy as np

    landscape = _load_campaign(out)
    stamp = _stamp(out)
    series_by_run = {}
    for run_dir in _run_dirs(out):
        payload = json.loads((run_dir / "champion.json").read_text())
        if payload["kind"] == "morph_only":
            continue
        series = mutation_effects(run_dir / "events.ndjson", landscape)
        series_by_run[run_dir.name] = series
    if not series_by_run:
        raise click.UsageError("no co-optimization runs to analyze")
    path = _analysis_dir(out) / "mutation_effects.csv"
    with open(path, "w") as fh:
        fh.write(f"# config={stamp}\n")
        fh.write("run_id,generation,n_body_mutations,mean_observed_delta,"
                 "mean_true_delta,survival_rate\n")
        for run_id, s in series_by_run.items():
            for i, g in enumerate(s.generations):
                fh.write(f"{run_id},{int(g)},{int(s.n_body_mutations[i])},"
                         f"{float(s.mean_observed_delta[i])!r},"
                         f"{float(s.mean_true_delta[i])!r},"
                         f"{float(s.survival_rate[i])!r}\n")
    # per-generation means across runs, nan-aware, for direct plotting
    longest = max(s.generations.size for s in series_by_run.values())
    mean_path = _analysis_dir(out) / "mutation_effects_mean.csv"
    with open(mean_path, "w") as fh:
        fh.write(f"# config={stamp}\n")
        fh.write("generation,n_runs,mean_observed_delta,mean_true_delta,"
                 "survival_rate\n")
        for i in range(longest):
            cols = {"mean_observed_delta": [], "mean_true_delta": [],
                    "survival_rate": []}
            n_runs = 0
            for s in series_by_run.values():
                if i >= s.generations.size:
                    continue
                n_runs += 1
                cols["mean_observed_delta"].append(s.mean_observed_delta[i])
                cols["mean_true_delta"].append(s.mean_true_delta[i])
                cols["survival_rate"].append(s.survival_rate[i])
            means = {k: float(np.nanmean(v)) if np.isfinite(v).any()
                     else float("nan") for k, v in cols.items()}
            fh.write(f"{i + 1},{n_runs},{means['mean_observed_delta']!r},"
                     f"{means['mean_true_delta']!r},"
                     f"{means['survival_rate']!r}\n")
    return path


def _analyze_ruggedness(out: Path) -> Path:
    landscape = _load_campaign(out)
    path = _analysis_dir(out) / "ruggedness.csv"
    write_ruggedness_csv(path, ruggedness_stats(landscape), _stamp(out))
    return path


def _analyze_stats_test(out: Path) -> Path:
    landscape = _load_campaign(out)
    diagnostics = champion_diagnostics(_run_dirs(out), landscape)
    by_kind: dict[str, list[float]] = {}
    for d in diagnostics:
        by_kind.setdefault(d.kind, []).append(d.true_fitness)
    if len(by_kind) < 2:
        raise click.UsageError(
            f"need runs of at least two kinds to compare, have {sorted(by_kind)}")
    rows = []
    kinds = sorted(by_kind)
    for i, ka in enumerate(kinds):
        for kb in kinds[i + 1:]:
            res = mann_whitney_u(by_kind[ka], by_kind[kb])
            rows.append((ka, kb, len(by_kind[ka]), len(by_kind[kb]), res))
    path = _analysis_dir(out) / "stats_tests.csv"
    write_stats_tests_csv(path, rows, _stamp(out))
    return path


ANALYSES = {
    "distribution": lambda out, group_by: _analyze_distribution(out, group_by),
    "ranking": lambda out, group_by: _analyze_ranking(out),
    "champions": lambda out, group_by: _analyze_champions(out),
    "mutation-effects": lambda out, group_by: _analyze_mutations(out),
    "ruggedness": lambda out, group_by: _analyze_ruggedness(out),
    "stats-test": lambda out, group_by: _analyze_stats_test(out),
}


@cli.command("analyze")
@click.argument("what", type=click.Choice(sorted(ANALYSES)))
@click.option("--group-by", default="active_count", show_default=True,
              type=click.Choice(["none", "active_count", "active_fraction"]),
              help="Grouping for the distribution analysis.")
@click.option("--out", default="out", show_default=True,
              type=click.Path(file_okay=False))
def analyze_cmd(what, group_by, out):
    """Compute one analysis CSV from mapped/evolved artifacts."""
    path = ANALYSES[what](Path(out), group_by)
    click.echo(f"wrote {path}")


@cli.command("export")
@click.option("--out", default="out", show_default=True,
              type=click.Path(file_okay=False))
def export_cmd(out):
    """Write the full CSV bundle for the plotting component."""
    out = Path(out)
    landscape = _load_campaign(out)
    analysis = _analysis_dir(out)
    export_csv(landscape, analysis / "landscape.csv")
    written = [analysis / "landscape.csv"]
    written.append(_analyze_distribution(out, "none"))
    written.append(_analyze_distribution(out, "active_count"))
    written.append(_analyze_distribution(out, "active_fraction"))
    written.append(_analyze_ranking(out))
    written.append(_analyze_ruggedness(out))
    has_runs = any((p / "champion.json").exists()
                   for p in (out / "runs").glob("*"))
    if has_runs:
        written.append(_analyze_champions(out))
        written.append(_analyze_mutations(out))
        try:
            written.append(_analyze_stats_test(out))
        except click.UsageError:
            pass  # single-kind campaigns have nothing to compare
    for path in written:
        click.echo(f"wrote {path}")


def main(argv=None) -> int:
    try:
        cli(args=argv, standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.UsageError as e:
        e.show()
        return 2
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.exceptions.Abort:
        return 130
    except Exception as e:  # runtime fault; resumable state stays on disk
        click.echo(f"error: {e}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
