"""Batch figure rendering from analysis CSV exports.

Each figure kind consumes one CSV whose header must match the analysis
module's documented contract; rendering displays the stored values and never
recomputes statistics. Output is written as both PNG and SVG. Rendering is
deterministic: jitter uses a fixed seed and SVG ids/dates are pinned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.figure import Figure
from matplotlib.ticker import MaxNLocator

from .csvio import CSVContractError, Table, read_table, require_columns

LANDSCAPE_COLUMNS = ("id", "fitness", "active_count", "passive_count",
                     "is_local_max")
DISTRIBUTION_COLUMNS = ("group", "count", "mean", "median", "q1", "q3",
                        "min", "max")
RANKING_COLUMNS = ("fraction", "generation", "rho", "n_selected")
CHAMPION_COLUMNS = ("run_id", "kind", "morphology_id", "true_fitness",
                    "is_local_max", "basin_distance", "near_optimal")
MUTATION_COLUMNS = ("generation", "n_runs", "mean_observed_delta",
                    "mean_true_delta", "survival_rate")

CONTRACTS = {
    "fitness_histogram": LANDSCAPE_COLUMNS,
    "grouped_boxplots": DISTRIBUTION_COLUMNS,
    "ranking_curves": RANKING_COLUMNS,
    "champion_swarm": CHAMPION_COLUMNS,
    "champion_scatter": CHAMPION_COLUMNS,
    "comparison_boxplots": CHAMPION_COLUMNS,
    "mutation_effect_lines": MUTATION_COLUMNS,
}

KINDS = tuple(sorted(CONTRACTS))

# analysis export consumed by each kind under `render-all`
DEFAULT_INPUTS = {
    "fitness_histogram": "landscape.csv",
    "grouped_boxplots": "distribution_active_count.csv",
    "ranking_curves": "ranking.csv",
    "champion_swarm": "champions_diagnostics.csv",
    "champion_scatter": "champions_diagnostics.csv",
    "comparison_boxplots": "champions_diagnostics.csv",
    "mutation_effect_lines": "mutation_effects_mean.csv",
}

JITTER_SEED = 717
THRESHOLD_STYLE = dict(color="tab:red", linestyle="--", linewidth=1.0)


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    csvs: tuple
    output: Path
    title: str | None = None
    bins: int = 40
    dpi: int = 150
    formats: tuple[str, ...] = ("png", "svg")

    def __post_init__(self):
        if self.kind not in CONTRACTS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if len(self.csvs) != 1:
            raise ValueError(f"{self.kind} takes exactly one input CSV")
        if self.bins < 1:
            raise ValueError("bins must be >= 1")
        for fmt in self.formats:
            if fmt not in ("png", "svg"):
                raise ValueError(f"unsupported format {fmt!r}")


def _new_axes(spec: FigureSpec, default_title: str):
    fig, ax = plt.subplots(figsize=(6.4, 4.2), constrained_layout=True)
    ax.set_title(spec.title if spec.title is not None else default_title)
    return fig, ax


def _threshold_line(ax, table: Table) -> None:
    # single source of truth: the exporter's metadata row, never recomputed
    if "threshold" in table.metadata:
        ax.axhline(float(table.metadata["threshold"]),
                   label="near-optimal threshold", **THRESHOLD_STYLE)
        ax.legend(loc="best")


def _build_fitness_histogram(table: Table, spec: FigureSpec) -> Figure:
    grid = table.metadata.get("grid", "?")
    fig, ax = _new_axes(spec, f"Fitness distribution ({grid} grid)")
    ax.hist(table.floats("fitness"), bins=spec.bins, color="tab:blue",
            edgecolor="white", linewidth=0.3)
    ax.set_xlabel("fitness")
    ax.set_ylabel("morphologies")
    return fig


def _build_grouped_boxplots(table: Table, spec: FigureSpec) -> Figure:
    group_by = table.metadata.get("group_by", "group")
    fig, ax = _new_axes(spec, f"Fitness by {group_by}")
    stats, means = [], []
    for row in table.rows:
        values = dict(zip(table.header, row))
        if int(values["count"]) == 0:
            continue
        stats.append({"label": values["group"],
                      "med": float(values["median"]),
                      "q1": float(values["q1"]), "q3": float(values["q3"]),
                      "whislo": float(values["min"]),
                      "whishi": float(values["max"])})
        means.append(float(values["mean"]))
    ax.bxp(stats, showfliers=False)
    ax.plot(np.arange(1, len(means) + 1), means, linestyle="none",
            marker="D", markersize=4, color="tab:orange", label="mean")
    ax.set_xlabel(group_by)
    ax.set_ylabel("fitness")
    ax.legend(loc="best")
    return fig


def _fraction_label(fraction: float) -> str:
    return f"{fraction * 100:g}%"


def _build_ranking_curves(table: Table, spec: FigureSpec) -> Figure:
    fig, ax = _new_axes(spec, "Ranking correlation vs final generation")
    fractions = table.floats("fraction")
    generations = table.floats("generation")
    rhos = table.floats("rho")
    for fraction in sorted(set(fractions), reverse=True):
        mask = fractions == fraction
        order = np.argsort(generations[mask])
        ax.plot(generations[mask][order], rhos[mask][order],
                marker=".", label=_fraction_label(float(fraction)))
    ax.set_xlabel("generation")
    ax.set_ylabel("rank correlation")
    ax.legend(loc="best")
    return fig


def _champion_groups(table: Table) -> list[tuple[str, np.ndarray]]:
    kinds = table.column("kind")
    fitness = table.floats("true_fitness")
    order = sorted(set(kinds))
    return [(k, fitness[np.array(kinds) == k]) for k in order]


def _build_champion_swarm(table: Table, spec: FigureSpec) -> Figure:
    fig, ax = _new_axes(spec, "Run champions")
    rng = np.random.default_rng(JITTER_SEED)
    groups = _champion_groups(table)
    for x, (kind, values) in enumerate(groups):
        jitter = rng.uniform(-0.18, 0.18, values.size)
        ax.scatter(np.full(values.size, float(x)) + jitter, values, s=18,
                   alpha=0.8)
    ax.set_xticks(range(len(groups)), [k for k, _ in groups])
    ax.set_ylabel("champion true fitness")
    _threshold_line(ax, table)
    return fig


def _build_champion_scatter(table: Table, spec: FigureSpec) -> Figure:
    fig, ax = _new_axes(spec, "Champion basin distance vs true fitness")
    ax.scatter(table.floats("basin_distance"), table.floats("true_fitness"),
               s=18, alpha=0.8)
    ax.xaxis.set_major_locator(MaxNLocator(integer=True))
    ax.grid(True, linewidth=0.4, alpha=0.6)
    ax.set_xlabel("steps to nearest local maximum")
    ax.set_ylabel("champion true fitness")
    _threshold_line(ax, table)
    return fig


def _build_comparison_boxplots(table: Table, spec: FigureSpec) -> Figure:
    fig, ax = _new_axes(spec, "Champion fitness by algorithm")
    groups = _champion_groups(table)
    ax.boxplot([values for _, values in groups],
               tick_labels=[k for k, _ in groups])
    ax.set_ylabel("champion true fitness")
    _threshold_line(ax, table)
    return fig


def _build_mutation_effect_lines(table: Table, spec: FigureSpec) -> Figure:
    fig, ax = _new_axes(spec, "Body-mutation effects per generation")
    generations = table.floats("generation")
    ax.axhline(0.0, color="gray", linewidth=0.8)
    ax.plot(generations, table.floats("mean_observed_delta"),
            label="observed delta", color="tab:blue")
    ax.plot(generations, table.floats("mean_true_delta"),
            label="true delta", color="tab:green")
    ax.set_xlabel("generation")
    ax.set_ylabel("mean fitness delta")
    twin = ax.twinx()
    twin.plot(generations, table.floats("survival_rate"),
              label="survival rate", color="tab:orange", linestyle="--")
    twin.set_ylabel("survival rate")
    twin.set_ylim(-0.05, 1.05)
    handles = (ax.get_legend_handles_labels()[0]
               + twin.get_legend_handles_labels()[0])
    ax.legend(handles=handles, loc="best")
    return fig


BUILDERS = {
    "fitness_histogram": _build_fitness_histogram,
    "grouped_boxplots": _build_grouped_boxplots,
    "ranking_curves": _build_ranking_curves,
    "champion_swarm": _build_champion_swarm,
    "champion_scatter": _build_champion_scatter,
    "comparison_boxplots": _build_comparison_boxplots,
    "mutation_effect_lines": _build_mutation_effect_lines,
}


def build_figure(spec: FigureSpec) -> Figure:
    """Validate the input CSV and return the drawn (unsaved) figure."""
    table = read_table(spec.csvs[0])
    require_columns(table, CONTRACTS[spec.kind], spec.kind)
    return BUILDERS[spec.kind](table, spec)


def _savefig_metadata(fmt: str) -> dict:
    return {"Date": None} if fmt == "svg" else {}


def render(spec: FigureSpec) -> list[Path]:
    """Render one figure to every requested format; returns written paths."""
    with plt.rc_context({"svg.hashsalt": "voxlab-figures"}):
        fig = build_figure(spec)
        out = Path(spec.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        paths = []
        for fmt in spec.formats:
            path = out.with_suffix("." + fmt)
            fig.savefig(path, dpi=spec.dpi, metadata=_savefig_metadata(fmt))
            paths.append(path)
        plt.close(fig)
    return paths


def render_all(analysis_dir, out_dir=None,
               formats: tuple[str, ...] = ("png", "svg")) -> list[Path]:
    """Render the full figure set from a standard analysis directory."""
    analysis_dir = Path(analysis_dir)
    missing = sorted({name for name in DEFAULT_INPUTS.values()
                      if not (analysis_dir / name).exists()})
    if missing:
        raise CSVContractError(
            f"{analysis_dir}: missing analysis exports: {', '.join(missing)}")
    out_dir = Path(out_dir) if out_dir else analysis_dir.parent / "figures"
    written = []
    for kind in KINDS:
        spec = FigureSpec(kind=kind,
                          csvs=(analysis_dir / DEFAULT_INPUTS[kind],),
                          output=out_dir / kind, formats=formats)
        written.extend(render(spec))
    return written
