"""Statistics over event logs, fitness traces, and complete landscapes:
rank correlations, Mann-Whitney tests, run-champion placement, body-mutation
effect series, and fitness distribution tables.

Every operation is a deterministic, read-only function of its inputs and has
a CSV writer whose first line is a `# key=value ...` metadata comment; those
CSVs are the contract consumed by the plotting component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evolution import EvolutionEvent, read_events
from .landscape import Landscape, hill_climb_basin, _dense_fitness
from .morphology import ACTIVE_TYPES

RANKING_FRACTIONS = (1.0, 0.5, 0.05, 0.01)


# ---------------------------------------------------------------------------
# rank statistics
# ---------------------------------------------------------------------------

def average_ranks(values) -> np.ndarray:
    """1-based ranks; ties receive the mean of the rank span they occupy."""
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=float)
    ranks[order] = np.arange(1, x.size + 1, dtype=float)
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    sums = np.bincount(inverse, weights=ranks)
    return sums[inverse] / counts[inverse]


def spearman(xs, ys) -> float:
    """Pearson correlation of average ranks.

    Returns nan when either sequence has zero rank variance (constant
    input), the one case where the coefficient is undefined.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 2:
        raise ValueError("spearman needs two equal-length sequences of >= 2")
    rx, ry = average_ranks(xs), average_ranks(ys)
    dx, dy = rx - rx.mean(), ry - ry.mean()
    vx, vy = (dx * dx).sum(), (dy * dy).sum()
    if vx == 0.0 or vy == 0.0:
        return float("nan")
    return float((dx * dy).sum() / math.sqrt(vx * vy))


@dataclass(frozen=True)
class MannWhitneyResult:
    u: float
    p: float


def _exact_u_cdf(n: int, m: int) -> np.ndarray:
    """Null CDF of the U statistic for tie-free samples of sizes n, m."""
    # table[j] = distribution over u for the current i, built by the
    # standard recurrence f(i, j, u) = f(i-1, j, u-j) + f(i, j-1, u)
    table = [np.ones(1) for _ in range(m + 1)]
    for i in range(1, n + 1):
        new = [np.ones(1)]
        for j in range(1, m + 1):
            f = np.zeros(i * j + 1)
            f[j:] += table[j]  # f(i-1, j, u-j)
            f[:i * (j - 1) + 1] += new[j - 1]  # f(i, j-1, u)
            new.append(f)
        table = new
    pmf = table[m] / table[m].sum()
    return np.cumsum(pmf)


def mann_whitney_u(a, b) -> MannWhitneyResult:
    """Rank-sum U for `a` with a two-sided p-value.

    p uses exact enumeration for small tie-free inputs (n*m <= 400), else
    the normal approximation with tie correction.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both sample sets must be non-empty")
    n, m = a.size, b.size
    pooled = np.concatenate([a, b])
    ranks = average_ranks(pooled)
    u = float(ranks[:n].sum() - n * (n + 1) / 2)

    _, counts = np.unique(pooled, return_counts=True)
    tied = int((counts > 1).sum()) > 0
    if n * m <= 400 and not tied:
        cdf = _exact_u_cdf(n, m)
        k = int(round(u))
        p_low = float(cdf[k])
        p_high = 1.0 - (float(cdf[k - 1]) if k > 0 else 0.0)
        p = min(1.0, 2.0 * min(p_low, p_high))
    else:
        total = n + m
        mu = n * m / 2.0
        tie_term = float((counts.astype(float) ** 3 - counts).sum())
        sigma2 = n * m / 12.0 * (total + 1 - tie_term / (total * (total - 1)))
        if sigma2 <= 0.0:
            p = 1.0
        else:
            # continuity correction shrinks |u - mu| by one half step
            z = (abs(u - mu) - 0.5) / math.sqrt(sigma2)
            p = min(1.0, math.erfc(max(z, 0.0) / math.sqrt(2.0)))
    return MannWhitneyResult(u=u, p=p)


# ---------------------------------------------------------------------------
# ranking stability over search budget
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RankingCorrelationCurve:
    """Spearman rho of each generation's ranking against the final one,
    over the morphologies in the top `fraction` by final fitness."""

    fraction: float
    rhos: np.ndarray
    selected_ids: tuple[int, ...]


def ranking_correlation(traces: dict[int, np.ndarray],
                        fraction: float) -> RankingCorrelationCurve:
    """Rank-stability curve over running-best traces (one row per id).

    The top `fraction` of morphologies by final fitness is selected (exact
    final-fitness ties break toward the lower id); rho is computed per
    generation against the final generation over that fixed set.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    if not traces:
        raise ValueError("no traces given")
    ids = sorted(traces)
    lengths = {np.asarray(traces[i]).shape for i in ids}
    if len(lengths) != 1:
        raise ValueError("all traces must have the same length")
    mat = np.array([np.asarray(traces[i], dtype=float) for i in ids])
    final = mat[:, -1]
    k = int(round(fraction * len(ids)))
    if k < 2:
        raise ValueError(
            f"top {fraction} of {len(ids)} traces leaves {k} < 2 morphologies")
    order = np.lexsort((ids, -final))[:k]
    sub = mat[order]
    rhos = np.array([spearman(sub[:, g], sub[:, -1])
                     for g in range(mat.shape[1])])
    return RankingCorrelationCurve(
        fraction=fraction, rhos=rhos,
        selected_ids=tuple(ids[i] for i in order))


# ---------------------------------------------------------------------------
# run champions against the true landscape
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChampionDiagnostics:
    run_id: str
    kind: str
    morphology_id: int
    true_fitness: float
    is_local_max: bool
    basin_distance: int

    def __post_init__(self):
        if self.is_local_max != (self.basin_distance == 0):
            raise ValueError("is_local_max must mean basin distance zero")


def champion_diagnostics(run_dirs, landscape: Landscape,
                         ) -> list[ChampionDiagnostics]:
    """Locate each run's champion on the complete true landscape."""
    from .evolution import load_champion

    landscape.require_complete()
    fit = _dense_fitness(landscape)
    out = []
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        morph, _, _, payload = load_champion(run_dir)
        if landscape.task_hash and payload["task_hash"] != landscape.task_hash:
            raise ValueError(
                f"{run_dir.name}: run task hash {payload['task_hash']!r} does "
                f"not match landscape {landscape.task_hash!r}")
        mid = payload["morphology_id"]
        if mid not in landscape.records:
            raise ValueError(f"{run_dir.name}: champion morphology {mid} "
                             "missing from landscape")
        _, steps = hill_climb_basin(mid, landscape, fit)
        out.append(ChampionDiagnostics(
            run_id=run_dir.name, kind=payload["kind"], morphology_id=mid,
            true_fitness=landscape.records[mid].best_fitness,
            is_local_max=steps == 0, basin_distance=steps))
    return out


# ---------------------------------------------------------------------------
# body-mutation effect series
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MutationEffectSeries:
    """Per-generation aggregates over body-mutation offspring.

    Entries are nan for generations without body mutations (and survival
    rate is nan when no such offspring beat the survivor minimum). The
    survival rate denominator is the offspring whose landscape fitness
    strictly exceeds the minimum landscape fitness among that generation's
    survivors; the numerator is those of them that survived selection.
    """

    generations: np.ndarray
    n_body_mutations: np.ndarray
    mean_observed_delta: np.ndarray
    mean_true_delta: np.ndarray
    survival_rate: np.ndarray


def mutation_effects(events, landscape: Landscape) -> MutationEffectSeries:
    """Aggregate body-mutation outcomes from an event log; never simulates."""
    landscape.require_complete()
    if isinstance(events, (str, Path)):
        events = read_events(events)
    true_fit = {i: r.best_fitness for i, r in landscape.records.items()}

    fitness_of = {}
    morph_of = {}
    body_children: dict[int, list[tuple[int, float, float]]] = {}
    survived_uids: dict[int, set[int]] = {}
    survivor_morphs: dict[int, list[int]] = {}
    last_gen = 0
    for ev in events:
        last_gen = max(last_gen, ev.generation)
        if ev.kind in ("offspring_created", "injected"):
            uid = ev.extra["uid"]
            fitness_of[uid] = ev.observed_fitness
            morph_of[uid] = ev.morphology_id
        if ev.kind == "survived":
            survived_uids.setdefault(ev.generation, set()).add(ev.extra["uid"])
            survivor_morphs.setdefault(ev.generation, []).append(ev.morphology_id)
        if ev.kind == "offspring_created" and ev.mutation_kind == "body":
            parent_uid = ev.extra.get("parent_uid")
            if parent_uid is None or parent_uid not in fitness_of:
                raise ValueError(
                    f"offspring event in generation {ev.generation} lacks "
                    "parent linkage")
            obs_delta = ev.observed_fitness - fitness_of[parent_uid]
            true_delta = (true_fit[ev.morphology_id]
                          - true_fit[morph_of[parent_uid]])
            body_children.setdefault(ev.generation, []).append(
                (ev.extra["uid"], obs_delta, true_delta))

    gens = np.arange(1, last_gen + 1)
    n_body = np.zeros(gens.size, dtype=int)
    obs = np.full(gens.size, np.nan)
    true = np.full(gens.size, np.nan)
    rate = np.full(gens.size, np.nan)
    for idx, g in enumerate(gens):
        children = body_children.get(int(g), [])
        n_body[idx] = len(children)
        if not children:
            continue
        obs[idx] = float(np.mean([d for _, d, _ in children]))
        true[idx] = float(np.mean([t for _, _, t in children]))
        morphs = survivor_morphs.get(int(g))
        if not morphs:
            continue
        floor = min(true_fit[m] for m in morphs)
        alive = survived_uids[int(g)]
        competitive = [(uid, uid in alive) for uid, _, _ in children
                       if true_fit[morph_of[uid]] > floor]
        if competitive:
            rate[idx] = sum(ok for _, ok in competitive) / len(competitive)
    return MutationEffectSeries(generations=gens, n_body_mutations=n_body,
                                mean_observed_delta=obs, mean_true_delta=true,
                                survival_rate=rate)


# ---------------------------------------------------------------------------
# fitness distribution tables
# ---------------------------------------------------------------------------

GROUP_BY = ("none", "active_count", "active_fraction")


@dataclass(frozen=True)
class GroupStats:
    label: str
    count: int
    mean: float
    median: float
    q1: float
    q3: float
    min: float
    max: float


def _stats(label: str, values: np.ndarray) -> GroupStats:
    if values.size == 0:
        nan = float("nan")
        return GroupStats(label, 0, nan, nan, nan, nan, nan, nan)
    q1, med, q3 = np.percentile(values, [25.0, 50.0, 75.0])
    return GroupStats(label=label, count=int(values.size),
                      mean=float(values.mean()), median=float(med),
                      q1=float(q1), q3=float(q3),
                      min=float(values.min()), max=float(values.max()))


def distribution_report(landscape: Landscape, group_by: str = "none",
                        bins=None) -> list[GroupStats]:
    """Count/mean/median/quartile/extreme table, optionally grouped by the
    number (or filled-cell fraction) of actuated voxels."""
    if group_by not in GROUP_BY:
        raise ValueError(f"group_by must be one of {GROUP_BY}")
    landscape.require_complete()
    ids = np.array(sorted(landscape.records), dtype=np.int64)
    fits = np.array([landscape.records[int(i)].best_fitness for i in ids])
    if group_by == "none":
        return [_stats("all", fits)]

    n_cells = landscape.grid[0] * landscape.grid[1]
    powers = 5 ** np.arange(n_cells, dtype=np.int64)
    digits = (ids[:, None] // powers[None, :]) % 5
    active = np.isin(digits, tuple(int(t) for t in ACTIVE_TYPES)).sum(axis=1)
    if group_by == "active_count":
        return [_stats(str(a), fits[active == a])
                for a in np.unique(active)]

    filled = (digits != 0).sum(axis=1)
    fraction = active / filled
    edges = np.linspace(0.0, 1.0, 11) if bins is None else np.asarray(bins, float)
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        last = hi == edges[-1]
        mask = (fraction >= lo) & ((fraction <= hi) if last else (fraction < hi))
        bracket = "]" if last else ")"
        out.append(_stats(f"[{lo:g},{hi:g}{bracket}", fits[mask]))
    return out


# ---------------------------------------------------------------------------
# CSV writers (the plotting contract)
# ---------------------------------------------------------------------------

def _metadata_line(pairs: dict) -> str:
    return "# " + " ".join(f"{k}={v}" for k, v in pairs.items()) + "\n"


def write_distribution_csv(path, groups: list[GroupStats], config_hash: str,
                           group_by: str) -> None:
    with open(path, "w") as fh:
        fh.write(_metadata_line({"config": config_hash, "group_by": group_by}))
        fh.write("group,count,mean,median,q1,q3,min,max\n")
        for g in groups:
            fh.write(f"{g.label},{g.count},{g.mean!r},{g.median!r},"
                     f"{g.q1!r},{g.q3!r},{g.min!r},{g.max!r}\n")


def write_ranking_csv(path, curves: list[RankingCorrelationCurve],
                      config_hash: str) -> None:
    with open(path, "w") as fh:
        fh.write(_metadata_line({"config": config_hash}))
        fh.write("fraction,generation,rho,n_selected\n")
        for curve in curves:
            for g, rho in enumerate(curve.rhos):
                fh.write(f"{float(curve.fraction)!r},{g},{float(rho)!r},"
                         f"{len(curve.selected_ids)}\n")


def write_champions_csv(path, diagnostics: list[ChampionDiagnostics],
                        config_hash: str, threshold: float) -> None:
    with open(path, "w") as fh:
        fh.write(_metadata_line({"config": config_hash,
                                 "threshold": repr(threshold)}))
        fh.write("run_id,kind,morphology_id,true_fitness,is_local_max,"
                 "basin_distance,near_optimal\n")
        for d in diagnostics:
            fh.write(f"{d.run_id},{d.kind},{d.morphology_id},"
                     f"{d.true_fitness!r},{int(d.is_local_max)},"
                     f"{d.basin_distance},{int(d.true_fitness >= threshold)}\n")


def write_mutation_csv(path, series: MutationEffectSeries,
                       config_hash: str) -> None:
    with open(path, "w") as fh:
        fh.write(_metadata_line({"config": config_hash}))
        fh.write("generation,n_body_mutations,mean_observed_delta,"
                 "mean_true_delta,survival_rate\n")
        for i, g in enumerate(series.generations):
            fh.write(f"{int(g)},{int(series.n_body_mutations[i])},"
                     f"{float(series.mean_observed_delta[i])!r},"
                     f"{float(series.mean_true_delta[i])!r},"
                     f"{float(series.survival_rate[i])!r}\n")


def write_ruggedness_csv(path, stats: dict, config_hash: str) -> None:
    with open(path, "w") as fh:
        fh.write(_metadata_line({"config": config_hash}))
        fh.write("metric,value\n")
        for key in sorted(stats):
            value = stats[key]
            value = float(value) if isinstance(value, float) else value
            fh.write(f"{key},{value!r}\n")


def write_stats_tests_csv(path, rows: list[tuple], config_hash: str) -> None:
    """Rows are (group_a, group_b, n_a, n_b, MannWhitneyResult)."""
    with open(path, "w") as fh:
        fh.write(_metadata_line({"config": config_hash}))
        fh.write("group_a,group_b,n_a,n_b,u,p\n")
        for ga, gb, na, nb, res in rows:
            fh.write(f"{ga},{gb},{na},{nb},{res.u!r},{res.p!r}\n")
