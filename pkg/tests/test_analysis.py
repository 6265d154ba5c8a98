import json
import math
import statistics

import numpy as np
import pytest
from scipy import stats

from voxlab import analysis as A
from voxlab.analysis import (ChampionDiagnostics, GroupStats,
                             MutationEffectSeries, average_ranks,
                             champion_diagnostics, distribution_report,
                             mann_whitney_u, mutation_effects,
                             ranking_correlation, spearman,
                             write_champions_csv, write_distribution_csv,
                             write_mutation_csv, write_ranking_csv)
from voxlab.controller import zero_controller
from voxlab.evolution import EvolutionEvent
from voxlab.landscape import Landscape, LandscapeRecord
from voxlab.morphology import enumerate_viable, id_to_morphology, neighbor_ids

GRID = (2, 2)
IDS = [int(i) for i in enumerate_viable(GRID)]
CTRL = zero_controller(GRID)


def synthetic(fits, task_hash="TH"):
    return Landscape(records={i: LandscapeRecord(id=i, best_fitness=float(f),
                                                 controller=CTRL,
                                                 budget_generations=30)
                              for i, f in zip(IDS, fits)},
                     grid=GRID, task_hash=task_hash)


# ---------------------------------------------------------------------------
# rank statistics vs independent oracles
# ---------------------------------------------------------------------------

def test_average_ranks_match_scipy():
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = rng.integers(0, 8, size=rng.integers(2, 40)).astype(float)
        assert np.allclose(average_ranks(x), stats.rankdata(x), atol=1e-12)


def test_spearman_identical_and_reversed():
    x = [3.0, 1.0, 4.0, 1.5, 9.0]
    assert spearman(x, x) == pytest.approx(1.0, abs=1e-12)
    ranks = average_ranks(x)
    assert spearman(x, -np.asarray(x)) == pytest.approx(-1.0, abs=1e-12)


def test_spearman_hand_example():
    xs = (1, 2, 3, 4, 5)
    ys = (2, 1, 4, 3, 5)
    # independent oracle: rank by sorting, then textbook Pearson
    rx = [sorted(xs).index(v) + 1 for v in xs]
    ry = [sorted(ys).index(v) + 1 for v in ys]
    mx, my = sum(rx) / 5, sum(ry) / 5
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = math.sqrt(sum((a - mx) ** 2 for a in rx)
                    * sum((b - my) ** 2 for b in ry))
    assert spearman(xs, ys) == pytest.approx(num / den, abs=1e-12)


@pytest.mark.filterwarnings("ignore::scipy.stats.ConstantInputWarning")
def test_spearman_matches_scipy_with_ties():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = int(rng.integers(2, 30))
        x = rng.integers(0, 6, size=n).astype(float)
        y = rng.normal(size=n)
        got = spearman(x, y)
        want = stats.spearmanr(x, y).statistic
        if math.isnan(want):
            assert math.isnan(got)
        else:
            assert got == pytest.approx(want, abs=1e-12)


def test_spearman_constant_input_is_reported_as_nan():
    assert math.isnan(spearman([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]))
    assert math.isnan(spearman([1.0, 2.0, 3.0], [5.0, 5.0, 5.0]))


def test_spearman_invariant_under_monotone_transforms():
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = rng.normal(size=15)
        y = rng.normal(size=15)
        base = spearman(x, y)
        assert spearman(np.exp(x), y) == base
        assert spearman(x, y ** 3) == base
        assert spearman(2.0 * x + 7.0, 1.0 / (1.0 + np.exp(-y))) == \
            pytest.approx(base, abs=1e-12)


def test_spearman_validation():
    with pytest.raises(ValueError):
        spearman([1.0], [2.0])
    with pytest.raises(ValueError):
        spearman([1.0, 2.0], [1.0, 2.0, 3.0])


# ---------------------------------------------------------------------------
# Mann-Whitney U
# ---------------------------------------------------------------------------

def oracle_u(a, b):
    return sum((x > y) + 0.5 * (x == y) for x in a for y in b)


def test_u_hand_examples():
    assert mann_whitney_u([1, 2, 3], [4, 5, 6]).u == 0.0
    assert mann_whitney_u([1, 3, 5], [2, 4, 6]).u == oracle_u([1, 3, 5],
                                                              [2, 4, 6])


def test_u_matches_pairwise_count_oracle():
    rng = np.random.default_rng(3)
    for _ in range(100):
        a = rng.integers(0, 10, size=rng.integers(1, 20)).astype(float)
        b = rng.integers(0, 10, size=rng.integers(1, 20)).astype(float)
        assert mann_whitney_u(a, b).u == pytest.approx(oracle_u(a, b),
                                                       abs=1e-12)


def test_u_complement_identity_tie_free():
    rng = np.random.default_rng(4)
    for _ in range(50):
        n, m = int(rng.integers(1, 25)), int(rng.integers(1, 25))
        pool = rng.permutation(np.arange(n + m, dtype=float))
        a, b = pool[:n], pool[n:]
        assert mann_whitney_u(a, b).u + mann_whitney_u(b, a).u == n * m


def test_identical_samples_give_p_one():
    a = [2.0, 4.0, 4.0, 7.0]
    res = mann_whitney_u(a, a)
    assert res.p == pytest.approx(1.0, abs=0.05)


def test_p_matches_scipy_asymptotic():
    rng = np.random.default_rng(5)
    checked = 0
    for _ in range(100):
        n, m = int(rng.integers(15, 40)), int(rng.integers(15, 40))
        a = rng.integers(0, 12, size=n).astype(float)
        b = rng.integers(2, 14, size=m).astype(float)
        got = mann_whitney_u(a, b)
        want = stats.mannwhitneyu(a, b, alternative="two-sided",
                                  method="asymptotic")
        assert got.u == want.statistic
        assert got.p == pytest.approx(want.pvalue, abs=1e-12)
        assert 0.0 <= got.p <= 1.0
        checked += 1
    assert checked == 100


def test_p_matches_scipy_exact_for_small_tie_free():
    rng = np.random.default_rng(6)
    for _ in range(60):
        n, m = int(rng.integers(2, 12)), int(rng.integers(2, 12))
        pool = rng.permutation(np.arange(n + m, dtype=float))
        a, b = pool[:n], pool[n:]
        got = mann_whitney_u(a, b)
        want = stats.mannwhitneyu(a, b, alternative="two-sided",
                                  method="exact")
        assert got.p == pytest.approx(want.pvalue, abs=1e-12)


def test_u_rejects_empty():
    with pytest.raises(ValueError):
        mann_whitney_u([], [1.0])
    with pytest.raises(ValueError):
        mann_whitney_u([1.0], [])


# ---------------------------------------------------------------------------
# ranking correlation curves
# ---------------------------------------------------------------------------

def static_traces(n=20, length=6, seed=7):
    rng = np.random.default_rng(seed)
    finals = rng.normal(size=n)
    return {IDS[i]: np.linspace(finals[i] - 1.0, finals[i], length)
            for i in range(n)}


def test_static_ranking_gives_constant_one():
    curve = ranking_correlation(static_traces(), 1.0)
    assert np.allclose(curve.rhos, 1.0, atol=1e-12)


def test_final_generation_is_self_correlation():
    rng = np.random.default_rng(8)
    traces = {IDS[i]: np.sort(rng.normal(size=5)) for i in range(12)}
    curve = ranking_correlation(traces, 1.0)
    assert curve.rhos[-1] == pytest.approx(1.0, abs=1e-12)


def test_known_crossover_point():
    """Two groups swap order at generation k; rho is imperfect before k."""
    k, length, n = 3, 6, 10
    traces = {}
    for i in range(n):
        tr = np.empty(length)
        tr[:k] = i  # early ranking: ascending by i
        tr[k:] = n - i  # final ranking: reversed
        traces[IDS[i]] = tr
    curve = ranking_correlation(traces, 1.0)
    assert np.allclose(curve.rhos[:k], -1.0, atol=1e-12)
    assert np.allclose(curve.rhos[k:], 1.0, atol=1e-12)
    # direct recomputation of one interior point
    mat = np.array([traces[i] for i in sorted(traces)])
    assert curve.rhos[1] == spearman(mat[:, 1], mat[:, -1])


def test_top_fraction_filter_selects_best_finals():
    traces = static_traces(n=20)
    curve = ranking_correlation(traces, 0.25)
    assert len(curve.selected_ids) == 5
    finals = {i: traces[i][-1] for i in traces}
    cutoff = sorted(finals.values(), reverse=True)[4]
    assert all(finals[i] >= cutoff for i in curve.selected_ids)


def test_ranking_correlation_validation():
    traces = static_traces(n=10)
    with pytest.raises(ValueError):
        ranking_correlation(traces, 0.0)
    with pytest.raises(ValueError):
        ranking_correlation(traces, 0.05)  # 0.5 morphologies -> < 2
    with pytest.raises(ValueError):
        ranking_correlation({}, 1.0)
    bad = dict(traces)
    bad[IDS[11]] = np.zeros(3)
    with pytest.raises(ValueError):
        ranking_correlation(bad, 1.0)


# ---------------------------------------------------------------------------
# champion diagnostics
# ---------------------------------------------------------------------------

def fake_run(tmp_path, name, mid, kind="coopt_afpo", task_hash="TH"):
    d = tmp_path / name
    d.mkdir()
    (d / "champion.json").write_text(json.dumps({
        "kind": kind, "seed": 0, "config_hash": "CH", "task_hash": task_hash,
        "grid": [2, 2], "generation_found": 1, "fitness": 0.0,
        "morphology_id": mid, "lineage_id": 0,
        "controller_hex": __import__("voxlab.controller", fromlist=["x"]
                                     ).controller_to_bytes(CTRL).hex()}))
    return d


def test_global_max_champion_is_fixed_point(tmp_path):
    rng = np.random.default_rng(9)
    ls = synthetic(rng.normal(size=len(IDS)))
    run = fake_run(tmp_path, "run-0", ls.global_max_id())
    (diag,) = champion_diagnostics([run], ls)
    assert diag.is_local_max and diag.basin_distance == 0
    assert diag.true_fitness == ls.records[ls.global_max_id()].best_fitness


def test_basin_distance_matches_walk(tmp_path):
    from voxlab.landscape import hill_climb_basin
    rng = np.random.default_rng(10)
    ls = synthetic(rng.normal(size=len(IDS)))
    runs = [fake_run(tmp_path, f"run-{k}", IDS[k * 9]) for k in range(6)]
    for diag, k in zip(champion_diagnostics(runs, ls), range(6)):
        _, steps = hill_climb_basin(IDS[k * 9], ls)
        assert diag.basin_distance == steps
        assert diag.is_local_max == (steps == 0)


def test_champion_missing_from_landscape_is_hard_error(tmp_path):
    ls = synthetic(np.zeros(len(IDS)))
    run = fake_run(tmp_path, "run-0", 0)  # empty grid: not a viable id
    with pytest.raises(ValueError, match="missing"):
        champion_diagnostics([run], ls)


def test_champion_task_hash_mismatch_is_error(tmp_path):
    ls = synthetic(np.zeros(len(IDS)))
    run = fake_run(tmp_path, "run-0", IDS[0], task_hash="OTHER")
    with pytest.raises(ValueError, match="hash"):
        champion_diagnostics([run], ls)


def test_diagnostics_invariant_enforced():
    with pytest.raises(ValueError):
        ChampionDiagnostics("r", "coopt_afpo", 1, 0.0, True, 3)


# ---------------------------------------------------------------------------
# mutation effects from a hand-built log
# ---------------------------------------------------------------------------

def ev(gen, kind, mid, fit, uid, parent_lineage=None, mutation="none", **extra):
    payload = {"uid": uid, "lineage": extra.pop("lineage", 0),
               "age": extra.pop("age", 0)}
    payload.update(extra)
    return EvolutionEvent(gen, kind, parent_lineage, mutation, mid, fit,
                          payload)


def test_mutation_effects_hand_fixture():
    """3 generations, 2 lineages; every aggregate checked by hand.

    Landscape fitness used below: id IDS[0] -> 0.0, IDS[1] -> 1.0,
    IDS[2] -> 2.0, IDS[3] -> 3.0, rest ascending by index.
    """
    ls = synthetic(np.arange(len(IDS), dtype=float))
    m = IDS
    events = [
        ev(0, "injected", m[0], 0.10, uid=0),
        ev(0, "injected", m[1], 0.20, uid=1),
        ev(0, "survived", m[0], 0.10, uid=0),
        ev(0, "survived", m[1], 0.20, uid=1),
        # gen 1: one body mutation (uid 2), one brain mutation (uid 3)
        ev(1, "offspring_created", m[2], 0.50, uid=2, parent_lineage=0,
           mutation="body", parent_uid=0),
        ev(1, "offspring_created", m[1], 0.15, uid=3, parent_lineage=1,
           mutation="brain", parent_uid=1),
        ev(1, "survived", m[2], 0.50, uid=2),
        ev(1, "survived", m[1], 0.20, uid=1),
        ev(1, "eliminated", m[0], 0.10, uid=0),
        ev(1, "eliminated", m[1], 0.15, uid=3),
        # gen 2: two body mutations; uid 4 survives, uid 5 does not
        ev(2, "offspring_created", m[3], 0.60, uid=4, parent_lineage=0,
           mutation="body", parent_uid=2),
        ev(2, "offspring_created", m[0], 0.05, uid=5, parent_lineage=1,
           mutation="body", parent_uid=1),
        ev(2, "survived", m[3], 0.60, uid=4),
        ev(2, "survived", m[2], 0.50, uid=2),
        ev(2, "eliminated", m[0], 0.05, uid=5),
        ev(2, "eliminated", m[1], 0.20, uid=1),
        # gen 3: no body mutations at all
        ev(3, "offspring_created", m[2], 0.55, uid=6, parent_lineage=0,
           mutation="brain", parent_uid=2),
        ev(3, "survived", m[2], 0.55, uid=6),
        ev(3, "survived", m[3], 0.60, uid=4),
    ]
    series = mutation_effects(events, ls)
    assert list(series.generations) == [1, 2, 3]
    assert list(series.n_body_mutations) == [1, 2, 0]
    # gen 1: observed 0.50-0.10, true fit(m2)-fit(m0) = 2-0
    assert series.mean_observed_delta[0] == pytest.approx(0.40)
    assert series.mean_true_delta[0] == pytest.approx(2.0)
    # survivors gen 1 = {m2: 2.0, m1: 1.0}; floor 1.0; uid 2 exceeds (2>1)
    # and survived -> rate 1/1
    assert series.survival_rate[0] == 1.0
    # gen 2: observed deltas (0.60-0.50, 0.05-0.20); true (3-2, 0-1)
    assert series.mean_observed_delta[1] == pytest.approx((0.10 - 0.15) / 2)
    assert series.mean_true_delta[1] == pytest.approx((1.0 - 1.0) / 2)
    # survivors gen 2 = {m3: 3, m2: 2}; floor 2; only uid 4 (3 > 2) counts
    assert series.survival_rate[1] == 1.0
    # gen 3: vacuous
    assert math.isnan(series.mean_observed_delta[2])
    assert math.isnan(series.mean_true_delta[2])
    assert math.isnan(series.survival_rate[2])


def test_mutation_effects_counts_discarded_competitive_offspring():
    ls = synthetic(np.arange(len(IDS), dtype=float))
    m = IDS
    events = [
        ev(0, "injected", m[0], 0.1, uid=0),
        ev(0, "survived", m[0], 0.1, uid=0),
        # landscape says m[5] beats every survivor, but selection dropped it
        ev(1, "offspring_created", m[5], 0.2, uid=1, parent_lineage=0,
           mutation="body", parent_uid=0),
        ev(1, "survived", m[0], 0.1, uid=0),
        ev(1, "eliminated", m[5], 0.2, uid=1),
    ]
    series = mutation_effects(events, ls)
    assert series.survival_rate[0] == 0.0


def test_mutation_effects_requires_parent_linkage():
    ls = synthetic(np.zeros(len(IDS)))
    events = [
        ev(0, "injected", IDS[0], 0.1, uid=0),
        ev(1, "offspring_created", IDS[1], 0.2, uid=1, parent_lineage=0,
           mutation="body"),
    ]
    with pytest.raises(ValueError, match="parent"):
        mutation_effects(events, ls)


def test_mutation_effects_never_simulates(monkeypatch, tmp_path):
    from voxlab import evolution as E
    from voxlab.evolution import EvolutionConfig, run_experiment
    from voxlab.evaluation import TaskConfig
    cfg = EvolutionConfig(mode="brain_body", grid=GRID, pop_size=5,
                          generations=4,
                          task=TaskConfig(episode_control_steps=5))
    run_experiment("coopt_afpo", cfg, seed=3, out_dir=tmp_path,
                   config_hash="CH", task_hash="TH")
    monkeypatch.setattr(E, "evaluate",
                        lambda *a, **k: (_ for _ in ()).throw(AssertionError))
    rng = np.random.default_rng(11)
    ls = synthetic(rng.normal(size=len(IDS)))
    series = mutation_effects(tmp_path / "events.ndjson", ls)
    assert series.generations.size == 4
    valid = series.survival_rate[~np.isnan(series.survival_rate)]
    assert ((valid >= 0.0) & (valid <= 1.0)).all()


# ---------------------------------------------------------------------------
# distribution tables
# ---------------------------------------------------------------------------

def one_pass_oracle(values):
    count, total = 0, 0.0
    lo, hi = math.inf, -math.inf
    for v in values:
        count += 1
        total += v
        lo, hi = min(lo, v), max(hi, v)
    q1, med, q3 = statistics.quantiles(values, n=4, method="inclusive")
    return count, total / count, med, q1, q3, lo, hi


def test_distribution_report_matches_accumulation_oracle():
    rng = np.random.default_rng(12)
    ls = synthetic(rng.normal(size=len(IDS)))
    (g,) = distribution_report(ls, "none")
    count, mean, med, q1, q3, lo, hi = one_pass_oracle(
        [r.best_fitness for r in ls.records.values()])
    assert g.label == "all" and g.count == count == len(IDS)
    assert g.mean == pytest.approx(mean, abs=1e-12)
    assert g.median == pytest.approx(med, abs=1e-12)
    assert g.q1 == pytest.approx(q1, abs=1e-12)
    assert g.q3 == pytest.approx(q3, abs=1e-12)
    assert (g.min, g.max) == (lo, hi)


def test_distribution_by_active_count():
    rng = np.random.default_rng(13)
    ls = synthetic(rng.normal(size=len(IDS)))
    groups = distribution_report(ls, "active_count")
    by_count = {}
    for i in IDS:
        m = id_to_morphology(i, GRID)
        by_count.setdefault(m.active_count, []).append(
            ls.records[i].best_fitness)
    assert [g.label for g in groups] == [str(k) for k in sorted(by_count)]
    for g in groups:
        vals = by_count[int(g.label)]
        assert g.count == len(vals)
        assert g.mean == pytest.approx(np.mean(vals), abs=1e-12)
    assert sum(g.count for g in groups) == len(IDS)


def test_distribution_by_active_fraction_custom_bins():
    rng = np.random.default_rng(14)
    ls = synthetic(rng.normal(size=len(IDS)))
    groups = distribution_report(ls, "active_fraction",
                                 bins=[0.0, 0.5, 0.9, 1.0])
    assert [g.label for g in groups] == ["[0,0.5)", "[0.5,0.9)", "[0.9,1]"]
    assert sum(g.count for g in groups) == len(IDS)
    fractions = []
    for i in IDS:
        m = id_to_morphology(i, GRID)
        fractions.append(m.active_count / m.filled_count)
    assert groups[2].count == sum(f >= 0.9 for f in fractions)


def test_distribution_validation():
    ls = synthetic(np.zeros(len(IDS)))
    with pytest.raises(ValueError):
        distribution_report(ls, "colour")
    del ls.records[IDS[0]]
    with pytest.raises(ValueError):
        distribution_report(ls, "none")


# ---------------------------------------------------------------------------
# CSV contract
# ---------------------------------------------------------------------------

def test_csv_writers_emit_metadata_and_reparsable_floats(tmp_path):
    rng = np.random.default_rng(15)
    ls = synthetic(rng.normal(size=len(IDS)))
    groups = distribution_report(ls, "active_count")
    p = tmp_path / "dist.csv"
    write_distribution_csv(p, groups, "CH", "active_count")
    lines = p.read_text().splitlines()
    assert lines[0] == "# config=CH group_by=active_count"
    assert lines[1] == "group,count,mean,median,q1,q3,min,max"
    got = [float(line.split(",")[2]) for line in lines[2:]]
    assert got == [g.mean for g in groups]

    curves = [ranking_correlation(static_traces(), f) for f in (1.0, 0.5)]
    p = tmp_path / "rank.csv"
    write_ranking_csv(p, curves, "CH")
    lines = p.read_text().splitlines()
    assert lines[1] == "fraction,generation,rho,n_selected"
    assert len(lines) == 2 + sum(len(c.rhos) for c in curves)

    diags = [ChampionDiagnostics("run-0", "coopt_afpo", IDS[0], 1.5, True, 0)]
    p = tmp_path / "champ.csv"
    write_champions_csv(p, diags, "CH", threshold=1.0)
    lines = p.read_text().splitlines()
    assert lines[0] == "# config=CH threshold=1.0"
    assert lines[2].endswith(",1,0,1")  # local max, distance 0, near-optimal

    series = MutationEffectSeries(
        generations=np.array([1]), n_body_mutations=np.array([0]),
        mean_observed_delta=np.array([float("nan")]),
        mean_true_delta=np.array([float("nan")]),
        survival_rate=np.array([float("nan")]))
    p = tmp_path / "mut.csv"
    write_mutation_csv(p, series, "CH")
    row = p.read_text().splitlines()[2].split(",")
    assert math.isnan(float(row[2])) and math.isnan(float(row[4]))
