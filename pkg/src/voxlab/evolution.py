"""Evolutionary engines: AFPO variants and MAP-Elites, with full event logging.

Three search modes share one machinery:

- ``brain_body``: offspring mutate either the morphology or the controller;
  fitness comes from the locomotion episode.
- ``controller_only``: the morphology is fixed, offspring mutate the
  controller only (the mode behind landscape mapping).
- ``morph_only``: offspring mutate the morphology only and fitness comes from
  an oracle table keyed by morphology id; the simulator is never called.

Every run appends newline-delimited JSON events (field order: generation,
kind, parent_lineage, mutation_kind, morphology_id, observed_fitness, extra).
Controller weights are deliberately kept out of the log (they live in
checkpoints and discovery files); the log alone reconstructs population
composition. Replay rules: an AFPO population at generation g is exactly the
``survived`` events of g; a MAP-Elites archive replays procedurally (entrants
via ``survived`` with their niche, displacements via ``niche_replaced``, and
every incumbent's age increments at each generation boundary).
"""

from __future__ import annotations

import json
import pickle
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .controller import (ControllerGenome, controller_from_bytes, controller_to_bytes,
                         INIT_SCALE, mutate_controller, random_controller)
from .evaluation import TaskConfig, evaluate
from .morphology import (MIN_ACTIVE, GridShape, Morphology, morphology_to_id,
                         mutate_morphology, random_viable)

MODES = ("brain_body", "controller_only", "morph_only")
EVENT_KINDS = ("offspring_created", "survived", "eliminated", "niche_replaced",
               "injected")

CHECKPOINT_VERSION = 1


@dataclass
class Individual:
    """One population member; `uid` identifies it across log events."""

    morphology: Morphology
    controller: ControllerGenome
    age: int
    lineage_id: int
    uid: int
    fitness: float | None = None

    def copy(self) -> "Individual":
        return Individual(self.morphology, self.controller, self.age,
                          self.lineage_id, self.uid, self.fitness)


@dataclass(frozen=True, order=True)
class Niche:
    active_count: int
    passive_count: int


def niche_of(m: Morphology) -> Niche:
    return Niche(m.active_count, m.passive_count)


def feasible_niches(shape: GridShape = (3, 3)) -> list[Niche]:
    """All (active, passive) count pairs a viable morphology can realize.

    Any such pair is realizable: fill cells row by row, so the occupied set
    is always connected.
    """
    cells = shape[0] * shape[1]
    return [Niche(a, p)
            for a in range(MIN_ACTIVE, cells + 1)
            for p in range(0, cells - a + 1)]


@dataclass(frozen=True)
class EvolutionEvent:
    generation: int
    kind: str
    parent_lineage: int | None
    mutation_kind: str  # body | brain | none
    morphology_id: int
    observed_fitness: float
    extra: dict

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.mutation_kind not in ("body", "brain", "none"):
            raise ValueError(f"unknown mutation kind {self.mutation_kind!r}")

    def to_json(self) -> str:
        return json.dumps({
            "generation": self.generation,
            "kind": self.kind,
            "parent_lineage": self.parent_lineage,
            "mutation_kind": self.mutation_kind,
            "morphology_id": self.morphology_id,
            "observed_fitness": self.observed_fitness,
            "extra": self.extra,
        }, separators=(",", ":"))

    @staticmethod
    def from_json(line: str) -> "EvolutionEvent":
        d = json.loads(line)
        return EvolutionEvent(d["generation"], d["kind"], d["parent_lineage"],
                              d["mutation_kind"], d["morphology_id"],
                              d["observed_fitness"], d["extra"])


def read_events(path) -> list[EvolutionEvent]:
    with open(path) as fh:
        return [EvolutionEvent.from_json(line) for line in fh if line.strip()]


@dataclass(frozen=True)
class EvolutionConfig:
    mode: str = "brain_body"
    grid: GridShape = (3, 3)
    pop_size: int = 20
    generations: int = 100
    p_body: float | None = None  # None = mode default (0 / 0.5 / 1)
    mutation_sigma: float = 0.1
    init_scale: float = INIT_SCALE
    batch_size: int = 20
    checkpoint_every: int = 100
    task: TaskConfig = field(default_factory=TaskConfig)
    oracle: Mapping[int, float] | None = None
    fixed_morphology: Morphology | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.pop_size < 1 or self.generations < 0 or self.batch_size < 1:
            raise ValueError("pop_size/batch_size must be >= 1, generations >= 0")
        if self.p_body is not None and not 0.0 <= self.p_body <= 1.0:
            raise ValueError("p_body must lie in [0, 1]")
        if self.mode == "morph_only" and self.oracle is None:
            raise ValueError("morph_only mode needs a fitness oracle")
        if self.mode == "controller_only" and self.fixed_morphology is None:
            raise ValueError("controller_only mode needs a fixed morphology")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")

    @property
    def effective_p_body(self) -> float:
        if self.p_body is not None:
            return self.p_body
        return {"controller_only": 0.0, "brain_body": 0.5, "morph_only": 1.0}[self.mode]


class _IdAlloc:
    """Monotonic uid/lineage counters threaded through a run for replayable logs."""

    def __init__(self, next_uid: int = 0, next_lineage: int = 0):
        self.next_uid = next_uid
        self.next_lineage = next_lineage

    def uid(self) -> int:
        u = self.next_uid
        self.next_uid += 1
        return u

    def lineage(self) -> int:
        lin = self.next_lineage
        self.next_lineage += 1
        return lin

    def state(self) -> tuple[int, int]:
        return (self.next_uid, self.next_lineage)


def _fitness_of(config: EvolutionConfig, morph: Morphology,
                ctrl: ControllerGenome) -> float:
    if config.mode == "morph_only":
        key = morphology_to_id(morph)
        if key not in config.oracle:
            raise LookupError(f"fitness oracle has no entry for morphology {key}")
        return float(config.oracle[key])
    return evaluate(morph, ctrl, config.task).fitness


def _fresh_individual(config: EvolutionConfig, rng: np.random.Generator,
                      alloc: _IdAlloc) -> Individual:
    if config.fixed_morphology is not None:
        morph = config.fixed_morphology
    else:
        morph = random_viable(rng, config.grid)
    ctrl = random_controller(rng, config.grid, scale=config.init_scale)
    ind = Individual(morph, ctrl, age=0, lineage_id=alloc.lineage(), uid=alloc.uid())
    ind.fitness = _fitness_of(config, morph, ctrl)
    return ind


def _mutate(parent: Individual, config: EvolutionConfig, rng: np.random.Generator,
            alloc: _IdAlloc) -> tuple[Individual, str]:
    body = rng.random() < config.effective_p_body
    if body:
        morph = mutate_morphology(parent.morphology, rng)
        ctrl = parent.controller
    else:
        morph = parent.morphology
        ctrl = mutate_controller(parent.controller, config.mutation_sigma, rng)
    child = Individual(morph, ctrl, age=parent.age,
                       lineage_id=parent.lineage_id, uid=alloc.uid())
    child.fitness = _fitness_of(config, morph, ctrl)
    return child, ("body" if body else "brain")


def _subject_extra(ind: Individual) -> dict:
    return {"uid": ind.uid, "lineage": ind.lineage_id, "age": ind.age}


def _status_event(generation: int, kind: str, ind: Individual,
                  extra: dict | None = None) -> EvolutionEvent:
    merged = _subject_extra(ind)
    if extra:
        merged.update(extra)
    return EvolutionEvent(generation, kind, None, "none",
                          morphology_to_id(ind.morphology), ind.fitness, merged)


def _offspring_event(generation: int, parent: Individual, child: Individual,
                     mutation_kind: str) -> EvolutionEvent:
    extra = _subject_extra(child)
    extra["parent_uid"] = parent.uid
    return EvolutionEvent(generation, "offspring_created", parent.lineage_id,
                          mutation_kind, morphology_to_id(child.morphology),
                          child.fitness, extra)


CandidateSink = Callable[[Individual, int], None]


def initial_population(config: EvolutionConfig, rng: np.random.Generator,
                       alloc: _IdAlloc | None = None, generation: int = 0,
                       on_candidate: CandidateSink | None = None,
                       ) -> tuple[list[Individual], list[EvolutionEvent]]:
    """Seed a fresh population; every member is logged as injected + survived."""
    alloc = alloc or _IdAlloc()
    pop = []
    for _ in range(config.pop_size):
        ind = _fresh_individual(config, rng, alloc)
        if on_candidate is not None:
            on_candidate(ind, generation)
        pop.append(ind)
    events = [_status_event(generation, "injected", ind) for ind in pop]
    events += [_status_event(generation, "survived", ind) for ind in pop]
    return pop, events


def _dominates(a: Individual, b: Individual) -> bool:
    # Pareto order: minimize age, maximize fitness.
    return (a.age <= b.age and a.fitness >= b.fitness
            and (a.age < b.age or a.fitness > b.fitness))


def _pareto_fronts(candidates: list[Individual]) -> list[list[Individual]]:
    remaining = list(candidates)
    fronts = []
    while remaining:
        front = [x for x in remaining
                 if not any(_dominates(y, x) for y in remaining if y is not x)]
        fronts.append(front)
        kept = {id(x) for x in front}
        remaining = [x for x in remaining if id(x) not in kept]
    return fronts


def _rank_key(ind: Individual):
    # Higher fitness first, then younger, then older lineage; uid is the
    # final deterministic tiebreak.
    return (-ind.fitness, ind.age, ind.lineage_id, ind.uid)


def rank_candidates(candidates: list[Individual]) -> list[Individual]:
    """Total selection order: Pareto fronts in order, each sorted by fitness."""
    ranked = []
    for front in _pareto_fronts(candidates):
        ranked.extend(sorted(front, key=_rank_key))
    return ranked


def afpo_generation(population: list[Individual], config: EvolutionConfig,
                    rng: np.random.Generator, generation: int = 0,
                    alloc: _IdAlloc | None = None,
                    on_candidate: CandidateSink | None = None,
                    ) -> tuple[list[Individual], list[EvolutionEvent]]:
    """One age-fitness Pareto generation.

    Each member produces one offspring (body mutation with probability
    p_body, else brain), one fresh random individual is injected at age 0,
    lineage ages advance, and the pool is truncated back to pop_size by
    Pareto dominance on (min age, max fitness). Within the last admitted
    front ties break by higher fitness, then lower age, then lower
    lineage_id. Offspring inherit their parent's lineage age. The engine
    owns the passed population (survivor ages are advanced in place).
    """
    if len(population) != config.pop_size:
        raise ValueError(f"population size {len(population)} != {config.pop_size}")
    if any(ind.fitness is None for ind in population):
        raise ValueError("population must be fully evaluated")
    alloc = alloc or _IdAlloc(
        next_uid=max(i.uid for i in population) + 1,
        next_lineage=max(i.lineage_id for i in population) + 1)
    events = []

    offspring = []
    for parent in population:
        child, mutation_kind = _mutate(parent, config, rng, alloc)
        if on_candidate is not None:
            on_candidate(child, generation)
        offspring.append(child)
        events.append(_offspring_event(generation, parent, child, mutation_kind))

    injected = _fresh_individual(config, rng, alloc)
    if on_candidate is not None:
        on_candidate(injected, generation)
    events.append(_status_event(generation, "injected", injected))

    # The generation has elapsed for existing lineages; the injection stays 0.
    for ind in population + offspring:
        ind.age += 1

    ranked = rank_candidates(population + offspring + [injected])
    survivors = ranked[:config.pop_size]
    losers = ranked[config.pop_size:]
    events += [_status_event(generation, "survived", ind) for ind in survivors]
    events += [_status_event(generation, "eliminated", ind) for ind in reversed(losers)]
    return survivors, events


def map_elites_generation(archive: dict[Niche, Individual], config: EvolutionConfig,
                          rng: np.random.Generator, generation: int = 0,
                          alloc: _IdAlloc | None = None,
                          on_candidate: CandidateSink | None = None,
                          ) -> tuple[dict[Niche, Individual], list[EvolutionEvent]]:
    """One MAP-Elites batch over the (active_count, passive_count) archive.

    batch_size offspring are produced, each from a uniformly random occupied
    niche's elite (body mutation with probability p_body, else brain). An
    offspring enters the niche of its own morphology iff that niche is empty
    or its fitness is strictly greater than the incumbent's. An empty archive
    bootstraps from fresh random individuals instead. Incumbent lineage ages
    advance by one at the start of each generation.
    """
    incumbents = list(archive.values())
    alloc = alloc or _IdAlloc(
        next_uid=max((i.uid for i in incumbents), default=-1) + 1,
        next_lineage=max((i.lineage_id for i in incumbents), default=-1) + 1)
    archive = dict(archive)
    for ind in archive.values():
        ind.age += 1
    events = []

    for _ in range(config.batch_size):
        occupied = sorted(archive)
        if not occupied:
            child = _fresh_individual(config, rng, alloc)
            if on_candidate is not None:
                on_candidate(child, generation)
            events.append(_status_event(generation, "injected", child))
        else:
            parent = archive[occupied[rng.integers(len(occupied))]]
            child, mutation_kind = _mutate(parent, config, rng, alloc)
            if on_candidate is not None:
                on_candidate(child, generation)
            events.append(_offspring_event(generation, parent, child, mutation_kind))

        niche = niche_of(child.morphology)
        incumbent = archive.get(niche)
        key = [niche.active_count, niche.passive_count]
        if incumbent is None:
            archive[niche] = child
            events.append(_status_event(generation, "survived", child,
                                        {"niche": key}))
        elif child.fitness > incumbent.fitness:
            events.append(_status_event(generation, "niche_replaced", incumbent,
                                        {"niche": key, "by_uid": child.uid}))
            archive[niche] = child
            events.append(_status_event(generation, "survived", child,
                                        {"niche": key}))
        else:
            events.append(_status_event(generation, "eliminated", child,
                                        {"niche": key,
                                         "incumbent_fitness": incumbent.fitness}))
    return archive, events


def controller_search(genome: Morphology, budget: int,
                      config: EvolutionConfig | None = None,
                      rng: np.random.Generator | None = None,
                      ) -> tuple[ControllerGenome, float, np.ndarray]:
    """Controller-only AFPO on a fixed body for `budget` generations.

    Returns the best-ever controller, its fitness, and the running-best
    trace with one entry per generation including the initial population
    (length budget + 1), so the trace is monotone non-decreasing.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    base = config or EvolutionConfig()
    cfg = replace(base, mode="controller_only", grid=genome.shape,
                  fixed_morphology=genome, oracle=None)
    best_ctrl = None
    best_fit = -np.inf

    def remember(ind: Individual, generation: int) -> None:
        nonlocal best_ctrl, best_fit
        if ind.fitness > best_fit:
            best_ctrl, best_fit = ind.controller, ind.fitness

    alloc = _IdAlloc()
    pop, _ = initial_population(cfg, rng, alloc, on_candidate=remember)
    trace = np.empty(budget + 1)
    trace[0] = best_fit
    for g in range(1, budget + 1):
        pop, _ = afpo_generation(pop, cfg, rng, generation=g, alloc=alloc,
                                 on_candidate=remember)
        trace[g] = best_fit
    return best_ctrl, float(best_fit), trace


@dataclass
class RunResult:
    run_dir: Path
    kind: str
    champion: Individual
    champion_generation: int
    generations: int
    config_hash: str
    history: dict[int, frozenset] | None = None


def _population_snapshot(pop: list[Individual]) -> frozenset:
    return frozenset((i.uid, i.lineage_id, i.age, morphology_to_id(i.morphology),
                      i.fitness) for i in pop)


def _archive_snapshot(archive: dict[Niche, Individual]) -> frozenset:
    return frozenset((n.active_count, n.passive_count, i.uid, i.lineage_id, i.age,
                      morphology_to_id(i.morphology), i.fitness)
                     for n, i in archive.items())


def replay_populations(events_path) -> dict[int, frozenset]:
    """Rebuild each generation's AFPO population from the event log."""
    out: dict[int, set] = {}
    with open(events_path) as fh:
        for line in fh:
            ev = EvolutionEvent.from_json(line)
            if ev.kind == "survived":
                e = ev.extra
                out.setdefault(ev.generation, set()).add(
                    (e["uid"], e["lineage"], e["age"], ev.morphology_id,
                     ev.observed_fitness))
    return {g: frozenset(s) for g, s in out.items()}


def replay_archives(events_path) -> dict[int, frozenset]:
    """Rebuild each generation's MAP-Elites archive from the event log.

    Entrants arrive via `survived` (which carries the niche), displaced
    incumbents are overwritten by their replacement's `survived`, and every
    incumbent's lineage age advances by one per generation boundary.
    """
    archive: dict[tuple, list] = {}
    out: dict[int, frozenset] = {}
    current = None

    def snapshot() -> frozenset:
        return frozenset((n[0], n[1], *rec) for n, rec in archive.items())

    with open(events_path) as fh:
        for line in fh:
            ev = EvolutionEvent.from_json(line)
            if current is None:
                current = ev.generation
            while ev.generation > current:
                out[current] = snapshot()
                current += 1
                for rec in archive.values():
                    rec[2] += 1
            if ev.kind == "survived":
                e = ev.extra
                archive[tuple(e["niche"])] = [e["uid"], e["lineage"], e["age"],
                                              ev.morphology_id, ev.observed_fitness]
    if current is not None:
        out[current] = snapshot()
    return out


def _write_champions_csv(run_dir: Path, config_hash: str, rows: list) -> None:
    with open(run_dir / "champions.csv", "w") as fh:
        fh.write(f"# config={config_hash}\n")
        fh.write("generation,champion_fitness,champion_morphology_id,"
                 "gen_best_fitness,gen_best_morphology_id\n")
        for row in rows:
            fh.write("%d,%r,%d,%r,%d\n" % row)


def _write_champion_json(run_dir: Path, kind: str, seed: int, config_hash: str,
                         task_hash: str, grid: GridShape, champion: Individual,
                         champion_generation: int) -> None:
    payload = {
        "kind": kind,
        "seed": seed,
        "config_hash": config_hash,
        "task_hash": task_hash,
        "grid": list(grid),
        "generation_found": champion_generation,
        "fitness": champion.fitness,
        "morphology_id": morphology_to_id(champion.morphology),
        "lineage_id": champion.lineage_id,
        "controller_hex": controller_to_bytes(champion.controller).hex(),
    }
    (run_dir / "champion.json").write_text(json.dumps(payload, indent=1))


def load_champion(run_dir) -> tuple[Morphology, ControllerGenome, float, dict]:
    """Read back a run's champion (morphology, controller, fitness, metadata)."""
    from .morphology import id_to_morphology

    payload = json.loads((Path(run_dir) / "champion.json").read_text())
    grid = tuple(payload["grid"])
    morph = id_to_morphology(payload["morphology_id"], grid)
    ctrl = controller_from_bytes(bytes.fromhex(payload["controller_hex"]), grid)
    return morph, ctrl, payload["fitness"], payload


def run_experiment(kind: str, config: EvolutionConfig, seed: int, out_dir,
                   config_hash: str = "", task_hash: str = "",
                   keep_history: bool = False,
                   stop_after: int | None = None) -> RunResult:
    """Run (or resume) one logged evolution campaign under `out_dir`.

    kind selects the engine: coopt_afpo / morph_only use AFPO generations,
    coopt_mapelites uses MAP-Elites batches. Artifacts: events.ndjson,
    champions.csv (per-generation running best), champion.json, a pickle
    checkpoint every checkpoint_every generations, and (for simulated kinds)
    discoveries.vlnd holding the best observed controller per morphology for
    landscape merging. `config_hash` stamps run outputs; `task_hash`
    identifies the fitness function (task + physics) and is what makes
    fitness values comparable across artifacts. A rerun picks up from the
    last checkpoint, truncating the event log to the checkpointed offset;
    `stop_after` ends the loop early with the checkpoint and log intact (for
    time-boxed runs). The run champion is the best-fitness candidate ever
    evaluated, surviving or not.
    """
    engines = {"coopt_afpo": "afpo", "coopt_mapelites": "mapelites",
               "morph_only": "afpo"}
    if kind not in engines:
        raise ValueError(f"unknown experiment kind {kind!r}")
    if kind == "morph_only" and config.mode != "morph_only":
        raise ValueError("morph_only experiments need an oracle-mode config")
    if kind.startswith("coopt") and config.mode != "brain_body":
        raise ValueError("co-optimization experiments need a brain_body config")
    engine = engines[kind]

    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    events_path = run_dir / "events.ndjson"
    ckpt_path = run_dir / "checkpoint.pkl"

    rng = np.random.default_rng(seed)
    alloc = _IdAlloc()
    discoveries: dict[int, tuple[float, bytes, int]] = {}
    champion_rows: list[tuple] = []
    history: dict[int, frozenset] | None = {} if keep_history else None
    champion: Individual | None = None
    champion_generation = 0
    population: list[Individual] = []
    archive: dict[Niche, Individual] = {}
    start_gen = 0

    if ckpt_path.exists():
        with open(ckpt_path, "rb") as fh:
            ckpt = pickle.load(fh)
        if ckpt["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {ckpt['version']}")
        if ckpt["config_hash"] != config_hash:
            raise ValueError("checkpoint config hash does not match this config")
        rng.bit_generator.state = ckpt["rng_state"]
        alloc = _IdAlloc(*ckpt["alloc"])
        population = ckpt["population"]
        archive = ckpt["archive"]
        discoveries = ckpt["discoveries"]
        champion_rows = ckpt["champion_rows"]
        champion = ckpt["champion"]
        champion_generation = ckpt["champion_generation"]
        history = ckpt["history"] if keep_history else None
        start_gen = ckpt["generation"] + 1
        with open(events_path, "r+") as fh:
            fh.truncate(ckpt["events_offset"])

    def on_candidate(ind: Individual, generation: int) -> None:
        nonlocal champion, champion_generation
        if champion is None or ind.fitness > champion.fitness:
            champion = ind.copy()
            champion_generation = generation
        if kind != "morph_only":
            mid = morphology_to_id(ind.morphology)
            prev = discoveries.get(mid)
            if prev is None or ind.fitness > prev[0]:
                discoveries[mid] = (ind.fitness,
                                    controller_to_bytes(ind.controller), generation)

    def record_generation(generation: int) -> None:
        pool = population if engine == "afpo" else list(archive.values())
        gen_best = max(pool, key=lambda i: i.fitness)
        champion_rows.append((generation, champion.fitness,
                              morphology_to_id(champion.morphology),
                              gen_best.fitness,
                              morphology_to_id(gen_best.morphology)))
        if history is not None:
            history[generation] = (_population_snapshot(population)
                                   if engine == "afpo"
                                   else _archive_snapshot(archive))

    def checkpoint(generation: int, fh) -> None:
        fh.flush()
        state = {
            "version": CHECKPOINT_VERSION, "kind": kind,
            "config_hash": config_hash, "generation": generation,
            "rng_state": rng.bit_generator.state, "alloc": alloc.state(),
            "population": population, "archive": archive,
            "discoveries": discoveries, "champion_rows": champion_rows,
            "champion": champion, "champion_generation": champion_generation,
            "history": history, "events_offset": fh.tell(),
        }
        tmp = ckpt_path.with_suffix(".tmp")
        with open(tmp, "wb") as cfh:
            pickle.dump(state, cfh)
        tmp.replace(ckpt_path)

    last_gen = config.generations if stop_after is None else min(
        config.generations, stop_after)

    with open(events_path, "a") as fh:
        for generation in range(start_gen, last_gen + 1):
            if generation == 0:
                if engine == "afpo":
                    population, events = initial_population(
                        config, rng, alloc, on_candidate=on_candidate)
                else:
                    archive, events = map_elites_generation(
                        {}, config, rng, 0, alloc, on_candidate=on_candidate)
            elif engine == "afpo":
                population, events = afpo_generation(
                    population, config, rng, generation, alloc,
                    on_candidate=on_candidate)
            else:
                archive, events = map_elites_generation(
                    archive, config, rng, generation, alloc,
                    on_candidate=on_candidate)
            record_generation(generation)
            for ev in events:
                fh.write(ev.to_json() + "\n")
            if generation % config.checkpoint_every == 0 or generation == last_gen:
                checkpoint(generation, fh)

    _write_champions_csv(run_dir, config_hash, champion_rows)
    _write_champion_json(run_dir, kind, seed, config_hash, task_hash,
                         config.grid, champion, champion_generation)
    if kind != "morph_only" and discoveries:
        from .landscape import write_discoveries  # deferred: avoids module cycle

        write_discoveries(run_dir / "discoveries.vlnd", discoveries,
                          grid=config.grid, task_hash=task_hash)
    return RunResult(run_dir=run_dir, kind=kind, champion=champion,
                     champion_generation=champion_generation,
                     generations=last_gen, config_hash=config_hash,
                     history=history)
