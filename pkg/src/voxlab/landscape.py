"""Morphology-fitness dataset: mapping harness, binary storage, merging, and
graph-structural queries (local maxima, basins, distances).

Storage is little-endian binary with a versioned magic header:

- ``VLND`` landscape/discovery files: a fixed-width record table (id u32,
  fitness f64, budget u32, source u8, updated_at i64, heap offset u64)
  followed by a controller heap of equal-sized blobs.
- ``VTRC`` trace files: per morphology, the running-best fitness per search
  generation (budget + 1 doubles).
- ``VPRT`` shard progress files: self-delimiting chunks appended as
  morphologies finish, so an interrupted shard resumes per id; finalizing a
  shard rewrites it as VLND + VTRC and removes the progress file.

Every file carries the task hash (fitness-function identity); merging
refuses mismatched hashes because their fitness values are incomparable.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .controller import ControllerGenome, controller_from_bytes, controller_to_bytes
from .evolution import EvolutionConfig, controller_search
from .morphology import (GridShape, bfs_distances, enumerate_viable,
                         id_to_morphology, neighbor_ids, viability_table,
                         viable_count)

MAGIC_LANDSCAPE = b"VLND"
MAGIC_TRACES = b"VTRC"
MAGIC_PROGRESS = b"VPRT"
FORMAT_VERSION = 1

SOURCES = ("mapping", "coopt_update")

_RECORD = struct.Struct("<IdIBqQ")  # id, fitness, budget, source, updated, offset
_CHUNK_HEAD = struct.Struct("<IdIBqII")  # record fields + ctrl/trace byte lengths


@dataclass(frozen=True)
class LandscapeRecord:
    id: int
    best_fitness: float
    controller: ControllerGenome
    budget_generations: int
    source: str = "mapping"
    updated_at_generation: int | None = None

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")


@dataclass
class Landscape:
    records: dict[int, LandscapeRecord]
    grid: GridShape
    task_hash: str = ""

    def __len__(self) -> int:
        return len(self.records)

    def fitness_of(self, morphology_id: int) -> float:
        return self.records[morphology_id].best_fitness

    def fitness_table(self) -> dict[int, float]:
        """Oracle mapping for morphology-only evolution."""
        return {i: r.best_fitness for i, r in self.records.items()}

    def is_complete(self) -> bool:
        return len(self.records) == viable_count(self.grid)

    def require_complete(self) -> None:
        if not self.is_complete():
            raise ValueError(
                f"landscape has {len(self.records)} of "
                f"{viable_count(self.grid)} viable morphologies")

    def global_extremes(self) -> tuple[float, float]:
        fits = [r.best_fitness for r in self.records.values()]
        return max(fits), min(fits)

    def global_max_id(self) -> int:
        """Best morphology id; exact fitness ties go to the lowest id."""
        best = max(r.best_fitness for r in self.records.values())
        return min(i for i, r in self.records.items() if r.best_fitness == best)


@dataclass(frozen=True)
class NearOptimalityConfig:
    fraction: float = 0.15

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("fraction must lie in [0, 1]")

    def threshold(self, global_max: float, global_min: float) -> float:
        """Fitness cutoff keeping the top `fraction` of the fitness range."""
        return (global_max - global_min) * (1.0 - self.fraction) + global_min


def _pack_str(s: str) -> bytes:
    raw = s.encode()
    return struct.pack("<H", len(raw)) + raw


def _read_str(fh) -> str:
    (n,) = struct.unpack("<H", fh.read(2))
    return fh.read(n).decode()


def _check_magic(fh, magic: bytes, path) -> None:
    got = fh.read(4)
    if got != magic:
        raise ValueError(f"{path}: expected {magic!r} file, found {got!r}")
    (version,) = struct.unpack("<B", fh.read(1))
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")


def save_landscape(path, landscape: Landscape) -> None:
    """Write records sorted by id; output bytes depend only on the contents."""
    path = Path(path)
    rows, cols = landscape.grid
    ids = sorted(landscape.records)
    blobs = [controller_to_bytes(landscape.records[i].controller) for i in ids]
    ctrl_size = len(blobs[0]) if blobs else 0
    if any(len(b) != ctrl_size for b in blobs):
        raise ValueError("controller blobs must share one size per landscape")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC_LANDSCAPE)
        fh.write(struct.pack("<BBB", FORMAT_VERSION, rows, cols))
        fh.write(_pack_str(landscape.task_hash))
        fh.write(struct.pack("<QQ", len(ids), ctrl_size))
        for off, i in enumerate(ids):
            r = landscape.records[i]
            upd = -1 if r.updated_at_generation is None else r.updated_at_generation
            fh.write(_RECORD.pack(r.id, r.best_fitness, r.budget_generations,
                                  SOURCES.index(r.source), upd, off * ctrl_size))
        for blob in blobs:
            fh.write(blob)
    tmp.replace(path)


def load_landscape(path) -> Landscape:
    path = Path(path)
    with open(path, "rb") as fh:
        _check_magic(fh, MAGIC_LANDSCAPE, path)
        rows, cols = struct.unpack("<BB", fh.read(2))
        task_hash = _read_str(fh)
        count, ctrl_size = struct.unpack("<QQ", fh.read(16))
        raw = [_RECORD.unpack(fh.read(_RECORD.size)) for _ in range(count)]
        heap = fh.read(count * ctrl_size)
    grid = (rows, cols)
    records = {}
    for mid, fitness, budget, source, upd, off in raw:
        ctrl = controller_from_bytes(heap[off:off + ctrl_size], grid)
        records[mid] = LandscapeRecord(
            id=mid, best_fitness=fitness, controller=ctrl,
            budget_generations=budget, source=SOURCES[source],
            updated_at_generation=None if upd < 0 else upd)
    return Landscape(records=records, grid=grid, task_hash=task_hash)


def save_traces(path, traces: dict[int, np.ndarray], grid: GridShape,
                budget: int, task_hash: str) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC_TRACES)
        fh.write(struct.pack("<BBB", FORMAT_VERSION, grid[0], grid[1]))
        fh.write(_pack_str(task_hash))
        fh.write(struct.pack("<IQ", budget, len(traces)))
        for mid in sorted(traces):
            trace = np.asarray(traces[mid], dtype=np.float64)
            if trace.shape != (budget + 1,):
                raise ValueError(f"trace for {mid} must have {budget + 1} entries")
            fh.write(struct.pack("<I", mid))
            fh.write(trace.tobytes())
    tmp.replace(path)


def load_traces(path) -> tuple[dict[int, np.ndarray], int, str]:
    path = Path(path)
    with open(path, "rb") as fh:
        _check_magic(fh, MAGIC_TRACES, path)
        fh.read(2)  # grid, implied by caller's manifest
        task_hash = _read_str(fh)
        budget, count = struct.unpack("<IQ", fh.read(12))
        traces = {}
        for _ in range(count):
            (mid,) = struct.unpack("<I", fh.read(4))
            traces[mid] = np.frombuffer(fh.read(8 * (budget + 1)), dtype="<f8").copy()
    return traces, budget, task_hash


def write_discoveries(path, discoveries: dict[int, tuple[float, bytes, int]],
                      grid: GridShape, task_hash: str) -> None:
    """Persist a run's best-observed (fitness, controller) per morphology."""
    records = {}
    for mid, (fitness, blob, generation) in discoveries.items():
        records[mid] = LandscapeRecord(
            id=mid, best_fitness=fitness,
            controller=controller_from_bytes(blob, grid),
            budget_generations=0, source="coopt_update",
            updated_at_generation=generation)
    save_landscape(path, Landscape(records=records, grid=grid,
                                   task_hash=task_hash))


def merge_update(base: Landscape, updates: Landscape) -> tuple[Landscape, int]:
    """Keep the max-fitness record per morphology (union of both key sets).

    Returns the merged landscape and the number of records added or strictly
    improved relative to `base`. Hard error on task-hash mismatch: such
    fitness values are not comparable.
    """
    if base.task_hash != updates.task_hash:
        raise ValueError(
            f"task hash mismatch: {base.task_hash!r} vs {updates.task_hash!r}")
    if base.grid != updates.grid:
        raise ValueError("grid mismatch between landscapes")
    merged = dict(base.records)
    improved = 0
    for mid, rec in updates.records.items():
        old = merged.get(mid)
        if old is None or rec.best_fitness > old.best_fitness:
            merged[mid] = rec
            improved += 1
    return Landscape(records=merged, grid=base.grid,
                     task_hash=base.task_hash), improved


def _search_task(args) -> tuple[int, float, bytes, bytes]:
    mid, grid, budget, seed_base, config = args
    genome = id_to_morphology(mid, grid)
    rng = np.random.default_rng(np.random.SeedSequence(
        entropy=seed_base, spawn_key=(mid,)))
    ctrl, fitness, trace = controller_search(genome, budget, config, rng)
    return mid, fitness, controller_to_bytes(ctrl), trace.tobytes()


def _read_progress(path, grid: GridShape, budget: int, task_hash: str):
    """Load finished chunks from a shard progress file, dropping a torn tail."""
    records: dict[int, LandscapeRecord] = {}
    traces: dict[int, np.ndarray] = {}
    good = 0
    with open(path, "rb") as fh:
        _check_magic(fh, MAGIC_PROGRESS, path)
        rows, cols = struct.unpack("<BB", fh.read(2))
        stored_hash = _read_str(fh)
        (stored_budget,) = struct.unpack("<I", fh.read(4))
        if (rows, cols) != grid or stored_budget != budget or stored_hash != task_hash:
            raise ValueError(f"{path}: progress file does not match this mapping")
        good = fh.tell()
        while True:
            head = fh.read(_CHUNK_HEAD.size)
            if len(head) < _CHUNK_HEAD.size:
                break
            mid, fitness, bgt, source, upd, ctrl_len, trace_len = \
                _CHUNK_HEAD.unpack(head)
            blob = fh.read(ctrl_len)
            raw_trace = fh.read(trace_len)
            if len(blob) < ctrl_len or len(raw_trace) < trace_len:
                break
            records[mid] = LandscapeRecord(
                id=mid, best_fitness=fitness,
                controller=controller_from_bytes(blob, grid),
                budget_generations=bgt, source=SOURCES[source],
                updated_at_generation=None if upd < 0 else upd)
            traces[mid] = np.frombuffer(raw_trace, dtype="<f8").copy()
            good = fh.tell()
    return records, traces, good


def _append_chunk(fh, mid: int, fitness: float, budget: int,
                  ctrl_blob: bytes, trace_blob: bytes) -> None:
    fh.write(_CHUNK_HEAD.pack(mid, fitness, budget, SOURCES.index("mapping"),
                              -1, len(ctrl_blob), len(trace_blob)))
    fh.write(ctrl_blob)
    fh.write(trace_blob)
    fh.flush()


def shard_name(ids) -> str:
    return f"shard-{int(ids[0]):08d}-{int(ids[-1]):08d}"


def map_shard(ids, budget: int, config: EvolutionConfig, seed_base: int,
              out_dir, task_hash: str = "",
              workers: int = 1) -> tuple[Landscape, int]:
    """Estimate true fitness for every id in `ids` by controller search.

    Each morphology uses an independent seed derived from (seed_base, id),
    so shard layout and worker count never change results. Finished
    morphologies are appended to a progress file as they complete; rerunning
    a finished or partial shard performs searches only for missing ids.
    Returns the shard landscape and the number of new searches performed.
    """
    ids = [int(i) for i in ids]
    if not ids:
        raise ValueError("empty id range")
    grid = config.grid
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = shard_name(ids)
    final = out_dir / f"{name}.vlnd"
    traces_path = out_dir / f"{name}.vtrc"
    progress = out_dir / f"{name}.vprt"

    if final.exists() and traces_path.exists():
        return load_landscape(final), 0

    records: dict[int, LandscapeRecord] = {}
    traces: dict[int, np.ndarray] = {}
    if progress.exists():
        records, traces, good = _read_progress(progress, grid, budget, task_hash)
        with open(progress, "r+b") as fh:
            fh.truncate(good)
    else:
        with open(progress, "wb") as fh:
            fh.write(MAGIC_PROGRESS)
            fh.write(struct.pack("<BBB", FORMAT_VERSION, grid[0], grid[1]))
            fh.write(_pack_str(task_hash))
            fh.write(struct.pack("<I", budget))

    todo = [i for i in ids if i not in records]
    n_new = len(todo)
    if todo:
        tasks = [(mid, grid, budget, seed_base, config) for mid in todo]
        with open(progress, "ab") as fh:
            if workers > 1:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    for mid, fitness, blob, trace_blob in pool.map(
                            _search_task, tasks, chunksize=1):
                        _append_chunk(fh, mid, fitness, budget, blob, trace_blob)
                        records[mid] = LandscapeRecord(
                            id=mid, best_fitness=fitness,
                            controller=controller_from_bytes(blob, grid),
                            budget_generations=budget)
                        traces[mid] = np.frombuffer(trace_blob, dtype="<f8").copy()
            else:
                for task in tasks:
                    mid, fitness, blob, trace_blob = _search_task(task)
                    _append_chunk(fh, mid, fitness, budget, blob, trace_blob)
                    records[mid] = LandscapeRecord(
                        id=mid, best_fitness=fitness,
                        controller=controller_from_bytes(blob, grid),
                        budget_generations=budget)
                    traces[mid] = np.frombuffer(trace_blob, dtype="<f8").copy()

    shard = Landscape(records={i: replace(records[i], budget_generations=budget)
                               for i in ids},
                      grid=grid, task_hash=task_hash)
    save_landscape(final, shard)
    save_traces(traces_path, {i: traces[i] for i in ids}, grid, budget, task_hash)
    progress.unlink()
    return shard, n_new


def _manifest_path(out_dir) -> Path:
    return Path(out_dir) / "manifest.json"


def read_manifest(out_dir) -> dict | None:
    path = _manifest_path(out_dir)
    if not path.exists():
        return None
    return json.loads(path.read_text())


def _write_manifest(out_dir, payload: dict) -> None:
    path = _manifest_path(out_dir)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(payload, indent=1, sort_keys=True))
    tmp.replace(path)


def run_mapping(grid: GridShape, budget: int, config: EvolutionConfig,
                seed: int, out_dir, task_hash: str = "", workers: int = 1,
                shard_size: int | None = None) -> tuple[Landscape, int]:
    """Map the whole viable space of `grid`, shard by shard, with resume.

    Writes shard files plus a manifest under out_dir, and on completion the
    combined landscape.vlnd / traces.vtrc. Identical (config, seed) inputs
    produce byte-identical outputs regardless of worker count.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    all_ids = [int(i) for i in enumerate_viable(grid)]
    if shard_size is None:
        shard_size = len(all_ids)
    shards = [all_ids[i:i + shard_size] for i in range(0, len(all_ids), shard_size)]

    combined = Landscape(records={}, grid=grid, task_hash=task_hash)
    completed_ranges = []
    n_new = 0
    for shard_ids in shards:
        shard, new = map_shard(shard_ids, budget, config, seed, out_dir,
                               task_hash=task_hash, workers=workers)
        n_new += new
        combined.records.update(shard.records)
        completed_ranges.append([shard_ids[0], shard_ids[-1]])
        _write_manifest(out_dir, {
            "version": FORMAT_VERSION, "grid": list(grid), "budget": budget,
            "seed": seed, "task_hash": task_hash,
            "total_viable": len(all_ids), "completed": completed_ranges,
        })

    save_landscape(out_dir / "landscape.vlnd", combined)
    merged_traces: dict[int, np.ndarray] = {}
    for shard_ids in shards:
        traces, _, _ = load_traces(out_dir / f"{shard_name(shard_ids)}.vtrc")
        merged_traces.update(traces)
    save_traces(out_dir / "traces.vtrc", merged_traces, grid, budget, task_hash)
    return combined, n_new


def _dense_fitness(landscape: Landscape) -> np.ndarray:
    rows, cols = landscape.grid
    full = np.full(5 ** (rows * cols), -np.inf)
    for mid, rec in landscape.records.items():
        full[mid] = rec.best_fitness
    return full


def local_maxima(landscape: Landscape) -> np.ndarray:
    """Ids with no strictly fitter viable neighbor (plateau cells count).

    Vectorized over the whole id space: for every cell and every alternative
    voxel type, compare each id's fitness against the neighbor produced by
    that one change.
    """
    landscape.require_complete()
    shape = landscape.grid
    n = shape[0] * shape[1]
    viable = viability_table(shape)
    fit = _dense_fitness(landscape)
    ids = enumerate_viable(shape)
    powers = 5 ** np.arange(n, dtype=np.int64)
    is_max = np.ones(ids.size, dtype=bool)
    for k in range(n):
        digit = (ids // powers[k]) % 5
        base = ids - digit * powers[k]
        for v in range(5):
            cand = base + v * powers[k]
            mask = (digit != v) & viable[cand]
            is_max &= ~(mask & (fit[cand] > fit[ids]))
    return ids[is_max]


def hill_climb_basin(morphology_id: int, landscape: Landscape,
                     fit: np.ndarray | None = None) -> tuple[int, int]:
    """Steepest-ascent walk to a local maximum; ties go to the lowest id.

    Returns (endpoint id, steps taken). `fit` lets bulk callers reuse the
    dense fitness table.
    """
    landscape.require_complete()
    if fit is None:
        fit = _dense_fitness(landscape)
    current = int(morphology_id)
    steps = 0
    while True:
        nbrs = neighbor_ids(current, landscape.grid)
        if nbrs.size == 0:
            return current, steps
        best = fit[nbrs].max()
        if best <= fit[current]:
            return current, steps
        current = int(nbrs[fit[nbrs] == best].min())
        steps += 1


def near_optimal_set(landscape: Landscape,
                     config: NearOptimalityConfig = NearOptimalityConfig(),
                     ) -> np.ndarray:
    """Ids whose fitness clears the top-fraction threshold."""
    landscape.require_complete()
    gmax, gmin = landscape.global_extremes()
    cut = config.threshold(gmax, gmin)
    ids = enumerate_viable(landscape.grid)
    fit = _dense_fitness(landscape)
    return ids[fit[ids] >= cut]


def ruggedness_stats(landscape: Landscape,
                     near_opt: NearOptimalityConfig = NearOptimalityConfig(),
                     ) -> dict:
    """Mean graph distances from every viable morphology to key landmarks.

    Landmarks: the nearest local maximum, the global maximum, and the
    nearest local maximum above the near-optimality threshold. Distances use
    multi-source BFS over the viable graph; ids that cannot reach a landmark
    set are excluded from that mean (a non-issue on connected spaces).
    """
    landscape.require_complete()
    shape = landscape.grid
    ids = enumerate_viable(shape)
    fit = _dense_fitness(landscape)
    maxima = local_maxima(landscape)
    gmax, gmin = landscape.global_extremes()
    cut = near_opt.threshold(gmax, gmin)
    near_maxima = maxima[fit[maxima] >= cut]

    def mean_dist(sources) -> float:
        d = bfs_distances(sources, shape)[ids]
        return float(d[d >= 0].mean())

    return {
        "mean_distance_local_max": mean_dist(maxima),
        "mean_distance_global_max": mean_dist([landscape.global_max_id()]),
        "mean_distance_near_optimal_local_max": mean_dist(near_maxima),
        "n_local_maxima": int(maxima.size),
        "n_near_optimal_local_maxima": int(near_maxima.size),
        "near_optimality_threshold": cut,
    }


def export_csv(landscape: Landscape, path) -> None:
    """Write id,fitness,active_count,passive_count,is_local_max per record."""
    landscape.require_complete()
    maxima = set(int(i) for i in local_maxima(landscape))
    path = Path(path)
    rows, cols = landscape.grid
    with open(path, "w") as fh:
        fh.write(f"# task={landscape.task_hash} grid={rows}x{cols} "
                 f"records={len(landscape.records)}\n")
        fh.write("id,fitness,active_count,passive_count,is_local_max\n")
        for mid in sorted(landscape.records):
            rec = landscape.records[mid]
            m = id_to_morphology(mid, landscape.grid)
            fh.write(f"{mid},{rec.best_fitness!r},{m.active_count},"
                     f"{m.passive_count},{int(mid in maxima)}\n")
