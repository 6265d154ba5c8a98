"""2D mass-spring soft-body simulator.

Bodies are built on the corner lattice of the voxel grid: one point mass per
distinct corner touched by a non-empty cell, four edge springs plus two
diagonal springs per voxel, with edges shared between adjacent voxels merged.
Dynamics are integrated with semi-implicit Euler: spring forces (Hookean +
axial damping), gravity, a one-sided penalty-spring ground with normal
damping, and Coulomb friction capped at mu times the normal force.

Actuation rescales spring rest lengths. A horizontally active voxel drives
its two horizontal edges with the commanded multiplier, a vertically active
voxel its two vertical edges; a shared edge driven from both sides gets the
mean multiplier. Diagonals follow the geometric length implied by the voxel's
target edge lengths, so actuation changes voxel area without the diagonals
fighting the edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .morphology import Morphology, VoxelType, is_viable

# Rest-length multiplier range available to controllers.
ACTION_LOW = 0.6
ACTION_HIGH = 1.6
ACTION_NEUTRAL = (ACTION_LOW + ACTION_HIGH) / 2.0

KIND_H = 0  # horizontal edge
KIND_V = 1  # vertical edge
KIND_D = 2  # diagonal


class SimulationFault(RuntimeError):
    """Non-finite state encountered; carries the global step index."""

    def __init__(self, step_index: int):
        super().__init__(f"non-finite simulation state at step {step_index}")
        self.step_index = step_index


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1.0 / 300.0
    control_period: int = 5
    gravity: tuple[float, float] = (0.0, -9.81)
    ground_height: float = 0.0
    contact_stiffness: float = 20000.0
    contact_damping: float = 100.0
    friction_coefficient: float = 1.0
    stiffness_soft: float = 2000.0
    stiffness_rigid: float = 8000.0
    stiffness_active: float = 3000.0
    spring_damping: float = 50.0
    voxel_size: float = 1.0
    point_mass: float = 1.0
    max_velocity_clamp: float = 50.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.control_period < 1:
            raise ValueError("control_period must be >= 1")
        for name in ("contact_stiffness", "stiffness_soft", "stiffness_rigid", "stiffness_active"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def material_stiffness(self, voxel: int) -> float:
        if voxel == VoxelType.SOFT:
            return self.stiffness_soft
        if voxel == VoxelType.RIGID:
            return self.stiffness_rigid
        if voxel in (VoxelType.ACTIVE_H, VoxelType.ACTIVE_V):
            return self.stiffness_active
        raise ValueError(f"no material stiffness for voxel type {voxel}")


class RobotBody:
    """Mutable simulation state for one robot; single-owner, not shared."""

    def __init__(self, genome: Morphology, pos, vel, mass, corner_site,
                 spring_i, spring_j, rest0, stiffness, damping, kind,
                 sources, voxel_map):
        self.genome = genome
        self.pos = pos
        self.vel = vel
        self.mass = mass
        self.corner_site = corner_site     # mass index -> corner-lattice site
        self.spring_i = spring_i
        self.spring_j = spring_j
        self.rest0 = rest0
        self.rest = rest0.copy()
        self.stiffness = stiffness
        self.damping = damping
        self.kind = kind
        self.sources = sources             # per spring: tuple of driving cells
        self.voxel_map = voxel_map         # cell -> (tl, tr, bl, br) mass ids
        self.steps_taken = 0
        self._fx = np.zeros(len(mass))
        self._fy = np.zeros(len(mass))

    @property
    def n(self) -> int:
        return len(self.mass)

    @property
    def n_springs(self) -> int:
        return len(self.spring_i)

    def clone(self) -> "RobotBody":
        body = RobotBody(self.genome, self.pos.copy(), self.vel.copy(), self.mass.copy(),
                         self.corner_site.copy(), self.spring_i, self.spring_j, self.rest0,
                         self.stiffness, self.damping, self.kind, self.sources, self.voxel_map)
        body.rest = self.rest.copy()
        body.steps_taken = self.steps_taken
        return body


def build_robot(genome: Morphology, config: SimConfig, require_viable: bool = True) -> RobotBody:
    """Instantiate the point-mass/spring network for a genome.

    The body starts at rest on the ground plane with its leftmost corner at
    x = 0. `require_viable=False` permits sub-viable bodies (single-voxel
    unit tests); the full pipeline never does that.
    """
    if require_viable and not is_viable(genome):
        raise ValueError("cannot build a non-viable morphology")
    if genome.filled_count == 0:
        raise ValueError("cannot build an empty morphology")

    rows, cols = genome.shape
    s = config.voxel_size

    # corner sites touched by non-empty cells, row-major over (rows+1)x(cols+1)
    sites = set()
    for k, v in enumerate(genome.cells):
        if v == VoxelType.EMPTY:
            continue
        r, c = divmod(k, cols)
        for rr, cc in ((r, c), (r, c + 1), (r + 1, c), (r + 1, c + 1)):
            sites.add(rr * (cols + 1) + cc)
    site_list = sorted(sites)
    site_to_mass = {site: idx for idx, site in enumerate(site_list)}
    n = len(site_list)

    pos = np.zeros((n, 2))
    for site, idx in site_to_mass.items():
        rr, cc = divmod(site, cols + 1)
        pos[idx, 0] = cc * s
        pos[idx, 1] = (rows - rr) * s
    pos[:, 0] -= pos[:, 0].min()
    pos[:, 1] -= pos[:, 1].min() - config.ground_height

    # springs keyed by (mass_a, mass_b); shared edges merge stiffness/sources
    springs: dict[tuple[int, int], dict] = {}

    def add_spring(a, b, rest, kind, stiff, source):
        key = (a, b) if a < b else (b, a)
        entry = springs.get(key)
        if entry is None:
            springs[key] = {"rest": rest, "kind": kind, "stiff": [stiff],
                            "sources": list(source)}
        else:
            assert entry["kind"] == kind and entry["rest"] == rest
            entry["stiff"].append(stiff)
            entry["sources"].extend(source)

    voxel_map = {}
    diag = s * math.sqrt(2.0)
    for k, v in enumerate(genome.cells):
        if v == VoxelType.EMPTY:
            continue
        r, c = divmod(k, cols)
        tl = site_to_mass[r * (cols + 1) + c]
        tr = site_to_mass[r * (cols + 1) + c + 1]
        bl = site_to_mass[(r + 1) * (cols + 1) + c]
        br = site_to_mass[(r + 1) * (cols + 1) + c + 1]
        voxel_map[k] = (tl, tr, bl, br)
        stiff = config.material_stiffness(v)
        h_src = (k,) if v == VoxelType.ACTIVE_H else ()
        v_src = (k,) if v == VoxelType.ACTIVE_V else ()
        d_src = (k,) if v in (VoxelType.ACTIVE_H, VoxelType.ACTIVE_V) else ()
        add_spring(tl, tr, s, KIND_H, stiff, h_src)
        add_spring(bl, br, s, KIND_H, stiff, h_src)
        add_spring(tl, bl, s, KIND_V, stiff, v_src)
        add_spring(tr, br, s, KIND_V, stiff, v_src)
        add_spring(tl, br, diag, KIND_D, stiff, d_src)
        add_spring(tr, bl, diag, KIND_D, stiff, d_src)

    keys = sorted(springs)
    spring_i = np.array([k[0] for k in keys], dtype=np.int64)
    spring_j = np.array([k[1] for k in keys], dtype=np.int64)
    rest0 = np.array([springs[k]["rest"] for k in keys])
    stiffness = np.array([float(np.mean(springs[k]["stiff"])) for k in keys])
    damping = np.full(len(keys), config.spring_damping)
    kind = np.array([springs[k]["kind"] for k in keys], dtype=np.uint8)
    sources = [tuple(sorted(set(springs[k]["sources"]))) for k in keys]

    return RobotBody(
        genome=genome,
        pos=pos,
        vel=np.zeros((n, 2)),
        mass=np.full(n, config.point_mass),
        corner_site=np.array(site_list, dtype=np.int64),
        spring_i=spring_i,
        spring_j=spring_j,
        rest0=rest0,
        stiffness=stiffness,
        damping=damping,
        kind=kind,
        sources=sources,
        voxel_map=voxel_map,
    )


def apply_actions(body: RobotBody, actions, config: SimConfig) -> None:
    """Set per-spring target rest lengths from a full action vector.

    `actions` holds one rest-length multiplier per grid cell (row-major);
    entries for cells that drive nothing are ignored.
    """
    actions = np.asarray(actions, dtype=float)
    if actions.shape != (len(body.genome.cells),):
        raise ValueError(f"expected {len(body.genome.cells)} actions, got {actions.shape}")
    used = sorted({c for src in body.sources for c in src})
    if used and not ((actions[used] >= ACTION_LOW) & (actions[used] <= ACTION_HIGH)).all():
        raise ValueError(f"actions outside [{ACTION_LOW}, {ACTION_HIGH}]")
    s = config.voxel_size
    cells = body.genome.cells
    rest = body.rest
    for idx in range(body.n_springs):
        src = body.sources[idx]
        if not src:
            continue
        if body.kind[idx] == KIND_D:
            (cell,) = src  # diagonals belong to exactly one voxel
            a = actions[cell]
            w, h = (a * s, s) if cells[cell] == VoxelType.ACTIVE_H else (s, a * s)
            rest[idx] = math.hypot(w, h)
        else:
            mean_mult = float(np.mean(actions[list(src)]))
            rest[idx] = body.rest0[idx] * mean_mult


@njit(cache=True)
def _integrate(pos, vel, mass, si, sj, rest, stiff, damp, fx, fy, n_steps,
               dt, gx, gy, ground, kc, cc, mu, vmax):
    n = pos.shape[0]
    m = si.shape[0]
    for t in range(n_steps):
        for i in range(n):
            fx[i] = mass[i] * gx
            fy[i] = mass[i] * gy
        for k in range(m):
            i = si[k]
            j = sj[k]
            dx = pos[j, 0] - pos[i, 0]
            dy = pos[j, 1] - pos[i, 1]
            length = math.sqrt(dx * dx + dy * dy)
            if length > 1e-12:
                ux = dx / length
                uy = dy / length
                rvx = vel[j, 0] - vel[i, 0]
                rvy = vel[j, 1] - vel[i, 1]
                f = stiff[k] * (length - rest[k]) + damp[k] * (rvx * ux + rvy * uy)
                fx[i] += f * ux
                fy[i] += f * uy
                fx[j] -= f * ux
                fy[j] -= f * uy
        for i in range(n):
            if pos[i, 1] < ground:
                pen = ground - pos[i, 1]
                normal = kc * pen - cc * vel[i, 1]
                if normal < 0.0:
                    normal = 0.0
                fy[i] += normal
                limit = mu * normal
                # stiction: cancel tangential velocity and applied force
                # together, up to the Coulomb cone
                ft = -mass[i] * vel[i, 0] / dt - fx[i]
                if ft > limit:
                    ft = limit
                elif ft < -limit:
                    ft = -limit
                fx[i] += ft
        fault = False
        for i in range(n):
            vel[i, 0] += dt * fx[i] / mass[i]
            vel[i, 1] += dt * fy[i] / mass[i]
            speed = math.sqrt(vel[i, 0] ** 2 + vel[i, 1] ** 2)
            if speed > vmax:
                scale = vmax / speed
                vel[i, 0] *= scale
                vel[i, 1] *= scale
            pos[i, 0] += dt * vel[i, 0]
            pos[i, 1] += dt * vel[i, 1]
            if not (math.isfinite(pos[i, 0]) and math.isfinite(pos[i, 1])
                    and math.isfinite(vel[i, 0]) and math.isfinite(vel[i, 1])):
                fault = True
        if fault:
            return t
    return -1


def run_steps(body: RobotBody, config: SimConfig, n_steps: int) -> None:
    """Advance the body `n_steps` with the current rest lengths."""
    gx, gy = config.gravity
    fault = _integrate(
        body.pos, body.vel, body.mass, body.spring_i, body.spring_j, body.rest,
        body.stiffness, body.damping, body._fx, body._fy, n_steps,
        config.dt, gx, gy, config.ground_height, config.contact_stiffness,
        config.contact_damping, config.friction_coefficient, config.max_velocity_clamp,
    )
    if fault >= 0:
        index = body.steps_taken + fault
        body.steps_taken += fault + 1
        raise SimulationFault(index)
    body.steps_taken += n_steps


def step(body: RobotBody, actions, config: SimConfig) -> None:
    """One semi-implicit Euler step, optionally retargeting actuation first."""
    if actions is not None:
        apply_actions(body, actions, config)
    run_steps(body, config, 1)


def settle_body(body: RobotBody, config: SimConfig, max_steps: int = 9000,
                ke_threshold: float = 1e-10, chunk: int = 600) -> None:
    """Relax the body to a static resting pose under gravity.

    Runs unactuated dynamics until the kinetic energy drops below the
    threshold (or the step cap is hit), then zeroes velocities. Statically
    unstable shapes finish falling over here, so episodes start from a true
    resting pose. Deterministic.
    """
    done = 0
    while done < max_steps:
        n = min(chunk, max_steps - done)
        run_steps(body, config, n)
        done += n
        ke = 0.5 * float(np.sum(body.mass[:, None] * body.vel**2))
        if ke < ke_threshold:
            break
    body.vel[:] = 0.0


def center_of_mass(body: RobotBody) -> np.ndarray:
    return body.mass @ body.pos / body.mass.sum()


def com_velocity(body: RobotBody) -> np.ndarray:
    return body.mass @ body.vel / body.mass.sum()


def mechanical_energy(body: RobotBody, config: SimConfig) -> float:
    """Kinetic + elastic + gravitational + contact-spring energy."""
    ke = 0.5 * float(np.sum(body.mass[:, None] * body.vel**2))
    d = body.pos[body.spring_j] - body.pos[body.spring_i]
    lengths = np.hypot(d[:, 0], d[:, 1])
    elastic = 0.5 * float(np.sum(body.stiffness * (lengths - body.rest) ** 2))
    gx, gy = config.gravity
    grav = -float(np.sum(body.mass * (gx * body.pos[:, 0] + gy * body.pos[:, 1])))
    pen = np.maximum(0.0, config.ground_height - body.pos[:, 1])
    contact = 0.5 * config.contact_stiffness * float(np.sum(pen**2))
    return ke + elastic + grav + contact


class TrajectoryWriter:
    """CSV dump of body state, one row per control step.

    Columns: step, COM position/velocity, then x/y per mass in mass-index
    order. Floats carry 9 significant digits.
    """

    def __init__(self, path, n_masses: int):
        self._fh = open(path, "w", encoding="utf-8")
        cols = ["step", "com_x", "com_y", "com_vx", "com_vy"]
        for i in range(n_masses):
            cols += [f"m{i}_x", f"m{i}_y"]
        self._fh.write(",".join(cols) + "\n")

    def record(self, step_index: int, body: RobotBody) -> None:
        com = center_of_mass(body)
        vel = com_velocity(body)
        vals = [com[0], com[1], vel[0], vel[1]]
        vals.extend(body.pos.ravel())
        self._fh.write(str(step_index) + "," + ",".join(f"{v:.9g}" for v in vals) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
