"""Benchmark setups: the sinking inclusion and the rotating slab."""
from __future__ import annotations

from dataclasses import dataclass
import hashlib

import numpy as np

from .distributed import (build_topology, decompose, distributed_advect_step,
                          distributed_markers_to_grid, halo_exchange, run_ranks)
from .distributed.transport import InProcessTransport
from .grid import BcPlan, BcSpec, GridGeometry2D, ScalingSet, make_uniform_grid, unit_scaling
from .markers import (MarkerPool, TimeStepPolicy, advect_euler, compute_timestep,
                      markers_to_grid, seed_markers)
from .operators import BodyForce
from .uzawa import StokesProblem


class ScenarioError(ValueError):
    """Marker field does not cover a node the discretization references."""


# referenced node blocks of the material arrays
def _referenced(geom, role):
    if role == "p":
        return np.s_[1:geom.ny + 1, 1:geom.nx + 1]
    return np.s_[0:geom.ny + 1, 0:geom.nx + 1]


def interpolate_material(pool: MarkerPool, geom: GridGeometry2D, props=("eta", "rho")):
    """Marker properties on the grid: ``etab``/``etap`` from ``eta`` on basic and
    pressure nodes and ``rho`` on basic nodes."""
    out = {}
    for name, prop, role in (("etab", "eta", "basic"), ("etap", "eta", "p"),
                             ("rho", "rho", "basic")):
        if prop not in props:
            continue
        vals, empty = markers_to_grid(pool, prop, role, geom)
        if empty[_referenced(geom, role)].any():
            raise ScenarioError(f"no markers near some {role} nodes; raise markers.per_cell")
        out[name] = vals
    return out


# ---------------------------------------------------------------------------
# sinker
# ---------------------------------------------------------------------------

@dataclass
class Sinker:
    geom: GridGeometry2D
    pool: MarkerPool
    scaling: ScalingSet
    bc: BcSpec
    g_y: float
    center: tuple
    radius: float

    def problem(self, pool: MarkerPool | None = None) -> StokesProblem:
        """Stokes problem with material fields interpolated from the markers."""
        m = interpolate_material(self.pool if pool is None else pool, self.geom)
        force = BodyForce.from_density(m["rho"], self.g_y, self.geom)
        return StokesProblem(self.geom, m["etab"], m["etap"], force, self.bc, m["rho"], self.g_y)

    @property
    def contrast(self) -> float:
        eta = self.pool.props["eta"]
        return float(eta.max() / eta.min())


def build_sinker(cfg: dict) -> Sinker:
    if cfg["scenario"] != "sinker":
        raise ValueError("build_sinker needs scenario = sinker")
    sc = unit_scaling(cfg["scaling.t0"], cfg["scaling.x0"], cfg["scaling.eta0"])
    xs, ys = sc.scale(length=cfg["grid.xsize"]), sc.scale(length=cfg["grid.ysize"])
    geom = make_uniform_grid(cfg["grid.nx"], cfg["grid.ny"], float(xs), float(ys))
    pool = seed_markers(geom, cfg["markers.per_cell"], cfg["markers.jitter"], cfg["seed"])
    cx, cy = 0.5 * float(xs), 0.5 * float(ys)
    r = float(sc.scale(length=cfg["physics.radius"]))
    inside = (pool.xm - cx) ** 2 + (pool.ym - cy) ** 2 < r * r
    eta_in, eta_out = (float(v) for v in sc.scale(eta=np.array(
        [cfg["physics.eta_inclusion"], cfg["physics.eta_host"]])))
    rho_in, rho_out = (float(v) for v in sc.scale(rho=np.array(
        [cfg["physics.rho_inclusion"], cfg["physics.rho_host"]])))
    pool.props["eta"] = np.where(inside, eta_in, eta_out)
    pool.props["rho"] = np.where(inside, rho_in, rho_out)
    pool.props["id"] = np.arange(pool.count, dtype=np.float64)
    # normal velocity zero and tangential stress free on every wall
    bc = BcSpec.uniform("free-slip")
    return Sinker(geom, pool, sc, bc, float(sc.scale(g=cfg["physics.g_y"])), (cx, cy), r)


# ---------------------------------------------------------------------------
# rotating slab
# ---------------------------------------------------------------------------

@dataclass
class RotatingSlab:
    geom: GridGeometry2D
    pool: MarkerPool
    vx: np.ndarray
    vy: np.ndarray
    bc: BcSpec
    periodic: tuple
    omega: float
    center: tuple
    eta_slab: float


def rotation_field(geom: GridGeometry2D, omega: float, center):
    """Rigid rotation ``(-omega (y - yc), omega (x - xc))`` on the staggered nodes."""
    xc, yc = center
    xr, yr = geom.role_coords("vx")
    vx = np.broadcast_to(-omega * (yr[:, None] - yc), geom.shape).copy()
    xr, yr = geom.role_coords("vy")
    vy = np.broadcast_to(omega * (xr[None, :] - xc), geom.shape).copy()
    return vx, vy


def build_rotating_slab(cfg: dict) -> RotatingSlab:
    if cfg["scenario"] != "rotating-slab":
        raise ValueError("build_rotating_slab needs scenario = rotating-slab")
    periodic = bool(cfg["distributed.periodic"])
    geom = make_uniform_grid(cfg["grid.nx"], cfg["grid.ny"], cfg["grid.xsize"], cfg["grid.ysize"])
    center = (0.5 * geom.xsize, 0.5 * geom.ysize)
    vx, vy = rotation_field(geom, cfg["slab.omega"], center)
    bc = BcSpec.uniform("periodic" if periodic else "free-slip")
    BcPlan(geom, bc).apply(vx, vy)
    pool = seed_markers(geom, cfg["markers.per_cell"], cfg["markers.jitter"], cfg["seed"])
    hw = 0.5 * cfg["slab.width"] * geom.xsize
    hh = 0.5 * cfg["slab.height"] * geom.ysize
    inside = (np.abs(pool.xm - center[0]) < hw) & (np.abs(pool.ym - center[1]) < hh)
    pool.props["eta"] = np.where(inside, cfg["slab.eta_slab"], cfg["slab.eta_host"])
    pool.props["id"] = np.arange(pool.count, dtype=np.float64)
    return RotatingSlab(geom, pool, vx, vy, bc, (periodic, periodic), cfg["slab.omega"],
                        center, cfg["slab.eta_slab"])


def slab_timestep(slab: RotatingSlab, cfl: float) -> float:
    return compute_timestep(slab.vx, slab.vy, TimeStepPolicy(cfl), slab.geom)


def run_slab_single(slab: RotatingSlab, steps: int, dt: float, integrator=advect_euler):
    """Advection on one rank, interpolating viscosity every step."""
    pool = slab.pool
    eta = None
    for _ in range(steps):
        eta, _ = markers_to_grid(pool, "eta", "basic", slab.geom, slab.periodic)
        pool = integrator(pool, slab.vx, slab.vy, dt, slab.geom, slab.periodic)
    return pool, eta


@dataclass
class DistributedResult:
    pool: MarkerPool
    eta: np.ndarray
    counts: list
    messages: list


def run_slab_distributed(slab: RotatingSlab, steps: int, dt: float, px: int, py: int,
                         timeout: float = 60.0) -> DistributedResult:
    """Same run as ``run_slab_single`` on ``px x py`` rank workers.

    Returns the gathered markers and the viscosity of the last interpolation,
    assembled from the rank interiors.
    """
    g = slab.geom
    topos = build_topology(px, py, slab.periodic)
    transport = InProcessTransport(px * py, timeout)

    def work(rank, ep):
        sub = decompose(g, topos[rank])
        pool = slab.pool.take(np.flatnonzero(sub.owns(slab.pool.xm, slab.pool.ym)))
        vx, vy = sub.scatter(slab.vx), sub.scatter(slab.vy)
        halo_exchange([vx, vy], sub, ep)
        eta = None
        counts = []
        for _ in range(steps):
            eta, _ = distributed_markers_to_grid(pool, "eta", "basic", sub, ep)
            pool = distributed_advect_step(pool, vx, vy, dt, sub, ep)
            counts.append(pool.count)
        glob, loc = sub.global_slices()
        return pool, glob, eta[loc] if eta is not None else None, counts

    res = run_ranks(px * py, work, transport)
    eta = g.zeros()
    for _, glob, loc_eta, _ in res:
        if loc_eta is not None:
            eta[glob] = loc_eta
    # periodic ranks cover indices 0..n-1; fill the images n and n + 1
    if slab.periodic[0]:
        eta[:, g.nx] = eta[:, 0]
        eta[:, g.nx + 1] = eta[:, 1]
    if slab.periodic[1]:
        eta[g.ny, :] = eta[0, :]
        eta[g.ny + 1, :] = eta[1, :]
    pool = MarkerPool.concat([r[0] for r in res], list(slab.pool.props))
    return DistributedResult(pool, eta if steps else None, [r[3] for r in res],
                             [dict(c) for c in transport.sent])


def marker_hash(pool: MarkerPool) -> str:
    """Order-independent digest of the marker multiset (positions and properties)."""
    names = sorted(pool.props)
    table = np.column_stack([pool.xm, pool.ym] + [pool.props[k] for k in names])
    order = np.lexsort(table.T[::-1])
    h = hashlib.sha256(",".join(["x", "y"] + names).encode())
    h.update(np.ascontiguousarray(table[order], dtype="<f8").tobytes())
    return h.hexdigest()
