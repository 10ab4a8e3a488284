"""Inexact Uzawa iteration for the variable-viscosity Stokes saddle point.

Each cycle replaces the velocity solve by multigrid V-cycles with the current
pressure on the right-hand side, then corrects the pressure with the
viscosity-scaled divergence and removes its mean.  Large viscosity contrasts
are reached by continuation from a uniform viscosity.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .grid import BcPlan, BcSpec, GridGeometry2D, equation_ranges
from .multigrid import MgHierarchy, SmootherConfig, build_hierarchy, v_cycle
from .operators import (BodyForce, NormalizationError, continuity_apply, diag_minus_L,
                        energy_residual, pressure_gradient, schur_diag_surrogate,
                        _vx_apply, _vy_apply)

DEFAULT_SCHEDULE = ((0.0, 0), (0.25, 25), (0.5, 50), (0.75, 75), (1.0, 100))


class DivergenceError(RuntimeError):
    def __init__(self, msg, report):
        super().__init__(msg)
        self.report = report


@dataclass
class UzawaConfig:
    omega_p: float = 0.6
    max_cycles: int = 500
    vcycles_per_step: int = 1
    tol: float = 1e-4
    rescale_schedule: tuple = DEFAULT_SCHEDULE
    log_every: int = 1
    levels: int = 4
    factor: object = 2.5
    divergence_factor: float = 1e6

    def __post_init__(self):
        if not 0.0 < self.omega_p <= 1.0:
            raise ValueError("omega_p must lie in (0, 1]")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        sched = tuple((float(t), int(c)) for t, c in self.rescale_schedule)
        if not sched:
            sched = ((1.0, 0),)
        thetas = [t for t, _ in sched]
        starts = [c for _, c in sched]
        if any(not 0.0 <= t <= 1.0 for t in thetas) or thetas != sorted(thetas):
            raise ValueError("schedule values must ascend within [0, 1]")
        if starts != sorted(starts) or starts[0] != 0:
            raise ValueError("schedule start cycles must ascend from 0")
        if thetas[-1] != 1.0:
            raise ValueError("schedule must end at theta = 1")
        self.rescale_schedule = sched

    def theta_at(self, cycle: int) -> float:
        th = self.rescale_schedule[0][0]
        for t, c in self.rescale_schedule:
            if cycle >= c:
                th = t
        return th


@dataclass
class StokesState:
    vx: np.ndarray
    vy: np.ndarray
    p: np.ndarray

    @classmethod
    def zeros(cls, geom: GridGeometry2D) -> "StokesState":
        return cls(geom.zeros(), geom.zeros(), geom.zeros())

    def copy(self) -> "StokesState":
        return StokesState(self.vx.copy(), self.vy.copy(), self.p.copy())


@dataclass
class SolveReport:
    records: list = field(default_factory=list)
    converged: bool = False
    cycles_used: int = 0
    log_every: int = 1

    HEADER = "cycle,theta,res_v,res_p,res_total"

    def add(self, cycle, theta, res):
        self.records.append((int(cycle), float(theta), *map(float, res)))
        self.cycles_used = int(cycle)

    def log_lines(self):
        out = [self.HEADER]
        n = len(self.records)
        for k, rec in enumerate(self.records):
            if (k + 1) % self.log_every == 0 or k == n - 1:
                out.append("%d,%.6g,%.17g,%.17g,%.17g" % rec)
        return out

    @property
    def final(self):
        return self.records[-1] if self.records else None


@dataclass
class StokesProblem:
    geom: GridGeometry2D
    etab: np.ndarray
    etap: np.ndarray
    force: BodyForce
    bc: BcSpec
    rho: np.ndarray | None = None
    g_y: float = 0.0


# ---------------------------------------------------------------------------
# elementary pieces
# ---------------------------------------------------------------------------

def referenced_min(etab, etap, geom: GridGeometry2D) -> float:
    return float(min(etab[:geom.ny + 1, :geom.nx + 1].min(),
                     etap[1:geom.ny + 1, 1:geom.nx + 1].min()))


def blend_viscosity(etab, etap, theta, geom: GridGeometry2D | None = None):
    """``(1 - theta) eta_min + theta eta`` with one global minimum for both arrays."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta!r}")
    if geom is None:
        emin = float(min(etab.min(), etap.min()))
    else:
        emin = referenced_min(etab, etap, geom)
    if theta == 1.0:
        return etab.copy(), etap.copy()
    return (1.0 - theta) * emin + theta * etab, (1.0 - theta) * emin + theta * etap


def pressure_demean(p, geom: GridGeometry2D):
    """Subtract the mean over physical pressure nodes, in place."""
    blk = np.s_[1:geom.ny + 1, 1:geom.nx + 1]
    p[blk] -= math.fsum(p[blk].ravel()) / p[blk].size
    return p


def pressure_mean(p, geom: GridGeometry2D) -> float:
    blk = p[1:geom.ny + 1, 1:geom.nx + 1]
    return math.fsum(blk.ravel()) / blk.size


def lithostatic_pressure(rho, g_y, geom: GridGeometry2D):
    """Column-wise midpoint integration of ``rho g_y`` from the top boundary.

    Density is sampled at vy nodes (mean of the two bracketing basic nodes), so
    the result balances the discrete buoyancy force exactly at rest.
    """
    p = geom.zeros()
    ny, nx = geom.ny, geom.nx
    rho_vy = 0.5 * (rho[:ny, 0:nx] + rho[:ny, 1:nx + 1])
    inc = rho_vy * g_y * geom.dy
    inc[0] *= 0.5
    p[1:ny + 1, 1:nx + 1] = np.cumsum(inc, axis=0)
    return p


# ---------------------------------------------------------------------------
# system evaluation
# ---------------------------------------------------------------------------

class StokesSystem:
    """Operators of one problem at a fixed computational viscosity."""

    def __init__(self, problem: StokesProblem, etab, etap):
        self.problem = problem
        self.geom = problem.geom
        self.etab, self.etap = etab, etap
        self.bc = BcPlan(self.geom, problem.bc)
        g = self.geom
        self._fields = _Fields(g, etab, etap)
        self.diag = diag_minus_L(self._fields, g)
        self.schur = schur_diag_surrogate(etap, g)

    def momentum(self, vx, vy, p):
        g = self.geom
        ox, oy = g.zeros(), g.zeros()
        rng = equation_ranges(g)
        _vx_apply(vx, vy, p, self.etab, self.etap, g.dx, g.dy, *rng["vx"], ox)
        _vy_apply(vx, vy, p, self.etab, self.etap, g.dx, g.dy, *rng["vy"], oy)
        return ox, oy

    def residual(self, s: StokesState):
        g = self.geom
        ax, ay = self.momentum(s.vx, s.vy, s.p)
        f = self.problem.force
        rng = equation_ranges(g)
        rx, ry, rp = g.zeros(), g.zeros(), g.zeros()
        i0, i1, j0, j1 = rng["vx"]
        rx[i0:i1, j0:j1] = f.fx[i0:i1, j0:j1] - ax[i0:i1, j0:j1]
        i0, i1, j0, j1 = rng["vy"]
        ry[i0:i1, j0:j1] = f.fy[i0:i1, j0:j1] - ay[i0:i1, j0:j1]
        i0, i1, j0, j1 = rng["p"]
        rp[i0:i1, j0:j1] = continuity_apply(s.vx, s.vy, g)[i0:i1, j0:j1]
        return rx, ry, rp

    def energy(self, s: StokesState):
        rx, ry, rp = self.residual(s)
        f = self.problem.force
        return energy_residual(rx, ry, rp, self.diag, self.schur, (f.fx, f.fy), self.geom)


class _Fields:
    def __init__(self, geom, etab, etap):
        self.geom, self.etab, self.etap = geom, etab, etap


def force_norm2(problem: StokesProblem) -> float:
    g = problem.geom
    fs = _Fields(g, problem.etab, problem.etap)
    dvx, dvy = diag_minus_L(fs, g)
    rng = equation_ranges(g)
    tot = 0.0
    for f, d, k in ((problem.force.fx, dvx, "vx"), (problem.force.fy, dvy, "vy")):
        i0, i1, j0, j1 = rng[k]
        tot += math.fsum((f[i0:i1, j0:j1] ** 2 / d[i0:i1, j0:j1]).ravel())
    return tot


def velocity_rhs(problem: StokesProblem, p):
    """``f - G p`` at velocity equation nodes."""
    g = problem.geom
    gx, gy = pressure_gradient(p, g)
    return problem.force.fx - gx, problem.force.fy - gy


def uzawa_step(state: StokesState, problem: StokesProblem, hierarchy: MgHierarchy,
               config: UzawaConfig, etap_comp=None, demean=True) -> StokesState:
    """One inexact Uzawa cycle, in place."""
    g = problem.geom
    etap_comp = hierarchy.fine.etap if etap_comp is None else etap_comp
    bx, by = velocity_rhs(problem, state.p)
    for _ in range(config.vcycles_per_step):
        v_cycle(hierarchy, state.vx, state.vy, bx, by)
    # the continuity block is the negated divergence, which keeps the Schur
    # complement positive for the negative definite viscous block
    div = continuity_apply(state.vx, state.vy, g)
    blk = np.s_[1:g.ny + 1, 1:g.nx + 1]
    state.p[blk] -= config.omega_p * etap_comp[blk] * div[blk]
    if demean:
        pressure_demean(state.p, g)
    BcPlan(g, problem.bc).apply(state.vx, state.vy)
    return state


def initial_state(problem: StokesProblem, init: str = "lithostatic") -> StokesState:
    s = StokesState.zeros(problem.geom)
    if init == "lithostatic" and problem.rho is not None:
        s.p = lithostatic_pressure(problem.rho, problem.g_y, problem.geom)
        pressure_demean(s.p, problem.geom)
    elif init not in ("lithostatic", "zero"):
        raise ValueError(f"unknown initial pressure {init!r}")
    return s


class ContinuationDriver:
    """Tracks the viscosity-rescaling schedule and rebuilds operators on change."""

    def __init__(self, problem, config: UzawaConfig, smoother: SmootherConfig):
        self.problem, self.config, self.smoother = problem, config, smoother
        self.theta = None
        self.hierarchy = None
        self.system = None

    def update(self, cycle: int) -> bool:
        th = self.config.theta_at(cycle)
        if th == self.theta:
            return False
        p = self.problem
        eb, ep = blend_viscosity(p.etab, p.etap, th, p.geom)
        if self.hierarchy is None:
            self.hierarchy = build_hierarchy(p.geom, eb, ep, p.bc, self.config.levels,
                                             self.config.factor, self.smoother)
        else:
            self.hierarchy.set_viscosity(eb, ep)
        self.system = StokesSystem(p, self.hierarchy.fine.etab, self.hierarchy.fine.etap)
        self.theta = th
        return True


def _check(report, res, ref, config):
    if not all(math.isfinite(r) for r in res) or res[2] > config.divergence_factor * ref:
        raise DivergenceError(f"residual diverged at cycle {report.cycles_used}: {res[2]!r}", report)


def solve(problem: StokesProblem, config: UzawaConfig | None = None,
          smoother: SmootherConfig | None = None, state: StokesState | None = None,
          init: str = "lithostatic", on_cycle=None):
    """Run the continuation schedule until ``tol`` at theta = 1 or ``max_cycles``."""
    config = config or UzawaConfig()
    smoother = smoother or SmootherConfig()
    report = SolveReport(log_every=config.log_every)
    if state is None:
        state = initial_state(problem, init)
    try:
        f2 = force_norm2(problem)
    except ZeroDivisionError:
        f2 = 0.0
    if not f2 > 0.0:
        if np.any(state.vx) or np.any(state.vy) or np.any(state.p):
            raise NormalizationError("body-force norm is zero; relative residual undefined")
        report.converged = True
        return state, report
    drv = ContinuationDriver(problem, config, smoother)
    drv.update(0)
    BcPlan(problem.geom, problem.bc).apply(state.vx, state.vy)
    ref = drv.system.energy(state)[2]
    for cycle in range(1, config.max_cycles + 1):
        drv.update(cycle - 1)
        uzawa_step(state, problem, drv.hierarchy, config)
        res = drv.system.energy(state)
        report.add(cycle, drv.theta, res)
        if on_cycle is not None:
            on_cycle(cycle, state, res)
        _check(report, res, ref, config)
        if drv.theta == 1.0 and res[2] <= config.tol:
            report.converged = True
            break
    return state, report
