"""Outer acceleration of the Uzawa fixed point: flexible GCR and Anderson mixing.

The iteration is viewed as preconditioned Richardson on the full
velocity-pressure vector, with the block lower-triangular preconditioner

    M = [[L, 0], [D, -(alpha eta)^-1]]

whose action is one V-cycle on the velocity block followed by a scaled
pressure correction.  State vectors are flattened as (vx, vy, p) over their
equation nodes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .grid import BcPlan, equation_ranges
from .multigrid import SmootherConfig, v_cycle
from .operators import continuity_apply
from .uzawa import (ContinuationDriver, StokesProblem, StokesState, SolveReport, UzawaConfig,
                    _check, initial_state, pressure_demean, solve, uzawa_step)


class GcrBreakdown(RuntimeError):
    def __init__(self, msg, x):
        super().__init__(msg)
        self.x = x


# ---------------------------------------------------------------------------
# state packing
# ---------------------------------------------------------------------------

class StatePacker:
    def __init__(self, geom):
        self.geom = geom
        rng = equation_ranges(geom)
        self.blocks = [np.s_[a:b, c:d] for a, b, c, d in (rng["vx"], rng["vy"], rng["p"])]
        self.sizes = [(b - a) * (d - c) for a, b, c, d in (rng["vx"], rng["vy"], rng["p"])]
        self.n = sum(self.sizes)

    def pack(self, vx, vy, p):
        return np.concatenate([a[b].ravel() for a, b in zip((vx, vy, p), self.blocks)])

    def unpack(self, x, out=None):
        g = self.geom
        out = out or StokesState.zeros(g)
        k = 0
        for arr, blk, n in zip((out.vx, out.vy, out.p), self.blocks, self.sizes):
            arr[blk] = x[k:k + n].reshape(arr[blk].shape)
            k += n
        return out

    def p_slice(self):
        return slice(self.sizes[0] + self.sizes[1], self.n)


# ---------------------------------------------------------------------------
# GCR
# ---------------------------------------------------------------------------

@dataclass
class GcrWorkspace:
    restart_m: int
    z_history: list = field(default_factory=list)
    w_history: list = field(default_factory=list)

    def clear(self):
        self.z_history.clear()
        self.w_history.clear()


def gcr_solve(apply_A, precond, b, x0=None, restart_m=10, tol=1e-10, max_iters=100,
              stop=None, project=None, workspace=None):
    """Restarted flexible GCR(m) with modified Gram-Schmidt.

    ``stop(k, x, r)`` may end the iteration early; ``project`` is applied to
    every new search direction and iterate (e.g. removing a null space).
    Returns ``(x, history)`` with the residual 2-norm after every iteration.
    """
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - apply_A(x)
    bnorm = np.linalg.norm(b)
    hist = [float(np.linalg.norm(r))]
    ws = workspace or GcrWorkspace(restart_m)
    ws.restart_m = restart_m
    it = 0
    if hist[0] <= tol * bnorm or (stop is not None and stop(0, x, r)):
        return x, hist
    while it < max_iters:
        ws.clear()
        for _ in range(restart_m):
            z = np.asarray(precond(r), dtype=float)
            if project is not None:
                z = project(z)
            w = np.asarray(apply_A(z), dtype=float)
            for zj, wj in zip(ws.z_history, ws.w_history):
                gam = np.dot(w, wj)  # stored w are unit vectors
                w = w - gam * wj
                z = z - gam * zj
            nu = np.linalg.norm(w)
            if nu <= 1e-14 * np.linalg.norm(r):
                raise GcrBreakdown(f"search direction collapsed at iteration {it}", x)
            w = w / nu
            z = z / nu
            ws.z_history.append(z)
            ws.w_history.append(w)
            a = np.dot(r, w)
            x = x + a * z
            r = r - a * w
            it += 1
            hist.append(float(np.linalg.norm(r)))
            if hist[-1] <= tol * bnorm or (stop is not None and stop(it, x, r)) or it >= max_iters:
                return x, hist
    return x, hist


# ---------------------------------------------------------------------------
# Anderson
# ---------------------------------------------------------------------------

@dataclass
class AndersonWorkspace:
    depth_m: int
    beta: float = 1.0
    x_history: list = field(default_factory=list)
    gx_history: list = field(default_factory=list)
    last_alpha: np.ndarray | None = None
    fallback: bool = False
    rcond: float = 1e-12

    def __post_init__(self):
        if self.depth_m < 0:
            raise ValueError("depth must be >= 0")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")

    def clear(self):
        self.x_history.clear()
        self.gx_history.clear()


def anderson_coefficients(F, rcond=1e-12):
    """Minimize ``||F alpha||`` subject to ``sum(alpha) = 1``.

    Solved in the difference form: with ``dF_j = f_{j+1} - f_j`` find
    ``gamma = argmin ||f_last - dF gamma||`` and map back to ``alpha``.
    Returns ``(alpha, full_rank)``.
    """
    F = np.asarray(F, dtype=float)
    n = F.shape[1]
    if n == 1:
        return np.ones(1), True
    dF = np.diff(F, axis=1)
    gamma, _, rank, _ = np.linalg.lstsq(dF, F[:, -1], rcond=rcond)
    alpha = np.empty(n)
    alpha[0] = gamma[0]
    alpha[1:-1] = gamma[1:] - gamma[:-1]
    alpha[-1] = 1.0 - gamma[-1]
    return alpha, rank == n - 1


def anderson_step(ws: AndersonWorkspace, G, x_k):
    """Evaluate ``G(x_k)``, update the histories and return the mixed iterate."""
    gx = np.asarray(G(x_k), dtype=float)
    ws.x_history.append(np.array(x_k, dtype=float))
    ws.gx_history.append(gx)
    while len(ws.x_history) > ws.depth_m + 1:
        ws.x_history.pop(0)
        ws.gx_history.pop(0)
    X = np.stack(ws.x_history, axis=1)
    GX = np.stack(ws.gx_history, axis=1)
    alpha, ok = anderson_coefficients(GX - X, ws.rcond)
    ws.fallback = not ok
    if not ok:
        # rank-deficient history: plain fixed-point step, history restarted
        ws.last_alpha = np.ones(1)
        ws.x_history[:] = ws.x_history[-1:]
        ws.gx_history[:] = ws.gx_history[-1:]
        return gx
    ws.last_alpha = alpha
    b = ws.beta
    return (1.0 - b) * (X @ alpha) + b * (GX @ alpha)


# ---------------------------------------------------------------------------
# Uzawa as a preconditioner
# ---------------------------------------------------------------------------

class UzawaOperators:
    """Full block operator and Uzawa preconditioner of one problem and hierarchy."""

    def __init__(self, problem: StokesProblem, hierarchy, omega_p: float):
        self.problem, self.h, self.omega_p = problem, hierarchy, omega_p
        self.geom = problem.geom
        self.pk = StatePacker(self.geom)
        self.bc = BcPlan(self.geom, problem.bc)

    @property
    def etap(self):
        return self.h.fine.etap

    def rhs(self):
        f = self.problem.force
        return self.pk.pack(f.fx, f.fy, self.geom.zeros())

    def apply_A(self, x):
        from .uzawa import StokesSystem
        s = self.pk.unpack(x)
        self.bc.apply(s.vx, s.vy)
        sysm = StokesSystem(self.problem, self.h.fine.etab, self.h.fine.etap)
        ax, ay = sysm.momentum(s.vx, s.vy, s.p)
        # continuity row: negated divergence
        return self.pk.pack(ax, ay, -continuity_apply(s.vx, s.vy, self.geom))

    def precond(self, r):
        g = self.geom
        rs = self.pk.unpack(r)
        z = StokesState.zeros(g)
        v_cycle(self.h, z.vx, z.vy, rs.vx, rs.vy)
        dz = -continuity_apply(z.vx, z.vy, g)
        blk = np.s_[1:g.ny + 1, 1:g.nx + 1]
        z.p[blk] = self.omega_p * self.etap[blk] * (dz[blk] - rs.p[blk])
        return self.pk.pack(z.vx, z.vy, z.p)

    def demean(self, x):
        x = np.array(x, dtype=float)
        sl = self.pk.p_slice()
        x[sl] -= math.fsum(x[sl]) / x[sl].size
        return x


def uzawa_as_preconditioner(problem: StokesProblem, hierarchy, omega_p: float = 0.6):
    ops = UzawaOperators(problem, hierarchy, omega_p)
    return ops.apply_A, ops.precond


# ---------------------------------------------------------------------------
# accelerated driver
# ---------------------------------------------------------------------------

def _stages(config: UzawaConfig):
    sched = list(config.rescale_schedule)
    out = []
    for k, (th, c0) in enumerate(sched):
        c1 = sched[k + 1][1] if k + 1 < len(sched) else config.max_cycles
        c1 = min(c1, config.max_cycles)
        if c1 > c0 or (k == len(sched) - 1 and c1 >= c0):
            out.append((c0, c1))
    return out


def accelerated_solve(problem: StokesProblem, config: UzawaConfig | None = None,
                      smoother: SmootherConfig | None = None, accel: str = "none",
                      params: dict | None = None, state: StokesState | None = None,
                      init: str = "lithostatic", on_cycle=None):
    config = config or UzawaConfig()
    smoother = smoother or SmootherConfig()
    params = dict(params or {})
    if accel == "none":
        return solve(problem, config, smoother, state, init, on_cycle)
    if accel not in ("gcr", "anderson"):
        raise ValueError(f"unknown accelerator {accel!r}")
    g = problem.geom
    state = initial_state(problem, init) if state is None else state
    report = SolveReport(log_every=config.log_every)
    drv = ContinuationDriver(problem, config, smoother)
    drv.update(0)
    BcPlan(g, problem.bc).apply(state.vx, state.vy)
    ref = drv.system.energy(state)[2]
    pk = StatePacker(g)
    x = pk.pack(state.vx, state.vy, state.p)
    cycle = 0
    m = int(params.get("m", 10))
    for c0, c1 in _stages(config):
        drv.update(c0)
        ops = UzawaOperators(problem, drv.hierarchy, config.omega_p)
        budget = c1 - c0 if c1 < config.max_cycles else config.max_cycles - cycle

        def record(xv):
            nonlocal cycle
            cycle += 1
            s = pk.unpack(xv)
            BcPlan(g, problem.bc).apply(s.vx, s.vy)
            res = drv.system.energy(s)
            report.add(cycle, drv.theta, res)
            if on_cycle is not None:
                on_cycle(cycle, s, res)
            _check(report, res, ref, config)
            return drv.theta == 1.0 and res[2] <= config.tol

        if budget <= 0:
            continue
        if accel == "gcr":
            done = [False]

            def stop(k, xv, r):
                if k == 0:
                    return False
                done[0] = record(xv)
                return done[0]

            x, _ = gcr_solve(ops.apply_A, ops.precond, ops.rhs(), x, restart_m=m, tol=0.0,
                             max_iters=budget, stop=stop, project=ops.demean)
            x = ops.demean(x)
            if done[0]:
                report.converged = True
                break
        else:
            ws = AndersonWorkspace(m, float(params.get("beta", 1.0)))

            def G(xv):
                s = pk.unpack(xv)
                BcPlan(g, problem.bc).apply(s.vx, s.vy)
                uzawa_step(s, problem, drv.hierarchy, config)
                return pk.pack(s.vx, s.vy, s.p)

            conv = False
            for _ in range(budget):
                x = ops.demean(anderson_step(ws, G, x))
                if record(x):
                    conv = True
                    break
            if conv:
                report.converged = True
                break
    out = pk.unpack(x)
    BcPlan(g, problem.bc).apply(out.vx, out.vy)
    return out, report
