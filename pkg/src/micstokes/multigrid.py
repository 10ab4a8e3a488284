"""Geometric multigrid for the velocity block of the staggered Stokes system.

Transfers work on coordinate vectors: every coarse node collects a bilinear
weighted average of the fine nodes in its four neighbouring coarse cells
(restriction), and every fine node interpolates bilinearly from the coarse
cell that contains it (prolongation).  Node counts need not be nested, so any
coarsening factor works.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from numba import njit

from .grid import BcPlan, BcSpec, GridGeometry2D, equation_ranges
from .operators import vx_center, vx_point, vy_center, vy_point

SMOOTHERS = ("jacobi", "rbgs", "ras", "mixed")


class HierarchyError(ValueError):
    """Requested hierarchy would produce a level below the minimum size."""


# ---------------------------------------------------------------------------
# coordinate search
# ---------------------------------------------------------------------------

@njit(cache=True)
def _bisect_bound(x, xt):
    l = 0
    r = x.size - 1
    while l < r:
        m = (l + r) // 2
        if x[m] < xt:
            l = m + 1
        else:
            r = m
    return l


def bisect_bound(x, xt) -> int:
    """Smallest ``i`` with ``x[i] >= xt``; the last index if ``xt`` exceeds all."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("bisect_bound needs a non-empty coordinate vector")
    return int(_bisect_bound(x, float(xt)))


@njit(cache=True)
def _cell_bounds(xf, xc):
    # fine index range [b[k], b[k+1]) belongs to coarse cell k; the last cell
    # also takes everything above its left node
    nc = xc.size
    b = np.empty(nc, np.int64)
    for k in range(nc - 1):
        t = _bisect_bound(xf, xc[k])
        if xf[t] < xc[k]:
            t = xf.size
        b[k] = t
    b[nc - 1] = xf.size
    return b


# ---------------------------------------------------------------------------
# restriction
# ---------------------------------------------------------------------------

@njit(cache=True)
def restrict_colored(uf, xf, yf, xc, yc):
    """Four-colour sweep over coarse cells.

    Each coarse node keeps one accumulator slot per cell corner, so a node is
    written by exactly one cell per slot and the result does not depend on the
    order in which cells are visited.
    """
    nyc, nxc = yc.size, xc.size
    acc = np.zeros((4, nyc, nxc))
    wac = np.zeros((4, nyc, nxc))
    ib = _cell_bounds(yf, yc)
    jb = _cell_bounds(xf, xc)
    dxc = xc[1] - xc[0]
    dyc = yc[1] - yc[0]
    for cy in range(2):
        for cx in range(2):
            for I in range(cy, nyc - 1, 2):
                for J in range(cx, nxc - 1, 2):
                    for ih in range(ib[I], ib[I + 1]):
                        for jh in range(jb[J], jb[J + 1]):
                            for s in range(4):
                                di = s // 2
                                dj = s % 2
                                rx = abs(xf[jh] - xc[J + dj]) / dxc
                                ry = abs(yf[ih] - yc[I + di]) / dyc
                                w = (1.0 - rx) * (1.0 - ry)
                                acc[s, I + di, J + dj] += w * uf[ih, jh]
                                wac[s, I + di, J + dj] += w
    num = acc[0] + acc[1] + acc[2] + acc[3]
    den = wac[0] + wac[1] + wac[2] + wac[3]
    return num, den


class RestrictPlan:
    """Precomputed slot targets and weights of a fine-to-coarse restriction."""

    def __init__(self, xf, yf, xc, yc):
        xf, yf, xc, yc = (np.asarray(a, dtype=np.float64) for a in (xf, yf, xc, yc))
        if xc.size < 2 or yc.size < 2:
            raise ValueError("coarse coordinate vectors need at least two nodes")
        if xf[0] < xc[0] or xf[-1] > xc[-1] or yf[0] < yc[0] or yf[-1] > yc[-1]:
            raise ValueError("fine nodes must lie within the coarse span")
        self.shape = (yc.size, xc.size)
        ib, jb = _cell_bounds(yf, yc), _cell_bounds(xf, xc)
        I = np.searchsorted(ib, np.arange(yf.size), side="right") - 1
        J = np.searchsorted(jb, np.arange(xf.size), side="right") - 1
        dxc, dyc = xc[1] - xc[0], yc[1] - yc[0]
        II, JJ = np.meshgrid(I, J, indexing="ij")
        YF, XF = np.meshgrid(yf, xf, indexing="ij")
        self.idx, self.w = [], []
        for s in range(4):
            di, dj = s // 2, s % 2
            rx = np.abs(XF - xc[JJ + dj]) / dxc
            ry = np.abs(YF - yc[II + di]) / dyc
            self.idx.append(((II + di) * xc.size + JJ + dj).ravel())
            self.w.append(((1.0 - rx) * (1.0 - ry)).ravel())
        size = self.shape[0] * self.shape[1]
        wsl = [np.bincount(t, weights=w, minlength=size) for t, w in zip(self.idx, self.w)]
        self.den = (wsl[0] + wsl[1] + wsl[2] + wsl[3]).reshape(self.shape)
        self.size = size

    def accumulate(self, uf):
        u = np.ravel(uf)
        sl = [np.bincount(t, weights=w * u, minlength=self.size) for t, w in zip(self.idx, self.w)]
        return (sl[0] + sl[1] + sl[2] + sl[3]).reshape(self.shape), self.den

    def apply(self, uf, mask=None):
        num, den = self.accumulate(uf)
        check = den if mask is None else den[mask]
        if np.any(check == 0.0):
            raise AssertionError("coarse node received no restriction weight")
        return np.divide(num, den, out=np.zeros(self.shape), where=den != 0.0)


def restrict(uf, xf, yf, xc, yc):
    """Normalized bilinear restriction of ``uf`` (on ``yf`` x ``xf``) to ``yc`` x ``xc``."""
    return RestrictPlan(xf, yf, xc, yc).apply(uf)


# ---------------------------------------------------------------------------
# prolongation
# ---------------------------------------------------------------------------

class ProlongPlan:
    def __init__(self, xc, yc, xf, yf):
        xc, yc, xf, yf = (np.asarray(a, dtype=np.float64) for a in (xc, yc, xf, yf))
        self.J = np.clip(np.searchsorted(xc, xf, side="right") - 1, 0, xc.size - 2)
        self.I = np.clip(np.searchsorted(yc, yf, side="right") - 1, 0, yc.size - 2)
        self.fx = np.clip((xf - xc[self.J]) / (xc[1] - xc[0]), 0.0, 1.0)
        self.fy = np.clip((yf - yc[self.I]) / (yc[1] - yc[0]), 0.0, 1.0)

    def apply(self, uc):
        I, J = self.I[:, None], self.J[None, :]
        fx, fy = self.fx[None, :], self.fy[:, None]
        top = (1.0 - fx) * uc[I, J] + fx * uc[I, J + 1]
        bot = (1.0 - fx) * uc[I + 1, J] + fx * uc[I + 1, J + 1]
        return (1.0 - fy) * top + fy * bot


def prolong(uc, xc, yc, xf, yf):
    """Bilinear interpolation of ``uc`` (on ``yc`` x ``xc``) to ``yf`` x ``xf``."""
    return ProlongPlan(xc, yc, xf, yf).apply(uc)


# ---------------------------------------------------------------------------
# smoothing kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def apply_bc_flat(a, dst, src, sign):
    f = a.ravel()
    for k in range(dst.size):
        s = src[k]
        f[dst[k]] = 0.0 if s < 0 else sign[k] * f[s]


@njit(cache=True)
def _apply_bc_window(a, dst, src, sign, ncol, w0, w1, c0, c1):
    f = a.ravel()
    for k in range(dst.size):
        d = dst[k]
        di, dj = d // ncol, d % ncol
        if di < w0 or di >= w1 or dj < c0 or dj >= c1:
            continue
        s = src[k]
        if s < 0:
            f[d] = 0.0
        else:
            si, sj = s // ncol, s % ncol
            if si < w0 or si >= w1 or sj < c0 or sj >= c1:
                continue
            f[d] = sign[k] * f[s]


@njit(cache=True)
def _jacobi_sweeps(ua, va, ub, vb, bx, by, etab, etap, dx, dy, ny, nx, omega, iters,
                   r0, r1, c0, c1, w0, w1, wc0, wc1,
                   xdst, xsrc, xsgn, ydst, ysrc, ysgn):
    """``iters`` damped Jacobi sweeps ping-ponging between (ua, va) and (ub, vb).

    Equation nodes in rows [r0, r1) x cols [c0, c1) are updated; boundary rules
    are applied inside the window [w0, w1) x [wc0, wc1).  Both buffers must
    hold identical values in the window on entry.  Returns True when the
    result ends in (ub, vb).
    """
    ncol = nx + 2
    src_u, src_v, dst_u, dst_v = ua, va, ub, vb
    for _ in range(iters):
        for i in range(max(r0, 1), min(r1, ny + 1)):
            for j in range(max(c0, 1), min(c1, nx)):
                a = vx_center(i, j, etab, etap, dx, dy)
                r = bx[i, j] - vx_point(i, j, src_u, src_v, etab, etap, dx, dy)
                dst_u[i, j] = src_u[i, j] + omega * r / a
        for i in range(max(r0, 1), min(r1, ny)):
            for j in range(max(c0, 1), min(c1, nx + 1)):
                a = vy_center(i, j, etab, etap, dx, dy)
                r = by[i, j] - vy_point(i, j, src_u, src_v, etab, etap, dx, dy)
                dst_v[i, j] = src_v[i, j] + omega * r / a
        _apply_bc_window(dst_u, xdst, xsrc, xsgn, ncol, w0, w1, wc0, wc1)
        _apply_bc_window(dst_v, ydst, ysrc, ysgn, ncol, w0, w1, wc0, wc1)
        src_u, dst_u = dst_u, src_u
        src_v, dst_v = dst_v, src_v
    return iters % 2 == 1


@njit(cache=True)
def _rbgs_sweeps(u, v, bx, by, etab, etap, dx, dy, ny, nx, omega, iters,
                 xdst, xsrc, xsgn, ydst, ysrc, ysgn):
    for _ in range(iters):
        for color in range(2):
            for i in range(1, ny + 1):
                for j in range(1 + (i + 1 + color) % 2, nx, 2):
                    a = vx_center(i, j, etab, etap, dx, dy)
                    r = bx[i, j] - vx_point(i, j, u, v, etab, etap, dx, dy)
                    u[i, j] += omega * r / a
            apply_bc_flat(u, xdst, xsrc, xsgn)
        for color in range(2):
            for i in range(1, ny):
                for j in range(1 + (i + 1 + color) % 2, nx + 1, 2):
                    a = vy_center(i, j, etab, etap, dx, dy)
                    r = by[i, j] - vy_point(i, j, u, v, etab, etap, dx, dy)
                    v[i, j] += omega * r / a
            apply_bc_flat(v, ydst, ysrc, ysgn)


@njit(cache=True)
def _residual(u, v, bx, by, etab, etap, dx, dy, ny, nx, rx, ry):
    for i in range(1, ny + 1):
        for j in range(1, nx):
            rx[i, j] = bx[i, j] - vx_point(i, j, u, v, etab, etap, dx, dy)
    for i in range(1, ny):
        for j in range(1, nx + 1):
            ry[i, j] = by[i, j] - vy_point(i, j, u, v, etab, etap, dx, dy)


@njit(cache=True)
def _ras_outer(u, v, snap_u, snap_v, sa_u, sa_v, sb_u, sb_v, bx, by, etab, etap, dx, dy,
               ny, nx, omega, inner, tiles, overlap,
               xdst, xsrc, xsgn, ydst, ysrc, ysgn):
    """One outer RAS iteration: every tile reads the snapshot, smooths its
    overlapped core ``inner`` times and writes back its core only."""
    nrow = ny + 2
    ncol = nx + 2
    for t in range(tiles.shape[0]):
        r0, r1, c0, c1 = tiles[t, 0], tiles[t, 1], tiles[t, 2], tiles[t, 3]
        ur0 = max(r0 - overlap, 0)
        ur1 = min(r1 + overlap, nrow)
        uc0 = max(c0 - overlap, 0)
        uc1 = min(c1 + overlap, ncol)
        w0 = max(ur0 - 1, 0)
        w1 = min(ur1 + 1, nrow)
        wc0 = max(uc0 - 1, 0)
        wc1 = min(uc1 + 1, ncol)
        for i in range(w0, w1):
            for j in range(wc0, wc1):
                sa_u[i, j] = snap_u[i, j]
                sb_u[i, j] = snap_u[i, j]
                sa_v[i, j] = snap_v[i, j]
                sb_v[i, j] = snap_v[i, j]
        in_b = _jacobi_sweeps(sa_u, sa_v, sb_u, sb_v, bx, by, etab, etap, dx, dy, ny, nx,
                              omega, inner, ur0, ur1, uc0, uc1, w0, w1, wc0, wc1,
                              xdst, xsrc, xsgn, ydst, ysrc, ysgn)
        ru = sb_u if in_b else sa_u
        rv = sb_v if in_b else sa_v
        for i in range(max(r0, 1), min(r1, ny + 1)):
            for j in range(max(c0, 1), min(c1, nx)):
                u[i, j] = ru[i, j]
        for i in range(max(r0, 1), min(r1, ny)):
            for j in range(max(c0, 1), min(c1, nx + 1)):
                v[i, j] = rv[i, j]


def _cuts(n, tile, shift):
    """Split [1, n + 1) into tile cores of length ``tile`` starting at offset
    ``shift``; the tile crossing the end is split at the wrap."""
    if tile >= n:
        return [(1, n + 1)]
    pts = sorted({1 + (shift + k * tile) % n for k in range(-(-n // tile) + 1)} | {1, n + 1})
    return list(zip(pts[:-1], pts[1:]))


# ---------------------------------------------------------------------------
# hierarchy
# ---------------------------------------------------------------------------

@dataclass
class SmootherConfig:
    kind: str = "jacobi"
    omega_v: float = 0.3
    pre_iters: int = 5
    post_iters: int = 5
    ras_tile: tuple = (32, 32)
    ras_inner: int = 4
    ras_overlap: int = 2
    coarsening_growth: float = 2.5
    coarse_factor: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SMOOTHERS:
            raise ValueError(f"unknown smoother {self.kind!r}; choose from {SMOOTHERS}")
        if not 0.0 < self.omega_v <= 1.0:
            raise ValueError("omega_v must lie in (0, 1]")
        if self.ras_inner < 2 or self.ras_inner % 2:
            raise ValueError("ras_inner must be a positive even count")
        if self.pre_iters < 0 or self.post_iters < 0:
            raise ValueError("smoothing counts must be non-negative")
        self.ras_tile = tuple(int(t) for t in self.ras_tile)


# fine data block read by restriction and coarse span it is restricted onto
def _data_block(geom, role):
    if role in ("vx", "vy"):
        i0, i1, j0, j1 = equation_ranges(geom)[role]
        return slice(i0, i1), slice(j0, j1)
    if role == "p":
        return slice(1, geom.ny + 1), slice(1, geom.nx + 1)
    return slice(0, geom.ny + 1), slice(0, geom.nx + 1)


def _coords(geom, role, block):
    xr, yr = geom.role_coords(role)
    return xr[block[1]], yr[block[0]]


@dataclass
class MgLevel:
    geom: GridGeometry2D
    etab: np.ndarray
    etap: np.ndarray
    bc: BcPlan
    pre: int
    post: int
    vx: np.ndarray = None
    vy: np.ndarray = None
    bx: np.ndarray = None
    by: np.ndarray = None
    rx: np.ndarray = None
    ry: np.ndarray = None
    restrict_to_next: dict = field(default_factory=dict)
    prolong_from_next: dict = field(default_factory=dict)

    def __post_init__(self):
        z = self.geom.zeros
        self.vx, self.vy, self.bx, self.by, self.rx, self.ry = z(), z(), z(), z(), z(), z()
        self.scratch = [z() for _ in range(6)]
        self.bcx = self.bc.flat("vx")
        self.bcy = self.bc.flat("vy")


def level_sizes(nx_nodes, ny_nodes, levels, factor):
    sizes = [(nx_nodes, ny_nodes)]
    for _ in range(levels - 1):
        px, py = sizes[-1]
        sizes.append((int(round(px / factor)), int(round(py / factor))))
    return sizes


def auto_factor(nx_nodes, ny_nodes, levels, target=30):
    if levels <= 1:
        return 1.0
    return (max(nx_nodes, ny_nodes) / target) ** (1.0 / (levels - 1))


class MgHierarchy:
    """Levels ordered finest first, sharing one smoother configuration."""

    def __init__(self, levels: list, smoother: SmootherConfig):
        self.levels = levels
        self.smoother = smoother
        self.rng = np.random.default_rng(smoother.seed)

    def __len__(self):
        return len(self.levels)

    @property
    def fine(self) -> MgLevel:
        return self.levels[0]

    def set_viscosity(self, etab, etap):
        """Install fine viscosity and re-restrict it down the hierarchy."""
        self.levels[0].etab[...] = etab
        self.levels[0].etap[...] = etap
        for lev, nxt in zip(self.levels[:-1], self.levels[1:]):
            _restrict_viscosity(lev, nxt)


def _restrict_viscosity(lev, nxt):
    g, gc = lev.geom, nxt.geom
    for name, role in (("etab", "basic"), ("etap", "p")):
        blk = _data_block(g, role)
        cblk = gc.role_extent(role)
        plan = lev.restrict_to_next[role]
        out = getattr(nxt, name)
        if role == "basic":
            out[cblk] = plan.apply(getattr(lev, name)[blk])
        else:
            tgt = np.zeros(plan.shape, dtype=bool)
            tgt[1:-1, 1:-1] = True
            vals = plan.apply(getattr(lev, name)[blk], mask=tgt)
            out[1:gc.ny + 1, 1:gc.nx + 1] = vals[1:-1, 1:-1]
            # unreferenced padding kept positive
            out[0, :] = out[1, :]
            out[gc.ny + 1, :] = out[gc.ny, :]
            out[:, 0] = out[:, 1]
            out[:, gc.nx + 1] = out[:, gc.nx]


def build_hierarchy(geom: GridGeometry2D, etab, etap, bc: BcSpec, levels: int,
                    factor="auto", smoother: SmootherConfig | None = None) -> MgHierarchy:
    smoother = smoother or SmootherConfig()
    if levels < 1:
        raise HierarchyError("levels must be >= 1")
    if bc.periodic_x or bc.periodic_y:
        raise HierarchyError("the velocity solver supports wall boundaries only")
    nxn, nyn = geom.nx + 1, geom.ny + 1
    if factor == "auto":
        factor = auto_factor(nxn, nyn, levels)
    factor = float(factor)
    if levels > 1 and factor < 1.5:
        raise HierarchyError(f"coarsening factor {factor:.3g} below 1.5")
    sizes = level_sizes(nxn, nyn, levels, factor)
    if min(min(s) for s in sizes) < 4:
        raise HierarchyError(f"coarsest level {sizes[-1]} is below 4x4 nodes")
    lv = []
    for k, (sx, sy) in enumerate(sizes):
        g = geom if k == 0 else geom.coarsened(sx - 1, sy - 1)
        grow = smoother.coarsening_growth ** k
        lev = MgLevel(g, np.ones(g.shape), np.ones(g.shape), BcPlan(g, bc),
                      int(round(smoother.pre_iters * grow)), int(round(smoother.post_iters * grow)))
        lv.append(lev)
    for lev, nxt in zip(lv[:-1], lv[1:]):
        g, gc = lev.geom, nxt.geom
        for role in ("basic", "p", "vx", "vy"):
            blk = _data_block(g, role)
            xf, yf = _coords(g, role, blk)
            xc, yc = _coords(gc, role, gc.role_extent(role))
            lev.restrict_to_next[role] = RestrictPlan(xf, yf, xc, yc)
            if role in ("vx", "vy"):
                lev.prolong_from_next[role] = ProlongPlan(xc, yc, xf, yf)
    h = MgHierarchy(lv, smoother)
    h.set_viscosity(etab, etap)
    return h


# ---------------------------------------------------------------------------
# smoothers
# ---------------------------------------------------------------------------

def _kernel_args(lev):
    g = lev.geom
    return g.dx, g.dy, g.ny, g.nx


def smooth_jacobi(lev: MgLevel, u, v, bx, by, iters, omega):
    """Damped Jacobi on the coupled velocity equations; updates ``u, v`` in place."""
    if iters <= 0:
        return u, v
    dx, dy, ny, nx = _kernel_args(lev)
    sa_u, sa_v = lev.scratch[0], lev.scratch[1]
    sa_u[...] = u
    sa_v[...] = v
    in_b = _jacobi_sweeps(u, v, sa_u, sa_v, bx, by, lev.etab, lev.etap, dx, dy, ny, nx,
                          omega, iters, 0, ny + 2, 0, nx + 2, 0, ny + 2, 0, nx + 2,
                          *lev.bcx, *lev.bcy)
    if in_b:
        u[...] = sa_u
        v[...] = sa_v
    return u, v


def smooth_rbgs(lev: MgLevel, u, v, bx, by, iters, omega):
    if iters <= 0:
        return u, v
    dx, dy, ny, nx = _kernel_args(lev)
    _rbgs_sweeps(u, v, bx, by, lev.etab, lev.etap, dx, dy, ny, nx, omega, iters,
                 *lev.bcx, *lev.bcy)
    return u, v


def ras_outer_count(iters, inner):
    n = -(-iters // inner)
    return n + n % 2


def ras_tiles(geom, tile, rng):
    ti, tj = tile
    si = int(rng.integers(0, ti))
    sj = int(rng.integers(0, tj))
    rows = _cuts(geom.ny, ti, si)
    cols = _cuts(geom.nx, tj, sj)
    return np.array([(a, b, c, d) for a, b in rows for c, d in cols], dtype=np.int64)


def smooth_ras(lev: MgLevel, u, v, bx, by, iters, cfg: SmootherConfig, rng):
    """Randomly shifted overlapping tiles, each running ``ras_inner`` local Jacobi
    sweeps from a common snapshot; only tile cores are written back."""
    if iters <= 0:
        return u, v
    dx, dy, ny, nx = _kernel_args(lev)
    snap_u, snap_v, sa_u, sa_v, sb_u, sb_v = lev.scratch
    for _ in range(ras_outer_count(iters, cfg.ras_inner)):
        tiles = ras_tiles(lev.geom, cfg.ras_tile, rng)
        snap_u[...] = u
        snap_v[...] = v
        _ras_outer(u, v, snap_u, snap_v, sa_u, sa_v, sb_u, sb_v, bx, by, lev.etab, lev.etap,
                   dx, dy, ny, nx, cfg.omega_v, cfg.ras_inner, tiles, cfg.ras_overlap,
                   *lev.bcx, *lev.bcy)
        apply_bc_flat(u, *lev.bcx)
        apply_bc_flat(v, *lev.bcy)
    return u, v


def _smooth(h: MgHierarchy, k: int, u, v, bx, by, iters):
    cfg, lev = h.smoother, h.levels[k]
    kind = cfg.kind
    if kind == "mixed":
        kind = "jacobi" if k == 0 else "ras"
    if kind == "jacobi":
        return smooth_jacobi(lev, u, v, bx, by, iters, cfg.omega_v)
    if kind == "rbgs":
        return smooth_rbgs(lev, u, v, bx, by, iters, cfg.omega_v)
    return smooth_ras(lev, u, v, bx, by, iters, cfg, h.rng)


def velocity_residual(lev: MgLevel, u, v, bx, by, rx=None, ry=None):
    dx, dy, ny, nx = _kernel_args(lev)
    rx = lev.geom.zeros() if rx is None else rx
    ry = lev.geom.zeros() if ry is None else ry
    _residual(u, v, bx, by, lev.etab, lev.etap, dx, dy, ny, nx, rx, ry)
    return rx, ry


def _restrict_residual(lev, nxt, rx, ry):
    g, gc = lev.geom, nxt.geom
    for role, r, out in (("vx", rx, nxt.bx), ("vy", ry, nxt.by)):
        plan = lev.restrict_to_next[role]
        vals = plan.apply(r[_data_block(g, role)])
        out.fill(0.0)
        rows, cols = gc.role_extent(role)
        i0, i1, j0, j1 = equation_ranges(gc)[role]
        out[i0:i1, j0:j1] = vals[i0 - rows.start:i1 - rows.start, j0 - cols.start:j1 - cols.start]


def _correct(lev, nxt, u, v):
    g, gc = lev.geom, nxt.geom
    for role, arr, corr in (("vx", u, nxt.vx), ("vy", v, nxt.vy)):
        blk = _data_block(g, role)
        arr[blk] += lev.prolong_from_next[role].apply(corr[gc.role_extent(role)])
    apply_bc_flat(u, *lev.bcx)
    apply_bc_flat(v, *lev.bcy)


def _cycle(h: MgHierarchy, k: int, u, v, bx, by):
    lev = h.levels[k]
    last = len(h.levels) - 1
    if k == last and k > 0:
        _smooth_coarsest(h, k, u, v, bx, by)
        return
    _smooth(h, k, u, v, bx, by, lev.pre)
    if k < last:
        nxt = h.levels[k + 1]
        rx, ry = velocity_residual(lev, u, v, bx, by, lev.rx, lev.ry)
        _restrict_residual(lev, nxt, rx, ry)
        nxt.vx.fill(0.0)
        nxt.vy.fill(0.0)
        _cycle(h, k + 1, nxt.vx, nxt.vy, nxt.bx, nxt.by)
        _correct(lev, nxt, u, v)
    _smooth(h, k, u, v, bx, by, lev.post)


def _smooth_coarsest(h, k, u, v, bx, by):
    lev = h.levels[k]
    n = int(math.ceil(h.smoother.coarse_factor * max(lev.pre, 1)))
    smooth_jacobi(lev, u, v, bx, by, n, h.smoother.omega_v)


def v_cycle(h: MgHierarchy, u, v, bx, by):
    """One V-cycle on the fine level, updating ``u, v`` in place."""
    _cycle(h, 0, u, v, bx, by)
    return u, v
