"""Lagrangian marker pool, bilinear marker/grid transfers and advection."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GridGeometry2D


class OutOfDomainError(ValueError):
    """A marker position is not covered by the grid of the requested role."""


@dataclass
class MarkerPool:
    xm: np.ndarray
    ym: np.ndarray
    props: dict = field(default_factory=dict)

    def __post_init__(self):
        self.xm = np.asarray(self.xm, dtype=np.float64)
        self.ym = np.asarray(self.ym, dtype=np.float64)
        if self.xm.shape != self.ym.shape or self.xm.ndim != 1:
            raise ValueError("xm and ym must be 1-D arrays of equal length")
        for k, v in self.props.items():
            v = np.asarray(v, dtype=np.float64)
            if v.shape != self.xm.shape:
                raise ValueError(f"property {k!r} has length {v.shape}, expected {self.xm.shape}")
            self.props[k] = v

    @property
    def count(self) -> int:
        return self.xm.size

    def with_positions(self, xm, ym) -> "MarkerPool":
        # properties are shared, never recomputed: advection leaves them bit-identical
        return MarkerPool(xm, ym, dict(self.props))

    def take(self, idx) -> "MarkerPool":
        return MarkerPool(self.xm[idx], self.ym[idx], {k: v[idx] for k, v in self.props.items()})

    @staticmethod
    def concat(pools, names=None) -> "MarkerPool":
        pools = list(pools)
        if names is None:
            names = list(pools[0].props) if pools else []
        return MarkerPool(
            np.concatenate([p.xm for p in pools]) if pools else np.empty(0),
            np.concatenate([p.ym for p in pools]) if pools else np.empty(0),
            {k: np.concatenate([p.props[k] for p in pools]) for k in names},
        )


@dataclass(frozen=True)
class TimeStepPolicy:
    cfl_fraction: float = 0.5
    max_dt: float = np.inf

    def __post_init__(self):
        if not 0.0 < self.cfl_fraction < 1.0:
            raise ValueError("cfl_fraction must lie in (0, 1)")
        if not self.max_dt > 0:
            raise ValueError("max_dt must be positive")


def seed_markers(geom: GridGeometry2D, per_cell: int = 4, jitter: float = 0.0,
                 seed: int = 0) -> MarkerPool:
    """``per_cell`` x ``per_cell`` lattice per cell, optionally jittered by a
    fraction of the sub-spacing with a seeded generator."""
    m = int(per_cell)
    if m < 1:
        raise ValueError("per_cell must be >= 1")
    hx, hy = geom.dx / m, geom.dy / m
    xs = geom.x0 + hx * (np.arange(geom.nx * m) + 0.5)
    ys = geom.y0 + hy * (np.arange(geom.ny * m) + 0.5)
    Y, X = np.meshgrid(ys, xs, indexing="ij")
    xm, ym = X.ravel().copy(), Y.ravel().copy()
    if jitter:
        rng = np.random.default_rng(seed)
        xm += jitter * hx * rng.uniform(-0.5, 0.5, xm.size)
        ym += jitter * hy * rng.uniform(-0.5, 0.5, ym.size)
    return MarkerPool(xm, ym, {})


# ---------------------------------------------------------------------------
# bilinear kernel
# ---------------------------------------------------------------------------

def bilinear_weights(rx, ry, dx, dy):
    """Weights of the (i, j), (i, j+1), (i+1, j), (i+1, j+1) corners."""
    rx, ry = np.asarray(rx, dtype=float), np.asarray(ry, dtype=float)
    if np.any((rx < 0) | (rx > dx) | (ry < 0) | (ry > dy)):
        raise ValueError("offsets must lie inside the cell")
    fx, fy = rx / dx, ry / dy
    return (1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy


def role_cells(geom: GridGeometry2D, role: str) -> tuple[int, int]:
    """Number of interpolation cells of ``role`` along (x, y)."""
    ncx = geom.nx + 1 if role in ("vy", "p") else geom.nx
    ncy = geom.ny + 1 if role in ("vx", "p") else geom.ny
    return ncx, ncy


def locate(x, origin, h, ncells):
    """Cell index (clipped to ``[0, ncells)``) and in-cell fraction along one axis."""
    k = np.floor((x - origin) / h).astype(np.int64)
    np.clip(k, 0, ncells - 1, out=k)
    f = (x - (origin + k * h)) / h
    return k, f


def _check_cover(pool, geom, role):
    ox, oy = geom.role_origin(role)
    ncx, ncy = role_cells(geom, role)
    bad = ((pool.xm < ox) | (pool.xm > ox + ncx * geom.dx)
           | (pool.ym < oy) | (pool.ym > oy + ncy * geom.dy) | ~np.isfinite(pool.xm)
           | ~np.isfinite(pool.ym))
    if bad.any():
        m = int(np.flatnonzero(bad)[0])
        raise OutOfDomainError(
            f"marker {m} at ({pool.xm[m]!r}, {pool.ym[m]!r}) is outside the {role} grid")


def marker_stencil(xm, ym, geom: GridGeometry2D, role: str):
    """Lower-left node indices and the four bilinear weights of every marker."""
    ox, oy = geom.role_origin(role)
    ncx, ncy = role_cells(geom, role)
    j, fx = locate(xm, ox, geom.dx, ncx)
    i, fy = locate(ym, oy, geom.dy, ncy)
    gx, gy = 1.0 - fx, 1.0 - fy
    return i, j, (gx * gy, fx * gy, gx * fy, fx * fy)


def scatter_weighted(shape, i, j, w, values):
    """Accumulate ``sum w*phi`` and ``sum w`` into arrays of ``shape``.

    Contributions are summed per node in marker order, corner by corner, so the
    result is bit-identical to a serial loop over markers.
    """
    ncol = shape[1]
    base = i * ncol + j
    flat = np.stack([base, base + 1, base + ncol, base + ncol + 1], axis=1).ravel()
    wts = np.stack(w, axis=1).ravel()
    size = shape[0] * shape[1]
    acc_w = np.bincount(flat, weights=wts, minlength=size)
    acc_v = np.bincount(flat, weights=wts * np.repeat(values, 4), minlength=size)
    return acc_v.reshape(shape), acc_w.reshape(shape)


def fold_periodic(arr: np.ndarray, geom: GridGeometry2D, periodic) -> None:
    """Merge accumulations of image nodes (index k and k + n are the same node)."""
    px, py = periodic
    nx, ny = geom.nx, geom.ny
    if px:
        arr[:, nx] += arr[:, 0]
        arr[:, 1] += arr[:, nx + 1]
        arr[:, 0] = arr[:, nx]
        arr[:, nx + 1] = arr[:, 1]
    if py:
        arr[ny, :] += arr[0, :]
        arr[1, :] += arr[ny + 1, :]
        arr[0, :] = arr[ny, :]
        arr[ny + 1, :] = arr[1, :]


def markers_to_grid(pool: MarkerPool, prop: str, role: str, geom: GridGeometry2D,
                    periodic=(False, False)):
    """Weighted average of a marker property on the nodes of ``role``.

    Returns ``(values, empty)`` where ``empty`` flags nodes that received no
    weight; their value is 0.
    """
    if pool.count == 0:
        return geom.zeros(), np.ones(geom.shape, dtype=bool)
    _check_cover(pool, geom, role)
    i, j, w = marker_stencil(pool.xm, pool.ym, geom, role)
    acc_v, acc_w = scatter_weighted(geom.shape, i, j, w, pool.props[prop])
    fold_periodic(acc_v, geom, periodic)
    fold_periodic(acc_w, geom, periodic)
    empty = acc_w == 0.0
    out = np.divide(acc_v, acc_w, out=np.zeros_like(acc_v), where=~empty)
    return out, empty


def gather(field_arr, i, j, w):
    w00, w01, w10, w11 = w
    return (w00 * field_arr[i, j] + w01 * field_arr[i, j + 1]
            + w10 * field_arr[i + 1, j] + w11 * field_arr[i + 1, j + 1])


def grid_to_markers(pool: MarkerPool, field_arr: np.ndarray, role: str,
                    geom: GridGeometry2D) -> np.ndarray:
    """Bilinear interpolation of a nodal field to the markers (no normalization)."""
    _check_cover(pool, geom, role)
    i, j, w = marker_stencil(pool.xm, pool.ym, geom, role)
    return gather(field_arr, i, j, w)


# ---------------------------------------------------------------------------
# time step and integrators
# ---------------------------------------------------------------------------

def compute_timestep(vx, vy, policy: TimeStepPolicy, geom: GridGeometry2D) -> float:
    rows, cols = geom.role_extent("vx")
    ux = float(np.max(np.abs(vx[rows, cols]), initial=0.0))
    rows, cols = geom.role_extent("vy")
    uy = float(np.max(np.abs(vy[rows, cols]), initial=0.0))
    lim = np.inf
    if ux > 0:
        lim = min(lim, geom.dx / ux)
    if uy > 0:
        lim = min(lim, geom.dy / uy)
    return float(min(policy.max_dt, policy.cfl_fraction * lim))


class _Velocity:
    """Velocity sampler over one pair of staggered fields."""

    def __init__(self, vx, vy, geom, periodic):
        self.vx, self.vy, self.geom = vx, vy, geom
        self.periodic = tuple(bool(p) for p in periodic)

    def wrap(self, x, y):
        g = self.geom
        if self.periodic[0]:
            x = g.x0 + np.mod(x - g.x0, g.xsize)
        if self.periodic[1]:
            y = g.y0 + np.mod(y - g.y0, g.ysize)
        return x, y

    def check(self, x, y, what):
        g = self.geom
        bad = np.zeros(x.shape, dtype=bool)
        if not self.periodic[0]:
            bad |= (x < g.x0) | (x > g.x0 + g.xsize)
        if not self.periodic[1]:
            bad |= (y < g.y0) | (y > g.y0 + g.ysize)
        bad |= ~(np.isfinite(x) & np.isfinite(y))
        if bad.any():
            m = int(np.flatnonzero(bad)[0])
            raise OutOfDomainError(f"{what}: marker {m} left the domain at ({x[m]!r}, {y[m]!r})")

    def __call__(self, x, y):
        g = self.geom
        i, j, w = marker_stencil(x, y, g, "vx")
        u = gather(self.vx, i, j, w)
        i, j, w = marker_stencil(x, y, g, "vy")
        v = gather(self.vy, i, j, w)
        return u, v


def _finish(pool, vel, x, y):
    x, y = vel.wrap(x, y)
    vel.check(x, y, "advection")
    return pool.with_positions(x, y)


def advect_euler(pool, vx, vy, dt, geom, periodic=(False, False)) -> MarkerPool:
    vel = _Velocity(vx, vy, geom, periodic)
    u, v = vel(pool.xm, pool.ym)
    return _finish(pool, vel, pool.xm + dt * u, pool.ym + dt * v)


def advect_heun(pool, vx, vy, dt, geom, periodic=(False, False)) -> MarkerPool:
    vel = _Velocity(vx, vy, geom, periodic)
    x, y = pool.xm, pool.ym
    u1, v1 = vel(x, y)
    xs, ys = vel.wrap(x + dt * u1, y + dt * v1)
    vel.check(xs, ys, "predictor stage")
    u2, v2 = vel(xs, ys)
    return _finish(pool, vel, x + 0.5 * dt * (u1 + u2), y + 0.5 * dt * (v1 + v2))


def advect_rk4(pool, vx, vy, dt, geom, periodic=(False, False)) -> MarkerPool:
    vel = _Velocity(vx, vy, geom, periodic)
    x, y = pool.xm, pool.ym
    ks = []
    for c in (0.0, 0.5, 0.5, 1.0):
        if ks:
            xs, ys = vel.wrap(x + c * dt * ks[-1][0], y + c * dt * ks[-1][1])
            vel.check(xs, ys, "intermediate stage")
        else:
            xs, ys = x, y
        ks.append(vel(xs, ys))
    ue = (ks[0][0] + 2.0 * ks[1][0] + 2.0 * ks[2][0] + ks[3][0]) / 6.0
    ve = (ks[0][1] + 2.0 * ks[1][1] + 2.0 * ks[2][1] + ks[3][1]) / 6.0
    return _finish(pool, vel, x + dt * ue, y + dt * ve)


def _derivs(arr, geom, order):
    # central differences on the node lattice of the array (one-sided at edges)
    d_dy, d_dx = np.gradient(arr, geom.dy, geom.dx)
    out = {"x": d_dx, "y": d_dy}
    if order == 3:
        d_dxdy, d_dxdx = np.gradient(d_dx, geom.dy, geom.dx)
        d_dydy = np.gradient(d_dy, geom.dy, axis=0)
        out.update(xx=d_dxdx, xy=d_dxdy, yy=d_dydy)
    return out


def advect_lpi(pool, vx, vy, dt, geom, order=2, periodic=(False, False)) -> MarkerPool:
    """Local Taylor expansion of the trajectory using velocity derivatives at the
    marker: ``x + dt v + dt^2/2 J v (+ dt^3/6 H:vv)``."""
    if order not in (2, 3):
        raise ValueError(f"order must be 2 or 3, got {order!r}")
    vel = _Velocity(vx, vy, geom, periodic)
    x, y = pool.xm, pool.ym
    u, v = vel(x, y)
    iu, ju, wu = marker_stencil(x, y, geom, "vx")
    iv, jv, wv = marker_stencil(x, y, geom, "vy")
    du, dv = _derivs(vx, geom, order), _derivs(vy, geom, order)
    ux, uy = gather(du["x"], iu, ju, wu), gather(du["y"], iu, ju, wu)
    vx_, vy_ = gather(dv["x"], iv, jv, wv), gather(dv["y"], iv, jv, wv)
    xn = x + dt * u + 0.5 * dt**2 * (ux * u + uy * v)
    yn = y + dt * v + 0.5 * dt**2 * (vx_ * u + vy_ * v)
    if order == 3:
        hu = {k: gather(du[k], iu, ju, wu) for k in ("xx", "xy", "yy")}
        hv = {k: gather(dv[k], iv, jv, wv) for k in ("xx", "xy", "yy")}
        xn = xn + dt**3 / 6.0 * (hu["xx"] * u * u + 2.0 * hu["xy"] * u * v + hu["yy"] * v * v)
        yn = yn + dt**3 / 6.0 * (hv["xx"] * u * u + 2.0 * hv["xy"] * u * v + hv["yy"] * v * v)
    return _finish(pool, vel, xn, yn)


INTEGRATORS = {
    "euler": advect_euler,
    "heun": advect_heun,
    "rk4": advect_rk4,
    "lpi2": lambda pool, vx, vy, dt, geom, periodic=(False, False):
        advect_lpi(pool, vx, vy, dt, geom, 2, periodic),
    "lpi3": lambda pool, vx, vy, dt, geom, periodic=(False, False):
        advect_lpi(pool, vx, vy, dt, geom, 3, periodic),
}
