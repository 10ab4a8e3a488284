"""Staggered grid geometry, field storage and velocity boundary conditions.

Layout (row-major, ``i`` = row along y, ``j`` = column along x), for a grid of
``nx`` by ``ny`` cells.  Every field is stored in an array of shape
``(ny + 2, nx + 2)``: one row/column per basic node plus one padding
row/column.  A staggered quantity shares the index of the basic node at the
lower-right corner of its cell::

    basic  (i, j) at (x_j,          y_i)
    vx     (i, j) at (x_j,          y_i - dy/2)
    vy     (i, j) at (x_j - dx/2,   y_i)
    p      (i, j) at (x_j - dx/2,   y_i - dy/2)

The y axis points down (depth), so row 0 is the top boundary.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

ROLES = ("basic", "vx", "vy", "p")

# (shift in x, shift in y) of each role in units of the spacing
_ROLE_SHIFT = {
    "basic": (0.0, 0.0),
    "vx": (0.0, -0.5),
    "vy": (-0.5, 0.0),
    "p": (-0.5, -0.5),
}

SIDES = ("west", "east", "north", "south")
BC_KINDS = ("no-slip", "free-slip", "periodic")


@dataclass(frozen=True)
class GridGeometry2D:
    """Uniform staggered grid with ``nx`` by ``ny`` cells."""

    nx: int
    ny: int
    xsize: float
    ysize: float
    x0: float = 0.0
    y0: float = 0.0

    @property
    def dx(self) -> float:
        return self.xsize / self.nx

    @property
    def dy(self) -> float:
        return self.ysize / self.ny

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.nx + 1)

    @property
    def y(self) -> np.ndarray:
        return self.y0 + self.dy * np.arange(self.ny + 1)

    @property
    def shape(self) -> tuple[int, int]:
        """Shape shared by every field array."""
        return (self.ny + 2, self.nx + 2)

    def role_coords(self, role: str) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates ``(xr, yr)`` along columns and rows, padding included."""
        sx, sy = _ROLE_SHIFT[role]
        xr = self.x0 + self.dx * (np.arange(self.nx + 2) + sx)
        yr = self.y0 + self.dy * (np.arange(self.ny + 2) + sy)
        return xr, yr

    def role_origin(self, role: str) -> tuple[float, float]:
        sx, sy = _ROLE_SHIFT[role]
        return self.x0 + sx * self.dx, self.y0 + sy * self.dy

    def role_extent(self, role: str) -> tuple[slice, slice]:
        """Rows/columns holding positional (non-padding) nodes of ``role``."""
        ny, nx = self.ny, self.nx
        rows = slice(0, ny + 2) if role in ("vx", "p") else slice(0, ny + 1)
        cols = slice(0, nx + 2) if role in ("vy", "p") else slice(0, nx + 1)
        return rows, cols

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def coarsened(self, nx: int, ny: int) -> "GridGeometry2D":
        return GridGeometry2D(nx, ny, self.xsize, self.ysize, self.x0, self.y0)


def make_uniform_grid(nx: int, ny: int, xsize: float, ysize: float) -> GridGeometry2D:
    if int(nx) != nx or int(ny) != ny or nx < 2 or ny < 2:
        raise ValueError(f"need at least 2 cells per axis, got nx={nx}, ny={ny}")
    if not (xsize > 0 and ysize > 0):
        raise ValueError(f"domain extents must be positive, got {xsize} x {ysize}")
    return GridGeometry2D(int(nx), int(ny), float(xsize), float(ysize))


# Index ranges (inclusive start, exclusive stop) of the equation nodes of each
# unknown for a non-periodic grid; these follow the operator loop bounds.
def equation_ranges(geom: GridGeometry2D) -> dict[str, tuple[int, int, int, int]]:
    ny, nx = geom.ny, geom.nx
    return {
        "vx": (1, ny + 1, 1, nx),
        "vy": (1, ny, 1, nx + 1),
        "p": (1, ny + 1, 1, nx + 1),
    }


def equation_mask(geom: GridGeometry2D, name: str) -> np.ndarray:
    i0, i1, j0, j1 = equation_ranges(geom)[name]
    m = np.zeros(geom.shape, dtype=bool)
    m[i0:i1, j0:j1] = True
    return m


@dataclass
class FieldSet:
    """Nodal arrays for one grid; all share ``geom.shape``."""

    geom: GridGeometry2D
    vx: np.ndarray
    vy: np.ndarray
    p: np.ndarray
    etab: np.ndarray
    etap: np.ndarray
    rho: np.ndarray

    @classmethod
    def allocate(cls, geom: GridGeometry2D, eta: float = 1.0, rho: float = 0.0) -> "FieldSet":
        z = geom.zeros
        return cls(geom, z(), z(), z(), np.full(geom.shape, float(eta)),
                   np.full(geom.shape, float(eta)), np.full(geom.shape, float(rho)))

    def copy(self) -> "FieldSet":
        return FieldSet(self.geom, self.vx.copy(), self.vy.copy(), self.p.copy(),
                        self.etab.copy(), self.etap.copy(), self.rho.copy())


@dataclass(frozen=True)
class BcSpec:
    """Boundary tag per side and velocity component."""

    vx: dict = field(default_factory=lambda: dict.fromkeys(SIDES, "free-slip"))
    vy: dict = field(default_factory=lambda: dict.fromkeys(SIDES, "free-slip"))

    def __post_init__(self):
        for comp in ("vx", "vy"):
            tags = getattr(self, comp)
            if set(tags) != set(SIDES):
                raise ValueError(f"{comp}: need tags for exactly {SIDES}")
            for side, tag in tags.items():
                if tag not in BC_KINDS:
                    raise ValueError(f"{comp}.{side}: unknown boundary kind {tag!r}")
            for a, b in (("west", "east"), ("north", "south")):
                if (tags[a] == "periodic") != (tags[b] == "periodic"):
                    raise ValueError(f"{comp}: periodic must be set on both {a} and {b}")

    @classmethod
    def uniform(cls, kind: str) -> "BcSpec":
        return cls(dict.fromkeys(SIDES, kind), dict.fromkeys(SIDES, kind))

    @property
    def periodic_x(self) -> bool:
        return self.vx["west"] == "periodic" or self.vy["west"] == "periodic"

    @property
    def periodic_y(self) -> bool:
        return self.vx["north"] == "periodic" or self.vy["north"] == "periodic"


class _Rule(NamedTuple):
    dst: tuple[np.ndarray, np.ndarray]
    src: tuple[np.ndarray, np.ndarray] | None
    sign: float


class BcPlan:
    """Boundary writes of a ``BcSpec`` on a grid, grouped so that no group reads
    an entry written by the same group.

    Groups run in order: wall-normal zeros, tangential mirrors, periodic images.
    """

    def __init__(self, geom: GridGeometry2D, bc: BcSpec):
        self.geom, self.bc = geom, bc
        self.groups = {"vx": self._build(geom, bc, "vx"), "vy": self._build(geom, bc, "vy")}

    @staticmethod
    def _build(geom, bc, comp):
        nx, ny = geom.nx, geom.ny
        tags = getattr(bc, comp)
        px = tags["west"] == "periodic"
        py = tags["north"] == "periodic"
        zeros, mirrors, images = [], [], []

        def idx(rows, cols):
            r, c = np.meshgrid(np.atleast_1d(rows), np.atleast_1d(cols), indexing="ij")
            return r.ravel(), c.ravel()

        if comp == "vx":
            # walls are columns 0 and nx; mirror rows are 0 and ny + 1
            all_rows = np.arange(0, ny + 2)
            if not px:
                zeros.append(idx(all_rows, [0, nx]))
            cols = np.arange(1, nx + 1) if px else np.arange(1, nx)
            if not py:
                for side, dst, src in (("north", 0, 1), ("south", ny + 1, ny)):
                    s = -1.0 if tags[side] == "no-slip" else 1.0
                    mirrors.append(_Rule(idx(dst, cols), idx(src, cols), s))
            if px:
                images.append(_Rule(idx(all_rows, 0), idx(all_rows, nx), 1.0))
                images.append(_Rule(idx(all_rows, nx + 1), idx(all_rows, 1), 1.0))
            if py:
                c = np.arange(0, nx + 2) if px else np.arange(0, nx + 1)
                images.append(_Rule(idx(0, c), idx(ny, c), 1.0))
                images.append(_Rule(idx(ny + 1, c), idx(1, c), 1.0))
        else:
            all_cols = np.arange(0, nx + 2)
            if not py:
                zeros.append(idx([0, ny], all_cols))
            rows = np.arange(1, ny + 1) if py else np.arange(1, ny)
            if not px:
                for side, dst, src in (("west", 0, 1), ("east", nx + 1, nx)):
                    s = -1.0 if tags[side] == "no-slip" else 1.0
                    mirrors.append(_Rule(idx(rows, dst), idx(rows, src), s))
            if py:
                images.append(_Rule(idx(0, all_cols), idx(ny, all_cols), 1.0))
                images.append(_Rule(idx(ny + 1, all_cols), idx(1, all_cols), 1.0))
            if px:
                r = np.arange(0, ny + 2) if py else np.arange(0, ny + 1)
                images.append(_Rule(idx(r, 0), idx(r, nx), 1.0))
                images.append(_Rule(idx(r, nx + 1), idx(r, 1), 1.0))

        zero_rules = [_Rule(z, None, 0.0) for z in zeros]
        return [zero_rules, mirrors, images]

    def apply(self, vx: np.ndarray, vy: np.ndarray) -> None:
        for comp, arr in (("vx", vx), ("vy", vy)):
            for group in self.groups[comp]:
                for rule in group:
                    if rule.src is None:
                        arr[rule.dst] = 0.0
                    else:
                        arr[rule.dst] = rule.sign * arr[rule.src]

    def flat(self, comp: str):
        """Rules of one component as flat ``(dst, src, sign)`` arrays in
        application order; ``src == -1`` marks a zero write."""
        ncol = self.geom.nx + 2
        dst, src, sign = [], [], []
        for group in self.groups[comp]:
            for rule in group:
                d = rule.dst[0] * ncol + rule.dst[1]
                dst.append(d)
                if rule.src is None:
                    src.append(np.full(d.size, -1, dtype=np.int64))
                else:
                    src.append(rule.src[0] * ncol + rule.src[1])
                sign.append(np.full(d.size, rule.sign))
        if not dst:
            return np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0)
        return (np.concatenate(dst).astype(np.int64), np.concatenate(src).astype(np.int64),
                np.concatenate(sign))

    def window(self, i0: int, j0: int, shape: tuple[int, int]) -> "WindowBcPlan":
        """Rules restricted to a sub-array whose origin is global ``(i0, j0)``."""
        return WindowBcPlan(self, i0, j0, shape)


class WindowBcPlan:
    """A ``BcPlan`` clipped to a window; rules whose source lies outside are dropped."""

    def __init__(self, plan: BcPlan, i0: int, j0: int, shape: tuple[int, int]):
        h, w = shape
        self.groups = {}
        for comp, groups in plan.groups.items():
            out = []
            for group in groups:
                g = []
                for rule in group:
                    di, dj = rule.dst[0] - i0, rule.dst[1] - j0
                    keep = (di >= 0) & (di < h) & (dj >= 0) & (dj < w)
                    if rule.src is not None:
                        si, sj = rule.src[0] - i0, rule.src[1] - j0
                        keep &= (si >= 0) & (si < h) & (sj >= 0) & (sj < w)
                        if keep.any():
                            g.append(_Rule((di[keep], dj[keep]), (si[keep], sj[keep]), rule.sign))
                    elif keep.any():
                        g.append(_Rule((di[keep], dj[keep]), None, 0.0))
                out.append(g)
            self.groups[comp] = out

    apply = BcPlan.apply


def apply_velocity_bc(fields: FieldSet, bc: BcSpec) -> FieldSet:
    """Overwrite boundary entries of ``fields.vx``/``fields.vy`` in place."""
    BcPlan(fields.geom, bc).apply(fields.vx, fields.vy)
    return fields


class ScalingSet(NamedTuple):
    T0: float
    L0: float
    M0: float
    rho0: float
    g0: float

    def scale(self, *, eta=None, length=None, rho=None, g=None, time=None):
        """Dimensionless values of the given physical quantities (same order)."""
        out = []
        if eta is not None:
            out.append(np.asarray(eta) / (self.M0 / (self.L0 * self.T0)))
        if length is not None:
            out.append(np.asarray(length) / self.L0)
        if rho is not None:
            out.append(np.asarray(rho) / self.rho0)
        if g is not None:
            out.append(np.asarray(g) / self.g0)
        if time is not None:
            out.append(np.asarray(time) / self.T0)
        return out[0] if len(out) == 1 else tuple(out)


def unit_scaling(t0: float, x0: float, eta0: float) -> ScalingSet:
    if not (t0 > 0 and x0 > 0 and eta0 > 0):
        raise ValueError("reference time, length and viscosity must be positive")
    m0 = eta0 * x0 * t0
    return ScalingSet(T0=t0, L0=x0, M0=m0, rho0=m0 / x0**3, g0=x0 / t0**2)
