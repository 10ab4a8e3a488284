"""Cartesian rank topology and subdomain decomposition."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..grid import GridGeometry2D


class ConfigurationError(ValueError):
    """Inconsistent decomposition request."""


# y grows downward, so north is cy - 1
DIRECTIONS = ("N", "S", "E", "W", "NE", "NW", "SE", "SW")
OFFSETS = {"N": (0, -1), "S": (0, 1), "E": (1, 0), "W": (-1, 0),
           "NE": (1, -1), "NW": (-1, -1), "SE": (1, 1), "SW": (-1, 1)}
OPPOSITE = {"N": "S", "S": "N", "E": "W", "W": "E",
            "NE": "SW", "SW": "NE", "NW": "SE", "SE": "NW"}


@dataclass(frozen=True)
class RankTopology:
    px: int
    py: int
    periodic: tuple
    rank: int
    coords: tuple
    neighbors: dict

    @property
    def size(self) -> int:
        return self.px * self.py

    def rank_of(self, cx: int, cy: int):
        if self.periodic[0]:
            cx %= self.px
        if self.periodic[1]:
            cy %= self.py
        if not (0 <= cx < self.px and 0 <= cy < self.py):
            return None
        return cy * self.px + cx


def build_topology(px: int, py: int, periodic=(False, False), nranks: int | None = None):
    """One ``RankTopology`` per rank, ranks numbered row-major over (cy, cx)."""
    if px < 1 or py < 1:
        raise ConfigurationError("rank counts must be positive")
    if nranks is not None and nranks != px * py:
        raise ConfigurationError(f"{px}x{py} topology needs {px * py} ranks, got {nranks}")
    periodic = (bool(periodic[0]), bool(periodic[1]))
    out = []
    for r in range(px * py):
        cx, cy = r % px, r // px
        proto = RankTopology(px, py, periodic, r, (cx, cy), {})
        nb = {d: proto.rank_of(cx + ox, cy + oy) for d, (ox, oy) in OFFSETS.items()}
        out.append(RankTopology(px, py, periodic, r, (cx, cy), nb))
    return out


def _axis_range(n_cells, parts, c, periodic):
    w = n_cells // parts
    lo = c * w
    hi = (c + 1) * w
    if c == parts - 1 and not periodic:
        hi = n_cells + 2  # last rank absorbs the wall node and the padding node
    return lo, hi


@dataclass(frozen=True)
class Subdomain:
    """Interior node index ranges ``[i0, i1) x [j0, j1)`` of one rank.

    Local arrays carry one halo layer on every side: local index 0 is global
    ``j0 - 1`` and local index ``j1 - j0 + 1`` is global ``j1``.  The rank owns
    markers in basic cells ``[j0 - 1, j1 - 2]`` (and the same along y), i.e.
    ``[x_{j0} - dx, x_{j1 - 1})``.
    """

    geom: GridGeometry2D
    topo: RankTopology
    i0: int
    i1: int
    j0: int
    j1: int

    @property
    def shape(self):
        return (self.i1 - self.i0 + 2, self.j1 - self.j0 + 2)

    @property
    def width(self):
        return self.geom.nx // self.topo.px

    @property
    def height(self):
        return self.geom.ny // self.topo.py

    def zeros(self):
        return np.zeros(self.shape)

    @property
    def bounds(self):
        g = self.geom
        x = lambda j: g.x0 + j * g.dx
        y = lambda i: g.y0 + i * g.dy
        return (x(self.j0), x(min(self.j1 - 1, g.nx)), y(self.i0), y(min(self.i1 - 1, g.ny)))

    def global_slices(self):
        """Global index slices of the interior and their local counterparts."""
        g = self.geom
        gi1 = min(self.i1, g.ny + 2)
        gj1 = min(self.j1, g.nx + 2)
        glob = np.s_[self.i0:gi1, self.j0:gj1]
        loc = np.s_[1:1 + gi1 - self.i0, 1:1 + gj1 - self.j0]
        return glob, loc

    def scatter(self, global_arr):
        """Copy the interior part of a global array into a fresh local array."""
        out = self.zeros()
        glob, loc = self.global_slices()
        out[loc] = global_arr[glob]
        return out

    def owner_coords(self, xm, ym):
        """Owning rank coordinates of each position (cell-based rule)."""
        g = self.geom
        cx = _owner_axis(xm, g.x0, g.dx, g.nx, self.width, self.topo.px, self.topo.periodic[0])
        cy = _owner_axis(ym, g.y0, g.dy, g.ny, self.height, self.topo.py, self.topo.periodic[1])
        return cx, cy

    def owns(self, xm, ym):
        cx, cy = self.owner_coords(xm, ym)
        return (cx == self.topo.coords[0]) & (cy == self.topo.coords[1])


def _owner_axis(x, origin, h, n_cells, w, parts, periodic):
    c = np.floor((x - origin) / h).astype(np.int64)
    np.clip(c, 0, n_cells - 1, out=c)
    o = (c + 1) // w
    if periodic:
        return o % parts
    return np.minimum(o, parts - 1)


def decompose(geom: GridGeometry2D, topo: RankTopology) -> Subdomain:
    if geom.nx % topo.px or geom.ny % topo.py:
        raise ConfigurationError(
            f"{geom.nx}x{geom.ny} cells do not divide evenly over {topo.px}x{topo.py} ranks")
    if geom.nx // topo.px < 2 or geom.ny // topo.py < 2:
        raise ConfigurationError("each rank needs at least two cells per axis")
    cx, cy = topo.coords
    j0, j1 = _axis_range(geom.nx, topo.px, cx, topo.periodic[0])
    i0, i1 = _axis_range(geom.ny, topo.py, cy, topo.periodic[1])
    return Subdomain(geom, topo, i0, i1, j0, j1)
