"""Halo exchange, distributed marker/grid transfers and marker migration."""
from __future__ import annotations

from collections import Counter

import numpy as np

from ..markers import MarkerPool, OutOfDomainError, gather, locate, role_cells
from .topology import DIRECTIONS, OFFSETS, OPPOSITE, Subdomain

TAG_HALO = 100
TAG_REDUCE = 200
TAG_COUNT = 300
TAG_MARKERS = 400


class MigrationError(RuntimeError):
    """A marker moved further than one neighbouring subdomain."""


# ---------------------------------------------------------------------------
# halo exchange
# ---------------------------------------------------------------------------

def _edges(n):
    # (send index, receive index) per side along one axis of a local array with
    # n interior entries: send the first/last interior, receive into the halo
    return {"lo": (1, 0), "hi": (n, n + 1)}


def halo_exchange(arrs, sub: Subdomain, ep, tag=TAG_HALO):
    """Refresh the halo layer of one or more local arrays (x phase, then y)."""
    arrs = list(arrs) if isinstance(arrs, (list, tuple)) else [arrs]
    nb = sub.topo.neighbors
    h, w = arrs[0].shape
    ny_i, nx_i = h - 2, w - 2
    ex = _edges(nx_i)
    # x phase: full-height columns
    for d, side in (("E", "hi"), ("W", "lo")):
        if nb[d] is not None:
            src = ex[side][0]
            ep.send(nb[d], tag + DIRECTIONS.index(d),
                    np.concatenate([a[:, src] for a in arrs]))
    for d, side in (("W", "lo"), ("E", "hi")):
        if nb[d] is not None:
            data = ep.recv(nb[d], tag + DIRECTIONS.index(OPPOSITE[d]), f"halo from {d}")
            dst = ex[side][1]
            for k, a in enumerate(arrs):
                a[:, dst] = data[k * h:(k + 1) * h]
    ey = _edges(ny_i)
    # y phase: full-width rows, halo columns included so corners propagate
    for d, side in (("S", "hi"), ("N", "lo")):
        if nb[d] is not None:
            src = ey[side][0]
            ep.send(nb[d], tag + DIRECTIONS.index(d),
                    np.concatenate([a[src, :] for a in arrs]))
    for d, side in (("N", "lo"), ("S", "hi")):
        if nb[d] is not None:
            data = ep.recv(nb[d], tag + DIRECTIONS.index(OPPOSITE[d]), f"halo from {d}")
            dst = ey[side][1]
            for k, a in enumerate(arrs):
                a[dst, :] = data[k * w:(k + 1) * w]
    return arrs


def halo_reduce(arrs, sub: Subdomain, ep, tag=TAG_REDUCE):
    """Add halo accumulations into the neighbours' edge interior nodes.

    Reverse order of the exchange: y first with full-width rows, then x on
    interior rows, so corner contributions reach the diagonal neighbour.
    """
    arrs = list(arrs)
    nb = sub.topo.neighbors
    h, w = arrs[0].shape
    ny_i, nx_i = h - 2, w - 2
    ey = _edges(ny_i)
    for d, side in (("S", "hi"), ("N", "lo")):
        if nb[d] is not None:
            halo = ey[side][1]
            ep.send(nb[d], tag + DIRECTIONS.index(d), np.concatenate([a[halo, :] for a in arrs]))
    for d, side in (("N", "lo"), ("S", "hi")):
        if nb[d] is not None:
            data = ep.recv(nb[d], tag + DIRECTIONS.index(OPPOSITE[d]), f"reduction from {d}")
            edge = ey[side][0]
            for k, a in enumerate(arrs):
                a[edge, :] += data[k * w:(k + 1) * w]
    ex = _edges(nx_i)
    for d, side in (("E", "hi"), ("W", "lo")):
        if nb[d] is not None:
            halo = ex[side][1]
            ep.send(nb[d], tag + DIRECTIONS.index(d),
                    np.concatenate([a[1:ny_i + 1, halo] for a in arrs]))
    for d, side in (("W", "lo"), ("E", "hi")):
        if nb[d] is not None:
            data = ep.recv(nb[d], tag + DIRECTIONS.index(OPPOSITE[d]), f"reduction from {d}")
            edge = ex[side][0]
            for k, a in enumerate(arrs):
                a[1:ny_i + 1, edge] += data[k * ny_i:(k + 1) * ny_i]
    return arrs


# ---------------------------------------------------------------------------
# local bilinear stencil
# ---------------------------------------------------------------------------

def _to_local(k, base, span, n_cells, periodic):
    loc = k - base
    if periodic:
        loc = np.where(loc < 0, loc + n_cells, loc)
        loc = np.where(loc > span, loc - n_cells, loc)
    return loc


def local_stencil(xm, ym, sub: Subdomain, role: str):
    """Local lower-left indices and weights; weights use the global cell so they
    are bit-identical to the single-domain computation."""
    g = sub.geom
    ox, oy = g.role_origin(role)
    ncx, ncy = role_cells(g, role)
    j, fx = locate(xm, ox, g.dx, ncx)
    i, fy = locate(ym, oy, g.dy, ncy)
    h, w = sub.shape
    px, py = sub.topo.periodic
    lj = _to_local(j, sub.j0 - 1, w - 2, g.nx, px)
    li = _to_local(i, sub.i0 - 1, h - 2, g.ny, py)
    if np.any((lj < 0) | (lj > w - 2) | (li < 0) | (li > h - 2)):
        m = int(np.flatnonzero((lj < 0) | (lj > w - 2) | (li < 0) | (li > h - 2))[0])
        raise OutOfDomainError(f"rank {sub.topo.rank}: marker {m} at ({xm[m]!r}, {ym[m]!r}) "
                               f"is outside the local {role} grid")
    gx, gy = 1.0 - fx, 1.0 - fy
    return li, lj, (gx * gy, fx * gy, gx * fy, fx * fy)


def local_grid_to_markers(pool: MarkerPool, local_field, role, sub: Subdomain):
    i, j, w = local_stencil(pool.xm, pool.ym, sub, role)
    return gather(local_field, i, j, w)


def distributed_markers_to_grid(pool: MarkerPool, prop: str, role: str, sub: Subdomain, ep):
    """Two-stage reduction: local accumulation, halo reduction, normalization,
    halo exchange of the normalized values.  Returns ``(values, empty)``."""
    from ..markers import scatter_weighted
    shape = sub.shape
    if pool.count:
        i, j, w = local_stencil(pool.xm, pool.ym, sub, role)
        acc_v, acc_w = scatter_weighted(shape, i, j, w, pool.props[prop])
    else:
        acc_v, acc_w = np.zeros(shape), np.zeros(shape)
    halo_reduce([acc_v, acc_w], sub, ep)
    vals = np.divide(acc_v, acc_w, out=np.zeros(shape), where=acc_w != 0.0)
    halo_exchange([vals, acc_w], sub, ep)
    return vals, acc_w == 0.0


# ---------------------------------------------------------------------------
# migration and advection
# ---------------------------------------------------------------------------

def _direction(dcx, dcy):
    for d, off in OFFSETS.items():
        if off == (dcx, dcy):
            return d
    return None


def _step_delta(owner, mine, parts, periodic):
    d = owner - mine
    if periodic and parts > 1:
        d = np.mod(d, parts)
        d = np.where(d == parts - 1, -1, d) if parts > 2 else d
        # with two ranks both neighbours coincide; 1 means "the other rank"
    return d


def migrate_markers(pool: MarkerPool, sub: Subdomain, ep, names=None, stats=None):
    """Send markers that left the owned region to the adjacent owner, receive
    the neighbours' emigrants and return the compacted pool."""
    names = list(pool.props) if names is None else list(names)
    topo = sub.topo
    cx, cy = sub.owner_coords(pool.xm, pool.ym)
    dx = _step_delta(cx, topo.coords[0], topo.px, topo.periodic[0])
    dy = _step_delta(cy, topo.coords[1], topo.py, topo.periodic[1])
    bad = (np.abs(dx) > 1) | (np.abs(dy) > 1)
    if bad.any():
        m = int(np.flatnonzero(bad)[0])
        raise MigrationError(
            f"rank {topo.rank}: marker {m} at ({pool.xm[m]!r}, {pool.ym[m]!r}) moved beyond "
            f"the adjacent subdomains (rank offset {int(dx[m])}, {int(dy[m])})")
    stay = (dx == 0) & (dy == 0)
    outgoing = {}
    for d in DIRECTIONS:
        ox, oy = OFFSETS[d]
        sel = (dx == ox) & (dy == oy)
        if sel.any():
            if topo.neighbors[d] is None:
                m = int(np.flatnonzero(sel)[0])
                raise MigrationError(f"rank {topo.rank}: marker {m} left the domain towards {d}")
            outgoing[d] = np.flatnonzero(sel)
    ncol = 2 + len(names)
    for d in DIRECTIONS:
        if topo.neighbors[d] is not None:
            n = outgoing.get(d, np.empty(0, np.int64)).size
            ep.send(topo.neighbors[d], TAG_COUNT + DIRECTIONS.index(d), [float(n)])
    for d, idx in outgoing.items():
        rows = np.column_stack([pool.xm[idx], pool.ym[idx]] + [pool.props[k][idx] for k in names])
        ep.send(topo.neighbors[d], TAG_MARKERS + DIRECTIONS.index(d), rows)
    parts = [pool.take(np.flatnonzero(stay))]
    for d in DIRECTIONS:
        src = topo.neighbors[d]
        if src is None:
            continue
        tag = DIRECTIONS.index(OPPOSITE[d])
        n = int(ep.recv(src, TAG_COUNT + tag, f"marker count from {d}")[0])
        if n:
            rows = ep.recv(src, TAG_MARKERS + tag, f"markers from {d}").reshape(n, ncol)
            parts.append(MarkerPool(rows[:, 0].copy(), rows[:, 1].copy(),
                                    {k: rows[:, 2 + c].copy() for c, k in enumerate(names)}))
    if stats is not None:
        stats.update(sent=sum(v.size for v in outgoing.values()),
                     payload_messages=len(outgoing))
    return MarkerPool.concat(parts, names)


def distributed_advect_step(pool: MarkerPool, vx_loc, vy_loc, dt, sub: Subdomain, ep,
                            stats=None):
    """Forward Euler with halo-local velocity sampling, then migration."""
    g = sub.geom
    u = local_grid_to_markers(pool, vx_loc, "vx", sub)
    v = local_grid_to_markers(pool, vy_loc, "vy", sub)
    x = pool.xm + dt * u
    y = pool.ym + dt * v
    px, py = sub.topo.periodic
    if px:
        x = g.x0 + np.mod(x - g.x0, g.xsize)
    if py:
        y = g.y0 + np.mod(y - g.y0, g.ysize)
    out = ((not px) & ((x < g.x0) | (x > g.x0 + g.xsize))) | \
          ((not py) & ((y < g.y0) | (y > g.y0 + g.ysize)))
    if np.any(out):
        m = int(np.flatnonzero(out)[0])
        raise OutOfDomainError(f"rank {sub.topo.rank}: marker {m} left the domain")
    return migrate_markers(pool.with_positions(x, y), sub, ep, stats=stats)


def message_counts(transport, rank):
    c = transport.sent[rank]
    return Counter({"count": sum(v for k, v in c.items() if TAG_COUNT <= k < TAG_COUNT + 8),
                    "markers": sum(v for k, v in c.items() if TAG_MARKERS <= k < TAG_MARKERS + 8)})
