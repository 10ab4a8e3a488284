"""Matrix-free staggered-grid Stokes operators and energy residual norms.

Momentum stencils are written per stress component at its natural location
(normal stresses at pressure nodes, shear stress at basic nodes) and then
folded into a single point formula, so no stress array is ever formed.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from numba import njit

from .grid import FieldSet, GridGeometry2D, equation_ranges


class NormalizationError(ValueError):
    """The body-force norm used to normalize residuals is zero."""


# ---------------------------------------------------------------------------
# point kernels
# ---------------------------------------------------------------------------

@njit(inline="always")
def vx_center(i, j, etab, etap, dx, dy):
    return -(etab[i - 1, j] + etab[i, j]) / (dy * dy) - 2.0 * (etap[i, j] + etap[i, j + 1]) / (dx * dx)


@njit(inline="always")
def vy_center(i, j, etab, etap, dx, dy):
    return -(etab[i, j - 1] + etab[i, j]) / (dx * dx) - 2.0 * (etap[i, j] + etap[i + 1, j]) / (dy * dy)


@njit(inline="always")
def vx_point(i, j, vx, vy, etab, etap, dx, dy):
    """x-momentum viscous terms at vx node (i, j), pressure excluded."""
    etaA = etap[i, j]
    etaB = etap[i, j + 1]
    eta1 = etab[i - 1, j]
    eta2 = etab[i, j]
    dxdy = dx * dy
    out = (2.0 * etaA / (dx * dx) * vx[i, j - 1]
           + eta1 / (dy * dy) * vx[i - 1, j]
           + (-(eta1 + eta2) / (dy * dy) - 2.0 * (etaA + etaB) / (dx * dx)) * vx[i, j]
           + eta2 / (dy * dy) * vx[i + 1, j]
           + 2.0 * etaB / (dx * dx) * vx[i, j + 1])
    out += (eta1 / dxdy * vy[i - 1, j] - eta2 / dxdy * vy[i, j]
            - eta1 / dxdy * vy[i - 1, j + 1] + eta2 / dxdy * vy[i, j + 1])
    return out


@njit(inline="always")
def vy_point(i, j, vx, vy, etab, etap, dx, dy):
    """y-momentum viscous terms at vy node (i, j), pressure excluded."""
    etaA = etap[i, j]
    etaB = etap[i + 1, j]
    eta1 = etab[i, j - 1]
    eta2 = etab[i, j]
    dxdy = dx * dy
    out = (2.0 * etaA / (dy * dy) * vy[i - 1, j]
           + eta1 / (dx * dx) * vy[i, j - 1]
           + (-(eta1 + eta2) / (dx * dx) - 2.0 * (etaA + etaB) / (dy * dy)) * vy[i, j]
           + eta2 / (dx * dx) * vy[i, j + 1]
           + 2.0 * etaB / (dy * dy) * vy[i + 1, j])
    out += (eta1 / dxdy * vx[i, j - 1] - eta2 / dxdy * vx[i, j]
            - eta1 / dxdy * vx[i + 1, j - 1] + eta2 / dxdy * vx[i + 1, j])
    return out


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@njit(cache=True)
def _vx_apply(vx, vy, p, etab, etap, dx, dy, i0, i1, j0, j1, out):
    for i in range(i0, i1):
        for j in range(j0, j1):
            out[i, j] = vx_point(i, j, vx, vy, etab, etap, dx, dy) - (p[i, j + 1] - p[i, j]) / dx


@njit(cache=True)
def _vy_apply(vx, vy, p, etab, etap, dx, dy, i0, i1, j0, j1, out):
    for i in range(i0, i1):
        for j in range(j0, j1):
            out[i, j] = vy_point(i, j, vx, vy, etab, etap, dx, dy) - (p[i + 1, j] - p[i, j]) / dy


@njit(cache=True)
def _continuity(vx, vy, dx, dy, i0, i1, j0, j1, out):
    for i in range(i0, i1):
        for j in range(j0, j1):
            out[i, j] = (vx[i, j] - vx[i, j - 1]) / dx + (vy[i, j] - vy[i - 1, j]) / dy


@njit(cache=True)
def _diag(etab, etap, dx, dy, ny, nx, dvx, dvy):
    for i in range(1, ny + 1):
        for j in range(1, nx):
            dvx[i, j] = -vx_center(i, j, etab, etap, dx, dy)
    for i in range(1, ny):
        for j in range(1, nx + 1):
            dvy[i, j] = -vy_center(i, j, etab, etap, dx, dy)


# ---------------------------------------------------------------------------
# public operators
# ---------------------------------------------------------------------------

def vx_momentum_apply(fields: FieldSet, geom: GridGeometry2D | None = None) -> np.ndarray:
    g = geom or fields.geom
    out = g.zeros()
    i0, i1, j0, j1 = equation_ranges(g)["vx"]
    _vx_apply(fields.vx, fields.vy, fields.p, fields.etab, fields.etap, g.dx, g.dy, i0, i1, j0, j1, out)
    return out


def vy_momentum_apply(fields: FieldSet, geom: GridGeometry2D | None = None) -> np.ndarray:
    g = geom or fields.geom
    out = g.zeros()
    i0, i1, j0, j1 = equation_ranges(g)["vy"]
    _vy_apply(fields.vx, fields.vy, fields.p, fields.etab, fields.etap, g.dx, g.dy, i0, i1, j0, j1, out)
    return out


def continuity_apply(vx, vy, geom: GridGeometry2D) -> np.ndarray:
    out = geom.zeros()
    i0, i1, j0, j1 = equation_ranges(geom)["p"]
    _continuity(vx, vy, geom.dx, geom.dy, i0, i1, j0, j1, out)
    return out


def pressure_gradient(p, geom: GridGeometry2D):
    """``(G p)`` at velocity nodes; the momentum operator is ``L v + G p``."""
    gx, gy = geom.zeros(), geom.zeros()
    i0, i1, j0, j1 = equation_ranges(geom)["vx"]
    gx[i0:i1, j0:j1] = -(p[i0:i1, j0 + 1:j1 + 1] - p[i0:i1, j0:j1]) / geom.dx
    i0, i1, j0, j1 = equation_ranges(geom)["vy"]
    gy[i0:i1, j0:j1] = -(p[i0 + 1:i1 + 1, j0:j1] - p[i0:i1, j0:j1]) / geom.dy
    return gx, gy


@dataclass
class BodyForce:
    fx: np.ndarray
    fy: np.ndarray

    @classmethod
    def from_density(cls, rho: np.ndarray, g_y: float, geom: GridGeometry2D) -> "BodyForce":
        """Buoyancy at vy nodes with y pointing down: ``fy = -rho g_y``, density
        averaged from the two basic nodes that bracket the vy node."""
        fy = geom.zeros()
        i0, i1, j0, j1 = equation_ranges(geom)["vy"]
        rho_vy = 0.5 * (rho[i0:i1, j0 - 1:j1 - 1] + rho[i0:i1, j0:j1])
        fy[i0:i1, j0:j1] = -rho_vy * g_y
        return cls(geom.zeros(), fy)


def momentum_residual(fields: FieldSet, force: BodyForce):
    g = fields.geom
    rx = np.zeros(g.shape)
    ry = np.zeros(g.shape)
    i0, i1, j0, j1 = equation_ranges(g)["vx"]
    rx[i0:i1, j0:j1] = force.fx[i0:i1, j0:j1] - vx_momentum_apply(fields)[i0:i1, j0:j1]
    i0, i1, j0, j1 = equation_ranges(g)["vy"]
    ry[i0:i1, j0:j1] = force.fy[i0:i1, j0:j1] - vy_momentum_apply(fields)[i0:i1, j0:j1]
    return rx, ry


def diag_minus_L(fields: FieldSet, geom: GridGeometry2D | None = None):
    """Positive diagonal of ``-L`` at vx and vy equation nodes (zero elsewhere)."""
    g = geom or fields.geom
    dvx, dvy = g.zeros(), g.zeros()
    _diag(fields.etab, fields.etap, g.dx, g.dy, g.ny, g.nx, dvx, dvy)
    return dvx, dvy


def schur_diag_surrogate(etap, geom: GridGeometry2D) -> np.ndarray:
    out = geom.zeros()
    i0, i1, j0, j1 = equation_ranges(geom)["p"]
    out[i0:i1, j0:j1] = etap[i0:i1, j0:j1] / (2.0 / geom.dx**2 + 2.0 / geom.dy**2)
    return out


def _wsum(r, w, sl, divide):
    a = r[sl]
    b = w[sl]
    return math.fsum((a * a / b).ravel()) if divide else math.fsum((a * a * b).ravel())


def energy_residual(r_vx, r_vy, r_p, diag, schur, f, geom: GridGeometry2D):
    """``(res_v, res_p, res_total)``; ``res_total`` is normalized by the force norm
    in the same inverse-diagonal metric."""
    rng = equation_ranges(geom)
    sv = {k: np.s_[a:b, c:d] for k, (a, b, c, d) in rng.items()}
    dvx, dvy = diag
    fx, fy = f
    rv2 = _wsum(r_vx, dvx, sv["vx"], True) + _wsum(r_vy, dvy, sv["vy"], True)
    rp2 = _wsum(r_p, schur, sv["p"], False)
    f2 = _wsum(fx, dvx, sv["vx"], True) + _wsum(fy, dvy, sv["vy"], True)
    if not f2 > 0.0:
        raise NormalizationError("body-force norm is zero; relative residual undefined")
    return math.sqrt(rv2), math.sqrt(rp2), math.sqrt((rv2 + rp2) / f2)
