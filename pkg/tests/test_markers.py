import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_markers_to_grid
from micstokes.grid import make_uniform_grid
from micstokes.markers import (INTEGRATORS, MarkerPool, OutOfDomainError, TimeStepPolicy,
                               advect_euler, advect_heun, advect_lpi, advect_rk4,
                               bilinear_weights, compute_timestep, grid_to_markers,
                               markers_to_grid, role_cells, seed_markers)

ROLES = ("basic", "vx", "vy", "p")


def _pool(g, n, seed=0, **props):
    rng = np.random.default_rng(seed)
    xm = rng.uniform(g.x0, g.x0 + g.xsize, n)
    ym = rng.uniform(g.y0, g.y0 + g.ysize, n)
    pr = {k: (v(rng, n) if callable(v) else np.full(n, float(v))) for k, v in props.items()}
    return MarkerPool(xm, ym, pr)


def test_bilinear_weights_examples():
    assert bilinear_weights(0.0, 0.0, 2.0, 3.0) == (1.0, 0.0, 0.0, 0.0)
    assert bilinear_weights(1.0, 1.5, 2.0, 3.0) == (0.25, 0.25, 0.25, 0.25)


def test_bilinear_weights_reject_outside():
    with pytest.raises(ValueError):
        bilinear_weights(2.5, 0.0, 2.0, 3.0)
    with pytest.raises(ValueError):
        bilinear_weights(0.0, -0.1, 2.0, 3.0)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_partition_of_unity(fx, fy, dx, dy):
    w = bilinear_weights(fx * dx, fy * dy, dx, dy)
    assert abs(sum(w) - 1.0) <= 4e-16


def test_partition_of_unity_offset_lattice():
    f = np.linspace(0.0, 1.0, 101)
    FX, FY = np.meshgrid(f, f)
    w = bilinear_weights(FX * 0.3, FY * 0.7, 0.3, 0.7)
    assert np.abs(sum(w) - 1.0).max() <= 4e-16


@pytest.mark.parametrize("role", ROLES)
def test_constant_property_reproduced(role):
    g = make_uniform_grid(8, 6, 1.0, 1.0)
    pool = _pool(g, 3000, c=2.5)
    vals, empty = markers_to_grid(pool, "c", role, g)
    # ratio of two accumulated sums: exact up to a few ulps
    assert np.all(np.abs(vals[~empty] - 2.5) <= 1e-14 * 2.5)
    back = grid_to_markers(pool, vals, role, g)
    np.testing.assert_allclose(back, 2.5, rtol=1e-14)


def test_single_marker_on_node():
    g = make_uniform_grid(4, 4, 1.0, 1.0)
    pool = MarkerPool([g.x[2]], [g.y[1]], {"v": [7.0]})
    vals, empty = markers_to_grid(pool, "v", "basic", g)
    assert vals[1, 2] == 7.0
    assert empty.sum() == empty.size - 1


def test_empty_pool_flags_everything():
    g = make_uniform_grid(4, 4, 1.0, 1.0)
    vals, empty = markers_to_grid(MarkerPool(np.empty(0), np.empty(0), {"v": np.empty(0)}),
                                  "v", "p", g)
    assert empty.all() and not vals.any()


@pytest.mark.parametrize("role", ROLES)
def test_markers_to_grid_matches_serial_accumulator(role):
    g = make_uniform_grid(8, 8, 1.0, 1.0)
    pool = _pool(g, 500, seed=4, phi=lambda r, n: r.standard_normal(n))
    vals, empty = markers_to_grid(pool, "phi", role, g)
    num, den = brute_markers_to_grid(pool.xm, pool.ym, pool.props["phi"], g.role_origin(role),
                                     (g.dx, g.dy), role_cells(g, role), g.shape)
    ref = np.divide(num, den, out=np.zeros_like(num), where=den != 0)
    np.testing.assert_array_equal(vals, ref)
    np.testing.assert_array_equal(empty, den == 0)


@pytest.mark.parametrize("role", ROLES)
def test_grid_to_markers_linear_exact(role):
    g = make_uniform_grid(7, 9, 2.0, 1.5)
    xr, yr = g.role_coords(role)
    field = 1.5 + 0.7 * xr[None, :] - 2.0 * yr[:, None]
    pool = _pool(g, 400, seed=2)
    out = grid_to_markers(pool, field, role, g)
    np.testing.assert_allclose(out, 1.5 + 0.7 * pool.xm - 2.0 * pool.ym, rtol=0, atol=1e-13)


def test_grid_to_markers_direct_sum():
    g = make_uniform_grid(5, 5, 1.0, 1.0)
    rng = np.random.default_rng(9)
    field = rng.standard_normal(g.shape)
    pool = _pool(g, 50, seed=3)
    out = grid_to_markers(pool, field, "basic", g)
    for m in range(pool.count):
        j = min(int(pool.xm[m] // g.dx), g.nx - 1)
        i = min(int(pool.ym[m] // g.dy), g.ny - 1)
        fx, fy = pool.xm[m] / g.dx - j, pool.ym[m] / g.dy - i
        ref = ((1 - fx) * (1 - fy) * field[i, j] + fx * (1 - fy) * field[i, j + 1]
               + (1 - fx) * fy * field[i + 1, j] + fx * fy * field[i + 1, j + 1])
        assert out[m] == pytest.approx(ref, rel=1e-13, abs=1e-14)


def test_grid_to_markers_out_of_domain_names_marker():
    g = make_uniform_grid(4, 4, 1.0, 1.0)
    pool = MarkerPool([0.5, 1.7], [0.5, 0.5])
    with pytest.raises(OutOfDomainError, match="marker 1"):
        grid_to_markers(pool, g.zeros(), "basic", g)


def test_timestep_formula():
    g = make_uniform_grid(4, 4, 4.0, 4.0)
    vx, vy = g.zeros(), g.zeros()
    vx[2, 2] = 2.0
    vy[1, 1] = 0.5
    assert compute_timestep(vx, vy, TimeStepPolicy(0.5, 1e30), g) == 0.25
    assert compute_timestep(g.zeros(), g.zeros(), TimeStepPolicy(0.5, 3.0), g) == 3.0
    assert compute_timestep(vx, vy, TimeStepPolicy(0.5, 0.1), g) == 0.1


def test_timestep_policy_validation():
    with pytest.raises(ValueError):
        TimeStepPolicy(1.0)
    with pytest.raises(ValueError):
        TimeStepPolicy(0.5, 0.0)


def _rotation(g, omega=1.0):
    xc, yc = g.x0 + g.xsize / 2, g.y0 + g.ysize / 2
    xr, yr = g.role_coords("vx")
    vx = np.broadcast_to(-omega * (yr[:, None] - yc), g.shape).copy()
    xr, yr = g.role_coords("vy")
    vy = np.broadcast_to(omega * (xr[None, :] - xc), g.shape).copy()
    return vx, vy, (xc, yc)


def _ring(center, r, n=64):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return MarkerPool(center[0] + r * np.cos(t), center[1] + r * np.sin(t),
                      {"eta": np.linspace(1, 2, n), "id": np.arange(n, dtype=float)})


ALL = {"euler": advect_euler, "heun": advect_heun, "rk4": advect_rk4,
       "lpi2": lambda *a, **k: advect_lpi(*a, order=2, **k),
       "lpi3": lambda *a, **k: advect_lpi(*a, order=3, **k)}


@pytest.mark.parametrize("name", list(ALL))
def test_uniform_velocity_is_exact(name):
    g = make_uniform_grid(8, 8, 1.0, 1.0)
    vx, vy = np.full(g.shape, 0.3), np.full(g.shape, -0.2)
    pool = _pool(g, 100, seed=1)
    pool = pool.take(np.flatnonzero((pool.xm < 0.9) & (pool.ym > 0.1)))
    out = ALL[name](pool, vx, vy, 0.25, g)
    np.testing.assert_allclose(out.xm, pool.xm + 0.25 * 0.3, rtol=0, atol=1e-15)
    np.testing.assert_allclose(out.ym, pool.ym - 0.25 * 0.2, rtol=0, atol=1e-15)


@pytest.mark.parametrize("name", list(ALL))
def test_zero_dt_and_zero_velocity_identity(name):
    g = make_uniform_grid(8, 8, 1.0, 1.0)
    vx, vy, c = _rotation(g)
    pool = _ring(c, 0.3)
    for out in (ALL[name](pool, vx, vy, 0.0, g), ALL[name](pool, g.zeros(), g.zeros(), 0.1, g)):
        np.testing.assert_array_equal(out.xm, pool.xm)
        np.testing.assert_array_equal(out.ym, pool.ym)


@pytest.mark.parametrize("name", list(ALL))
def test_properties_bit_constant(name):
    g = make_uniform_grid(8, 8, 1.0, 1.0)
    vx, vy, c = _rotation(g)
    pool = _ring(c, 0.3)
    before = {k: v.copy() for k, v in pool.props.items()}
    out = ALL[name](pool, vx, vy, 0.05, g)
    for k in before:
        assert out.props[k].tobytes() == before[k].tobytes()


def test_euler_matches_hand_interpolated_velocity():
    g = make_uniform_grid(16, 16, 1.0, 1.0)
    vx, vy, c = _rotation(g)
    pool = _ring(c, 0.25, 16)
    out = advect_euler(pool, vx, vy, 0.01, g)
    u = grid_to_markers(pool, vx, "vx", g)
    v = grid_to_markers(pool, vy, "vy", g)
    np.testing.assert_array_equal(out.xm, pool.xm + 0.01 * u)
    np.testing.assert_array_equal(out.ym, pool.ym + 0.01 * v)


def _radius_error(name, dt, g, vx, vy, c, r=0.3):
    pool = _ring(c, r)
    out = ALL[name](pool, vx, vy, dt, g)
    return np.abs(np.hypot(out.xm - c[0], out.ym - c[1]) - r).max()


def test_per_step_error_ordering_on_rotation():
    g = make_uniform_grid(32, 32, 1.0, 1.0)
    vx, vy, c = _rotation(g)
    dt = 0.05
    e = {k: _radius_error(k, dt, g, vx, vy, c) for k in ("euler", "heun", "rk4")}
    assert e["rk4"] < e["heun"] < e["euler"]


def test_rk4_full_revolution_drift():
    g = make_uniform_grid(32, 32, 1.0, 1.0)
    vx, vy, c = _rotation(g)
    n = 200
    dt = 2 * np.pi / n
    pool = _ring(c, 0.3)
    for _ in range(n):
        pool = advect_rk4(pool, vx, vy, dt, g)
    drift = np.abs(np.hypot(pool.xm - c[0], pool.ym - c[1]) - 0.3).max() / 0.3
    # RK4 radius drift per revolution scales as dt^4 / 120 * 2 pi / dt
    assert drift <= 2 * np.pi * dt**4 / 120 * 1.05


def test_lpi2_matches_heun_on_linear_field():
    g = make_uniform_grid(16, 16, 2.0, 2.0)
    a = 0.8
    xr, yr = g.role_coords("vx")
    vx = np.broadcast_to(a * (xr[None, :] - 1.0), g.shape).copy()
    xr, yr = g.role_coords("vy")
    vy = np.broadcast_to(-a * (yr[:, None] - 1.0), g.shape).copy()
    pool = _ring((1.0, 1.0), 0.4)
    for dt in (0.05, 0.1):
        h = advect_heun(pool, vx, vy, dt, g)
        l2 = advect_lpi(pool, vx, vy, dt, g, order=2)
        # both are exact to second order; the exact map is exp(a dt) in x
        bound = (a * dt) ** 3 / 6 * 1.5 * np.abs(pool.xm - 1.0).max() + 1e-15
        assert np.abs(h.xm - l2.xm).max() <= bound
        assert np.abs(h.ym - l2.ym).max() <= bound


def test_lpi_rejects_bad_order():
    g = make_uniform_grid(4, 4, 1.0, 1.0)
    with pytest.raises(ValueError):
        advect_lpi(_ring((0.5, 0.5), 0.1), g.zeros(), g.zeros(), 0.1, g, order=4)


def test_outbound_marker_is_an_error():
    g = make_uniform_grid(8, 8, 1.0, 1.0)
    vx = np.full(g.shape, 1.0)
    pool = MarkerPool([0.95], [0.5])
    with pytest.raises(OutOfDomainError):
        advect_euler(pool, vx, g.zeros(), 0.2, g)
    with pytest.raises(OutOfDomainError):
        advect_rk4(pool, vx, g.zeros(), 0.2, g)


def test_periodic_wrap():
    g = make_uniform_grid(8, 8, 1.0, 1.0)
    vx = np.full(g.shape, 1.0)
    pool = MarkerPool([0.95], [0.5])
    out = advect_euler(pool, vx, g.zeros(), 0.1, g, periodic=(True, False))
    assert out.xm[0] == pytest.approx(0.05)


def test_periodic_interpolation_folds_images():
    g = make_uniform_grid(6, 6, 1.0, 1.0)
    pool = _pool(g, 2000, seed=8, v=lambda r, n: r.standard_normal(n))
    vals, _ = markers_to_grid(pool, "v", "basic", g, (True, True))
    np.testing.assert_array_equal(vals[:, 0], vals[:, g.nx])
    np.testing.assert_array_equal(vals[0, :], vals[g.ny, :])


def test_seed_markers_lattice_and_jitter():
    g = make_uniform_grid(3, 2, 3.0, 2.0)
    p = seed_markers(g, 2)
    assert p.count == 24
    assert np.all((p.xm > 0) & (p.xm < 3) & (p.ym > 0) & (p.ym < 2))
    a, b = seed_markers(g, 2, 0.5, seed=3), seed_markers(g, 2, 0.5, seed=3)
    np.testing.assert_array_equal(a.xm, b.xm)
    assert not np.array_equal(a.xm, p.xm)


def test_pool_invariants():
    with pytest.raises(ValueError):
        MarkerPool([0.0, 1.0], [0.0], {})
    with pytest.raises(ValueError):
        MarkerPool([0.0], [0.0], {"a": [1.0, 2.0]})


def test_integrator_table():
    assert set(INTEGRATORS) == {"euler", "heun", "rk4", "lpi2", "lpi3"}


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(ROLES))
def test_constant_roundtrip_property(seed, role):
    g = make_uniform_grid(5, 4, 1.0, 1.0)
    pool = _pool(g, 400, seed=seed, c=-3.25)
    vals, empty = markers_to_grid(pool, "c", role, g)
    back = grid_to_markers(pool, vals, role, g)
    # markers whose four nodes were all touched see the constant again
    np.testing.assert_allclose(back, -3.25, rtol=1e-14)
