import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from micstokes.grid import BcPlan, BcSpec, make_uniform_grid
from micstokes.multigrid import SmootherConfig, build_hierarchy, v_cycle
from micstokes.operators import (BodyForce, NormalizationError, continuity_apply,
                                 pressure_gradient)
from micstokes.uzawa import (DivergenceError, SolveReport, StokesProblem, StokesState,
                             UzawaConfig, blend_viscosity, initial_state, lithostatic_pressure,
                             pressure_demean, pressure_mean, solve, uzawa_step)


def _blob_problem(n=24, contrast=1e2, drho=1.0, levels=3):
    g = make_uniform_grid(n, n, 1.0, 1.0)
    blob = lambda x, y: 1.0 / (1.0 + np.exp(-((0.2**2 - (x - 0.5)**2 - (y - 0.5)**2) / 0.005)))
    gx = np.append(g.x, g.x[-1] + g.dx)
    gy = np.append(g.y, g.y[-1] + g.dy)
    X, Y = np.meshgrid(gx, gy)
    Xp, Yp = np.meshgrid(gx - g.dx / 2, gy - g.dy / 2)
    etab = 1.0 + (contrast - 1.0) * blob(X, Y)
    etap = 1.0 + (contrast - 1.0) * blob(Xp, Yp)
    rho = 1.0 + drho * blob(X, Y)
    force = BodyForce.from_density(rho, 1.0, g)
    return StokesProblem(g, etab, etap, force, BcSpec.uniform("free-slip"), rho, 1.0)


def test_demean_examples():
    g = make_uniform_grid(3, 2, 1.0, 1.0)
    p = g.zeros()
    p[1:3, 1:4] = [[1, 2, 3], [1, 2, 3]]
    pressure_demean(p, g)
    np.testing.assert_array_equal(p[1:3, 1:4], [[-1, 0, 1], [-1, 0, 1]])
    q = p.copy()
    pressure_demean(q, g)
    np.testing.assert_allclose(q, p, atol=1e-16)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.integers(2, 30), st.floats(-1e6, 1e6), st.integers(0, 2**31))
def test_demean_random(nx, ny, shift, seed):
    g = make_uniform_grid(nx, ny, 1.0, 1.0)
    p = np.random.default_rng(seed).standard_normal(g.shape) + shift
    scale = np.abs(p[1:ny + 1, 1:nx + 1]).max()
    pressure_demean(p, g)
    assert abs(pressure_mean(p, g)) <= 1e-14 * scale


def test_blend_examples():
    eb = np.array([[1.0, 3.0]])
    ep = np.array([[2.0, 5.0]])
    b0 = blend_viscosity(eb, ep, 0.0)
    assert np.all(b0[0] == 1.0) and np.all(b0[1] == 1.0)
    b1 = blend_viscosity(eb, ep, 1.0)
    np.testing.assert_array_equal(b1[0], eb)
    np.testing.assert_array_equal(b1[1], ep)
    assert blend_viscosity(eb, ep, 0.5)[0][0, 1] == 2.0
    with pytest.raises(ValueError):
        blend_viscosity(eb, ep, 1.5)


def test_lithostatic_constant_density():
    g = make_uniform_grid(4, 8, 1.0, 2.0)
    p = lithostatic_pressure(np.full(g.shape, 3.0), 2.0, g)
    depth = g.y[:-1] + g.dy / 2
    np.testing.assert_allclose(p[1:9, 1:5], np.tile(6.0 * depth[:, None], (1, 4)), rtol=1e-14)
    assert not lithostatic_pressure(np.full(g.shape, 3.0), 0.0, g).any()


def test_lithostatic_two_layer():
    # density 1 above y = 7/16 and 4 below; the interface sits on a pressure-node
    # depth, so every midpoint segment lies in one layer
    g = make_uniform_grid(3, 8, 1.0, 1.0)
    rho = np.where(np.arange(g.shape[0]) * g.dy < 7 / 16, 1.0, 4.0)
    rho = np.broadcast_to(rho[:, None], g.shape).copy()
    p = lithostatic_pressure(rho, 1.0, g)

    def exact(y):
        return y if y <= 7 / 16 else 7 / 16 + 4.0 * (y - 7 / 16)

    for i in range(1, 9):
        yp = g.y[i - 1] + g.dy / 2
        assert p[i, 2] == pytest.approx(exact(yp), rel=1e-14)


def test_zero_force_is_converged_fixed_point():
    g = make_uniform_grid(8, 8, 1.0, 1.0)
    prob = StokesProblem(g, np.ones(g.shape), np.ones(g.shape),
                         BodyForce(g.zeros(), g.zeros()), BcSpec.uniform("free-slip"))
    state, rep = solve(prob, UzawaConfig(levels=2, factor=2.0))
    assert rep.converged and rep.cycles_used == 0
    assert not state.vx.any() and not state.p.any()
    h = build_hierarchy(g, prob.etab, prob.etap, prob.bc, 2, 2.0)
    s = uzawa_step(StokesState.zeros(g), prob, h, UzawaConfig())
    assert not s.vx.any() and not s.vy.any() and not s.p.any()


def test_zero_force_with_nonzero_state_raises():
    g = make_uniform_grid(8, 8, 1.0, 1.0)
    prob = StokesProblem(g, np.ones(g.shape), np.ones(g.shape),
                         BodyForce(g.zeros(), g.zeros()), BcSpec.uniform("free-slip"))
    s = StokesState.zeros(g)
    s.vx[3, 3] = 1.0
    with pytest.raises(NormalizationError):
        solve(prob, UzawaConfig(levels=2, factor=2.0), state=s)


def test_uzawa_step_matches_composition():
    prob = _blob_problem(16)
    g = prob.geom
    cfg = UzawaConfig(omega_p=0.6, vcycles_per_step=2)
    sm = SmootherConfig()
    rng = np.random.default_rng(0)
    s0 = StokesState(rng.standard_normal(g.shape), rng.standard_normal(g.shape),
                     rng.standard_normal(g.shape))
    BcPlan(g, prob.bc).apply(s0.vx, s0.vy)
    h1 = build_hierarchy(g, prob.etab, prob.etap, prob.bc, 3, 2.0, sm)
    h2 = build_hierarchy(g, prob.etab, prob.etap, prob.bc, 3, 2.0, sm)
    out = uzawa_step(s0.copy(), prob, h1, cfg)
    # independent sequence
    vx, vy, p = s0.vx.copy(), s0.vy.copy(), s0.p.copy()
    gx, gy = pressure_gradient(p, g)
    bx, by = prob.force.fx - gx, prob.force.fy - gy
    v_cycle(h2, vx, vy, bx, by)
    v_cycle(h2, vx, vy, bx, by)
    div = continuity_apply(vx, vy, g)
    p[1:g.ny + 1, 1:g.nx + 1] -= 0.6 * prob.etap[1:g.ny + 1, 1:g.nx + 1] * div[1:g.ny + 1, 1:g.nx + 1]
    p[1:g.ny + 1, 1:g.nx + 1] -= math.fsum(p[1:g.ny + 1, 1:g.nx + 1].ravel()) / (g.nx * g.ny)
    BcPlan(g, prob.bc).apply(vx, vy)
    np.testing.assert_array_equal(out.vx, vx)
    np.testing.assert_array_equal(out.vy, vy)
    np.testing.assert_array_equal(out.p, p)


def test_uniform_viscosity_pressure_update_formula():
    g = make_uniform_grid(8, 8, 1.0, 1.0)
    eta = np.full(g.shape, 2.5)
    rho = np.random.default_rng(1).uniform(1, 2, g.shape)
    prob = StokesProblem(g, eta, eta, BodyForce.from_density(rho, 1.0, g),
                         BcSpec.uniform("free-slip"), rho, 1.0)
    h = build_hierarchy(g, eta, eta, prob.bc, 2, 2.0)
    s = uzawa_step(StokesState.zeros(g), prob, h, UzawaConfig(), demean=False)
    div = continuity_apply(s.vx, s.vy, g)
    blk = np.s_[1:g.ny + 1, 1:g.nx + 1]
    np.testing.assert_allclose(s.p[blk], -0.6 * 2.5 * div[blk], rtol=1e-15)


def test_pressure_mean_zero_after_every_cycle():
    prob = _blob_problem(24, contrast=1e3)
    g = prob.geom
    worst = []

    def watch(cycle, state, res):
        blk = state.p[1:g.ny + 1, 1:g.nx + 1]
        worst.append(abs(pressure_mean(state.p, g)) / np.abs(blk).max())

    solve(prob, UzawaConfig(max_cycles=60, levels=3, factor=2.0, tol=1e-12), on_cycle=watch)
    assert len(worst) == 60 and max(worst) <= 1e-14


def test_hydrostatic_column():
    g = make_uniform_grid(16, 16, 1.0, 1.0)
    eta = np.ones(g.shape)
    rho = np.full(g.shape, 2.0)
    prob = StokesProblem(g, eta, eta, BodyForce.from_density(rho, 1.0, g),
                         BcSpec.uniform("free-slip"), rho, 1.0)
    state, rep = solve(prob, UzawaConfig(levels=3, factor=2.0, tol=1e-8, max_cycles=400),
                       init="zero")
    assert rep.converged
    ref = lithostatic_pressure(rho, 1.0, g)
    pressure_demean(ref, g)
    blk = np.s_[1:g.ny + 1, 1:g.nx + 1]
    scale = np.abs(ref[blk]).max()
    assert np.abs(state.p[blk] - ref[blk]).max() <= 1e-6 * scale
    assert np.abs(state.vx).max() <= 1e-6 * scale and np.abs(state.vy).max() <= 1e-6 * scale


def test_lithostatic_start_is_exact_for_uniform_column():
    g = make_uniform_grid(8, 8, 1.0, 1.0)
    eta = np.ones(g.shape)
    rho = np.full(g.shape, 2.0)
    prob = StokesProblem(g, eta, eta, BodyForce.from_density(rho, 1.0, g),
                         BcSpec.uniform("free-slip"), rho, 1.0)
    state, rep = solve(prob, UzawaConfig(levels=2, factor=2.0, rescale_schedule=((1.0, 0),)))
    assert rep.converged and rep.cycles_used == 1
    assert rep.final[4] <= 1e-13


def test_schedule_validation():
    with pytest.raises(ValueError):
        UzawaConfig(rescale_schedule=((0.0, 0), (0.5, 10), (0.25, 20), (1.0, 30)))
    with pytest.raises(ValueError):
        UzawaConfig(rescale_schedule=((0.0, 5), (1.0, 10)))
    with pytest.raises(ValueError):
        UzawaConfig(rescale_schedule=((0.0, 0), (0.5, 10)))
    with pytest.raises(ValueError):
        UzawaConfig(tol=0.0)
    with pytest.raises(ValueError):
        UzawaConfig(omega_p=1.5)
    c = UzawaConfig()
    assert [c.theta_at(k) for k in (0, 24, 25, 99, 100, 400)] == [0, 0, 0.25, 0.75, 1, 1]


def test_report_log_lines():
    r = SolveReport(log_every=2)
    for k in range(1, 6):
        r.add(k, 1.0, (1.0 / k, 0.5, 0.25))
    lines = r.log_lines()
    assert lines[0] == "cycle,theta,res_v,res_p,res_total"
    assert [l.split(",")[0] for l in lines[1:]] == ["2", "4", "5"]
    assert len(r.records) == 5 == r.cycles_used


def test_schedule_steps_recorded_in_report():
    prob = _blob_problem(16, contrast=1e4)
    cfg = UzawaConfig(max_cycles=40, levels=2, factor=2.0, tol=1e-30,
                      rescale_schedule=((0.0, 0), (0.5, 10), (1.0, 20)))
    _, rep = solve(prob, cfg)
    th = [r[1] for r in rep.records]
    assert th[:10] == [0.0] * 10 and th[10:20] == [0.5] * 10 and th[20:] == [1.0] * 20


def test_constant_pressure_shift_invariance():
    prob = _blob_problem(24, contrast=1e2)
    g = prob.geom
    cfg = UzawaConfig(levels=3, factor=2.0, tol=1e-7, max_cycles=600,
                      rescale_schedule=((1.0, 0),))
    a, ra = solve(prob, cfg, init="zero")
    s = StokesState.zeros(g)
    s.p[...] = 123.0
    b, rb = solve(prob, cfg, state=s)
    assert ra.converged and rb.converged
    scale = np.abs(a.vy).max()
    assert np.abs(a.vx - b.vx).max() <= 1e-5 * scale
    assert np.abs(a.vy - b.vy).max() <= 1e-5 * scale


def test_ghost_values_do_not_change_iterates():
    prob = _blob_problem(16, contrast=1e2)
    g = prob.geom
    cfg = UzawaConfig(max_cycles=15, levels=2, factor=2.0, tol=1e-30)
    a, _ = solve(prob, cfg)
    eb, ep = prob.etab.copy(), prob.etap.copy()
    eb[g.ny + 1, :] = 1e9
    eb[:, g.nx + 1] = 1e9
    ep[0, :] = ep[:, 0] = 1e9
    ep[g.ny + 1, :] = ep[:, g.nx + 1] = 1e9
    prob2 = StokesProblem(g, eb, ep, prob.force, prob.bc, prob.rho, prob.g_y)
    b, _ = solve(prob2, cfg)
    blk = np.s_[1:g.ny + 1, 1:g.nx + 1]
    for x, y in ((a.vx, b.vx), (a.vy, b.vy)):
        np.testing.assert_array_equal(x, y)
    np.testing.assert_array_equal(a.p[blk], b.p[blk])


def test_divergence_detected():
    prob = _blob_problem(16)
    with pytest.raises(DivergenceError) as err:
        solve(prob, UzawaConfig(omega_p=1.0, max_cycles=300, levels=2, factor=2.0,
                                divergence_factor=1e-3))
    assert err.value.report.records


def test_initial_state_modes():
    prob = _blob_problem(8)
    assert not initial_state(prob, "zero").p.any()
    s = initial_state(prob)
    assert abs(pressure_mean(s.p, prob.geom)) <= 1e-14 * np.abs(s.p).max()
    with pytest.raises(ValueError):
        initial_state(prob, "bogus")
