"""Worked examples with hand-computed answers, grouped by module."""

import numpy as np
import pytest
from scipy.optimize import brentq

from viscodamage.control import (
    ControlBasis,
    ControlConfig,
    ControlProblem,
    ControlSpace,
    adapted_cost,
    beta_continuation,
    cost,
    solve_adapted,
    solve_P_beta,
)
from viscodamage.grid import (
    ElasticityOperator,
    boundary_load_vector,
    build_grid,
    laplace_matrix,
    mass_matrix,
    quadrature_integral,
)
from viscodamage.material import (
    Penalty,
    PiecewisePolynomial,
    StiffnessTensor,
    apply_stiffness,
    coefficient_preset,
    extend_coefficient,
    material_preset,
    penalty_slope,
    penalty_value,
    subgradient_residual,
)
from viscodamage.problems import ScaledLoad, TimeProfile, bar_problem, side_traction_load, standard_problem
from viscodamage.stepper import (
    Discretization,
    InitialData,
    State,
    StepConfig,
    advance,
    damage_step,
    elasticity_step,
    energy_audit,
    run,
    truncate_chi,
)
from viscodamage.verify import (
    PerturbationSpec,
    beta_sweep,
    continuous_dependence_test,
    homogeneous_displacement,
    scalar_oracle,
    tau_sweep,
)

# ---------------------------------------------------------------- material


@pytest.mark.parametrize("beta, x, value", [(0.5, -1.0, 0.0), (0.5, 1.0, 1.0), (0.25, 0.0, 0.0)])
def test_penalty_values(beta, x, value):
    assert penalty_value(Penalty(beta), x) == value


@pytest.mark.parametrize("beta, x, slope", [(0.25, 2.0, 8.0), (0.1, -5.0, 0.0), (0.5, 0.3, 0.6)])
def test_penalty_slopes(beta, x, slope):
    assert penalty_slope(Penalty(beta), x) == pytest.approx(slope, rel=1e-15)


@pytest.mark.parametrize("rate, xi, res", [(-0.3, 0.0, 0.0), (0.0, 5.0, 0.0), (0.1, 0.0, 0.1)])
def test_subgradient_examples(rate, xi, res):
    assert subgradient_residual(rate, xi) == pytest.approx(res)


def test_extension_examples():
    c1, c2 = extend_coefficient(coefficient_preset("quadratic"), 1.0)
    assert c1(-3.0) + c2(-3.0) == 0.0
    assert c1(5.0) + c2(5.0) == pytest.approx(2.0)
    for delta in (0.5, 2.0):
        k1, k2 = extend_coefficient(coefficient_preset("constant"), delta)
        assert k1(7.0) + k2(7.0) == pytest.approx(1.0)
        assert k2(7.0) == 0.0


def test_stiffness_examples():
    iso = StiffnessTensor.isotropic(1.0, 1.0, 2)
    np.testing.assert_allclose(apply_stiffness(iso, np.eye(2)), 4.0 * np.eye(2))
    np.testing.assert_array_equal(apply_stiffness(iso, np.zeros((2, 2))), 0.0)
    ident = 0.5 * (np.einsum("ik,jl->ijkl", np.eye(2), np.eye(2)) + np.einsum("il,jk->ijkl", np.eye(2), np.eye(2)))
    e = np.array([[0.3, -0.2], [-0.2, 1.1]])
    np.testing.assert_allclose(apply_stiffness(StiffnessTensor(ident), e), e)


# ---------------------------------------------------------------- grid


def test_grid_counts():
    g = build_grid(1, [1.0], [4])
    assert g.n_nodes == 5 and len(g.boundary_facets) == 2
    g = build_grid(2, [1, 1], [2, 2])
    assert g.n_nodes == 9 and len(g.boundary_facets) == 8
    assert build_grid(2, [2, 1], [4, 2]).n_nodes == 15


def test_elasticity_examples():
    g = build_grid(2, [1.0, 1.0], [2, 2])
    op = ElasticityOperator(g, StiffnessTensor.isotropic(1.0, 1.0, 2))
    assert op.matrix(np.zeros(g.n_nodes)).nnz == 0 or np.abs(op.matrix(np.zeros(g.n_nodes)).data).max() == 0
    shift = np.tile([0.3, -0.7], g.n_nodes)
    np.testing.assert_allclose(op.matrix(np.ones(g.n_nodes)) @ shift, 0.0, atol=1e-14)
    # 1D bar with two elements, C = lam + 2 mu = 3, h = 0.5
    g1 = build_grid(1, [1.0], [2])
    A = ElasticityOperator(g1, StiffnessTensor.isotropic(1.0, 1.0, 1)).matrix(np.ones(3)).toarray()
    np.testing.assert_allclose(A, (3.0 / 0.5) * np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]]))


def test_scalar_form_examples():
    g2 = build_grid(2, [1.0, 1.0], [3, 3])
    np.testing.assert_allclose(laplace_matrix(g2) @ np.ones(g2.n_nodes), 0.0, atol=1e-14)
    M2 = mass_matrix(g2)
    assert M2.sum() == pytest.approx(1.0)
    g1 = build_grid(1, [1.0], [2])
    np.testing.assert_allclose(np.asarray(mass_matrix(g1).sum(axis=1)).ravel(), [0.25, 0.5, 0.25])


def test_boundary_load_examples():
    g1 = build_grid(1, [1.0], [4])
    np.testing.assert_array_equal(boundary_load_vector(g1, np.zeros((g1.n_nodes, 1))), 0.0)
    load = side_traction_load(g1, ["right"], [1.0])
    np.testing.assert_array_equal(load, np.eye(g1.n_nodes)[-1])
    g2 = build_grid(2, [1.0, 1.0], [2, 2])
    assert side_traction_load(g2, ["right"], [1.0, 0.0]).reshape(-1, 2)[:, 0].sum() == pytest.approx(1.0)


def test_quadrature_examples():
    g = build_grid(2, [1.0, 1.0], [2, 2])
    assert quadrature_integral(g, lambda p: np.ones(p.shape[:-1])) == pytest.approx(1.0)
    g1 = build_grid(1, [1.0], [8])
    assert quadrature_integral(g1, lambda p: p[..., 0]) == pytest.approx(0.5)
    assert quadrature_integral(g1, lambda p: p[..., 0] ** 2) == pytest.approx(1.0 / 3.0, abs=1e-12)


# ---------------------------------------------------------------- stepper


def _disc(cells=3, **kw):
    g = build_grid(2, [1.0, 1.0], [cells, cells])
    return Discretization(g, material_preset("quadratic", **kw))


def test_unstrained_stationary_damage():
    disc = _disc(potential="zero")
    chi0 = np.full(disc.grid.n_nodes, 0.7)
    res = damage_step(disc, chi0, np.zeros(2 * disc.grid.n_nodes), StepConfig(0.1, 0.1, Penalty(0.1)))
    np.testing.assert_allclose(res.chi, 0.7, atol=1e-14)


@pytest.mark.parametrize("chi_prev, beta", [(0.9, 0.1), (0.5, 1e-3), (0.3, 0.5)])
def test_homogeneous_damage_equation(chi_prev, beta):
    # C eps:eps = 1: (chi - chi_prev)/tau + xi((chi - chi_prev)/tau) + chi = 0
    disc = _disc(potential="zero")
    tau, pen = 0.1, Penalty(beta)
    u = homogeneous_displacement(disc, 1.0)
    res = damage_step(disc, np.full(disc.grid.n_nodes, chi_prev), u, StepConfig(tau, tau, pen, newton_tol=1e-12))
    g = lambda x: (x - chi_prev) / tau + pen.slope((x - chi_prev) / tau) + x
    root = brentq(g, -1.0, 1.0, xtol=1e-15)
    np.testing.assert_allclose(res.chi, root, atol=1e-10)


def test_healing_rate_shrinks_with_beta():
    disc = _disc()
    chi0 = np.full(disc.grid.n_nodes, 0.5)
    rates = []
    for beta in (1e-1, 1e-3, 1e-5):
        res = damage_step(disc, chi0, np.zeros(2 * disc.grid.n_nodes), StepConfig(0.1, 0.1, Penalty(beta)))
        rates.append(np.maximum(res.chi - chi0, 0.0).max())
    assert rates[0] > rates[1] > rates[2] > 0 and rates[2] < 1e-5


def test_zero_data_elasticity():
    disc = _disc()
    z = np.zeros(2 * disc.grid.n_nodes)
    u = elasticity_step(disc, np.ones(disc.grid.n_nodes), z, z, StepConfig(0.1, 0.1, Penalty(0.1)))
    np.testing.assert_array_equal(u, 0.0)


def test_steady_pull_of_a_bar():
    # equal and opposite end tractions g, c = 1: stationary strain g / C with C = 3
    g = 0.3
    grid = build_grid(1, [1.0], [20])
    disc = Discretization(grid, material_preset("constant", dim=1))
    vec = g * (side_traction_load(grid, ["right"], [1.0]) + side_traction_load(grid, ["left"], [-1.0]))
    cfg = StepConfig(1.0, 60.0, Penalty(0.1))
    tr = run(disc, InitialData.at_rest(grid, 1.0), cfg, boundary_load=ScaledLoad(vec, TimeProfile("constant", 60.0)))
    strain = disc.elastic.strain(tr.u[max(tr.u)])
    np.testing.assert_allclose(strain, g / 3.0, atol=1e-6)


def test_mirror_symmetry():
    P = standard_problem(cells=4, T=0.1, tau=0.02)
    grid = P.grid
    vec = side_traction_load(grid, ["right"], [1.0, 0.0]) + side_traction_load(grid, ["left"], [-1.0, 0.0])
    vec = vec + side_traction_load(grid, ["right", "left"], [0.0, 0.5])
    P = P.with_initial(InitialData.at_rest(grid, 0.8))
    tr = P.run(0.01, boundary_load=ScaledLoad(vec, TimeProfile("sine", 0.1)))
    u = tr.u[max(tr.u)].reshape(-1, 2)
    n = grid.cells_per_axis[0] + 1
    mirror = np.arange(grid.n_nodes).reshape(-1, n)[:, ::-1].ravel()
    np.testing.assert_allclose(u[mirror, 0], -u[:, 0], atol=1e-12)
    np.testing.assert_allclose(u[mirror, 1], u[:, 1], atol=1e-12)


def test_zero_state_stays_zero():
    P = bar_problem(cells=4, T=0.2, tau=0.05, amplitude=0.0)
    tr = P.run(0.1)
    assert all(np.all(u == 0.0) for u in tr.u.values())


def test_single_step_is_composition():
    P = standard_problem(cells=3, tau=0.05)
    disc, n = P.disc, P.grid.n_nodes
    rng = np.random.default_rng(0)
    u, u_prev = rng.normal(scale=0.1, size=(2, n, 2))
    chi = np.full(n, 0.9)
    cfg = P.step_config(0.01)
    state = State(1, 0.05, 0.05, u, u_prev, chi, chi, np.zeros(n))
    new, _ = advance(disc, state, cfg)
    dmg = damage_step(disc, chi, u, cfg)
    np.testing.assert_array_equal(new.chi, dmg.chi)
    np.testing.assert_array_equal(np.ravel(new.u), np.ravel(elasticity_step(disc, dmg.chi, u, u_prev, cfg)))


def test_interpolants():
    tr = standard_problem(cells=2, T=0.1, tau=0.025).run(0.01)
    tau = tr.tau
    for k in range(1, tr.n_levels):
        np.testing.assert_array_equal(tr.piecewise_constant("chi", k * tau), tr.chi[k])
        np.testing.assert_array_equal(tr.linear("chi", k * tau), tr.chi[k])
        np.testing.assert_array_equal(tr.piecewise_constant("chi", (k - 0.5) * tau), tr.chi[k])
        np.testing.assert_array_equal(tr.previous("chi", (k - 0.5) * tau), tr.chi[k - 1])
        np.testing.assert_allclose(tr.linear("chi", (k - 0.5) * tau), 0.5 * (tr.chi[k] + tr.chi[k - 1]), atol=1e-15)


def test_free_vibration_dissipates():
    P = standard_problem(cells=4, T=0.2, tau=0.02)
    grid = P.grid
    init = InitialData(np.zeros((grid.n_nodes, 2)), np.c_[grid.nodes[:, 1] - 0.5, np.zeros(grid.n_nodes)], np.ones(grid.n_nodes))
    tr = run(P.disc, init, P.step_config(0.01))
    total = np.array([r.total for r in tr.records])
    assert np.all(np.diff(total) <= 1e-15)
    assert np.all(energy_audit(tr).slacks >= 0.0)


def test_constant_coefficient_has_no_splitting_slack():
    mat = material_preset("constant")
    P = standard_problem(cells=3, T=0.04, tau=0.02, material=mat)
    tr = P.run(0.01)
    assert all(r.splitting_slack == 0.0 for r in tr.records)


def test_truncation_of_nonnegative_damage_is_identity():
    mat = material_preset("quadratic", potential="zero")
    P = standard_problem(cells=3, T=0.04, tau=0.02, material=mat, chi_amplitude=0.1)
    P = P.with_initial(InitialData.at_rest(P.grid, P.initial.chi0 - 0.2))
    tr = P.run(0.01)
    rep = truncate_chi(P.disc, tr, P.step_config(0.01))
    np.testing.assert_array_equal(rep.chi_plus, tr.chi_array())
    assert rep.elastic_residual_delta == 0.0 and rep.damage_residual_delta == 0.0


# ---------------------------------------------------------------- verify


def test_stationary_pair_keeps_offset():
    P = standard_problem(cells=3, T=0.1, tau=0.025, material=material_preset("quadratic", potential="zero"))
    P.traction = None
    P = P.with_initial(InitialData.at_rest(P.grid, 0.5))
    delta = 1e-3
    a = P.run(0.01)
    b = P.with_initial(InitialData.at_rest(P.grid, 0.5 + delta)).run(0.01)
    np.testing.assert_allclose(b.chi_array() - a.chi_array(), delta, atol=1e-15)
    res = continuous_dependence_test(P, PerturbationSpec("chi0", np.ones(P.grid.n_nodes), [1e-4, 1e-3]), 0.01)
    assert res["passed"]


def test_no_healing_drive_gives_zero_rate_plus():
    mat = material_preset("quadratic", potential="linear", potential_params={"slope": 1.0})
    P = standard_problem(cells=3, T=0.1, tau=0.05, material=mat)
    P.traction = None
    P = P.with_initial(InitialData.at_rest(P.grid, 0.8))
    rep = beta_sweep(P, [1e-1, 1e-2])
    np.testing.assert_array_equal(rep.metrics["rate_plus"], 0.0)


def test_tau_sweep_exact_on_stationary_branch():
    P = bar_problem(cells=4, T=0.2, amplitude=0.0)
    rep = tau_sweep(P, [0.1, 0.05], 0.025)
    np.testing.assert_array_equal(rep.metrics["errors"], 0.0)
    assert rep.passed and rep.checks == {"exact": True}


def test_oracle_closed_forms():
    assert scalar_oracle(0.6, 0.1, Penalty(0.5), drive=0.0) == pytest.approx(0.6, abs=1e-12)
    assert scalar_oracle(0.6, 0.1, Penalty(0.9), drive=1.0) == pytest.approx(0.5, abs=1e-12)
    beta = 0.01
    r = beta / (beta + 1)
    assert scalar_oracle(0.6, 0.1, Penalty(beta), drive=-1.0) == pytest.approx(0.6 + 0.1 * r, abs=1e-12)


# ---------------------------------------------------------------- control

BAR = bar_problem(cells=4, T=0.2, tau=0.05)
BASIS = ControlBasis((("right", (1.0,)),), 1, 0.2)


def _space(b_min=0.0, b_max=10.0, cap=100.0):
    return ControlSpace(BASIS, BAR.grid, 0.05, b_min, b_max, cap)


def test_cost_examples():
    sp = _space()
    n = BAR.grid.n_nodes
    chi = np.full((5, n), 0.8)
    cfg = ControlConfig(lambda_Q=1.0, lambda_Omega=1.0, lambda_Sigma=1.0, chi_Q=0.8, chi_T=0.8)
    assert cost(chi, [0.0], sp, cfg) == 0.0
    # ||b||^2 = T c^2 = 2 for c = sqrt(10)
    c = [np.sqrt(10.0)]
    assert sp.norm2(c) == pytest.approx(2.0)
    assert cost(chi, c, sp, ControlConfig(lambda_Q=0, lambda_Omega=0, lambda_Sigma=1)) == pytest.approx(1.0)
    dev = chi.copy()
    dev[3, 1] += 0.3
    assert cost(dev, [0.0], sp, ControlConfig(lambda_Q=2, lambda_Omega=0, lambda_Sigma=0, chi_Q=0.8)) == pytest.approx(0.3)


def test_adapted_cost_examples():
    sp = _space()
    chi = np.ones((5, BAR.grid.n_nodes))
    cfg = ControlConfig(lambda_Omega=1.0, lambda_Sigma=1.0, chi_T=0.5)
    bbar = np.array([1.0])
    assert adapted_cost(chi, bbar, sp, cfg, bbar) == cost(chi, bbar, sp, cfg)
    unit = bbar + 1.0 / np.sqrt(0.2)
    assert adapted_cost(chi, unit, sp, cfg, bbar) == pytest.approx(cost(chi, unit, sp, cfg) + 0.5)
    pure = ControlConfig(lambda_Q=0, lambda_Omega=0, lambda_Sigma=1)
    c = np.array([2.0])
    assert adapted_cost(chi, c, sp, pure, np.zeros(1)) == pytest.approx(sp.norm2(c))


def test_reduced_cost_examples():
    P = bar_problem(cells=4, T=0.2, tau=0.05, amplitude=0.0)
    sp = _space()
    cfg = ControlConfig(lambda_Q=1.0, lambda_Omega=1.0, lambda_Sigma=0.0, chi_Q=1.0, chi_T=1.0)
    assert ControlProblem(P, sp, cfg).reduced_cost([0.0], 0.01)[0] == 0.0
    pure = ControlProblem(P, sp, ControlConfig(lambda_Q=0, lambda_Omega=0, lambda_Sigma=1))
    j1, j2 = pure.reduced_cost([0.7], 0.01)[0], pure.reduced_cost([1.4], 0.01)[0]
    assert j2 == pytest.approx(4 * j1, rel=1e-14)


def test_projection_examples():
    sp = _space(b_min=-1.0, b_max=1.0, cap=100.0)
    np.testing.assert_array_equal(sp.project([0.5]), [0.5])
    np.testing.assert_array_equal(sp.project([2.0]), [1.0])
    M = np.sqrt(sp.surrogate([1.0])) / 2.0
    capped = _space(b_min=-1.0, b_max=1.0, cap=M)
    np.testing.assert_allclose(capped.project([1.0]), [0.5])


def test_pure_norm_minimization():
    cfg = ControlConfig(lambda_Q=0, lambda_Omega=0, lambda_Sigma=1, restarts=2, min_step=1e-6, max_evals=200)
    cp = ControlProblem(BAR, _space(b_max=2.0), cfg)
    res = solve_P_beta(cp, 0.01)
    assert res.coeffs[0] == 0.0 and res.value == 0.0
    rep = beta_continuation(cp, schedule=[0.1, 0.01])
    assert all(r.coeffs[0] == 0.0 and r.value == 0.0 for r in rep.results)


@pytest.fixture(scope="module")
def damaging_target():
    P = standard_problem(cells=4, T=0.2, tau=0.05)
    basis = ControlBasis((("right", (-1.0, 0.0)),), 1, P.T)
    space = ControlSpace(basis, P.grid, P.tau, 0.0, 4.0, 100.0)
    target = P.run(0.01, boundary_load=space.load([3.0])).chi[-1]
    cfg = ControlConfig(lambda_Omega=1.0, lambda_Sigma=1e-5, chi_T=target, restarts=1, initial_step=0.5, min_step=1e-3)
    return ControlProblem(P, space, cfg)


def test_optimizer_improves_on_zero_control(damaging_target):
    cp = damaging_target
    res = solve_P_beta(cp, 0.01, x0=[1.0])
    assert res.value < cp.reduced_cost([0.0], 0.01)[0]


def test_adapted_examples(damaging_target):
    cp = damaging_target
    anchor = solve_P_beta(cp, 0.01, x0=[1.0]).coeffs
    ad = solve_adapted(cp, 0.01, anchor=anchor, restarts=1)
    assert ad.anchor_distance <= cp.cfg.min_step
    assert ad.value <= cp.reduced_cost(anchor, 0.01, anchor)[0]
    # a large proximal weight pins the control to an arbitrary anchor
    other = np.array([1.5])
    heavy = ControlProblem(cp.problem, cp.space, ControlConfig(**{**cp.cfg.__dict__, "proximal_weight": 1e3}))
    pinned = solve_adapted(heavy, 0.01, anchor=other, restarts=1)
    assert abs(pinned.coeffs[0] - other[0]) < 0.05
