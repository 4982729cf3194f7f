"""Newton continuation, kernel probes and the deformation search."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from foliation_forge.charts import catalog, recenter_conformal
from foliation_forge.curvature import curvature_jet
from foliation_forge.geodesics import orthonormal_basis
from foliation_forge.obstructions import eval_a_st, frame_covector
from foliation_forge.solver import (KernelObstructionError,
                                    NonConvergenceError, _neville3,
                                    continue_foliation, default_schedule,
                                    dtau_dr_closed_form, factory_deform,
                                    initial_phi0, linearized_p_squared,
                                    newton_matrix, obstruction_probe,
                                    solve_leaf)
from foliation_forge.spheregrid import (SphereField, default_grid,
                                        project_kernel, project_kperp,
                                        solve_L)
from foliation_forge.surfaces import embed_leaf, p_trace


def _ricci_profile(chart, grid):
    # oracle written first: the r -> 0 profile solves
    # (-Laplacian - n) phi = (1/3) Ric_ij x^i x^j with the degree-1
    # content removed
    cur = curvature_jet(chart, np.zeros((1, chart.dim)))
    ric = cur.ricci[0]
    vals = np.einsum("ij,ni,nj->n", ric, grid.nodes, grid.nodes) / 3.0
    return solve_L(project_kperp(SphereField(grid, values=vals)))


def test_converged_profile_limit():
    chart = catalog("cmc_bump")
    grid = default_grid(2, 8)
    target = _ricci_profile(chart, grid)
    radii = np.array([0.02, 0.01, 0.005])
    sols = []
    for r in radii:
        st = solve_leaf(chart, r, "CE+", grid=grid, jacobian="shortcut")
        assert st.converged
        sols.append(st.phi.coeffs)
    lim = _neville3(radii, np.array(sols))
    err = np.max(np.abs(grid.synthesize(lim - target.coeffs)))
    assert err <= 1e-6
    # the zero sets of the two residual types coincide when the data has
    # no trace term, so the stable variant lands on the same profile
    st2 = solve_leaf(chart, 0.01, "STCMC", grid=grid, jacobian="shortcut")
    assert np.max(np.abs(st2.phi.coeffs - sols[1])) <= 1e-10
    assert np.max(np.abs(st2.tau)) <= 1e-8


def test_flat_leaf_converges_in_one_pass():
    chart = catalog("flat")
    grid = default_grid(2, 6)
    for variant in ("STCMC", "CE+", "CE-"):
        st = solve_leaf(chart, 0.3, variant, grid=grid)
        assert st.newton_iters == 1
        assert st.converged
        assert_allclose(st.tau, 0.0, atol=1e-15)
        assert np.max(np.abs(st.phi.values)) <= 1e-12
        assert st.residual_sup <= 1e-11
        assert st.residual_kernel <= 1e-11
        assert st.diagnostics["jacobi_lambda1"] < 0.0


def test_newton_matrix_modes_agree():
    chart = catalog("ce_mixed")
    grid = default_grid(2, 4)
    r = 0.02
    tau = np.array([0.01, -0.02, 0.015])
    coef = initial_phi0(chart, r, "CE+", grid=grid).coeffs.copy()
    rows = np.flatnonzero(grid.degrees == 2)
    coef[rows[0]] += 0.004
    coef[rows[2]] -= 0.003
    phi = SphereField(grid, coeffs=coef)
    J_fd, act_fd = newton_matrix(chart, r, "CE+", tau, phi, grid, mode="fd")
    J_sc, act_sc = newton_matrix(chart, r, "CE+", tau, phi, grid,
                                 mode="shortcut")
    assert act_fd and act_sc
    # the tau columns run through the identical difference path
    assert np.array_equal(J_fd[:, :3], J_sc[:, :3])
    assert np.max(np.abs(J_fd[:, 3:] - J_sc[:, 3:])) <= 1e-5


def test_factory_leaves_converge_with_contraction():
    chart = catalog("stcmc_factory")
    grid = default_grid(2, 8)
    for r in (0.05, 0.02, 0.01):
        st = solve_leaf(chart, r, "STCMC", grid=grid, jacobian="shortcut")
        assert st.converged
        assert st.residual_sup <= 1e-9
        assert st.residual_kernel <= 1e-10
        assert np.max(np.abs(project_kernel(st.phi).components)) <= 1e-12
        # the first chord step jumps the center to the far fixed point, so
        # the windowed contraction check starts at the second trace pair
        tr = st.trace
        for i in range(1, len(tr) - 1):
            if 1e-9 < tr[i] < 1e-4:
                assert tr[i + 1] < 0.3 * tr[i]
        # the converged center sits near a root of the obstruction
        # covector, at quadratic distance in the leaf radius
        E = orthonormal_basis(chart, st.tau)
        a = frame_covector(eval_a_st(chart, st.tau), E)
        assert np.linalg.norm(a) <= 0.06 * r ** 2


def test_distinct_inits_agree():
    chart = catalog("ce_tilt")
    grid = default_grid(2, 6)
    r = 0.04
    a = solve_leaf(chart, r, "CE+", grid=grid, jacobian="shortcut")
    coef = initial_phi0(chart, r, "CE+", grid=grid).coeffs.copy()
    rows = np.flatnonzero(grid.degrees == 2)
    coef[rows[0]] += 0.02
    coef[rows[2]] -= 0.015
    tau0 = np.array([0.02, -0.01, 0.015])
    b = solve_leaf(chart, r, "CE+",
                   init=(tau0, SphereField(grid, coeffs=coef)),
                   grid=grid, jacobian="shortcut")
    assert np.max(np.abs(a.tau - b.tau)) <= 1e-7
    assert np.max(np.abs(a.phi.values - b.phi.values)) <= 1e-7


def test_kernel_obstruction_detected():
    # k = x_0^2 times the identity: the covector gradient has rank one,
    # so the center cannot absorb the transverse kernel components
    spec = {"kind": "poly", "components": {
        "0,0": [{"expo": (2, 0, 0), "c": 2.0}],
        "1,1": [{"expo": (2, 0, 0), "c": 2.0}],
        "2,2": [{"expo": (2, 0, 0), "c": 2.0}]}}
    chart = catalog("flat", {"k": spec})
    with pytest.raises(KernelObstructionError):
        solve_leaf(chart, 0.05, "CE+", grid=default_grid(2, 6),
                   jacobian="shortcut")


def test_nonconvergence_keeps_trace():
    chart = catalog("ce_mixed")
    with pytest.raises(NonConvergenceError) as err:
        solve_leaf(chart, 0.06, "STCMC", grid=default_grid(2, 6),
                   jacobian="shortcut", max_iter=1)
    assert len(err.value.trace) == 1


def test_cmc_run_is_a_foliation():
    chart = catalog("cmc_bump")
    grid = default_grid(2, 6)
    radii = 0.08 * 0.8 ** np.arange(15)
    run = continue_foliation(chart, "CE+", r_schedule=radii, grid=grid)
    assert run.verdict == "foliation"
    assert len(run.leaves) == 15
    assert np.all(np.diff(run.radii) < 0)
    assert all(st.converged for st in run.leaves)
    assert max(st.residual_kernel for st in run.leaves) <= 1e-10
    assert np.max(np.abs(run.dtau_dr_at_0)) <= 1e-3
    assert run.alpha_min >= 0.999
    assert run.regularity_sup <= 4.0 * np.sqrt(2.0)


def test_dtau_dr_expansion_variants():
    # the tilt chart has drift covector (0.5, 0, 0) and covector gradient
    # diag(-0.48, 0.8, -0.32), so the center curves leave the origin at
    # slope -+ (1/5) * 0.5 / (-0.48) = +-5/24 along the first axis
    chart = catalog("ce_tilt")
    cf_plus = dtau_dr_closed_form(chart, "CE+")
    cf_minus = dtau_dr_closed_form(chart, "CE-")
    assert_allclose(cf_plus, [5.0 / 24.0, 0.0, 0.0], atol=1e-8)
    assert_allclose(cf_minus, [-5.0 / 24.0, 0.0, 0.0], atol=1e-8)
    grid = default_grid(2, 6)
    radii = 0.05 * 0.8 ** np.arange(12)
    for variant, cf in (("CE+", cf_plus), ("CE-", cf_minus)):
        run = continue_foliation(chart, variant, r_schedule=radii, grid=grid)
        assert run.verdict == "foliation"
        err = np.linalg.norm(run.dtau_dr_at_0 - cf)
        assert err <= 0.01 * np.linalg.norm(cf)


def test_dtau_dr_stable_variant_two_routes():
    # the closed form concentrates at a root of the obstruction covector,
    # so move the chart origin onto the factory's root first
    rec = factory_deform(catalog("stcmc_factory"), 1.0)
    assert rec["a_st_norm"] <= 1e-10
    chart = recenter_conformal(rec["chart"], rec["point"])
    grid = default_grid(2, 8)
    cf = dtau_dr_closed_form(chart, "STCMC", grid=grid)
    radii = 0.05 * 0.8 ** np.arange(12)
    run = continue_foliation(chart, "STCMC", r_schedule=radii, grid=grid)
    assert run.verdict == "foliation"
    err = np.linalg.norm(run.dtau_dr_at_0 - cf)
    assert err <= max(0.1 * np.linalg.norm(cf), 1e-4)
    # the center drift is quadratic in leaf radius here: consecutive
    # norms drop by the square of the schedule ratio
    norms = np.array([np.linalg.norm(lf.tau) for lf in run.leaves[:9]])
    ratios = norms[1:] / norms[:-1]
    assert np.all(ratios > 0.58)
    assert np.all(ratios < 0.70)


def test_probe_stable_variant():
    rec = obstruction_probe(catalog("cmc_bump"), "STCMC")
    assert rec["match"]
    assert not rec["nonexistence"]
    assert not rec["divergent"]
    assert np.linalg.norm(rec["extrapolated_kernel_limit"]) <= 1e-6

    rec2 = obstruction_probe(catalog("tilt_bump"), "STCMC")
    # frozen: A = (n/2) grad Sc = (-1, 0, 0) for the default tilt, and
    # the scaled moments converge to -(2 area / 15) A
    expect = np.array([8.0 * np.pi / 15.0, 0.0, 0.0])
    assert rec2["match"]
    assert rec2["nonexistence"]
    assert_allclose(rec2["extrapolated_kernel_limit"], expect, atol=2e-3)

    # on the factory chart the covector mixes curvature and k terms;
    # frozen from the bundled coefficients: A = (81/350, -16/125, -1/7)
    fac = catalog("stcmc_factory")
    a0 = frame_covector(eval_a_st(fac, np.zeros(3)),
                        orthonormal_basis(fac, np.zeros(3)))
    assert_allclose(a0, [81.0 / 350.0, -16.0 / 125.0, -1.0 / 7.0],
                    atol=1e-12)
    rec3 = obstruction_probe(fac, "STCMC")
    assert rec3["match"]
    assert rec3["nonexistence"]
    assert_allclose(rec3["extrapolated_kernel_limit"],
                    -(8.0 * np.pi / 15.0) * a0, atol=1e-6)


def test_probe_expansion_variants():
    # each diagonal entry of k depends only on another coordinate, so the
    # divergence term drops out and A = (4/5) grad tr k
    k = {"kind": "linear",
         "entries": [(0, 0, 1, 0.4), (1, 1, 2, -0.3), (2, 2, 0, 0.2)]}
    chart = catalog("flat", {"k": k})
    expect = (4.0 * np.pi / 3.0) * np.array([0.16, 0.32, -0.24])
    rec = obstruction_probe(chart, "CE+")
    assert rec["match"]
    assert rec["nonexistence"]
    assert not rec["divergent"]
    assert_allclose(rec["extrapolated_kernel_limit"], expect,
                    atol=2e-3 * np.linalg.norm(expect))
    rec_m = obstruction_probe(chart, "CE-")
    assert rec_m["match"]
    assert_allclose(rec_m["extrapolated_kernel_limit"], -expect,
                    atol=2e-3 * np.linalg.norm(expect))

    # k(0) != 0 makes the expansion defect order r instead of r^2: the
    # scaled residual sup grows like 1/r and the probe flags divergence
    const = catalog("flat", {"k": {"kind": "constant",
                                   "diag": [0.3, 0.3, 0.3]}})
    rec_c = obstruction_probe(const, "CE+")
    assert rec_c["divergent"]
    assert rec_c["nonexistence"]


def test_factory_deformation_scaling():
    base = catalog("stcmc_factory")
    rec0 = factory_deform(base, 0.0)
    assert rec0["a_st_norm"] <= 1e-14
    assert np.all(rec0["point"] == 0.0)
    rec1 = factory_deform(base, 0.05)
    rec2 = factory_deform(base, 0.1)
    assert rec1["a_st_norm"] <= 1e-10
    assert rec2["a_st_norm"] <= 1e-10
    r1 = np.linalg.norm(rec1["point"])
    r2 = np.linalg.norm(rec2["point"])
    assert 1e-4 <= r2 <= 1e-2
    assert 4.0 / 1.5 <= r2 / r1 <= 4.0 * 1.5
    assert rec2["report"].verdicts["priSTCMC"].satisfied
    st = solve_leaf(rec2["chart"], 0.02, "STCMC", grid=default_grid(2, 6),
                    jacobian="shortcut")
    assert st.converged and st.residual_sup <= 1e-9


def test_linearized_trace_term_matches_fd():
    rng = np.random.default_rng(7)
    grid = default_grid(2, 6)
    nb = grid.basis.shape[0]
    for chart_id in ("stcmc_factory", "ce_mixed"):
        chart = catalog(chart_id)
        r = 0.05
        tau = np.array([0.01, -0.015, 0.02])
        coef = np.zeros(nb)
        coef[:16] = 0.01 * rng.standard_normal(16)
        f = SphereField(grid, coeffs=r * r * coef)
        leaf = embed_leaf(chart, r, tau, f, normalization="raw")
        dirc = SphereField(grid, coeffs=0.5 * rng.standard_normal(nb)
                           * (grid.degrees <= 4))
        lin = linearized_p_squared(leaf, dirc)
        h = 1e-5
        sides = []
        for sgn in (1.0, -1.0):
            fpm = SphereField(grid, values=f.values + sgn * h * dirc.values)
            lpm = embed_leaf(chart, r, tau, fpm, normalization="raw")
            sides.append((r * p_trace(lpm).values) ** 2)
        fd = (sides[0] - sides[1]) / (2.0 * h)
        assert np.max(np.abs(lin.values - fd)) <= 1e-6

    # constant-trace data: the variation vanishes identically
    const = catalog("flat", {"k": {"kind": "constant",
                                   "diag": [0.37, 0.37, 0.37]}})
    leaf = embed_leaf(const, 0.2, np.zeros(3),
                      SphereField(grid, values=np.full(grid.n_nodes, 0.01)),
                      normalization="raw")
    dirc = SphereField(grid, values=grid.nodes[:, 0] ** 2)
    assert np.max(np.abs(linearized_p_squared(leaf, dirc).values)) <= 1e-14


def test_default_schedule_shape():
    chart = catalog("cmc_bump")
    sched = default_schedule(chart)
    assert sched[0] == pytest.approx(0.1 * 0.8)
    assert_allclose(sched[1:] / sched[:-1], 0.8, rtol=1e-12)
    assert sched[-1] >= 1e-3 * 0.8
    assert sched[-1] * 0.8 < 1e-3 * 0.8
