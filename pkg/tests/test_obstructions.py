import json

import numpy as np
from numpy.testing import assert_allclose

from foliation_forge.charts import (
    AmbientChart,
    FlatChart,
    PolynomialConformalChart,
    PolynomialK,
    catalog,
    constant_k,
    diag_linear_k,
    linear_k,
    outer_quadratic_k,
    quartic_bump_chart,
)
from foliation_forge.jets import Jet
from foliation_forge.obstructions import (
    check_theorem_hypotheses,
    eval_a_ce,
    eval_a_st,
    eval_grad_a_ce,
    eval_grad_a_st,
    eval_grad_hat_a_ce,
    eval_hat_a_ce,
    eval_hess_a_ce,
    eval_t_hat,
    obstruction_report,
)
from oracles import conformal_ricci, conformal_scalar, fd_partial


def bump_scalar_curvature(alpha):
    # independent route to Sc of the quartic bump through the conformal
    # closed form with hand-written u derivatives
    def sc(x):
        rho2 = float(x @ x)
        u = 1.0 + alpha * rho2 ** 2
        dpsi = 4.0 * alpha * rho2 * x
        d2psi = 4.0 * alpha * (2.0 * np.outer(x, x) + rho2 * np.eye(3))
        grad_f = 0.5 * dpsi / u
        hess_f = 0.5 * (d2psi / u - np.outer(dpsi, dpsi) / u ** 2)
        return conformal_scalar(3, u, grad_f, hess_f)

    return sc


def test_flat_zero_k_everything_vanishes():
    chart = FlatChart(3)
    p = np.zeros(3)
    assert_allclose(eval_a_st(chart, p), np.zeros(3), atol=1e-14)
    assert_allclose(eval_a_ce(chart, p), np.zeros(3), atol=1e-14)
    assert_allclose(eval_hat_a_ce(chart, p, 1), np.zeros(3), atol=1e-14)
    assert_allclose(eval_t_hat(chart, p), np.zeros((3, 3)), atol=1e-14)
    rep = obstruction_report(chart, p)
    assert rep.k_norm == 0.0 and rep.ric_norm == 0.0
    v = rep.verdicts["priSTCMC"]
    assert not v.satisfied
    assert not v.checks["grad_a_st_invertible"]["ok"]


def test_k_zero_reduces_to_scalar_gradient():
    alpha = 0.02
    chart = quartic_bump_chart(3, alpha, None, 0.8)
    p = np.array([0.1, -0.05, 0.2])
    sc = bump_scalar_curvature(alpha)
    grad_sc = np.array([fd_partial(sc, p, i, 1e-4) for i in range(3)])
    a = eval_a_st(chart, p)
    assert_allclose(a, 0.5 * 2 * grad_sc, rtol=1e-6, atol=1e-10)
    for sign in (1, -1):
        assert_allclose(eval_hat_a_ce(chart, p, sign), -0.5 * grad_sc,
                        rtol=1e-6, atol=1e-10)


def test_constant_k_is_singular():
    chart = FlatChart(3, constant_k(3, [0.4, -0.1, 0.3]))
    p = np.zeros(3)
    assert_allclose(eval_a_st(chart, p), np.zeros(3), atol=1e-13)
    assert_allclose(eval_grad_a_st(chart, p), np.zeros((3, 3)), atol=1e-9)
    rep = obstruction_report(chart, p)
    assert not rep.verdicts["priSTCMC"].satisfied


def test_diag_linear_frozen_values():
    # independent symbolic contraction of the covector for
    # k_ij = delta_ij c_i (1 + a_i x_i) on flat space gives
    # A_l = (-2 c_l^2 a_l + 10 (sum c) c_l a_l) / 7 at the origin; frozen
    c = [0.3, -0.2, 0.5]
    a = [1.0, 0.7, -0.4]
    chart = FlatChart(3, diag_linear_k(3, c, a))
    got = eval_a_st(chart, np.zeros(3))
    frozen = np.array([0.23142857142857143, -0.128, -0.14285714285714285])
    assert_allclose(got, frozen, atol=1e-12)


def test_outer_quadratic_ce_values():
    c = 0.7
    p = np.array([0.3, -0.1, 0.2])
    chart = FlatChart(3, outer_quadratic_k(3, c))
    got = eval_a_ce(chart, p)
    assert_allclose(got, [-1.344, 0.448, -0.896], atol=1e-12)
    # direct recomputation from the partial derivatives of c x_i x_j
    dk = np.zeros((3, 3, 3))
    for aa in range(3):
        for i in range(3):
            for j in range(3):
                dk[aa, i, j] = c * ((aa == i) * p[j] + (aa == j) * p[i])
    dtr = np.einsum("aii->a", dk)
    div = np.einsum("aal->l", dk)
    assert_allclose(got, 0.8 * dtr - 2.0 * div, atol=1e-13)
    grad = eval_grad_a_ce(chart, p)
    assert_allclose(grad, -(32.0 * c / 5.0) * np.eye(3), atol=1e-8)


def test_t_hat_contraction_oracle():
    rng = np.random.default_rng(23)
    K = rng.standard_normal((3, 3, 3))
    K = K + K.transpose(1, 0, 2)
    entries = [(i, j, m, K[i, j, m])
               for i in range(3) for j in range(i, 3) for m in range(3)]
    chart = FlatChart(3, linear_k(3, entries))
    got = eval_t_hat(chart, np.zeros(3))
    m1 = 2.0 * np.einsum("ijb,ilj->lb", K, K)
    m2 = np.einsum("ijb,ijl->lb", K, K)
    dtr = np.einsum("iim->m", K)
    m3 = np.outer(dtr, dtr) + 2.0 * np.einsum("lab,a->lb", K, dtr)
    want = (4.0 / 35.0) * (m1 + m2 - (9.0 / 25.0) * m3)
    assert_allclose(got, want, atol=1e-12)


def test_t_hat_sparse_pattern_closed_form():
    # k entries (0,1)~x2, (0,2)~x1, (1,2)~x0 give, by hand contraction,
    # T = (8 (b1+b2+b3) / 35) diag(b3, b2, b1)
    b1, b2, b3 = 0.3, 0.5, 0.7
    chart = FlatChart(3, linear_k(3, [(0, 1, 2, b1), (0, 2, 1, b2),
                                      (1, 2, 0, b3)]))
    got = eval_t_hat(chart, np.zeros(3))
    want = (8.0 * (b1 + b2 + b3) / 35.0) * np.diag([b3, b2, b1])
    assert_allclose(got, want, atol=1e-13)


def test_hat_ce_bracket_oracle():
    # with s = 0 the conformal factor is purely quadratic, so grad Sc
    # vanishes at 0 and the sign-odd part of the second CE covector
    # isolates the Ricci contraction of the k derivatives
    q, w, c, b = 0.1, 0.08, 0.5, 0.4
    chart = catalog("ce_mixed", {"q": q, "s": 0.0, "w": w, "c": c, "b": b})
    plus = eval_hat_a_ce(chart, np.zeros(3), 1)
    minus = eval_hat_a_ce(chart, np.zeros(3), -1)
    even = 0.5 * (plus + minus)
    odd = 0.5 * (plus - minus)
    assert_allclose(even, np.zeros(3), atol=1e-10)
    # Ricci at 0 from the conformal oracle: f = psi/2 there
    hess_f = q * np.eye(3)
    hess_f[1, 2] = hess_f[2, 1] = 0.5 * w
    ric = conformal_ricci(3, np.zeros(3), hess_f)
    K = np.zeros((3, 3, 3))
    K[0, 1, 2] = K[1, 0, 2] = b
    dk = np.transpose(K, (2, 0, 1))  # dk[r, l, s] = partial_r k_{ls}
    bracket = (-4.0 * np.einsum("rs,rls->l", ric, dk)
               - 2.0 * np.einsum("rs,lrs->l", ric, dk))
    assert_allclose(odd, bracket / 105.0, atol=1e-10)
    assert np.max(np.abs(odd)) > 1e-4


def test_alternative_grouping_flag():
    chart = catalog("ce_mixed")
    p = np.array([0.05, -0.02, 0.04])
    printed_plus = eval_hat_a_ce(chart, p, 1)
    alt_plus = eval_hat_a_ce(chart, p, 1, alternative_grouping=True)
    alt_minus = eval_hat_a_ce(chart, p, -1, alternative_grouping=True)
    assert_allclose(alt_plus, printed_plus, atol=1e-14)
    assert_allclose(alt_minus, -printed_plus, atol=1e-14)


class RotatedChart(AmbientChart):
    """Pullback of a base chart by the linear map x -> R x."""

    def __init__(self, base, R):
        super().__init__(base.dim, None, base.validity_radius)
        self.base = base
        self.R = np.asarray(R, float)

    def _rotate(self, jet):
        terms = []
        for t in jet.terms:
            out = t
            for ax in range(1, out.ndim):
                out = np.moveaxis(
                    np.tensordot(out, self.R, axes=([ax], [0])), -1, ax)
            terms.append(out)
        return Jet(terms, jet.dim, jet.comp_ndim)

    def metric_jet(self, x, order):
        return self._rotate(self.base.metric_jet(
            np.asarray(x, float) @ self.R.T, order))

    def k_jet(self, x, order):
        return self._rotate(self.base.k_jet(
            np.asarray(x, float) @ self.R.T, order))


def test_basis_covariance_under_rotation():
    rng = np.random.default_rng(29)
    R, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    base = catalog("stcmc_factory")
    rot = RotatedChart(base, R)
    p = np.array([0.06, -0.04, 0.08])
    q = R.T @ p
    for fun in (eval_a_st, eval_a_ce):
        assert_allclose(fun(rot, q), R.T @ fun(base, p), atol=1e-11)
    assert_allclose(eval_grad_a_st(rot, q),
                    R.T @ eval_grad_a_st(base, p) @ R, atol=1e-9)
    rep_b = obstruction_report(base, p)
    rep_r = obstruction_report(rot, q)
    for name in ("k_norm", "grad_k_norm", "ric_norm", "cov2_k_norm",
                 "cov3_k_norm"):
        assert_allclose(getattr(rep_r, name), getattr(rep_b, name),
                        rtol=1e-10)
    for theorem in ("priSTCMC", "priCE", "secCMC"):
        vb = rep_b.verdicts[theorem]
        vr = rep_r.verdicts[theorem]
        assert vb.satisfied == vr.satisfied
        # the smallness scalars inherit finite-difference noise from the
        # gradient matrices, so the tolerance sits above the 1e-9 of the
        # exact-transform checks
        assert_allclose(vr.smallness, vb.smallness, rtol=1e-7, atol=1e-12)


def test_k_scaling_is_quadratic():
    chart = catalog("stcmc_factory")
    p = np.array([0.03, 0.05, -0.02])
    a1 = eval_a_st(chart, p)
    ah = eval_a_st(chart.with_k_scale(0.5), p)
    a0 = eval_a_st(chart.with_k_scale(0.0), p)
    assert_allclose(a1 - a0, 4.0 * (ah - a0), atol=1e-10)


def test_a_ce_linear_in_k():
    k1 = diag_linear_k(3, [0.3, -0.2, 0.5], [1.0, 0.7, -0.4])
    k2 = outer_quadratic_k(3, 0.6)
    merged = {}
    for part in (k1.components, k2.components):
        for key, poly in part.items():
            acc = merged.setdefault(key, {})
            for expo, coef in poly.items():
                acc[expo] = acc.get(expo, 0.0) + coef
    psi = {(2, 0, 0): 0.05, (0, 1, 2): 0.03}
    p = np.array([0.1, 0.05, -0.08])
    charts = [PolynomialConformalChart(3, psi, kf)
              for kf in (k1, k2, PolynomialK(3, merged))]
    vals = [eval_a_ce(ch, p) for ch in charts]
    assert_allclose(vals[2], vals[0] + vals[1], atol=1e-11)


def test_grad_a_st_bump_oracle():
    # for the quartic bump, Sc = -40 alpha |x|^2 + higher order, so the
    # covector gradient at 0 is (n/2) Hess Sc = -80 alpha I at n = 2
    alpha = 0.02
    chart = quartic_bump_chart(3, alpha, None, 0.8)
    grad = eval_grad_a_st(chart, np.zeros(3))
    assert_allclose(grad, -80.0 * alpha * np.eye(3), atol=1e-7)
    sc = bump_scalar_curvature(alpha)
    hess_sc = np.empty((3, 3))
    h = 1e-3
    for i in range(3):
        for j in range(3):
            hess_sc[i, j] = fd_partial(
                lambda y: fd_partial(sc, y, j, h), np.zeros(3), i, h)
    assert_allclose(grad, hess_sc, atol=1e-6)
    rep = obstruction_report(chart, np.zeros(3))
    v = rep.verdicts["priSTCMC"]
    assert v.satisfied
    assert v.smallness == 0.0 and np.isinf(v.c_star)
    assert v.checks["grad_a_st_invertible"]["value"] < 10.0


def test_verdict_pri_ce():
    chart = catalog("ce_mixed")
    rep = obstruction_report(chart, np.zeros(3))
    v = rep.verdicts["priCE"]
    assert v.satisfied
    assert 0.0 < v.smallness < 1.0
    blob = json.dumps(rep.as_dict())
    assert "priSTCMC" in blob


def test_verdict_sec_cmc_c_star():
    b1, b2, b3 = 0.3, 0.5, 0.7
    chart = FlatChart(3, linear_k(3, [(0, 1, 2, b1), (0, 2, 1, b2),
                                      (1, 2, 0, b3)]))
    rep = obstruction_report(chart, np.zeros(3))
    # hand value: smallest T entry over |grad k|^2
    grad_k_sq = 2.0 * (b1 ** 2 + b2 ** 2 + b3 ** 2)
    c_star = (8.0 * (b1 + b2 + b3) * b1 / 35.0) / grad_k_sq
    v = rep.verdicts["secCMC"]
    assert_allclose(v.c_star, c_star, rtol=1e-8)
    ok = check_theorem_hypotheses(rep, "secCMC", C_config=0.5 * c_star)
    bad = check_theorem_hypotheses(rep, "secCMC", C_config=2.0 * c_star)
    assert ok.satisfied
    assert not bad.satisfied


def test_hess_a_ce():
    chart = FlatChart(3, outer_quadratic_k(3, 0.7))
    hess = eval_hess_a_ce(chart, np.array([0.2, -0.1, 0.15]))
    assert_allclose(hess, np.zeros((3, 3, 3)), atol=1e-7)
    cubic = PolynomialK(3, {(0, 0): {(3, 0, 0): 0.5}})
    hess = eval_hess_a_ce(FlatChart(3, cubic), np.zeros(3))
    want = np.zeros((3, 3, 3))
    want[0, 0, 0] = -36.0 / 5.0 * 0.5
    assert_allclose(hess, want, atol=1e-6)
    assert_allclose(hess, np.swapaxes(hess, 1, 2), atol=1e-6)
