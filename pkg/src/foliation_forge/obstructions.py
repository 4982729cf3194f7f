"""Pointwise obstruction 1-forms for STCMC and constant-expansion
foliations, their derivatives, and the existence-theorem hypothesis checks.

All covectors and matrices are returned in the chart coordinate basis with
every contraction taken against the metric at the evaluation point, so the
results transform covariantly (covectors as covectors, gradients by
conjugation under orthogonal frame changes).
"""

from dataclasses import dataclass, field

import numpy as np

from .curvature import curvature_jet

COND_LIMIT = 1e8
ZERO_TOL = 1e-8

THEOREMS = ("priSTCMC", "priCE", "secCMC")


def _as_batch(p, dim):
    p = np.asarray(p, float)
    if p.ndim == 1:
        return p[None, :], True
    return p, False


def eval_a_st(chart, p):
    """The STCMC obstruction covector at p.

    (n/2) grad Sc plus 1/(n+5) times the k-quadratic block: grad|k|^2,
    ((n+1)(n+5)+1) tr k grad tr k, 4 div<k, k(V,.)>, -2(n+4) div(tr k k(V,.)).
    """
    pts, single = _as_batch(p, chart.dim)
    cv = curvature_jet(chart, pts)
    n = chart.dim - 1
    gi, k, dk = cv.ginv, cv.k, cv.cov_k
    kup = np.einsum("nia,njb,nab->nij", gi, gi, k)
    t1 = 2.0 * np.einsum("nij,nlij->nl", kup, dk)
    t2 = ((n + 1) * (n + 5) + 1) * cv.tr_k[:, None] * cv.grad_tr_k
    t3 = 4.0 * (np.einsum("nia,njb,nalj,nbi->nl", gi, gi, dk, k)
                + np.einsum("nia,njb,nlj,nabi->nl", gi, gi, k, dk))
    t4 = -2.0 * (n + 4) * (
        np.einsum("nja,na,nlj->nl", gi, cv.grad_tr_k, k)
        + cv.tr_k[:, None] * np.einsum("nja,nalj->nl", gi, dk))
    out = 0.5 * n * cv.grad_scalar + (t1 + t2 + t3 + t4) / (n + 5)
    return out[0] if single else out


def eval_a_ce(chart, p):
    """The constant-expansion obstruction covector
    ((n+2)/(n+3)) grad tr k - 2 div k."""
    pts, single = _as_batch(p, chart.dim)
    cv = curvature_jet(chart, pts)
    n = chart.dim - 1
    out = (n + 2.0) / (n + 3.0) * cv.grad_tr_k - 2.0 * cv.div_k
    return out[0] if single else out


def eval_hat_a_ce(chart, p, sign=1, alternative_grouping=False):
    """The second constant-expansion covector for the given sign branch.

    Printed grouping: -1/2 grad Sc outside, the Ricci/Sc contraction block
    under the global 1/(3(n+3)(n+5)).  The alternative grouping (sensitivity
    probe only) applies the sign to the whole expression.
    """
    pts, single = _as_batch(p, chart.dim)
    cv = curvature_jet(chart, pts)
    n = chart.dim - 1
    gi, ric, dk, dtr = cv.ginv, cv.ricci, cv.cov_k, cv.grad_tr_k
    ric_mixed = np.einsum("nla,nar->nlr", ric, gi)
    ric_up = np.einsum("nra,nsb,nab->nrs", gi, gi, ric)
    b = (2.0 * (n * n + 6 * n + 10) / (n + 3.0)
         * np.einsum("nlr,nr->nl", ric_mixed, dtr))
    b = b - 4.0 * np.einsum("nrs,nrls->nl", ric_up, dk)
    b = b - 2.0 * np.einsum("nrs,nlrs->nl", ric_up, dk)
    b = b - ((n ** 3 + 14.0 * n ** 2 + 52.0 * n + 60.0) / (n * (n + 3.0))
             * cv.scalar[:, None] * dtr)
    bracket = b / (3.0 * (n + 3.0) * (n + 5.0))
    lead = -0.5 * cv.grad_scalar
    if alternative_grouping:
        out = sign * (lead + bracket)
    else:
        out = lead + sign * bracket
    return out[0] if single else out


def eval_t_hat(chart, p):
    """The quadratic-in-grad-k 2-tensor T[l, b] entering the second
    constant-expansion gradient condition (V slot first, W slot second)."""
    pts, single = _as_batch(p, chart.dim)
    cv = curvature_jet(chart, pts)
    n = chart.dim - 1
    gi, dk, dtr = cv.ginv, cv.cov_k, cv.grad_tr_k
    m1 = 2.0 * np.einsum("nia,njb,ncij,nbal->nlc", gi, gi, dk, dk)
    m2 = np.einsum("nia,njb,ncij,nlab->nlc", gi, gi, dk, dk)
    m3 = (np.einsum("nl,nc->nlc", dtr, dtr)
          + 2.0 * np.einsum("nab,ncla,nb->nlc", gi, dk, dtr))
    out = (4.0 / ((n + 3.0) * (n + 5.0))
           * (m1 + m2 - (2.0 * n + 5.0) / (n + 3.0) ** 2 * m3))
    return out[0] if single else out


def _fd_step(chart, h):
    if h is not None:
        return h
    v = chart.validity_radius
    if not np.isfinite(v):
        return 0.01
    return min(0.01, 0.02 * v)


def _covector_grad(chart, p, fun, h=None):
    """Covariant derivative (grad A)[l, b] = d_b A_l - Gamma^m_{bl} A_m
    through 5-point central differences along the chart axes."""
    d = chart.dim
    h = _fd_step(chart, h)
    p = np.asarray(p, float)
    offs = np.array([-2.0, -1.0, 1.0, 2.0]) * h
    pts = (p[None, None, :] + offs[:, None, None] * np.eye(d)[None, :, :])
    vals = fun(chart, pts.reshape(-1, d)).reshape(4, d, d)
    dA = (vals[0] - 8.0 * vals[1] + 8.0 * vals[2] - vals[3]) / (12.0 * h)
    a0 = fun(chart, p[None, :])[0]
    gam = chart.christoffel(p[None, :])[0]
    return dA.T - np.einsum("mbl,m->lb", gam, a0)


def _covector_hess(chart, p, fun, h=None):
    """Second covariant derivative H[l, b, c] = (grad_c grad A)[l, b]."""
    d = chart.dim
    h = _fd_step(chart, h)
    p = np.asarray(p, float)
    offs = np.array([-2.0, -1.0, 1.0, 2.0]) * h
    grads = np.empty((4, d, d, d))
    for s in range(4):
        for axis in range(d):
            q = p.copy()
            q[axis] += offs[s]
            grads[s, axis] = _covector_grad(chart, q, fun, h=h)
    dT = (grads[0] - 8.0 * grads[1] + 8.0 * grads[2] - grads[3]) / (12.0 * h)
    t0 = _covector_grad(chart, p, fun, h=h)
    gam = chart.christoffel(p[None, :])[0]
    out = np.einsum("clb->lbc", dT)
    out = out - np.einsum("mcl,mb->lbc", gam, t0)
    out = out - np.einsum("mcb,lm->lbc", gam, t0)
    return out


def eval_grad_a_st(chart, p, h=None):
    return _covector_grad(chart, p, eval_a_st, h=h)


def eval_grad_a_ce(chart, p, h=None):
    return _covector_grad(chart, p, eval_a_ce, h=h)


def eval_hess_a_ce(chart, p, h=None):
    return _covector_hess(chart, p, eval_a_ce, h=h)


def eval_grad_hat_a_ce(chart, p, sign=1, h=None):
    def fun(c, x):
        return eval_hat_a_ce(c, x, sign=sign)
    return _covector_grad(chart, p, fun, h=h)


def frame_covector(vec, frame):
    """Components of a chart-basis covector against orthonormal frame
    columns."""
    return frame.T @ vec


def frame_matrix(mat, frame):
    """Both slots of a chart-basis 2-tensor against frame columns."""
    return frame.T @ mat @ frame


def _g_norm(ginv, t):
    m = t.ndim - 1
    lo = "abcdefg"[:m]
    hi = "uvwxyzr"[:m]
    spec = ",".join("n%s%s" % (a, b) for a, b in zip(lo, hi))
    spec += ",n%s,n%s->n" % (lo, hi)
    val = np.einsum(spec, *([ginv] * m), t, t)
    return np.sqrt(np.maximum(val, 0.0))


@dataclass
class TheoremVerdict:
    theorem: str
    satisfied: bool
    checks: dict
    smallness: float
    c_star: float
    c_config: float

    def as_dict(self):
        return {
            "theorem": self.theorem,
            "satisfied": bool(self.satisfied),
            "checks": {k: {kk: (bool(vv) if isinstance(vv, (bool, np.bool_))
                               else float(vv))
                           for kk, vv in v.items()}
                       for k, v in self.checks.items()},
            "smallness": float(self.smallness),
            "c_star": float(self.c_star),
            "c_config": float(self.c_config),
        }


@dataclass
class ObstructionReport:
    point: np.ndarray
    n: int
    a_st: np.ndarray
    grad_a_st: np.ndarray
    a_ce: np.ndarray
    grad_a_ce: np.ndarray
    hess_a_ce: np.ndarray
    hat_a_ce_plus: np.ndarray
    hat_a_ce_minus: np.ndarray
    grad_hat_a_ce_plus: np.ndarray
    grad_hat_a_ce_minus: np.ndarray
    t_hat: np.ndarray
    k_norm: float
    grad_k_norm: float
    ric_norm: float
    cov2_k_norm: float
    cov3_k_norm: float
    verdicts: dict = field(default_factory=dict)

    def as_dict(self):
        out = {}
        for name in ("point", "a_st", "grad_a_st", "a_ce", "grad_a_ce",
                     "hess_a_ce", "hat_a_ce_plus", "hat_a_ce_minus",
                     "grad_hat_a_ce_plus", "grad_hat_a_ce_minus", "t_hat"):
            out[name] = np.asarray(getattr(self, name)).tolist()
        for name in ("k_norm", "grad_k_norm", "ric_norm", "cov2_k_norm",
                     "cov3_k_norm"):
            out[name] = float(getattr(self, name))
        out["n"] = int(self.n)
        out["verdicts"] = {k: v.as_dict() for k, v in self.verdicts.items()}
        return out


def _inv_data(mat):
    s = np.linalg.svd(mat, compute_uv=False)
    if s[-1] <= 0.0:
        return np.inf, False, np.inf
    cond = s[0] / s[-1]
    return cond, cond <= COND_LIMIT, 1.0 / s[-1]


def check_theorem_hypotheses(report, theorem, C_config=1.0,
                             zero_tol=ZERO_TOL):
    """Evaluate one existence theorem's hypotheses against a report.

    priSTCMC: primary STCMC existence (obstruction zero, invertible
    gradient, curvature-smallness with the configurable constant C).
    priCE: primary constant-expansion existence (both sign branches).
    secCMC: the second constant-expansion construction that generalizes
    the CMC result (higher-order vanishing plus its own smallness).
    c_star is the factor at which the smallness inequality saturates.
    """
    n = report.n
    checks = {}

    def zero_check(name, arr):
        v = float(np.max(np.abs(arr))) if np.size(arr) else 0.0
        checks[name] = {"ok": v <= zero_tol, "value": v, "limit": zero_tol}

    def invert_check(name, mat):
        cond, ok, inv_norm = _inv_data(mat)
        checks[name] = {"ok": ok, "value": cond, "limit": COND_LIMIT}
        return inv_norm

    if theorem == "priSTCMC":
        zero_check("a_st_zero", report.a_st)
        inv_norm = invert_check("grad_a_st_invertible", report.grad_a_st)
        base = (inv_norm * (report.k_norm ** 2 + report.ric_norm)
                * report.k_norm * report.grad_k_norm)
        lhs = C_config * base
        checks["smallness"] = {"ok": lhs < 1.0, "value": lhs, "limit": 1.0}
    elif theorem == "priCE":
        zero_check("a_ce_zero", report.a_ce)
        zero_check("k_zero", report.k_norm)
        inv_norm = invert_check("grad_a_ce_invertible", report.grad_a_ce)
        plus = (inv_norm / (n + 3.0)
                * float(np.linalg.norm(report.hat_a_ce_plus)))
        minus = (inv_norm / (n + 3.0)
                 * float(np.linalg.norm(report.hat_a_ce_minus)))
        checks["smallness_plus"] = {"ok": plus < 1.0, "value": plus,
                                    "limit": 1.0}
        checks["smallness_minus"] = {"ok": minus < 1.0, "value": minus,
                                     "limit": 1.0}
        base = max(plus, minus)
        lhs = base
    elif theorem == "secCMC":
        zero_check("a_ce_zero", report.a_ce)
        zero_check("hat_a_ce_plus_zero", report.hat_a_ce_plus)
        zero_check("hat_a_ce_minus_zero", report.hat_a_ce_minus)
        zero_check("k_zero", report.k_norm)
        zero_check("grad_a_ce_zero", report.grad_a_ce)
        zero_check("hess_a_ce_zero", report.hess_a_ce)
        inv_p = invert_check("grad_hat_plus_invertible",
                             report.grad_hat_a_ce_plus + report.t_hat)
        inv_m = invert_check("grad_hat_minus_invertible",
                             report.grad_hat_a_ce_minus + report.t_hat)
        bulk = (report.grad_k_norm
                * (report.ric_norm + report.grad_k_norm
                   + report.cov2_k_norm)
                + report.cov3_k_norm)
        base = max(inv_p, inv_m) * bulk
        lhs = C_config * base
        checks["smallness"] = {"ok": lhs < 1.0, "value": lhs, "limit": 1.0}
    else:
        raise ValueError("unknown theorem %r" % (theorem,))

    c_star = np.inf if base == 0.0 else 1.0 / base
    satisfied = all(c["ok"] for c in checks.values())
    return TheoremVerdict(theorem=theorem, satisfied=satisfied,
                          checks=checks, smallness=lhs, c_star=c_star,
                          c_config=C_config)


def obstruction_report(chart, p, C_config=1.0, zero_tol=ZERO_TOL, h=None):
    """Evaluate every obstruction quantity and all theorem verdicts at p."""
    p = np.asarray(p, float)
    cv = curvature_jet(chart, p[None, :])
    gi = cv.ginv
    report = ObstructionReport(
        point=p,
        n=chart.dim - 1,
        a_st=eval_a_st(chart, p),
        grad_a_st=eval_grad_a_st(chart, p, h=h),
        a_ce=eval_a_ce(chart, p),
        grad_a_ce=eval_grad_a_ce(chart, p, h=h),
        hess_a_ce=eval_hess_a_ce(chart, p, h=h),
        hat_a_ce_plus=eval_hat_a_ce(chart, p, sign=1),
        hat_a_ce_minus=eval_hat_a_ce(chart, p, sign=-1),
        grad_hat_a_ce_plus=eval_grad_hat_a_ce(chart, p, sign=1, h=h),
        grad_hat_a_ce_minus=eval_grad_hat_a_ce(chart, p, sign=-1, h=h),
        t_hat=eval_t_hat(chart, p),
        k_norm=float(_g_norm(gi, cv.k)[0]),
        grad_k_norm=float(_g_norm(gi, cv.cov_k)[0]),
        ric_norm=float(_g_norm(gi, cv.ricci)[0]),
        cov2_k_norm=float(_g_norm(gi, cv.cov2_k)[0]),
        cov3_k_norm=float(_g_norm(gi, cv.cov3_k)[0]),
    )
    for theorem in THEOREMS:
        report.verdicts[theorem] = check_theorem_hypotheses(
            report, theorem, C_config=C_config, zero_tol=zero_tol)
    return report
