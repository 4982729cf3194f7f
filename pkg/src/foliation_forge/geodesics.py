"""Geodesic flow, parallel transport and the exponential map.

Fixed-step classical RK4 on the first-order geodesic system, optionally
augmented with the variational (Jacobi) blocks d(x,v)/dv0 and with parallel
transport of a frame.  A Richardson halving supplies both an improved
endpoint and an error estimate.
"""

import math

import numpy as np


class GeodesicResult:
    __slots__ = ("x", "v", "jacobi", "jacobi_v", "frame", "err")

    def __init__(self, x, v, jacobi=None, jacobi_v=None, frame=None, err=0.0):
        self.x = x
        self.v = v
        self.jacobi = jacobi
        self.jacobi_v = jacobi_v
        self.frame = frame
        self.err = err


class NormalFrame:
    """Geodesic center c(tau) with a parallel-transported orthonormal frame.

    frame columns are the transported basis vectors: frame[:, i] = e_i^tau.
    """

    __slots__ = ("tau", "center", "frame", "base_point", "base_frame",
                 "geodesic_tolerance")

    def __init__(self, tau, center, frame, base_point, base_frame, tol):
        self.tau = tau
        self.center = center
        self.frame = frame
        self.base_point = base_point
        self.base_frame = base_frame
        self.geodesic_tolerance = tol


class IntegrationFailure(RuntimeError):
    pass


def _rhs(chart, x, v, jac=None, jac_v=None, frame=None):
    mode = chart.flow_mode
    if mode == "flat":
        out = [v, np.zeros_like(v)]
        if jac is not None:
            out.extend([jac_v, np.zeros_like(jac_v)])
        if frame is not None:
            out.append(np.zeros_like(frame))
        return out

    if mode == "conformal":
        # Gamma(v, t) = ((w.v) t + (w.t) v - (v.t) w)/2 with w = grad(log u);
        # all dots Euclidean.
        if jac is not None:
            w, dw = chart.log_grad_hess(x)
        else:
            u0, du = chart.u_grad(x)
            w = du / u0[:, None]
        wv = np.einsum("ni,ni->n", w, v)
        vv = np.einsum("ni,ni->n", v, v)
        acc = 0.5 * vv[:, None] * w - wv[:, None] * v
        out = [v, acc]
        if jac is not None:
            m = np.einsum("ni,nic->nc", v, dw)
            mj = np.einsum("nc,ncb->nb", m, jac)
            dwj = np.einsum("nkc,ncb->nkb", dw, jac)
            dgam_term = v[:, :, None] * mj[:, None, :] - 0.5 * vv[:, None, None] * dwj
            wW = np.einsum("nk,nkb->nb", w, jac_v)
            vW = np.einsum("nk,nkb->nb", v, jac_v)
            gam_vW = (wv[:, None, None] * jac_v
                      + v[:, :, None] * wW[:, None, :]
                      - w[:, :, None] * vW[:, None, :])
            out.extend([jac_v, -dgam_term - gam_vW])
        if frame is not None:
            wU = np.einsum("nk,nkm->nm", w, frame)
            vU = np.einsum("nk,nkm->nm", v, frame)
            df = -0.5 * (wv[:, None, None] * frame
                         + v[:, :, None] * wU[:, None, :]
                         - w[:, :, None] * vU[:, None, :])
            out.append(df)
        return out

    if jac is not None:
        gamma, dgamma = chart.gamma_with_gradient(x)
    else:
        gamma = chart.christoffel(x)
        dgamma = None
    acc = -np.einsum("nkij,ni,nj->nk", gamma, v, v)
    out = [v, acc]
    if jac is not None:
        dj = jac_v
        dw = (-np.einsum("nkijc,ncb,ni,nj->nkb", dgamma, jac, v, v)
              - 2.0 * np.einsum("nkij,ni,njb->nkb", gamma, v, jac_v))
        out.extend([dj, dw])
    if frame is not None:
        df = -np.einsum("nkbc,nb,ncm->nkm", gamma, v, frame)
        out.append(df)
    return out


def _rk4(chart, x0, v0, n_steps, with_jacobi, frame0):
    n, d = x0.shape
    x = x0.copy()
    v = v0.copy()
    jac = np.zeros((n, d, d)) if with_jacobi else None
    jac_v = np.broadcast_to(np.eye(d), (n, d, d)).copy() if with_jacobi else None
    frame = frame0.copy() if frame0 is not None else None
    h = 1.0 / n_steps

    def pack(state):
        return [s for s in state if s is not None]

    for _ in range(n_steps):
        state = [x, v] + ([jac, jac_v] if with_jacobi else []) \
            + ([frame] if frame is not None else [])
        k1 = _rhs(chart, *_expand(state, with_jacobi, frame is not None))
        s2 = [a + 0.5 * h * b for a, b in zip(state, k1)]
        k2 = _rhs(chart, *_expand(s2, with_jacobi, frame is not None))
        s3 = [a + 0.5 * h * b for a, b in zip(state, k2)]
        k3 = _rhs(chart, *_expand(s3, with_jacobi, frame is not None))
        s4 = [a + h * b for a, b in zip(state, k3)]
        k4 = _rhs(chart, *_expand(s4, with_jacobi, frame is not None))
        state = [a + (h / 6.0) * (b1 + 2 * b2 + 2 * b3 + b4)
                 for a, b1, b2, b3, b4 in zip(state, k1, k2, k3, k4)]
        x, v = state[0], state[1]
        idx = 2
        if with_jacobi:
            jac, jac_v = state[2], state[3]
            idx = 4
        if frame is not None:
            frame = state[idx]
    return x, v, jac, jac_v, frame


def _expand(state, with_jacobi, with_frame):
    x, v = state[0], state[1]
    jac = jac_v = frame = None
    idx = 2
    if with_jacobi:
        jac, jac_v = state[2], state[3]
        idx = 4
    if with_frame:
        frame = state[idx]
    return (None, x, v, jac, jac_v, frame)[1:]


def integrate_geodesics(chart, x0, v0, with_jacobi=False, frame0=None,
                        n_steps=None, richardson=True):
    """Flow t in [0, 1] of the geodesic system for a batch of rays.

    x0, v0: (N, dim).  frame0: optional (N, dim, dim) of columns to transport.
    Returns a GeodesicResult; err is the Richardson endpoint estimate.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    v0 = np.atleast_2d(np.asarray(v0, dtype=float))
    if x0.shape[0] == 1 and v0.shape[0] > 1:
        x0 = np.broadcast_to(x0, v0.shape).copy()
    if n_steps is None:
        speed = float(np.max(np.linalg.norm(v0, axis=1)))
        n_steps = max(16, int(math.ceil(speed / (1e-3 * chart.validity_radius))))
        n_steps = min(n_steps, 4096)
    res1 = _rk4(chart, x0, v0, n_steps, with_jacobi, frame0)
    if not richardson:
        return GeodesicResult(res1[0], res1[1], res1[2], res1[3], res1[4], np.nan)
    res2 = _rk4(chart, x0, v0, 2 * n_steps, with_jacobi, frame0)
    out = []
    err = 0.0
    for a, b in zip(res1, res2):
        if a is None:
            out.append(None)
            continue
        out.append(b + (b - a) / 15.0)
        err = max(err, float(np.max(np.abs(b - a)) / 15.0))
    if not np.isfinite(err) or err > 1e-3 * chart.validity_radius:
        raise IntegrationFailure("geodesic integration error estimate %.3e" % err)
    return GeodesicResult(out[0], out[1], out[2], out[3], out[4], err)


def exp_map(chart, p, v, **kw):
    """exp_p(v) for a batch of tangent vectors at a common point p."""
    v = np.atleast_2d(np.asarray(v, dtype=float))
    p = np.asarray(p, dtype=float)
    x0 = np.broadcast_to(p, v.shape).copy()
    return integrate_geodesics(chart, x0, v, **kw)


def geodesic_flow(chart, x0, v, t, **kw):
    """Point and transported velocity at parameter t along the geodesic."""
    res = integrate_geodesics(chart, np.atleast_2d(x0),
                              t * np.atleast_2d(v), **kw)
    return res.x, res.v / t if t != 0 else np.atleast_2d(v)


def orthonormal_basis(chart, p):
    """Columns of a g(p)-orthonormal frame aligned with the chart axes."""
    g0 = chart.metric(np.atleast_2d(p))[0]
    ell = np.linalg.cholesky(g0)
    return np.linalg.inv(ell).T


def normal_frame(chart, tau, base_point=None):
    """Center c(tau) = exp_p(tau^i e_i) with the parallel frame e_i^tau."""
    d = chart.dim
    tau = np.asarray(tau, dtype=float)
    p = np.zeros(d) if base_point is None else np.asarray(base_point, dtype=float)
    basis = orthonormal_basis(chart, p)
    if np.allclose(tau, 0.0):
        return NormalFrame(tau, p.copy(), basis, p, basis, 0.0)
    if np.linalg.norm(tau) >= chart.validity_radius:
        raise IntegrationFailure("tau outside chart validity radius")
    v0 = (basis @ tau)[None, :]
    res = integrate_geodesics(chart, p[None, :], v0, frame0=basis[None, :, :])
    return NormalFrame(tau, res.x[0], res.frame[0], p, basis, res.err)


def exp_inverse(chart, p, targets, tol=None, max_iter=30):
    """Solve exp_p(v) = y for a batch of targets by Newton iteration."""
    p = np.asarray(p, dtype=float)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if tol is None:
        tol = 1e-12 * chart.validity_radius
    v = targets - p[None, :]
    for _ in range(max_iter):
        res = exp_map(chart, p, v, with_jacobi=True, richardson=False)
        gap = targets - res.x
        if float(np.max(np.abs(gap))) < tol:
            break
        step = np.linalg.solve(res.jacobi, gap[:, :, None])[:, :, 0]
        v = v + step
    else:
        res = exp_map(chart, p, v, with_jacobi=True, richardson=False)
        gap = targets - res.x
        if float(np.max(np.abs(gap))) > 1e3 * tol:
            raise IntegrationFailure("exp inverse did not converge")
    return v


def geodesic_distance(chart, a, b):
    """Length of the connecting geodesic (chart-local, radially convex)."""
    a = np.asarray(a, dtype=float)
    v = exp_inverse(chart, a, np.atleast_2d(b))
    g0 = chart.metric(a[None, :])[0]
    return float(np.sqrt(np.einsum("ni,ij,nj->n", v, g0, v))[0])
