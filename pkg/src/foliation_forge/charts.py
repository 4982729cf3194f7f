"""Coordinate charts carrying initial data (g, k).

A chart presents the metric g_{ij} and the symmetric 2-tensor k_{ij} on a
ball around the origin of R^{n+1}, with partial derivatives up to order 4
for g and order 3 for k.  Analytic charts compute derivatives with exact
jet arithmetic; the finite-difference backend synthesizes them from point
values with central stencils.

Everything is batched: coordinate inputs have shape (N, dim).
"""

import math

import numpy as np

from .jets import (
    Jet,
    jet_einsum,
    jet_from_components,
    jet_matrix_inverse,
    jet_mul,
    jet_power,
    jet_reciprocal,
    jet_sqrt,
    jet_transpose,
    polynomial_jet,
)

METRIC_ORDER = 4
K_ORDER = 3


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != dim:
        raise ValueError("points have wrong dimension")
    return x


# ----------------------------------------------------------------------
# k fields


class ZeroK:
    def __init__(self, dim):
        self.dim = dim

    def jet(self, x, order):
        x = _as_points(x, self.dim)
        return Jet.zeros(x.shape[0], self.dim, order, (self.dim, self.dim))

    def scaled(self, factor):
        return self


class PolynomialK:
    """Symmetric 2-tensor with polynomial components.

    components: dict mapping (i, j) with i <= j to {exponent tuple: coeff}.
    """

    def __init__(self, dim, components):
        self.dim = dim
        comps = {}
        for (i, j), poly in components.items():
            key = (min(i, j), max(i, j))
            acc = comps.setdefault(key, {})
            for expo, c in poly.items():
                acc[tuple(expo)] = acc.get(tuple(expo), 0.0) + float(c)
        self.components = comps

    def jet(self, x, order):
        x = _as_points(x, self.dim)
        d = self.dim
        rows = []
        for i in range(d):
            row = []
            for j in range(d):
                poly = self.components.get((min(i, j), max(i, j)))
                if poly:
                    row.append(polynomial_jet(x, poly, order))
                else:
                    row.append(Jet.zeros(x.shape[0], d, order))
            rows.append(row)
        return jet_from_components(rows, d)

    def scaled(self, factor):
        comps = {ij: {e: c * factor for e, c in poly.items()}
                 for ij, poly in self.components.items()}
        return PolynomialK(self.dim, comps)


def constant_k(dim, diag):
    comps = {(i, i): {(0,) * dim: diag[i]} for i in range(dim)}
    return PolynomialK(dim, comps)


def diag_linear_k(dim, c, a):
    """k_ij = delta_ij c_i (1 + a_i x_i), no sum."""
    comps = {}
    for i in range(dim):
        zero = (0,) * dim
        lin = tuple(1 if m == i else 0 for m in range(dim))
        comps[(i, i)] = {zero: c[i], lin: c[i] * a[i]}
    return PolynomialK(dim, comps)


def outer_quadratic_k(dim, c):
    """k_ij = c x_i x_j."""
    comps = {}
    for i in range(dim):
        for j in range(i, dim):
            expo = [0] * dim
            expo[i] += 1
            expo[j] += 1
            comps[(i, j)] = {tuple(expo): c}
    return PolynomialK(dim, comps)


def cyclic_quadratic_k(dim, c):
    """k_ii = c_i (x_{i+1}^2 - x_{i+2}^2), indices mod dim, off-diagonal zero.

    Each diagonal entry avoids its own coordinate, so the euclidean
    divergence vanishes identically.  Needs dim >= 3.
    """
    comps = {}
    for i in range(dim):
        p = [0] * dim
        p[(i + 1) % dim] = 2
        m = [0] * dim
        m[(i + 2) % dim] = 2
        comps[(i, i)] = {tuple(p): c[i], tuple(m): -c[i]}
    return PolynomialK(dim, comps)


def linear_k(dim, entries):
    """k_ij = sum of coeff * x_m over entries (i, j, m, coeff)."""
    comps = {}
    for i, j, m, c in entries:
        expo = tuple(1 if q == m else 0 for q in range(dim))
        key = (min(i, j), max(i, j))
        poly = comps.setdefault(key, {})
        poly[expo] = poly.get(expo, 0.0) + float(c)
    return PolynomialK(dim, comps)


def shear_linear_k(dim, a, axes=(0, 1, 2)):
    """Traceless shear: k_{i j} = k_{j i} = a x_m for one (i, j, m) triple."""
    i, j, m = axes
    return linear_k(dim, [(i, j, m, a)])


# ----------------------------------------------------------------------
# charts


class AmbientChart:
    """Base class; subclasses provide metric_jet."""

    backend = "analytic"
    catalog_id = None
    flow_mode = "generic"

    def __init__(self, dim, k_field=None, validity_radius=1.0):
        self.dim = dim
        self.k_field = k_field if k_field is not None else ZeroK(dim)
        self.validity_radius = float(validity_radius)

    # subclasses override
    def metric_jet(self, x, order):
        raise NotImplementedError

    def k_jet(self, x, order):
        return self.k_field.jet(_as_points(x, self.dim), order)

    def metric(self, x):
        return self.metric_jet(x, 0).value

    def k(self, x):
        return self.k_jet(x, 0).value

    def inverse_metric(self, x):
        return np.linalg.inv(self.metric(x))

    def christoffel(self, x):
        """Gamma^k_{ij}, indexed [batch, k, i, j]."""
        g = self.metric_jet(_as_points(x, self.dim), 1)
        ginv = np.linalg.inv(g.value)
        dg = g.terms[1]  # dg[n, i, j, a] = d_a g_{ij}
        # C_{lij} = d_i g_{lj} + d_j g_{li} - d_l g_{ij}
        c = (np.einsum("nlji->nlij", dg) + np.einsum("nlij->nlij", dg)
             - np.einsum("nijl->nlij", dg))
        return 0.5 * np.einsum("nkl,nlij->nkij", ginv, c)

    def gamma_with_gradient(self, x):
        """Gamma^k_{ij} and d_a Gamma^k_{ij}, shapes (N,d,d,d) and (N,d,d,d,d)."""
        x = _as_points(x, self.dim)
        g = self.metric_jet(x, 2)
        ginv = jet_matrix_inverse(g)
        dg = g.deriv()
        t_i = jet_transpose(dg, (0, 2, 1))
        t_l = jet_transpose(dg, (2, 0, 1))
        c = t_i + dg + (-1.0) * t_l
        gamma = jet_einsum("kl,lij->kij", ginv, c) * 0.5
        return gamma.value, gamma.terms[1]

    def with_k_scale(self, factor):
        import copy
        other = copy.copy(self)
        other.k_field = self.k_field.scaled(factor)
        return other


class FlatChart(AmbientChart):
    catalog_id = "flat"
    flow_mode = "flat"

    def __init__(self, dim, k_field=None, validity_radius=50.0):
        super().__init__(dim, k_field, validity_radius)

    def metric_jet(self, x, order):
        x = _as_points(x, self.dim)
        eye = np.broadcast_to(np.eye(self.dim), (x.shape[0], self.dim, self.dim))
        return Jet.constant(eye.copy(), self.dim, order)

    def metric(self, x):
        x = _as_points(x, self.dim)
        return np.broadcast_to(np.eye(self.dim), (x.shape[0], self.dim, self.dim)).copy()

    def christoffel(self, x):
        x = _as_points(x, self.dim)
        return np.zeros((x.shape[0], self.dim, self.dim, self.dim))

    def gamma_with_gradient(self, x):
        x = _as_points(x, self.dim)
        d = self.dim
        return (np.zeros((x.shape[0], d, d, d)),
                np.zeros((x.shape[0], d, d, d, d)))


class ConformalChart(AmbientChart):
    """g = u(x) * delta for a positive conformal factor u."""

    flow_mode = "conformal"

    def __init__(self, dim, k_field=None, validity_radius=1.0):
        super().__init__(dim, k_field, validity_radius)

    def u_jet(self, x, order):
        raise NotImplementedError

    # value/derivative fast paths; subclasses override with closed forms
    def u_grad(self, x):
        j = self.u_jet(_as_points(x, self.dim), 1)
        return j.terms[0], j.terms[1]

    def u_grad_hess(self, x):
        j = self.u_jet(_as_points(x, self.dim), 2)
        return j.terms[0], j.terms[1], j.terms[2]

    def metric_jet(self, x, order):
        x = _as_points(x, self.dim)
        u = self.u_jet(x, order)
        eye = Jet.constant(
            np.broadcast_to(np.eye(self.dim), (x.shape[0], self.dim, self.dim)).copy(),
            self.dim, order)
        return jet_einsum(",IJ->IJ", u, eye)

    def metric(self, x):
        x = _as_points(x, self.dim)
        u = self.u_jet(x, 0).value
        return u[:, None, None] * np.eye(self.dim)

    def christoffel(self, x):
        # Gamma^k_{ij} = (delta_kj w_i + delta_ki w_j - delta_ij w_k)/2, w = grad(log u)
        u0, du = self.u_grad(x)
        return self._gamma_from_w(du / u0[:, None])

    def _gamma_from_w(self, w):
        eye = np.eye(self.dim)
        gamma = (np.einsum("kj,ni->nkij", eye, w)
                 + np.einsum("ki,nj->nkij", eye, w)
                 - np.einsum("ij,nk->nkij", eye, w))
        return 0.5 * gamma

    def log_grad_hess(self, x):
        """w = grad(log u) and its Hessian dw."""
        u0, du, d2u = self.u_grad_hess(x)
        w = du / u0[:, None]
        dw = (d2u * u0[:, None, None] - du[:, :, None] * du[:, None, :]) \
            / (u0 ** 2)[:, None, None]
        return w, dw

    def gamma_with_gradient(self, x):
        x = _as_points(x, self.dim)
        u0, du, d2u = self.u_grad_hess(x)
        w = du / u0[:, None]
        dw = (d2u * u0[:, None, None] - du[:, :, None] * du[:, None, :]) \
            / (u0 ** 2)[:, None, None]
        eye = np.eye(self.dim)
        dgamma = (np.einsum("kj,nic->nkijc", eye, dw)
                  + np.einsum("ki,njc->nkijc", eye, dw)
                  - np.einsum("ij,nkc->nkijc", eye, dw))
        return self._gamma_from_w(w), 0.5 * dgamma


class PolynomialConformalChart(ConformalChart):
    """g = (1 + psi(x)) * delta with polynomial psi, psi(0) = 0."""

    catalog_id = "conformal"

    def __init__(self, dim, psi, k_field=None, validity_radius=0.8):
        super().__init__(dim, k_field, validity_radius)
        self.psi = {tuple(e): float(c) for e, c in psi.items()}
        self._expo = np.array(sorted(self.psi), dtype=float).reshape(-1, dim)
        self._coef = np.array([self.psi[tuple(int(v) for v in e)]
                               for e in self._expo])
        # integer exponent tables for the value and the first two derivative
        # columns, so hot-path evaluation is power-table gathers only
        expo_i = self._expo.astype(int)
        self._expo_i = expo_i
        self._max_expo = int(expo_i.max()) if expo_i.size else 0
        self._d1 = []
        for a in range(dim):
            low = expo_i.copy()
            low[:, a] = np.maximum(low[:, a] - 1, 0)
            self._d1.append((low, self._coef * self._expo[:, a]))
        self._d2 = {}
        for a in range(dim):
            for b in range(a, dim):
                low = expo_i.copy()
                low[:, a] = np.maximum(low[:, a] - 1, 0)
                low[:, b] = np.maximum(low[:, b] - 1, 0)
                ea = self._expo[:, a]
                eb = self._expo[:, b] - (1.0 if a == b else 0.0)
                self._d2[(a, b)] = (low, self._coef * ea * eb)

    def u_jet(self, x, order):
        one = Jet.constant(np.ones(x.shape[0]), self.dim, order)
        return one + polynomial_jet(x, self.psi, order)

    def _power_table(self, x):
        pw = np.ones((self.dim, x.shape[0], self._max_expo + 1))
        for a in range(self.dim):
            for p in range(1, self._max_expo + 1):
                pw[a, :, p] = pw[a, :, p - 1] * x[:, a]
        return pw

    def _mono(self, pw, expo_i):
        out = pw[0][:, expo_i[:, 0]]
        for a in range(1, self.dim):
            out = out * pw[a][:, expo_i[:, a]]
        return out

    def u_grad(self, x):
        x = _as_points(x, self.dim)
        pw = self._power_table(x)
        u = 1.0 + self._mono(pw, self._expo_i) @ self._coef
        du = np.empty((x.shape[0], self.dim))
        for a in range(self.dim):
            low, coef = self._d1[a]
            du[:, a] = self._mono(pw, low) @ coef
        return u, du

    def u_grad_hess(self, x):
        x = _as_points(x, self.dim)
        pw = self._power_table(x)
        u = 1.0 + self._mono(pw, self._expo_i) @ self._coef
        du = np.empty((x.shape[0], self.dim))
        for a in range(self.dim):
            low, coef = self._d1[a]
            du[:, a] = self._mono(pw, low) @ coef
        d2u = np.empty((x.shape[0], self.dim, self.dim))
        for a in range(self.dim):
            for b in range(a, self.dim):
                low, coef = self._d2[(a, b)]
                d2u[:, a, b] = self._mono(pw, low) @ coef
                d2u[:, b, a] = d2u[:, a, b]
        return u, du, d2u


def quartic_bump_chart(dim, alpha, k_field=None, validity_radius=0.8):
    """psi = alpha |x|^4; grad Sc(0) = 0 with Hess Sc(0) nondegenerate."""
    psi = {}
    for i in range(dim):
        for j in range(dim):
            expo = [0] * dim
            expo[i] += 2
            expo[j] += 2
            expo = tuple(expo)
            psi[expo] = psi.get(expo, 0.0) + alpha
    chart = PolynomialConformalChart(dim, psi, k_field, validity_radius)
    chart.catalog_id = "quartic_bump"
    return chart


def _poly_shift_scale(poly, p, lam):
    """Expand q(x) = poly(p + lam x) back into monomials."""
    dim = len(p)
    out = {}
    for expo, coef in poly.items():
        acc = {(0,) * dim: float(coef)}
        for ax, e in enumerate(expo):
            if e == 0:
                continue
            nxt = {}
            for m in range(e + 1):
                w = math.comb(e, m) * lam ** m * p[ax] ** (e - m)
                if w == 0.0:
                    continue
                for ee, cc in acc.items():
                    ne = list(ee)
                    ne[ax] += m
                    ne = tuple(ne)
                    nxt[ne] = nxt.get(ne, 0.0) + cc * w
            acc = nxt
        for ee, cc in acc.items():
            out[ee] = out.get(ee, 0.0) + cc
    return {e: c for e, c in out.items() if c != 0.0}


def recenter_conformal(chart, point, validity_radius=None):
    """Exact translation of a polynomial conformal chart.

    Returns the chart in coordinates centered at `point`, dilated so the
    metric is the identity at the new origin; psi and k recompose exactly
    since both are polynomial.
    """
    if not isinstance(chart, PolynomialConformalChart):
        raise TypeError("recentering needs a polynomial conformal chart")
    p = np.asarray(point, dtype=float)
    if p.shape != (chart.dim,):
        raise ValueError("point dimension mismatch")
    rho = float(np.linalg.norm(p))
    if rho >= chart.validity_radius:
        raise ValueError("point lies outside the chart validity ball")
    base = 1.0
    for expo, coef in chart.psi.items():
        base += coef * float(np.prod(p ** np.asarray(expo)))
    if base <= 0.0:
        raise ValueError("conformal factor is not positive at the point")
    lam = base ** -0.5
    zero = (0,) * chart.dim
    psi2 = {e: lam * lam * c
            for e, c in _poly_shift_scale(chart.psi, p, lam).items()}
    # the constant collapses to zero by the choice of dilation
    psi2[zero] = psi2.get(zero, 0.0) + lam * lam - 1.0
    if abs(psi2[zero]) > 1e-13:
        raise ValueError("conformal normalization failed to close")
    del psi2[zero]
    kf = chart.k_field
    if isinstance(kf, PolynomialK):
        comps = {ij: {e: lam * lam * c
                      for e, c in _poly_shift_scale(poly, p, lam).items()}
                 for ij, poly in kf.components.items()}
        kf = PolynomialK(chart.dim, comps)
    elif not isinstance(kf, ZeroK):
        raise TypeError("recentering needs a polynomial k field")
    if validity_radius is None:
        validity_radius = (chart.validity_radius - rho) / lam
    return PolynomialConformalChart(chart.dim, psi2, kf, validity_radius)


class RoundSphereChart(ConformalChart):
    """Stereographic chart of the round sphere of radius a.

    u = (1 + |x|^2 / (4 a^2))^(-2); curvature Sc = n(n+1)/a^2.
    """

    catalog_id = "round_sphere"

    def __init__(self, dim, radius, k_field=None, validity_radius=None):
        if validity_radius is None:
            validity_radius = 2.0 * radius
        super().__init__(dim, k_field, validity_radius)
        self.radius = float(radius)

    def u_jet(self, x, order):
        coords = Jet.coordinates(x, order)
        rho2 = coords[0] * 0.0
        for c in coords:
            rho2 = rho2 + jet_mul(c, c)
        base = 1.0 + rho2 * (1.0 / (4.0 * self.radius ** 2))
        return jet_power(base, -2)

    def u_grad(self, x):
        x = _as_points(x, self.dim)
        q = 1.0 / (4.0 * self.radius ** 2)
        base = 1.0 + q * np.sum(x ** 2, axis=1)
        u = base ** -2
        du = (-4.0 * q) * base[:, None] ** -3 * x
        return u, du

    def u_grad_hess(self, x):
        x = _as_points(x, self.dim)
        q = 1.0 / (4.0 * self.radius ** 2)
        base = 1.0 + q * np.sum(x ** 2, axis=1)
        u = base ** -2
        du = (-4.0 * q) * base[:, None] ** -3 * x
        d2u = (24.0 * q * q) * base[:, None, None] ** -4 \
            * x[:, :, None] * x[:, None, :] \
            + (-4.0 * q) * base[:, None, None] ** -3 * np.eye(self.dim)
        return u, du, d2u


class SchwarzschildChart(ConformalChart):
    """Time-symmetric Schwarzschild slice, u = (1 + m/(2 rho))^4.

    The puncture sits at `puncture` (chart coordinates); the chart origin is
    the evaluation point, kept a safe distance from the puncture.
    """

    catalog_id = "schwarzschild"

    def __init__(self, dim, mass, puncture, k_field=None, validity_radius=None):
        puncture = np.asarray(puncture, dtype=float)
        if validity_radius is None:
            validity_radius = 0.45 * np.linalg.norm(puncture)
        super().__init__(dim, k_field, validity_radius)
        self.mass = float(mass)
        self.puncture = puncture

    def u_jet(self, x, order):
        coords = Jet.coordinates(x, order)
        rho2 = None
        for i, c in enumerate(coords):
            sq = jet_mul(c + (-self.puncture[i]), c + (-self.puncture[i]))
            rho2 = sq if rho2 is None else rho2 + sq
        rho = jet_sqrt(rho2)
        base = jet_reciprocal(rho) * (self.mass / 2.0) + 1.0
        return jet_power(base, 4)

    def u_grad(self, x):
        x = _as_points(x, self.dim)
        y = x - self.puncture[None, :]
        rho = np.linalg.norm(y, axis=1)
        s = 0.5 * self.mass
        f = 1.0 + s / rho
        df = (-s) * y / rho[:, None] ** 3
        return f ** 4, 4.0 * f[:, None] ** 3 * df

    def u_grad_hess(self, x):
        x = _as_points(x, self.dim)
        y = x - self.puncture[None, :]
        rho = np.linalg.norm(y, axis=1)
        s = 0.5 * self.mass
        f = 1.0 + s / rho
        df = (-s) * y / rho[:, None] ** 3
        d2f = (-s) * (np.eye(self.dim) / rho[:, None, None] ** 3
                      - 3.0 * y[:, :, None] * y[:, None, :]
                      / rho[:, None, None] ** 5)
        d2u = (12.0 * f[:, None, None] ** 2 * df[:, :, None] * df[:, None, :]
               + 4.0 * f[:, None, None] ** 3 * d2f)
        return f ** 4, 4.0 * f[:, None] ** 3 * df, d2u


class FiniteDifferenceChart(AmbientChart):
    """Derivatives synthesized from point evaluations of g and k.

    Central 5-point stencils per axis, h = h_low for orders 1-2 and h = h_high
    for orders 3-4, with one Richardson halving on the high orders.
    """

    backend = "finite-difference"

    def __init__(self, dim, g_fn, k_fn=None, validity_radius=1.0,
                 h_low=1e-3, h_high=1e-2):
        super().__init__(dim, None, validity_radius)
        self._g_fn = g_fn
        self._k_fn = k_fn
        self.h_low = h_low
        self.h_high = h_high

    @classmethod
    def from_chart(cls, chart, **kw):
        kw.setdefault("validity_radius", chart.validity_radius)
        obj = cls(chart.dim, chart.metric, chart.k, **kw)
        obj.catalog_id = chart.catalog_id
        return obj

    def metric(self, x):
        return self._g_fn(_as_points(x, self.dim))

    def k(self, x):
        x = _as_points(x, self.dim)
        if self._k_fn is None:
            return np.zeros((x.shape[0], self.dim, self.dim))
        return self._k_fn(x)

    def metric_jet(self, x, order):
        return self._fd_jet(self.metric, x, order)

    def k_jet(self, x, order):
        return self._fd_jet(self.k, x, order)

    def with_k_scale(self, factor):
        base_k = self._k_fn
        if base_k is None:
            return self
        import copy
        other = copy.copy(self)
        other._k_fn = lambda x: factor * base_k(x)
        return other

    # -- stencil machinery -------------------------------------------------

    _STENCILS = {
        0: [(0, 1.0)],
        1: [(-2, 1.0 / 12), (-1, -8.0 / 12), (1, 8.0 / 12), (2, -1.0 / 12)],
        2: [(-2, -1.0 / 12), (-1, 16.0 / 12), (0, -30.0 / 12),
            (1, 16.0 / 12), (2, -1.0 / 12)],
        3: [(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        4: [(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)],
    }

    def _multi_stencil(self, alpha, h):
        """Offsets and weights for a derivative multi-index alpha."""
        offsets = [np.zeros(self.dim)]
        weights = [1.0]
        for axis, order in enumerate(alpha):
            if order == 0:
                continue
            new_off, new_w = [], []
            for off, w in zip(offsets, weights):
                for step, coeff in self._STENCILS[order]:
                    o = off.copy()
                    o[axis] += step * h
                    new_off.append(o)
                    new_w.append(w * coeff / h ** order)
            offsets, weights = new_off, new_w
        return np.array(offsets), np.array(weights)

    def _fd_alpha(self, fn, x, alpha, h):
        offsets, weights = self._multi_stencil(alpha, h)
        n = x.shape[0]
        pts = (x[:, None, :] + offsets[None, :, :]).reshape(-1, self.dim)
        vals = np.asarray(fn(pts))
        vals = vals.reshape((n, len(weights)) + vals.shape[1:])
        return np.einsum("ns...,s->n...", vals, weights)

    def _fd_jet(self, fn, x, order):
        x = _as_points(x, self.dim)
        n = x.shape[0]
        sample = np.asarray(fn(x[:1]))
        comp_shape = sample.shape[1:]
        terms = [np.asarray(fn(x))]
        for q in range(1, order + 1):
            t = np.zeros((n,) + comp_shape + (self.dim,) * q)
            filled = np.zeros((self.dim,) * q, dtype=bool)
            import itertools as _it
            for idx in _it.product(range(self.dim), repeat=q):
                key = tuple(sorted(idx))
                if filled[key]:
                    val = t[(slice(None),) + (Ellipsis,) + key]
                else:
                    alpha = [0] * self.dim
                    for ax in key:
                        alpha[ax] += 1
                    if q <= 2:
                        val = self._fd_alpha(fn, x, alpha, self.h_low)
                    else:
                        v1 = self._fd_alpha(fn, x, alpha, self.h_high)
                        v2 = self._fd_alpha(fn, x, alpha, self.h_high / 2.0)
                        val = (4.0 * v2 - v1) / 3.0
                    t[(slice(None),) + (Ellipsis,) + key] = val
                    filled[key] = True
                if idx != key:
                    t[(slice(None),) + (Ellipsis,) + idx] = val
            terms.append(t)
        return Jet(terms, self.dim, comp_ndim=len(comp_shape))


# ----------------------------------------------------------------------
# catalog

def _build_k(dim, spec):
    if spec is None:
        return ZeroK(dim)
    if not isinstance(spec, dict):
        return spec
    kind = spec.get("kind", "zero")
    if kind == "zero":
        return ZeroK(dim)
    if kind == "constant":
        return constant_k(dim, np.asarray(spec["diag"], dtype=float))
    if kind == "diag_linear":
        return diag_linear_k(dim, np.asarray(spec["c"], dtype=float),
                             np.asarray(spec["a"], dtype=float))
    if kind == "outer_quadratic":
        return outer_quadratic_k(dim, float(spec["c"]))
    if kind == "linear":
        return linear_k(dim, spec["entries"])
    if kind == "shear":
        return shear_linear_k(dim, float(spec["a"]),
                              tuple(spec.get("axes", (0, 1, 2))))
    if kind == "poly":
        comps = {}
        for key, terms in spec["components"].items():
            i, j = (int(s) for s in key.split(","))
            comps[(i, j)] = {tuple(t["expo"]): float(t["c"]) for t in terms}
        return PolynomialK(dim, comps)
    raise KeyError("unknown k field kind: %r" % kind)


def catalog(chart_id, params=None, dim=3):
    """Construct a built-in chart by id.

    Recognized ids: flat, conformal, quartic_bump, round_sphere,
    schwarzschild, and the bundled presets cmc_bump, stcmc_factory,
    ce_tilt, tilt_bump.
    """
    params = dict(params or {})
    kspec = params.pop("k", None)
    kf = _build_k(dim, kspec)

    if chart_id == "flat":
        return FlatChart(dim, kf, params.pop("validity_radius", 50.0))
    if chart_id == "conformal":
        psi = {tuple(t["expo"]): float(t["c"]) for t in params["psi"]}
        return PolynomialConformalChart(dim, psi, kf,
                                        params.get("validity_radius", 0.8))
    if chart_id == "quartic_bump":
        return quartic_bump_chart(dim, float(params.get("alpha", 0.02)), kf,
                                  params.get("validity_radius", 0.8))
    if chart_id == "round_sphere":
        return RoundSphereChart(dim, float(params.get("radius", 1.0)), kf,
                                params.get("validity_radius"))
    if chart_id == "schwarzschild":
        puncture = params.get("puncture")
        if puncture is None:
            rho = float(params.get("rho", 4.0))
            puncture = [-rho] + [0.0] * (dim - 1)
        return SchwarzschildChart(dim, float(params.get("mass", 1.0)),
                                  puncture, kf, params.get("validity_radius"))

    # presets bundle a metric, a k field and tuned parameters
    if chart_id == "cmc_bump":
        return quartic_bump_chart(dim, float(params.get("alpha", 0.02)),
                                  ZeroK(dim), 0.8)
    if chart_id == "stcmc_factory":
        alpha = float(params.get("alpha", 0.02))
        c = np.asarray(params.get("c", [0.3, -0.2, 0.5]), dtype=float)
        a = np.asarray(params.get("a", [1.0, 0.7, -0.4]), dtype=float)
        return quartic_bump_chart(dim, alpha, diag_linear_k(dim, c, a), 0.8)
    if chart_id == "tilt_bump":
        # psi = s x_1 |x|^2: grad Sc(0) = (-20 s, 0, 0) at n = 2
        s = float(params.get("s", 0.05))
        psi = {}
        for i in range(dim):
            expo = [0] * dim
            expo[0] += 1
            expo[i] += 2
            expo = tuple(expo)
            psi[expo] = psi.get(expo, 0.0) + s
        chart = PolynomialConformalChart(dim, psi, kf, 0.8)
        chart.catalog_id = "tilt_bump"
        return chart
    if chart_id == "ce_mixed":
        # quadratic + cubic conformal factor with an off-diagonal cross
        # term, plus outer-quadratic and divergence-free linear k parts:
        # at 0 the CE covector vanishes, its gradient is -(32c/5) I, and
        # both the scalar-gradient and Ricci-contraction parts of the
        # second CE covector are nonzero
        q = float(params.get("q", 0.1))
        s = float(params.get("s", 0.05))
        w = float(params.get("w", 0.08))
        c = float(params.get("c", 0.5))
        b = float(params.get("b", 0.4))
        psi = {}
        for i in range(dim):
            e2 = [0] * dim
            e2[i] += 2
            psi[tuple(e2)] = psi.get(tuple(e2), 0.0) + q
            e3 = [0] * dim
            e3[0] += 1
            e3[i] += 2
            psi[tuple(e3)] = psi.get(tuple(e3), 0.0) + s
        cross = [0] * dim
        cross[1 % dim] += 1
        cross[2 % dim] += 1
        psi[tuple(cross)] = psi.get(tuple(cross), 0.0) + w
        kf_outer = outer_quadratic_k(dim, c)
        kf_lin = linear_k(dim, [(0, 1, 2 % dim, b)])
        merged = {}
        for part in (kf_outer.components, kf_lin.components):
            for key, poly in part.items():
                acc = merged.setdefault(key, {})
                for expo, coef in poly.items():
                    acc[expo] = acc.get(expo, 0.0) + coef
        chart = PolynomialConformalChart(dim, psi, PolynomialK(dim, merged),
                                         0.8)
        chart.catalog_id = "ce_mixed"
        return chart
    if chart_id == "ce_tilt":
        # quadratic + tilted-cubic conformal factor with a divergence-free
        # diagonal quadratic k: the CE covector vanishes at 0, its gradient
        # there is the invertible matrix (4/5) Hess(tr k), and the drift
        # covector points along the first axis, so both CE center curves
        # leave 0 at a finite slope
        q = float(params.get("q", 0.1))
        s = float(params.get("s", 0.05))
        c0 = float(params.get("c0", 0.3))
        c1 = float(params.get("c1", 0.1))
        c2 = float(params.get("c2", -0.2))
        psi = {}
        for i in range(dim):
            e2 = [0] * dim
            e2[i] += 2
            psi[tuple(e2)] = psi.get(tuple(e2), 0.0) + q
            e3 = [0] * dim
            e3[0] += 1
            e3[i] += 2
            psi[tuple(e3)] = psi.get(tuple(e3), 0.0) + s
        kf = cyclic_quadratic_k(dim, [c0, c1, c2] + [0.0] * (dim - 3))
        chart = PolynomialConformalChart(dim, psi, kf, 0.8)
        chart.catalog_id = "ce_tilt"
        return chart
    raise KeyError("unknown catalog chart id: %r" % chart_id)
