"""Embedded perturbed geodesic spheres and their extrinsic geometry.

A leaf is the image of x -> exp_{c(tau)}(r x (1 + f(x))) over a sphere grid,
with f the graph offset (r^2 * phi in the theorem normalization, phi itself
in the raw one).  Tangential derivatives of the position field are spectral
in the sphere coordinates; curvature quantities follow pointwise from the
ambient metric, Christoffel symbols and k at the nodes.

The same geometry can be built in the blown-up picture (g_{tau,r} on B_2,
where the leaf is the coordinate graph x(1 + f)); residuals of that unit
leaf match the ambient ones node by node, which is the consistency check
between the two presentations.
"""

import numpy as np

from .curvature import curvature_jet
from .geodesics import (exp_inverse, geodesic_distance, integrate_geodesics,
                        normal_frame, orthonormal_basis)
from .rescaled import RescaledData
from .spheregrid import SphereField, SphereGrid

# embeddedness threshold on the C^1 size of the graph offset
EMBED_DELTA0 = 0.5

VARIANTS = ("STCMC", "CE+", "CE-")


class GeometryError(RuntimeError):
    """Leaf construction or measurement is geometrically invalid."""


class RecenteringError(GeometryError):
    """Leaf is not a radial graph about the requested point."""


def _canon_variant(variant):
    v = str(variant).replace("−", "-").strip()
    if v not in VARIANTS:
        raise ValueError("unknown residual variant %r" % (variant,))
    return v


def _derivative_tables(grid):
    if grid.n == 1:
        first = (grid.basis_dth,)
        second = ((grid.basis_dthth,),)
    else:
        first = (grid.basis_dth, grid.basis_dlam)
        second = ((grid.basis_dthth, grid.basis_dthlam),
                  (grid.basis_dthlam, grid.basis_dlamlam))
    return first, second


_DIFF_GRIDS = {}


def _differentiation_grid(grid):
    # the position field carries degree L_max + 1 content (the degree-one
    # embedding times a band-limited offset), so its parameter derivatives
    # are taken over a wider band on the same quadrature nodes
    key = (grid.n, grid.L_max, grid.resolution)
    ext = _DIFF_GRIDS.get(key)
    if ext is None:
        ext = SphereGrid(grid.n, grid.L_max + 2, resolution=grid.resolution)
        _DIFF_GRIDS[key] = ext
    return ext


def _offset_values(r, phi, normalization):
    if normalization == "theorem":
        return r * r * phi.values
    if normalization == "raw":
        return phi.values.copy()
    raise ValueError("normalization must be 'theorem' or 'raw'")


def _check_offset_c1(grid, f):
    # round-sphere C^1 norm of the offset against the embeddedness threshold
    coeffs = grid.analyze(f)
    dth = coeffs @ grid.basis_dth
    if grid.n == 1:
        grad2 = dth ** 2
    else:
        dlm = coeffs @ grid.basis_dlam
        grad2 = dth ** 2 + (dlm / np.sin(grid.theta)) ** 2
    c1 = float(np.max(np.abs(f)) + np.sqrt(np.max(grad2)))
    if not c1 < EMBED_DELTA0:
        raise GeometryError(
            "offset C1 norm %.3f exceeds embeddedness threshold %.3f"
            % (c1, EMBED_DELTA0))


class LeafEmbedding:
    """Immutable snapshot of an embedded leaf and its pointwise geometry.

    node_positions, d_positions (N, na, d) and dd_positions (N, na, na, d)
    hold the position field and its spectral parameter derivatives; the
    second fundamental form uses B_ab = g(grad_a nu, d_b X), which on a flat
    round sphere with outward nu gives B = (1/r) * induced metric.
    """

    def __init__(self, source, grid, r, tau, phi, normalization,
                 node_positions, radial_velocity, frame=None,
                 transported_frame=None):
        r = float(r)
        if not r > 0.0:
            raise ValueError("leaf radius must be positive")
        self.chart = source
        self.grid = grid
        self.r = r
        self.tau = np.asarray(tau, dtype=float).copy()
        self.phi = phi
        self.normalization = normalization
        self.frame = frame
        self.transported_frame = transported_frame
        self.node_positions = node_positions
        self.radial_velocity = radial_velocity

        ext = _differentiation_grid(grid)
        first, second = _derivative_tables(ext)
        na = len(first)
        npts, d = node_positions.shape
        coeffs = np.array([ext.analyze(node_positions[:, mu])
                           for mu in range(d)])
        T = np.empty((npts, na, d))
        for a in range(na):
            T[:, a, :] = (coeffs @ first[a]).T
        S = np.empty((npts, na, na, d))
        for a in range(na):
            for b in range(a + 1):
                vals = (coeffs @ second[a][b]).T
                S[:, a, b, :] = vals
                S[:, b, a, :] = vals
        self.d_positions = T
        self.dd_positions = S

        g = source.metric(node_positions)
        self.ambient_metric = g
        self.ambient_inverse = np.linalg.inv(g)
        self.ambient_k = source.k(node_positions)
        gamma = source.christoffel(node_positions)

        h = np.einsum("nad,nde,nbe->nab", T, g, T)
        det = np.linalg.det(h)
        if np.min(det) <= 0.0:
            raise GeometryError("degenerate induced metric on the leaf")
        self.induced_metric = h
        self.induced_inverse = np.linalg.inv(h)
        self.det_induced = det

        if na == 1:
            w = np.stack([T[:, 0, 1], -T[:, 0, 0]], axis=1)
        else:
            w = np.cross(T[:, 0, :], T[:, 1, :])
        nu = np.einsum("nij,nj->ni", self.ambient_inverse, w)
        norms = np.sqrt(np.einsum("ni,nij,nj->n", nu, g, nu))
        if np.min(norms) <= 0.0:
            raise GeometryError("vanishing normal direction")
        nu = nu / norms[:, None]
        dots = np.einsum("ni,nij,nj->n", nu, g, radial_velocity)
        scale = np.sqrt(np.einsum("ni,nij,nj->n", radial_velocity, g,
                                  radial_velocity))
        if np.min(np.abs(dots)) <= 1e-12 * max(1.0, float(np.max(scale))):
            raise GeometryError("normal orientation is ambiguous")
        nu = nu * np.sign(dots)[:, None]
        self.normal = nu
        self.conormal = np.einsum("nij,nj->ni", g, nu)

        curv = S + np.einsum("nmrs,nar,nbs->nabm", gamma, T, T)
        self.second_fundamental = -np.einsum("nm,nabm->nab",
                                             self.conormal, curv)


def embed_leaf(chart, r, tau, phi, normalization="theorem",
               frame_rotation=None):
    """Embed the graph leaf of phi at radius r around the center c(tau).

    frame_rotation composes the parameterization with a rigid rotation of
    S^n (the node labeled x is sent along the direction frame_rotation @ x);
    the transported frame itself stays unrotated.
    """
    r = float(r)
    if not r > 0.0:
        raise ValueError("leaf radius must be positive")
    grid = phi.grid
    f = _offset_values(r, phi, normalization)
    _check_offset_c1(grid, f)
    if r * (1.0 + float(np.max(f))) >= chart.validity_radius:
        raise GeometryError("leaf radius exceeds chart validity")
    nf = normal_frame(chart, tau)
    directions = grid.nodes if frame_rotation is None else \
        grid.nodes @ np.asarray(frame_rotation, dtype=float).T
    v0 = (r * (1.0 + f))[:, None] * (directions @ nf.frame.T)
    x0 = np.broadcast_to(nf.center, v0.shape).copy()
    frame0 = np.broadcast_to(nf.frame, (v0.shape[0],) + nf.frame.shape).copy()
    res = integrate_geodesics(chart, x0, v0, frame0=frame0)
    return LeafEmbedding(chart, grid, r, tau, phi, normalization,
                         res.x, res.v, frame=nf,
                         transported_frame=res.frame)


class _RescaledGeometry:
    """Pointwise metric, k and Christoffels of the blown-up data on B_2.

    The metric and k come from the geodesic pullback; the Christoffel
    symbols follow by Richardson-extrapolated five-point differencing of
    the pulled-back metric, batched into a single geodesic integration.
    """

    def __init__(self, chart, tau, r, fd_step=0.04):
        self.data = RescaledData(chart, tau, r)
        self.dim = chart.dim
        self.fd_step = float(fd_step)

    def metric(self, x):
        return self.data.metric(x)

    def k(self, x):
        return self.data.k(x)

    def christoffel(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        npts, d = x.shape
        h = self.fd_step
        shifts = np.array([-2.0, -1.0, -0.5, 0.5, 1.0, 2.0]) * h
        batch = []
        for c in range(d):
            e = np.zeros(d)
            e[c] = 1.0
            for s in shifts:
                batch.append(x + s * e)
        g_all = self.data.metric(np.concatenate(batch, axis=0))
        g_all = g_all.reshape(d, shifts.size, npts, d, d)
        dg = np.empty((npts, d, d, d))
        for c in range(d):
            gm2, gm1, gmh, gph, gp1, gp2 = g_all[c]
            d1 = (gm2 - 8.0 * gm1 + 8.0 * gp1 - gp2) / (12.0 * h)
            d2 = (gm1 - 8.0 * gmh + 8.0 * gph - gp1) / (6.0 * h)
            dg[..., c] = (16.0 * d2 - d1) / 15.0
        ginv = np.linalg.inv(self.data.metric(x))
        comb = (np.transpose(dg, (0, 1, 3, 2)) + dg
                - np.transpose(dg, (0, 3, 1, 2)))
        return 0.5 * np.einsum("nkl,nlij->nkij", ginv, comb)


def rescaled_leaf(chart, r, tau, phi, normalization="theorem", fd_step=0.04):
    """Unit leaf of the graph offset in the blown-up data g_{tau,r}.

    The returned leaf has radius parameter 1; residual(leaf, variant) on it
    reproduces the ambient residual of embed_leaf(chart, r, tau, phi).
    """
    r = float(r)
    if not r > 0.0:
        raise ValueError("leaf radius must be positive")
    grid = phi.grid
    f = _offset_values(r, phi, normalization)
    _check_offset_c1(grid, f)
    if float(np.max(1.0 + f)) + 2.0 * fd_step >= 2.0:
        raise GeometryError("graph leaves the rescaled domain B_2")
    src = _RescaledGeometry(chart, tau, r, fd_step)
    pos = grid.nodes * (1.0 + f)[:, None]
    return LeafEmbedding(src, grid, 1.0, tau, SphereField(grid, values=f),
                         "raw", pos, pos.copy())


def mean_curvature(leaf):
    """Unrescaled mean curvature H_g per node (rescaled value is r * H_g)."""
    vals = np.einsum("nab,nab->n", leaf.induced_inverse,
                     leaf.second_fundamental)
    return SphereField(leaf.grid, values=vals)


def p_trace(leaf):
    """P_g = tr_g k - k(nu, nu) per node (rescaled value is r * P_g)."""
    k = leaf.ambient_k
    tr = np.einsum("nij,nij->n", leaf.ambient_inverse, k)
    knn = np.einsum("ni,nij,nj->n", leaf.normal, k, leaf.normal)
    return SphereField(leaf.grid, values=tr - knn)


def residual(leaf, variant):
    """Leaf equation residual: STCMC r^2(H^2-P^2)-n^2, CE+- r(H+-P)-n."""
    v = _canon_variant(variant)
    n = leaf.grid.n
    r = leaf.r
    h = mean_curvature(leaf).values
    p = p_trace(leaf).values
    if v == "STCMC":
        vals = r * r * (h * h - p * p) - float(n * n)
    elif v == "CE+":
        vals = r * (h + p) - float(n)
    else:
        vals = r * (h - p) - float(n)
    return SphereField(leaf.grid, values=vals)


def lapse(dtau_dr, leaf):
    """Foliation lapse alpha = 1 + (dtau^k/dr) <e_k, nu> and its minimum."""
    if leaf.transported_frame is None:
        raise GeometryError("lapse needs a leaf with a transported frame")
    dtau = np.asarray(dtau_dr, dtype=float)
    inner = np.einsum("nik,nij,nj->nk", leaf.transported_frame,
                      leaf.ambient_metric, leaf.normal)
    alpha = 1.0 + inner @ dtau
    return SphereField(leaf.grid, values=alpha), float(np.min(alpha))


def recenter_leaf(leaf, base_point=None):
    """Radial-graph radius function of the leaf about a fixed point.

    Returns the SphereField phibar with exp_p(y * phibar(y)) on the leaf,
    y running over unit directions in the orthonormal frame at p.
    """
    if leaf.frame is None:
        raise GeometryError("recentering needs an ambient leaf")
    chart = leaf.chart
    p = leaf.frame.base_point if base_point is None else \
        np.asarray(base_point, dtype=float)
    psi = exp_inverse(chart, p, leaf.node_positions)
    g0 = chart.metric(p[None, :])[0]
    norms = np.sqrt(np.einsum("ni,ij,nj->n", psi, g0, psi))
    if float(np.min(norms)) <= 1e-10 * leaf.r:
        raise RecenteringError("a node maps to the recentering point")
    e0 = orthonormal_basis(chart, p)
    y = np.linalg.solve(e0, psi.T).T / norms[:, None]
    y = y / np.linalg.norm(y, axis=1)[:, None]
    if float(np.min(np.einsum("ni,ni->n", y, leaf.grid.nodes))) <= 0.0:
        raise RecenteringError("induced direction map is not monotone")
    basis = leaf.grid.basis_at(y)
    sw = np.sqrt(leaf.grid.weights)
    coeffs, _, _, _ = np.linalg.lstsq((basis * sw).T, sw * norms, rcond=None)
    return SphereField(leaf.grid, coeffs=coeffs)


def _max_pairwise_euclid(x):
    best = -1.0
    pair = (0, 0)
    n = x.shape[0]
    step = 256
    for i0 in range(0, n, step):
        blk = x[i0:i0 + step]
        d2 = np.sum((blk[:, None, :] - x[None, :, :]) ** 2, axis=2)
        j = int(np.argmax(d2))
        bi, bj = divmod(j, n)
        if d2[bi, bj] > best:
            best = d2[bi, bj]
            pair = (i0 + bi, bj)
    return float(np.sqrt(best)), pair


def _inverse_iteration_smallest(a, m, tol=1e-10, max_iter=400):
    # smallest eigenvalue of the symmetric pencil (a, m) by shifted inverse
    # iteration, started below the spectrum via a Gershgorin bound and
    # re-shifted adaptively; None signals non-convergence
    try:
        ell = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        return None
    elli = np.linalg.inv(ell)
    at = elli @ a @ elli.T
    at = 0.5 * (at + at.T)
    diag = np.diag(at)
    radius = np.sum(np.abs(at), axis=1) - np.abs(diag)
    sigma = float(np.min(diag - radius)) - 1.0
    nb = at.shape[0]
    x = np.ones(nb)
    x[1::2] += 0.25
    x /= np.linalg.norm(x)
    eye = np.eye(nb)
    mu_old = None
    for it in range(max_iter):
        try:
            z = np.linalg.solve(at - sigma * eye, x)
        except np.linalg.LinAlgError:
            sigma -= 0.1 * (1.0 + abs(sigma))
            continue
        x = z / np.linalg.norm(z)
        mu = float(x @ at @ x)
        if mu_old is not None and abs(mu - mu_old) <= tol * max(1.0, abs(mu)):
            if np.linalg.norm(at @ x - mu * x) <= 1e-7 * (1.0 + abs(mu)):
                return mu
        mu_old = mu
        if it % 20 == 19:
            sigma = mu - max(0.5, 0.02 * abs(mu))
    return None


def _stability_lambda1(leaf):
    grid = leaf.grid
    first, _ = _derivative_tables(grid)
    na = len(first)
    sref = np.sin(grid.theta) if grid.n == 2 else 1.0
    w = grid.weights * np.sqrt(leaf.det_induced) / sref
    cur = curvature_jet(leaf.chart, leaf.node_positions)
    ric_nn = np.einsum("ni,nij,nj->n", leaf.normal, cur.ricci, leaf.normal)
    b2 = np.einsum("nab,ncd,nac,nbd->n", leaf.second_fundamental,
                   leaf.second_fundamental, leaf.induced_inverse,
                   leaf.induced_inverse)
    pot = b2 + ric_nn
    nb = grid.basis.shape[0]
    a = np.zeros((nb, nb))
    for i in range(na):
        for j in range(na):
            a += (first[i] * (w * leaf.induced_inverse[:, i, j])) @ first[j].T
    a -= (grid.basis * (w * pot)) @ grid.basis.T
    m = (grid.basis * w) @ grid.basis.T
    return _inverse_iteration_smallest(0.5 * (a + a.T), 0.5 * (m + m.T))


def leaf_diagnostics(leaf, exact_diameter=False, with_lambda1=True):
    """Extrinsic diameter, sup |B|, H bounds and the stability eigenvalue.

    diam_mode records whether the diameter is the metric-corrected chart
    estimate or the geodesic-shooting value for the extremal node pair.
    jacobi_lambda1 is None with lambda1_available False when the eigenvalue
    iteration does not converge or the leaf lacks ambient curvature data.
    """
    dmax, pair = _max_pairwise_euclid(leaf.node_positions)
    eigs = np.linalg.eigvalsh(leaf.ambient_metric)
    lo = float(np.sqrt(np.min(eigs[:, 0])))
    hi = float(np.sqrt(np.max(eigs[:, -1])))
    record = {
        "diam_lower": dmax * lo,
        "diam_upper": dmax * hi,
    }
    if exact_diameter:
        record["diam"] = geodesic_distance(
            leaf.chart, leaf.node_positions[pair[0]],
            leaf.node_positions[pair[1]])
        record["diam_mode"] = "geodesic"
    else:
        record["diam"] = record["diam_upper"]
        record["diam_mode"] = "chart"

    b2 = np.einsum("nab,ncd,nac,nbd->n", leaf.second_fundamental,
                   leaf.second_fundamental, leaf.induced_inverse,
                   leaf.induced_inverse)
    record["sup_b"] = float(np.sqrt(np.max(np.clip(b2, 0.0, None))))
    hvals = mean_curvature(leaf).values
    record["h_min"] = float(np.min(hvals))
    record["h_max"] = float(np.max(hvals))
    record["bending"] = record["sup_b"] * record["diam"]

    lam1 = None
    if with_lambda1 and leaf.frame is not None:
        lam1 = _stability_lambda1(leaf)
    record["jacobi_lambda1"] = lam1
    record["lambda1_available"] = lam1 is not None
    return record
