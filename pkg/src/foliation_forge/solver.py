"""Newton continuation for near-point leaves of prescribed-curvature type.

The unknown is a center offset tau paired with a graph profile phi that
carries no degree-1 harmonic content.  Expanding the leaf residual in the
harmonic basis splits the discrete equation into a degree-1 block, driven
by tau at a high order in the leaf radius, and a complementary block
driven by phi at order r^2 through the operator -Laplacian - n.  The
Newton matrix is assembled from those two blocks, equilibrated column by
column, and solved in least squares sense, so a tau response buried below
the evaluation noise freezes the center instead of injecting noise-sized
steps.
"""

import numpy as np

from .curvature import curvature_jet
from .geodesics import orthonormal_basis
from .obstructions import (eval_a_ce, eval_a_st, eval_grad_a_ce,
                           eval_grad_a_st, eval_hat_a_ce, frame_covector,
                           frame_matrix, obstruction_report)
from .spheregrid import (SphereField, default_grid, kernel_moments,
                         project_kperp, solve_L)
from .surfaces import (GeometryError, _canon_variant, _derivative_tables,
                       _offset_values, embed_leaf, lapse, leaf_diagnostics,
                       p_trace, residual)

NEWTON_TOL = 1e-9
KERNEL_TOL = 1e-10
DEFAULT_LMAX = 8
TAU_FD_FRACTION = 0.02
COEFF_FD_STEP = 1e-5
# smallest tau column norm the linear solve may trust; below it the
# degree-1 response is indistinguishable from quadrature noise
TAU_COLUMN_FLOOR = 3e-7
KERNEL_COND_LIMIT = 1e8
SCHEDULE_RATIO = 0.8
SCHEDULE_TOP = 0.1
SCHEDULE_BOTTOM = 1e-3
NEVILLE_GUARD = 1e-2
PROBE_MATCH_RTOL = 1e-3
# quadrature roundoff is amplified by the 1/r^s moment rescaling, about
# eps / r_min^3 ~ 4e-7 at the default radii, so the probe cannot resolve
# covectors below this level
PROBE_MATCH_ATOL = 1e-6


class SolverError(RuntimeError):
    pass


class KernelObstructionError(SolverError):
    """The degree-1 block responds to the center offset but is singular."""


class NonConvergenceError(SolverError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class FactoryError(SolverError):
    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = [np.asarray(p, float) for p in (path or [])]


def _grid_for(chart, grid):
    if grid is not None:
        return grid
    return default_grid(chart.dim - 1, DEFAULT_LMAX)


def _lead_coefficient(variant, n):
    # leading factor of the phi block, from d(r H)^2 = 2n L versus d(r H) = L
    return 2.0 * n if variant == "STCMC" else 1.0


def _scaling_power(variant):
    return 3 if variant == "STCMC" else 2


def _ce_sign(variant):
    return 1.0 if variant == "CE+" else -1.0


def _phi_from(grid, cperp, perp_rows):
    coef = np.zeros(grid.basis.shape[0])
    coef[perp_rows] = cperp
    return SphereField(grid, coeffs=coef)


def _carry_phi(grid, phi):
    """Re-express a profile on the working grid, dropping degree-1 rows.

    Coefficient vectors are grouped by ascending degree with a layout that
    does not depend on the band limit, so a plain truncation or zero pad
    moves profiles between grids of the same dimension.
    """
    nb = grid.basis.shape[0]
    if isinstance(phi, SphereField):
        src = phi.coeffs
    else:
        src = np.asarray(phi, float)
    coef = np.zeros(nb)
    m = min(src.size, nb)
    coef[:m] = src[:m]
    coef[grid.degrees == 1] = 0.0
    return coef


def _residual_projection(chart, grid, r, variant, tau, phi):
    leaf = embed_leaf(chart, r, tau, phi)
    res = residual(leaf, variant)
    F = grid.analyze(res.values)
    sup = float(np.max(np.abs(res.values)))
    return F, sup, res, leaf


def initial_phi0(chart, r, variant, grid=None):
    """Leading graph profile from the order r^2 balance of the residual.

    The residual of the centered round start divided by its leading
    coefficient is the right hand side that -Laplacian - n must absorb;
    the degree-1 content (which belongs to the center, not the graph) is
    projected out before solving.
    """
    variant = _canon_variant(variant)
    grid = _grid_for(chart, grid)
    d = chart.dim
    zero = SphereField(grid, values=np.zeros(grid.n_nodes))
    leaf = embed_leaf(chart, r, np.zeros(d), zero)
    res = residual(leaf, variant)
    lead = _lead_coefficient(variant, grid.n)
    rhs = SphereField(grid, values=-res.values / (lead * r * r))
    return solve_L(project_kperp(rhs))


class LeafState:
    """Converged leaf: center offset, graph profile and residual data."""

    __slots__ = ("variant", "r", "tau", "phi", "residual_sup",
                 "residual_kernel", "newton_iters", "diagnostics",
                 "converged", "tau_identifiable", "trace", "embedding")

    def __init__(self, variant, r, tau, phi, residual_sup, residual_kernel,
                 newton_iters, diagnostics=None, converged=True,
                 tau_identifiable=False, trace=None, embedding=None):
        self.variant = variant
        self.r = float(r)
        self.tau = np.asarray(tau, float).copy()
        self.phi = phi
        self.residual_sup = float(residual_sup)
        self.residual_kernel = float(residual_kernel)
        self.newton_iters = int(newton_iters)
        self.diagnostics = diagnostics
        self.converged = bool(converged)
        self.tau_identifiable = bool(tau_identifiable)
        self.trace = list(trace) if trace is not None else []
        self.embedding = embedding

    def as_dict(self):
        out = {
            "variant": self.variant,
            "r": self.r,
            "tau": [float(t) for t in self.tau],
            "phi_sup": float(np.max(np.abs(self.phi.values))),
            "residual_sup": self.residual_sup,
            "residual_kernel": self.residual_kernel,
            "newton_iters": self.newton_iters,
            "converged": self.converged,
            "tau_identifiable": self.tau_identifiable,
        }
        if self.diagnostics is not None:
            clean = {}
            for key, val in self.diagnostics.items():
                if val is None or isinstance(val, (bool, str)):
                    clean[key] = val
                else:
                    clean[key] = float(val)
            out["diagnostics"] = clean
        return out


def newton_matrix(chart, r, variant, tau, phi, grid, mode="shortcut"):
    """Assemble the Newton matrix over [tau; perp coefficients].

    The tau columns always come from central differences of re-embedded
    leaves.  mode "shortcut" fills the profile block with its diagonal
    leading form, mode "fd" differences every coefficient.  Returns
    (matrix, tau_active) where tau_active reports whether the tau columns
    carry usable signal.
    """
    variant = _canon_variant(variant)
    d = chart.dim
    nb = grid.basis.shape[0]
    perp = np.flatnonzero(grid.degrees != 1)
    ell1 = np.flatnonzero(grid.degrees == 1)
    J = np.zeros((nb, d + perp.size))

    h = TAU_FD_FRACTION * min(chart.validity_radius, 1.0)
    for a in range(d):
        e = np.zeros(d)
        e[a] = h
        Fp = _residual_projection(chart, grid, r, variant, tau + e, phi)[0]
        Fm = _residual_projection(chart, grid, r, variant, tau - e, phi)[0]
        J[:, a] = (Fp - Fm) / (2.0 * h)

    if mode == "shortcut":
        deg = grid.degrees[perp].astype(float)
        lam = deg * (deg + grid.n - 1.0) - grid.n
        lead = _lead_coefficient(variant, grid.n)
        J[perp, d + np.arange(perp.size)] = lead * r * r * lam
    elif mode == "fd":
        coef = phi.coeffs
        for j, row in enumerate(perp):
            cp = coef.copy()
            cm = coef.copy()
            cp[row] += COEFF_FD_STEP
            cm[row] -= COEFF_FD_STEP
            Fp = _residual_projection(chart, grid, r, variant, tau,
                                      SphereField(grid, coeffs=cp))[0]
            Fm = _residual_projection(chart, grid, r, variant, tau,
                                      SphereField(grid, coeffs=cm))[0]
            J[:, d + j] = (Fp - Fm) / (2.0 * COEFF_FD_STEP)
    else:
        raise ValueError("unknown jacobian mode %r" % (mode,))

    tau_cols = np.linalg.norm(J[:, :d], axis=0)
    tau_active = bool(np.max(tau_cols) > TAU_COLUMN_FLOOR)
    if tau_active:
        block = J[np.ix_(ell1, np.arange(d))]
        sv = np.linalg.svd(block, compute_uv=False)
        if sv[0] <= 0.0 or sv[-1] < sv[0] / KERNEL_COND_LIMIT:
            raise KernelObstructionError(
                "degree-1 response to the center offset is singular")
    return J, tau_active


def _solve_step(J, F, d, tau_active):
    Ja = J if tau_active else J[:, d:]
    norms = np.linalg.norm(Ja, axis=0)
    norms[norms == 0.0] = 1.0
    sol = np.linalg.lstsq(Ja / norms, -F, rcond=None)[0] / norms
    if tau_active:
        return sol
    out = np.zeros(J.shape[1])
    out[d:] = sol
    return out


def solve_leaf(chart, r, variant, init=None, grid=None, tol=NEWTON_TOL,
               max_iter=12, jacobian="fd", with_diagnostics=True):
    """Solve one leaf equation at radius r.

    init is None for a cold start (tau = 0 and the leading profile), a
    LeafState, or a (tau, phi) pair.  The Newton matrix is assembled once
    at the entry state and reused, which keeps the contraction fast near
    the solution without re-differencing every step.  jacobian selects the
    assembly mode of newton_matrix; "shortcut" is the cheap choice for
    continuation runs.
    """
    variant = _canon_variant(variant)
    grid = _grid_for(chart, grid)
    d = chart.dim
    perp = np.flatnonzero(grid.degrees != 1)

    if init is None:
        tau = np.zeros(d)
        coef = _carry_phi(grid, initial_phi0(chart, r, variant, grid=grid))
    elif isinstance(init, LeafState):
        tau = init.tau.copy()
        coef = _carry_phi(grid, init.phi)
    else:
        tau0, phi0 = init
        tau = np.asarray(tau0, float).copy()
        coef = _carry_phi(grid, phi0)
    cperp = coef[perp]

    J = None
    tau_active = False
    stepped = False
    trace = []
    for it in range(1, max_iter + 1):
        phi = _phi_from(grid, cperp, perp)
        try:
            F, sup, res, leaf = _residual_projection(chart, grid, r, variant,
                                                     tau, phi)
        except GeometryError as exc:
            raise NonConvergenceError(
                "iterate left the admissible graph regime: %s" % exc,
                trace) from exc
        trace.append(sup)
        kern = float(np.max(np.abs(kernel_moments(res))))
        if sup <= tol and kern <= KERNEL_TOL:
            diag = leaf_diagnostics(leaf) if with_diagnostics else None
            return LeafState(
                variant, r, tau, phi,
                residual_sup=sup,
                residual_kernel=kern,
                newton_iters=it,
                diagnostics=diag,
                converged=True,
                tau_identifiable=tau_active and stepped,
                trace=trace,
                embedding=leaf)
        if it == max_iter:
            break
        if len(trace) >= 3 and trace[-1] > 10.0 * trace[0]:
            raise NonConvergenceError("residual diverging", trace)
        if J is None:
            J, tau_active = newton_matrix(chart, r, variant, tau, phi, grid,
                                          mode=jacobian)
        if sup <= tol and not tau_active:
            # the profile equations are solved and the center cannot be
            # moved by the data at this radius; stalling here is honest
            raise NonConvergenceError(
                "kernel moments stay at %.2e with an unresolvable center"
                % kern, trace)
        step = _solve_step(J, F, d, tau_active)
        tau = tau + step[:d]
        cperp = cperp + step[d:]
        stepped = True
    raise NonConvergenceError(
        "no convergence in %d iterations" % max_iter, trace)


def default_schedule(chart, ratio=SCHEDULE_RATIO, top=SCHEDULE_TOP,
                     bottom=SCHEDULE_BOTTOM):
    """Decreasing geometric radius schedule inside the chart validity."""
    v = chart.validity_radius
    radii = []
    r = top * v
    floor = bottom * v * (1.0 - 1e-12)
    while r >= floor:
        radii.append(r)
        r *= ratio
    return np.array(radii)


class FoliationRun:
    """Result of a continuation over a decreasing radius schedule."""

    __slots__ = ("variant", "radii", "leaves", "dtau_dr_at_0", "alpha_min",
                 "regularity_sup", "verdict", "failure")

    def __init__(self, variant, radii, leaves, dtau_dr_at_0, alpha_min,
                 regularity_sup, verdict, failure=None):
        self.variant = variant
        self.radii = np.asarray(radii, float)
        self.leaves = list(leaves)
        self.dtau_dr_at_0 = dtau_dr_at_0
        self.alpha_min = alpha_min
        self.regularity_sup = regularity_sup
        self.verdict = verdict
        self.failure = failure

    def as_dict(self):
        return {
            "variant": self.variant,
            "verdict": self.verdict,
            "radii": [float(r) for r in self.radii],
            "dtau_dr_at_0": (None if self.dtau_dr_at_0 is None
                             else [float(t) for t in self.dtau_dr_at_0]),
            "alpha_min": (None if self.alpha_min is None
                          else float(self.alpha_min)),
            "regularity_sup": (None if self.regularity_sup is None
                               else float(self.regularity_sup)),
            "failure": self.failure,
            "leaves": [st.as_dict() for st in self.leaves],
        }


def _warm_init(leaves, r):
    last = leaves[-1]
    tau = last.tau.copy()
    if (len(leaves) >= 2 and last.tau_identifiable
            and leaves[-2].tau_identifiable):
        prev = leaves[-2]
        slope = (last.tau - prev.tau) / (last.r - prev.r)
        tau = last.tau + slope * (r - last.r)
    return (tau, last.phi)


def _fit_dtau(leaves, count=5):
    """Slope at radius zero from a degree-2 fit of tau over the smallest
    radii whose center was actually resolved by the equation."""
    if not leaves:
        return None
    pool = [st for st in leaves if st.tau_identifiable]
    if not pool:
        pool = list(leaves)
    pool = sorted(pool, key=lambda st: st.r)[:count]
    if len(pool) == 1:
        return np.zeros_like(pool[0].tau)
    rs = np.array([st.r for st in pool])
    ts = np.array([st.tau for st in pool])
    deg = min(2, len(pool) - 1)
    out = np.empty(ts.shape[1])
    for a in range(ts.shape[1]):
        out[a] = np.polyfit(rs, ts[:, a], deg)[-2]
    return out


def _alpha_min(leaves):
    if not leaves:
        return None
    rs = np.array([st.r for st in leaves])
    ts = np.array([st.tau for st in leaves])
    if len(leaves) == 1:
        slopes = np.zeros_like(ts)
    else:
        slopes = np.gradient(ts, rs, axis=0)
    amin = np.inf
    for st, dt in zip(leaves, slopes):
        amin = min(amin, lapse(dt, st.embedding)[1])
    return float(amin)


def continue_foliation(chart, variant, r_schedule=None, grid=None,
                       tol=NEWTON_TOL, max_iter=12, jacobian="shortcut",
                       with_diagnostics=True):
    """Warm-started sweep from the largest radius down.

    Any leaf failure ends the sweep with verdict "failed" and the partial
    run attached.  A complete sweep is a "foliation" when the lapse of the
    reconstructed center curve stays positive, otherwise the leaves merely
    concentrate.
    """
    variant = _canon_variant(variant)
    grid = _grid_for(chart, grid)
    if r_schedule is None:
        schedule = default_schedule(chart)
    else:
        schedule = np.sort(np.asarray(r_schedule, float))[::-1]
        if schedule.size == 0 or schedule[-1] <= 0.0:
            raise ValueError("radius schedule must be positive")
    leaves = []
    failure = None
    for r in schedule:
        init = _warm_init(leaves, r) if leaves else None
        try:
            st = solve_leaf(chart, r, variant, init=init, grid=grid, tol=tol,
                            max_iter=max_iter, jacobian=jacobian,
                            with_diagnostics=with_diagnostics)
        except (SolverError, GeometryError) as exc:
            failure = {"r": float(r), "error": type(exc).__name__,
                       "message": str(exc)}
            break
        leaves.append(st)
    dtau = _fit_dtau(leaves)
    amin = _alpha_min(leaves)
    reg = None
    if leaves and leaves[0].diagnostics is not None:
        reg = float(max(st.diagnostics["bending"] for st in leaves))
    if failure is not None:
        verdict = "failed"
    elif amin is not None and amin > 0.0:
        verdict = "foliation"
    else:
        verdict = "concentration-only"
    return FoliationRun(variant, [st.r for st in leaves], leaves, dtau, amin,
                        reg, verdict, failure=failure)


def _neville3(xs, ys):
    p01 = (xs[0] * ys[1] - xs[1] * ys[0]) / (xs[0] - xs[1])
    p12 = (xs[1] * ys[2] - xs[2] * ys[1]) / (xs[1] - xs[2])
    return (xs[0] * p12 - xs[2] * p01) / (xs[0] - xs[2])


def obstruction_probe(chart, variant, r_sequence=None, grid=None):
    """Scaled kernel moments of the frozen-profile residual, extrapolated
    to radius zero and compared against the closed-form covector.

    The probe holds tau = 0 and the profile at its leading value (zero for
    the expansion variants, whose moments already converge one order
    earlier).  Growth of the scaled residual sup across the sequence is
    reported as divergence; unstable extrapolation is inconclusive.
    """
    variant = _canon_variant(variant)
    grid = _grid_for(chart, grid)
    d = chart.dim
    n = grid.n
    if r_sequence is None:
        base = 0.06 * min(chart.validity_radius, 1.0)
        r_sequence = base * 0.5 ** np.arange(5)
    rs = np.sort(np.asarray(r_sequence, float))[::-1]
    if rs.size < 3:
        raise ValueError("need at least three radii")
    s = _scaling_power(variant)
    if variant == "STCMC":
        phi = initial_phi0(chart, rs[-1], variant, grid=grid)
    else:
        phi = SphereField(grid, values=np.zeros(grid.n_nodes))

    mom = np.empty((rs.size, d))
    sups = np.empty(rs.size)
    for i, r in enumerate(rs):
        leaf = embed_leaf(chart, r, np.zeros(d), phi)
        res = residual(leaf, variant)
        mom[i] = kernel_moments(res) / r ** s
        sups[i] = np.max(np.abs(res.values)) / r ** s

    divergent = False
    if sups[-1] > 1e-9:
        slope = np.log(sups[-1] / sups[-2]) / np.log(rs[-1] / rs[-2])
        divergent = bool(slope < -0.5)

    extrapolants = [_neville3(rs[i:i + 3], mom[i:i + 3])
                    for i in range(rs.size - 2)]
    limit = extrapolants[-1]
    inconclusive = False
    if len(extrapolants) >= 2:
        drift = np.linalg.norm(extrapolants[-1] - extrapolants[-2])
        inconclusive = bool(
            drift > NEVILLE_GUARD * max(1.0, np.linalg.norm(limit)))

    E = orthonormal_basis(chart, np.zeros(d))
    if variant == "STCMC":
        cf = -(2.0 * grid.area / ((n + 1.0) * (n + 3.0))) * frame_covector(
            eval_a_st(chart, np.zeros(d)), E)
    else:
        cf = _ce_sign(variant) * (grid.area / (n + 1.0)) * frame_covector(
            eval_a_ce(chart, np.zeros(d)), E)

    err = np.linalg.norm(limit - cf)
    match = bool((not divergent) and (not inconclusive)
                 and err <= PROBE_MATCH_RTOL * np.linalg.norm(cf)
                 + PROBE_MATCH_ATOL)
    nonexistence = bool(divergent
                        or (match and np.linalg.norm(cf) > 1e-6))
    return {
        "variant": variant,
        "radii": [float(r) for r in rs],
        "scaling_power": s,
        "scaled_moments": mom.tolist(),
        "scaled_sup": sups.tolist(),
        "extrapolants": [e.tolist() for e in extrapolants],
        "extrapolated_kernel_limit": limit.tolist(),
        "closed_form": cf.tolist(),
        "match": match,
        "inconclusive": inconclusive,
        "divergent": divergent,
        "nonexistence": nonexistence,
    }


def dtau_dr_closed_form(chart, variant, grid=None, r_base=None):
    """Limit slope of the center curve from the obstruction data alone.

    The expansion variants invert the gradient of their covector against
    the hatted companion.  The stable variant isolates the profile-coupled
    kernel moments (frozen-profile residual minus the bare geodesic-sphere
    residual), extracts their second radius coefficient and inverts the
    same moment balance that drives the solver's center updates.
    """
    variant = _canon_variant(variant)
    grid = _grid_for(chart, grid)
    d = chart.dim
    n = grid.n
    E = orthonormal_basis(chart, np.zeros(d))
    if variant != "STCMC":
        sg = _ce_sign(variant)
        M = frame_matrix(eval_grad_a_ce(chart, np.zeros(d)), E)
        v = frame_covector(eval_hat_a_ce(chart, np.zeros(d), sign=sg), E)
        return (-sg / (n + 3.0)) * np.linalg.solve(M, v)

    vcap = min(chart.validity_radius, 1.0)
    r0 = r_base if r_base is not None else 0.04 * vcap
    # profile limit by Richardson, so its O(r^2) tail does not leak into
    # the coefficient extraction
    pa = initial_phi0(chart, 0.5 * r0, variant, grid=grid)
    pb = initial_phi0(chart, 0.25 * r0, variant, grid=grid)
    phi0 = SphereField(grid, coeffs=(4.0 * pb.coeffs - pa.coeffs) / 3.0)
    rs = r0 * np.array([1.0, 0.8, 0.6, 0.4])
    vals = np.empty((rs.size, d))
    zero = SphereField(grid, coeffs=np.zeros(grid.basis.shape[0]))
    for i, r in enumerate(rs):
        leaf = embed_leaf(chart, r, np.zeros(d), phi0)
        bare = embed_leaf(chart, r, np.zeros(d), zero)
        delta = (kernel_moments(residual(leaf, variant))
                 - kernel_moments(residual(bare, variant)))
        vals[i] = delta / r ** 3
    # vals ~ c1 + c2 r + c3 r^2 + c4 r^3; the balance reads off c2
    V = np.vander(rs, 4, increasing=True)
    c2 = np.linalg.solve(V, vals)[1]
    coef = 2.0 * grid.area / ((n + 1.0) * (n + 3.0))
    M = frame_matrix(eval_grad_a_st(chart, np.zeros(d)), E)
    return np.linalg.solve(coef * M, c2)


def factory_deform(base_chart, epsilon, k_field=None, tol=1e-10,
                   max_iter=25):
    """Track the admissible center of the scaled data.

    The base chart carries the unscaled symmetric tensor (or one is
    supplied); the data under study uses epsilon times it.  Newton on the
    leading obstruction covector locates the center; the returned record
    holds the point, the deformed chart and the full obstruction report
    there.
    """
    chart = base_chart
    if k_field is not None:
        import copy
        chart = copy.copy(chart)
        chart.k_field = k_field
    chart = chart.with_k_scale(float(epsilon))
    d = chart.dim
    p = np.zeros(d)
    path = [p.copy()]
    nrm = np.inf
    for it in range(max_iter):
        A = eval_a_st(chart, p)
        nrm = float(np.linalg.norm(frame_covector(A, orthonormal_basis(
            chart, p))))
        if nrm <= tol:
            break
        G = eval_grad_a_st(chart, p)
        p = p - np.linalg.solve(G, A)
        path.append(p.copy())
        if np.linalg.norm(p) >= chart.validity_radius:
            raise FactoryError("center search left the chart validity "
                               "region", path)
    else:
        raise FactoryError("no convergence in center search", path)
    return {
        "epsilon": float(epsilon),
        "point": p,
        "a_st_norm": nrm,
        "newton_iters": it,
        "path": path,
        "chart": chart,
        "report": obstruction_report(chart, p),
    }


def linearized_p_squared(leaf, direction):
    """First variation of the scaled trace term (r P)^2 along a raw graph
    offset direction.

    The variation of the embedding per unit raw offset points along the
    arriving radial velocity; only its normal amplitude enters, once
    against the normal derivative of the traces and once through the
    tangential gradient paired with the tensor.
    """
    grid = leaf.grid
    dvals = direction.values if isinstance(direction, SphereField) \
        else np.asarray(direction, float)
    f = _offset_values(leaf.r, leaf.phi, leaf.normalization)
    g = leaf.ambient_metric
    nu = leaf.normal
    amp = np.einsum("ni,nij,nj->n", leaf.radial_velocity, g, nu) / (1.0 + f)
    a = dvals * amp

    cur = curvature_jet(leaf.chart, leaf.node_positions)
    e1 = np.einsum("nm,nm->n", nu, cur.grad_tr_k)
    e2 = np.einsum("nm,ni,nj,nmij->n", nu, nu, nu, cur.cov_k)

    first = _derivative_tables(grid)[0]
    coef = grid.analyze(a)
    da = np.stack([coef @ first[b] for b in range(len(first))], axis=1)
    grad = np.einsum("nab,nb,nad->nd", leaf.induced_inverse, da,
                     leaf.d_positions)
    kgrad = np.einsum("nij,ni,nj->n", leaf.ambient_k, grad, nu)

    rp = leaf.r * p_trace(leaf).values
    out = 2.0 * leaf.r * rp * ((e1 - e2) * a + 2.0 * kgrad)
    return SphereField(grid, values=out)
