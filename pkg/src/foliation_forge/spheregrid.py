"""Spectral function analysis on the unit sphere S^n for n in {1, 2}.

Quadrature grids, real harmonic transforms, the operator L = -Laplacian - n,
projections onto and off its kernel K = span{x^0, ..., x^n}, and closed-form
monomial moments over S^n (these last work for every n).
"""

import functools

import numpy as np
from scipy.special import gamma, gammaln, lpmv


class SolvabilityError(ValueError):
    """Right-hand side has a kernel component, so L phi = f is unsolvable."""


class UnsupportedOrderError(ValueError):
    """Moment order outside the tabulated closed forms."""


def sphere_area(n):
    """Volume of the unit n-sphere embedded in R^(n+1)."""
    return 2.0 * np.pi ** ((n + 1) / 2.0) / gamma((n + 1) / 2.0)


def _pairings(slots):
    # all perfect matchings of an even-length tuple of positions
    if not slots:
        yield ()
        return
    first = slots[0]
    for j in range(1, len(slots)):
        rest = slots[1:j] + slots[j + 1:]
        for tail in _pairings(rest):
            yield ((first, slots[j]),) + tail


def moment(n, indices):
    """Integral of x^{i1} ... x^{im} over the unit n-sphere, m <= 6.

    Closed form: |S^n| / ((n+1)(n+3)...(n+2q-1)) times the number of
    ways to pair the m = 2q indices so each pair is equal.  Odd m gives 0.
    Only the equality pattern of the indices matters, so axis labels may
    be 0- or 1-based.
    """
    indices = tuple(int(i) for i in indices)
    m = len(indices)
    if m > 6:
        raise UnsupportedOrderError("moment order %d exceeds 6" % m)
    if m % 2 == 1:
        return 0.0
    if m == 0:
        return sphere_area(n)
    denom = 1.0
    for j in range(m // 2):
        denom *= n + 1 + 2 * j
    count = 0
    for pairing in _pairings(tuple(range(m))):
        if all(indices[a] == indices[b] for a, b in pairing):
            count += 1
    return sphere_area(n) * count / denom


def moment_quadrature_oracle(grid, indices):
    """Same monomial integral, evaluated by grid quadrature."""
    prod = np.ones(grid.nodes.shape[0])
    for i in indices:
        prod = prod * grid.nodes[:, i]
    return float(np.dot(grid.weights, prod))


class SphereGrid:
    """Immutable quadrature grid with tabulated real harmonics.

    n = 1 uses equispaced angles and a Fourier basis; n = 2 uses
    Gauss-Legendre in cos(theta) times equispaced longitude with real
    spherical harmonics.  Basis tables (values and first and second
    parameter derivatives) are dense (n_basis, n_nodes) arrays; transforms
    are direct weighted inner products.
    """

    def __init__(self, n, L_max=16, resolution=None):
        if n not in (1, 2):
            raise ValueError("only n = 1 and n = 2 grids are supported")
        self.n = n
        self.L_max = int(L_max)
        self.area = sphere_area(n)
        if n == 1:
            self._build_circle(resolution)
        else:
            self._build_two_sphere(resolution)
        self.n_nodes = self.nodes.shape[0]

    def _build_circle(self, resolution):
        N = int(resolution) if resolution else max(4 * self.L_max, 16)
        self.resolution = N
        t = 2.0 * np.pi * np.arange(N) / N
        self.theta = t
        self.lam = None
        self.nodes = np.column_stack([np.cos(t), np.sin(t)])
        self.weights = np.full(N, 2.0 * np.pi / N)
        nb = 2 * self.L_max + 1
        B = np.empty((nb, N))
        Bt = np.empty((nb, N))
        Btt = np.empty((nb, N))
        deg = np.empty(nb, dtype=int)
        B[0] = 1.0 / np.sqrt(2.0 * np.pi)
        Bt[0] = 0.0
        Btt[0] = 0.0
        deg[0] = 0
        row = 1
        s = 1.0 / np.sqrt(np.pi)
        for m in range(1, self.L_max + 1):
            c, sn = np.cos(m * t), np.sin(m * t)
            B[row], Bt[row], Btt[row] = s * c, -s * m * sn, -s * m * m * c
            deg[row] = m
            row += 1
            B[row], Bt[row], Btt[row] = s * sn, s * m * c, -s * m * m * sn
            deg[row] = m
            row += 1
        self.basis = B
        self.basis_dth = Bt
        self.basis_dthth = Btt
        self.degrees = deg

    def _build_two_sphere(self, resolution):
        if resolution is None:
            n_th, n_lm = max(2 * self.L_max, 12), max(4 * self.L_max, 24)
        else:
            n_th, n_lm = resolution
        self.resolution = (n_th, n_lm)
        ct, glw = np.polynomial.legendre.leggauss(n_th)
        st = np.sqrt(1.0 - ct ** 2)
        lam = 2.0 * np.pi * np.arange(n_lm) / n_lm
        TH, LM = np.meshgrid(np.arccos(ct), lam, indexing="ij")
        self.theta = TH.ravel()
        self.lam = LM.ravel()
        sT, cT = np.sin(self.theta), np.cos(self.theta)
        self.nodes = np.column_stack(
            [sT * np.cos(self.lam), sT * np.sin(self.lam), cT])
        self.weights = np.repeat(glw * (2.0 * np.pi / n_lm), n_lm)

        L = self.L_max
        # associated Legendre tables over the theta ring, P[l][m],
        # with first/second theta derivatives from the lowering recurrence
        P = np.zeros((L + 1, L + 1, n_th))
        D = np.zeros_like(P)
        D2 = np.zeros_like(P)
        for l in range(L + 1):
            for m in range(l + 1):
                P[l, m] = lpmv(m, l, ct)
        for l in range(L + 1):
            for m in range(l + 1):
                below = P[l - 1, m] if l >= 1 and m <= l - 1 else 0.0
                D[l, m] = (l * ct * P[l, m] - (l + m) * below) / st
        for l in range(L + 1):
            for m in range(l + 1):
                below = D[l - 1, m] if l >= 1 and m <= l - 1 else 0.0
                D2[l, m] = (-l * P[l, m]
                            + (l * ct * D[l, m] - (l + m) * below) / st
                            - (ct / st) * D[l, m])

        nb = (L + 1) ** 2
        N = n_th * n_lm
        B = np.empty((nb, N))
        Bt = np.empty((nb, N))
        Btt = np.empty((nb, N))
        Bl = np.empty((nb, N))
        Bll = np.empty((nb, N))
        Btl = np.empty((nb, N))
        deg = np.empty(nb, dtype=int)
        row = 0

        def put(r, pl, dl, d2l, az, daz, d2az):
            # tensor (theta ring) x (lambda ring) onto flattened nodes
            B[r] = np.outer(pl, az).ravel()
            Bt[r] = np.outer(dl, az).ravel()
            Btt[r] = np.outer(d2l, az).ravel()
            Bl[r] = np.outer(pl, daz).ravel()
            Bll[r] = np.outer(pl, d2az).ravel()
            Btl[r] = np.outer(dl, daz).ravel()

        one = np.ones(n_lm)
        zero = np.zeros(n_lm)
        for l in range(L + 1):
            nf0 = np.sqrt((2 * l + 1) / (4.0 * np.pi))
            put(row, nf0 * P[l, 0], nf0 * D[l, 0], nf0 * D2[l, 0],
                one, zero, zero)
            deg[row] = l
            row += 1
            for m in range(1, l + 1):
                nf = np.sqrt((2 * l + 1) / (2.0 * np.pi)
                             * np.exp(gammaln(l - m + 1) - gammaln(l + m + 1)))
                cm, sm = np.cos(m * lam), np.sin(m * lam)
                put(row, nf * P[l, m], nf * D[l, m], nf * D2[l, m],
                    cm, -m * sm, -m * m * cm)
                deg[row] = l
                row += 1
                put(row, nf * P[l, m], nf * D[l, m], nf * D2[l, m],
                    sm, m * cm, -m * m * sm)
                deg[row] = l
                row += 1

        self.basis = B
        self.basis_dth = Bt
        self.basis_dthth = Btt
        self.basis_dlam = Bl
        self.basis_dlamlam = Bll
        self.basis_dthlam = Btl
        self.degrees = deg

    def analyze(self, values):
        return self.basis @ (self.weights * values)

    def synthesize(self, coeffs):
        return coeffs @ self.basis

    def basis_at(self, points):
        """Basis values at arbitrary unit vectors, rows matching self.basis."""
        return scattered_basis(self.n, self.L_max, points)

    def coordinate_field(self, l):
        """Restriction of the ambient coordinate x^l to the sphere."""
        return SphereField(self, values=self.nodes[:, l].copy())


def scattered_basis(n, L_max, points):
    """Harmonic basis values at arbitrary unit vectors.

    Rows follow the same order and normalization as the SphereGrid tables,
    so coeffs @ scattered_basis(...) resamples a field off the grid.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if n == 1:
        t = np.arctan2(pts[:, 1], pts[:, 0])
        nb = 2 * L_max + 1
        B = np.empty((nb, pts.shape[0]))
        B[0] = 1.0 / np.sqrt(2.0 * np.pi)
        s = 1.0 / np.sqrt(np.pi)
        row = 1
        for m in range(1, L_max + 1):
            B[row] = s * np.cos(m * t)
            B[row + 1] = s * np.sin(m * t)
            row += 2
        return B
    ct = np.clip(pts[:, 2], -1.0, 1.0)
    lam = np.arctan2(pts[:, 1], pts[:, 0])
    nb = (L_max + 1) ** 2
    B = np.empty((nb, pts.shape[0]))
    row = 0
    for l in range(L_max + 1):
        nf0 = np.sqrt((2 * l + 1) / (4.0 * np.pi))
        B[row] = nf0 * lpmv(0, l, ct)
        row += 1
        for m in range(1, l + 1):
            nf = np.sqrt((2 * l + 1) / (2.0 * np.pi)
                         * np.exp(gammaln(l - m + 1) - gammaln(l + m + 1)))
            plm = lpmv(m, l, ct)
            B[row] = nf * plm * np.cos(m * lam)
            B[row + 1] = nf * plm * np.sin(m * lam)
            row += 2
    return B


@functools.lru_cache(maxsize=8)
def default_grid(n=2, L_max=16):
    return SphereGrid(n, L_max=L_max)


class SphereField:
    """Scalar field on a SphereGrid with lazily synchronized
    node values and harmonic coefficients."""

    __slots__ = ("grid", "_values", "_coeffs")

    def __init__(self, grid, values=None, coeffs=None):
        if values is None and coeffs is None:
            raise ValueError("need values or coeffs")
        self.grid = grid
        self._values = None if values is None else np.asarray(values, float)
        self._coeffs = None if coeffs is None else np.asarray(coeffs, float)

    @property
    def values(self):
        if self._values is None:
            self._values = self.grid.synthesize(self._coeffs)
        return self._values

    @property
    def coeffs(self):
        if self._coeffs is None:
            self._coeffs = self.grid.analyze(self._values)
        return self._coeffs

    def laplacian(self):
        """Laplace-Beltrami image, diagonal in the harmonic basis."""
        d = self.grid.degrees
        return SphereField(self.grid,
                           coeffs=-d * (d + self.grid.n - 1) * self.coeffs)

    def at(self, points):
        """Evaluate the field at arbitrary unit vectors off the grid."""
        return self.coeffs @ self.grid.basis_at(points)

    def __add__(self, other):
        return SphereField(self.grid, values=self.values + _vals(other))

    def __radd__(self, other):
        return SphereField(self.grid, values=_vals(other) + self.values)

    def __sub__(self, other):
        return SphereField(self.grid, values=self.values - _vals(other))

    def __mul__(self, other):
        return SphereField(self.grid, values=self.values * _vals(other))

    __rmul__ = __mul__

    def __neg__(self):
        return SphereField(self.grid, values=-self.values)


def _vals(x):
    return x.values if isinstance(x, SphereField) else x


class KernelVector:
    """Image of the kernel isomorphism sending x^l to e_l."""

    __slots__ = ("components",)

    def __init__(self, components):
        self.components = np.asarray(components, float)

    def field(self, grid):
        return SphereField(grid, values=grid.nodes @ self.components)


def kernel_moments(f):
    """Raw moment functional: the vector of integrals of f x^l over S^n."""
    g = f.grid
    return g.nodes.T @ (g.weights * f.values)


def project_kernel(f):
    """Orthogonal projection onto K composed with the basis isomorphism,
    normalized so the coordinate field x^l maps to e_l."""
    g = f.grid
    return KernelVector((g.n + 1) / g.area * kernel_moments(f))


def project_kperp(f):
    """Remove the degree-1 harmonic content pointwise (idempotent, and
    leaves any content beyond the grid band limit untouched)."""
    g = f.grid
    coef = (g.n + 1) / g.area * kernel_moments(f)
    return SphereField(g, values=f.values - g.nodes @ coef)


def solve_L(f, tol=1e-10):
    """Solve (-Laplacian - n) phi = f for the perpendicular solution.

    f must already be in K^perp within tol; the harmonic coefficients are
    divided by l(l + n - 1) - n, which vanishes exactly on degree 1.
    """
    g = f.grid
    kc = project_kernel(f).components
    if np.max(np.abs(kc)) > tol:
        raise SolvabilityError(
            "kernel component %.3e exceeds %.1e" % (np.max(np.abs(kc)), tol))
    d = g.degrees
    eig = d * (d + g.n - 1) - g.n
    c = f.coeffs.copy()
    c[d == 1] = 0.0
    out = np.zeros_like(c)
    np.divide(c, eig, out=out, where=d != 1)
    return SphereField(g, coeffs=out)
