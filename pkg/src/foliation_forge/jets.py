"""Truncated multivariate Taylor (jet) arithmetic.

A jet of order q at a batch of base points stores the value of a field
together with its partial-derivative tensors up to order q.  Every term is
a numpy array laid out as

    terms[j].shape == (N,) + comp_shape + (dim,)*j

with one leading batch axis, then the component axes of a tensor-valued
field (empty for scalars), then j symmetric derivative axes.  All algebra
below preserves symmetry of the derivative axes, so mixed partials never
need reordering.

Products use the Leibniz rule followed by symmetrization of the derivative
axes; reciprocal and square root use the usual nilpotent-series trick
(the order-q part of (f/f0 - 1)^m vanishes for m > q).  Matrix inversion
is a finite Neumann series seeded with the pointwise inverse of the value.
"""

import itertools
import math

import numpy as np


class Jet:
    """Batched truncated Taylor expansion of a (tensor-valued) field."""

    __slots__ = ("terms", "dim", "comp_ndim")

    def __init__(self, terms, dim, comp_ndim=0):
        self.terms = list(terms)
        self.dim = dim
        self.comp_ndim = comp_ndim

    @property
    def order(self):
        return len(self.terms) - 1

    @property
    def value(self):
        return self.terms[0]

    @property
    def nbatch(self):
        return self.terms[0].shape[0]

    @property
    def comp_shape(self):
        return self.terms[0].shape[1 : 1 + self.comp_ndim]

    # ------------------------------------------------------------------
    # constructors

    @classmethod
    def constant(cls, values, dim, order):
        values = np.asarray(values, dtype=float)
        terms = [values]
        for j in range(1, order + 1):
            terms.append(np.zeros(values.shape + (dim,) * j))
        return cls(terms, dim, comp_ndim=values.ndim - 1)

    @classmethod
    def coordinate(cls, x, i, order):
        """Jet of the coordinate function x^i at the points x (N, dim)."""
        x = np.asarray(x, dtype=float)
        n, dim = x.shape
        terms = [x[:, i].copy()]
        if order >= 1:
            t1 = np.zeros((n, dim))
            t1[:, i] = 1.0
            terms.append(t1)
        for j in range(2, order + 1):
            terms.append(np.zeros((n,) + (dim,) * j))
        return cls(terms, dim, comp_ndim=0)

    @classmethod
    def coordinates(cls, x, order):
        return [cls.coordinate(x, i, order) for i in range(np.asarray(x).shape[1])]

    @classmethod
    def zeros(cls, nbatch, dim, order, comp_shape=()):
        terms = [np.zeros((nbatch,) + tuple(comp_shape) + (dim,) * j)
                 for j in range(order + 1)]
        return cls(terms, dim, comp_ndim=len(comp_shape))

    def copy(self):
        return Jet([t.copy() for t in self.terms], self.dim, self.comp_ndim)

    def truncate(self, order):
        if order >= self.order:
            return self
        return Jet(self.terms[: order + 1], self.dim, self.comp_ndim)

    # ------------------------------------------------------------------
    # linear structure

    def __add__(self, other):
        if isinstance(other, Jet):
            q = min(self.order, other.order)
            terms = [self.terms[j] + other.terms[j] for j in range(q + 1)]
            return Jet(terms, self.dim, self.comp_ndim)
        terms = [self.terms[0] + other] + [t.copy() for t in self.terms[1:]]
        return Jet(terms, self.dim, self.comp_ndim)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * other if not isinstance(other, Jet) else self + other * (-1.0)

    def __rsub__(self, other):
        return (self * (-1.0)) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            return jet_mul(self, other)
        return Jet([t * other for t in self.terms], self.dim, self.comp_ndim)

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    # ------------------------------------------------------------------
    # calculus

    def deriv(self):
        """The gradient as a jet of one order lower.

        The new derivative index becomes the last component axis; no data
        movement is needed because terms[j+1] already has layout
        (N,) + comp + (dim,) + (dim,)*j.
        """
        if self.order < 1:
            raise ValueError("cannot differentiate an order-0 jet")
        return Jet(self.terms[1:], self.dim, self.comp_ndim + 1)

    def component(self, idx):
        """Scalar jet of one tensor component."""
        sl = (slice(None),) + tuple(idx)
        terms = [t[sl] for t in self.terms]
        return Jet(terms, self.dim, comp_ndim=0)


def _sym(arr, nsym):
    """Symmetrize the trailing nsym axes of arr."""
    if nsym < 2:
        return arr
    nd = arr.ndim
    base = tuple(range(nd - nsym))
    out = None
    perms = list(itertools.permutations(range(nd - nsym, nd)))
    for p in perms:
        piece = arr.transpose(base + p)
        out = piece.copy() if out is None else out + piece
    return out / len(perms)


def jet_einsum(spec, a, b):
    """Leibniz product of two jets with einsum contraction of component axes.

    spec uses plain einsum syntax over the component axes only, e.g.
    'ij,jk->ik' for a matrix product or ',ij->ij' for scalar times matrix.
    The batch axis and the derivative axes are managed internally.
    """
    lhs, out_comp = spec.split("->")
    a_comp, b_comp = lhs.split(",")
    used = set(a_comp) | set(b_comp) | set(out_comp) | {"z"}
    pool = [c for c in "abcdefghijklmnopqrstuvwxy" if c not in used]
    order = min(a.order, b.order)
    dletters = pool[: order]

    terms = []
    for q in range(order + 1):
        acc = None
        for j in range(q + 1):
            da = "".join(dletters[:j])
            db = "".join(dletters[j:q])
            sub = "z{}{},z{}{}->z{}{}".format(a_comp, da, b_comp, db,
                                              out_comp, "".join(dletters[:q]))
            piece = np.einsum(sub, a.terms[j], b.terms[q - j])
            piece = piece * math.comb(q, j)
            acc = piece if acc is None else acc + piece
        terms.append(_sym(acc, q))
    return Jet(terms, a.dim, comp_ndim=len(out_comp))


def jet_mul(a, b):
    """Product of two scalar jets (or scalar times tensor)."""
    if a.comp_ndim == 0 and b.comp_ndim == 0:
        return jet_einsum(",->", a, b)
    if a.comp_ndim == 0:
        comp = "abcdefgh"[: b.comp_ndim].upper()
        # uppercase letters keep clear of the derivative pool
        return jet_einsum(",{}->{}".format(comp, comp), a, b)
    if b.comp_ndim == 0:
        comp = "abcdefgh"[: a.comp_ndim].upper()
        return jet_einsum("{},->{}".format(comp, comp), a, b)
    raise ValueError("use jet_einsum with an explicit spec for tensor products")


def _nilpotent_series(u, coeffs):
    """sum coeffs[m] * u^m for a scalar jet u with zero value part."""
    out = Jet.constant(np.full(u.terms[0].shape, coeffs[0]), u.dim, u.order)
    power = None
    for m in range(1, len(coeffs)):
        power = u if power is None else jet_mul(power, u)
        if coeffs[m] != 0.0:
            out = out + power * coeffs[m]
    return out


def jet_reciprocal(a):
    """1/a for a scalar jet with nonvanishing value."""
    if a.comp_ndim != 0:
        raise ValueError("reciprocal is defined for scalar jets")
    a0 = a.terms[0]
    u = Jet([t / a0.reshape(a0.shape + (1,) * j) for j, t in enumerate(a.terms)],
            a.dim, 0) + (-1.0)
    coeffs = [(-1.0) ** m for m in range(a.order + 1)]
    series = _nilpotent_series(u, coeffs)
    return Jet([t / a0.reshape(a0.shape + (1,) * j) for j, t in enumerate(series.terms)],
               a.dim, 0)


def jet_sqrt(a):
    """sqrt(a) for a scalar jet with positive value."""
    if a.comp_ndim != 0:
        raise ValueError("sqrt is defined for scalar jets")
    a0 = a.terms[0]
    u = Jet([t / a0.reshape(a0.shape + (1,) * j) for j, t in enumerate(a.terms)],
            a.dim, 0) + (-1.0)
    # binomial series for (1+u)^(1/2), exact at truncation order
    coeffs = [math.comb(2 * m, m) * (-1.0) ** (m + 1) / (4.0 ** m * (2 * m - 1))
              for m in range(a.order + 1)]
    series = _nilpotent_series(u, coeffs)
    root = np.sqrt(a0)
    return Jet([t * root.reshape(root.shape + (1,) * j)
                for j, t in enumerate(series.terms)], a.dim, 0)


def jet_power(a, p):
    """Integer power of a scalar jet."""
    if p < 0:
        return jet_reciprocal(jet_power(a, -p))
    out = Jet.constant(np.ones(a.terms[0].shape), a.dim, a.order)
    for _ in range(p):
        out = jet_mul(out, a)
    return out


def jet_matrix_inverse(g):
    """Inverse of a matrix-valued jet (comp shape (D, D)).

    Finite Neumann series around the pointwise inverse of the value part:
    with F = I - inv(g0) g, the series sum_m F^m inv(g0) terminates because
    F has zero value part.
    """
    g0 = g.terms[0]
    i0 = np.linalg.inv(g0)
    i0_jet = Jet.constant(i0, g.dim, g.order)
    ident = Jet.constant(np.broadcast_to(np.eye(g0.shape[-1]), g0.shape).copy(),
                         g.dim, g.order)
    f = ident + (-1.0) * jet_einsum("ij,jk->ik", i0_jet, g)
    acc = ident
    power = ident
    for _ in range(g.order):
        power = jet_einsum("ij,jk->ik", power, f)
        acc = acc + power
    return jet_einsum("ij,jk->ik", acc, i0_jet)


def jet_from_components(rows, dim):
    """Assemble a matrix-valued jet from a nested list of scalar jets."""
    order = min(j.order for row in rows for j in row)
    terms = []
    for q in range(order + 1):
        mat = np.stack([np.stack([j.terms[q] for j in row], axis=1) for row in rows],
                       axis=1)
        terms.append(mat)
    return Jet(terms, dim, comp_ndim=2)


def jet_from_vector(comps, dim):
    """Assemble a vector-valued jet from a list of scalar jets."""
    order = min(j.order for j in comps)
    terms = [np.stack([j.terms[q] for j in comps], axis=1) for q in range(order + 1)]
    return Jet(terms, dim, comp_ndim=1)


def jet_transpose(a, perm):
    """Permute the component axes of a tensor-valued jet."""
    perm = tuple(perm)
    terms = []
    for t in a.terms:
        axes = (0,) + tuple(1 + p for p in perm) \
            + tuple(range(1 + len(perm), t.ndim))
        terms.append(np.transpose(t, axes))
    return Jet(terms, a.dim, a.comp_ndim)


def jet_trace(a, ax1, ax2):
    """Contract two component axes of a tensor-valued jet."""
    terms = [np.trace(t, axis1=1 + ax1, axis2=1 + ax2) for t in a.terms]
    return Jet(terms, a.dim, a.comp_ndim - 2)


def covariant_deriv(t, gamma):
    """Covariant derivative of a fully covariant tensor-valued jet.

    t has component axes (s1..sm); the result has axes (a, s1..sm) with
    (nabla T)_{a s1..sm} = d_a T_{s1..sm} - sum_slots Gamma^c_{a s_t} T[..c..],
    and jet order one lower than min(t.order - 1 is implied by deriv,
    gamma.order).
    """
    m = t.comp_ndim
    d = t.deriv()                      # comp (s1..sm, a)
    out = jet_transpose(d, (m,) + tuple(range(m)))
    letters = "ijklmn"[:m]
    for slot in range(m):
        repl = letters[:slot] + "c" + letters[slot + 1:]
        spec = "ca{},{}->a{}".format(letters[slot], repl, letters)
        out = out + (-1.0) * jet_einsum(spec, gamma, t)
    return out


def polynomial_jet(x, coeffs, order):
    """Jet of a polynomial given as {multi-index exponent tuple: coefficient}.

    Exponent tuples have one entry per coordinate.  Built by composing
    coordinate jets, which keeps the derivative tensors exact.
    """
    x = np.asarray(x, dtype=float)
    n, dim = x.shape
    coords = Jet.coordinates(x, order)
    out = Jet.zeros(n, dim, order)
    for expo, c in coeffs.items():
        term = Jet.constant(np.full(n, float(c)), dim, order)
        for i, e in enumerate(expo):
            for _ in range(e):
                term = jet_mul(term, coords[i])
        out = out + term
    return out
