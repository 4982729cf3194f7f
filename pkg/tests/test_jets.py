import numpy as np
from numpy.testing import assert_allclose

from foliation_forge.jets import (
    Jet,
    jet_einsum,
    jet_from_components,
    jet_matrix_inverse,
    jet_mul,
    jet_power,
    jet_reciprocal,
    jet_sqrt,
    polynomial_jet,
)

from oracles import fd_multi_richardson

RNG = np.random.default_rng(7)


def scalar_field(x):
    # smooth test function with nontrivial mixed partials
    return (1.0 + 0.3 * x[0] ** 2 * x[1] - 0.2 * x[1] * x[2] ** 3
            + 0.11 * x[0] * x[1] * x[2])


def build_scalar_jet(pts, order):
    coeffs = {
        (0, 0, 0): 1.0,
        (2, 1, 0): 0.3,
        (0, 1, 3): -0.2,
        (1, 1, 1): 0.11,
    }
    return polynomial_jet(pts, coeffs, order)


def test_polynomial_jet_matches_fd():
    pts = RNG.uniform(-0.5, 0.5, size=(4, 3))
    jet = build_scalar_jet(pts, 4)
    for multi in [(0,), (2,), (0, 1), (1, 2, 2), (0, 0, 1, 2)]:
        fd = np.array([fd_multi_richardson(scalar_field, p, multi, 0.05)
                       for p in pts])
        got = jet.terms[len(multi)][(slice(None),) + multi]
        assert_allclose(got, fd, rtol=1e-7, atol=1e-9)


def test_derivative_tensors_are_symmetric():
    pts = RNG.uniform(-0.5, 0.5, size=(3, 3))
    jet = build_scalar_jet(pts, 4)
    t3 = jet.terms[3]
    assert_allclose(t3, np.transpose(t3, (0, 2, 1, 3)), atol=1e-14)
    assert_allclose(t3, np.transpose(t3, (0, 3, 2, 1)), atol=1e-14)
    t4 = jet.terms[4]
    assert_allclose(t4, np.transpose(t4, (0, 1, 3, 2, 4)), atol=1e-14)


def test_product_reciprocal_sqrt_against_fd():
    pts = RNG.uniform(-0.4, 0.4, size=(3, 3))
    base = build_scalar_jet(pts, 4)
    recip = jet_reciprocal(base)
    root = jet_sqrt(base)
    prod = jet_mul(base, base)

    def f_recip(x):
        return 1.0 / scalar_field(x)

    def f_root(x):
        return np.sqrt(scalar_field(x))

    def f_prod(x):
        return scalar_field(x) ** 2

    for multi in [(0,), (1, 2), (0, 1, 2)]:
        for jet, fn in [(recip, f_recip), (root, f_root), (prod, f_prod)]:
            fd = np.array([fd_multi_richardson(fn, p, multi, 0.04) for p in pts])
            got = jet.terms[len(multi)][(slice(None),) + multi]
            assert_allclose(got, fd, rtol=1e-6, atol=1e-9)


def test_reciprocal_of_sqrt_power_identity():
    pts = RNG.uniform(-0.4, 0.4, size=(5, 3))
    base = build_scalar_jet(pts, 4)
    lhs = jet_power(base, -2)
    rhs = jet_reciprocal(jet_mul(base, base))
    for q in range(5):
        assert_allclose(lhs.terms[q], rhs.terms[q], rtol=1e-12, atol=1e-12)
    # sqrt(f)^2 == f exactly in truncated arithmetic
    back = jet_mul(jet_sqrt(base), jet_sqrt(base))
    for q in range(5):
        assert_allclose(back.terms[q], base.terms[q], rtol=1e-12, atol=1e-12)


def test_matrix_inverse_jet():
    pts = RNG.uniform(-0.3, 0.3, size=(2, 3))
    order = 3

    def entry(i, j):
        coeffs = {(0, 0, 0): 1.0 if i == j else 0.1 * (i + j),
                  (1, 0, 0): 0.05 * (i + 1),
                  (0, 2, 0): 0.02 * (j + 1)}
        return polynomial_jet(pts, coeffs, order)

    g = jet_from_components([[entry(i, j) for j in range(3)] for i in range(3)],
                            dim=3)
    # symmetrize to make a metric-like field
    gt = Jet([np.swapaxes(t, 1, 2) for t in g.terms], 3, comp_ndim=2)
    g = (g + gt) * 0.5
    ginv = jet_matrix_inverse(g)
    prod = jet_einsum("ij,jk->ik", g, ginv)
    eye = np.eye(3)
    assert_allclose(prod.terms[0], np.broadcast_to(eye, prod.terms[0].shape),
                    atol=1e-13)
    for q in range(1, order + 1):
        assert_allclose(prod.terms[q], 0.0, atol=1e-12)

    def numeric_entry(x, i, j):
        v = (1.0 if i == j else 0.1 * (i + j)) + 0.05 * (i + 1) * x[0] \
            + 0.02 * (j + 1) * x[1] ** 2
        return v

    def inv_entry(x):
        m = np.array([[numeric_entry(x, i, j) for j in range(3)] for i in range(3)])
        m = 0.5 * (m + m.T)
        return np.linalg.inv(m)

    fd = np.array([fd_multi_richardson(inv_entry, p, (0, 1), 0.03) for p in pts])
    assert_allclose(ginv.terms[2][:, :, :, 0, 1], fd, rtol=1e-6, atol=1e-9)


def test_deriv_view_and_einsum_contraction():
    pts = RNG.uniform(-0.4, 0.4, size=(3, 3))
    base = build_scalar_jet(pts, 4)
    grad = base.deriv()
    assert grad.order == 3
    assert grad.comp_ndim == 1
    assert_allclose(grad.terms[0], base.terms[1])
    # contraction grad . grad equals |grad f|^2
    sq = jet_einsum("i,i->", grad, grad)

    def gradsq(x):
        h = 1e-6
        g = np.array([(scalar_field(x + h * e) - scalar_field(x - h * e)) / (2 * h)
                      for e in np.eye(3)])
        return g @ g

    assert_allclose(sq.terms[0], [gradsq(p) for p in pts], rtol=1e-8)
