"""Independent reference computations used by the test suite.

Everything in here is deliberately written without the package's own
machinery (plain finite differences, closed forms, sympy) so the tests
cross different implementations rather than checking code against itself.
"""

import numpy as np


def fd_partial(f, x, index, h):
    """Central difference of a scalar/array-valued f along one coordinate."""
    xp = np.array(x, dtype=float)
    xm = np.array(x, dtype=float)
    xp[index] += h
    xm[index] -= h
    return (np.asarray(f(xp)) - np.asarray(f(xm))) / (2.0 * h)


def fd_multi(f, x, multi, h):
    """Iterated central difference along a derivative multi-index tuple."""
    if len(multi) == 0:
        return np.asarray(f(np.asarray(x, dtype=float)))
    head, rest = multi[0], multi[1:]
    return fd_partial(lambda y: fd_multi(f, y, rest, h), x, head, h)


def fd_multi_richardson(f, x, multi, h):
    """One Richardson sweep on fd_multi, error O(h^4)."""
    v1 = fd_multi(f, x, multi, h)
    v2 = fd_multi(f, x, multi, h / 2.0)
    return (4.0 * v2 - v1) / 3.0


def conformal_ricci(dim, grad_f, hess_f):
    """Ricci tensor of g = exp(2 f) * delta at a point, from f's derivatives.

    Standard conformal-change formula in dim dimensions:
    Ric_ij = -(dim-2)(f_ij - f_i f_j) - delta_ij (lap f + (dim-2)|grad f|^2).
    """
    grad_f = np.asarray(grad_f, dtype=float)
    hess_f = np.asarray(hess_f, dtype=float)
    lap = np.trace(hess_f)
    gsq = grad_f @ grad_f
    return (-(dim - 2) * (hess_f - np.outer(grad_f, grad_f))
            - np.eye(dim) * (lap + (dim - 2) * gsq))


def conformal_scalar(dim, u_val, grad_f, hess_f):
    """Scalar curvature of g = exp(2 f) * delta; u_val = exp(2 f)."""
    ric = conformal_ricci(dim, grad_f, hess_f)
    return np.trace(ric) / u_val
