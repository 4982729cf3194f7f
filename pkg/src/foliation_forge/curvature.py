"""Curvature and covariant-derivative data at chart points.

curvature_jet assembles, from the metric jet of order 4 and the k jet of
order 3, everything downstream code needs: Christoffels, Riemann, Ricci,
scalar curvature with its first two covariant derivatives, and covariant
derivatives of k up to third order.  All heavy lifting happens in truncated
Taylor arithmetic, so the outputs are exact for analytic charts.
"""

import numpy as np

from .jets import (
    covariant_deriv,
    jet_einsum,
    jet_matrix_inverse,
    jet_trace,
    jet_transpose,
)


class CurvatureJet:
    """Curvature package at a batch of points.

    Value arrays keep the batch axis.  The *_jet attributes retain truncated
    Taylor expansions for code that differentiates derived quantities (the
    obstruction one-forms do).
    """

    def __init__(self, chart, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = chart.dim
        self.point = x
        self.dim = d

        g = chart.metric_jet(x, 4)
        k = chart.k_jet(x, 3)
        eig = np.linalg.eigvalsh(g.value)
        if np.any(eig[:, 0] <= 0.0):
            raise DegenerateMetricError("metric not positive definite")

        ginv = jet_matrix_inverse(g)
        dg = g.deriv()  # comp (i, j, a) with [i, j, a] = d_a g_{ij}
        # C_{lij} = d_i g_{lj} + d_j g_{li} - d_l g_{ij}
        t_i = jet_transpose(dg, (0, 2, 1))   # [l, i, j] = dg[l, j, i] = d_i g_{lj}
        t_j = dg                             # [l, i, j] = d_j g_{li}
        t_l = jet_transpose(dg, (2, 0, 1))   # [l, i, j] = dg[i, j, l] = d_l g_{ij}
        c = t_i + t_j + (-1.0) * t_l
        gamma = jet_einsum("kl,lij->kij", ginv, c) * 0.5   # order 3

        dgam = gamma.deriv()  # comp (k, i, j, a) = d_a Gamma^k_{ij}, order 2
        # R^i_{jkl} = d_k Gamma^i_{lj} - d_l Gamma^i_{kj}
        #             + Gamma^i_{km} Gamma^m_{lj} - Gamma^i_{lm} Gamma^m_{kj}
        term_k = jet_transpose(dgam, (0, 2, 3, 1))  # [i,j,k,l] = dgam[i,l,j,k]
        term_l = jet_transpose(dgam, (0, 2, 1, 3))  # [i,j,k,l] = dgam[i,k,j,l]
        quad1 = jet_einsum("ikm,mlj->ijkl", gamma, gamma)
        quad2 = jet_einsum("ilm,mkj->ijkl", gamma, gamma)
        r_up = term_k + (-1.0) * term_l + quad1 + (-1.0) * quad2  # order 2
        riemann = jet_einsum("im,mjkl->ijkl", g, r_up)
        ricci = jet_trace(r_up, 0, 2)       # Ric_{jl} = R^m_{jml}
        scalar = jet_einsum("ij,ij->", ginv, ricci)  # order 2

        cov1 = covariant_deriv(k, gamma)        # (a, i, j), order 2
        cov2 = covariant_deriv(cov1, gamma)     # (b, a, i, j) -> reorder below
        cov3 = covariant_deriv(cov2, gamma)

        trk = jet_einsum("ij,ij->", ginv, k)    # scalar jet, order 3

        self.g_jet = g
        self.ginv_jet = ginv
        self.k_jet = k
        self.gamma_jet = gamma
        self.ricci_jet = ricci
        self.scalar_jet = scalar
        self.cov_k_jet = cov1
        self.cov2_k_jet = cov2
        self.tr_k_jet = trk

        self.g = g.value
        self.ginv = ginv.value
        self.k = k.value
        self.christoffel = gamma.value
        self.riemann = riemann.value
        self.ricci = ricci.value
        self.scalar = scalar.value
        self.grad_scalar = scalar.terms[1]
        self.hess_scalar = scalar.terms[2] - np.einsum(
            "nmij,nm->nij", gamma.value, scalar.terms[1])
        self.cov_k = cov1.value                       # [a, i, j] = nabla_a k_{ij}
        self.cov2_k = cov2.value                      # [a, b, i, j], outer first
        self.cov3_k = cov3.value                      # [a, b, c, i, j]
        self.div_k = np.einsum("nil,nilj->nj", self.ginv, self.cov_k)
        self.tr_k = trk.value
        self.grad_tr_k = trk.terms[1]

    def single(self):
        """Convenience: assert batch of one and drop the batch axis views."""
        if self.point.shape[0] != 1:
            raise ValueError("not a single-point jet")
        return self


class DegenerateMetricError(ValueError):
    pass


def curvature_jet(chart, x):
    return CurvatureJet(chart, x)
