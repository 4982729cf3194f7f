"""Blown-up initial data around a moving center.

rescaled_data(chart, tau, r) presents the pair

    g_{tau,r}(x) = r^{-2} (alpha_r^* F_tau^* g)(x),
    k_{tau,r}(x) = r^{-1} (alpha_r^* F_tau^* k)(x),

on the ball |x| < 2, where F_tau(y) = exp_{c(tau)}(y^i e_i^tau) is the
normal-coordinate parameterization and alpha_r(x) = r x.  The two scalings
cancel against the pullback Jacobians, so concretely

    g_{tau,r}(x) = (F_tau^* g)(r x),    k_{tau,r}(x) = r (F_tau^* k)(r x),

computed here with geodesic flows and their variational (Jacobi) blocks.
"""

import numpy as np

from .geodesics import integrate_geodesics, normal_frame


class DomainError(ValueError):
    pass


class RescaledData:
    def __init__(self, chart, tau, r, base_point=None):
        if not 0.0 < r:
            raise ValueError("r must be positive")
        self.chart = chart
        self.r = float(r)
        self.frame = normal_frame(chart, tau, base_point)

    def _pullback(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if np.max(np.sqrt(np.sum(x ** 2, axis=1))) >= 2.0:
            raise DomainError("rescaled data only defined on the ball B_2")
        y = self.r * x
        e = self.frame.frame
        v0 = y @ e.T
        x0 = np.broadcast_to(self.frame.center, v0.shape).copy()
        res = integrate_geodesics(self.chart, x0, v0, with_jacobi=True)
        m = res.jacobi @ e  # columns: dF/dy^j
        return res.x, m

    def metric(self, x):
        pts, m = self._pullback(x)
        g = self.chart.metric(pts)
        return np.einsum("nai,nab,nbj->nij", m, g, m)

    def k(self, x):
        pts, m = self._pullback(x)
        k = self.chart.k(pts)
        return self.r * np.einsum("nai,nab,nbj->nij", m, k, m)


def rescaled_data(chart, tau, r, base_point=None):
    return RescaledData(chart, tau, r, base_point)
