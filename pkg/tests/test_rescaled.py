import numpy as np
import pytest
from numpy.testing import assert_allclose

from foliation_forge.charts import (
    FlatChart,
    PolynomialConformalChart,
    RoundSphereChart,
    constant_k,
)
from foliation_forge.rescaled import DomainError, rescaled_data

RNG = np.random.default_rng(3)


def ball_points(n=6):
    x = RNG.normal(size=(n, 3))
    return 1.5 * x / np.linalg.norm(x, axis=1, keepdims=True) \
        * RNG.uniform(0.2, 1.0, size=(n, 1))


def test_flat_chart_rescales_to_identity():
    chart = FlatChart(3, constant_k(3, [0.4, 0.4, 0.4]))
    data = rescaled_data(chart, np.array([0.2, -0.1, 0.3]), 0.05)
    x = ball_points()
    g = data.metric(x)
    assert_allclose(g, np.broadcast_to(np.eye(3), g.shape), atol=1e-12)
    # k = const * delta scales linearly in r
    assert_allclose(data.k(x), 0.05 * 0.4 * np.broadcast_to(np.eye(3), g.shape),
                    atol=1e-12)


def test_round_sphere_normal_coordinates_closed_form():
    # In normal coordinates of the round sphere, Gauss's lemma fixes the
    # radial direction and tangential directions scale by (a sin(s/a)/s)^2.
    a = 1.1
    chart = RoundSphereChart(3, a)
    tau = np.array([0.15, 0.1, -0.2])
    r = 0.3
    data = rescaled_data(chart, tau, r)
    x = ball_points(4)
    g = data.metric(x)
    for m in range(x.shape[0]):
        y = r * x[m]
        s = np.linalg.norm(y)
        yhat = y / s
        proj = np.outer(yhat, yhat)
        scale = (a * np.sin(s / a) / s) ** 2
        expected = proj + scale * (np.eye(3) - proj)
        assert_allclose(g[m], expected, rtol=1e-8, atol=1e-10)


def test_deviation_from_identity_is_quadratic():
    chart = RoundSphereChart(3, 1.0)
    x = ball_points(8)
    devs = []
    for r in (0.2, 0.1, 0.05):
        g = rescaled_data(chart, np.zeros(3), r).metric(x)
        dev = np.max(np.abs(g - np.eye(3)), axis=(1, 2))
        scale = (r * np.linalg.norm(x, axis=1)) ** 2
        devs.append(np.max(dev / scale))
    # constant C uniform in r (paper's |sigma(x)| <= C |x|^2 bound)
    assert max(devs) <= 1.5 * min(devs)
    assert max(devs) < 1.0


def test_scaling_covariance():
    lam = 1.7
    psi = {(2, 0, 0): 0.1, (0, 1, 2): 0.06}
    base = PolynomialConformalChart(3, psi, constant_k(3, [0.3, 0.1, -0.2]))
    # lam^2 (1 + psi) written as 1 + psi' with a constant term in psi'
    psi_scaled = {(0, 0, 0): lam ** 2 - 1.0}
    psi_scaled.update({e: lam ** 2 * c for e, c in psi.items()})
    scaled = PolynomialConformalChart(3, psi_scaled,
                                      constant_k(3, [0.3, 0.1, -0.2]))
    tau = np.array([0.05, -0.03, 0.02])
    r = 0.04
    x = ball_points(4)
    g1 = rescaled_data(base, tau, r).metric(x)
    g2 = rescaled_data(scaled, lam * tau, lam * r).metric(x)
    assert_allclose(g2, g1, rtol=1e-9, atol=1e-11)


def test_outside_ball_raises():
    chart = FlatChart(3)
    data = rescaled_data(chart, np.zeros(3), 0.1)
    with pytest.raises(DomainError):
        data.metric(np.array([[2.5, 0.0, 0.0]]))
