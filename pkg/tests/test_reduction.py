import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import root

from bubblekit.bubble import CutoffSpec, TowerConfig, polygon_centers
from bubblekit.energy import compute_constants, critical_mu, interaction_sum
from bubblekit.potential import builtin_example_potential, polynomial_potential
from bubblekit.reduction import (ReductionError, classify, find_reduced_critical_point, fit_slope,
                                 profile, profile_gradient, residual_decay_study, residual_norm,
                                 scaling_study, target_exponent)

N = 7
R0 = 1 / math.sqrt(22)


@pytest.fixture(scope="module")
def consts():
    return compute_constants(N)


@pytest.fixture(scope="module")
def pot():
    return builtin_example_potential(N)


@pytest.fixture(scope="module")
def skew():
    text = "1 - r**2 - (y5 - 0.1)**2 + 0.5*(y6 - 0.2)**2 + (y7 + 0.1)**2 + 0.1*r*y5"
    return polynomial_potential(text, N)


def _oracle_cp(p, start):
    """Critical point of t^2 V by scipy root-finding on a central-difference gradient."""
    def grad(z):
        f = lambda w: w[0] ** 2 * p.value(w[0], w[1:])
        out = np.empty(z.size)
        for i in range(z.size):
            e = np.zeros(z.size)
            e[i] = 1e-5
            out[i] = (f(z + e) - f(z - e)) / 2e-5
        return out
    sol = root(grad, start, tol=1e-13)
    assert sol.success
    return sol.x


@pytest.mark.parametrize("n", [2, 64, 4096])
def test_critical_point_builtin(consts, pot, n):
    center = np.asarray(pot.center)
    theta = 0.1 * R0
    res = find_reduced_critical_point(n, consts, pot, center, start=center + 0.3 * theta / 2)
    z = np.array([res.t, *res.ystar])
    assert np.linalg.norm(z - center) <= theta
    assert res.gradient_norm < 1e-9
    assert z == pytest.approx(center, abs=1e-10)
    assert res.classification == "saddle"
    assert res.mu == pytest.approx(critical_mu(res.t, res.ystar, n, consts, pot), rel=1e-14)


def test_critical_point_matches_root_oracle(consts, skew):
    start = np.array([0.7, 0.1, 0.2, -0.1])
    want = _oracle_cp(skew, start)
    assert want[0] > 0.5
    res = find_reduced_critical_point(16, consts, skew, want + 0.01, vartheta=0.2)
    assert res.gradient_norm < 1e-9
    assert np.array([res.t, *res.ystar]) == pytest.approx(want, abs=1e-7)


def test_critical_point_grid_scan(consts, pot):
    # the smallest |grad G| / |G| on a grid around the center sits next to the returned point
    center = np.asarray(pot.center)
    res = find_reduced_critical_point(32, consts, pot, center)
    h = 0.002
    best, arg = math.inf, None
    for a in np.linspace(-5, 5, 11):
        for b in np.linspace(-5, 5, 11):
            z = center + h * np.array([a, b, b, b])
            g = np.linalg.norm(profile_gradient(z, 32, consts, pot)) / abs(profile(z, 32, consts, pot))
            if g < best:
                best, arg = g, z
    assert np.linalg.norm(arg - np.array([res.t, *res.ystar])) < 1.5 * h


def test_derivative_in_t_vanishes(consts, pot):
    res = find_reduced_critical_point(64, consts, pot, pot.center)
    ys = np.asarray(res.ystar)
    g = lambda t: profile(np.array([t, *ys]), 64, consts, pot)
    h = 1e-4
    d1 = (8 * (g(res.t + h) - g(res.t - h)) - (g(res.t + 2 * h) - g(res.t - 2 * h))) / (12 * h)
    assert abs(d1) / abs(g(res.t)) < 1e-9


def test_profile_gradient_fd(consts, skew):
    z = np.array([0.65, 0.05, 0.25, -0.05])
    g = profile_gradient(z, 8, consts, skew)
    for i in range(4):
        e = np.zeros(4)
        e[i] = 1e-6
        fd = (profile(z + e, 8, consts, skew) - profile(z - e, 8, consts, skew)) / 2e-6
        assert g[i] == pytest.approx(fd, rel=1e-6, abs=1e-9 * abs(profile(z, 8, consts, skew)))


@pytest.mark.parametrize("c", [0.01, 3.0, 1e4])
def test_constant_scaling_invariance(consts, pot, c):
    base = find_reduced_critical_point(64, consts, pot, pot.center)
    scaled = find_reduced_critical_point(64, consts.scaled(c), pot, pot.center)
    assert scaled.t == pytest.approx(base.t, rel=1e-12)
    assert scaled.ystar == pytest.approx(base.ystar, rel=1e-12)
    assert scaled.mu == pytest.approx(base.mu, rel=1e-12)
    vs = find_reduced_critical_point(64, consts, pot.scaled(c), pot.center)
    assert vs.t == pytest.approx(base.t, rel=1e-12)
    assert vs.mu == pytest.approx(base.mu * c ** (-1 / (N - 4)), rel=1e-12)


@given(st.floats(0.0, 2 * math.pi), st.sampled_from([2, 4, 6, 16]))
def test_ring_phase_invariance(phase, n):
    p = polygon_centers("inner_34_plane", n, R0, (0.1, 0.2, 0.3), phase=phase)
    d = sum(np.linalg.norm(p[0] - q) ** -(N - 2) for q in p[1:])
    assert d == pytest.approx(interaction_sum(n, R0, N), rel=1e-11)


def test_escaped_search_box(consts, pot):
    center = np.asarray(pot.center) + np.array([0.05, 0, 0, 0])
    with pytest.raises(ReductionError, match="escaped search box"):
        find_reduced_critical_point(64, consts, pot, center, vartheta=0.01)


def test_odd_n_rejected(consts, pot):
    with pytest.raises(ReductionError):
        find_reduced_critical_point(3, consts, pot, pot.center)


def test_classify():
    assert classify(np.diag([1.0, 2.0])) == "min"
    assert classify(np.diag([-1.0, -2.0])) == "max"
    assert classify(np.diag([-1.0, 2.0])) == "saddle"
    assert classify(np.diag([0.0, 2.0])) == "degenerate"


def test_target_exponent():
    assert target_exponent(7) == pytest.approx(5 / 3)
    assert target_exponent(8) == pytest.approx(1.5)


def test_fit_slope_exact():
    x = np.geomspace(1, 100, 7)
    assert fit_slope(x, 3 * x ** -1.7) == pytest.approx(-1.7, abs=1e-12)


def test_scaling_nested_ranges_converge(consts, pot):
    target = target_exponent(N)
    gaps = []
    for lo in (4, 64, 1024):
        res = scaling_study([lo, 2 * lo, 4 * lo], consts, pot, pot.center)
        gaps.append(abs(res.fitted_exponent - target))
    assert gaps[0] > gaps[1] > gaps[2]


def test_scaling_study_validation(consts, pot):
    with pytest.raises(ReductionError):
        scaling_study([64], consts, pot, pot.center)
    with pytest.raises(ReductionError):
        scaling_study([64, 65], consts, pot, pot.center)
    with pytest.raises(ReductionError):
        scaling_study([64, 128], consts, pot, pot.center)


def test_residual_of_exact_bubble_is_zero():
    cfg = TowerConfig(m=0, r_bar=R0, lam=1.0, n=1, t=R0, mu=50.0, ystar=(0.4, 0.4, 0.4))
    assert residual_norm(cfg) == 0.0


def test_residual_decays(pot):
    cp = np.asarray(pot.center)
    ys = tuple(cp[1:])
    cfg = TowerConfig(m=8, r_bar=cp[0], lam=20.0, n=8, t=cp[0], mu=200.0, ystar=ys,
                      cutoff=CutoffSpec(cp[0], ys, 0.45 * cp[0]))
    res = residual_decay_study(cfg, (1, 2, 4, 8), potential=pot.field)
    assert res["strictly_decreasing"]
    assert res["slope"] <= -1.0
    again = residual_decay_study(dataclasses.replace(cfg), (1, 2, 4, 8), potential=pot.field)
    assert again == res
