import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bubblekit.bubble import Bubble, BubbleParams, bubble_constant, critical_exponent, polygon_centers
from bubblekit.energy import (EnergyError, ExpansionConstants, bubble_profile, compute_constants,
                              critical_mu, full_energy, interaction_sum, load_constants,
                              reduced_energy, reduced_energy_gradient, save_constants)
from bubblekit.numerics import QuadratureSpec, integrate_radial
from bubblekit.pohozaev import ZeroField
from bubblekit.potential import builtin_example_potential, polynomial_potential

N = 7
R0 = 1 / math.sqrt(22)
Y0 = np.full(3, 2 * R0)


@pytest.fixture(scope="module")
def consts():
    return compute_constants(N)


@pytest.fixture(scope="module")
def pot():
    return builtin_example_potential(N)


def test_a1_prefactor():
    assert 0.5 - 1 / critical_exponent(7) == pytest.approx(1 / 7, rel=1e-15)


def test_constants_definitions(consts):
    prof = bubble_profile(N)
    s = critical_exponent(N)
    spec = QuadratureSpec("radial_gauss", 96)
    i = lambda k: integrate_radial(lambda r: prof(r) ** k, N, spec).value
    assert consts.A1 == pytest.approx(i(s) / N, rel=1e-12)
    assert consts.A2 == pytest.approx(0.5 * i(2.0), rel=1e-12)
    assert consts.A3 == pytest.approx(0.5 * bubble_constant(N) * i(s - 1), rel=1e-12)
    assert consts.A1 > 0 and consts.A2 > 0 and consts.A3 > 0
    assert max(consts.errors) < 1e-6 * consts.A3


def test_a1_closed_form():
    # int U^{2*} = [N(N-2)]^{N/2} omega pi^{1/2} Gamma(N/2) / (2 Gamma(N/2 + 1/2)) ... via Beta function
    n = N
    c = bubble_constant(n)
    from bubblekit.numerics import sphere_area
    beta = math.gamma(n / 2) * math.gamma(n / 2) / math.gamma(n)
    exact = c ** (2 * n / (n - 2)) * sphere_area(n) * 0.5 * beta
    assert compute_constants(n).A1 == pytest.approx(exact / n, rel=1e-12)


def test_constants_need_n5():
    with pytest.raises(EnergyError):
        compute_constants(4)


def test_constants_positive_check():
    with pytest.raises(EnergyError):
        ExpansionConstants(1.0, -1.0, 1.0, 7)


def test_constants_monte_carlo_agree(consts):
    mc = compute_constants(N, QuadratureSpec("monte_carlo", 10 ** 6, 7))
    assert mc.A1 == pytest.approx(consts.A1, rel=1e-6)
    again = compute_constants(N, QuadratureSpec("monte_carlo", 10 ** 6, 7))
    assert again == mc


def test_constants_seed_independent():
    a = compute_constants(N, QuadratureSpec("monte_carlo", 10 ** 6, 1))
    b = compute_constants(N, QuadratureSpec("monte_carlo", 10 ** 6, 2))
    assert a.A1 == pytest.approx(b.A1, rel=1e-6)


def test_constants_cache(tmp_path, consts):
    path = tmp_path / "c.txt"
    spec = QuadratureSpec("radial_gauss", 64)
    c = compute_constants(N, spec, cache=path)
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    assert len(lines) == 3 and all(len(l.split()) == 5 for l in lines)
    assert load_constants(path, N, spec.fingerprint()) == c
    assert load_constants(path, N, "other") is None
    assert load_constants(tmp_path / "missing.txt", N, "x") is None
    save_constants(path, c)
    assert len([l for l in path.read_text().splitlines() if not l.startswith("#")]) == 3


def test_interaction_examples():
    assert interaction_sum(2, 1.0, 7) == pytest.approx(0.03125, rel=1e-15)
    assert interaction_sum(4, 1.0, 7) == pytest.approx(2 * math.sqrt(2) ** -5 + 2 ** -5, rel=1e-15)
    assert interaction_sum(4, 1.0, 7) == pytest.approx(0.384803, abs=1e-6)
    with pytest.raises(EnergyError):
        interaction_sum(1, 1.0, 7)


@given(st.integers(2, 200), st.floats(0.01, 100.0), st.integers(5, 12))
def test_interaction_homogeneity(n, t, dim):
    assert interaction_sum(n, t, dim) == pytest.approx(t ** -(dim - 2) * interaction_sum(n, 1.0, dim), rel=1e-12)


@pytest.mark.parametrize("n", [2, 3, 8, 64])
def test_interaction_brute_force(n):
    p = polygon_centers("inner_34_plane", n, R0, Y0)
    brute = sum(np.linalg.norm(p[0] - q) ** -5 for q in p[1:])
    assert interaction_sum(n, R0, 7) == pytest.approx(brute, rel=1e-12)
    # seen from p_2 the sum is the same
    from_p2 = sum(np.linalg.norm(p[1] - q) ** -5 for j, q in enumerate(p) if j != 1)
    assert from_p2 == pytest.approx(brute, rel=1e-12)


def test_reduced_energy_limits(consts, pot):
    zero = polynomial_potential("0", N)
    e = reduced_energy(R0, Y0, 5.0, 8, consts, zero)
    assert e.per_bubble_value < 0
    assert e.per_bubble_value == pytest.approx(-consts.A3 * interaction_sum(8, R0, N) / 5.0 ** 5)
    assert e.value == pytest.approx(8 * e.per_bubble_value)
    big = reduced_energy(R0, Y0, 1e12, 8, consts, pot)
    assert abs(big.value) < 1e-15
    off = reduced_energy(R0, Y0, 5.0, 8, consts, pot, offsets=True)
    assert off.value == pytest.approx(reduced_energy(R0, Y0, 5.0, 8, consts, pot).value + 8 * consts.A1)


def test_reduced_gradient_fd(consts, pot):
    t, mu, n = R0 * 1.01, 150.0, 8
    ys = Y0 * 0.99
    g = reduced_energy_gradient(t, ys, mu, n, consts, pot)
    f = lambda t, ys, mu: reduced_energy(t, ys, mu, n, consts, pot).value
    ht, hm = 1e-6, 1e-4
    assert g["t"] == pytest.approx((f(t + ht, ys, mu) - f(t - ht, ys, mu)) / (2 * ht), rel=1e-6)
    assert g["mu"] == pytest.approx((f(t, ys, mu + hm) - f(t, ys, mu - hm)) / (2 * hm), rel=1e-6)
    e = np.array([ht, 0, 0])
    assert g["ystar"][0] == pytest.approx((f(t, ys + e, mu) - f(t, ys - e, mu)) / (2 * ht), rel=1e-6)


def test_critical_mu_closed_form():
    ones = ExpansionConstants(1.0, 1.0, 1.0, 7)
    t = interaction_sum(8, 1.0, 7) ** (1 / 5)  # so that D_8(t) = 1
    one = polynomial_potential("1", 7)
    assert critical_mu(t, Y0, 8, ones, one) == pytest.approx(2.5 ** (1 / 3), rel=1e-12)
    assert critical_mu(t, Y0, 8, ones, one) == pytest.approx(1.357209, abs=1e-6)
    c = 3.7
    assert critical_mu(t, Y0, 8, ones, one.scaled(c)) == pytest.approx(c ** (-1 / 3) * 2.5 ** (1 / 3), rel=1e-12)
    with pytest.raises(EnergyError, match="no critical scale"):
        critical_mu(t, Y0, 8, ones, polynomial_potential("-1", 7))


def test_critical_mu_is_stationary(consts, pot):
    n = 16
    mu = critical_mu(R0, Y0, n, consts, pot)
    per = lambda m: reduced_energy(R0, Y0, m, n, consts, pot).per_bubble_value
    h = 1e-5 * mu
    d1 = (per(mu + h) - per(mu - h)) / (2 * h)
    scale = consts.A2 * 0.5 / mu ** 3
    assert abs(d1) < 1e-10 * scale * 1e4  # central difference noise is ~eps |per| / h
    assert abs(reduced_energy_gradient(R0, Y0, mu, n, consts, pot)["mu"]) < 1e-10 * n * scale
    second = [(per(m + h) - 2 * per(m) + per(m - h)) / h ** 2 for m in mu * np.linspace(0.9, 1.1, 9)]
    assert all(s > 0 for s in second) or all(s < 0 for s in second)


def test_full_energy_zero():
    spec = QuadratureSpec("monte_carlo", 1000, 0, ((0.0,) * N,), 1.0)
    r = full_energy(ZeroField(N), None, spec)
    assert r.value == 0.0 and r.error_estimate == 0.0


def test_full_energy_requires_gradient():
    spec = QuadratureSpec("monte_carlo", 100, 0, ((0.0,) * N,), 1.0)
    with pytest.raises(EnergyError):
        full_energy(lambda y: y[..., 0], None, spec)


@pytest.mark.parametrize("lam", [1.0, 10.0])
def test_full_energy_bubble_is_a1(consts, lam):
    spec = QuadratureSpec("monte_carlo", 200000, 13, ((0.0,) * N,), lam)
    r = full_energy(Bubble(BubbleParams((0.0,) * N, lam)), None, spec)
    assert abs(r.value - consts.A1) <= 3 * r.error_estimate


def test_full_energy_potential_term_matches_a2(consts):
    # V = 1 everywhere adds (1/2) int U^2 = A2 / lam^2
    lam = 2.0
    x = (0.1,) * N
    spec = QuadratureSpec("monte_carlo", 200000, 4, (x,), lam)
    one = lambda y: np.ones(y.shape[:-1])
    b = Bubble(BubbleParams(x, lam))
    r = full_energy(b, one, spec, control=b, control_integral=consts.A1)
    assert abs(r.value - consts.A1 - consts.A2 / lam ** 2) <= 3 * r.error_estimate + 1e-9 * consts.A2


def _pair_cross_term(d, q=64, n=N):
    """int U_a^{2*-1} U_b for unit bubbles a distance d apart, by axisymmetric
    Gauss-Legendre panels in (r, theta); independent of compute_constants."""
    from bubblekit.numerics import sphere_area
    prof = bubble_profile(n)
    p = critical_exponent(n) - 1
    x, w = np.polynomial.legendre.leggauss(q)

    def panels(edges):
        pts = [0.5 * (b - a) * x + 0.5 * (a + b) for a, b in zip(edges[:-1], edges[1:])]
        wts = [0.5 * (b - a) * w for a, b in zip(edges[:-1], edges[1:])]
        return np.concatenate(pts), np.concatenate(wts)

    r, wr = panels(np.concatenate([[0], np.geomspace(0.5, d - 2, 8), [d - 0.5, d, d + 0.5],
                                   d + np.geomspace(2, d, 4)]))
    s, ws = panels([0.0, 0.5, 1.0])
    r, wr = np.concatenate([r, 2 * d / s]), np.concatenate([wr, ws * 2 * d / s ** 2])
    th, wth = panels(np.concatenate([[0], np.geomspace(0.2 / d, math.pi / 2, 10), [math.pi]]))
    rr, tt = np.meshgrid(r, th, indexing="ij")
    dist = np.sqrt(np.maximum(rr * rr + d * d - 2 * rr * d * np.cos(tt), 0.0))
    f = prof(rr) ** p * prof(dist) * rr ** (n - 1) * np.sin(tt) ** (n - 2)
    return sphere_area(n - 1) * np.einsum("i,j,ij", wr, wth, f)


def test_a3_is_per_bubble_share_of_pair_interaction(consts):
    # I(U_a + U_b) - 2 A1 ~ -int U_a^{2*-1} U_b, so each bubble carries half of
    # the cross term: A3 / d^{N-2}
    ratios = [_pair_cross_term(d) / (2 * consts.A3 / d ** (N - 2)) for d in (20.0, 40.0, 80.0)]
    assert abs(ratios[-1] - 1) < 1e-3
    gaps = [1 - r for r in ratios]
    assert all(g > 0 for g in gaps)
    for a, b in zip(gaps, gaps[1:]):
        assert 3.5 < a / b < 4.5  # O(d^-2) approach
    assert _pair_cross_term(40.0, 128) == pytest.approx(_pair_cross_term(40.0), rel=1e-12)
