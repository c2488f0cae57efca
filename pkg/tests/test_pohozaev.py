import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bubblekit.bubble import Bubble, BubbleParams, TowerConfig, critical_exponent, m_ring_field, symmetrize
from bubblekit.numerics import Ball, Box, QuadratureSpec
from bubblekit.pohozaev import (BubbleCenterDerivative, BubbleScaleDerivative, ConstantPotential,
                                GaussianField, LinearPotential, ZeroField, _residuals,
                                convergence_order, dilation_identity_check, sector_boundary_check,
                                translation_identity_check)

BALL3 = Ball((0.0, 0.0, 0.0), 1.0)
U3 = GaussianField(3, 1.0, (0.2, -0.1, 0.15))
E3 = GaussianField(3, 2.0, (-0.1, 0.25, 0.0))
ONE = ConstantPotential(1.0)


def tg(q):
    return QuadratureSpec("tensor_gauss", q)


def test_zero_fields():
    z = ZeroField(3)
    t = translation_identity_check(z, z, ONE, BALL3, 0, tg(8))
    d = dilation_identity_check(z, z, ONE, BALL3, (0.3, 0, 0), tg(8))
    for c in (t, d):
        assert c.lhs == c.rhs == c.residual_correction == c.discrepancy == 0.0


@pytest.mark.parametrize("i", [0, 1, 2])
def test_gaussian_translation(i):
    c = translation_identity_check(U3, E3, ONE, BALL3, i, tg(40))
    assert c.relative_discrepancy < 1e-6
    assert abs(c.lhs) > 1e-3 and c.direction == i


def test_centered_gaussian_translation_is_trivial():
    u, e = GaussianField(3, 1.0), GaussianField(3, 2.0)
    c = translation_identity_check(u, e, ONE, BALL3, 0, tg(40))
    assert abs(c.lhs) < 1e-12 and abs(c.rhs) < 1e-12


def test_gaussian_dilation_and_order():
    x0 = (0.3, 0.0, 0.0)
    u, e = GaussianField(3, 1.0), GaussianField(3, 2.0)
    errs = {q: dilation_identity_check(u, e, ONE, BALL3, x0, tg(q)).discrepancy for q in (4, 8)}
    assert convergence_order(errs) >= 4
    c = dilation_identity_check(u, e, ONE, BALL3, x0, tg(40))
    assert c.relative_discrepancy < 1e-6 and c.center == x0


def test_linear_potential_closes():
    v = LinearPotential(0.5, (0.3, -0.2, 0.7))
    for i in range(3):
        c = translation_identity_check(U3, E3, v, BALL3, i, tg(40))
        assert abs(c.rhs) > 1e-3
        assert c.relative_discrepancy < 1e-8
    d = dilation_identity_check(U3, E3, v, BALL3, (0.1, 0.2, -0.3), tg(40))
    assert d.relative_discrepancy < 1e-8


def test_box_domain_closes():
    box = Box((-0.5, -0.4, -0.6), (0.7, 0.5, 0.3))
    assert translation_identity_check(U3, E3, ONE, box, 1, tg(24)).relative_discrepancy < 1e-10
    assert dilation_identity_check(U3, E3, ONE, box, (0, 0, 0), tg(24)).relative_discrepancy < 1e-10


def test_box_partition_additivity():
    box = Box((-0.5, -0.4, -0.6), (0.7, 0.5, 0.3))
    v = LinearPotential(0.5, (0.3, -0.2, 0.7))
    whole = translation_identity_check(U3, E3, v, box, 2, tg(20))
    parts = [translation_identity_check(U3, E3, v, b, 2, tg(20)) for b in box.split(2)]
    for key in ("lhs", "rhs", "residual_correction"):
        assert sum(getattr(p, key) for p in parts) == pytest.approx(getattr(whole, key), abs=1e-8)


def test_swap_roles():
    v = LinearPotential(0.5, (0.3, -0.2, 0.7))
    a = translation_identity_check(U3, E3, v, BALL3, 0, tg(32))
    b = translation_identity_check(E3, U3, v, BALL3, 0, tg(32))
    assert a.rhs == pytest.approx(b.rhs, rel=1e-13)
    assert b.relative_discrepancy < 1e-8
    # only the nonlinear boundary term is not symmetric in (u, eta)
    pts, nu, w = BALL3.boundary_rule(32)
    u, e = U3.value(pts), E3.value(pts)
    diff = -np.sum(w * (u ** 5 * e - e ** 5 * u) * nu[:, 0])
    assert a.lhs - b.lhs == pytest.approx(diff, rel=1e-10, abs=1e-14)


def test_bubble_pair_r5():
    b = Bubble(BubbleParams((0.3, 0.1, 0.0, 0.0, 0.0), 1.0))
    dom = Ball((0.0,) * 5, 2.0)
    zero = ConstantPotential(0.0)
    t = translation_identity_check(b, BubbleCenterDerivative(b, 0), zero, dom, 0, tg(12))
    d = dilation_identity_check(b, BubbleScaleDerivative(b), zero, dom, (0.0,) * 5, tg(12))
    for c in (t, d):
        assert abs(c.residual_correction) < 1e-9
        assert c.discrepancy < 1e-6 * max(abs(c.lhs), 1.0)


def test_exact_pair_residuals_vanish():
    b = Bubble(BubbleParams((0.3, 0.1, 0.0, 0.0, 0.0), 1.7))
    pts = np.random.default_rng(3).normal(size=(200, 5))
    for eta in (BubbleCenterDerivative(b, 2), BubbleScaleDerivative(b)):
        uu, _, _, up, r_u, r_e = _residuals(b, eta, ConstantPotential(0.0), pts)
        assert np.max(np.abs(r_u)) < 1e-10 * np.max(up)
        assert np.max(np.abs(r_e)) < 1e-9 * np.max(np.abs(eta.laplacian(pts)))


def test_negative_base_rejected():
    u = GaussianField(5, 1.0, coeff=-1.0)
    with pytest.raises(ValueError, match="negative base"):
        translation_identity_check(u, u, ConstantPotential(0.0), Ball((0.0,) * 5, 1.0), 0, tg(4))


def _fd_check(field, y, h=1e-5):
    n = y.shape[-1]
    g = field.gradient(y)
    lap = np.zeros(len(y))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        fp, fm, f0 = field.value(y + e), field.value(y - e), field.value(y)
        np.testing.assert_allclose(g[:, i], (fp - fm) / (2 * h), rtol=1e-6, atol=1e-6 * np.max(np.abs(g)))
        lap += (fp - 2 * f0 + fm) / h ** 2
    ref = field.laplacian(y)
    np.testing.assert_allclose(ref, lap, rtol=1e-5, atol=1e-5 * np.max(np.abs(ref)))


@settings(max_examples=15)
@given(st.floats(0.5, 3.0), st.integers(0, 4), st.integers(0, 2 ** 16))
def test_derived_fields_fd(lam, i, seed):
    b = Bubble(BubbleParams((0.2, -0.1, 0.3, 0.0, 0.1), lam))
    y = np.random.default_rng(seed).normal(size=(20, 5))
    for f in (BubbleScaleDerivative(b), BubbleCenterDerivative(b, i), GaussianField(5, lam, (0.1,) * 5)):
        _fd_check(f, y, h=1e-4)
    h = 1e-6
    up = Bubble(BubbleParams(b.params.center, lam + h)).value(y)
    dn = Bubble(BubbleParams(b.params.center, lam - h)).value(y)
    np.testing.assert_allclose(BubbleScaleDerivative(b).value(y), (up - dn) / (2 * h), rtol=1e-6, atol=1e-9)


def test_sector_symmetrized_ring():
    cfg = TowerConfig(m=8, r_bar=0.2, lam=5.0, n=8, t=0.2, mu=50.0, ystar=(0.4, 0.4, 0.4))
    u = symmetrize(m_ring_field(cfg), 8, 7)
    out = sector_boundary_check(u, 8, 0.5, (-0.3, -0.3, 0.2, 0.2, 0.2), (0.3, 0.3, 0.6, 0.6, 0.6), tg(6))
    assert out["max_gradient"] > 1.0
    assert out["relative"] < 1e-8


def test_sector_off_axis_bubble():
    b = Bubble(BubbleParams((0.3, 0.1, 0.0), 2.0))
    out = sector_boundary_check(b, 8, 1.0, (-0.5,), (0.5,), tg(12))
    assert out["plus"] > 0 and out["minus"] > 0 and out["relative"] > 1e-3


def test_sector_constant():
    c = GaussianField(3, 0.0)
    out = sector_boundary_check(c, 6, 1.0, (-1.0,), (1.0,), tg(6))
    assert out["plus"] == out["minus"] == out["relative"] == 0.0


def test_convergence_order_helper():
    assert convergence_order({4: 1.0, 8: 1 / 16}) == pytest.approx(4.0)
    assert convergence_order({4: 1.0, 8: 0.0}) == math.inf
    with pytest.raises(ValueError):
        convergence_order({4: 1.0, 6: 0.5})


def test_row_layout():
    c = translation_identity_check(U3, E3, ONE, BALL3, 0, tg(8))
    row = c.row()
    assert row[0] == "translation" and row[2] == 3 and row[3] == 8 and len(row) == 8
    assert row[7] == c.discrepancy == pytest.approx(abs(c.lhs - c.rhs - c.residual_correction), abs=0)
