"""Quadrature checks of the translation and dilation Pohozaev identities.

For u, eta solving -Lap u + V u = u^{2*-1} and its linearisation the
identities balance boundary integrals against volume integrals of V.  For
arbitrary smooth fields they still close once the PDE residuals

    R_u   = -Lap u + V u - u^{2*-1}
    R_eta = -Lap eta + V eta - (2*-1) u^{2*-2} eta

are carried along, which is what makes them testable with any pair of
fields whose derivatives are known in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bubble import Field, _power, critical_exponent
from .numerics import QuadratureSpec, SectorFace


@dataclass(frozen=True)
class IdentityCheck:
    identity: str
    lhs: float
    rhs: float
    residual_correction: float
    discrepancy: float
    relative_discrepancy: float
    domain: str
    dimension: int
    order: int
    direction: int | None = None
    center: tuple | None = None

    def row(self) -> tuple:
        return (self.identity, self.domain, self.dimension, self.order, self.lhs, self.rhs,
                self.residual_correction, self.discrepancy)


def _finish(identity, lhs, rhs, corr, domain, order, **kw) -> IdentityCheck:
    disc = abs(lhs - rhs - corr)
    denom = max(abs(lhs), abs(rhs), 1e-300)
    return IdentityCheck(identity, float(lhs), float(rhs), float(corr), float(disc),
                         float(disc / denom), _describe(domain), domain.dimension, int(order), **kw)


def _describe(domain) -> str:
    return f"{type(domain).__name__.lower()}{tuple(getattr(domain, k) for k in domain.__dataclass_fields__)}"


# ---------------------------------------------------------------------------
# simple fields and potentials


class GaussianField(Field):
    """c exp(-a |y - x|^2)."""

    def __init__(self, dimension: int, a: float = 1.0, center=None, coeff: float = 1.0):
        self.dimension = dimension
        self.a, self.coeff = float(a), float(coeff)
        self.center = np.zeros(dimension) if center is None else np.asarray(center, dtype=float)

    def value(self, y):
        d = np.asarray(y, dtype=float) - self.center
        return self.coeff * np.exp(-self.a * np.sum(d * d, axis=-1))

    def gradient(self, y):
        d = np.asarray(y, dtype=float) - self.center
        return (-2.0 * self.a * self.value(y))[..., None] * d

    def laplacian(self, y):
        d = np.asarray(y, dtype=float) - self.center
        rr = np.sum(d * d, axis=-1)
        return self.value(y) * (4.0 * self.a ** 2 * rr - 2.0 * self.a * self.dimension)


class ZeroField(Field):
    def __init__(self, dimension: int):
        self.dimension = dimension

    def value(self, y):
        return np.zeros(np.shape(y)[:-1])

    def gradient(self, y):
        return np.zeros(np.shape(y))

    def laplacian(self, y):
        return np.zeros(np.shape(y)[:-1])


class BubbleScaleDerivative(Field):
    """dU_{x,lam}/dlam as a field, with its own gradient and Laplacian."""

    def __init__(self, bubble):
        self.b = bubble
        self.dimension = bubble.dimension

    def _parts(self, y):
        d, lam, q = self.b._parts(y)
        return d, lam, q, (self.dimension - 2) / 2.0, self.b._c

    def value(self, y):
        return self.b.d_scale(y)

    def gradient(self, y):
        # f = a c lam^{a-1} (2 q^{-a-1} - q^{-a}),  q = 1 + lam^2 rho^2
        d, lam, q, a, c = self._parts(y)
        dfdq = a * c * lam ** (a - 1) * (-2.0 * (a + 1) * q ** (-a - 2) + a * q ** (-a - 1))
        return (dfdq * 2.0 * lam * lam)[..., None] * d

    def laplacian(self, y):
        d, lam, q, a, c = self._parts(y)
        n = self.dimension
        rho2 = np.sum(d * d, axis=-1)
        f1 = a * c * lam ** (a - 1) * (-2.0 * (a + 1) * q ** (-a - 2) + a * q ** (-a - 1))
        f2 = a * c * lam ** (a - 1) * (2.0 * (a + 1) * (a + 2) * q ** (-a - 3)
                                       - a * (a + 1) * q ** (-a - 2))
        l2 = lam * lam
        return f1 * 2.0 * l2 * n + f2 * 4.0 * l2 * l2 * rho2


class BubbleCenterDerivative(Field):
    """dU/dy_i = -(dU/dx_i) for a bubble, as a field."""

    def __init__(self, bubble, i: int):
        self.b, self.i = bubble, int(i)
        self.dimension = bubble.dimension

    def value(self, y):
        return self.b.gradient(y)[..., self.i]

    def gradient(self, y):
        # U = c lam^a q^{-a}; dU/dy_i = -2 a c lam^{a+2} q^{-a-1} d_i
        d, lam, q = self.b._parts(y)
        a = (self.dimension - 2) / 2.0
        k = -2.0 * a * self.b._c * lam ** (a + 2)
        g1 = k * q ** (-a - 1)
        g2 = k * (-a - 1) * q ** (-a - 2) * 2.0 * lam * lam
        out = (g2 * d[..., self.i])[..., None] * d
        out[..., self.i] += g1
        return out

    def laplacian(self, y):
        # the Laplacian commutes with d/dy_i
        d, lam, q = self.b._parts(y)
        n = self.dimension
        a = (n - 2) / 2.0
        k = -n * (n - 2) * self.b._c * lam ** (a + 2)
        return k * (-a - 2) * q ** (-a - 3) * 2.0 * lam * lam * d[..., self.i]


@dataclass(frozen=True)
class ConstantPotential:
    c: float = 0.0

    def value(self, y):
        return np.full(np.shape(y)[:-1], float(self.c))

    def gradient(self, y):
        return np.zeros(np.shape(y))


class LinearPotential:
    """V(y) = c0 + <g, y>, a potential with nonzero gradient for the checks."""

    def __init__(self, c0: float, g):
        self.c0, self.g = float(c0), np.asarray(g, dtype=float)

    def value(self, y):
        return self.c0 + np.asarray(y, dtype=float) @ self.g

    def gradient(self, y):
        return np.broadcast_to(self.g, np.shape(y)).copy()


# ---------------------------------------------------------------------------
# the identities


def _residuals(u, eta, v, y):
    n = u.dimension
    p = critical_exponent(n) - 1.0
    uu, ee, vv = u.value(y), eta.value(y), v.value(y)
    up = _power(uu, p)
    r_u = -u.laplacian(y) + vv * uu - up
    r_e = -eta.laplacian(y) + vv * ee - p * _power(uu, p - 1.0) * ee
    return uu, ee, vv, up, r_u, r_e


def _order(spec) -> int:
    return int((spec or QuadratureSpec("tensor_gauss", 24)).order_or_samples)


def translation_identity_check(u: Field, eta: Field, v, domain, i: int,
                               spec: QuadratureSpec | None = None) -> IdentityCheck:
    """Boundary side (five terms) against int d_iV u eta, plus the residual
    correction int (R_u d_i eta + R_eta d_i u)."""
    order = _order(spec)
    y, w = domain.volume_rule(order)
    uu, ee, _, _, r_u, r_e = _residuals(u, eta, v, y)
    gu, ge = u.gradient(y), eta.gradient(y)
    rhs = np.sum(w * v.gradient(y)[:, i] * uu * ee)
    corr = np.sum(w * (r_u * ge[:, i] + r_e * gu[:, i]))

    b, nu, wb = domain.boundary_rule(order)
    ub, eb, vb, upb, _, _ = _residuals(u, eta, v, b)
    gub, geb = u.gradient(b), eta.gradient(b)
    dnu_u = np.sum(gub * nu, axis=1)
    dnu_e = np.sum(geb * nu, axis=1)
    terms = (-dnu_u * geb[:, i] - dnu_e * gub[:, i] + np.sum(gub * geb, axis=1) * nu[:, i]
             + vb * ub * eb * nu[:, i] - upb * eb * nu[:, i])
    lhs = np.sum(wb * terms)
    return _finish("translation", lhs, rhs, corr, domain, order, direction=int(i))


def dilation_identity_check(u: Field, eta: Field, v, domain, x0,
                            spec: QuadratureSpec | None = None) -> IdentityCheck:
    """Volume side int u eta <grad V, y-x0> + 2 int V u eta against the seven
    boundary terms.

    For arbitrary fields (boundary side) - (volume side) equals
    C1 + (N-2)/2 C2 with C1 = int (R_u <grad eta, w> + R_eta <grad u, w>)
    and C2 = int (R_u eta + R_eta u), w = y - x0; the second piece enters
    through the substitution for int <grad u, grad eta>.  Since ``lhs`` is
    the volume side here, ``residual_correction`` is -(C1 + (N-2)/2 C2).
    """
    order = _order(spec)
    n = u.dimension
    x0 = np.asarray(x0, dtype=float)
    y, w = domain.volume_rule(order)
    uu, ee, vv, _, r_u, r_e = _residuals(u, eta, v, y)
    gu, ge = u.gradient(y), eta.gradient(y)
    d = y - x0
    lhs = np.sum(w * (uu * ee * np.sum(v.gradient(y) * d, axis=1) + 2.0 * vv * uu * ee))
    c1 = np.sum(w * (r_u * np.sum(ge * d, axis=1) + r_e * np.sum(gu * d, axis=1)))
    c2 = np.sum(w * (r_u * ee + r_e * uu))
    corr = -(c1 + 0.5 * (n - 2) * c2)

    b, nu, wb = domain.boundary_rule(order)
    ub, eb, vb, upb, _, _ = _residuals(u, eta, v, b)
    gub, geb = u.gradient(b), eta.gradient(b)
    db = b - x0
    nd = np.sum(nu * db, axis=1)
    dnu_u = np.sum(gub * nu, axis=1)
    dnu_e = np.sum(geb * nu, axis=1)
    terms = (-upb * eb * nd - dnu_u * np.sum(geb * db, axis=1) - dnu_e * np.sum(gub * db, axis=1)
             + np.sum(gub * geb, axis=1) * nd + vb * ub * eb * nd
             + 0.5 * (2 - n) * (eb * dnu_u + ub * dnu_e))
    rhs = np.sum(wb * terms)
    return _finish("dilation", lhs, rhs, corr, domain, order, center=tuple(float(c) for c in x0))


def sector_boundary_check(u: Field, m: int, rho_max: float, lower=(), upper=(),
                          spec: QuadratureSpec | None = None) -> dict:
    """Largest |d u / d nu| on the two flat faces theta = +-pi/m of the
    truncated sector, absolute and relative to the largest |grad u| there."""
    order = _order(spec)
    out = {}
    gmax = 0.0
    for name, side in (("minus", -1), ("plus", 1)):
        pts, nu, _ = SectorFace(m, side, rho_max, tuple(lower), tuple(upper)).boundary_rule(order)
        g = u.gradient(pts)
        out[name] = float(np.max(np.abs(np.sum(g * nu, axis=1))))
        gmax = max(gmax, float(np.max(np.linalg.norm(g, axis=1))))
    out["max_gradient"] = gmax
    worst = max(out["plus"], out["minus"])
    out["relative"] = worst / gmax if gmax > 0 else 0.0
    return out


def convergence_order(errors_by_order: dict) -> float:
    """Observed algebraic order log2(e(q) / e(2q)) from the first doubling pair."""
    qs = sorted(errors_by_order)
    for a in qs:
        if 2 * a in errors_by_order:
            ea, eb = errors_by_order[a], errors_by_order[2 * a]
            if eb == 0.0:
                return math.inf
            return math.log2(ea / eb)
    raise ValueError("no order pair (q, 2q) available")
