"""Closed-form bubble calculus.

Bubbles U_{x,lam}(y) = [N(N-2)]^{(N-2)/4} (lam / (1 + lam^2 |y-x|^2))^{(N-2)/2},
the C^2 cut-off, polygonal ring placement, the two-ring ansatz, group
symmetrization, the weighted sup-norms and the pointwise residual l_n.

Every field works on arrays of points of shape ``(..., N)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


def bubble_constant(n: int) -> float:
    return float(n * (n - 2)) ** ((n - 2) / 4.0)


def critical_exponent(n: int) -> float:
    """2* = 2N/(N-2)."""
    return 2.0 * n / (n - 2)


@dataclass(frozen=True)
class BubbleParams:
    center: tuple
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("bubble scale must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def dimension(self) -> int:
        return len(self.center)


class Field:
    """A scalar field with analytic first and second derivatives."""

    dimension: int

    def value(self, y):
        raise NotImplementedError

    def gradient(self, y):
        raise NotImplementedError

    def laplacian(self, y):
        raise NotImplementedError

    def __call__(self, y):
        return self.value(y)


class Bubble(Field):
    def __init__(self, params: BubbleParams):
        self.params = params
        self.dimension = params.dimension
        self._x = np.asarray(params.center)
        self._c = bubble_constant(self.dimension)

    def _parts(self, y):
        d = np.asarray(y, dtype=float) - self._x
        lam = self.params.scale
        q = 1.0 + lam * lam * np.sum(d * d, axis=-1)
        return d, lam, q

    def value(self, y):
        _, lam, q = self._parts(y)
        a = (self.dimension - 2) / 2.0
        return self._c * lam ** a * q ** (-a)

    def gradient(self, y):
        d, lam, q = self._parts(y)
        u = self.value(y)
        return (-(self.dimension - 2) * lam * lam * u / q)[..., None] * d

    def laplacian(self, y):
        n = self.dimension
        _, lam, q = self._parts(y)
        a = (n - 2) / 2.0
        return -n * (n - 2) * self._c * lam ** (a + 2) * q ** (-a - 2)

    def d_scale(self, y):
        d, lam, q = self._parts(y)
        a = (self.dimension - 2) / 2.0
        rho2 = np.sum(d * d, axis=-1)
        return a * self._c * lam ** (a - 1) * q ** (-a - 1) * (1.0 - lam * lam * rho2)

    def d_center(self, y):
        """Partials with respect to the center coordinates (= -gradient)."""
        return -self.gradient(y)


def eval_bubble(p: BubbleParams, y):
    """Value, gradient and Laplacian of U_{x,lam} at ``y``."""
    b = Bubble(p)
    return b.value(y), b.gradient(y), b.laplacian(y)


def eval_bubble_derivatives(p: BubbleParams, y) -> dict:
    """``{"scale": dU/dlam, "y": (dU/dy_1, ..., dU/dy_N)}`` at ``y``."""
    b = Bubble(p)
    return {"scale": b.d_scale(y), "y": b.gradient(y)}


# ---------------------------------------------------------------------------
# cut-off


def _smoothstep(s):
    return s ** 3 * (10.0 - 15.0 * s + 6.0 * s * s)


def _smoothstep_d1(s):
    return 30.0 * s * s * (1.0 - s) ** 2


def _smoothstep_d2(s):
    return 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s)


@dataclass(frozen=True)
class CutoffSpec:
    """Cut-off equal to 1 within ``delta`` of the anchor (r0, y0*) in the
    reduced variables (|y_hat|, y*) and 0 beyond ``2 delta``.

    ``radial_dim`` is the size of the rotated block y_hat: 4 for potentials
    radial in (y1..y4), 2 for potentials radial in (y1, y2).
    """

    r0: float
    y0: tuple
    delta: float
    radial_dim: int = 4

    def __post_init__(self):
        if not self.r0 > 0 or not self.delta > 0:
            raise ValueError("cut-off needs r0 > 0 and delta > 0")
        if 2.0 * self.delta >= self.r0:
            raise ValueError("cut-off support reaches the axis r = 0; the cut-off would not be C^2")
        object.__setattr__(self, "y0", tuple(float(v) for v in self.y0))

    @property
    def outer_radius(self) -> float:
        return 2.0 * self.delta

    @property
    def dimension(self) -> int:
        return self.radial_dim + len(self.y0)


class Cutoff(Field):
    def __init__(self, spec: CutoffSpec):
        self.spec = spec
        self.dimension = spec.dimension

    def _reduced(self, y):
        y = np.asarray(y, dtype=float)
        k = self.spec.radial_dim
        r = np.linalg.norm(y[..., :k], axis=-1)
        z = y[..., k:] - np.asarray(self.spec.y0)
        dist = np.sqrt((r - self.spec.r0) ** 2 + np.sum(z * z, axis=-1))
        s = np.clip((dist - self.spec.delta) / self.spec.delta, 0.0, 1.0)
        return y, r, z, dist, s

    def value(self, y):
        *_, s = self._reduced(y)
        return np.clip(1.0 - _smoothstep(s), 0.0, 1.0)

    def _grad_dist(self, y, r, z, dist):
        k = self.spec.radial_dim
        safe_d = np.where(dist > 0, dist, 1.0)
        safe_r = np.where(r > 0, r, 1.0)
        g = np.empty_like(y)
        g[..., :k] = (((r - self.spec.r0) / (safe_d * safe_r))[..., None]) * y[..., :k]
        g[..., k:] = z / safe_d[..., None]
        return g

    def gradient(self, y):
        y, r, z, dist, s = self._reduced(y)
        coef = -_smoothstep_d1(s) / self.spec.delta
        return coef[..., None] * self._grad_dist(y, r, z, dist)

    def laplacian(self, y):
        y, r, z, dist, s = self._reduced(y)
        n, k, delta = self.dimension, self.spec.radial_dim, self.spec.delta
        safe_d = np.where(dist > 0, dist, 1.0)
        safe_r = np.where(r > 0, r, 1.0)
        lap_dist = (n - k) / safe_d + (k - 1) * (r - self.spec.r0) / (safe_r * safe_d)
        return -(_smoothstep_d2(s) / delta ** 2 + _smoothstep_d1(s) * lap_dist / delta)


class _One(Field):
    def __init__(self, dimension):
        self.dimension = dimension

    def value(self, y):
        return np.ones(np.shape(y)[:-1])

    def gradient(self, y):
        return np.zeros(np.shape(y))

    def laplacian(self, y):
        return np.zeros(np.shape(y)[:-1])


def smooth_cutoff(c: CutoffSpec, y) -> dict:
    f = Cutoff(c)
    return {"value": f.value(y), "gradient": f.gradient(y), "laplacian": f.laplacian(y)}


# ---------------------------------------------------------------------------
# ring geometry and the ansatz


def polygon_centers(ring: str, k: int, radius: float, tail: Sequence[float] = (),
                    dimension: int | None = None, phase: float = 0.0) -> np.ndarray:
    """``k`` points at angles phase + 2(j-1)pi/k on a circle of ``radius``.

    ``inner_12_plane`` places the circle in (y1, y2), ``inner_34_plane`` in
    (y3, y4); the last ``len(tail)`` coordinates are ``tail``.
    """
    if k < 1 or not radius > 0:
        raise ValueError("need k >= 1 and radius > 0")
    tail = np.asarray(tail, dtype=float)
    if dimension is None:
        dimension = 4 + tail.size
    ang = phase + 2.0 * math.pi * np.arange(k) / k
    pts = np.zeros((k, dimension))
    if ring == "inner_12_plane":
        i = 0
    elif ring == "inner_34_plane":
        i = 2
    else:
        raise ValueError(f"unknown ring {ring!r}")
    pts[:, i] = radius * np.cos(ang)
    pts[:, i + 1] = radius * np.sin(ang)
    if tail.size:
        pts[:, dimension - tail.size:] = tail
    return pts


@dataclass(frozen=True)
class TowerConfig:
    """Two-ring ansatz: ``m`` bubbles of scale ``lam`` on |(y1,y2)| = r_bar and
    ``n`` bubbles of scale ``mu`` on |(y3,y4)| = t, sharing the tail ``ystar``.

    ``m = 0`` drops the first ring; ``n = 1`` is a single bubble at
    (0, 0, t, 0, ystar).  ``cutoff = None`` means the cut-off is identically 1.
    """

    m: int
    r_bar: float
    lam: float
    n: int
    t: float
    mu: float
    ystar: tuple
    cutoff: CutoffSpec | None = None
    dimension: int = 7
    vartheta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "ystar", tuple(float(v) for v in self.ystar))
        if self.dimension < 7:
            raise ValueError("the two-ring construction needs N >= 7")
        if len(self.ystar) != self.dimension - 4:
            raise ValueError("ystar must have N - 4 components")
        if self.m != 0 and (self.m < 2 or self.m % 2):
            raise ValueError("m must be 0 or an even integer >= 2")
        if self.n != 1 and (self.n < 2 or self.n % 2):
            raise ValueError("n must be 1 or an even integer >= 2")
        if not (self.lam > 0 and self.mu > 0 and self.t > 0 and self.r_bar > 0):
            raise ValueError("scales and radii must be positive")
        if self.cutoff is not None and self.vartheta is not None:
            off = math.hypot(self.t - self.cutoff.r0,
                             float(np.linalg.norm(np.subtract(self.ystar, self.cutoff.y0))))
            if off > self.vartheta:
                raise ValueError("(t, ystar) lies outside the vartheta-ball around (r0, y0*)")

    def m_centers(self) -> np.ndarray:
        if self.m == 0:
            return np.zeros((0, self.dimension))
        return polygon_centers("inner_12_plane", self.m, self.r_bar, self.ystar)

    def n_centers(self) -> np.ndarray:
        return polygon_centers("inner_34_plane", self.n, self.t, self.ystar)

    def cutoff_field(self) -> Field:
        return Cutoff(self.cutoff) if self.cutoff is not None else _One(self.dimension)


class BubbleSum(Field):
    """Sum of equal-scale bubbles at ``centers`` (no cut-off)."""

    def __init__(self, centers, scale: float):
        self.centers = np.atleast_2d(np.asarray(centers, dtype=float))
        self.dimension = self.centers.shape[1]
        self.bubbles = [Bubble(BubbleParams(tuple(c), scale)) for c in self.centers]

    def value(self, y):
        return sum((b.value(y) for b in self.bubbles), np.zeros(np.shape(y)[:-1]))

    def gradient(self, y):
        return sum((b.gradient(y) for b in self.bubbles), np.zeros(np.shape(y)))

    def laplacian(self, y):
        return sum((b.laplacian(y) for b in self.bubbles), np.zeros(np.shape(y)[:-1]))

    def power_sum(self, y, p: float):
        return sum((b.value(y) ** p for b in self.bubbles), np.zeros(np.shape(y)[:-1]))


class CutoffProduct(Field):
    """zeta * F with the product rule for derivatives."""

    def __init__(self, cutoff: Field, inner: Field):
        self.cutoff, self.inner = cutoff, inner
        self.dimension = inner.dimension

    def value(self, y):
        return self.cutoff.value(y) * self.inner.value(y)

    def gradient(self, y):
        z, f = self.cutoff.value(y), self.inner.value(y)
        return z[..., None] * self.inner.gradient(y) + f[..., None] * self.cutoff.gradient(y)

    def laplacian(self, y):
        z, f = self.cutoff.value(y), self.inner.value(y)
        cross = np.sum(self.cutoff.gradient(y) * self.inner.gradient(y), axis=-1)
        return z * self.inner.laplacian(y) + 2.0 * cross + f * self.cutoff.laplacian(y)


class SumField(Field):
    def __init__(self, *parts: Field):
        self.parts = parts
        self.dimension = parts[0].dimension

    def value(self, y):
        return sum(p.value(y) for p in self.parts)

    def gradient(self, y):
        return sum(p.gradient(y) for p in self.parts)

    def laplacian(self, y):
        return sum(p.laplacian(y) for p in self.parts)


def m_ring_field(cfg: TowerConfig) -> Field:
    """sum_j zeta U_{x_j, lam}; the leading-order stand-in for u_m."""
    return CutoffProduct(cfg.cutoff_field(), BubbleSum(cfg.m_centers(), cfg.lam))


def n_ring_field(cfg: TowerConfig) -> Field:
    return CutoffProduct(cfg.cutoff_field(), BubbleSum(cfg.n_centers(), cfg.mu))


def ansatz_field(cfg: TowerConfig) -> Field:
    if cfg.m == 0:
        return n_ring_field(cfg)
    return SumField(m_ring_field(cfg), n_ring_field(cfg))


def ansatz_eval(cfg: TowerConfig, y):
    """Value and gradient of the glued two-ring ansatz."""
    f = ansatz_field(cfg)
    return f.value(y), f.gradient(y)


def n_ring_parameter_derivatives(cfg: TowerConfig, y) -> dict:
    """D_{j,1} = dZ_j/dmu, D_{j,2} = dZ_j/dt, D_{j,k} = dZ_j/dystar_k.

    Arrays are indexed ``[j, ...]`` over ring members; the cut-off does not
    depend on the ring parameters so it only multiplies.
    """
    zeta = cfg.cutoff_field().value(y)
    n = cfg.n
    ang = 2.0 * math.pi * np.arange(n) / n
    out_mu, out_t, out_y = [], [], []
    tail0 = cfg.dimension - len(cfg.ystar)
    for j, c in enumerate(cfg.n_centers()):
        b = Bubble(BubbleParams(tuple(c), cfg.mu))
        dc = b.d_center(y)
        out_mu.append(zeta * b.d_scale(y))
        out_t.append(zeta * (dc[..., 2] * math.cos(ang[j]) + dc[..., 3] * math.sin(ang[j])))
        out_y.append(zeta[..., None] * dc[..., tail0:])
    return {"mu": np.array(out_mu), "t": np.array(out_t), "ystar": np.array(out_y)}


# ---------------------------------------------------------------------------
# symmetrization


def _rotation(dimension: int, plane: tuple[int, int], angle: float) -> np.ndarray:
    a = np.eye(dimension)
    i, j = plane
    c, s = math.cos(angle), math.sin(angle)
    a[i, i], a[i, j], a[j, i], a[j, j] = c, -s, s, c
    return a


def symmetry_group(dimension: int, m: int, flips: Sequence[int] = (2,),
                   n: int | None = None) -> list[np.ndarray]:
    """Orthogonal matrices of the group generated by m-fold rotations in
    (y1, y2), optional n-fold rotations in (y3, y4), and the sign flips of the
    listed coordinates (1-based)."""
    flips = tuple(sorted(set(flips)))
    if 1 in flips and 2 in flips and m % 2:
        raise ValueError("flipping both y1 and y2 needs even m")
    if n is not None and 3 in flips and 4 in flips and n % 2:
        raise ValueError("flipping both y3 and y4 needs even n")
    rots = [_rotation(dimension, (0, 1), 2.0 * math.pi * j / m) for j in range(m)]
    if n is not None:
        rots = [a @ _rotation(dimension, (2, 3), 2.0 * math.pi * j / n)
                for a in rots for j in range(n)]
    group = []
    seen = set()
    for a in rots:
        for k in range(len(flips) + 1):
            for subset in itertools.combinations(flips, k):
                b = np.eye(dimension)
                for i in subset:
                    b[i - 1, i - 1] = -1.0
                g = a @ b
                key = tuple(np.round(g, 12).ravel())
                if key not in seen:
                    seen.add(key)
                    group.append(g)
    return group


class Symmetrized(Field):
    """Group average g*(y) = (1/|G|) sum_g f(g y)."""

    def __init__(self, f, group: list[np.ndarray]):
        self.f = f
        self.group = group
        self.dimension = group[0].shape[0]

    def _images(self, y):
        y = np.asarray(y, dtype=float)
        return [y @ g.T for g in self.group]

    def value(self, y):
        f = self.f.value if isinstance(self.f, Field) else self.f
        return sum(f(z) for z in self._images(y)) / len(self.group)

    def gradient(self, y):
        # grad (f o g)(y) = g^T grad f(g y)
        return sum(self.f.gradient(z) @ g for z, g in zip(self._images(y), self.group)) / len(self.group)

    def laplacian(self, y):
        return sum(self.f.laplacian(z) for z in self._images(y)) / len(self.group)


def symmetrize(f, m: int, dimension: int, flips: Sequence[int] = (2,),
               n: int | None = None) -> Symmetrized:
    """Average ``f`` over rotations by 2 pi j/m in (y1, y2) and sign flips."""
    return Symmetrized(f, symmetry_group(dimension, m, flips, n))


# ---------------------------------------------------------------------------
# weighted norms


@dataclass(frozen=True)
class WeightedNormKind:
    variant: str
    centers: tuple
    scale: float
    tau: float | None = None

    def __post_init__(self):
        if self.variant not in ("star", "double_star"):
            raise ValueError(f"unknown norm variant {self.variant!r}")
        centers = tuple(tuple(float(v) for v in c) for c in self.centers)
        object.__setattr__(self, "centers", centers)
        if self.tau is None:
            n = len(centers[0])
            object.__setattr__(self, "tau", (n - 4) / (n - 2))
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")

    @property
    def dimension(self) -> int:
        return len(self.centers[0])

    @property
    def exponents(self) -> tuple[float, float]:
        """(decay exponent of the weight, power of the scale)."""
        n = self.dimension
        base = (n - 2) / 2.0 if self.variant == "star" else (n + 2) / 2.0
        return base + self.tau, base

    def weight(self, y):
        decay, _ = self.exponents
        y = np.asarray(y, dtype=float)
        total = np.zeros(y.shape[:-1])
        for c in self.centers:
            total += (1.0 + self.scale * np.linalg.norm(y - np.asarray(c), axis=-1)) ** (-decay)
        return total


@dataclass(frozen=True)
class NormResult:
    value: float
    point: tuple
    index: int


def weighted_norm(u, cloud, kind: WeightedNormKind) -> NormResult:
    """Sup over ``cloud`` of scale^{-power} |u| / weight.

    ``u`` is a callable on points or an array of values aligned with
    ``cloud``.  Ties go to the first maximizing index.
    """
    cloud = np.atleast_2d(np.asarray(cloud, dtype=float))
    if cloud.shape[0] == 0 or cloud.size == 0:
        raise ValueError("empty sample cloud")
    vals = np.asarray(u(cloud) if callable(u) else u, dtype=float)
    _, power = kind.exponents
    ratio = kind.scale ** (-power) * np.abs(vals) / kind.weight(cloud)
    i = int(np.argmax(ratio))
    return NormResult(float(ratio[i]), tuple(cloud[i]), i)


def _directions(dimension: int, extra: int) -> np.ndarray:
    eye = np.eye(dimension)
    rng = np.random.Generator(np.random.Philox(key=[dimension, extra]))
    g = rng.standard_normal((extra, dimension))
    return np.vstack([eye, -eye, g / np.linalg.norm(g, axis=1, keepdims=True)])


def structured_cloud(centers, scale: float, *, radii=None, extra_directions: int = 16,
                     far_radii=None, origin=None) -> np.ndarray:
    """Deterministic sample cloud for weighted sup-norms.

    Around every center: the center itself plus points at ``radii / scale``
    (default 24 geometric radii between 1e-2 and 1e3) along +-e_i and a fixed
    set of further unit directions.  ``far_radii`` adds points at absolute
    distances from ``origin`` along the same directions.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    n = centers.shape[1]
    if radii is None:
        radii = np.geomspace(1e-2, 1e3, 24)
    dirs = _directions(n, extra_directions)
    shell = (np.asarray(radii)[:, None, None] / scale * dirs[None]).reshape(-1, n)
    parts = [centers]
    for c in centers:
        parts.append(c + shell)
    if far_radii is not None:
        o = np.zeros(n) if origin is None else np.asarray(origin, dtype=float)
        parts.append(o + (np.asarray(far_radii)[:, None, None] * dirs[None]).reshape(-1, n))
    return np.vstack(parts)


# ---------------------------------------------------------------------------
# residual


def _power(u, p):
    if np.any(u < 0) and p != int(p):
        raise ValueError("negative base for fractional power")
    return np.power(u, p)


def eval_residual_ln(cfg: TowerConfig, u_m_proxy: Field | None, y, potential=None):
    """Pointwise residual of u_m + sum_j zeta U_{p_j,mu} with u_m exact.

    (u_m + Z)^{p} - u_m^{p} - zeta sum U_j^{p} - V Z + Z* lap(zeta)
    + 2 grad(zeta) . grad(Z*),  p = 2* - 1, Z* = sum_j U_{p_j,mu}.
    ``potential`` is a callable V(y) on points; ``None`` means V = 0.
    """
    y = np.asarray(y, dtype=float)
    p = critical_exponent(cfg.dimension) - 1.0
    zeta_f = cfg.cutoff_field()
    zeta = zeta_f.value(y)
    star = BubbleSum(cfg.n_centers(), cfg.mu)
    zstar = star.value(y)
    z = zeta * zstar
    um = np.zeros_like(z) if u_m_proxy is None else u_m_proxy.value(y)
    v = np.zeros_like(z) if potential is None else potential(y)
    out = _power(um + z, p) - _power(um, p) - zeta * star.power_sum(y, p) - v * z
    out += zstar * zeta_f.laplacian(y)
    out += 2.0 * np.sum(zeta_f.gradient(y) * star.gradient(y), axis=-1)
    return out
