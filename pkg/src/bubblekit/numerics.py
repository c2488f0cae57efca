"""Deterministic quadrature kernels: radial Gauss rules, importance-sampled
Monte Carlo on counter-based streams, and tensor rules on simple domains."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.special

METHODS = ("radial_gauss", "tensor_gauss", "monte_carlo")


class QuadratureError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureSpec:
    """How an integral is evaluated.

    ``order_or_samples`` is the Gauss order for the deterministic rules and the
    sample count for ``monte_carlo``.  ``importance_scale`` is the concentration
    rate used for every importance center.
    """

    method: str = "radial_gauss"
    order_or_samples: int = 64
    seed: int = 0
    importance_centers: tuple = ()
    importance_scale: float = 1.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise QuadratureError(f"unknown quadrature method {self.method!r}")
        if int(self.order_or_samples) < 1:
            raise QuadratureError("order_or_samples must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise QuadratureError("seed must be a 64-bit unsigned integer")
        if self.importance_scale <= 0:
            raise QuadratureError("importance_scale must be positive")
        centers = tuple(tuple(float(c) for c in p) for p in self.importance_centers)
        object.__setattr__(self, "importance_centers", centers)

    def fingerprint(self) -> str:
        text = repr((self.method, int(self.order_or_samples), int(self.seed),
                     self.importance_centers, float(self.importance_scale)))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class IntegralResult:
    value: float
    error_estimate: float
    samples_used: int

    def __post_init__(self):
        if not self.error_estimate >= 0:
            raise QuadratureError("error_estimate must be nonnegative")


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n, i.e. omega_{n-1}."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def _checked(values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise QuadratureError("non-finite integrand")
    return values


@lru_cache(maxsize=64)
def _legendre(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def gauss_legendre(order: int, a: float = -1.0, b: float = 1.0):
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = _legendre(int(order))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


# ---------------------------------------------------------------------------
# radial integrals


def _radial_compactified(f, n: int, order: int, scale: float) -> tuple[float, int]:
    s, w = gauss_legendre(order, 0.0, 1.0)
    r = scale * s / (1.0 - s)
    jac = scale / (1.0 - s) ** 2
    vals = _checked(f(r))
    return float(np.sum(w * jac * vals * r ** (n - 1))), order


def _radial_panels(f, n: int, order: int, scale: float) -> tuple[float, int]:
    # composite Gauss on geometric panels out to scale * 2**44
    edges = np.concatenate(([0.0], scale * 2.0 ** np.arange(-12, 45)))
    x, w = _legendre(order)
    a, b = edges[:-1, None], edges[1:, None]
    r = (a + 0.5 * (b - a) * (x + 1.0)).ravel()
    ww = (0.5 * (b - a) * w).ravel()
    vals = _checked(f(r))
    return float(np.sum(ww * vals * r ** (n - 1))), r.size


def integrate_radial(f: Callable, dimension: int, spec: QuadratureSpec | None = None,
                     *, scale: float = 1.0) -> IntegralResult:
    """Integrate a radial function g(|y|) over R^N.

    ``f`` maps an array of radii to profile values.  With ``radial_gauss`` the
    half-line is compactified by r = scale * s/(1-s); ``tensor_gauss`` uses a
    composite rule on geometric panels instead, which makes it an independent
    cross-check.  The error estimate is the change under order doubling.
    """
    spec = spec or QuadratureSpec()
    if dimension < 1:
        raise QuadratureError("dimension must be positive")
    if spec.method == "radial_gauss":
        rule = _radial_compactified
    elif spec.method == "tensor_gauss":
        rule = _radial_panels
    else:
        raise QuadratureError("integrate_radial needs a Gauss method")
    order = int(spec.order_or_samples)
    low, n_low = rule(f, dimension, order, scale)
    high, n_high = rule(f, dimension, 2 * order, scale)
    area = sphere_area(dimension)
    return IntegralResult(area * high, area * abs(high - low), n_low + n_high)


# ---------------------------------------------------------------------------
# Monte Carlo


SHARD_SIZE = 1 << 16


def _stream(seed: int, shard: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([int(seed), int(shard)], dtype=np.uint64)))


class MixtureSampler:
    """Heavy-tailed mixture density for bubble-concentrated integrands.

    Each narrow component is proportional to (1 + s^2 |y - p_j|^2)^(-(N+2)/2),
    i.e. a multivariate t law with two degrees of freedom; a broad component of
    the same family centred at the centroid catches the far field.
    """

    def __init__(self, dimension: int, centers: Sequence, scale: float,
                 broad_weight: float = 0.1, broad_scale: float | None = None):
        self.dimension = n = int(dimension)
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        if centers.size == 0:
            centers = np.zeros((1, n))
        if centers.shape[1] != n:
            raise QuadratureError("importance center dimension mismatch")
        centroid = centers.mean(axis=0)
        spread = float(np.max(np.linalg.norm(centers - centroid, axis=1)))
        if broad_scale is None:
            broad_scale = min(1.0, 1.0 / scale) + spread
        self.locs = np.vstack([centers, centroid])
        # sigma of the t law: (1 + s^2 r^2) == (1 + r^2 / (2 sigma^2))
        self.sigmas = np.concatenate([np.full(len(centers), 1.0 / (math.sqrt(2.0) * scale)),
                                      [broad_scale / math.sqrt(2.0)]])
        narrow = (1.0 - broad_weight) / len(centers)
        self.weights = np.concatenate([np.full(len(centers), narrow), [broad_weight]])
        self.cumulative = np.concatenate([[0.0], np.cumsum(self.weights)])
        self.cumulative[-1] = 1.0
        nu = 2.0
        self._lognorm = (math.lgamma((nu + n) / 2) - math.lgamma(nu / 2)
                         - 0.5 * n * math.log(nu * math.pi))

    def pdf(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        n = self.dimension
        total = np.zeros(y.shape[:-1])
        for loc, sig, w in zip(self.locs, self.sigmas, self.weights):
            s = np.sum((y - loc) ** 2, axis=-1) / (2.0 * sig * sig)
            total += w * np.exp(self._lognorm - n * math.log(sig)
                                - 0.5 * (n + 2) * np.log1p(s))
        return total

    def sample(self, u: np.ndarray, gauss: np.ndarray) -> np.ndarray:
        """Map stratified uniforms ``u`` and normals ``gauss`` to points.

        ``u`` picks the component and, rescaled inside that component's
        slice, the radial quantile; ``gauss`` supplies the direction.
        """
        n = self.dimension
        comp = np.searchsorted(self.cumulative, u, side="right") - 1
        comp = np.clip(comp, 0, len(self.weights) - 1)
        q = (u - self.cumulative[comp]) / self.weights[comp]
        q = np.clip(q, 1e-300, 1.0 - 1e-16)
        # |x|^2/(2 sigma^2) = w/(1-w) with w ~ Beta(N/2, 1)
        w = q ** (2.0 / n)
        radius = self.sigmas[comp] * np.sqrt(2.0 * w / (1.0 - w))
        direction = gauss / np.linalg.norm(gauss, axis=1, keepdims=True)
        return self.locs[comp] + radius[:, None] * direction


def integrate_mc(f: Callable, dimension: int, spec: QuadratureSpec, *,
                 broad_weight: float = 0.1, broad_scale: float | None = None,
                 control: Callable | None = None, control_integral: float = 0.0,
                 shard_size: int = SHARD_SIZE) -> IntegralResult:
    """Importance-sampled Monte Carlo over R^N.

    Samples are stratified along the mixture's inverse CDF (one sample per
    stratum) and drawn shard by shard from Philox streams keyed by
    ``(seed, shard)``, so the result does not depend on how shards are
    scheduled.  The error estimate is the standard error of the stratified
    estimator, from squared differences of neighbouring strata.

    ``control`` is an optional control variate with known integral
    ``control_integral``; the estimator then integrates ``f - control``.
    """
    if spec.method != "monte_carlo":
        raise QuadratureError("integrate_mc requires method='monte_carlo'")
    total = int(spec.order_or_samples)
    sampler = MixtureSampler(dimension, spec.importance_centers or [np.zeros(dimension)],
                             spec.importance_scale, broad_weight, broad_scale)
    sums = []
    sq_pairs = []
    for shard, start in enumerate(range(0, total, shard_size)):
        count = min(shard_size, total - start)
        rng = _stream(spec.seed, shard)
        u = (start + np.arange(count) + rng.random(count)) / total
        y = sampler.sample(u, rng.standard_normal((count, dimension)))
        dens = sampler.pdf(y)
        if not np.all(dens > 0.0):
            raise QuadratureError("sampler support mismatch")
        vals = _checked(f(y))
        if control is not None:
            vals = vals - _checked(control(y))
        g = vals / dens
        sums.append(math.fsum(g))
        even = count - count % 2
        diff = g[0:even:2] - g[1:even:2]
        sq_pairs.append(math.fsum(diff * diff))
    value = math.fsum(sums) / total + control_integral
    if total < 2:
        err = abs(value)
    else:
        err = math.sqrt(math.fsum(sq_pairs)) / total
    return IntegralResult(value, err, total)


# ---------------------------------------------------------------------------
# domains and their tensor rules


def sphere_rule(dimension: int, order: int):
    """Points and weights on the unit sphere S^{N-1} in R^N."""
    if dimension == 1:
        return np.array([[-1.0], [1.0]]), np.array([1.0, 1.0])
    m = 2 * order
    ang = 2.0 * math.pi * np.arange(m) / m
    pts = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    wts = np.full(m, 2.0 * math.pi / m)
    for k in range(2, dimension):
        alpha = (k - 2) / 2.0
        if alpha == 0:
            t, wt = _legendre(order)
        else:
            t, wt = scipy.special.roots_jacobi(order, alpha, alpha)
        c = np.sqrt(1.0 - t * t)
        pts = np.concatenate([(c[:, None, None] * pts[None]).reshape(-1, k),
                              np.repeat(t, len(wts))[:, None]], axis=1)
        wts = (wt[:, None] * wts[None]).ravel()
    return pts, wts


def _tensor(rules):
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrid = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    w = np.prod(np.stack([g.ravel() for g in wgrid], axis=1), axis=1)
    return pts, w


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    @property
    def dimension(self) -> int:
        return len(self.center)

    def volume_rule(self, order: int):
        n = self.dimension
        r, wr = gauss_legendre(order, 0.0, self.radius)
        dirs, wd = sphere_rule(n, order)
        pts = (r[:, None, None] * dirs[None]).reshape(-1, n) + np.asarray(self.center)
        w = ((wr * r ** (n - 1))[:, None] * wd[None]).ravel()
        return pts, w

    def boundary_rule(self, order: int):
        n = self.dimension
        dirs, wd = sphere_rule(n, order)
        return (np.asarray(self.center) + self.radius * dirs, dirs,
                wd * self.radius ** (n - 1))


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple

    @property
    def dimension(self) -> int:
        return len(self.lower)

    def volume_rule(self, order: int):
        return _tensor([gauss_legendre(order, a, b) for a, b in zip(self.lower, self.upper)])

    def boundary_rule(self, order: int):
        n = self.dimension
        pts, nrm, wts = [], [], []
        for k in range(n):
            others = [gauss_legendre(order, a, b)
                      for i, (a, b) in enumerate(zip(self.lower, self.upper)) if i != k]
            if others:
                face, w = _tensor(others)
            else:
                face, w = np.zeros((1, 0)), np.ones(1)
            for value, sign in ((self.lower[k], -1.0), (self.upper[k], 1.0)):
                p = np.insert(face, k, value, axis=1)
                nu = np.zeros_like(p)
                nu[:, k] = sign
                pts.append(p)
                nrm.append(nu)
                wts.append(w)
        return np.concatenate(pts), np.concatenate(nrm), np.concatenate(wts)

    def split(self, pieces: int = 2) -> list["Box"]:
        """Partition into pieces**N congruent sub-boxes."""
        edges = [np.linspace(a, b, pieces + 1) for a, b in zip(self.lower, self.upper)]
        out = []
        for idx in np.ndindex(*(pieces,) * self.dimension):
            out.append(Box(tuple(float(e[i]) for e, i in zip(edges, idx)),
                           tuple(float(e[i + 1]) for e, i in zip(edges, idx))))
        return out


@dataclass(frozen=True)
class SectorFace:
    """Flat face theta = side * pi/m of the sector around the positive y1 axis,
    truncated to rho <= rho_max and the box ``lower``..``upper`` in y3..yN."""

    m: int
    side: int
    rho_max: float
    lower: tuple = ()
    upper: tuple = ()

    @property
    def dimension(self) -> int:
        return 2 + len(self.lower)

    def normal(self) -> np.ndarray:
        th = self.side * math.pi / self.m
        nu = np.zeros(self.dimension)
        nu[0], nu[1] = -math.sin(abs(th)), math.copysign(math.cos(th), self.side)
        return nu

    def boundary_rule(self, order: int):
        th = self.side * math.pi / self.m
        rules = [gauss_legendre(order, 0.0, self.rho_max)]
        rules += [gauss_legendre(order, a, b) for a, b in zip(self.lower, self.upper)]
        grid, w = _tensor(rules)
        rho = grid[:, 0]
        pts = np.concatenate([np.stack([rho * math.cos(th), rho * math.sin(th)], axis=1),
                              grid[:, 1:]], axis=1)
        return pts, np.tile(self.normal(), (len(pts), 1)), w


@dataclass(frozen=True)
class Sector:
    """Truncated fundamental sector {|theta| <= pi/m, rho <= rho_max} x box."""

    m: int
    rho_max: float
    lower: tuple = ()
    upper: tuple = ()

    @property
    def dimension(self) -> int:
        return 2 + len(self.lower)

    def _polar(self, rho, th, rest):
        return np.concatenate([np.stack([rho * np.cos(th), rho * np.sin(th)], axis=1), rest],
                              axis=1)

    def volume_rule(self, order: int):
        half = math.pi / self.m
        rules = [gauss_legendre(order, 0.0, self.rho_max), gauss_legendre(order, -half, half)]
        rules += [gauss_legendre(order, a, b) for a, b in zip(self.lower, self.upper)]
        grid, w = _tensor(rules)
        return self._polar(grid[:, 0], grid[:, 1], grid[:, 2:]), w * grid[:, 0]

    def boundary_rule(self, order: int):
        half = math.pi / self.m
        n = self.dimension
        pts, nrm, wts = [], [], []
        for side in (-1, 1):
            p, nu, w = SectorFace(self.m, side, self.rho_max, self.lower, self.upper).boundary_rule(order)
            pts.append(p); nrm.append(nu); wts.append(w)
        # curved face rho = rho_max
        rules = [gauss_legendre(order, -half, half)]
        rules += [gauss_legendre(order, a, b) for a, b in zip(self.lower, self.upper)]
        grid, w = _tensor(rules)
        th = grid[:, 0]
        p = self._polar(np.full(len(th), self.rho_max), th, grid[:, 1:])
        nu = np.zeros_like(p)
        nu[:, 0], nu[:, 1] = np.cos(th), np.sin(th)
        pts.append(p); nrm.append(nu); wts.append(w * self.rho_max)
        # flat faces of the transverse box
        for k in range(n - 2):
            others = [gauss_legendre(order, 0.0, self.rho_max), gauss_legendre(order, -half, half)]
            others += [gauss_legendre(order, a, b)
                       for i, (a, b) in enumerate(zip(self.lower, self.upper)) if i != k]
            grid, w = _tensor(others)
            for value, sign in ((self.lower[k], -1.0), (self.upper[k], 1.0)):
                rest = np.insert(grid[:, 2:], k, value, axis=1)
                p = self._polar(grid[:, 0], grid[:, 1], rest)
                nu = np.zeros_like(p)
                nu[:, 2 + k] = sign
                pts.append(p); nrm.append(nu); wts.append(w * grid[:, 0])
        return np.concatenate(pts), np.concatenate(nrm), np.concatenate(wts)


def surface_integrate(f: Callable, boundary, spec: QuadratureSpec | None = None) -> IntegralResult:
    """Integrate ``f(points, normals)`` over a boundary with outward normals.

    ``boundary`` is a :class:`Ball`, :class:`Box`, :class:`Sector` or
    :class:`SectorFace`.  Error is the change under order doubling.
    """
    spec = spec or QuadratureSpec("tensor_gauss", 24)
    if not hasattr(boundary, "boundary_rule"):
        raise QuadratureError(f"unsupported boundary kind {type(boundary).__name__}")
    order = int(spec.order_or_samples)
    results = []
    used = 0
    for q in (order, 2 * order):
        pts, nrm, w = boundary.boundary_rule(q)
        vals = _checked(f(pts, nrm))
        results.append(float(np.sum(w * vals)))
        used += len(w)
    return IntegralResult(results[1], abs(results[1] - results[0]), used)


def volume_integrate(f: Callable, domain, spec: QuadratureSpec | None = None) -> IntegralResult:
    """Tensor-rule volume integral of ``f(points)`` over ``domain``."""
    spec = spec or QuadratureSpec("tensor_gauss", 24)
    order = int(spec.order_or_samples)
    results = []
    used = 0
    for q in (order, 2 * order):
        pts, w = domain.volume_rule(q)
        results.append(float(np.sum(w * _checked(f(pts)))))
        used += len(w)
    return IntegralResult(results[1], abs(results[1] - results[0]), used)
