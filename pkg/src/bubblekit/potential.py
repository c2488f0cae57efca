"""Potentials V(r, y*) and the auditor for the concentration assumptions.

A potential depends on r = |y_hat| and on the tail variables y*.  Two
symmetry classes are supported: ``four_dim_radial`` (y_hat = y1..y4, tail
y5..yN) and ``two_dim_radial`` (y_hat = y1, y2, tail y3..yN).  Derivatives
are indexed by count tuples over (r, tail_1, ..., tail_k).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import sympy
from sympy.parsing.sympy_parser import (parse_expr, rationalize,
                                        standard_transformations)

SYMMETRIES = {"four_dim_radial": 4, "two_dim_radial": 2}


class PotentialError(ValueError):
    pass


class CriticalPointError(RuntimeError):
    pass


class DegenerateCriticalPoint(CriticalPointError):
    pass


class Potential:
    """An evaluable V(r, y*) with derivatives up to order 3.

    ``func(r, ystar)`` takes arrays (``ystar`` with trailing axis of length
    ``tail_dim``).  ``derivative(r, ystar, counts)`` is optional; without it
    derivatives come from Richardson-extrapolated central differences.
    Derivatives are only served inside the ball of radius ``radius`` around
    ``center``.
    """

    def __init__(self, func: Callable, tail_dim: int, *, symmetry: str = "four_dim_radial",
                 derivative: Callable | None = None, center=None, radius: float = math.inf,
                 name: str = "custom", text: str | None = None, default_guess=None):
        if symmetry not in SYMMETRIES:
            raise PotentialError(f"unknown symmetry {symmetry!r}")
        self.func = func
        self.tail_dim = int(tail_dim)
        self.symmetry = symmetry
        self._derivative = derivative
        self.center = None if center is None else np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.name = name
        self.text = text
        self.default_guess = default_guess

    @property
    def radial_dim(self) -> int:
        return SYMMETRIES[self.symmetry]

    @property
    def dimension(self) -> int:
        return self.radial_dim + self.tail_dim

    @property
    def has_analytic_derivatives(self) -> bool:
        return self._derivative is not None

    def value(self, r, ystar=()):
        ystar = np.asarray(ystar, dtype=float)
        return self.func(np.asarray(r, dtype=float), ystar)

    def in_neighborhood(self, point) -> bool:
        if self.center is None or math.isinf(self.radius):
            return True
        return float(np.linalg.norm(np.asarray(point, dtype=float) - self.center)) <= self.radius

    def derivative(self, r: float, ystar, counts: Sequence[int], *, method: str = "auto") -> float:
        counts = tuple(int(c) for c in counts)
        if len(counts) != 1 + self.tail_dim:
            raise PotentialError("multi-index must have one entry per (r, y*) variable")
        order = sum(counts)
        if order > 3 or min(counts) < 0:
            raise PotentialError("derivative order must be between 0 and 3")
        point = np.concatenate([[r], np.asarray(ystar, dtype=float)])
        if order == 0:
            return float(self.value(r, ystar))
        if not self.in_neighborhood(point):
            raise PotentialError("point outside the declared neighborhood")
        if method == "auto":
            method = "analytic" if self._derivative is not None else "fd"
        if method == "analytic":
            if self._derivative is None:
                raise PotentialError("no analytic derivatives for this potential")
            return float(self._derivative(r, np.asarray(ystar, dtype=float), counts))
        return self._fd(point, counts)

    def _fd_step(self, point, order: int) -> float:
        base = self.radius if math.isfinite(self.radius) else 0.1 * max(1.0, float(np.max(np.abs(point))))
        return base * {1: 1e-4, 2: 1e-2, 3: 5e-2}[order]

    def _fd(self, point, counts) -> float:
        # nested central stencils; each is O(h^2) so one Richardson step
        h = self._fd_step(point, sum(counts))
        axes = [i for i, c in enumerate(counts) for _ in range(c)]

        def stencil(step):
            pts = [(point.copy(), 1.0)]
            for ax in axes:
                nxt = []
                for p, w in pts:
                    for sgn in (1.0, -1.0):
                        q = p.copy()
                        q[ax] += sgn * step
                        nxt.append((q, sgn * w / (2.0 * step)))
                pts = nxt
            arr = np.array([p for p, _ in pts])
            wts = np.array([w for _, w in pts])
            vals = np.asarray(self.value(arr[:, 0], arr[:, 1:]), dtype=float)
            return math.fsum(wts * np.broadcast_to(vals, wts.shape))

        coarse, fine = stencil(h), stencil(h / 2.0)
        return (4.0 * fine - coarse) / 3.0

    def field(self, y):
        """V evaluated at points y in R^N."""
        y = np.asarray(y, dtype=float)
        k = self.radial_dim
        return self.value(np.linalg.norm(y[..., :k], axis=-1), y[..., k:])

    def scaled(self, c: float) -> "Potential":
        """The potential c V."""
        d = self._derivative
        return Potential(lambda r, ys: c * self.func(r, ys), self.tail_dim, symmetry=self.symmetry,
                         derivative=None if d is None else (lambda r, ys, k: c * d(r, ys, k)),
                         center=self.center, radius=self.radius, name=f"{c}*{self.name}",
                         default_guess=self.default_guess)


def eval_V(p: Potential, point, counts: Sequence[int] | None = None, *, method: str = "auto") -> float:
    """V or one of its partial derivatives at ``point = (r, y5, ..., yN)``."""
    point = np.asarray(point, dtype=float)
    if counts is None:
        counts = (0,) * point.size
    return p.derivative(point[0], point[1:], counts, method=method)


# ---------------------------------------------------------------------------
# polynomial potentials


def tail_names(symmetry: str, dimension: int) -> list[str]:
    first = SYMMETRIES[symmetry] + 1
    return [f"y{i}" for i in range(first, dimension + 1)]


def polynomial_potential(text: str, dimension: int, *, symmetry: str = "four_dim_radial",
                         center=None, radius: float = math.inf, name: str | None = None,
                         default_guess=None) -> Potential:
    """Parse a polynomial in r and the tail variables with exact rationals.

    Decimal literals are converted to rationals before any arithmetic, so
    ``0.1`` means exactly 1/10.  A leading ``V =`` is accepted.
    """
    body = text.strip()
    if body.replace(" ", "").upper().startswith("V="):
        body = body.split("=", 1)[1]
    names = tail_names(symmetry, dimension)
    syms = sympy.symbols(["r"] + names, real=True)
    local = {s.name: s for s in syms}
    try:
        expr = parse_expr(body, local_dict=local,
                          transformations=standard_transformations + (rationalize,))
    except Exception as exc:  # sympy raises a zoo of types here
        raise PotentialError(f"cannot parse potential {body!r}: {exc}") from exc
    expr = sympy.sympify(expr)
    unknown = sorted(s.name for s in expr.free_symbols if s.name not in local)
    if unknown:
        raise PotentialError(f"unknown variables in potential: {', '.join(unknown)}")
    try:
        sympy.Poly(expr, *syms)
    except sympy.PolynomialError as exc:
        raise PotentialError(f"potential is not a polynomial: {body!r}") from exc

    @lru_cache(maxsize=None)
    def compiled(counts):
        e = expr
        for s, c in zip(syms, counts):
            if c:
                e = sympy.diff(e, s, c)
        return sympy.lambdify(syms, e, "numpy")

    k = len(names)

    def call(counts, r, ystar):
        ystar = np.asarray(ystar, dtype=float)
        args = [r] + [ystar[..., i] for i in range(k)]
        out = compiled(counts)(*args)
        return np.broadcast_to(np.asarray(out, dtype=float), np.shape(r)).copy() if np.ndim(r) else float(out)

    if default_guess is None:
        default_guess = (1.0,) + (0.0,) * k
    pot = Potential(lambda r, ys: call((0,) * (k + 1), r, ys), k, symmetry=symmetry,
                    derivative=lambda r, ys, counts: call(tuple(counts), r, ys),
                    center=center, radius=radius, name=name or body, text=body,
                    default_guess=default_guess)
    pot.expr = expr
    pot.symbols = syms
    return pot


def example_critical_point(dimension: int) -> tuple[float, np.ndarray]:
    r0 = math.sqrt(1.0 / (8 * dimension - 34))
    return r0, np.full(dimension - 4, 2.0 * r0)


def builtin_example_potential(dimension: int) -> Potential:
    """V = r^2 - 4 r sum(y_j) + sum(y_j^2) + 1, j = 5..N, declared on the ball
    of radius r0 around its critical point (r0, 2 r0, ..., 2 r0)."""
    if dimension < 7:
        raise PotentialError("the built-in example needs N >= 7")
    names = tail_names("four_dim_radial", dimension)
    text = f"r**2 - 4*r*({' + '.join(names)}) + ({' + '.join(n + '**2' for n in names)}) + 1"
    r0, y0 = example_critical_point(dimension)
    center = np.concatenate([[r0], y0])
    guess = tuple(float(f"{v:.2g}") for v in center)
    return polynomial_potential(text, dimension, center=center, radius=r0,
                                name="builtin:appendix_d", default_guess=guess)


def resolve_potential(spec: str, dimension: int, symmetry: str = "four_dim_radial") -> Potential:
    """``builtin:appendix_d`` or a polynomial expression."""
    if spec.strip().startswith("builtin:"):
        key = spec.strip().split(":", 1)[1]
        if key != "appendix_d":
            raise PotentialError(f"unknown builtin potential {key!r}")
        return builtin_example_potential(dimension)
    return polynomial_potential(spec, dimension, symmetry=symmetry)


# ---------------------------------------------------------------------------
# f = r^2 V and its critical points


def _grad_hess_f(p: Potential, z: np.ndarray):
    k = p.tail_dim
    r, ys = z[0], z[1:]
    nvar = k + 1

    def d(*idx):
        counts = [0] * nvar
        for i in idx:
            counts[i] += 1
        return p.derivative(r, ys, counts)

    v = d()
    dv = np.array([d(i) for i in range(nvar)])
    hv = np.array([[d(i, j) for j in range(nvar)] for i in range(nvar)])
    grad = r * r * dv
    grad[0] += 2.0 * r * v
    hess = r * r * hv
    hess[0, :] += 2.0 * r * dv
    hess[:, 0] += 2.0 * r * dv
    hess[0, 0] += 2.0 * v
    return grad, hess


def grad_f(p: Potential, z) -> np.ndarray:
    return _grad_hess_f(p, np.asarray(z, dtype=float))[0]


def hessian_f(p: Potential, z) -> np.ndarray:
    return _grad_hess_f(p, np.asarray(z, dtype=float))[1]


def find_critical_point(p: Potential, guess=None, *, tol: float = 1e-12,
                        max_steps: int = 50) -> np.ndarray:
    """Damped Newton on grad(r^2 V); returns (r0, y0*) as one array."""
    if guess is None:
        guess = p.default_guess if p.default_guess is not None else p.center
    if guess is None:
        raise CriticalPointError("no initial guess available")
    z = np.asarray(guess, dtype=float).copy()
    if z.size != p.tail_dim + 1:
        raise CriticalPointError("initial guess has the wrong number of variables")
    try:
        g, h = _grad_hess_f(p, z)
        for _ in range(max_steps + 1):
            gnorm = float(np.linalg.norm(g))
            if gnorm < tol:
                if z[0] <= 0:
                    raise CriticalPointError("critical point violates r0 > 0")
                return z
            if np.linalg.cond(h) > 1e14:
                raise CriticalPointError("no critical point found")
            step = np.linalg.solve(h, -g)
            t = 1.0
            for _ in range(40):
                trial = z + t * step
                if p.in_neighborhood(trial):
                    g_new, h_new = _grad_hess_f(p, trial)
                    if np.linalg.norm(g_new) < gnorm:
                        break
                t *= 0.5
            else:
                raise CriticalPointError("no critical point found")
            z, g, h = trial, g_new, h_new
    except (PotentialError, np.linalg.LinAlgError) as exc:
        raise CriticalPointError("no critical point found") from exc
    raise CriticalPointError("no critical point found")


def analyze_critical_point(p: Potential, cp, *, zero_tol: float = 1e-8) -> dict:
    """Eigenvalues of the Hessian of r^2 V and the local degree sign(det)."""
    h = hessian_f(p, cp)
    eig = np.linalg.eigvalsh(0.5 * (h + h.T))
    if np.any(np.abs(eig) < zero_tol):
        raise DegenerateCriticalPoint("degenerate critical point: degree undefined by sign rule")
    degree = int(np.prod(np.sign(eig)))
    return {"hessian": h, "eigenvalues": eig, "local_degree": degree}


# ---------------------------------------------------------------------------
# non-degeneracy matrices


def face_normal(dimension: int, m: int, face: str) -> np.ndarray:
    """Outward unit normal of the sector {|theta| <= pi/m} on theta = +-pi/m."""
    if face not in ("plus", "minus"):
        raise ValueError(f"unknown face {face!r}")
    nu = np.zeros(dimension)
    nu[0] = -math.sin(math.pi / m)
    nu[1] = math.cos(math.pi / m) * (1.0 if face == "plus" else -1.0)
    return nu


def laplacian_terms(p: Potential, cp) -> dict:
    """Delta V, d(Delta V)/dr and d(Delta V)/dy_k at ``cp`` from partials of V
    in (r, y*), with Delta = d_rr + (d-1)/r d_r + sum_k d_kk."""
    cp = np.asarray(cp, dtype=float)
    r, ys = cp[0], cp[1:]
    k = p.tail_dim
    c = p.radial_dim - 1

    def d(*idx):
        counts = [0] * (k + 1)
        for i in idx:
            counts[i] += 1
        return p.derivative(r, ys, counts)

    lap = d(0, 0) + c * d(0) / r + sum(d(j, j) for j in range(1, k + 1))
    dlap_r = d(0, 0, 0) + c * (d(0, 0) / r - d(0) / r ** 2) + sum(d(0, j, j) for j in range(1, k + 1))
    dlap_y = np.array([d(0, 0, i) + c * d(0, i) / r + sum(d(j, j, i) for j in range(1, k + 1))
                       for i in range(1, k + 1)])
    return {"laplacian": lap, "d_laplacian_r": dlap_r, "d_laplacian_y": dlap_y}


def assemble_nondegeneracy_matrix(p: Potential, cp, variant: str = "tilde_V", m: int = 8,
                                  face: str = "plus") -> dict:
    """The matrix A_{i,l} whose determinant certifies non-degeneracy.

    Row/column 1 is the radial direction at the ring center x1 = (r0, 0, ...,
    y0*); rows/columns 2.. are the tail variables (y5..yN for ``tilde_V``,
    y3..yN for ``tilde_V_prime``).  Rows i >= 2 of column 1 carry the factor
    cos(2 i pi / m).
    """
    expected = {"tilde_V": "four_dim_radial", "tilde_V_prime": "two_dim_radial"}
    if variant not in expected:
        raise ValueError(f"unknown variant {variant!r}")
    if p.symmetry != expected[variant]:
        raise PotentialError(f"variant {variant} needs a {expected[variant]} potential")
    cp = np.asarray(cp, dtype=float)
    r, ys = cp[0], cp[1:]
    k = p.tail_dim
    size = k + 1
    n = p.dimension

    def d(*idx):
        counts = [0] * size
        for i in idx:
            counts[i] += 1
        return p.derivative(r, ys, counts)

    nu = face_normal(n, m, face)
    x1 = np.zeros(n)
    x1[0] = r
    x1[p.radial_dim:] = ys
    nu_x1 = float(nu @ x1)
    if abs(nu_x1) < 1e-14:
        raise PotentialError("normal orthogonal to center")
    hv = np.array([[d(i, j) for j in range(size)] for i in range(size)])
    lt = laplacian_terms(p, cp)
    lap = lt["laplacian"]
    if abs(lap) < 1e-14:
        raise PotentialError("matrix undefined: ΔV vanishes")
    # nu component for matrix index i (0-based): radial -> y1, tail -> its coordinate
    nu_idx = np.concatenate([[nu[0]], nu[p.radial_dim:]])
    dlap = np.concatenate([[lt["d_laplacian_r"]], lt["d_laplacian_y"]])
    coef = dlap / (2.0 * lap) + nu_idx / nu_x1
    # r V_{r,l} + sum_j y_j V_{j,l}
    moment = r * hv[0, :] + ys @ hv[1:, :]
    a = np.empty((size, size))
    for i in range(size):
        for l in range(size):
            if i == 0:
                a[i, l] = hv[0, l] - coef[0] * moment[l]
            elif l == 0:
                a[i, l] = math.cos(2.0 * (i + 1) * math.pi / m) * (hv[i, 0] - coef[i] * moment[0])
            else:
                a[i, l] = hv[i, l] - coef[i] * moment[l]
    lu, piv = scipy.linalg.lu_factor(a)
    swaps = int(np.sum(piv != np.arange(size)))
    det = float((-1) ** swaps * np.prod(np.diag(lu)))
    return {"matrix_A": a, "det_A": det, "face": face, "variant": variant,
            "threshold": det_threshold(a)}


def det_threshold(a: np.ndarray) -> float:
    return 1e-8 * float(np.max(np.abs(a))) ** a.shape[0]


# ---------------------------------------------------------------------------
# audit


@dataclass
class AuditReport:
    potential: str
    dimension: int
    critical_point: list
    V_at_cp: float
    hessian_of_f: list
    eigenvalues: list
    local_degree: int | None
    matrix_A: list
    det_A: float | None
    det_threshold: float | None
    face: str
    variant: str
    m: int
    assumptions_passed: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def passed(self) -> bool:
        return bool(self.assumptions_passed) and all(self.assumptions_passed.values())

    def to_dict(self) -> dict:
        return asdict(self)


def audit(p: Potential, guess=None, *, m: int = 8, face: str = "plus",
          variant: str | None = None) -> AuditReport:
    """Critical point, degree and non-degeneracy matrix in one report.

    Failures in the critical-point search are recorded in ``error`` with all
    assumptions marked failed rather than raised.
    """
    if variant is None:
        variant = "tilde_V" if p.symmetry == "four_dim_radial" else "tilde_V_prime"
    base = dict(potential=p.name, dimension=p.dimension, face=face, variant=variant, m=m)
    try:
        cp = find_critical_point(p, guess)
    except CriticalPointError as exc:
        return AuditReport(critical_point=[], V_at_cp=float("nan"), hessian_of_f=[], eigenvalues=[],
                           local_degree=None, matrix_A=[], det_A=None, det_threshold=None,
                           assumptions_passed={"V": False, variant: False}, error=str(exc), **base)
    v = float(eval_V(p, cp))
    error = None
    try:
        info = analyze_critical_point(p, cp)
        degree, eig, hess = info["local_degree"], info["eigenvalues"], info["hessian"]
    except DegenerateCriticalPoint as exc:
        degree, error = None, str(exc)
        hess = hessian_f(p, cp)
        eig = np.linalg.eigvalsh(hess)
    try:
        mat = assemble_nondegeneracy_matrix(p, cp, variant, m, face)
        a, det, thr = mat["matrix_A"], mat["det_A"], mat["threshold"]
        nondeg = abs(det) > thr
    except PotentialError as exc:
        a, det, thr, nondeg = np.zeros((0, 0)), None, None, False
        error = error or str(exc)
    passed = {"V": bool(cp[0] > 0 and v > 0 and degree not in (None, 0)), variant: bool(nondeg)}
    return AuditReport(critical_point=[float(c) for c in cp], V_at_cp=v,
                       hessian_of_f=np.asarray(hess).tolist(), eigenvalues=[float(e) for e in eig],
                       local_degree=degree, matrix_A=np.asarray(a).tolist(), det_A=det,
                       det_threshold=thr, assumptions_passed=passed, error=error, **base)


# ---------------------------------------------------------------------------
# the radial obstruction


def monotonicity_obstruction(v: Callable, r_min: float, r_max: float, *, points: int = 2001,
                             rel_tol: float = 1e-10) -> dict:
    """Sign scan of d(r^2 V)/dr for a radial V(r) on [r_min, r_max].

    If the derivative keeps one sign the radial problem has no solution.
    """
    r = np.linspace(r_min, r_max, points)
    h = 1e-5 * max(1.0, abs(r_max))
    f = lambda s: s * s * np.asarray(v(s), dtype=float)
    deriv = (f(r + h) - f(r - h)) / (2.0 * h)
    tol = rel_tol * float(np.max(np.abs(deriv)))
    nondecreasing = bool(np.all(deriv >= -tol))
    nonincreasing = bool(np.all(deriv <= tol))
    obstructed = nondecreasing or nonincreasing
    change = None
    if not obstructed:
        s = np.sign(np.where(np.abs(deriv) <= tol, 0.0, deriv))
        idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
        change = float(r[idx[0]]) if idx.size else None
    return {"verdict": "obstructed (no solution)" if obstructed else "not obstructed",
            "obstructed": obstructed, "sign_change_near": change}
