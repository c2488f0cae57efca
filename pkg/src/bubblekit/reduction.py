"""Critical points of the reduced energy, the mu* ~ n^{(N-2)/(N-4)} scaling
study and the decay of the ansatz residual in mu."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bubble import (TowerConfig, WeightedNormKind, eval_residual_ln, m_ring_field,
                     structured_cloud, weighted_norm)
from .energy import ExpansionConstants, critical_mu, reduced_energy, reduced_energy_gradient


class ReductionError(RuntimeError):
    pass


@dataclass(frozen=True)
class CriticalPointResult:
    t: float
    ystar: tuple
    mu: float
    gradient_norm: float
    classification: str
    steps: int
    profile_value: float


@dataclass(frozen=True)
class ScalingStudyResult:
    n_values: tuple
    mu_star: tuple
    fitted_exponent: float
    target_exponent: float
    residual_of_fit: float


def profile(z, n: int, constants: ExpansionConstants, potential) -> float:
    """Reduced energy with mu eliminated: F(t, y*, mu*(t, y*))."""
    z = np.asarray(z, dtype=float)
    mu = critical_mu(z[0], z[1:], n, constants, potential)
    return reduced_energy(z[0], z[1:], mu, n, constants, potential).value


def profile_gradient(z, n: int, constants: ExpansionConstants, potential) -> np.ndarray:
    """Gradient of :func:`profile`; dF/dmu = 0 at mu*, so only the explicit
    (t, y*) partials survive."""
    z = np.asarray(z, dtype=float)
    mu = critical_mu(z[0], z[1:], n, constants, potential)
    g = reduced_energy_gradient(z[0], z[1:], mu, n, constants, potential)
    return np.concatenate([[g["t"]], g["ystar"]])


def _fd_hessian(grad, z, h):
    k = z.size
    out = np.empty((k, k))
    for i in range(k):
        e = np.zeros(k)
        e[i] = h
        out[:, i] = (grad(z + e) - grad(z - e)) / (2.0 * h)
    return 0.5 * (out + out.T)


def classify(hess: np.ndarray, rel_tol: float = 1e-8) -> str:
    eig = np.linalg.eigvalsh(hess)
    scale = float(np.max(np.abs(eig))) if eig.size else 0.0
    if scale == 0.0 or np.any(np.abs(eig) <= rel_tol * scale):
        return "degenerate"
    if np.all(eig > 0):
        return "min"
    if np.all(eig < 0):
        return "max"
    return "saddle"


def find_reduced_critical_point(n: int, constants: ExpansionConstants, potential, center,
                                vartheta: float | None = None, *, start=None,
                                tol: float = 1e-12, max_steps: int = 50) -> CriticalPointResult:
    """Newton on the (t, y*) gradient of the mu-eliminated profile inside the
    ball B_vartheta(center).

    ``gradient_norm`` is |grad G| / |G| at the returned point, so it does not
    depend on the overall size of the constants.  The Hessian is a central
    difference of the analytic gradient.
    """
    if n < 2 or n % 2:
        raise ReductionError("n must be an even integer >= 2")
    center = np.asarray(center, dtype=float)
    if vartheta is None:
        vartheta = 0.1 * center[0]
    z = center.copy() if start is None else np.asarray(start, dtype=float).copy()
    grad = lambda w: profile_gradient(w, n, constants, potential)
    h = 1e-5 * vartheta

    def rel(w):
        return float(np.linalg.norm(grad(w))) / abs(profile(w, n, constants, potential))

    steps = 0
    while rel(z) >= tol and steps < max_steps:
        hess = _fd_hessian(grad, z, h)
        try:
            step = np.linalg.solve(hess, -grad(z))
        except np.linalg.LinAlgError:
            break
        z = z + step
        steps += 1
        if np.linalg.norm(z - center) > vartheta:
            raise ReductionError("escaped search box")
        if np.linalg.norm(step) < 1e-15 * max(1.0, float(np.linalg.norm(z))):
            break
    hess = _fd_hessian(grad, z, h)
    mu = critical_mu(z[0], z[1:], n, constants, potential)
    return CriticalPointResult(float(z[0]), tuple(float(v) for v in z[1:]), float(mu), rel(z),
                               classify(hess), steps, profile(z, n, constants, potential))


def target_exponent(dimension: int) -> float:
    return (dimension - 2) / (dimension - 4)


def scaling_study(n_values: Sequence[int], constants: ExpansionConstants, potential,
                  point) -> ScalingStudyResult:
    """Least-squares slope of log mu* against log n at a fixed (t, y*)."""
    ns = [int(v) for v in n_values]
    if len(ns) < 2 or any(v < 2 or v % 2 for v in ns):
        raise ReductionError("n_values must hold at least two even integers >= 2")
    if max(ns) < 4 * min(ns):
        raise ReductionError("n_values must span at least two doublings")
    point = np.asarray(point, dtype=float)
    mus = [critical_mu(point[0], point[1:], v, constants, potential) for v in ns]
    x, y = np.log(ns), np.log(mus)
    slope, icpt = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + icpt)) ** 2)))
    return ScalingStudyResult(tuple(ns), tuple(float(m) for m in mus), float(slope),
                              target_exponent(constants.dimension), resid)


def fit_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def residual_cloud(cfg: TowerConfig) -> np.ndarray:
    """Points around every n-ring center at radii scaled by 1/mu, around the
    m-ring centers at radii scaled by 1/lam, and a far field out to |y| = 100."""
    parts = [structured_cloud(cfg.n_centers(), cfg.mu, extra_directions=24,
                              far_radii=np.geomspace(0.02, 100.0, 40),
                              origin=cfg.n_centers()[0])]
    if cfg.m:
        parts.append(structured_cloud(cfg.m_centers(), cfg.lam, extra_directions=8))
    return np.vstack(parts)


def residual_norm(cfg: TowerConfig, potential=None, cloud=None) -> float:
    """||l_n||_** over a sample cloud, with the m-ring bubbles standing in for u_m."""
    if cloud is None:
        cloud = residual_cloud(cfg)
    proxy = m_ring_field(cfg) if cfg.m else None
    vals = eval_residual_ln(cfg, proxy, cloud, potential)
    kind = WeightedNormKind("double_star", tuple(map(tuple, cfg.n_centers())), cfg.mu)
    return weighted_norm(vals, cloud, kind).value


def residual_decay_study(cfg: TowerConfig, multipliers: Sequence[float] = (1, 2, 4, 8),
                         potential=None, cloud_fn=residual_cloud) -> dict:
    """Residual norms at mu = k * cfg.mu and their log-log slope."""
    mus, norms = [], []
    for k in multipliers:
        c = dataclasses.replace(cfg, mu=cfg.mu * float(k))
        mus.append(c.mu)
        norms.append(residual_norm(c, potential, cloud_fn(c)))
    decreasing = all(b < a for a, b in zip(norms, norms[1:]))
    slope = fit_slope(mus, norms) if all(v > 0 for v in norms) else -math.inf
    return {"mu": mus, "norm": norms, "slope": slope, "strictly_decreasing": decreasing}
