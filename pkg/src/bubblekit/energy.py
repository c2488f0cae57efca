"""The energy functional, its reduced expansion and the expansion constants.

I(u) = 1/2 int(|grad u|^2 + V u^2) - 1/2* int |u|^{2*}.  Along the bubble
manifold the per-bubble energy expands as

    A1 + A2 V / mu^2 - sum_{j>=2} A3 / (mu^{N-2} |p_1 - p_j|^{N-2}) + ...
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ._io import atomic_write_text, fmt
from .bubble import Bubble, BubbleParams, bubble_constant, critical_exponent
from .numerics import (IntegralResult, QuadratureError, QuadratureSpec, integrate_mc,
                       integrate_radial)


class EnergyError(ValueError):
    pass


@dataclass(frozen=True)
class ExpansionConstants:
    A1: float
    A2: float
    A3: float
    dimension: int
    errors: tuple = (0.0, 0.0, 0.0)
    fingerprint: str = ""

    def __post_init__(self):
        if not (self.A1 > 0 and self.A2 > 0 and self.A3 > 0):
            raise EnergyError("expansion constants must be positive")

    def scaled(self, c: float) -> "ExpansionConstants":
        """A2 and A3 multiplied by ``c`` (A1 is an additive offset)."""
        return ExpansionConstants(self.A1, c * self.A2, c * self.A3, self.dimension,
                                  self.errors, self.fingerprint)


def bubble_profile(n: int) -> Callable:
    """U_{0,1} as a function of |y|."""
    c = bubble_constant(n)
    a = (n - 2) / 2.0
    return lambda r: c * (1.0 + r * r) ** (-a)


def _integrals(n: int, spec: QuadratureSpec) -> list[IntegralResult]:
    prof = bubble_profile(n)
    s = critical_exponent(n)
    powers = (s, 2.0, s - 1.0)
    if spec.method == "monte_carlo":
        mc = QuadratureSpec("monte_carlo", spec.order_or_samples, spec.seed, ((0.0,) * n,), 1.0)
        return [integrate_mc(lambda y, k=k: prof(np.linalg.norm(y, axis=-1)) ** k, n, mc)
                for k in powers]
    other = "tensor_gauss" if spec.method == "radial_gauss" else "radial_gauss"
    cross = QuadratureSpec(other, spec.order_or_samples)
    out = []
    for k in powers:
        f = lambda r, k=k: prof(r) ** k
        main = integrate_radial(f, n, spec)
        check = integrate_radial(f, n, cross)
        out.append(IntegralResult(main.value, max(main.error_estimate, abs(main.value - check.value)),
                                  main.samples_used + check.samples_used))
    return out


def compute_constants(dimension: int, spec: QuadratureSpec | None = None, *,
                      cache: str | Path | None = None) -> ExpansionConstants:
    """A1 = (1/2 - 1/2*) int U^{2*}, A2 = 1/2 int U^2 and
    A3 = (1/2) [N(N-2)]^{(N-2)/4} int U^{2*-1}, all for U = U_{0,1}.

    The factor 1/2 in A3 is the per-bubble share of a pair interaction
    energy, which is what the n-fold per-bubble expansion sums.  With the
    Gauss methods each integral is cross-checked against the other Gauss
    scheme and the larger discrepancy is reported as its error.
    """
    n = int(dimension)
    if n <= 4:
        raise EnergyError("int U^2 diverges for N <= 4")
    spec = spec or QuadratureSpec("radial_gauss", 64)
    if cache is not None:
        hit = load_constants(cache, n, spec.fingerprint())
        if hit is not None:
            return hit
    i_crit, i_two, i_p = _integrals(n, spec)
    s = critical_exponent(n)
    k1 = 0.5 - 1.0 / s
    k3 = 0.5 * bubble_constant(n)
    out = ExpansionConstants(k1 * i_crit.value, 0.5 * i_two.value, k3 * i_p.value, n,
                             (k1 * i_crit.error_estimate, 0.5 * i_two.error_estimate,
                              k3 * i_p.error_estimate), spec.fingerprint())
    if cache is not None:
        save_constants(cache, out)
    return out


def load_constants(path, dimension: int, fingerprint: str) -> ExpansionConstants | None:
    """Look up constants for (N, fingerprint) in a cache file."""
    path = Path(path)
    if not path.exists():
        return None
    found = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        parts = line.split()
        if len(parts) != 5 or line.startswith("#"):
            continue
        name, n, value, err, fp = parts
        if int(n) == dimension and fp == fingerprint:
            found[name] = (float(value), float(err))
    if not all(k in found for k in ("A1", "A2", "A3")):
        return None
    return ExpansionConstants(found["A1"][0], found["A2"][0], found["A3"][0], dimension,
                              (found["A1"][1], found["A2"][1], found["A3"][1]), fingerprint)


def save_constants(path, c: ExpansionConstants) -> None:
    """Add or replace the entries for (N, fingerprint); one constant per line."""
    path = Path(path)
    keep = []
    if path.exists():
        for line in path.read_text(encoding="utf-8").splitlines():
            parts = line.split()
            if len(parts) == 5 and int(parts[1]) == c.dimension and parts[4] == c.fingerprint:
                continue
            keep.append(line)
    if not keep:
        keep.append("# name N value error fingerprint")
    for name, value, err in zip(("A1", "A2", "A3"), (c.A1, c.A2, c.A3), c.errors):
        keep.append(f"{name} {c.dimension} {fmt(float(value))} {fmt(float(err))} {c.fingerprint}")
    atomic_write_text(path, "\n".join(keep) + "\n")


# ---------------------------------------------------------------------------
# reduced energy


def interaction_sum(n: int, t: float, dimension: int) -> float:
    """D_n(t) = sum_{j=2}^n |p_1 - p_j|^{-(N-2)} on a regular n-gon of radius t."""
    if n < 2 or not t > 0:
        raise EnergyError("interaction_sum needs n >= 2 and t > 0")
    k = dimension - 2
    return math.fsum((2.0 * t * math.sin((j - 1) * math.pi / n)) ** (-k) for j in range(2, n + 1))


@dataclass(frozen=True)
class ReducedEnergyPoint:
    t: float
    ystar: tuple
    mu: float
    n: int
    value: float
    per_bubble_value: float


def _potential_value(potential, t, ystar) -> float:
    if callable(potential) and not hasattr(potential, "value"):
        return float(potential(t, np.asarray(ystar, dtype=float)))
    return float(potential.value(t, np.asarray(ystar, dtype=float)))


def reduced_energy(t: float, ystar, mu: float, n: int, constants: ExpansionConstants,
                   potential, *, offsets: bool = False) -> ReducedEnergyPoint:
    """n (A2 V(t, y*)/mu^2 - A3 D_n(t)/mu^{N-2}).

    ``offsets=True`` adds n A1; the energy of the first ring is not modelled.
    """
    if not mu > 0:
        raise EnergyError("mu must be positive")
    nd = constants.dimension
    v = _potential_value(potential, t, ystar)
    per = constants.A2 * v / mu ** 2 - constants.A3 * interaction_sum(n, t, nd) / mu ** (nd - 2)
    value = n * per + (n * constants.A1 if offsets else 0.0)
    return ReducedEnergyPoint(float(t), tuple(float(v) for v in ystar), float(mu), int(n),
                              float(value), float(per))


def reduced_energy_gradient(t: float, ystar, mu: float, n: int, constants: ExpansionConstants,
                            potential) -> dict:
    """Partials of ``reduced_energy(...).value`` in t, mu and y*.

    ``potential`` must be a :class:`~bubblekit.potential.Potential`.
    """
    nd = constants.dimension
    ys = np.asarray(ystar, dtype=float)
    k = ys.size
    v = potential.value(t, ys)
    dv = [potential.derivative(t, ys, [1 if j == i else 0 for j in range(k + 1)])
          for i in range(k + 1)]
    d = interaction_sum(n, t, nd)
    a2, a3 = constants.A2, constants.A3
    return {
        "t": n * (a2 * dv[0] / mu ** 2 + a3 * (nd - 2) * d / (t * mu ** (nd - 2))),
        "mu": n * (-2.0 * a2 * v / mu ** 3 + (nd - 2) * a3 * d / mu ** (nd - 1)),
        "ystar": np.array([n * a2 * g / mu ** 2 for g in dv[1:]]),
    }


def critical_mu(t: float, ystar, n: int, constants: ExpansionConstants, potential) -> float:
    """mu* = [(N-2) A3 D_n(t) / (2 A2 V(t, y*))]^{1/(N-4)}."""
    nd = constants.dimension
    v = _potential_value(potential, t, ystar)
    if not v > 0:
        raise EnergyError("no critical scale")
    d = interaction_sum(n, t, nd)
    return ((nd - 2) * constants.A3 * d / (2.0 * constants.A2 * v)) ** (1.0 / (nd - 4))


# ---------------------------------------------------------------------------
# the full functional


def energy_density(u, potential: Callable | None = None) -> Callable:
    """Pointwise integrand of I(u); ``potential`` is V on points of R^N."""
    if not callable(getattr(u, "gradient", None)):
        raise EnergyError("full_energy needs a field with an analytic gradient")
    n = u.dimension
    s = critical_exponent(n)

    def density(y):
        val = u.value(y)
        g = u.gradient(y)
        out = 0.5 * np.sum(g * g, axis=-1) - np.abs(val) ** s / s
        if potential is not None:
            out = out + 0.5 * potential(y) * val * val
        return out

    return density


def full_energy(u, potential: Callable | None, spec: QuadratureSpec, *,
                control=None, control_integral: float = 0.0) -> IntegralResult:
    """I(u) by importance-sampled Monte Carlo.

    ``spec.importance_centers`` should list every bubble center.  ``control``
    is a second field whose energy ``control_integral`` is known; the sampler
    then only has to resolve I(u) - I(control).
    """
    if spec.method != "monte_carlo":
        raise QuadratureError("full_energy uses method='monte_carlo'")
    dens = energy_density(u, potential)
    # the control is V-free so that its integral is a known constant
    ctrl = None if control is None else energy_density(control, None)
    return integrate_mc(dens, u.dimension, spec, control=ctrl, control_integral=control_integral)


def bubble_energy_field(center, scale: float) -> Bubble:
    return Bubble(BubbleParams(tuple(center), scale))
