"""Command-line front end.

Each subcommand reads a config file (optional) plus flag overrides, writes
one CSV and one JSON summary into ``--out`` and exits with

    0  everything requested passed
    1  unexpected error
    2  bad usage or configuration
    3  the study ran but a check or assumption failed
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import energy, pohozaev, potential, reduction
from ._io import atomic_write_text, csv_text, fmt
from .bubble import Bubble, BubbleParams, CutoffSpec, TowerConfig
from .config import ConfigError, RunConfig, int_list, load_config
from .numerics import Ball, QuadratureSpec

EXIT_OK, EXIT_CRASH, EXIT_USAGE, EXIT_FAILED = 0, 1, 2, 3
THREADS_ENV = "BUBBLEKIT_THREADS"


class CheckFailed(Exception):
    pass


def _clean(obj):
    """JSON-safe copy: numpy to builtins, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _write(cfg: RunConfig, name: str, header, rows, summary: dict) -> Path:
    out = Path(cfg.get("run", "out"))
    atomic_write_text(out / f"{name}.csv", csv_text(header, rows))
    summary = dict(summary, command=name, config=cfg.to_dict())
    atomic_write_text(out / f"{name}.json", dump_json(summary))
    return out


# ---------------------------------------------------------------------------
# shared builders


def build_potential(cfg: RunConfig) -> potential.Potential:
    return potential.resolve_potential(cfg.get("potential", "spec"), cfg.get("run", "dim"),
                                       cfg.get("potential", "symmetry"))


def _guess(cfg: RunConfig):
    g = cfg.get("potential", "guess")
    if g == "auto":
        return None
    try:
        return [float(v) for v in g.split(",")]
    except ValueError:
        raise ConfigError(f"potential.guess must be 'auto' or numbers, got {g!r}") from None


def _variant(cfg: RunConfig):
    v = cfg.get("audit", "variant")
    return None if v == "auto" else v


def run_audit(cfg: RunConfig, face: str | None = None) -> potential.AuditReport:
    p = build_potential(cfg)
    return potential.audit(p, _guess(cfg), m=cfg.get("audit", "m"),
                           face=face or cfg.get("audit", "face"), variant=_variant(cfg))


def _audited_cp(cfg: RunConfig):
    rep = run_audit(cfg)
    if not rep.passed:
        raise CheckFailed(f"potential failed audit: {rep.error or rep.assumptions_passed}")
    return build_potential(cfg), np.asarray(rep.critical_point)


def _constants(cfg: RunConfig) -> energy.ExpansionConstants:
    method = cfg.get("quadrature", "method")
    count = cfg.get("quadrature", "samples" if method == "monte_carlo" else "order")
    spec = QuadratureSpec(method, count, cfg.get("run", "seed"))
    return energy.compute_constants(cfg.get("run", "dim"), spec)


# ---------------------------------------------------------------------------
# subcommands


def cmd_audit(cfg: RunConfig) -> int:
    rep = run_audit(cfg)
    both = {}
    if rep.critical_point:
        for f in ("plus", "minus"):
            both[f] = run_audit(cfg, f).det_A
    rows = [("critical_point", ";".join(fmt(v) for v in rep.critical_point)),
            ("V_at_cp", rep.V_at_cp), ("local_degree", rep.local_degree),
            ("eigenvalues", ";".join(fmt(v) for v in rep.eigenvalues)),
            ("det_A", rep.det_A), ("det_threshold", rep.det_threshold), ("face", rep.face)]
    rows += [(f"passed_{k}", v) for k, v in rep.assumptions_passed.items()]
    _write(cfg, "audit", ("field", "value"), rows,
           dict(rep.to_dict(), det_A_by_face=both, passed=rep.passed))
    print(f"potential      {rep.potential}  (N = {rep.dimension})")
    if rep.error:
        print(f"error          {rep.error}")
    if rep.critical_point:
        print(f"critical point {', '.join(f'{v:.10g}' for v in rep.critical_point)}")
        print(f"V at cp        {rep.V_at_cp:.10g}")
        print(f"eigenvalues    {', '.join(f'{v:.6g}' for v in rep.eigenvalues)}")
        print(f"local degree   {rep.local_degree}")
        print(f"det A ({rep.face:5s})  {rep.det_A!s}  (threshold {rep.det_threshold!s})")
        for f, d in both.items():
            print(f"det A [{f}]    {d!s}")
    for k, v in rep.assumptions_passed.items():
        print(f"assumption {k:<12s} {'pass' if v else 'FAIL'}")
    return EXIT_OK if rep.passed else EXIT_FAILED


def cmd_scaling(cfg: RunConfig) -> int:
    p, cp = _audited_cp(cfg)
    res = reduction.scaling_study(int_list(cfg.get("scaling", "n_values")), _constants(cfg), p, cp)
    passed = abs(res.fitted_exponent - res.target_exponent) < 0.05
    _write(cfg, "scaling", ("n", "mu_star"), zip(res.n_values, res.mu_star),
           dict(fitted_exponent=res.fitted_exponent, target_exponent=res.target_exponent,
                residual_of_fit=res.residual_of_fit, passed=passed))
    print(f"fitted exponent {res.fitted_exponent:.6f}  target {res.target_exponent:.6f}")
    return EXIT_OK if passed else EXIT_FAILED


def pohozaev_preset(name: str, order: int) -> list[pohozaev.IdentityCheck]:
    spec = QuadratureSpec("tensor_gauss", order)
    if name == "gaussian-ball-3d":
        u = pohozaev.GaussianField(3, 1.0, (0.2, -0.1, 0.15))
        eta = pohozaev.GaussianField(3, 2.0, (-0.1, 0.25, 0.0))
        v, dom = pohozaev.ConstantPotential(1.0), Ball((0.0, 0.0, 0.0), 1.0)
        return [pohozaev.translation_identity_check(u, eta, v, dom, i, spec) for i in range(3)] + \
            [pohozaev.dilation_identity_check(u, eta, v, dom, (0.3, 0.0, 0.0), spec)]
    if name == "bubble-ball-5d":
        b = Bubble(BubbleParams((0.3, 0.1, 0.0, 0.0, 0.0), 1.0))
        v, dom = pohozaev.ConstantPotential(0.0), Ball((0.0,) * 5, 2.0)
        return [pohozaev.translation_identity_check(b, pohozaev.BubbleCenterDerivative(b, 0), v, dom, 0, spec),
                pohozaev.dilation_identity_check(b, pohozaev.BubbleScaleDerivative(b), v, dom,
                                                 (0.0,) * 5, spec)]
    raise ConfigError(f"unknown pohozaev preset {name!r}")


def cmd_pohozaev(cfg: RunConfig) -> int:
    checks = pohozaev_preset(cfg.get("pohozaev", "preset"), cfg.get("pohozaev", "order"))
    score = [c.relative_discrepancy if c.lhs or c.rhs else 0.0 for c in checks]
    if cfg.get("pohozaev", "preset") == "bubble-ball-5d":
        score = [c.discrepancy / max(abs(c.lhs), 1.0) for c in checks]
    passed = all(s < 1e-6 for s in score)
    header = ("identity", "domain", "N", "order", "lhs", "rhs", "correction", "discrepancy")
    _write(cfg, "pohozaev", header, [c.row() for c in checks],
           dict(checks=[c.__dict__ for c in checks], score=score, passed=passed))
    for c, s in zip(checks, score):
        print(f"{c.identity:12s} lhs {c.lhs: .6e}  rhs {c.rhs: .6e}  correction {c.residual_correction: .6e}"
              f"  discrepancy {c.discrepancy:.3e}  score {s:.3e}")
    return EXIT_OK if passed else EXIT_FAILED


def tower_config(cfg: RunConfig, p, cp, constants) -> TowerConfig:
    r0, ys = float(cp[0]), tuple(float(v) for v in cp[1:])
    n = cfg.get("ring", "n")
    mu = cfg.get("ring", "mu")
    mu = energy.critical_mu(r0, ys, n, constants, p) if mu == "auto" else float(mu)
    delta = cfg.get("cutoff", "delta")
    delta = 0.45 * r0 if delta == "auto" else float(delta)
    return TowerConfig(m=cfg.get("ring", "m"), r_bar=r0, lam=cfg.get("ring", "lam"), n=n, t=r0,
                       mu=mu, ystar=ys, cutoff=CutoffSpec(r0, ys, delta), dimension=p.dimension)


def cmd_residual(cfg: RunConfig) -> int:
    p, cp = _audited_cp(cfg)
    tc = tower_config(cfg, p, cp, _constants(cfg))
    mult = [2.0 ** k for k in range(cfg.get("residual", "mu_ladder"))]
    res = reduction.residual_decay_study(tc, mult, potential=p.field)
    passed = res["strictly_decreasing"] and res["slope"] <= -1.0
    _write(cfg, "residual", ("mu", "norm"), zip(res["mu"], res["norm"]), dict(res, passed=passed))
    print(f"slope {res['slope']:.4f}  strictly decreasing {res['strictly_decreasing']}")
    return EXIT_OK if passed else EXIT_FAILED


def cmd_constants(cfg: RunConfig) -> int:
    c = _constants(cfg)
    out = Path(cfg.get("run", "out"))
    target = out / "constants.txt"
    if target.exists():
        target.unlink()
    energy.save_constants(target, c)
    rows = [(k, c.dimension, v, e, c.fingerprint)
            for k, v, e in zip(("A1", "A2", "A3"), (c.A1, c.A2, c.A3), c.errors)]
    _write(cfg, "constants", ("name", "N", "value", "error", "fingerprint"), rows,
           dict(A1=c.A1, A2=c.A2, A3=c.A3, errors=c.errors, fingerprint=c.fingerprint, N=c.dimension))
    for r in rows:
        print(f"{r[0]}  {r[2]:.15g}  +- {r[3]:.2g}")
    return EXIT_OK


def cmd_reduced(cfg: RunConfig) -> int:
    p, cp = _audited_cp(cfg)
    c = _constants(cfg)
    theta = cfg.get("reduced", "vartheta")
    theta = None if theta == "auto" else float(theta)
    ns = int_list(cfg.get("reduced", "n_values"))
    with ThreadPoolExecutor(_threads()) as pool:
        results = list(pool.map(lambda n: reduction.find_reduced_critical_point(n, c, p, cp, theta), ns))
    rows = [(n, r.t, *r.ystar, r.mu, r.gradient_norm, r.classification) for n, r in zip(ns, results)]
    header = ("n", "t_star", *[f"ystar_{i + 1}" for i in range(len(cp) - 1)], "mu_star",
              "grad_norm", "classification")
    passed = all(r.gradient_norm < 1e-9 for r in results)
    _write(cfg, "reduced", header, rows, dict(results=[r.__dict__ for r in results], passed=passed))
    for n, r in zip(ns, results):
        print(f"n {n:6d}  t* {r.t:.10g}  mu* {r.mu:.6g}  |grad| {r.gradient_norm:.2e}  {r.classification}")
    return EXIT_OK if passed else EXIT_FAILED


COMMANDS = {"audit": cmd_audit, "scaling": cmd_scaling, "pohozaev": cmd_pohozaev,
            "residual": cmd_residual, "constants": cmd_constants, "reduced": cmd_reduced}

# flag -> (section, key)
OVERRIDES = {"seed": ("run", "seed"), "out": ("run", "out"), "dim": ("run", "dim"),
             "potential": ("potential", "spec"), "symmetry": ("potential", "symmetry"),
             "guess": ("potential", "guess"), "face": ("audit", "face"), "m": ("ring", "m"),
             "n": ("ring", "n"), "lam": ("ring", "lam"), "mu": ("ring", "mu"),
             "delta": ("cutoff", "delta"), "method": ("quadrature", "method"),
             "order": ("quadrature", "order"), "samples": ("quadrature", "samples"),
             "n_values": ("scaling", "n_values"), "mu_ladder": ("residual", "mu_ladder"),
             "preset": ("pohozaev", "preset"), "pohozaev_order": ("pohozaev", "order")}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bubblekit", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=(fn.__doc__ or name).strip())
        sp.add_argument("--config", help="config file")
        for flag in OVERRIDES:
            sp.add_argument("--" + flag.replace("_", "-"), dest=flag)
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override any config key")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    for flag, (sec, key) in OVERRIDES.items():
        value = getattr(args, flag)
        if value is not None:
            cfg.set(sec, key, value)
    for item in args.set:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        lhs, value = item.split("=", 1)
        sec, key = lhs.split(".", 1)
        cfg.set(sec.strip(), key.strip(), value)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, potential.PotentialError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CheckFailed, potential.CriticalPointError, reduction.ReductionError,
            energy.EnergyError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except Exception as exc:  # noqa: BLE001 - report and map to the crash code
        print(f"crash: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CRASH


if __name__ == "__main__":
    sys.exit(main())
