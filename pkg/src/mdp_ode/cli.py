"""Command-line front end: model validation, parameter sweeps, benchmarks.

Exit codes are a stable contract: 0 success, 2 validation, 3 I/O,
4 integration, 5 tolerance/convergence.  The environment variable
MDP_ODE_LOG in {off, info, debug} controls diagnostics on stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import fixtures
from .errors import (
    ConvergenceError,
    FeasibilityError,
    IntegrationError,
    ModelError,
)
from .kl import aroe_residual, newton_solve, twist
from .markov import invariant_pmf
from .model import KLModel, load_model
from .ode import integrate_brockett, integrate_kl, lqr_coefficient_ode, riccati_oracle, LqrModel

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_INTEGRATION = 4
EXIT_TOLERANCE = 5

DEFAULT_ORACLE_TOL = 1e-9


@dataclass(frozen=True)
class SweepConfig:
    model_path: str
    zeta_min: float
    zeta_max: float
    step: float
    polish: bool
    output_path: str
    emit_policy: bool

    def __post_init__(self):
        if self.zeta_min > self.zeta_max:
            raise ModelError("zeta-min must not exceed zeta-max")
        if self.step <= 0.0:
            raise ModelError("step must be positive")


def _fmt(value):
    return f"{value:.17g}"


def _configure_logging():
    level_name = os.environ.get("MDP_ODE_LOG", "off").strip().lower()
    logger = logging.getLogger("mdp_ode")
    logger.handlers.clear()
    if level_name == "off" or not level_name:
        logger.addHandler(logging.NullHandler())
        logger.setLevel(logging.CRITICAL + 1)
        return
    if level_name not in ("info", "debug"):
        print(f"warning: unknown MDP_ODE_LOG value {level_name!r}, logging off", file=sys.stderr)
        logger.addHandler(logging.NullHandler())
        logger.setLevel(logging.CRITICAL + 1)
        return
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(name)s %(levelname)s %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(logging.INFO if level_name == "info" else logging.DEBUG)


def cmd_validate(args) -> int:
    try:
        model = load_model(args.model)
    except OSError as exc:
        print(f"error: cannot read model: {exc}", file=sys.stderr)
        return EXIT_IO
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    pi0 = invariant_pmf(model.p0)
    space = model.space
    print(f"d={space.d} d_u={space.d_u} d_n={space.d_n}")
    print(f"n0={model.n0}")
    print("pi0=" + " ".join(f"{space.label(x)}:{pi0.weights[x]:.12g}" for x in range(space.d)))
    print(f"reference_state={space.label(model.reference_state)}")
    return EXIT_OK


def write_sweep_csv(traj, model: KLModel, path, emit_policy: bool):
    d = model.d
    columns = ["zeta", "eta", "eta_quadrature", "residual_sup"]
    columns += [f"h_{i}" for i in range(d)]
    columns += [f"pi_{i}" for i in range(d)]
    if emit_policy:
        columns += [f"R_{x}_{u}" for x in range(d) for u in range(model.space.d_u)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for sample in traj.samples:
            fields = [sample.zeta, sample.eta, sample.eta_quadrature, sample.residual_sup]
            fields += list(sample.h)
            fields += list(sample.pi.weights)
            if emit_policy:
                fields += list(twist(sample.h, model).r_h.entries.ravel())
            fh.write(",".join(_fmt(v) for v in fields) + "\n")


def run_sweep(config: SweepConfig) -> int:
    try:
        model = load_model(config.model_path)
    except OSError as exc:
        print(f"error: cannot read model: {exc}", file=sys.stderr)
        return EXIT_IO
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        traj = integrate_kl(
            model, (0.0, config.zeta_max), step=config.step, polish=config.polish
        )
    except IntegrationError as exc:
        print(f"error: integration failed; last good zeta={exc.last_zeta}", file=sys.stderr)
        return EXIT_INTEGRATION
    keep = [s for s in traj.samples if s.zeta >= config.zeta_min - 1e-12]
    trimmed = type(traj)(samples=tuple(keep), model=traj.model, settings=traj.settings)
    try:
        write_sweep_csv(trimmed, model, config.output_path, config.emit_policy)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    last = trimmed.samples[-1]
    print(f"zeta={_fmt(last.zeta)} eta={_fmt(last.eta)} residual_sup={_fmt(last.residual_sup)}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        config = SweepConfig(
            model_path=args.model,
            zeta_min=args.zeta_min,
            zeta_max=args.zeta_max,
            step=args.step,
            polish=not args.no_polish,
            output_path=args.out,
            emit_policy=args.emit_policy,
        )
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return run_sweep(config)


def cmd_oracle(args) -> int:
    try:
        model = load_model(args.model)
    except OSError as exc:
        print(f"error: cannot read model: {exc}", file=sys.stderr)
        return EXIT_IO
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    tol = args.tol
    try:
        sol = newton_solve(args.zeta, np.zeros(model.d), model, tol=min(tol, 1e-12))
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    residual = aroe_residual(sol, args.zeta, model)
    print("h_star=" + " ".join(f"{v:.12g}" for v in sol.h_star))
    print(f"eta_star={_fmt(sol.eta_star)}")
    print(f"iterations={sol.diagnostics.iterations}")
    print(f"aroe_residual={residual:.3e}")
    return EXIT_OK if residual <= tol else EXIT_TOLERANCE


def cmd_brockett(args) -> int:
    model = fixtures.brockett_three_state()
    try:
        traj = integrate_brockett(model, (0.0, args.zeta_max), step=args.step)
    except FeasibilityError as exc:
        print(f"error: {exc} (zeta={exc.zeta})", file=sys.stderr)
        return EXIT_INTEGRATION
    except IntegrationError as exc:
        print(f"error: integration failed; last good zeta={exc.last_zeta}", file=sys.stderr)
        return EXIT_INTEGRATION
    from .ode import brockett_policy

    print("zeta phi1 gamma dphi dgamma")
    worst_phi = worst_gamma = 0.0
    for sample in traj.samples:
        phi1 = float(brockett_policy(sample.h, model)[0, 0])
        gamma = sample.eta
        phi_ref, gamma_ref = fixtures.brockett_closed_form(sample.zeta)
        dphi = abs(phi1 - phi_ref)
        dgamma = abs(gamma - gamma_ref)
        worst_phi = max(worst_phi, dphi)
        worst_gamma = max(worst_gamma, dgamma)
        print(f"{sample.zeta:.10g} {phi1:.10g} {gamma:.10g} {dphi:.3e} {dgamma:.3e}")
    print(f"max|dphi|={worst_phi:.3e} max|dgamma|={worst_gamma:.3e}")
    return EXIT_OK if max(worst_phi, worst_gamma) <= 1e-6 else EXIT_TOLERANCE


def cmd_lqr(args) -> int:
    try:
        model = LqrModel(alpha=args.alpha)
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    table = lqr_coefficient_ode(model, args.zeta_max, step=args.step)
    print("zeta b k")
    for zeta, b, gain in table:
        print(f"{zeta:.10g} {b:.10g} {gain:.10g}")
    zeta_end, b_end, _ = table[-1]
    try:
        b_ref = riccati_oracle(model, zeta_end)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    delta = abs(b_end - b_ref)
    print(f"endpoint_delta={delta:.3e}")
    return EXIT_OK if delta <= 1e-6 else EXIT_TOLERANCE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdp-ode",
        description="Solve families of average-reward MDPs by value-function continuation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a model file and print its summary")
    p.add_argument("model")
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("sweep", help="integrate the value-function ODE and write a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--zeta-min", type=float, default=0.0)
    p.add_argument("--zeta-max", type=float, required=True)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--no-polish", action="store_true")
    p.add_argument("--emit-policy", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("oracle", help="solve one parameter value by Newton iteration")
    p.add_argument("--model", required=True)
    p.add_argument("--zeta", type=float, required=True)
    p.add_argument("--tol", type=float, default=DEFAULT_ORACLE_TOL)
    p.set_defaults(handler=cmd_oracle)

    p = sub.add_parser("brockett", help="reproduce the three-state generator benchmark")
    p.add_argument("--zeta-max", type=float, default=0.5)
    p.add_argument("--step", type=float, default=1e-3)
    p.set_defaults(handler=cmd_brockett)

    p = sub.add_parser("lqr", help="reproduce the scalar linear-quadratic benchmark")
    p.add_argument("--alpha", type=float, default=0.95)
    p.add_argument("--zeta-max", type=float, default=1.0)
    p.add_argument("--step", type=float, default=1e-3)
    p.set_defaults(handler=cmd_lqr)

    return parser


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    return args.handler(args)


def entry():
    sys.exit(main())
