import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
import yaml

from rhgc.core.config import settings
from rhgc.core.errors import ConfigError, NonIntegerHorizonRatio, RhgcError
from rhgc.schemas.experiment import ExperimentConfig, LowerBoundSpec, load_config
from rhgc.schemas.reports import CanonicalReport, VerificationReport
from rhgc.services.control.adversary import build_instance, empirical_lower_bound, verify_pe_form, verify_y_decay
from rhgc.services.control.canonical import LtiSystem, to_canonical
from rhgc.services.experiments.instances import build_robot_instance, load_matrix
from rhgc.services.experiments.runner import (
    AlgorithmRegistry,
    config_zeta,
    run_experiment,
    sibling_path,
    sweep_report,
    write_table,
)
from rhgc.services.experiments.verify import SuiteParameters, verify_suite
from rhgc.services.robot.tracking import robot_rhgc

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VERIFICATION = 2

logger = logging.getLogger(__name__)


def configure_logging() -> None:
    # Configure logging
    logging.basicConfig(
        level=settings.LOG_LEVEL,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[
            logging.StreamHandler()
        ]
    )


def _load(args: argparse.Namespace) -> ExperimentConfig:
    path = args.config or settings.DEFAULT_CONFIG
    if path is None:
        raise ConfigError("<none>", "--config", "no config file given")
    config = load_config(path)
    if args.seed is not None:
        config = config.model_copy(update={"seeds": [args.seed]})
        config._path = path
    return config


def _output(args: argparse.Namespace, config: Optional[ExperimentConfig], default: str) -> str:
    if args.out:
        return args.out
    if config is not None and config.output:
        return config.output
    return default


def _print_report(report: VerificationReport) -> None:
    for check in report.checks:
        status = "SKIP" if check.skipped else ("PASS" if check.passed else "FAIL")
        detail = f" ({check.detail})" if check.detail else ""
        print(f"[{status}] {check.name}{detail}")


def cmd_transform(args: argparse.Namespace) -> int:
    """Canonical form of the (A, B) pair stored in two matrix files."""
    for path in (args.A, args.B):
        if not Path(path).is_file():
            raise ConfigError(path, "<file>", "matrix file not found")
    try:
        system = LtiSystem(A=load_matrix(args.A), B=load_matrix(args.B))
    except ValueError as e:
        if isinstance(e, RhgcError):
            raise
        raise ConfigError(args.A, "<file>", f"unreadable matrix: {str(e)}") from e
    canonical = to_canonical(system)
    report = CanonicalReport(
        A_hat=canonical.A_hat.tolist(),
        B_hat=canonical.B_hat.tolist(),
        S_x=canonical.S_x.tolist(),
        S_u=canonical.S_u.tolist(),
        actuated_rows=list(canonical.indices),
        p_list=list(canonical.p_list),
        p=canonical.p,
    )
    text = yaml.safe_dump(report.model_dump(), sort_keys=False)
    if args.out:
        Path(args.out).write_text(text)
        logger.info(f"Wrote canonical form to {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    config = _load(args)
    table = run_experiment(config, jobs=args.jobs)
    write_table(table, _output(args, config, f"{config.name}.csv"))
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _load(args)
    table = run_experiment(config, jobs=args.jobs)
    out = _output(args, config, f"{config.name}.csv")
    write_table(table, out)
    summary = sweep_report(table, zeta=config_zeta(config))
    write_table(summary.table, sibling_path(out, "_summary"))
    for name, slope in summary.slopes.items():
        logger.info(f"{name}: slope of log mean regret in K = {slope:.4g}")
    if not summary.piecewise_constant:
        logger.warning(f"{len(summary.piecewise_violations)} equal-K groups are not piecewise constant")
    if not summary.ordered:
        logger.error(f"Regret ordering failed in {len(summary.ordering_violations)} place(s)")
        return EXIT_VERIFICATION
    return EXIT_OK


def cmd_lower_bound(args: argparse.Namespace) -> int:
    config = _load(args) if args.config else None
    spec = LowerBoundSpec()
    N = 30
    seeds: List[int] = list(range(50))
    algorithm = "rhtm"
    if config is not None:
        if config.instance.source != "lower-bound":
            raise ConfigError(config.path, "instance.source", "the lower-bound command needs source 'lower-bound'")
        spec, N, seeds = config.instance.lower_bound, config.instance.N, list(config.seeds)
        algorithm = next((a for a in config.algorithms if a in ("rhgd", "rhag", "rhtm")), algorithm)
    overrides = {k: v for k, v in (("zeta", args.zeta), ("p", args.p), ("L_N", args.L_N),
                                   ("theta_bar", args.theta_bar)) if v is not None}
    spec = spec.model_copy(update=overrides)
    N = args.N if args.N is not None else N
    if args.seeds is not None:
        seeds = list(range(args.seeds))
    if args.seed is not None:
        seeds = [args.seed]

    instance = build_instance(spec.zeta, spec.p, N, spec.L_N, spec.theta_bar, seeds[0])
    report = VerificationReport(title="lower-bound instance")
    report.checks.extend(verify_pe_form(instance).checks)
    try:
        report.checks.extend(verify_y_decay(instance).checks)
    except NonIntegerHorizonRatio as e:
        report.skip("inverse decay", str(e))
    _print_report(report)

    if args.K_max is not None:
        K_values = list(range(args.K_max + 1))
    elif config is not None:
        K_values = sorted({(W - 1) // spec.p for W in config.W})
    else:
        K_values = list(range(6))
    runner = AlgorithmRegistry.get(algorithm)
    study = empirical_lower_bound(runner, algorithm, spec.zeta, spec.p, N, spec.L_N, spec.theta_bar,
                                  seeds, K_values)
    out = _output(args, config, "lower_bound.csv")
    write_table(study.table, out)
    theta = pd.DataFrame(instance.theta, columns=[f"theta_{i}" for i in range(instance.n)])
    theta.insert(0, "t", np.arange(len(theta)))
    write_table(theta, sibling_path(out, "_instance"))
    logger.info(f"c1={study.c1:.6g}, slope={study.slope:.6g}, rate bracket {study.rate_bracket}")
    return EXIT_OK if report.passed else EXIT_VERIFICATION


def cmd_robot(args: argparse.Namespace) -> int:
    config = _load(args)
    if config.instance.source != "robot":
        raise ConfigError(config.path, "instance.source", "the robot command needs source 'robot'")
    instance = build_robot_instance(config.instance)
    spec = config.instance.robot
    out = _output(args, config, f"{config.name}.csv")
    single = len(config.algorithms) == 1 and len(config.W) == 1
    costs = []
    for algorithm in config.algorithms:
        for W in config.W:
            run = robot_rhgc(instance, W, algorithm, oracle=spec.oracle, finite_difference=spec.finite_difference)
            executed, planned = run.frames(instance)
            path = out if single else sibling_path(out, f"_{algorithm}_W{W}")
            write_table(executed, path)
            write_table(planned, sibling_path(path, "_planned"))
            costs.append({"algorithm": algorithm, "W": run.W, "K": run.K, "cost": run.cost,
                          "planned_cost": run.planned_cost, "gradient_evaluations": run.gradient_evaluations})
    write_table(pd.DataFrame(costs), sibling_path(out, "_costs"))
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    params = SuiteParameters.quick() if args.quick else SuiteParameters()
    if args.seed is not None:
        params = dataclasses.replace(params, seed=args.seed)
    report = verify_suite(params)
    _print_report(report)
    return EXIT_OK if report.passed else EXIT_VERIFICATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rhgc",
        description="Receding-horizon gradient-based control with W-step lookahead",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment file")
    common.add_argument("--out", help="Output path")
    common.add_argument("--seed", type=int, help="Run a single seed instead of the configured list")
    common.add_argument("--jobs", type=int, default=settings.DEFAULT_JOBS, help="Worker processes")
    sub = parser.add_subparsers(dest="command", required=True)

    transform = sub.add_parser("transform", parents=[common], help="Canonical form of a matrix pair")
    transform.add_argument("A", help="State matrix file")
    transform.add_argument("B", help="Input matrix file")
    transform.set_defaults(handler=cmd_transform)

    sub.add_parser("run", parents=[common], help="Run a config and write its regret table").set_defaults(handler=cmd_run)
    sub.add_parser("sweep", parents=[common], help="Run a W sweep and write table and summary").set_defaults(handler=cmd_sweep)

    lower = sub.add_parser("lower-bound", parents=[common], help="Lower-bound family study")
    lower.add_argument("--zeta", type=float)
    lower.add_argument("--p", type=int)
    lower.add_argument("--N", type=int)
    lower.add_argument("--L-N", dest="L_N", type=float)
    lower.add_argument("--theta-bar", dest="theta_bar", type=float)
    lower.add_argument("--seeds", type=int, help="Number of seeds, 0..seeds-1")
    lower.add_argument("--K-max", dest="K_max", type=int)
    lower.set_defaults(handler=cmd_lower_bound)

    sub.add_parser("robot", parents=[common], help="Two-wheel robot tracking demo").set_defaults(handler=cmd_robot)

    verify = sub.add_parser("verify", parents=[common], help="Numeric invariant suite")
    verify.add_argument("--quick", action="store_true", help="Reduced instance counts")
    verify.set_defaults(handler=cmd_verify)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as e:
        logger.error(str(e))
        return EXIT_CONFIG
    except RhgcError as e:
        logger.error(f"{args.command} failed: {str(e)}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
