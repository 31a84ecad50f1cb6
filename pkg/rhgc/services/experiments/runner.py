"""
Experiment orchestration: regret sweeps over (algorithm, W, seed), their summaries and the
deterministic CSV output.
"""
from dataclasses import dataclass, field
from multiprocessing import Pool
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple
import logging
import time

import numpy as np
import pandas as pd
from scipy import stats

from rhgc.core.config import settings
from rhgc.core.errors import ConfigError, RhgcError
from rhgc.schemas.experiment import ExperimentConfig
from rhgc.schemas.reports import SweepRow
from rhgc.services.control.algorithms import (
    OnlineRun,
    acceleration_threshold,
    dynamic_regret,
    foss_run,
    rhag_run,
    rhgd_run,
    rhtm_run,
)
from rhgc.services.control.baselines import OfflineSolution, offline_optimal, submpc_run
from rhgc.services.control.reformulate import ZCost
from rhgc.services.experiments.instances import build_for_config

# Configure logging
logger = logging.getLogger(__name__)

SWEEP_COLUMNS = list(SweepRow.model_fields)
# Algorithms whose regret depends on W only through K
DETERMINISTIC_K_ALGORITHMS = ("foss", "rhgd", "rhag", "rhtm")
PIECEWISE_TOLERANCE = 1e-9
ORDERING_TOLERANCE = 1e-9


class AlgorithmRegistry:
    """Named online algorithms taking (zcost, W)."""

    available_algorithms: Dict[str, Callable[[ZCost, int], OnlineRun]] = {
        "foss": lambda zcost, W: foss_run(zcost),
        "rhgd": lambda zcost, W: rhgd_run(zcost, W),
        "rhag": lambda zcost, W: rhag_run(zcost, W),
        "rhtm": lambda zcost, W: rhtm_run(zcost, W),
    }

    @classmethod
    def get(cls, name: str) -> Callable[[ZCost, int], OnlineRun]:
        if name in cls.available_algorithms:
            return cls.available_algorithms[name]
        if name.startswith("submpc-"):
            iterations = int(name.split("-", 1)[1])
            return lambda zcost, W: submpc_run(zcost, W, iterations)
        raise ValueError(f"Unknown algorithm '{name}'. Available: {list(cls.available_algorithms)} and submpc-<k>")

    @classmethod
    def run(cls, name: str, zcost: ZCost, W: int) -> OnlineRun:
        return cls.get(name)(zcost, W)


def _row(run: OnlineRun, name: str, W: int, seed: int, offline: OfflineSolution, zeta: float,
         wall_time: float, p: int) -> SweepRow:
    report = dynamic_regret(run, offline.J_star, zeta)
    # FOSS ignores the window; its rows carry the configured W with K = 0
    K = 0 if name == "foss" else (W - 1) // p
    return SweepRow(
        algorithm=name,
        W=W,
        K=K,
        seed=seed,
        J_online=report.J_online,
        J_star=report.J_star,
        regret=report.regret,
        bound_factor=report.bound_factor,
        gradient_evaluations=report.gradient_evaluations,
        wall_time=wall_time,
    )


def run_seed(config: ExperimentConfig, seed: int, use_cache: bool = True) -> List[SweepRow]:
    """
    All (algorithm, W) rows of one seed.

    The offline optimum is computed once per seed unless use_cache is False, in which case it is
    recomputed for every row; both give identical rows.
    """
    built = build_for_config(config, seed)
    zcost = built.zcost
    cached: Optional[OfflineSolution] = None
    rows = []
    for name in config.algorithms:
        for W in config.W:
            if cached is None or not use_cache:
                cached = offline_optimal(zcost, method=config.offline_method)
            start = time.perf_counter()
            try:
                run = AlgorithmRegistry.run(name, zcost, W)
            except RhgcError as e:
                logger.error(f"{name} failed on seed {seed}, W={W}: {str(e)}")
                raise
            elapsed = time.perf_counter() - start
            rows.append(_row(run, name, W, seed, cached, zcost.zeta, elapsed, zcost.p))
    return rows


def _run_seed_task(task: Tuple[ExperimentConfig, int, bool]) -> List[SweepRow]:
    config, seed, use_cache = task
    return run_seed(config, seed, use_cache)


def run_experiment(config: ExperimentConfig, jobs: int = 1, use_cache: bool = True) -> pd.DataFrame:
    """
    Run every (algorithm, W, seed) triple of a config.

    Args:
        config: Validated experiment config
        jobs: Worker processes; seeds are distributed across them
        use_cache: Reuse the offline optimum within a seed

    Returns:
        Table with one SweepRow per triple, ordered by (algorithm, W, seed) as listed in the config

    Raises:
        ConfigError: for robot configs, which are run by the robot command
    """
    if config.instance.source == "robot":
        raise ConfigError(config.path, "instance.source", "robot configs are run with the robot command")
    tasks = [(config, seed, use_cache) for seed in config.seeds]
    logger.info(
        f"Running {config.name}: {len(config.algorithms)} algorithms x {len(config.W)} windows x "
        f"{len(config.seeds)} seeds on {jobs} worker(s)"
    )
    if jobs > 1 and len(tasks) > 1:
        with Pool(min(jobs, len(tasks))) as pool:
            per_seed = pool.map(_run_seed_task, tasks)
    else:
        per_seed = [_run_seed_task(task) for task in tasks]

    table = pd.DataFrame([row.model_dump() for rows in per_seed for row in rows], columns=SWEEP_COLUMNS)
    order = {name: k for k, name in enumerate(config.algorithms)}
    table["_order"] = table["algorithm"].map(order)
    table = table.sort_values(["_order", "W", "seed"], kind="mergesort").drop(columns="_order")
    return table.reset_index(drop=True)


def config_zeta(config: ExperimentConfig) -> float:
    """Largest condition number of C(z) over the seeds of a config."""
    return max(build_for_config(config, seed).zcost.zeta for seed in config.seeds)


@dataclass
class SweepSummary:
    """Aggregated sweep: mean regret per (algorithm, W) plus trend diagnostics."""
    table: pd.DataFrame
    # Slope of log mean regret against K, per algorithm
    slopes: Dict[str, float]
    # (algorithm, seed, K, spread) groups whose regret varies across equal-K windows
    piecewise_violations: pd.DataFrame
    ordering_violations: List[str] = field(default_factory=list)

    @property
    def piecewise_constant(self) -> bool:
        return self.piecewise_violations.empty

    @property
    def ordered(self) -> bool:
        return not self.ordering_violations


def sweep_report(table: pd.DataFrame, zeta: Optional[float] = None) -> SweepSummary:
    """
    Summarize a sweep table.

    Args:
        table: Rows as produced by run_experiment
        zeta: Largest condition number over the seeds; sets the K from which the accelerated
            orderings are checked (K = 2 when omitted)

    Returns:
        SweepSummary; piecewise-constancy is checked for the algorithms whose online result
        depends on W only through K
    """
    if table.empty:
        raise ValueError("Cannot summarize an empty sweep table")
    summary = (
        table.groupby(["algorithm", "W"], sort=False)
        .agg(K=("K", "first"), seeds=("seed", "count"), mean_regret=("regret", "mean"),
             min_regret=("regret", "min"), max_regret=("regret", "max"), mean_J_star=("J_star", "mean"))
        .reset_index()
    )

    slopes: Dict[str, float] = {}
    for name, group in summary.groupby("algorithm", sort=False):
        per_K = group.groupby("K")["mean_regret"].mean()
        per_K = per_K[per_K > 0]
        if len(per_K) >= 2:
            slopes[name] = float(stats.linregress(per_K.index.to_numpy(dtype=float), np.log(per_K.to_numpy())).slope)
        else:
            slopes[name] = float("nan")

    deterministic = table[table["algorithm"].isin(DETERMINISTIC_K_ALGORITHMS)]
    if deterministic.empty:
        violations = pd.DataFrame(columns=["algorithm", "seed", "K", "spread", "scale"])
    else:
        spreads = (
            deterministic.groupby(["algorithm", "seed", "K"], sort=False)["regret"]
            .agg(spread=lambda r: float(r.max() - r.min()), scale=lambda r: max(1.0, float(r.abs().max())))
            .reset_index()
        )
        violations = spreads[spreads["spread"] > PIECEWISE_TOLERANCE * spreads["scale"]]
    for _, row in violations.iterrows():
        logger.warning(f"{row['algorithm']} regret varies by {row['spread']:.3e} at K={row['K']}, seed {row['seed']}")

    accelerated_K = 2 if zeta is None else acceleration_threshold(zeta)
    ordering = _ordering_violations(summary, accelerated_K)
    for message in ordering:
        logger.warning(message)
    return SweepSummary(
        table=summary, slopes=slopes, piecewise_violations=violations.reset_index(drop=True),
        ordering_violations=ordering,
    )


def _ordering_violations(summary: pd.DataFrame, accelerated_K: int) -> List[str]:
    """
    Trend and ordering of the mean regret per W.

    RHGD is nonincreasing in K and RHAG <= RHGD from K = 2. The accelerated comparisons (RHTM <= RHAG,
    RHTM <= subMPC(1) and monotonicity of RHAG and RHTM) apply from accelerated_K on.
    """
    pivot = summary.pivot(index="W", columns="algorithm", values="mean_regret")
    K = summary.groupby("W")["K"].max()
    messages = []

    def above(W: int, lower: str, upper: str) -> bool:
        return (lower in pivot and upper in pivot
                and pivot.loc[W, lower] > pivot.loc[W, upper] * (1 + ORDERING_TOLERANCE) + 1e-12)

    for W in pivot.index:
        pairs = []
        if K.loc[W] >= 2:
            pairs.append(("rhag", "rhgd"))
        if K.loc[W] >= max(2, accelerated_K):
            pairs.append(("rhtm", "rhag"))
        if K.loc[W] >= accelerated_K:
            pairs.append(("rhtm", "submpc-1"))
        for lower, upper in pairs:
            if above(W, lower, upper):
                messages.append(f"W={W}: mean {lower} regret above mean {upper} regret")

    for name, start in (("rhgd", 0), ("rhag", accelerated_K), ("rhtm", accelerated_K)):
        group = summary[(summary["algorithm"] == name) & (summary["K"] >= start)]
        per_K = group.groupby("K")["mean_regret"].mean().sort_index()
        for (k_low, low), (k_high, high) in zip(per_K.items(), list(per_K.items())[1:]):
            if high > low * (1 + ORDERING_TOLERANCE) + 1e-12:
                messages.append(f"{name}: mean regret grows from K={k_low} to K={k_high}")
    return messages


def float_format() -> str:
    return f"%.{settings.CSV_SIGNIFICANT_DIGITS}g"


def write_table(table: pd.DataFrame, path: str, drop_wall_time: Optional[bool] = None) -> None:
    """
    Comma-separated output with a header and 17 significant digits.

    wall_time is dropped unless INCLUDE_WALL_TIME is set, so repeated runs are byte-identical.
    """
    drop = (not settings.INCLUDE_WALL_TIME) if drop_wall_time is None else drop_wall_time
    if drop and "wall_time" in table.columns:
        table = table.drop(columns="wall_time")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, float_format=float_format(), lineterminator="\n")
    logger.info(f"Wrote {len(table)} rows to {path}")


def sibling_path(path: str, suffix: str) -> str:
    """'out/sweep.csv' with suffix '_summary' -> 'out/sweep_summary.csv'."""
    target = Path(path)
    extension = target.suffix or ".csv"
    return str(target.with_name(f"{target.stem}{suffix}{extension}"))
