"""Repeated-simulation sweep: estimator MSE against the true ATE by sample size.

Each (repetition, sample size) cell samples its own dataset from a substream
derived from ``(base_seed, repetition, sample size)`` and evaluates every
estimator on that same dataset. Cells run in a process pool and are
aggregated in (repetition, sample size) order, so results do not depend on
the worker count.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import polars as pl

from sharing.core import SharingMdpConfig, upper_pairs, validate_config
from sharing.errors import ConfigError, DegenerateEstimateError
from sharing.estimators import (
    ALL_ESTIMATORS,
    EstimatorKind,
    GammaEstimate,
    LogSummary,
    diff_in_geometrics_ate,
    diff_in_qs_ate,
    estimate_gamma,
    naive_ate,
    summarise,
)
from sharing.oracle import true_ate_matrix
from sharing.simulator import (
    DEFAULT_SEED,
    NO_DRIFT,
    PRODUCTION,
    MisspecificationKnob,
    SimulationSeed,
    sample_dataset,
)

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_SIZES: tuple[int, ...] = (100, 300, 1_000, 3_000, 10_000, 30_000, 100_000)
DEFAULT_REPETITIONS = 32
Z_95 = 1.96

type Pair = tuple[int, int]
type CellKey = tuple[EstimatorKind, Pair, int]
type CellErrors = dict[tuple[EstimatorKind, Pair], float | None]


# ---------------------------------------------------------------------------
# Confidence intervals
# ---------------------------------------------------------------------------


def ci95(values: Sequence[float], *, nonnegative: bool = False) -> tuple[float, float, float]:
    """Normal-approximation 95% CI on the mean: ``mean ± 1.96·sd/√R``.

    The lower bound is clamped at 0 only with *nonnegative*; without it
    ``ci95([0, 2])`` has a negative lower bound. :meth:`CellStats.from_errors`
    opts in for squared errors.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.size < 2:
        raise ValueError(f"a confidence interval needs at least 2 values, got {arr.size}")
    mean = float(arr.mean())
    half = Z_95 * float(arr.std(ddof=1)) / math.sqrt(arr.size)
    low = mean - half
    if nonnegative:
        low = max(low, 0.0)
    return mean, low, mean + half


# ---------------------------------------------------------------------------
# Plan and result
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepPlan:
    config: SharingMdpConfig
    sample_sizes: tuple[int, ...] = DEFAULT_SAMPLE_SIZES
    repetitions: int = DEFAULT_REPETITIONS
    base_seed: SimulationSeed = DEFAULT_SEED
    estimators: tuple[EstimatorKind, ...] = ALL_ESTIMATORS
    knob: MisspecificationKnob = NO_DRIFT

    def __post_init__(self) -> None:
        object.__setattr__(self, "sample_sizes", tuple(int(n) for n in self.sample_sizes))
        object.__setattr__(
            self, "estimators", tuple(EstimatorKind(k) for k in self.estimators)
        )

    def validate(self) -> "SweepPlan":
        validate_config(self.config)
        sizes = self.sample_sizes
        if not sizes:
            raise ConfigError("sweep.sample_sizes must not be empty")
        if any(n < 10 for n in sizes):
            raise ConfigError(f"sweep.sample_sizes must all be >= 10, got {list(sizes)}")
        if any(b <= a for a, b in zip(sizes, sizes[1:], strict=False)):
            raise ConfigError(f"sweep.sample_sizes must be strictly increasing, got {list(sizes)}")
        if self.repetitions < 2:
            raise ConfigError(f"sweep.repetitions must be >= 2, got {self.repetitions}")
        if not self.estimators:
            raise ConfigError("sweep.estimators must name at least one estimator")
        if len(set(self.estimators)) != len(self.estimators):
            raise ConfigError("sweep.estimators lists an estimator twice")
        return self

    @property
    def pairs(self) -> list[Pair]:
        return upper_pairs(self.config.n_variants)

    def to_dict(self) -> dict[str, object]:
        return {
            "sample_sizes": list(self.sample_sizes),
            "repetitions": self.repetitions,
            "seed": self.base_seed.seed,
            "stream_id": self.base_seed.stream_id,
            "estimators": [k.value for k in self.estimators],
            "depth_drift": self.knob.depth_drift,
        }


@dataclass(frozen=True)
class CellStats:
    """Squared errors of one estimator on one pair at one sample size."""

    squared_errors: tuple[float, ...]
    failure_count: int
    mse: float
    ci_low: float
    ci_high: float

    @classmethod
    def from_errors(cls, errors: Sequence[float], failures: int) -> "CellStats":
        errors = tuple(errors)
        if len(errors) >= 2:
            mse, low, high = ci95(errors, nonnegative=True)
        else:
            # fewer than two usable repetitions: no CI
            mse = float(errors[0]) if errors else math.nan
            low = high = math.nan
        return cls(errors, failures, mse, low, high)


@dataclass(frozen=True)
class SweepResult:
    plan: SweepPlan
    cells: dict[CellKey, CellStats] = field(default_factory=dict)

    def __getitem__(self, key: CellKey) -> CellStats:
        return self.cells[key]

    def to_frame(self) -> pl.DataFrame:
        """One row per (estimator, pair, sample size), in plan order."""
        rows = []
        for kind in self.plan.estimators:
            for pair in self.plan.pairs:
                for n in self.plan.sample_sizes:
                    stats = self.cells[(kind, pair, n)]
                    rows.append(
                        {
                            "estimator": kind.value,
                            "variant_i": pair[0],
                            "variant_j": pair[1],
                            "sample_size": n,
                            "mse": stats.mse,
                            "ci_low": stats.ci_low,
                            "ci_high": stats.ci_high,
                            "failures": stats.failure_count,
                        }
                    )
        return pl.DataFrame(
            rows,
            schema={
                "estimator": pl.String,
                "variant_i": pl.Int64,
                "variant_j": pl.Int64,
                "sample_size": pl.Int64,
                "mse": pl.Float64,
                "ci_low": pl.Float64,
                "ci_high": pl.Float64,
                "failures": pl.Int64,
            },
        )

    def curve(self, kind: EstimatorKind, pair: Pair) -> pl.DataFrame:
        return (
            self.to_frame()
            .filter(
                (pl.col("estimator") == kind.value)
                & (pl.col("variant_i") == pair[0])
                & (pl.col("variant_j") == pair[1])
            )
            .select("sample_size", "mse", "ci_low", "ci_high", "failures")
        )


# ---------------------------------------------------------------------------
# Sweep
# ---------------------------------------------------------------------------


def _pair_estimate(
    kind: EstimatorKind, summary: LogSummary, gamma: GammaEstimate, pair: Pair
) -> float:
    if kind is EstimatorKind.NAIVE:
        return naive_ate(summary, *pair)
    if kind is EstimatorKind.DIFF_IN_QS:
        return diff_in_qs_ate(summary, *pair)
    return diff_in_geometrics_ate(gamma, *pair)


def run_cell(plan: SweepPlan, repetition: int, n: int) -> CellErrors:
    """Squared error per (estimator, pair) for one repetition; ``None`` marks a failure."""
    seed = plan.base_seed.derive(repetition, n)
    dataset = sample_dataset(plan.config, PRODUCTION, plan.knob, seed, n)
    summary = summarise(dataset)
    gamma = estimate_gamma(summary)
    truth = true_ate_matrix(plan.config)
    logger.debug("cell repetition=%d n=%d: %d sessions", repetition, n, summary.n_sessions)

    out: CellErrors = {}
    for kind in plan.estimators:
        for pair in plan.pairs:
            try:
                estimate = _pair_estimate(kind, summary, gamma, pair)
            except DegenerateEstimateError as exc:
                logger.warning(
                    "repetition %d, n=%d, %s: %s", repetition, n, kind.value, exc.with_pair(pair)
                )
                out[(kind, pair)] = None
                continue
            out[(kind, pair)] = (estimate - truth[pair]) ** 2
    return out


def _run_cell_args(args: tuple[SweepPlan, int, int]) -> CellErrors:
    return run_cell(*args)


def run_sweep(plan: SweepPlan, parallelism: int = 1) -> SweepResult:
    """Simulate every (repetition, sample size) cell and aggregate MSE with 95% CIs."""
    plan.validate()
    work = [(plan, r, n) for r in range(plan.repetitions) for n in plan.sample_sizes]
    logger.info(
        "sweep: %d repetitions x %d sample sizes x %d estimators on %d workers",
        plan.repetitions,
        len(plan.sample_sizes),
        len(plan.estimators),
        parallelism,
    )
    if parallelism <= 1:
        outcomes = [_run_cell_args(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(_run_cell_args, work, chunksize=4))
    by_cell = {(r, n): outcome for (_, r, n), outcome in zip(work, outcomes, strict=True)}

    cells: dict[CellKey, CellStats] = {}
    for kind in plan.estimators:
        for pair in plan.pairs:
            for n in plan.sample_sizes:
                values = [by_cell[(r, n)][(kind, pair)] for r in range(plan.repetitions)]
                errors = [v for v in values if v is not None]
                cells[(kind, pair, n)] = CellStats.from_errors(errors, len(values) - len(errors))
    logger.info("sweep: finished %d cells", len(work))
    return SweepResult(plan=plan, cells=cells)
