"""Treatment-effect estimators for logs collected under the production policy.

All three estimators only need per-variant counts, so a dataset is first
reduced to a :class:`LogSummary`:

- ``reward_counts[a]``: successful shares among sessions assigned ``a``;
- ``tail_sums[a]``: Σ over those sessions of the shares from that session to
  the end of its chain (the realised Q-value sample);
- ``session_counts[a]``, plus the trajectory and session totals.

Naïve and Differences-in-Qs scores are summed per trajectory and averaged over
trajectories. γ̂ divides by the flattened session count |𝒟|. IPS weights use
the logged policy, never probabilities re-estimated from the data.

Counts are integers and every estimate is formed as ``(count / π) / total``,
so duplicating each trajectory leaves all outputs bit-identical.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np
import polars as pl

from sharing.core import AteMatrix, Dataset, ProductionPolicy, VariantId
from sharing.errors import DegenerateEstimateError, EmptyDatasetError

logger = logging.getLogger(__name__)

#: γ̂ at or above 1 - GAMMA_EPSILON has no finite geometric value
GAMMA_EPSILON = 1e-9


class EstimatorKind(StrEnum):
    NAIVE = "naive"
    DIFF_IN_QS = "diff_in_qs"
    DIFF_IN_GEOMETRICS = "diff_in_geometrics"

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def parse(cls, text: str) -> "EstimatorKind":
        key = text.strip().lower().replace("-", "_")
        if key in _ALIASES:
            return _ALIASES[key]
        raise ValueError(
            f"unknown estimator {text!r}; choose from {', '.join(k.value for k in cls)}"
        )


_LABELS = {
    EstimatorKind.NAIVE: "Naïve",
    EstimatorKind.DIFF_IN_QS: "Differences-in-Qs",
    EstimatorKind.DIFF_IN_GEOMETRICS: "Differences-in-Geometrics",
}
_ALIASES = {
    **{k.value: k for k in EstimatorKind},
    "n": EstimatorKind.NAIVE,
    "q": EstimatorKind.DIFF_IN_QS,
    "qs": EstimatorKind.DIFF_IN_QS,
    "g": EstimatorKind.DIFF_IN_GEOMETRICS,
    "geometric": EstimatorKind.DIFF_IN_GEOMETRICS,
}

ALL_ESTIMATORS: tuple[EstimatorKind, ...] = tuple(EstimatorKind)


# ---------------------------------------------------------------------------
# Sufficient statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LogSummary:
    policy: ProductionPolicy
    n_trajectories: int
    n_sessions: int
    session_counts: np.ndarray
    reward_counts: np.ndarray
    tail_sums: np.ndarray

    def __add__(self, other: "LogSummary") -> "LogSummary":
        if self.policy != other.policy:
            raise ValueError("cannot combine summaries logged under different policies")
        return LogSummary(
            policy=self.policy,
            n_trajectories=self.n_trajectories + other.n_trajectories,
            n_sessions=self.n_sessions + other.n_sessions,
            session_counts=self.session_counts + other.session_counts,
            reward_counts=self.reward_counts + other.reward_counts,
            tail_sums=self.tail_sums + other.tail_sums,
        )

    @property
    def n_variants(self) -> int:
        return self.policy.n_variants

    def require_sessions(self) -> None:
        if self.n_sessions == 0:
            raise EmptyDatasetError("dataset holds no sessions")


def session_tails(dataset: Dataset) -> np.ndarray:
    """Shares from each session to the end of its own chain, Σ_{t' >= t} r_{t'}."""
    if dataset.n_sessions == 0:
        return np.zeros(0, dtype=np.int64)
    starts = dataset.trajectory_starts
    lengths = dataset.lengths
    cumulative = np.cumsum(dataset.reward)
    last_row = np.repeat(starts + lengths - 1, lengths)
    return cumulative[last_row] - cumulative + dataset.reward


def summarise(dataset: Dataset) -> LogSummary:
    """Reduce *dataset* to per-variant integer counts."""
    k = dataset.policy.n_variants
    variant, reward = dataset.variant, dataset.reward
    if dataset.n_sessions == 0:
        zeros = np.zeros(k, dtype=np.int64)
        return LogSummary(dataset.policy, 0, 0, zeros, zeros, zeros)

    tails = session_tails(dataset)
    return LogSummary(
        policy=dataset.policy,
        n_trajectories=dataset.n_trajectories,
        n_sessions=dataset.n_sessions,
        session_counts=np.bincount(variant, minlength=k).astype(np.int64),
        reward_counts=np.bincount(variant[reward == 1], minlength=k).astype(np.int64),
        tail_sums=np.rint(np.bincount(variant, weights=tails, minlength=k)).astype(np.int64),
    )


def _as_summary(data: Dataset | LogSummary) -> LogSummary:
    summary = data if isinstance(data, LogSummary) else summarise(data)
    summary.require_sessions()
    return summary


def _check_pair(n_variants: int, i: VariantId, j: VariantId) -> None:
    if i == j:
        raise ValueError(f"treatment effect of variant {i} against itself is undefined")
    for a in (i, j):
        if not (0 <= a < n_variants):
            raise ValueError(f"variant {a} outside 0..{n_variants - 1}")


# ---------------------------------------------------------------------------
# γ̂
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GammaEstimate:
    """IPS estimates γ̂_a with their diagnostic counts.

    γ̂_a may exceed 1 in small samples; :meth:`value` raises for those.
    """

    gammas: np.ndarray
    weight_sums: np.ndarray
    session_counts: np.ndarray
    n_sessions: int

    @classmethod
    def exact(cls, gammas: list[float] | tuple[float, ...]) -> "GammaEstimate":
        """Wrap known γ values (no diagnostics) to evaluate the closed forms directly."""
        arr = np.asarray(gammas, dtype=np.float64)
        zeros = np.zeros(len(arr), dtype=np.int64)
        return cls(arr, zeros.astype(np.float64), zeros, 0)

    def __len__(self) -> int:
        return len(self.gammas)

    def is_degenerate(self, a: VariantId) -> bool:
        return bool(self.gammas[a] >= 1.0 - GAMMA_EPSILON)

    def value(self, a: VariantId) -> float:
        """Geometric policy value 1/(1 - γ̂_a)."""
        if self.is_degenerate(a):
            raise DegenerateEstimateError(a, float(self.gammas[a]))
        return 1.0 / (1.0 - float(self.gammas[a]))


def estimate_gamma(data: Dataset | LogSummary) -> GammaEstimate:
    """γ̂_a = (1/|𝒟|) Σ_{(a', r) ∈ 𝒟} 1(a' = a) / π_p(a) · r."""
    s = _as_summary(data)
    probs = s.policy.as_array()
    return GammaEstimate(
        gammas=(s.reward_counts / probs) / s.n_sessions,
        weight_sums=s.session_counts / probs,
        session_counts=s.session_counts.copy(),
        n_sessions=s.n_sessions,
    )


# ---------------------------------------------------------------------------
# Pairwise estimators
# ---------------------------------------------------------------------------


def naive_ate(data: Dataset | LogSummary, i: VariantId, j: VariantId) -> float:
    """IPS-weighted rewards of *i* minus those of *j*, per trajectory."""
    s = _as_summary(data)
    _check_pair(s.n_variants, i, j)
    probs = s.policy.probs
    score = s.reward_counts[i] / probs[i] - s.reward_counts[j] / probs[j]
    return float(score / s.n_trajectories)


def diff_in_qs_ate(data: Dataset | LogSummary, i: VariantId, j: VariantId) -> float:
    """Like :func:`naive_ate` with each reward replaced by its chain's tail sum."""
    s = _as_summary(data)
    _check_pair(s.n_variants, i, j)
    probs = s.policy.probs
    score = s.tail_sums[i] / probs[i] - s.tail_sums[j] / probs[j]
    return float(score / s.n_trajectories)


def diff_in_geometrics_ate(gamma: GammaEstimate, i: VariantId, j: VariantId) -> float:
    """1/(1 - γ̂_i) - 1/(1 - γ̂_j)."""
    _check_pair(len(gamma), i, j)
    return gamma.value(i) - gamma.value(j)


def pairwise_ates(data: Dataset | LogSummary, kind: EstimatorKind) -> AteMatrix:
    """Apply one estimator to every pair; entries below the diagonal are negated mirrors."""
    s = _as_summary(data)
    if kind is EstimatorKind.DIFF_IN_GEOMETRICS:
        gamma = estimate_gamma(s)

        def effect(i: int, j: int) -> float:
            return diff_in_geometrics_ate(gamma, i, j)
    elif kind is EstimatorKind.DIFF_IN_QS:

        def effect(i: int, j: int) -> float:
            return diff_in_qs_ate(s, i, j)
    else:

        def effect(i: int, j: int) -> float:
            return naive_ate(s, i, j)

    def with_pair(i: int, j: int) -> float:
        try:
            return effect(i, j)
        except DegenerateEstimateError as exc:
            raise exc.with_pair((i, j)) from exc

    return AteMatrix.from_pairs(s.n_variants, with_pair)


# ---------------------------------------------------------------------------
# Report over a logged dataset
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimateRow:
    kind: EstimatorKind
    variant_i: int
    variant_j: int
    #: ``None`` when the estimate is degenerate
    estimate: float | None

    @property
    def degenerate(self) -> bool:
        return self.estimate is None


@dataclass(frozen=True, eq=False)
class EstimateReport:
    gamma: GammaEstimate
    rows: list[EstimateRow] = field(default_factory=list)
    absent_variants: list[int] = field(default_factory=list)

    @property
    def all_degenerate(self) -> bool:
        return bool(self.rows) and all(r.degenerate for r in self.rows)

    def to_frame(self) -> pl.DataFrame:
        """Long table: one ``gamma_hat`` row per variant, then one row per (estimator, pair)."""
        schema = {
            "quantity": pl.String,
            "variant_i": pl.Int64,
            "variant_j": pl.Int64,
            "value": pl.Float64,
            "sessions": pl.Int64,
            "weight_sum": pl.Float64,
            "degenerate": pl.Boolean,
        }
        records: list[dict[str, object]] = [
            {
                "quantity": "gamma_hat",
                "variant_i": a,
                "variant_j": None,
                "value": float(self.gamma.gammas[a]),
                "sessions": int(self.gamma.session_counts[a]),
                "weight_sum": float(self.gamma.weight_sums[a]),
                "degenerate": self.gamma.is_degenerate(a),
            }
            for a in range(len(self.gamma))
        ]
        records += [
            {
                "quantity": row.kind.value,
                "variant_i": row.variant_i,
                "variant_j": row.variant_j,
                "value": row.estimate,
                "sessions": None,
                "weight_sum": None,
                "degenerate": row.degenerate,
            }
            for row in self.rows
        ]
        return pl.DataFrame(records, schema=schema)


def estimate_all(
    data: Dataset | LogSummary,
    kinds: tuple[EstimatorKind, ...] | list[EstimatorKind] = ALL_ESTIMATORS,
) -> EstimateReport:
    """Every requested estimator on every ordered pair; degenerate cells are flagged."""
    s = _as_summary(data)
    gamma = estimate_gamma(s)
    absent = [a for a in range(s.n_variants) if s.session_counts[a] == 0]
    for a in absent:
        logger.warning("variant %d never appears in the log; gamma_hat is 0", a)

    rows: list[EstimateRow] = []
    for kind in kinds:
        try:
            matrix: AteMatrix | None = pairwise_ates(s, kind)
        except DegenerateEstimateError as exc:
            logger.warning("%s: %s", kind.value, exc)
            matrix = None
        for i in range(s.n_variants):
            for j in range(s.n_variants):
                if i == j:
                    continue
                if matrix is not None:
                    rows.append(EstimateRow(kind, i, j, matrix[i, j]))
                elif gamma.is_degenerate(i) or gamma.is_degenerate(j):
                    rows.append(EstimateRow(kind, i, j, None))
                else:
                    rows.append(EstimateRow(kind, i, j, diff_in_geometrics_ate(gamma, i, j)))
    return EstimateReport(gamma=gamma, rows=rows, absent_variants=absent)
