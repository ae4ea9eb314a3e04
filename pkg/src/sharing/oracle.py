"""Ground-truth values and reference computations.

Under constant continuation probability γ a chain's length is geometric on
{1, 2, ...}, so the value of the constant policy π_a is::

    V(π_a) = Σ_k k γ^(k-1) (1 - γ) = 1 / (1 - γ)

The large-sample limits of the Naïve and Differences-in-Qs estimators follow
from the mixture share rate γ̄ = Σ_a π_p(a) γ_a: a session assigned ``a``
shares w.p. γ_a, a chain holds 1/(1 - γ̄) sessions on average, and the
shares downstream of a successful share form a fresh chain. Hence::

    naive  -> (γ_i - γ_j) / (1 - γ̄)
    diff_in_qs -> (γ_i - γ_j) / (1 - γ̄)^2

Both limits are derivations, not established results: use
:func:`validate_asymptotes` before treating them as oracles.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from sharing.core import AteMatrix, SharingMdpConfig, VariantId, upper_pairs, validate_config
from sharing.errors import DomainError
from sharing.estimators import EstimatorKind, session_tails
from sharing.simulator import NO_DRIFT, PRODUCTION, SimulationSeed, iter_blocks

logger = logging.getLogger(__name__)

DEFAULT_K_MAX = 10_000
VALIDATION_TRAJECTORIES = 10_000_000
VALIDATION_SEED = SimulationSeed(20_240_901)


def _check_gamma(gamma_a: float) -> float:
    gamma_a = float(gamma_a)
    if not (0.0 <= gamma_a < 1.0):
        raise DomainError(f"continuation probability must lie in [0, 1), got {gamma_a!r}")
    return gamma_a


# ---------------------------------------------------------------------------
# Policy values
# ---------------------------------------------------------------------------


def true_value(gamma_a: float) -> float:
    """Closed-form V(π_a) = 1/(1 - γ_a), in sessions per seed session."""
    return 1.0 / (1.0 - _check_gamma(gamma_a))


def truncated_series_value(gamma_a: float, k_max: int = DEFAULT_K_MAX) -> float:
    """Partial sum Σ_{k=1}^{k_max} k γ^(k-1) (1 - γ); the k = 0 term is zero."""
    gamma_a = _check_gamma(gamma_a)
    if k_max < 1:
        raise DomainError(f"k_max must be >= 1, got {k_max}")
    k = np.arange(1, k_max + 1, dtype=np.float64)
    terms = k * np.power(gamma_a, k - 1) * (1.0 - gamma_a)
    return math.fsum(terms.tolist())


def series_remainder(gamma_a: float, k_max: int) -> float:
    """Exact tail Σ_{k>k_max} k γ^(k-1) (1 - γ) = γ^k_max (k_max + 1/(1 - γ))."""
    gamma_a = _check_gamma(gamma_a)
    return gamma_a**k_max * (k_max + 1.0 / (1.0 - gamma_a))


def true_ate_matrix(config: SharingMdpConfig) -> AteMatrix:
    """V(π_{a_i}) - V(π_{a_j}) for every ordered pair."""
    validate_config(config)
    values = [true_value(g) for g in config.gammas]
    return AteMatrix.from_pairs(config.n_variants, lambda i, j: values[i] - values[j])


# ---------------------------------------------------------------------------
# Estimator limits
# ---------------------------------------------------------------------------


def naive_asymptote(config: SharingMdpConfig, i: VariantId, j: VariantId) -> float:
    validate_config(config)
    return (config.gammas[i] - config.gammas[j]) / (1.0 - config.mean_gamma)


def diff_in_qs_asymptote(config: SharingMdpConfig, i: VariantId, j: VariantId) -> float:
    validate_config(config)
    return (config.gammas[i] - config.gammas[j]) / (1.0 - config.mean_gamma) ** 2


_ASYMPTOTES = {
    EstimatorKind.NAIVE: naive_asymptote,
    EstimatorKind.DIFF_IN_QS: diff_in_qs_asymptote,
}


@dataclass(frozen=True)
class AsymptoteFinding:
    """Formula limit next to a brute-force Monte-Carlo evaluation of the estimator."""

    kind: EstimatorKind
    pair: tuple[int, int]
    formula: float
    monte_carlo: float
    standard_error: float
    tolerance_se: float

    @property
    def agrees(self) -> bool:
        return abs(self.formula - self.monte_carlo) <= self.tolerance_se * self.standard_error

    @property
    def target(self) -> float:
        """The value tests should use: the formula if confirmed, else the Monte-Carlo value."""
        return self.formula if self.agrees else self.monte_carlo


def validate_asymptotes(
    config: SharingMdpConfig,
    n_trajectories: int = VALIDATION_TRAJECTORIES,
    seed: SimulationSeed = VALIDATION_SEED,
    *,
    tolerance_se: float = 4.0,
) -> list[AsymptoteFinding]:
    """Evaluate Naïve and Differences-in-Qs on a large drift-free log, block by block.

    Per-trajectory scores are accumulated as running sums, so memory stays
    bounded by one block. Disagreements are logged as findings.
    """
    validate_config(config)
    k = config.n_variants
    probs = config.policy.as_array()
    pairs = upper_pairs(k)
    kinds = tuple(_ASYMPTOTES)
    sums = {(kind, pair): 0.0 for kind in kinds for pair in pairs}
    squares = dict(sums)

    for block in iter_blocks(config, PRODUCTION, NO_DRIFT, seed, n_trajectories):
        n_traj = block.n_trajectories
        traj_index = np.repeat(np.arange(n_traj), block.lengths)
        cell = traj_index * k + block.variant
        per_traj = {
            EstimatorKind.NAIVE: np.bincount(cell, weights=block.reward, minlength=n_traj * k),
            EstimatorKind.DIFF_IN_QS: np.bincount(
                cell, weights=session_tails(block), minlength=n_traj * k
            ),
        }
        for kind, flat in per_traj.items():
            weighted = flat.reshape(n_traj, k) / probs
            for i, j in pairs:
                scores = weighted[:, i] - weighted[:, j]
                sums[(kind, (i, j))] += math.fsum(scores.tolist())
                squares[(kind, (i, j))] += float(np.dot(scores, scores))

    findings: list[AsymptoteFinding] = []
    for (kind, pair), total in sums.items():
        mean = total / n_trajectories
        variance = max(squares[(kind, pair)] / n_trajectories - mean * mean, 0.0)
        se = math.sqrt(variance / n_trajectories)
        finding = AsymptoteFinding(
            kind=kind,
            pair=pair,
            formula=_ASYMPTOTES[kind](config, *pair),
            monte_carlo=mean,
            standard_error=se,
            tolerance_se=tolerance_se,
        )
        if not finding.agrees:
            logger.warning(
                "finding: %s limit for pair %s is %.6f by formula but %.6f ± %.6f by Monte Carlo",
                kind.value,
                pair,
                finding.formula,
                finding.monte_carlo,
                se,
            )
        findings.append(finding)
    return findings
