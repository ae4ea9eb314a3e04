"""Domain types for the sharing-chain MDP.

A *session* is one user visit that was assigned a system variant. A session
either produces a successful share (reward 1), which starts the next session
of the same chain, or it does not (reward 0), which ends the chain. A
*trajectory* is one such chain; a *dataset* is a batch of trajectories logged
under the production policy.

Rewards count successful shares, so a chain of length ``L`` carries reward
``L - 1``. Policy values are reported as expected chain length, ``1/(1 - γ)``,
which differs from the expected share count by the constant 1; the offset
cancels in every treatment effect.

All types are immutable after construction.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterator, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
import polars as pl

from sharing.errors import ConfigError, LogFormatError

type VariantId = int

PROB_SUM_TOL = 1e-12
DEFAULT_MAX_CHAIN_LENGTH = 1_000_000

SESSION_COLUMNS = ("trajectory_id", "position", "variant", "reward")
SESSION_SCHEMA = {name: pl.Int64 for name in SESSION_COLUMNS}


def _frozen_array(values: Any, dtype: type = np.int64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Policy and MDP config
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProductionPolicy:
    """Assignment probabilities π_p(a), one per variant."""

    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))

    @property
    def n_variants(self) -> int:
        return len(self.probs)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=np.float64)

    def to_dict(self) -> dict[str, Any]:
        return {"probabilities": list(self.probs)}


@dataclass(frozen=True)
class SharingMdpConfig:
    """Ground truth of the sharing-chain MDP: π_p and γ_a per variant."""

    policy: ProductionPolicy
    gammas: tuple[float, ...]
    max_chain_length: int = DEFAULT_MAX_CHAIN_LENGTH

    def __post_init__(self) -> None:
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))

    @classmethod
    def from_lists(
        cls,
        probs: Sequence[float],
        gammas: Sequence[float],
        max_chain_length: int = DEFAULT_MAX_CHAIN_LENGTH,
    ) -> "SharingMdpConfig":
        return cls(ProductionPolicy(tuple(probs)), tuple(gammas), max_chain_length)

    @property
    def n_variants(self) -> int:
        return len(self.gammas)

    @property
    def mean_gamma(self) -> float:
        """γ̄ = Σ_a π_p(a) γ_a, the per-session share rate under π_p."""
        return math.fsum(p * g for p, g in zip(self.policy.probs, self.gammas, strict=True))

    def gamma_array(self) -> np.ndarray:
        return np.asarray(self.gammas, dtype=np.float64)

    def to_dict(self) -> dict[str, Any]:
        return {
            "probabilities": list(self.policy.probs),
            "gammas": list(self.gammas),
            "max_chain_length": self.max_chain_length,
        }


def validate_policy(policy: ProductionPolicy) -> ProductionPolicy:
    """Return *policy* unchanged or raise :class:`ConfigError`."""
    probs = policy.probs
    if len(probs) < 2:
        raise ConfigError(f"need at least 2 variants, got {len(probs)}")
    for a, p in enumerate(probs):
        if not math.isfinite(p) or p <= 0.0:
            raise ConfigError(f"variant {a} has non-positive probability {p!r}")
    total = math.fsum(probs)
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise ConfigError(f"probabilities sum to {total!r}, expected 1")
    return policy


def validate_config(config: SharingMdpConfig) -> SharingMdpConfig:
    """Return *config* unchanged iff every invariant holds.

    Raises :class:`ConfigError` naming the first violated invariant.
    """
    n_probs, n_gammas = len(config.policy.probs), len(config.gammas)
    if min(n_probs, n_gammas) < 2:
        raise ConfigError(f"need at least 2 variants, got {min(n_probs, n_gammas)}")
    if n_probs != n_gammas:
        raise ConfigError(
            f"length mismatch: {n_probs} probabilities but {n_gammas} continuation probabilities"
        )
    validate_policy(config.policy)
    for a, g in enumerate(config.gammas):
        if not (0.0 <= g < 1.0):
            raise ConfigError(f"gamma of variant {a} must lie in [0, 1), got {g!r}")
    if not isinstance(config.max_chain_length, int) or config.max_chain_length < 1:
        raise ConfigError(f"max_chain_length must be >= 1, got {config.max_chain_length!r}")
    return config


# ---------------------------------------------------------------------------
# Sessions and trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SessionRecord:
    trajectory_id: int
    position: int
    variant: VariantId
    #: 1 iff this session produced a successful share
    reward: int

    def __post_init__(self) -> None:
        if self.reward not in (0, 1):
            raise ValueError(f"reward must be 0 or 1, got {self.reward!r}")


@dataclass(frozen=True)
class Trajectory:
    """One sharing chain, ordered by position."""

    sessions: tuple[SessionRecord, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "sessions", tuple(self.sessions))
        if not self.sessions:
            raise ValueError("a trajectory holds at least one session")
        tid = self.sessions[0].trajectory_id
        last = len(self.sessions) - 1
        for t, s in enumerate(self.sessions):
            if s.trajectory_id != tid:
                raise ValueError(f"mixed trajectory ids {tid} and {s.trajectory_id}")
            if s.position != t:
                raise ValueError(f"position {s.position} found where {t} was expected")
            if s.reward != (0 if t == last else 1):
                raise ValueError(f"trajectory {tid}: reward {s.reward} at position {t}")

    @classmethod
    def from_pairs(
        cls, trajectory_id: int, pairs: Sequence[tuple[VariantId, int]]
    ) -> "Trajectory":
        """Build from ``(variant, reward)`` pairs in chain order."""
        return cls(
            tuple(
                SessionRecord(trajectory_id, t, int(a), int(r)) for t, (a, r) in enumerate(pairs)
            )
        )

    @property
    def trajectory_id(self) -> int:
        return self.sessions[0].trajectory_id

    def __len__(self) -> int:
        return len(self.sessions)

    @property
    def variants(self) -> list[VariantId]:
        return [s.variant for s in self.sessions]


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------


def _starts(trajectory_id: np.ndarray, position: np.ndarray) -> np.ndarray:
    """Rows opening a trajectory: the id changes or the position resets to 0."""
    new_traj = position == 0
    new_traj[0] = True
    new_traj[1:] |= trajectory_id[1:] != trajectory_id[:-1]
    return np.flatnonzero(new_traj)


def first_violation(
    trajectory_id: np.ndarray,
    position: np.ndarray,
    variant: np.ndarray,
    reward: np.ndarray,
    n_variants: int,
) -> tuple[int, str] | None:
    """Return ``(row, reason)`` for the first row breaking the session-log rules."""
    m = len(trajectory_id)
    if m == 0:
        return None
    problems: list[tuple[int, str]] = []

    bad = np.flatnonzero((reward != 0) & (reward != 1))
    if bad.size:
        problems.append((int(bad[0]), f"reward must be 0 or 1, got {reward[bad[0]]}"))
    bad = np.flatnonzero((variant < 0) | (variant >= n_variants))
    if bad.size:
        problems.append(
            (int(bad[0]), f"variant {variant[bad[0]]} outside 0..{n_variants - 1}")
        )

    new_traj = np.ones(m, dtype=bool)
    new_traj[1:] = trajectory_id[1:] != trajectory_id[:-1]
    starts = np.flatnonzero(new_traj)
    bad = np.flatnonzero(np.diff(trajectory_id[starts]) <= 0)
    if bad.size:
        row = int(starts[bad[0] + 1])
        problems.append(
            (row, f"trajectory {trajectory_id[row]} is not contiguous or not ascending")
        )

    lengths = np.diff(np.append(starts, m))
    expected_pos = np.arange(m) - np.repeat(starts, lengths)
    bad = np.flatnonzero(position != expected_pos)
    if bad.size:
        row = int(bad[0])
        problems.append((row, f"position {position[row]} where {expected_pos[row]} was expected"))

    is_last = np.zeros(m, dtype=bool)
    is_last[starts + lengths - 1] = True
    bad = np.flatnonzero(reward != np.where(is_last, 0, 1))
    if bad.size:
        row = int(bad[0])
        what = "terminal session" if is_last[row] else "non-terminal session"
        problems.append((row, f"{what} has reward {reward[row]}"))

    return min(problems) if problems else None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Sessions logged under a production policy, stored column-wise.

    Rows are ordered by trajectory, then by position; ``flatten`` and
    ``trajectories`` rebuild the record view.
    """

    trajectory_id: np.ndarray
    position: np.ndarray
    variant: np.ndarray
    reward: np.ndarray
    policy: ProductionPolicy

    def __post_init__(self) -> None:
        for name in SESSION_COLUMNS:
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))
        lengths = {len(getattr(self, name)) for name in SESSION_COLUMNS}
        if len(lengths) != 1:
            raise ValueError("session columns differ in length")

    # ------------------------------------------------------------------
    # Constructors
    # ------------------------------------------------------------------

    @classmethod
    def from_trajectories(
        cls, trajectories: Sequence[Trajectory], policy: ProductionPolicy
    ) -> "Dataset":
        """Rows of *trajectories* in order; ids must be strictly ascending."""
        rows = [s for traj in trajectories for s in traj.sessions]
        ids = [traj.trajectory_id for traj in trajectories]
        for prev, cur in zip(ids, ids[1:], strict=False):
            if cur <= prev:
                raise LogFormatError(f"trajectory {cur} follows {prev}; ids must be ascending")
        return cls(
            trajectory_id=[s.trajectory_id for s in rows],
            position=[s.position for s in rows],
            variant=[s.variant for s in rows],
            reward=[s.reward for s in rows],
            policy=policy,
        )

    @classmethod
    def from_frame(cls, frame: pl.DataFrame, policy: ProductionPolicy) -> "Dataset":
        return cls(
            **{name: frame[name].to_numpy() for name in SESSION_COLUMNS},
            policy=policy,
        )

    @classmethod
    def concat(cls, parts: Sequence["Dataset"], policy: ProductionPolicy) -> "Dataset":
        if not parts:
            return cls([], [], [], [], policy)
        return cls(
            **{name: np.concatenate([getattr(p, name) for p in parts]) for name in SESSION_COLUMNS},
            policy=policy,
        )

    # ------------------------------------------------------------------
    # Views
    # ------------------------------------------------------------------

    @property
    def n_sessions(self) -> int:
        """|𝒟|: the flattened session count."""
        return len(self.reward)

    @cached_property
    def trajectory_starts(self) -> np.ndarray:
        m = self.n_sessions
        if m == 0:
            return np.zeros(0, dtype=np.int64)
        return _starts(self.trajectory_id, self.position)

    @property
    def n_trajectories(self) -> int:
        return len(self.trajectory_starts)

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(np.append(self.trajectory_starts, self.n_sessions))

    @property
    def trajectories(self) -> list[Trajectory]:
        return list(self.iter_trajectories())

    def iter_trajectories(self) -> Iterator[Trajectory]:
        if self.n_sessions == 0:
            return
        ends = np.append(self.trajectory_starts[1:], self.n_sessions)
        for start, end in zip(self.trajectory_starts, ends, strict=True):
            yield Trajectory(
                tuple(
                    SessionRecord(
                        int(self.trajectory_id[k]),
                        int(self.position[k]),
                        int(self.variant[k]),
                        int(self.reward[k]),
                    )
                    for k in range(start, end)
                )
            )

    def to_frame(self) -> pl.DataFrame:
        return pl.DataFrame(
            {name: getattr(self, name) for name in SESSION_COLUMNS}, schema=SESSION_SCHEMA
        )

    def validate(self, max_chain_length: int | None = None) -> "Dataset":
        """Check every trajectory invariant; raise :class:`LogFormatError` on the first breach."""
        found = first_violation(
            self.trajectory_id, self.position, self.variant, self.reward, self.policy.n_variants
        )
        if found is not None:
            row, reason = found
            raise LogFormatError(f"session row {row}: {reason}")
        if max_chain_length is not None and self.n_sessions:
            longest = int(self.lengths.max())
            if longest > max_chain_length:
                raise LogFormatError(
                    f"trajectory of length {longest} exceeds max_chain_length {max_chain_length}"
                )
        return self

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.policy == other.policy and all(
            np.array_equal(getattr(self, name), getattr(other, name)) for name in SESSION_COLUMNS
        )

    __hash__ = None  # type: ignore[assignment]


def flatten(dataset: Dataset) -> list[SessionRecord]:
    """All sessions in trajectory order, then position order."""
    return [s for traj in dataset.iter_trajectories() for s in traj.sessions]


# ---------------------------------------------------------------------------
# Treatment-effect matrix
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AteMatrix:
    """V_Δ(π_{a_i}, π_{a_j}) for every ordered pair; antisymmetric by construction."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {values.shape}")
        if not np.all(np.diag(values) == 0.0):
            raise ValueError("diagonal entries must be exactly 0")
        upper = np.triu_indices(values.shape[0], k=1)
        if not np.array_equal(values[upper], -values.T[upper]):
            raise ValueError("matrix is not antisymmetric")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_pairs(cls, n_variants: int, effect: Callable[[int, int], float]) -> "AteMatrix":
        """Evaluate *effect* on each unordered pair ``i < j`` and mirror with negation."""
        values = np.zeros((n_variants, n_variants), dtype=np.float64)
        for i, j in upper_pairs(n_variants):
            v = float(effect(i, j))
            values[i, j] = v
            values[j, i] = -v
        return cls(values)

    @property
    def n_variants(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, pair: tuple[int, int]) -> float:
        return float(self.values[pair])

    def pairs(self) -> list[tuple[int, int]]:
        return upper_pairs(self.n_variants)

    def to_frame(self) -> pl.DataFrame:
        n = self.n_variants
        return pl.DataFrame(
            {
                "variant_i": [i for i in range(n) for _ in range(n)],
                "variant_j": [j for _ in range(n) for j in range(n)],
                "effect": self.values.reshape(-1).tolist(),
            }
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AteMatrix):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None  # type: ignore[assignment]


def upper_pairs(n_variants: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n_variants) for j in range(i + 1, n_variants)]
