"""Sharing-chain sampler.

Every trajectory draws from its own Philox stream: the key comes from
``(seed, stream_id)`` and the counter from the trajectory id. Trajectory ``k``
is therefore the same whether it is sampled alone, as part of a dataset of any
size, or by any number of workers.

A chain is drawn in chunks of :data:`CHUNK` sessions. Each session takes a pair
of uniforms, one choosing the variant under the production policy and one
deciding whether the session shares. The chain ends at the first session that
does not share.

Datasets are generated in blocks of :data:`BLOCK_SIZE` consecutive ids; blocks
only partition the work.
"""

from __future__ import annotations

import logging
import os
from collections.abc import Iterator
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from sharing.core import Dataset, SharingMdpConfig, Trajectory, VariantId, validate_config
from sharing.errors import CapExceededError, ConfigError

logger = logging.getLogger(__name__)

BLOCK_SIZE = 4096
CHUNK = 16
#: a drifted continuation probability is clamped to [0, 1 - DRIFT_EPSILON]; chains
#: past the clamp still end after about 1/DRIFT_EPSILON more sessions
DRIFT_EPSILON = 0.05
_U64 = 2**64


# ---------------------------------------------------------------------------
# Seeds, policies, knobs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimulationSeed:
    """Root of every random stream: identical (seed, stream_id) gives identical output."""

    seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if not isinstance(value, int) or not (0 <= value < _U64):
                raise ConfigError(f"{name} must be an unsigned 64-bit integer, got {value!r}")

    def derive(self, *keys: int) -> "SimulationSeed":
        """A new substream selector for *keys* (e.g. repetition and sample size)."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *keys))
        return SimulationSeed(self.seed, int(ss.generate_state(1, dtype=np.uint64)[0]))

    @cached_property
    def philox_key(self) -> np.ndarray:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        return ss.generate_state(2, dtype=np.uint64)

    def chain_generator(self, trajectory_id: int) -> np.random.Generator:
        """The stream of one trajectory; ids never share counter space."""
        if not (0 <= trajectory_id < _U64):
            raise ConfigError(f"trajectory_id must be in 0..2**64-1, got {trajectory_id}")
        counter = np.array([0, 0, trajectory_id, 0], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(counter=counter, key=self.philox_key))

    def to_dict(self) -> dict[str, int]:
        return {"seed": self.seed, "stream_id": self.stream_id}


@dataclass(frozen=True)
class RolloutPolicy:
    """Either the production policy π_p or a constant policy π_a."""

    constant: VariantId | None = None

    @classmethod
    def production(cls) -> "RolloutPolicy":
        return cls(None)

    @classmethod
    def always(cls, variant: VariantId) -> "RolloutPolicy":
        return cls(int(variant))

    @property
    def is_production(self) -> bool:
        return self.constant is None

    def describe(self) -> str:
        return "production" if self.constant is None else f"constant({self.constant})"


PRODUCTION = RolloutPolicy.production()


@dataclass(frozen=True)
class MisspecificationKnob:
    """Depth drift δ: γ_eff(a, t) = clamp(γ_a + δ·t, 0, 1 - ε).

    ``depth_drift = 0`` leaves every γ_a untouched.
    """

    depth_drift: float = 0.0

    def continuation(self, gammas: np.ndarray, position: int | np.ndarray) -> np.ndarray:
        if self.depth_drift == 0.0:
            return gammas
        return np.clip(gammas + self.depth_drift * position, 0.0, 1.0 - DRIFT_EPSILON)


NO_DRIFT = MisspecificationKnob()
DEFAULT_SEED = SimulationSeed(0)


# ---------------------------------------------------------------------------
# Chain sampling
# ---------------------------------------------------------------------------


def _check_policy(config: SharingMdpConfig, policy: RolloutPolicy) -> None:
    if policy.constant is not None and not (0 <= policy.constant < config.n_variants):
        raise ConfigError(
            f"constant variant {policy.constant} outside 0..{config.n_variants - 1}"
        )


def _sample_chain(
    config: SharingMdpConfig,
    policy: RolloutPolicy,
    knob: MisspecificationKnob,
    rng: np.random.Generator,
    trajectory_id: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Variants and rewards of one chain, drawn :data:`CHUNK` sessions at a time."""
    gammas = config.gamma_array()
    cdf = np.cumsum(config.policy.as_array())
    last = config.n_variants - 1
    cap = config.max_chain_length

    variants: list[np.ndarray] = []
    rewards: list[np.ndarray] = []
    start = 0
    while True:
        u = rng.random((CHUNK, 2))
        if policy.constant is None:
            assigned = np.minimum(np.searchsorted(cdf, u[:, 0], side="right"), last)
        else:
            assigned = np.full(CHUNK, policy.constant, dtype=np.int64)
        positions = np.arange(start, start + CHUNK)
        shares = u[:, 1] < knob.continuation(gammas[assigned], positions)
        stops = np.flatnonzero(~shares)
        length = start + (int(stops[0]) + 1 if stops.size else CHUNK)
        if length > cap or (not stops.size and length >= cap):
            raise CapExceededError(
                f"trajectory {trajectory_id} reached max_chain_length={cap} "
                "without terminating; a continuation probability is too close to 1"
            )
        take = length - start
        variants.append(assigned[:take].astype(np.int64))
        rewards.append(shares[:take].astype(np.int64))
        if stops.size:
            return np.concatenate(variants), np.concatenate(rewards)
        start = length


def _sample_block(
    config: SharingMdpConfig,
    policy: RolloutPolicy,
    knob: MisspecificationKnob,
    seed: SimulationSeed,
    start: int,
    count: int,
) -> Dataset:
    chains = [
        _sample_chain(config, policy, knob, seed.chain_generator(tid), tid)
        for tid in range(start, start + count)
    ]
    lengths = np.array([v.size for v, _ in chains], dtype=np.int64)
    ends = np.cumsum(lengths)
    dataset = Dataset(
        trajectory_id=np.repeat(np.arange(start, start + count, dtype=np.int64), lengths),
        position=np.arange(int(ends[-1]), dtype=np.int64) - np.repeat(ends - lengths, lengths),
        variant=np.concatenate([v for v, _ in chains]),
        reward=np.concatenate([r for _, r in chains]),
        policy=config.policy,
    )
    if __debug__:
        dataset.validate(config.max_chain_length)
    return dataset


def sample_trajectory(
    config: SharingMdpConfig,
    policy: RolloutPolicy = PRODUCTION,
    knob: MisspecificationKnob = NO_DRIFT,
    seed: SimulationSeed = DEFAULT_SEED,
    trajectory_id: int = 0,
) -> Trajectory:
    """Sample chain *trajectory_id*; it equals that chain of any :func:`sample_dataset`."""
    validate_config(config)
    _check_policy(config, policy)
    return _sample_block(config, policy, knob, seed, trajectory_id, 1).trajectories[0]


def _block_ranges(n_trajectories: int) -> list[tuple[int, int]]:
    return [
        (start, min(BLOCK_SIZE, n_trajectories - start))
        for start in range(0, n_trajectories, BLOCK_SIZE)
    ]


def iter_blocks(
    config: SharingMdpConfig,
    policy: RolloutPolicy,
    knob: MisspecificationKnob,
    seed: SimulationSeed,
    n_trajectories: int,
) -> Iterator[Dataset]:
    """Yield the blocks of :func:`sample_dataset` one at a time, in id order."""
    validate_config(config)
    _check_policy(config, policy)
    if n_trajectories < 1:
        raise ConfigError(f"n_trajectories must be >= 1, got {n_trajectories}")
    for start, count in _block_ranges(n_trajectories):
        yield _sample_block(config, policy, knob, seed, start, count)


def default_workers() -> int:
    """Worker count from ``SHARING_WORKERS``, else 1."""
    raw = os.getenv("SHARING_WORKERS", "")
    if not raw:
        return 1
    try:
        workers = int(raw)
    except ValueError as exc:
        raise ConfigError(f"SHARING_WORKERS must be an integer, got {raw!r}") from exc
    if workers < 1:
        raise ConfigError(f"SHARING_WORKERS must be >= 1, got {workers}")
    return workers


def sample_dataset(
    config: SharingMdpConfig,
    policy: RolloutPolicy = PRODUCTION,
    knob: MisspecificationKnob = NO_DRIFT,
    seed: SimulationSeed = DEFAULT_SEED,
    n_trajectories: int = 1,
    *,
    workers: int = 1,
) -> Dataset:
    """Sample *n_trajectories* chains with ids ``0..n-1``.

    The result is identical for any *workers*; blocks are generated
    concurrently and concatenated in id order.
    """
    validate_config(config)
    _check_policy(config, policy)
    if n_trajectories < 1:
        raise ConfigError(f"n_trajectories must be >= 1, got {n_trajectories}")
    ranges = _block_ranges(n_trajectories)
    logger.debug(
        "sampling %d trajectories (%s, drift=%g) in %d blocks on %d workers",
        n_trajectories,
        policy.describe(),
        knob.depth_drift,
        len(ranges),
        workers,
    )
    if workers <= 1 or len(ranges) == 1:
        parts = [_sample_block(config, policy, knob, seed, s, c) for s, c in ranges]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(
                pool.map(lambda r: _sample_block(config, policy, knob, seed, *r), ranges)
            )
    return Dataset.concat(parts, config.policy)


def monte_carlo_value(
    config: SharingMdpConfig,
    variant: VariantId,
    n_trajectories: int,
    seed: SimulationSeed,
    knob: MisspecificationKnob = NO_DRIFT,
) -> float:
    """Mean chain length over *n_trajectories* chains under the constant policy π_variant."""
    total = 0
    for block in iter_blocks(config, RolloutPolicy.always(variant), knob, seed, n_trajectories):
        total += block.n_sessions
    return total / n_trajectories
