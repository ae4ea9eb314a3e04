"""Unit tests for sharing.core."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sharing.core import (
    AteMatrix,
    Dataset,
    ProductionPolicy,
    SessionRecord,
    SharingMdpConfig,
    Trajectory,
    first_violation,
    flatten,
    upper_pairs,
    validate_config,
    validate_policy,
)
from sharing.errors import ConfigError, LogFormatError

POLICY = ProductionPolicy((0.5, 0.25, 0.25))


def _config(probs=(0.5, 0.25, 0.25), gammas=(0.1, 0.2, 0.3), cap=1_000_000):
    return SharingMdpConfig.from_lists(probs, gammas, cap)


# ---------------------------------------------------------------------------
# validate_config
# ---------------------------------------------------------------------------


class TestValidateConfig:
    def test_reference_config_is_returned_unchanged(self):
        config = _config()
        assert validate_config(config) is config

    def test_mean_gamma(self):
        assert _config().mean_gamma == pytest.approx(0.175)

    @pytest.mark.parametrize(
        "probs, gammas, match",
        [
            ((1.0,), (0.1,), "at least 2 variants"),
            ((0.5, 0.5), (0.1, 0.2, 0.3), "length mismatch"),
            ((0.5, 0.5, 0.0), (0.1, 0.2, 0.3), "non-positive probability"),
            ((0.6, 0.6), (0.1, 0.2), "sum to"),
            ((0.5, 0.5), (0.1, 1.0), r"\[0, 1\)"),
            ((0.5, 0.5), (-0.1, 0.2), r"\[0, 1\)"),
        ],
    )
    def test_rejects_invalid_configs(self, probs, gammas, match):
        with pytest.raises(ConfigError, match=match):
            validate_config(_config(probs, gammas))

    def test_rejects_zero_cap(self):
        with pytest.raises(ConfigError, match="max_chain_length"):
            validate_config(_config(cap=0))

    def test_sum_tolerance(self):
        # 0.1 + 0.2 + 0.7 is not exactly 1 in binary floating point
        validate_policy(ProductionPolicy((0.1, 0.2, 0.7)))

    def test_gamma_zero_is_allowed(self):
        validate_config(_config((0.5, 0.5), (0.0, 0.0)))


# ---------------------------------------------------------------------------
# Trajectory
# ---------------------------------------------------------------------------


class TestTrajectory:
    def test_from_pairs(self):
        traj = Trajectory.from_pairs(4, [(0, 1), (1, 1), (0, 0)])
        assert len(traj) == 3
        assert traj.trajectory_id == 4
        assert traj.variants == [0, 1, 0]
        assert [s.position for s in traj.sessions] == [0, 1, 2]

    def test_single_session(self):
        traj = Trajectory.from_pairs(0, [(2, 0)])
        assert len(traj) == 1

    @pytest.mark.parametrize(
        "pairs",
        [
            [(0, 1)],  # last session must end the chain
            [(0, 0), (1, 0)],  # non-terminal session must share
            [],
        ],
    )
    def test_rejects_broken_reward_pattern(self, pairs):
        with pytest.raises(ValueError):
            Trajectory.from_pairs(0, pairs)

    def test_rejects_non_binary_reward(self):
        with pytest.raises(ValueError, match="0 or 1"):
            SessionRecord(0, 0, 0, 2)

    def test_rejects_gap_in_positions(self):
        with pytest.raises(ValueError, match="position"):
            Trajectory((SessionRecord(0, 0, 0, 1), SessionRecord(0, 2, 0, 0)))


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------


def _dataset() -> Dataset:
    return Dataset.from_trajectories(
        [
            Trajectory.from_pairs(0, [(0, 1), (1, 1), (0, 0)]),
            Trajectory.from_pairs(1, [(2, 0)]),
            Trajectory.from_pairs(2, [(1, 1), (2, 0)]),
        ],
        POLICY,
    )


class TestDataset:
    def test_counts(self):
        ds = _dataset()
        assert ds.n_sessions == 6
        assert ds.n_trajectories == 3
        assert ds.lengths.tolist() == [3, 1, 2]

    def test_flatten_preserves_order(self):
        records = flatten(_dataset())
        assert [(s.trajectory_id, s.position) for s in records] == [
            (0, 0),
            (0, 1),
            (0, 2),
            (1, 0),
            (2, 0),
            (2, 1),
        ]
        assert sum(s.reward for s in records) == 3

    def test_trajectories_round_trip(self):
        ds = _dataset()
        assert Dataset.from_trajectories(ds.trajectories, POLICY) == ds

    def test_frame_round_trip(self):
        ds = _dataset()
        frame = ds.to_frame()
        assert frame.columns == ["trajectory_id", "position", "variant", "reward"]
        assert Dataset.from_frame(frame, POLICY) == ds

    def test_columns_are_read_only(self):
        with pytest.raises(ValueError):
            _dataset().reward[0] = 0

    def test_validate_accepts_well_formed(self):
        ds = _dataset()
        assert ds.validate() is ds

    def test_validate_reports_row(self):
        ds = Dataset([0, 0], [0, 1], [0, 0], [1, 1], POLICY)
        with pytest.raises(LogFormatError, match="session row 1: terminal session"):
            ds.validate()

    @pytest.mark.parametrize("ids", [[0, 0], [1, 0], [0, 2, 2]])
    def test_from_trajectories_rejects_repeated_ids(self, ids):
        chains = [Trajectory.from_pairs(tid, [(0, 1), (1, 0)]) for tid in ids]
        with pytest.raises(LogFormatError, match="ids must be ascending"):
            Dataset.from_trajectories(chains, POLICY)

    def test_position_reset_starts_new_trajectory(self):
        ds = Dataset([0, 0, 0, 0], [0, 1, 0, 1], [0, 1, 2, 0], [1, 0, 1, 0], POLICY)
        assert ds.n_trajectories == 2
        assert ds.lengths.tolist() == [2, 2]
        with pytest.raises(LogFormatError, match="session row 1: non-terminal"):
            ds.validate()

    def test_validate_enforces_cap(self):
        with pytest.raises(LogFormatError, match="max_chain_length"):
            _dataset().validate(max_chain_length=2)

    def test_empty_dataset(self):
        ds = Dataset.concat([], POLICY)
        assert ds.n_sessions == 0
        assert ds.n_trajectories == 0
        assert flatten(ds) == []

    def test_concat_keeps_order(self):
        ds = _dataset()
        again = Dataset.concat([ds, ds], POLICY)
        assert again.n_sessions == 12


class TestFirstViolation:
    def _check(self, tid, pos, var, rew):
        return first_violation(
            np.array(tid), np.array(pos), np.array(var), np.array(rew), n_variants=3
        )

    def test_clean(self):
        assert self._check([0, 0, 1], [0, 1, 0], [0, 1, 2], [1, 0, 0]) is None

    def test_variant_out_of_range(self):
        row, reason = self._check([0, 1], [0, 0], [0, 3], [0, 0])
        assert row == 1
        assert "variant 3" in reason

    def test_trajectories_must_ascend(self):
        row, reason = self._check([1, 0], [0, 0], [0, 0], [0, 0])
        assert row == 1
        assert "not contiguous" in reason

    def test_earliest_row_wins(self):
        row, _ = self._check([0, 0, 0], [0, 2, 1], [0, 0, 9], [1, 1, 0])
        assert row == 1


# ---------------------------------------------------------------------------
# AteMatrix
# ---------------------------------------------------------------------------


class TestAteMatrix:
    def test_from_pairs_mirrors(self):
        m = AteMatrix.from_pairs(3, lambda i, j: float(i - j))
        assert m[0, 1] == -1.0
        assert m[1, 0] == 1.0
        assert m[2, 2] == 0.0
        assert m.pairs() == [(0, 1), (0, 2), (1, 2)]

    def test_rejects_asymmetric_values(self):
        with pytest.raises(ValueError, match="antisymmetric"):
            AteMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]))

    def test_rejects_nonzero_diagonal(self):
        with pytest.raises(ValueError, match="diagonal"):
            AteMatrix(np.eye(2))

    def test_to_frame_has_every_entry(self):
        frame = AteMatrix.from_pairs(3, lambda i, j: 1.0).to_frame()
        assert frame.height == 9

    def test_upper_pairs_count(self):
        assert len(upper_pairs(4)) == 6

    @given(
        st.lists(
            st.floats(min_value=-1e6, max_value=1e6, allow_nan=False), min_size=6, max_size=6
        )
    )
    def test_antisymmetric_for_any_effect(self, effects):
        lookup = dict(zip(upper_pairs(4), effects, strict=True))
        m = AteMatrix.from_pairs(4, lambda i, j: lookup[(i, j)])
        assert np.array_equal(m.values, -m.values.T)
