"""Tests for sharing.logfile."""

import logging

import polars as pl
import pytest

from sharing.core import ProductionPolicy, SharingMdpConfig
from sharing.errors import LogFormatError, MissingInputError
from sharing.estimators import EstimatorKind
from sharing.experiment import SweepPlan, run_sweep
from sharing.logfile import (
    MANIFEST_FILE,
    PLOT_DATA_FILE,
    SESSION_LOG_FORMAT,
    SWEEP_FORMAT,
    RunManifest,
    curve_file_name,
    parse_session_rows,
    read_data_section,
    read_manifest,
    read_session_log,
    split_frontmatter,
    write_session_log,
    write_sweep_tables,
)
from sharing.simulator import SimulationSeed, sample_dataset

REFERENCE = SharingMdpConfig.from_lists([0.5, 0.25, 0.25], [0.1, 0.2, 0.3])
POLICY = REFERENCE.policy


def _manifest() -> RunManifest:
    return RunManifest.capture(
        SESSION_LOG_FORMAT,
        ["simulate", "--config", "configs/sharing.toml", "--n", "200"],
        config={"variants": [{"name": "a1"}]},
        seed={"seed": 7, "stream_id": 0},
    )


# ---------------------------------------------------------------------------
# Front-matter
# ---------------------------------------------------------------------------


class TestFrontmatter:
    def test_split(self):
        text = "---\nformat: x\nseed: {seed: 1}\n---\n0,0,0,0\n"
        meta, body, consumed = split_frontmatter(text)
        assert meta == {"format": "x", "seed": {"seed": 1}}
        assert body == "0,0,0,0\n"
        assert consumed == 4

    def test_absent(self):
        meta, body, consumed = split_frontmatter("0,0,0,0\n")
        assert meta == {}
        assert body == "0,0,0,0\n"
        assert consumed == 0

    def test_empty_block(self):
        meta, body, consumed = split_frontmatter("---\n---\n0,0,0,0\n")
        assert meta == {}
        assert body == "0,0,0,0\n"
        assert consumed == 2

    def test_dashes_inside_a_line_do_not_close_the_block(self):
        text = "---\nname: arm---\nnote: x --- y\n---\n0,0,0,0\n"
        meta, body, consumed = split_frontmatter(text)
        assert meta == {"name": "arm---", "note": "x --- y"}
        assert body == "0,0,0,0\n"
        assert consumed == 4

    def test_unreadable_yaml_is_ignored(self, caplog):
        with caplog.at_level(logging.WARNING, logger="sharing.logfile"):
            meta, body, consumed = split_frontmatter("---\nformat: [unclosed\n---\n0,0,0,0\n")
        assert meta == {}
        assert body == "0,0,0,0\n"
        assert consumed == 3
        assert "front-matter" in caplog.text


class TestRunManifest:
    def test_yaml_round_trip(self, tmp_path):
        manifest = _manifest()
        path = tmp_path / MANIFEST_FILE
        path.write_text(manifest.to_yaml(), encoding="utf-8")
        assert read_manifest(path) == manifest

    def test_from_partial_dict(self):
        manifest = RunManifest.from_dict({"format": SWEEP_FORMAT})
        assert manifest.command == []
        assert manifest.format_version == 1

    def test_missing(self, tmp_path):
        with pytest.raises(MissingInputError):
            read_manifest(tmp_path / MANIFEST_FILE)


# ---------------------------------------------------------------------------
# Session logs
# ---------------------------------------------------------------------------


class TestSessionLogRoundTrip:
    def test_simulated_dataset(self, tmp_path):
        dataset = sample_dataset(REFERENCE, seed=SimulationSeed(5), n_trajectories=500)
        path = tmp_path / "sessions.csv"
        write_session_log(path, dataset, _manifest())
        loaded, manifest = read_session_log(path, POLICY)
        assert loaded == dataset
        assert manifest is not None
        assert manifest.seed == {"seed": 7, "stream_id": 0}

    @pytest.mark.parametrize("name", ["arm---", "---", "a---b"])
    def test_variant_names_with_dashes(self, tmp_path, name):
        dataset = sample_dataset(REFERENCE, seed=SimulationSeed(6), n_trajectories=50)
        manifest = RunManifest.capture(
            SESSION_LOG_FORMAT,
            ["simulate", "--n", "50"],
            config={"variants": [{"name": name}, {"name": "b"}, {"name": "c"}]},
            seed={"seed": 6, "stream_id": 0},
        )
        path = tmp_path / "sessions.csv"
        write_session_log(path, dataset, manifest)
        loaded, read_back = read_session_log(path, POLICY)
        assert loaded == dataset
        assert read_back == manifest

    def test_data_section_is_plain_csv(self, tmp_path):
        dataset = sample_dataset(REFERENCE, seed=SimulationSeed(5), n_trajectories=20)
        path = tmp_path / "sessions.csv"
        write_session_log(path, dataset, _manifest())
        body = read_data_section(path)
        assert body.splitlines()[0] == "trajectory_id,position,variant,reward"
        assert len(body.splitlines()) == dataset.n_sessions + 1

    def test_header_and_frontmatter_are_optional(self, tmp_path):
        path = tmp_path / "bare.csv"
        path.write_text("0,0,1,1\n0,1,2,0\n\n1,0,0,0\n", encoding="utf-8")
        dataset, manifest = read_session_log(path, POLICY)
        assert manifest is None
        assert dataset.n_trajectories == 2
        assert dataset.variant.tolist() == [1, 2, 0]

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingInputError):
            read_session_log(tmp_path / "nope.csv", POLICY)


class TestParseSessionRows:
    def test_typed_columns(self):
        rows = parse_session_rows("trajectory_id,position,variant,reward\n3, 0, 2, 0\n")
        assert rows.columns == ["line_no", "trajectory_id", "position", "variant", "reward"]
        assert rows.row(0) == (2, 3, 0, 2, 0)
        assert rows.schema["variant"] == pl.Int64

    def test_malformed_line_is_named(self):
        lines = ["trajectory_id,position,variant,reward"]
        lines += [f"{k},0,0,0" for k in range(15)]
        lines.append("15,0,zero,0")
        with pytest.raises(LogFormatError, match="line 17") as excinfo:
            parse_session_rows("\n".join(lines) + "\n")
        assert excinfo.value.line_no == 17

    @pytest.mark.parametrize("bad", ["0,0,0", "0,0,0,0,0", "0,0,1.5,0", "0,,0,0"])
    def test_rejects_bad_rows(self, bad):
        with pytest.raises(LogFormatError, match="line 2"):
            parse_session_rows(f"0,0,0,0\n{bad}\n")

    def test_wrong_header(self):
        with pytest.raises(LogFormatError, match="line 1: header"):
            parse_session_rows("trajectory_id,variant,position,reward\n0,0,0,0\n")

    def test_line_numbers_count_the_frontmatter(self, tmp_path):
        path = tmp_path / "log.csv"
        path.write_text(
            "---\nformat: sharing-session-log\n---\n"
            "trajectory_id,position,variant,reward\n"
            "0,0,0,0\n"
            "1,0,x,0\n",
            encoding="utf-8",
        )
        with pytest.raises(LogFormatError, match="line 6"):
            read_session_log(path, POLICY)


class TestInvariantViolations:
    @pytest.mark.parametrize(
        "body, line, match",
        [
            ("0,0,0,1\n0,1,1,1\n", 2, "terminal session has reward 1"),
            ("0,0,0,1\n0,0,1,0\n", 2, "position 0 where 1"),
            ("0,0,0,0\n1,0,3,0\n", 2, "variant 3 outside 0..2"),
            ("1,0,0,0\n0,0,1,0\n", 2, "not contiguous or not ascending"),
            ("0,0,0,2\n", 1, "reward must be 0 or 1"),
        ],
    )
    def test_violation_reports_source_line(self, tmp_path, body, line, match):
        path = tmp_path / "log.csv"
        path.write_text(body, encoding="utf-8")
        with pytest.raises(LogFormatError, match=match) as excinfo:
            read_session_log(path, POLICY)
        assert excinfo.value.line_no == line

    def test_policy_width_bounds_variants(self, tmp_path):
        path = tmp_path / "log.csv"
        path.write_text("0,0,2,0\n", encoding="utf-8")
        with pytest.raises(LogFormatError, match="outside 0..1"):
            read_session_log(path, ProductionPolicy((0.5, 0.5)))


# ---------------------------------------------------------------------------
# Sweep tables
# ---------------------------------------------------------------------------


class TestSweepTables:
    def test_files(self, tmp_path):
        config = SharingMdpConfig.from_lists([0.5, 0.5], [0.1, 0.3])
        plan = SweepPlan(
            config, sample_sizes=(50, 100), repetitions=3, base_seed=SimulationSeed(4)
        )
        result = run_sweep(plan)
        manifest = RunManifest.capture(SWEEP_FORMAT, ["sweep"], seed=plan.base_seed.to_dict())
        written = write_sweep_tables(tmp_path, result, manifest)

        names = sorted(p.name for p in written)
        expected = [curve_file_name(kind, (0, 1)) for kind in EstimatorKind]
        assert names == sorted([*expected, PLOT_DATA_FILE, MANIFEST_FILE])

        curve = pl.read_csv(tmp_path / curve_file_name(EstimatorKind.NAIVE, (0, 1)))
        assert curve["sample_size"].to_list() == [50, 100]
        plot = pl.read_csv(tmp_path / PLOT_DATA_FILE)
        assert plot.height == 3 * 2
        assert read_manifest(tmp_path / MANIFEST_FILE).format == SWEEP_FORMAT

    def test_curve_file_name(self):
        assert curve_file_name(EstimatorKind.DIFF_IN_QS, (1, 2)) == "curve_diff_in_qs_1-2.csv"
