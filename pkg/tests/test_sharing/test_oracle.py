"""Tests for sharing.oracle."""

import logging

import numpy as np
import pytest

from sharing.core import SharingMdpConfig
from sharing.errors import ConfigError, DomainError
from sharing.estimators import EstimatorKind
from sharing.oracle import (
    AsymptoteFinding,
    diff_in_qs_asymptote,
    naive_asymptote,
    series_remainder,
    true_ate_matrix,
    true_value,
    truncated_series_value,
    validate_asymptotes,
)
from sharing.simulator import SimulationSeed, monte_carlo_value

REFERENCE = SharingMdpConfig.from_lists([0.5, 0.25, 0.25], [0.1, 0.2, 0.3])
GAMMA_GRID = [round(0.05 * k, 2) for k in range(19)]


# ---------------------------------------------------------------------------
# Policy values
# ---------------------------------------------------------------------------


class TestTrueValue:
    @pytest.mark.parametrize(
        "gamma, expected", [(0.0, 1.0), (0.1, 1.1111111111111112), (0.3, 1.4285714285714286)]
    )
    def test_closed_form(self, gamma, expected):
        assert true_value(gamma) == pytest.approx(expected, rel=1e-15)

    @pytest.mark.parametrize("gamma", [-0.01, 1.0, 1.5])
    def test_domain(self, gamma):
        with pytest.raises(DomainError):
            true_value(gamma)

    def test_domain_error_is_a_value_error(self):
        with pytest.raises(ValueError):
            true_value(2.0)


class TestTruncatedSeries:
    def test_zero_gamma(self):
        assert truncated_series_value(0.0, 1) == 1.0
        assert truncated_series_value(0.0, 50) == 1.0

    def test_converges_quickly(self):
        assert abs(truncated_series_value(0.3, 200) - 1 / 0.7) < 1e-12

    def test_partial_sum_is_below_limit(self):
        assert truncated_series_value(0.9, 10) < 10.0

    @pytest.mark.parametrize("gamma", GAMMA_GRID)
    def test_matches_closed_form(self, gamma):
        assert abs(truncated_series_value(gamma, 10_000) - true_value(gamma)) < 1e-10

    @pytest.mark.parametrize("gamma, k_max", [(0.5, 10), (0.9, 40), (0.3, 5)])
    def test_remainder_closes_the_gap(self, gamma, k_max):
        total = truncated_series_value(gamma, k_max) + series_remainder(gamma, k_max)
        assert total == pytest.approx(true_value(gamma), rel=1e-12)

    def test_rejects_zero_terms(self):
        with pytest.raises(DomainError, match="k_max"):
            truncated_series_value(0.5, 0)


class TestTrueAteMatrix:
    def test_reference_entries(self):
        m = true_ate_matrix(REFERENCE)
        assert m[0, 1] == pytest.approx(-0.1388888888888889)
        assert m[0, 2] == pytest.approx(-0.3174603174603174)
        assert m[1, 0] == -m[0, 1]
        assert np.all(np.diag(m.values) == 0.0)

    def test_equal_gammas_give_zero(self):
        config = SharingMdpConfig.from_lists([0.5, 0.5], [0.4, 0.4])
        assert np.all(true_ate_matrix(config).values == 0.0)

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            true_ate_matrix(SharingMdpConfig.from_lists([0.5, 0.5], [0.4, 1.2]))


# ---------------------------------------------------------------------------
# Estimator limits
# ---------------------------------------------------------------------------


class TestAsymptotes:
    def test_reference_values(self):
        assert naive_asymptote(REFERENCE, 0, 1) == pytest.approx(-0.121212, abs=1e-6)
        assert diff_in_qs_asymptote(REFERENCE, 0, 1) == pytest.approx(-0.146924, abs=1e-6)

    def test_null_effect(self):
        config = SharingMdpConfig.from_lists([0.5, 0.5], [0.3, 0.3])
        assert naive_asymptote(config, 0, 1) == 0.0
        assert diff_in_qs_asymptote(config, 0, 1) == 0.0

    def test_near_degenerate_policy_with_null_effect(self):
        config = SharingMdpConfig.from_lists([0.999, 0.001], [0.2, 0.2])
        assert naive_asymptote(config, 0, 1) == 0.0
        assert diff_in_qs_asymptote(config, 1, 0) == 0.0


class TestAsymptoteFinding:
    def _finding(self, monte_carlo: float) -> AsymptoteFinding:
        return AsymptoteFinding(
            kind=EstimatorKind.NAIVE,
            pair=(0, 1),
            formula=-0.12,
            monte_carlo=monte_carlo,
            standard_error=0.001,
            tolerance_se=4.0,
        )

    def test_agreeing_formula_is_the_target(self):
        finding = self._finding(-0.121)
        assert finding.agrees
        assert finding.target == -0.12

    def test_disagreement_falls_back_to_monte_carlo(self):
        finding = self._finding(-0.13)
        assert not finding.agrees
        assert finding.target == -0.13


class TestValidateAsymptotes:
    def test_small_run_reports_every_pair(self):
        findings = validate_asymptotes(REFERENCE, 20_000, SimulationSeed(3))
        assert len(findings) == 2 * 3
        assert {f.kind for f in findings} == {EstimatorKind.NAIVE, EstimatorKind.DIFF_IN_QS}
        assert all(f.standard_error > 0 for f in findings)

    def test_disagreement_is_logged(self, caplog):
        with caplog.at_level(logging.WARNING, logger="sharing.oracle"):
            findings = validate_asymptotes(REFERENCE, 5_000, SimulationSeed(3), tolerance_se=0.0)
        assert not any(f.agrees for f in findings)
        assert "finding:" in caplog.text


# ---------------------------------------------------------------------------
# Large-sample checks
# ---------------------------------------------------------------------------


@pytest.mark.slow
class TestLargeSample:
    def test_asymptote_formulas_hold(self):
        findings = validate_asymptotes(REFERENCE)
        for finding in findings:
            assert finding.agrees, finding

    @pytest.mark.parametrize("variant", [0, 1, 2])
    def test_monte_carlo_value_matches(self, variant):
        gamma = REFERENCE.gammas[variant]
        n = 1_000_000
        se = gamma**0.5 / (1 - gamma) / n**0.5
        value = monte_carlo_value(REFERENCE, variant, n, SimulationSeed(60 + variant))
        assert abs(value - true_value(gamma)) < 4 * se
