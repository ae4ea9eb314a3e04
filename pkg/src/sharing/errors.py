"""Exception hierarchy shared by the library and the CLI.

Library code raises; only :func:`sharing.cli.main` turns a :class:`SharingError`
into a process exit code via its ``exit_code`` attribute.
"""

from __future__ import annotations


class SharingError(Exception):
    """Base class for every error raised by :mod:`sharing`."""

    exit_code: int = 1


class ConfigError(SharingError):
    """A config, plan or policy violates one of its invariants."""

    exit_code = 3


class DomainError(ConfigError, ValueError):
    """A numeric argument lies outside the domain of a closed form."""


class LogFormatError(SharingError):
    """A session-log line could not be parsed."""

    exit_code = 4

    def __init__(self, message: str, *, line_no: int | None = None) -> None:
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{prefix}{message}")


class MissingInputError(SharingError):
    exit_code = 4


class EmptyDatasetError(SharingError):
    exit_code = 4


class DegenerateEstimateError(SharingError):
    """γ̂ reached the pole of 1/(1 - γ); the geometric value is undefined."""

    exit_code = 5

    def __init__(
        self,
        variant: int,
        gamma_hat: float,
        *,
        pair: tuple[int, int] | None = None,
    ) -> None:
        self.variant = variant
        self.gamma_hat = gamma_hat
        self.pair = pair
        where = f" (pair {pair[0]},{pair[1]})" if pair is not None else ""
        super().__init__(
            f"degenerate estimate for variant {variant}: gamma_hat={gamma_hat:.6g} >= 1{where}"
        )

    def with_pair(self, pair: tuple[int, int]) -> "DegenerateEstimateError":
        return DegenerateEstimateError(self.variant, self.gamma_hat, pair=pair)


class CapExceededError(SharingError):
    """A chain reached ``max_chain_length`` without terminating."""

    exit_code = 5
