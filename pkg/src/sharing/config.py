"""Experiment configuration loader.

A config is a single TOML file::

    [simulation]
    max_chain_length = 1_000_000
    depth_drift      = 0.0

    [[variants]]
    name        = "control"
    probability = 0.5
    gamma       = 0.1

    [[variants]]
    name        = "treatment-a"
    probability = 0.25
    gamma       = 0.2

    [sweep]
    sample_sizes = [100, 300, 1000]
    repetitions  = 32
    seed         = 0
    stream_id    = 0
    estimators   = ["naive", "diff_in_qs", "diff_in_geometrics"]

Only ``[[variants]]`` is required. A policy file for ``estimate`` may be a full
config, a file of ``[[variants]]`` with probabilities only, or a top-level
``probabilities = [...]`` list.
"""

from __future__ import annotations

import tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from sharing.core import (
    DEFAULT_MAX_CHAIN_LENGTH,
    ProductionPolicy,
    SharingMdpConfig,
    validate_config,
    validate_policy,
)
from sharing.errors import ConfigError, MissingInputError
from sharing.estimators import EstimatorKind
from sharing.experiment import DEFAULT_REPETITIONS, DEFAULT_SAMPLE_SIZES, SweepPlan
from sharing.simulator import MisspecificationKnob, SimulationSeed

# ---------------------------------------------------------------------------
# Typed field access
# ---------------------------------------------------------------------------

_MISSING = object()


def _get(
    table: dict[str, Any],
    key: str,
    where: str,
    kind: type | tuple[type, ...],
    default: Any = _MISSING,
) -> Any:
    path = f"{where}.{key}" if where else key
    if key not in table:
        if default is _MISSING:
            raise ConfigError(f"missing required key '{path}'")
        return default
    value = table[key]
    # bool is an int subclass; never accept it for numeric fields
    if isinstance(value, bool) and bool not in (kind if isinstance(kind, tuple) else (kind,)):
        raise ConfigError(f"'{path}' must be {_kind_name(kind)}, got {value!r}")
    if not isinstance(value, kind):
        raise ConfigError(f"'{path}' must be {_kind_name(kind)}, got {value!r}")
    return value


def _kind_name(kind: type | tuple[type, ...]) -> str:
    kinds = kind if isinstance(kind, tuple) else (kind,)
    names = {int: "an integer", float: "a number", str: "a string", list: "a list", dict: "a table"}
    return " or ".join(names.get(k, k.__name__) for k in kinds)


def _number(table: dict[str, Any], key: str, where: str, default: Any = _MISSING) -> float:
    return float(_get(table, key, where, (int, float), default))


# ---------------------------------------------------------------------------
# Config descriptor
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one config file describes: variants, MDP, knob and sweep plan."""

    variant_names: tuple[str, ...]
    mdp: SharingMdpConfig
    knob: MisspecificationKnob = field(default_factory=MisspecificationKnob)
    plan: SweepPlan | None = None

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        variants = _get(data, "variants", "", list)
        names: list[str] = []
        probs: list[float] = []
        gammas: list[float] = []
        for index, entry in enumerate(variants):
            where = f"variants[{index}]"
            if not isinstance(entry, dict):
                raise ConfigError(f"'{where}' must be a table")
            names.append(_get(entry, "name", where, str, f"variant-{index}"))
            probs.append(_number(entry, "probability", where))
            gammas.append(_number(entry, "gamma", where))
        if len(set(names)) != len(names):
            raise ConfigError("variant names must be unique")

        simulation = _get(data, "simulation", "", dict, {})
        cap = _get(simulation, "max_chain_length", "simulation", int, DEFAULT_MAX_CHAIN_LENGTH)
        knob = MisspecificationKnob(_number(simulation, "depth_drift", "simulation", 0.0))
        mdp = validate_config(SharingMdpConfig.from_lists(probs, gammas, cap))

        sweep = _get(data, "sweep", "", dict, None)
        plan = None if sweep is None else _plan_from_dict(sweep, mdp, knob)
        return cls(tuple(names), mdp, knob, plan)

    def sweep_plan(self) -> SweepPlan:
        """The configured plan, or the default plan for these variants."""
        return self.plan if self.plan is not None else SweepPlan(self.mdp, knob=self.knob)

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "variants": [
                {"name": name, "probability": p, "gamma": g}
                for name, p, g in zip(
                    self.variant_names, self.mdp.policy.probs, self.mdp.gammas, strict=True
                )
            ],
            "simulation": {
                "max_chain_length": self.mdp.max_chain_length,
                "depth_drift": self.knob.depth_drift,
            },
        }
        if self.plan is not None:
            data["sweep"] = self.plan.to_dict()
        return data


def _plan_from_dict(
    sweep: dict[str, Any], mdp: SharingMdpConfig, knob: MisspecificationKnob
) -> SweepPlan:
    sizes = _get(sweep, "sample_sizes", "sweep", list, list(DEFAULT_SAMPLE_SIZES))
    for index, n in enumerate(sizes):
        if isinstance(n, bool) or not isinstance(n, int):
            raise ConfigError(f"'sweep.sample_sizes[{index}]' must be an integer, got {n!r}")
    names = _get(sweep, "estimators", "sweep", list, [k.value for k in EstimatorKind])
    try:
        estimators = tuple(EstimatorKind.parse(str(name)) for name in names)
    except ValueError as exc:
        raise ConfigError(f"'sweep.estimators': {exc}") from exc
    seed = SimulationSeed(
        _get(sweep, "seed", "sweep", int, 0), _get(sweep, "stream_id", "sweep", int, 0)
    )
    plan = SweepPlan(
        config=mdp,
        sample_sizes=tuple(sizes),
        repetitions=_get(sweep, "repetitions", "sweep", int, DEFAULT_REPETITIONS),
        base_seed=seed,
        estimators=estimators,
        knob=knob,
    )
    return plan.validate()


# ---------------------------------------------------------------------------
# Loaders
# ---------------------------------------------------------------------------


def _read_toml(path: Path) -> dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_config(path: Path) -> ExperimentConfig:
    """Read and validate a config file."""
    data = _read_toml(path)
    try:
        return ExperimentConfig.from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_policy(path: Path) -> ProductionPolicy:
    """Read the logged production policy from a policy or config file."""
    data = _read_toml(path)
    try:
        if "probabilities" in data:
            raw = _get(data, "probabilities", "", list)
            for index, p in enumerate(raw):
                if isinstance(p, bool) or not isinstance(p, (int, float)):
                    raise ConfigError(f"'probabilities[{index}]' must be a number, got {p!r}")
            probs = [float(p) for p in raw]
        else:
            variants = _get(data, "variants", "", list)
            probs = [
                _number(entry, "probability", f"variants[{i}]") for i, entry in enumerate(variants)
            ]
        return validate_policy(ProductionPolicy(tuple(probs)))
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def parse_probs(text: str) -> ProductionPolicy:
    """Parse ``"0.5,0.25,0.25"`` into a validated policy."""
    try:
        probs = tuple(float(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"--probs must be comma-separated numbers, got {text!r}") from exc
    return validate_policy(ProductionPolicy(probs))
