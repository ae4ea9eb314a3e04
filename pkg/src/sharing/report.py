"""Error-curve charts for a finished sweep.

Reads ``plot_data.csv`` (and ``manifest.yaml`` for variant names) from a sweep
directory and renders one Altair chart per variant pair: sample size against
MSE on log-log axes, with a mean line and a 95% CI band per estimator. A sweep
with a single sample size gets points with error bars instead.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import TYPE_CHECKING

import polars as pl

from sharing.errors import MissingInputError
from sharing.estimators import EstimatorKind
from sharing.logfile import MANIFEST_FILE, PLOT_DATA_FILE, read_manifest

if TYPE_CHECKING:
    import altair as alt

logger = logging.getLogger(__name__)

_ORDER = [k.label for k in EstimatorKind]
_COLOURS = ["#D9534F", "#F0AD4E", "#4B90D9"]


# ---------------------------------------------------------------------------
# Input
# ---------------------------------------------------------------------------


def load_plot_data(sweep_dir: Path) -> pl.DataFrame:
    """Read the combined sweep table and attach estimator labels."""
    sweep_dir = Path(sweep_dir)
    path = sweep_dir / PLOT_DATA_FILE
    if not path.is_file():
        raise MissingInputError(f"no {PLOT_DATA_FILE} in {sweep_dir}")
    try:
        frame = pl.read_csv(path)
    except pl.exceptions.NoDataError as exc:
        raise MissingInputError(f"{path} is empty") from exc
    if frame.is_empty():
        raise MissingInputError(f"{path} holds no rows")
    labels = {k.value: k.label for k in EstimatorKind}
    return frame.with_columns(
        pl.col("estimator").replace_strict(labels, default=pl.col("estimator")).alias("label")
    )


def variant_names(sweep_dir: Path) -> list[str] | None:
    path = Path(sweep_dir) / MANIFEST_FILE
    if not path.is_file():
        return None
    variants = read_manifest(path).config.get("variants") or []
    names = [str(v.get("name", "")) for v in variants if isinstance(v, dict)]
    return names or None


# ---------------------------------------------------------------------------
# Chart builder
# ---------------------------------------------------------------------------


def build_error_chart(
    curve: pl.DataFrame,
    *,
    title: str = "",
    width: int = 480,
    height: int = 320,
) -> "alt.LayerChart":
    """Return a log-log MSE chart for one pair, one colour per estimator.

    *curve* needs ``sample_size``, ``mse``, ``ci_low``, ``ci_high`` and ``label``.
    Non-positive and NaN values cannot sit on a log axis and are left undrawn.
    """
    import altair as alt

    positive = curve.with_columns(
        pl.when(pl.col(c).is_finite() & (pl.col(c) > 0)).then(pl.col(c)).otherwise(None).alias(c)
        for c in ("mse", "ci_low", "ci_high")
    )
    colour = alt.Color(
        "label:N",
        title="estimator",
        scale=alt.Scale(domain=_ORDER, range=_COLOURS),
        sort=_ORDER,
    )
    x = alt.X(
        "sample_size:Q",
        title="sample size (trajectories)",
        scale=alt.Scale(type="log"),
    )
    y_scale = alt.Scale(type="log")
    base = alt.Chart(positive).encode(x=x, color=colour)
    tooltip = [
        alt.Tooltip("label:N", title="estimator"),
        alt.Tooltip("sample_size:Q", title="n"),
        alt.Tooltip("mse:Q", format=".3e"),
        alt.Tooltip("failures:Q"),
    ]

    if positive["sample_size"].n_unique() == 1:
        spread = base.mark_errorbar(ticks=True).encode(
            y=alt.Y("ci_low:Q", title="MSE", scale=y_scale), y2="ci_high:Q"
        )
        centre = base.mark_point(filled=True, size=60).encode(
            y=alt.Y("mse:Q", scale=y_scale), tooltip=tooltip
        )
    else:
        spread = base.mark_area(opacity=0.2).encode(
            y=alt.Y("ci_low:Q", title="MSE", scale=y_scale), y2="ci_high:Q"
        )
        centre = base.mark_line(point=True).encode(
            y=alt.Y("mse:Q", scale=y_scale), tooltip=tooltip
        )

    return alt.layer(spread, centre).properties(title=title, width=width, height=height)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def render_report(sweep_dir: Path, out_dir: Path) -> list[Path]:
    """Write ``mse_<i>-<j>.svg`` for every pair in the sweep; return the paths."""
    frame = load_plot_data(sweep_dir)
    names = variant_names(sweep_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    written: list[Path] = []
    pairs = frame.select("variant_i", "variant_j").unique().sort("variant_i", "variant_j")
    for i, j in pairs.iter_rows():
        curve = frame.filter((pl.col("variant_i") == i) & (pl.col("variant_j") == j))
        if names is not None and max(i, j) < len(names):
            title = f"{names[i]} vs {names[j]}"
        else:
            title = f"variant {i} vs variant {j}"
        chart = build_error_chart(curve.sort("label", "sample_size"), title=title)
        path = out_dir / f"mse_{i}-{j}.svg"
        chart.save(str(path), format="svg")
        logger.info("wrote %s", path)
        written.append(path)
    return written
