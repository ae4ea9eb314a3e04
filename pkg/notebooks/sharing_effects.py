import marimo

__generated_with = "0.13.10"
app = marimo.App(width="medium")


@app.cell
def _():
    import marimo as mo
    return (mo,)


@app.cell(hide_code=True)
def _(mo):
    mo.md(
        r"""
    # Treatment effects in sharing chains

    Each session either shares (the chain continues) or not. Variants are
    assigned by the production policy at every position, so a variant's effect
    leaks into every later session of the chain. This notebook runs a small
    sweep and compares the three estimators against the closed-form truth
    $V(\pi_a) = 1/(1-\gamma_a)$.
    """
    )
    return


@app.cell
def _(mo):
    repetitions = mo.ui.slider(4, 32, value=8, step=4, label="repetitions")
    drift = mo.ui.slider(0.0, 0.1, value=0.0, step=0.01, label="depth drift")
    mo.hstack([repetitions, drift])
    return drift, repetitions


@app.cell
def _(drift, repetitions):
    from sharing import MisspecificationKnob, SharingMdpConfig, SimulationSeed, SweepPlan
    from sharing.experiment import run_sweep

    config = SharingMdpConfig.from_lists([0.5, 0.25, 0.25], [0.1, 0.2, 0.3])
    plan = SweepPlan(
        config,
        sample_sizes=(100, 1_000, 10_000),
        repetitions=repetitions.value,
        base_seed=SimulationSeed(7),
        knob=MisspecificationKnob(drift.value),
    )
    result = run_sweep(plan)
    return config, result


@app.cell
def _(config):
    from sharing import true_ate_matrix

    true_ate_matrix(config).to_frame()
    return


@app.cell
def _(result):
    import polars as pl

    from sharing.estimators import EstimatorKind
    from sharing.report import build_error_chart

    labels = {k.value: k.label for k in EstimatorKind}
    frame = result.to_frame().with_columns(
        pl.col("estimator").replace_strict(labels).alias("label")
    )
    build_error_chart(
        frame.filter((pl.col("variant_i") == 0) & (pl.col("variant_j") == 1)),
        title="a1 vs a2",
    )
    return


if __name__ == "__main__":
    app.run()
