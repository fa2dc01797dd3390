"""Command-line interface.

Subcommands: fit (predict at queries), cv (two-stage bandwidth search),
simulate (the Monte Carlo study), ingest-network (trips -> Laplacian
dataset), eval (squared-distance summary between two datasets).

Exit codes: 0 ok, 2 usage/validation error, 3 numerical failure. All outputs
are deterministic given flags and seed; TORFRECH_THREADS caps parallelism
(0 = auto).
"""

from __future__ import annotations

import functools
import json
import sys

import click
import numpy as np

from .bandwidth import GridSpec, two_stage_search
from .errors import DatasetFormatError, EmptyDatasetError, NumericalError, PayloadError
from .frechet import (
    Dataset,
    local_constant_estimate,
    local_linear_estimate,
    normalize_estimator,
)
from .io import load_dataset, load_space, read_trips, save_dataset, trips_to_dataset
from .kernels import BandwidthVector, KernelFamily
from .simulate import SimConfig, run_study
from .torus import TorusPoint


def _dump_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except NumericalError as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(3)
        except (PayloadError, DatasetFormatError, EmptyDatasetError, ValueError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
    return wrapper


def _parse_floats(text: str, what: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise click.UsageError(f"could not parse {what} {text!r} as comma-separated "
                               f"numbers") from None


def _parse_grid1(spec: str, dim: int, stage2_fraction: float,
                 stage2_halfwidth: int) -> GridSpec:
    """Per-axis candidate grids: segments joined by 'x', each either
    'start:stop:count' or a comma list; one segment is replicated to every axis."""
    segments = spec.split("x")
    axes = []
    for seg in segments:
        seg = seg.strip()
        if ":" in seg:
            parts = seg.split(":")
            if len(parts) != 3:
                raise click.UsageError(f"grid segment {seg!r} must be start:stop:count")
            try:
                start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
            except ValueError:
                raise click.UsageError(f"could not parse grid segment {seg!r}") from None
            axes.append(tuple(np.linspace(start, stop, count)))
        else:
            axes.append(tuple(_parse_floats(seg, "grid segment")))
    if len(axes) == 1 and dim > 1:
        axes = axes * dim
    if len(axes) != dim:
        raise click.UsageError(f"grid has {len(axes)} axes but the data has {dim}")
    try:
        return GridSpec(tuple(axes), stage2_fraction, stage2_halfwidth)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise click.UsageError("config file must hold a JSON object")
    return obj


def _merge_config(ctx, config: dict, names):
    """Fill parameters the user left at their defaults from the config file."""
    from click.core import ParameterSource

    out = {}
    for name in names:
        if name in config and \
                ctx.get_parameter_source(name) != ParameterSource.COMMANDLINE:
            out[name] = config[name]
        else:
            out[name] = ctx.params[name]
    return out


@click.group()
def main():
    """Local Fréchet regression with toroidal predictors."""


@main.command("fit")
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--space", "space_path", type=click.Path(exists=True, dir_okay=False),
              help="Space descriptor JSON (default: <data>.space.json).")
@click.option("--estimator", required=True, type=click.Choice(["lc", "ll"]))
@click.option("--bandwidth", help="Comma-separated bandwidths h1,..,hd.")
@click.option("--cv", "cv_path", type=click.Path(exists=True, dir_okay=False),
              help="CVResult JSON whose best_h supplies the bandwidth.")
@click.option("--kernel", default="vonmises", show_default=True)
@click.option("--query", "queries", multiple=True,
              help="Query point a1,..,ad (repeatable).")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@_cli_errors
def cmd_fit(data, space_path, estimator, bandwidth, cv_path, kernel, queries, out,
            seed):
    """Predict at query points; writes dataset rows plus a diagnostics JSON."""
    dataset = load_dataset(data, descriptor_path=space_path)
    fam = KernelFamily.from_name(kernel)
    if bandwidth is None and cv_path is None:
        raise click.UsageError("provide --bandwidth or --cv")
    if bandwidth is not None and cv_path is not None:
        raise click.UsageError("--bandwidth and --cv are mutually exclusive")
    if cv_path is not None:
        with open(cv_path) as fh:
            h_values = json.load(fh)["best_h"]
    else:
        h_values = _parse_floats(bandwidth, "--bandwidth")
    if len(h_values) != dataset.dim:
        raise click.UsageError(f"bandwidth has {len(h_values)} components but the "
                               f"data lives on the {dataset.dim}-torus")
    h = BandwidthVector(np.asarray(h_values))
    if not queries:
        raise click.UsageError("provide at least one --query")
    points = []
    for i, q in enumerate(queries, start=1):
        vals = _parse_floats(q, f"--query #{i}")
        if len(vals) != dataset.dim:
            raise click.UsageError(f"query row {i} has {len(vals)} angles, "
                                   f"expected {dataset.dim}")
        points.append(TorusPoint(np.asarray(vals)))
    fitter = local_constant_estimate if estimator == "lc" else local_linear_estimate
    estimates = []
    diagnostics = []
    for i, point in enumerate(points, start=1):
        try:
            fit = fitter(dataset, point, h, fam,
                         rng=np.random.default_rng((seed, i)))
        except NumericalError as exc:
            click.echo(f"numerical failure at query row {i}: {exc}", err=True)
            sys.exit(3)
        estimates.append(fit.estimate)
        diagnostics.append({
            "query_row": i,
            "angles": [float(a) for a in point.angles],
            "condition_number": fit.diagnostics.condition_number,
            "sigma": fit.diagnostics.sigma,
            "solver_iterations": int(fit.diagnostics.solver_iterations),
            "converged": bool(fit.diagnostics.converged),
        })
    predictions = Dataset.from_payloads(dataset.space, points, estimates)
    save_dataset(out, predictions)
    _dump_json(str(out) + ".diag.json", diagnostics)


@main.command("cv")
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--space", "space_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--estimator", required=True, type=click.Choice(["lc", "ll"]))
@click.option("--kernel", default="vonmises", show_default=True)
@click.option("--grid1", default="0.1:1.0:10", show_default=True,
              help="Stage-one grid, e.g. 0.1:1.0:10 or 0.1,0.2,0.4 ('x' joins axes).")
@click.option("--stage2-frac", "stage2_frac", default=0.25, show_default=True,
              type=float)
@click.option("--stage2-halfwidth", "stage2_halfwidth", default=2, show_default=True,
              type=int)
@click.option("--k", default=5, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON config merged under explicit flags.")
@click.pass_context
@_cli_errors
def cmd_cv(ctx, data, space_path, estimator, kernel, grid1, stage2_frac,
           stage2_halfwidth, k, seed, out, config_path):
    """Two-stage cross-validated bandwidth search; writes the CVResult JSON."""
    config = _load_config(config_path)
    merged = _merge_config(ctx, config, ["estimator", "kernel", "grid1", "stage2_frac",
                                         "stage2_halfwidth", "k", "seed"])
    dataset = load_dataset(data, descriptor_path=space_path)
    fam = KernelFamily.from_name(merged["kernel"])
    grid = _parse_grid1(str(merged["grid1"]), dataset.dim,
                        float(merged["stage2_frac"]), int(merged["stage2_halfwidth"]))
    result = two_stage_search(dataset, fam, grid, k=int(merged["k"]),
                              seed=int(merged["seed"]),
                              estimator=normalize_estimator(merged["estimator"]))
    _dump_json(out, result.to_json())


@main.command("simulate")
@click.option("--n", default=100, show_default=True, type=int)
@click.option("--sigma", default=0.1, show_default=True, type=float)
@click.option("--reps", default=20, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--quad", default=30, show_default=True, type=int,
              help="Quadrature points per axis for the error integral.")
@click.option("--grid1", default="0.1:1.0:10", show_default=True)
@click.option("--estimators", default="lc,ll", show_default=True)
@click.option("--kernel", default="vonmises", show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.pass_context
@_cli_errors
def cmd_simulate(ctx, n, sigma, reps, seed, quad, grid1, estimators, kernel, out,
                 config_path):
    """Monte Carlo study on the 2-torus with sphere-valued responses."""
    config = _load_config(config_path)
    merged = _merge_config(ctx, config, ["n", "sigma", "reps", "seed", "quad",
                                         "grid1", "estimators", "kernel"])
    grid = _parse_grid1(str(merged["grid1"]), 2, 0.25, 2)
    sim_config = SimConfig(
        n=int(merged["n"]), sigma=float(merged["sigma"]), reps=int(merged["reps"]),
        seed=int(merged["seed"]), grid=grid, quad_per_axis=int(merged["quad"]),
        estimators=tuple(str(merged["estimators"]).split(",")),
        kernel=KernelFamily.from_name(merged["kernel"]))
    report = run_study(sim_config)
    _dump_json(out, report.to_json())
    click.echo(f"wall clock: {report.wall_clock_s:.1f}s", err=True)
    for est, value in report.mise.items():
        shown = "n/a" if value is None else f"{value:.4f}"
        click.echo(f"MISE[{est}] = {shown} (excluded {report.excluded[est]})", err=True)


@main.command("ingest-network")
@click.option("--trips", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--k", "n_nodes", required=True, type=int, help="Number of regions.")
@click.option("--cw", type=float, help="Edge-weight cap (default: max observed).")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@_cli_errors
def cmd_ingest_network(trips, n_nodes, cw, out):
    """Aggregate trip records into a graph-Laplacian dataset."""
    records = read_trips(trips, n_nodes)
    if not records:
        click.echo("warning: no trips; writing an empty dataset", err=True)
        with open(out, "w") as fh:
            fh.write("theta_1,theta_2,response\n")
        return
    dataset = trips_to_dataset(records, n_nodes, cw)
    save_dataset(out, dataset)
    click.echo(f"wrote {dataset.n} Laplacians "
               f"(c_w = {dataset.space.c_w})", err=True)


@main.command("eval")
@click.option("--pred", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--truth", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--space", "space_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@_cli_errors
def cmd_eval(pred, truth, space_path, out):
    """Squared-distance summary (mean, max) between two dataset files."""
    space = load_space(space_path)
    pred_data = load_dataset(pred, space=space)
    truth_data = load_dataset(truth, space=space)
    if pred_data.n != truth_data.n:
        raise click.UsageError(f"row counts differ: {pred_data.n} predictions vs "
                               f"{truth_data.n} truths")
    d2 = space.pairwise_dist2(pred_data.responses, truth_data.responses)
    _dump_json(out, {"count": int(pred_data.n),
                     "mean_squared_distance": float(d2.mean()),
                     "max_squared_distance": float(d2.max())})


if __name__ == "__main__":
    main()
