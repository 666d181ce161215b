"""
pyimpflow command line: train, prune, analyse and transfer Hamiltonian
networks.
"""
import dataclasses
import json
import os
from pathlib import Path
from typing import Annotated, List, Optional

import typer
from rich.console import Console
from rich.table import Table

from .config import (AnalysisConfig, ExperimentConfig, TransferConfig, apply_overrides,
                     load_config)
from .errors import PyImpFlowError
from .harness import (analyze_trace, emit_report, run_experiment, run_single,
                      run_transfer, resolve_workers)
from .io import load_trace, write_trace, write_masks, write_summary, write_transfer_table
from .logger import setup_logging
from .network import Mask, init_network
from .tasks import energy_drift
from .training import train as train_network

app = typer.Typer(
    name="pyimpflow",
    help="Iterative magnitude pruning of Hamiltonian neural networks, with RG-style analysis",
    add_completion=False,
    rich_markup_mode="rich",
)

console = Console()

ConfigOption = Annotated[Optional[Path], typer.Option(
    "--config", "-c", help="Experiment YAML file", exists=True, dir_okay=False)]
SetOption = Annotated[Optional[List[str]], typer.Option(
    "--set", "-s", help="Override a config value, e.g. --set imp.x=0.05 (repeatable)")]
SeedOption = Annotated[Optional[int], typer.Option("--seed", help="Override the base seed")]


def _config(config, overrides, seed):
    if config is not None:
        return load_config(config, overrides or (), seed=seed)
    cfg = ExperimentConfig.from_dict(apply_overrides({}, overrides or ()))
    return cfg if seed is None else cfg.with_seed(seed)


def _fail(err):
    console.print("[bold red]Error:[/bold red] {}".format(err))
    raise typer.Exit(code=1)


@app.callback()
def main(verbose: Annotated[bool, typer.Option("--verbose", "-v", help="Debug logging")] = False):
    setup_logging(verbose)


@app.command()
def train(config: ConfigOption = None, set_: SetOption = None, seed: SeedOption = None):
    """Train the full (unpruned) network once and report its loss."""
    try:
        cfg = _config(config, set_, seed)
        task = cfg.task.build()
        init = init_network(cfg.network, cfg.seed)
        mask = Mask.ones(cfg.network)
        trained, loss = train_network(init, mask, task, dataclasses.replace(cfg.train, seed=cfg.seed))
        drift = energy_drift(trained, mask, task)
    except (PyImpFlowError, ValueError) as err:
        _fail(err)
    table = Table(title="{} (seed {})".format(task.name, cfg.seed))
    table.add_column("epochs", justify="right")
    table.add_column("final loss", justify="right")
    table.add_column("energy drift", justify="right")
    table.add_row(str(cfg.train.epochs), "{:.4e}".format(loss), "{:.4e}".format(drift))
    console.print(table)


@app.command()
def imp(output: Annotated[Path, typer.Option("--output", "-o", help="Trace CSV to write")] = Path("trace.csv"),
        config: ConfigOption = None, set_: SetOption = None, seed: SeedOption = None):
    """Run one IMP run and write its trace and masks."""
    try:
        cfg = _config(config, set_, seed)
        trace = run_single(cfg, cfg.seed)
    except (PyImpFlowError, ValueError) as err:
        _fail(err)
    os.makedirs(output.parent, exist_ok=True)
    write_trace(trace, str(output))
    write_masks(trace.masks, str(output.with_name(output.stem + '_masks.npy')))
    table = Table(title="IMP {} x={} scope={}".format(cfg.task.task_id, cfg.imp.x, cfg.imp.scope.label))
    for col in ("iter", "density", "final loss"):
        table.add_column(col, justify="right")
    for r in trace:
        table.add_row(str(r.iteration), "{:.4f}".format(r.density), "{:.4e}".format(r.final_loss))
    console.print(table)


@app.command()
def experiment(config: Annotated[Path, typer.Argument(help="Experiment YAML file", exists=True, dir_okay=False)],
               set_: SetOption = None, seed: SeedOption = None,
               output_dir: Annotated[Optional[Path], typer.Option("--output-dir", "-o")] = None,
               workers: Annotated[Optional[int], typer.Option("--workers", "-j")] = None):
    """Run a config-driven batch of IMP runs with analysis and report."""
    try:
        cfg = load_config(config, set_ or (), seed=seed)
        if workers is not None:
            cfg = dataclasses.replace(cfg, workers=workers)
        artifact = run_experiment(cfg, None if output_dir is None else str(output_dir))
    except (PyImpFlowError, ValueError) as err:
        _fail(err)
    console.print("[green]wrote[/green] {} ({} runs, {} failed, {} worker(s))".format(
        artifact.directory, len(artifact.trace_paths), len(artifact.failures),
        resolve_workers(cfg.workers)))


def _print_analysis(result):
    if result.power_law is not None:
        fit = result.power_law
        table = Table(title="Power law ({} axis)".format(fit.axis))
        for col in ("d_L", "d_C", "gamma", "R^2", "points"):
            table.add_column(col, justify="right")
        table.add_row("{:.4f}".format(fit.d_l), "{:.4f}".format(fit.d_c), "{:.4f}".format(fit.gamma),
                      "{:.4f}".format(fit.r2), str(fit.n_points))
        console.print(table)
    if result.sigma is not None:
        table = Table(title="Scale exponents (x = {})".format(result.sigma.x))
        for col in ("layer", "lambda", "stderr", "sigma", "class"):
            table.add_column(col, justify="right")
        for l in result.sigma.layers:
            table.add_row(str(l.layer), "{:.6f}".format(l.lam), "{:.2e}".format(l.stderr),
                          "{:+.4f}".format(l.sigma), l.direction.value)
        console.print(table)
    if result.tickets is not None:
        densities = [d for _, d in result.tickets]
        console.print("winning tickets: {}{}".format(
            len(result.tickets),
            " (densities {:.4f} to {:.4f})".format(min(densities), max(densities)) if densities else ""))
    for note in result.notes:
        console.print("[yellow]{}[/yellow]".format(note))


@app.command()
def analyze(trace: Annotated[Path, typer.Argument(help="Trace CSV", exists=True, dir_okay=False)],
            axis: Annotated[str, typer.Option(help="'gap' or 'density'")] = 'gap',
            region: Annotated[Optional[str], typer.Option(help="Fixed critical region 'd_L,d_C'")] = None,
            tolerance: Annotated[float, typer.Option(help="Loss tolerance factor")] = 1.0,
            method: Annotated[str, typer.Option(help="'mean' or 'geometric'")] = 'mean',
            json_out: Annotated[Optional[Path], typer.Option("--json", help="Write the results as JSON")] = None):
    """Fit the power law, tabulate sigma and list winning tickets of a stored trace."""
    try:
        bounds = None if region is None else tuple(float(v) for v in region.split(','))
        analysis = AnalysisConfig(region=bounds, axis=axis, tolerance_factor=tolerance,
                                  eigen_method=method)
        result = analyze_trace(load_trace(str(trace)), analysis)
    except (PyImpFlowError, ValueError) as err:
        _fail(err)
    _print_analysis(result)
    if json_out is not None:
        write_summary(result.summary(), str(json_out))


@app.command()
def transfer(source_dir: Annotated[Path, typer.Argument(help="Artifact directory of the source experiment",
                                                        exists=True, file_okay=False)],
             output: Annotated[Path, typer.Option("--output", "-o")] = Path("transfer.csv"),
             native: Annotated[Optional[Path], typer.Option(help="Native trace CSV of the target task",
                                                            exists=True, dir_okay=False)] = None,
             source_run: Annotated[int, typer.Option(help="Source run index")] = 0,
             shrink: Annotated[str, typer.Option(help="'truncate' or 'merge'")] = 'truncate',
             config: ConfigOption = None, set_: SetOption = None, seed: SeedOption = None):
    """Retrain the target network of --config under the source experiment's masks."""
    try:
        cfg = _config(config, set_, seed)
        cfg = dataclasses.replace(cfg, transfer=TransferConfig(
            source_dir=str(source_dir), source_run=source_run, shrink=shrink))
        native_trace = None if native is None else load_trace(str(native))
        table = run_transfer(cfg, native_trace=native_trace)
    except (PyImpFlowError, ValueError) as err:
        _fail(err)
    write_transfer_table(table, str(output))
    result = Table(title="Transfer onto {}".format(cfg.task.task_id))
    for col in ("iter", "density", "transferred", "native", "winning"):
        result.add_column(col, justify="right")
    for r in table:
        result.add_row(str(r.source_iter), "{:.4f}".format(r.density),
                       "failed" if r.failed else "{:.4e}".format(r.transferred_loss),
                       "{:.4e}".format(r.native_loss), "yes" if r.winning_flag else "")
    console.print(result)


@app.command()
def report(artifact_dir: Annotated[Path, typer.Argument(help="Experiment artifact directory",
                                                        exists=True, file_okay=False)]):
    """Re-emit plot data and summary.json from stored traces."""
    try:
        path = emit_report(str(artifact_dir))
    except (PyImpFlowError, ValueError) as err:
        _fail(err)
    with open(path) as f:
        summary = json.load(f)
    console.print("[green]wrote[/green] {} ({} runs{})".format(
        path, summary['runs'], ", incomplete" if summary['incomplete'] else ""))


if __name__ == "__main__":
    app()
