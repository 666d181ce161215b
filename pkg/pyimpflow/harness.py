"""
Experiment harness: repeated IMP runs, run averaging, artifact files and
the report built from them.

Artifact directory layout::

    config.json                      configuration echo
    runs.json                        seeds, completed runs, failures
    runs/run_000/trace.csv           per-run trace (+ trace.json sidecar)
    runs/run_000/masks.npy           per-iteration masks
    runs/run_001/partial_trace.csv   iterations a failed run completed
    averaged_trace.csv               mean over completed runs (+ sidecar)
    transfer.csv                     transfer comparison, if configured
    plots/*.csv                      plot data
    summary.json                     fits, sigma table, tickets
"""
import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .config import ExperimentConfig, AnalysisConfig
from .errors import (PyImpFlowError, ShapeMismatchError, InsufficientDataError,
                     TraceFormatError)
from .imp import ImpRecord, ImpTrace, run_imp, identify_winning_tickets
from .io import (FORMAT_VERSION, write_trace, load_trace, write_masks, load_masks,
                 write_table, write_summary, write_transfer_table, load_transfer_table)
from .logger import log
from .network import init_network
from .plotdata import loss_curve, magnitude_curves, power_law_curve, transfer_overlay
from .rganalysis import sigma_report, fit_power_law, detect_critical_region
from .transfer import MaskTransferPlan, transfer_experiment

__all__ = ['RunArtifact', 'AnalysisResult', 'resolve_workers', 'run_dir', 'run_single',
           'average_runs', 'analyze_trace', 'run_experiment', 'run_transfer', 'emit_report']

WORKERS_ENV = 'IMP_RG_WORKERS'


@dataclass
class RunArtifact:
    """Paths of everything an experiment wrote"""
    directory: str
    config_path: str
    trace_paths: list = field(default_factory=list)
    averaged_trace_path: str = None
    transfer_path: str = None
    summary_path: str = None
    failures: list = field(default_factory=list)
    format_version: str = FORMAT_VERSION

    @property
    def incomplete(self):
        return len(self.failures) > 0


def resolve_workers(requested=1):
    """`requested`, capped by the IMP_RG_WORKERS environment variable"""
    workers = max(1, int(requested))
    cap = os.environ.get(WORKERS_ENV)
    if cap:
        try:
            workers = min(workers, max(1, int(cap)))
        except ValueError:
            log.warning("ignoring non-integer %s=%r", WORKERS_ENV, cap)
    return workers


def run_dir(directory, index):
    return os.path.join(directory, 'runs', 'run_{:03d}'.format(index))


def run_single(config, run_seed):
    """One IMP run of an experiment: initialise from `run_seed`, prune, retrain"""
    task = config.task.build()
    init = init_network(config.network, run_seed)
    return run_imp(init, task, config.imp_config(run_seed))


def _run_job(args):
    config, index, seed = args
    try:
        return index, seed, run_single(config, seed), None, None
    except PyImpFlowError as err:
        partial = getattr(err, 'partial_trace', None)
        return index, seed, None, '{}: {}'.format(type(err).__name__, err), partial


## ----- Averaging

def average_runs(traces):
    """
    Average a list of IMP traces iteration by iteration.

    **Inputs**

    traces : list of ImpTrace
        Runs of one experiment (same network, x, q and scope)

    **Returns**

    ImpTrace whose losses and magnitude fractions are the per-iteration
    means, with the standard error of the mean loss when there is more than
    one trace. Densities and survivor counts come from the first trace.
    """
    if len(traces) == 0:
        raise InsufficientDataError("no traces to average")
    t0 = traces[0]
    for t in traces[1:]:
        if t.spec != t0.spec:
            raise ShapeMismatchError("traces follow different networks")
        if len(t) != len(t0):
            raise ShapeMismatchError("traces have {} and {} iterations".format(len(t0), len(t)))
        for key in ('x', 'q', 'scope'):
            if t.config_echo.get(key) != t0.config_echo.get(key):
                raise ShapeMismatchError("traces differ in {}: {} vs {}".format(
                    key, t0.config_echo.get(key), t.config_echo.get(key)))

    losses = np.array([t.losses for t in traces])
    m_frac = np.array([t.m_frac for t in traces])
    mean_loss = losses.mean(axis=0)
    sem = stats.sem(losses, axis=0) if len(traces) > 1 else None
    mean_frac = m_frac.mean(axis=0)

    records = []
    for n, r in enumerate(t0):
        records.append(ImpRecord(iteration=r.iteration, density=r.density,
                                 final_loss=float(mean_loss[n]),
                                 m_frac=tuple(float(m) for m in mean_frac[n]),
                                 surviving=r.surviving,
                                 final_loss_sem=None if sem is None else float(sem[n])))
    echo = dict(t0.config_echo)
    echo.pop('seed', None)
    echo['seeds'] = [t.config_echo.get('seed') for t in traces]
    return ImpTrace(records, t0.spec, config_echo=echo)


## ----- Analysis

@dataclass
class AnalysisResult:
    region: tuple = None
    power_law: object = None
    sigma: object = None
    tickets: list = None
    notes: list = field(default_factory=list)

    def summary(self):
        return {'critical_region': None if self.region is None else list(self.region),
                'power_law': None if self.power_law is None else self.power_law.to_dict(),
                'sigma': None if self.sigma is None else self.sigma.to_list(),
                'tickets': None if self.tickets is None else
                           [{'iter': int(n), 'density': float(d)} for n, d in self.tickets],
                'notes': list(self.notes)}


def analyze_trace(trace, analysis=None):
    """
    Run the enabled analyses on a trace: critical region and power-law fit,
    sigma table, winning tickets. Analyses that lack data are skipped with
    a note rather than failing the report.
    """
    analysis = AnalysisConfig() if analysis is None else analysis
    result = AnalysisResult()

    if analysis.power_law:
        try:
            region = analysis.region
            if region is None:
                region = detect_critical_region(trace, tolerance_factor=analysis.tolerance_factor,
                                                window=analysis.window)
            result.region = None if region is None else tuple(region)
            if region is None:
                result.notes.append('no critical region: the loss never left its baseline')
            else:
                result.power_law = fit_power_law(trace, region, axis=analysis.axis)
        except InsufficientDataError as err:
            result.notes.append('power law skipped: {}'.format(err))

    if analysis.sigma:
        try:
            result.sigma = sigma_report(trace, tol=analysis.sigma_tol, method=analysis.eigen_method)
        except (InsufficientDataError, ValueError) as err:
            result.notes.append('sigma skipped: {}'.format(err))

    if analysis.tickets:
        result.tickets = identify_winning_tickets(trace, tolerance_factor=analysis.tolerance_factor)
    return result


## ----- Experiments

def run_experiment(config, output_dir=None):
    """
    Run a configured experiment end to end.

    **Inputs**

    config : ExperimentConfig

    output_dir : str (default: config.output_dir)

    **Returns**

    RunArtifact

    R = config.repeats IMP runs use seeds config.seed + r. A run that
    diverges or collapses a layer is recorded in runs.json and left out of
    the average; the summary is then marked incomplete.
    """
    directory = config.output_dir if output_dir is None else output_dir
    os.makedirs(directory, exist_ok=True)
    artifact = RunArtifact(directory=directory, config_path=os.path.join(directory, 'config.json'))
    with open(artifact.config_path, 'w') as f:
        json.dump(config.to_dict(), f, indent=2, sort_keys=True)

    jobs = [(config, r, seed) for r, seed in enumerate(config.run_seeds())]
    workers = min(resolve_workers(config.workers), len(jobs))
    log.info("experiment %s: %d runs on %d worker(s)", config.name, len(jobs), workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(job) for job in jobs]

    traces = []
    for index, seed, trace, error, partial in results:
        if trace is None:
            log.warning("run %d (seed %d) failed: %s", index, seed, error)
            failure = {'run': index, 'seed': seed, 'error': error,
                       'iterations_completed': 0 if partial is None else len(partial)}
            if partial is not None and len(partial) > 0:
                path = os.path.join(run_dir(directory, index), 'partial_trace.csv')
                os.makedirs(os.path.dirname(path), exist_ok=True)
                failure['partial_trace'] = os.path.relpath(write_trace(partial, path), directory)
            artifact.failures.append(failure)
            continue
        path = os.path.join(run_dir(directory, index), 'trace.csv')
        os.makedirs(os.path.dirname(path), exist_ok=True)
        write_trace(trace, path)
        write_masks(trace.masks, os.path.join(run_dir(directory, index), 'masks.npy'))
        artifact.trace_paths.append(path)
        traces.append(trace)

    with open(os.path.join(directory, 'runs.json'), 'w') as f:
        json.dump({'seeds': config.run_seeds(),
                   'completed': [r for r, _, t, _, _ in results if t is not None],
                   'failures': artifact.failures}, f, indent=2, sort_keys=True)

    if not traces:
        log.error("experiment %s: every run failed", config.name)
        artifact.summary_path = write_summary(
            {'config_echo': config.to_dict(), 'runs': 0, 'incomplete': True,
             'failures': artifact.failures, 'power_law': None, 'sigma': None, 'tickets': None},
            os.path.join(directory, 'summary.json'))
        return artifact

    averaged = average_runs(traces)
    artifact.averaged_trace_path = write_trace(averaged, os.path.join(directory, 'averaged_trace.csv'))

    if config.transfer is not None:
        first = traces[0]
        table = run_transfer(config, native_trace=averaged,
                             target_seed=first.config_echo['seed'])
        artifact.transfer_path = write_transfer_table(table, os.path.join(directory, 'transfer.csv'))

    artifact.summary_path = emit_report(directory, config.analysis)
    return artifact


def _load_run(directory, index, with_masks=False):
    path = os.path.join(run_dir(directory, index), 'trace.csv')
    trace = load_trace(path)
    if with_masks:
        trace.masks = load_masks(os.path.join(run_dir(directory, index), 'masks.npy'), trace.spec)
        if len(trace.masks) != len(trace):
            raise TraceFormatError("{}: {} masks for {} iterations".format(
                path, len(trace.masks), len(trace)))
    return trace


def run_transfer(config, native_trace=None, target_seed=None):
    """
    Transfer the masks of `config.transfer.source_dir` onto this
    experiment's task and network.

    target_seed : int (default: config.seed)
        Seed of the target initialisation and training
    """
    tc = config.transfer
    if tc is None or tc.source_dir is None:
        raise ValueError("no transfer source configured")
    seed = config.seed if target_seed is None else target_seed
    source = _load_run(tc.source_dir, tc.source_run, with_masks=True)
    plan = MaskTransferPlan.for_specs(source.spec, config.network,
                                      shrink=tc.shrink, merge_mode=tc.merge_mode)
    target_task = config.task.build()
    target_init = init_network(config.network, seed)
    train_config = dataclasses.replace(config.train, seed=seed)
    return transfer_experiment(source, target_task, target_init, plan, train_config,
                               native_trace=native_trace,
                               tolerance_factor=config.analysis.tolerance_factor,
                               workers=resolve_workers(config.workers))


## ----- Report

def emit_report(artifact_dir, analysis=None):
    """
    Write plot-data CSVs under `artifact_dir/plots/` and `summary.json`.

    **Inputs**

    artifact_dir : str
        Directory written by `run_experiment`

    analysis : AnalysisConfig (default: the one in config.json)

    **Returns**

    Path of summary.json. Raises TraceFormatError if the averaged trace is
    missing or corrupt.
    """
    config_path = os.path.join(artifact_dir, 'config.json')
    if not os.path.exists(config_path):
        raise TraceFormatError("{} has no config.json".format(artifact_dir))
    with open(config_path) as f:
        config_echo = json.load(f)
    if analysis is None:
        analysis = ExperimentConfig.from_dict(config_echo).analysis

    runs = {'seeds': [], 'completed': [], 'failures': []}
    runs_path = os.path.join(artifact_dir, 'runs.json')
    if os.path.exists(runs_path):
        with open(runs_path) as f:
            runs = json.load(f)

    trace = load_trace(os.path.join(artifact_dir, 'averaged_trace.csv'))
    result = analyze_trace(trace, analysis)

    plots = os.path.join(artifact_dir, 'plots')
    os.makedirs(plots, exist_ok=True)
    write_table(os.path.join(plots, 'loss_vs_density.csv'), loss_curve(trace))
    if result.sigma is not None:
        write_table(os.path.join(plots, 'layer_magnitudes.csv'), magnitude_curves(trace))
    if result.power_law is not None:
        write_table(os.path.join(plots, 'power_law_fit.csv'), power_law_curve(result.power_law))

    summary = dict(result.summary(),
                   config_echo=config_echo,
                   format_version=FORMAT_VERSION,
                   runs=len(runs['completed']),
                   incomplete=len(runs['failures']) > 0,
                   failures=runs['failures'])

    transfer_path = os.path.join(artifact_dir, 'transfer.csv')
    if os.path.exists(transfer_path):
        table = load_transfer_table(transfer_path)
        write_table(os.path.join(plots, 'transfer_overlay.csv'), transfer_overlay(table))
        summary['transfer'] = {
            'winning': [{'iter': r.source_iter, 'density': r.density} for r in table if r.winning_flag],
            'failed': [r.source_iter for r in table if r.failed]}

    path = write_summary(summary, os.path.join(artifact_dir, 'summary.json'))
    log.info("report written to %s", path)
    return path
