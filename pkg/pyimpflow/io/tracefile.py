import json
import os

import numpy as np
from astropy.table import Table

from ..errors import TraceFormatError
from ..imp import ImpRecord, ImpTrace
from ..network import Mask, NetworkSpec

__all__ = ['FORMAT_VERSION', 'trace_columns', 'write_trace', 'load_trace',
           'write_masks', 'load_masks', 'write_table', 'read_table']

FORMAT_VERSION = '1.0'

FLOAT_FORMAT = '%.17g'


def trace_columns(n_layers, averaged=False):
    """Ordered column names of a trace CSV for a network with `n_layers` layers"""
    cols = ['iter', 'density', 'final_loss']
    if averaged:
        cols.append('final_loss_sem')
    cols += ['m_frac_layer{}'.format(i) for i in range(n_layers)]
    cols += ['surv_layer{}'.format(i) for i in range(n_layers)]
    return cols


def _sidecar(filename):
    return os.path.splitext(filename)[0] + '.json'


def write_table(filename, columns, names=None):
    """
    Write a dict of equal-length columns to CSV with lossless float
    formatting. `names` fixes the column order (default: dict order).
    """
    names = list(columns) if names is None else list(names)
    table = Table([np.asarray(columns[n]) for n in names], names=names)
    formats = {n: FLOAT_FORMAT for n in names if table[n].dtype.kind == 'f'}
    table.write(filename, format='ascii.csv', formats=formats, overwrite=True)
    return filename


def read_table(filename):
    if not os.path.exists(filename):
        raise TraceFormatError("no such file: {}".format(filename))
    try:
        return Table.read(filename, format='ascii.csv')
    except Exception as err:
        raise TraceFormatError("cannot read {}: {}".format(filename, err)) from err


def write_trace(trace, filename):
    """
    Write an IMP trace to `filename` (CSV) and its configuration echo,
    network and initialisation fingerprint to the sidecar `<stem>.json`.

    A trace whose records carry `final_loss_sem` (an averaged trace) gets
    the extra `final_loss_sem` column.
    """
    n_layers = trace.spec.n_layers
    averaged = any(r.final_loss_sem is not None for r in trace)
    m_frac, surv = trace.m_frac, trace.surviving
    columns = {'iter': trace.iterations.astype(int),
               'density': trace.densities,
               'final_loss': trace.losses}
    if averaged:
        columns['final_loss_sem'] = trace.column('final_loss_sem')
    for i in range(n_layers):
        columns['m_frac_layer{}'.format(i)] = m_frac[:, i]
    for i in range(n_layers):
        columns['surv_layer{}'.format(i)] = surv[:, i]
    write_table(filename, columns, names=trace_columns(n_layers, averaged))

    meta = {'format_version': FORMAT_VERSION,
            'network': trace.spec.to_dict(),
            'config_echo': trace.config_echo,
            'init_fingerprint': trace.init_fingerprint}
    with open(_sidecar(filename), 'w') as f:
        json.dump(meta, f, indent=2, sort_keys=True)
    return filename


def load_trace(filename, spec=None):
    """
    Load an IMP trace CSV.

    **Inputs**

    filename : str
        Path to the trace CSV

    spec : NetworkSpec, optional
        Network of the run; read from the sidecar JSON when omitted

    **Returns**

    pyimpflow.ImpTrace (without masks)

    Raises TraceFormatError if the file is missing or unreadable, or if its
    columns are not exactly those of a plain or averaged trace.
    """
    table = read_table(filename)
    meta = {}
    if os.path.exists(_sidecar(filename)):
        with open(_sidecar(filename)) as f:
            meta = json.load(f)
        if meta.get('format_version') != FORMAT_VERSION:
            raise TraceFormatError("{}: unsupported format version {}".format(
                filename, meta.get('format_version')))
    if spec is None:
        if 'network' not in meta:
            raise TraceFormatError("{}: network unknown, no sidecar {}".format(
                filename, _sidecar(filename)))
        spec = NetworkSpec.from_dict(meta['network'])

    names = list(table.colnames)
    averaged = 'final_loss_sem' in names
    expected = trace_columns(spec.n_layers, averaged)
    if names != expected:
        raise TraceFormatError("{}: columns {} do not match {}".format(filename, names, expected))

    records = []
    for row in table:
        records.append(ImpRecord(
            iteration=int(row['iter']),
            density=float(row['density']),
            final_loss=float(row['final_loss']),
            m_frac=tuple(float(row['m_frac_layer{}'.format(i)]) for i in range(spec.n_layers)),
            surviving=tuple(int(row['surv_layer{}'.format(i)]) for i in range(spec.n_layers)),
            final_loss_sem=float(row['final_loss_sem']) if averaged else None))
    return ImpTrace(records, spec, config_echo=meta.get('config_echo'),
                    init_fingerprint=meta.get('init_fingerprint'))


def write_masks(masks, filename):
    """Save per-iteration masks as one uint8 row per iteration (.npy)"""
    np.save(filename, np.stack([m.bits for m in masks]).astype(np.uint8))
    return filename


def load_masks(filename, spec):
    if not os.path.exists(filename):
        raise TraceFormatError("no such file: {}".format(filename))
    bits = np.load(filename)
    if bits.ndim != 2 or bits.shape[1] != spec.n_weights:
        raise TraceFormatError("{}: mask array of shape {} does not fit {} weights".format(
            filename, bits.shape, spec.n_weights))
    return [Mask(spec, row) for row in bits]
