import json
import math
import os

import numpy as np

from ..errors import TraceFormatError
from ..transfer import TransferRow, TransferTable
from .tracefile import FORMAT_VERSION, write_table, read_table

__all__ = ['write_summary', 'load_summary', 'write_transfer_table', 'load_transfer_table',
           'TRANSFER_COLUMNS']

TRANSFER_COLUMNS = ['source_iter', 'density', 'transferred_loss', 'native_loss',
                    'winning_flag', 'failed', 'native_density']


def _plain(value):
    """numpy scalars -> Python scalars, non-finite floats -> None"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_summary(summary, filename):
    """
    Write a summary dict as JSON. `format_version` is added if missing;
    NaN and infinite values are written as null.
    """
    summary = _plain(summary)
    summary.setdefault('format_version', FORMAT_VERSION)
    with open(filename, 'w') as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    return filename


def load_summary(filename):
    if not os.path.exists(filename):
        raise TraceFormatError("no such file: {}".format(filename))
    try:
        with open(filename) as f:
            summary = json.load(f)
    except ValueError as err:
        raise TraceFormatError("{} is not valid JSON: {}".format(filename, err)) from err
    if summary.get('format_version') != FORMAT_VERSION:
        raise TraceFormatError("{}: unsupported format version {}".format(
            filename, summary.get('format_version')))
    return summary


def write_transfer_table(table, filename):
    columns = {k: table.column(k) for k in TRANSFER_COLUMNS}
    for k in ('winning_flag', 'failed'):
        columns[k] = columns[k].astype(int)
    return write_table(filename, columns, names=TRANSFER_COLUMNS)


def load_transfer_table(filename):
    t = read_table(filename)
    if list(t.colnames) != TRANSFER_COLUMNS:
        raise TraceFormatError("{}: columns {} do not match {}".format(
            filename, list(t.colnames), TRANSFER_COLUMNS))
    rows = [TransferRow(source_iter=int(r['source_iter']), density=float(r['density']),
                        transferred_loss=float(r['transferred_loss']),
                        native_loss=float(r['native_loss']),
                        winning_flag=bool(r['winning_flag']), failed=bool(r['failed']),
                        native_density=float(r['native_density']))
            for r in t]
    return TransferTable(rows)
