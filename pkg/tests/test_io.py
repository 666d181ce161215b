import json
import os

import numpy as np
import pytest

from pyimpflow import NetworkSpec, Mask, ImpRecord, ImpTrace, TransferRow, TransferTable, \
    TraceFormatError
from pyimpflow.io import FORMAT_VERSION, trace_columns, write_trace, load_trace, write_masks, \
    load_masks, write_summary, load_summary, write_transfer_table, load_transfer_table, \
    write_table, read_table
from pyimpflow.plotdata import loss_curve, magnitude_curves, transfer_overlay

SPEC = NetworkSpec(hidden_dims=(3, 3), output_dim=2)


def _trace(sem=False):
    rng = np.random.default_rng(0)
    records = []
    for n in range(6):
        m = rng.random(3)
        records.append(ImpRecord(n, 1.0 - 0.1 * n, float(rng.random()) / 3.0, tuple(m / m.sum()),
                                 (3 - n // 3, 9 - n, 6), final_loss_sem=0.01 * n if sem else None))
    echo = {'x': 0.1, 'q': 5, 'scope': 'full', 'seed': 4, 'task': {'task_id': 'nl_oscillator'}}
    return ImpTrace(records, SPEC, config_echo=echo, init_fingerprint='abc123')


def test_trace_columns():
    assert trace_columns(2) == ['iter', 'density', 'final_loss', 'm_frac_layer0', 'm_frac_layer1',
                                'surv_layer0', 'surv_layer1']
    assert trace_columns(1, averaged=True)[3] == 'final_loss_sem'

@pytest.mark.parametrize('sem', [False, True])
def test_trace_file(tmp_path, sem):
    trace = _trace(sem)
    path = str(tmp_path / 'trace.csv')
    write_trace(trace, path)
    assert os.path.exists(str(tmp_path / 'trace.json'))
    again = load_trace(path)
    assert again.spec == SPEC
    assert again.config_echo == trace.config_echo
    assert again.init_fingerprint == 'abc123'
    # floats are written with 17 significant digits
    np.testing.assert_array_equal(again.losses, trace.losses)
    np.testing.assert_array_equal(again.m_frac, trace.m_frac)
    np.testing.assert_array_equal(again.surviving, trace.surviving)
    np.testing.assert_array_equal(again.iterations, trace.iterations)
    if sem:
        np.testing.assert_array_equal(again.column('final_loss_sem'), trace.column('final_loss_sem'))
    else:
        assert all(r.final_loss_sem is None for r in again)

def test_trace_file_errors(tmp_path):
    with pytest.raises(TraceFormatError):
        load_trace(str(tmp_path / 'missing.csv'))

    path = str(tmp_path / 'trace.csv')
    write_trace(_trace(), path)
    # a different network does not match the stored columns
    with pytest.raises(TraceFormatError):
        load_trace(path, spec=NetworkSpec(hidden_dims=(3,), output_dim=2))

    os.remove(str(tmp_path / 'trace.json'))
    with pytest.raises(TraceFormatError):
        load_trace(path)
    assert len(load_trace(path, spec=SPEC)) == 6

    extra = str(tmp_path / 'extra.csv')
    write_table(extra, {'iter': [0, 1], 'density': [1.0, 0.9], 'loss': [1.0, 2.0]})
    with pytest.raises(TraceFormatError):
        load_trace(extra, spec=SPEC)

def test_trace_file_version(tmp_path):
    path = str(tmp_path / 'trace.csv')
    write_trace(_trace(), path)
    sidecar = str(tmp_path / 'trace.json')
    with open(sidecar) as f:
        meta = json.load(f)
    assert meta['format_version'] == FORMAT_VERSION
    meta['format_version'] = '0.1'
    with open(sidecar, 'w') as f:
        json.dump(meta, f)
    with pytest.raises(TraceFormatError):
        load_trace(path)

def test_masks_file(tmp_path):
    rng = np.random.default_rng(3)
    masks = [Mask.ones(SPEC)] + [Mask(SPEC, rng.integers(0, 2, SPEC.n_weights)) for _ in range(3)]
    path = str(tmp_path / 'masks.npy')
    write_masks(masks, path)
    assert np.load(path).dtype == np.uint8
    again = load_masks(path, SPEC)
    assert again == masks
    with pytest.raises(TraceFormatError):
        load_masks(path, NetworkSpec(hidden_dims=(4,), output_dim=2))
    with pytest.raises(TraceFormatError):
        load_masks(str(tmp_path / 'none.npy'), SPEC)

def test_summary_file(tmp_path):
    path = str(tmp_path / 'summary.json')
    write_summary({'gamma': np.float64(1.5), 'sem': float('nan'), 'counts': np.arange(3),
                   'nested': {'inf': np.inf}}, path)
    summary = load_summary(path)
    assert summary == {'gamma': 1.5, 'sem': None, 'counts': [0, 1, 2], 'nested': {'inf': None},
                       'format_version': FORMAT_VERSION}

    with open(path, 'w') as f:
        f.write('{not json')
    with pytest.raises(TraceFormatError):
        load_summary(path)
    with open(path, 'w') as f:
        json.dump({'format_version': '9.9'}, f)
    with pytest.raises(TraceFormatError):
        load_summary(path)

def test_transfer_table_file(tmp_path):
    rows = [TransferRow(0, 1.0, 0.2, 0.25, True, False, 1.0),
            TransferRow(1, 0.9, float('nan'), 0.3, False, True, 0.9)]
    path = str(tmp_path / 'transfer.csv')
    write_transfer_table(TransferTable(rows), path)
    again = load_transfer_table(path)
    assert [r.winning_flag for r in again] == [True, False]
    assert [r.failed for r in again] == [False, True]
    assert np.isnan(again.rows[1].transferred_loss)
    assert again.rows[0].native_loss == 0.25
    assert list(read_table(path).colnames)[:3] == ['source_iter', 'density', 'transferred_loss']

def test_plot_data():
    trace = _trace(sem=True)
    cols = loss_curve(trace)
    assert list(cols) == ['iter', 'density', 'final_loss', 'final_loss_sem',
                          'log10_density', 'log10_loss']
    np.testing.assert_allclose(cols['log10_density'], np.log10(trace.densities))
    assert 'final_loss_sem' not in loss_curve(_trace(sem=False))
    assert len(magnitude_curves(trace)) == 2 + SPEC.n_layers
    rows = [TransferRow(0, 1.0, 0.0, 0.1)]
    overlay = transfer_overlay(TransferTable(rows))
    # log of a zero loss is undefined rather than -inf
    assert np.isnan(overlay['log10_transferred_loss'][0])
