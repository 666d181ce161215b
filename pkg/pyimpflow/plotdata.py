## Plot data: the columns behind each figure, ready for any plotting tool

import numpy as np

__all__ = ['loss_curve', 'magnitude_curves', 'power_law_curve', 'transfer_overlay']


def _log10(values):
    values = np.asarray(values, dtype=np.float64)
    with np.errstate(divide='ignore', invalid='ignore'):
        return np.where(values > 0, np.log10(values), np.nan)


def loss_curve(trace):
    """
    Final loss against density, the curve of the loss-vs-density figures.

    trace : pyimpflow.ImpTrace
        A single or averaged trace. For an averaged trace the standard
        error of the mean loss is included.

    Returns a dict of columns: iter, density, final_loss, [final_loss_sem,]
    log10_density, log10_loss
    """
    cols = {'iter': trace.iterations,
            'density': trace.densities,
            'final_loss': trace.losses}
    sem = trace.column('final_loss_sem')
    if not np.all(np.isnan(sem)):
        cols['final_loss_sem'] = sem
    cols['log10_density'] = _log10(trace.densities)
    cols['log10_loss'] = _log10(trace.losses)
    return cols


def magnitude_curves(trace):
    """Layer magnitude fractions M_i(n) against iteration and density"""
    cols = {'iter': trace.iterations, 'density': trace.densities}
    m_frac = trace.m_frac
    for i in range(trace.spec.n_layers):
        cols['m_frac_layer{}'.format(i)] = m_frac[:, i]
    return cols


def power_law_curve(fit, n_points=50):
    """
    The fitted power law sampled over the open critical region
    (d_L, d_C), for overlaying on the loss curve.
    """
    lo, hi = fit.d_l, fit.d_c
    pad = 1e-3 * (hi - lo)
    density = np.linspace(lo + pad, hi - pad, n_points)
    loss = fit.calculate(density)
    return {'density': density, 'fitted_loss': loss,
            'log10_density': _log10(density), 'log10_loss': _log10(loss)}


def transfer_overlay(table):
    """Transferred and native losses on a shared density axis"""
    return {'source_iter': table.column('source_iter'),
            'density': table.column('density'),
            'transferred_loss': table.column('transferred_loss'),
            'native_density': table.column('native_density'),
            'native_loss': table.column('native_loss'),
            'log10_transferred_loss': _log10(table.column('transferred_loss')),
            'log10_native_loss': _log10(table.column('native_loss'))}
