"""
Renormalisation-group style analysis of an IMP flow.

* M_i(n): share of the total surviving weight magnitude held by layer i
  after n IMP iterations
* lambda_i: mean ratio M_i(n+1) / M_i(n), the growth factor of layer i
  under one application of IMP
* sigma_i = log_c(lambda_i), c = 1/(1 - x): growth per unit of
  coarse-graining, comparable across prune fractions x. sigma > 0 marks a
  relevant direction, sigma < 0 an irrelevant one.
* Power-law scaling of the loss near a critical density d_C:
  e ~ (d_C - d)^(-gamma).
"""
from collections import namedtuple
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import stats
from scipy.ndimage import median_filter

from .errors import InsufficientDataError

__all__ = ['layer_magnitude_fraction', 'layer_magnitude_fractions',
           'LayerMagnitudeSeries', 'eigenvalue_estimate', 'sigma',
           'Direction', 'classify_direction', 'LayerSigma', 'SigmaReport',
           'sigma_report', 'PowerLawFit', 'fit_power_law', 'fit_power_law_arrays',
           'CriticalRegion', 'detect_critical_region']


## ----- Layer magnitude fractions

def layer_magnitude_fractions(params, mask):
    """
    M_i for every layer: summed |m * w| of layer i over the summed |m * w|
    of all layers. Weights only; biases are never pruned and are left out.
    """
    totals = np.array([np.sum(np.abs(W)) for W in mask.apply(params)])
    grand_total = totals.sum()
    if grand_total == 0.0:
        raise InsufficientDataError("every weight is pruned or zero; magnitude fractions undefined")
    return totals / grand_total


def layer_magnitude_fraction(params, mask, layer):
    if not 0 <= layer < params.spec.n_layers:
        raise IndexError("layer {} out of range for a {}-layer network".format(
            layer, params.spec.n_layers))
    return float(layer_magnitude_fractions(params, mask)[layer])


@dataclass
class LayerMagnitudeSeries:
    """
    M_i(n) for n = 0..q of one layer.

    layer : int

    values : numpy.ndarray

    n_params : int
        Number of weights N^(i) in the layer
    """
    layer: int
    values: np.ndarray
    n_params: int = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if np.any(self.values < 0.0) or np.any(self.values > 1.0):
            raise ValueError("magnitude fractions must lie in [0, 1]")

    @classmethod
    def from_trace(cls, trace, layer):
        return cls(layer, trace.m_frac[:, layer], trace.spec.layer_weight_counts[layer])


## ----- Eigenvalues and scale exponents

def eigenvalue_estimate(series, method='mean'):
    """
    Estimate lambda_i from the successive ratios M_i(n+1)/M_i(n).

    **Inputs**

    series : LayerMagnitudeSeries or array-like

    method : str
        'mean' (default): arithmetic mean of the ratios, with the standard
        error of that mean.
        'geometric': exp of the mean log-ratio, with a delta-method
        standard error.

    **Returns**

    (lambda, stderr). With a single ratio the standard error is 0.
    """
    values = np.asarray(getattr(series, 'values', series), dtype=np.float64)
    if len(values) < 2:
        raise InsufficientDataError("need at least two iterations to form a ratio")
    if np.any(values <= 0.0):
        raise ValueError("magnitude fractions must be positive to form ratios")
    ratios = values[1:] / values[:-1]
    if method == 'mean':
        lam = float(np.mean(ratios))
        stderr = float(stats.sem(ratios)) if len(ratios) > 1 else 0.0
    elif method == 'geometric':
        logs = np.log(ratios)
        lam = float(np.exp(np.mean(logs)))
        stderr = float(lam * stats.sem(logs)) if len(logs) > 1 else 0.0
    else:
        raise ValueError("unknown estimator '{}'".format(method))
    return lam, stderr


def sigma(lam, x):
    """
    Scale exponent sigma = ln(lambda) / ln(c) with c = 1/(1 - x).
    """
    if not lam > 0:
        raise ValueError("lambda must be positive, got {}".format(lam))
    if not 0.0 < x < 1.0:
        raise ValueError("x must lie in (0, 1), got {}".format(x))
    return float(np.log(lam) / np.log(1.0 / (1.0 - x)))


class Direction(str, Enum):
    RELEVANT   = 'relevant'
    IRRELEVANT = 'irrelevant'
    MARGINAL   = 'marginal'


def classify_direction(s, tol=0.05):
    """relevant if sigma > tol, irrelevant if sigma < -tol, marginal otherwise"""
    if s > tol:
        return Direction.RELEVANT
    if s < -tol:
        return Direction.IRRELEVANT
    return Direction.MARGINAL


@dataclass
class LayerSigma:
    layer: int
    lam: float
    stderr: float
    sigma: float
    direction: Direction

    def to_dict(self):
        return {'layer': self.layer, 'lambda': self.lam, 'stderr': self.stderr,
                'sigma': self.sigma, 'class': self.direction.value}


@dataclass
class SigmaReport:
    x: float
    c: float
    layers: list = field(default_factory=list)
    method: str = 'mean'

    @property
    def sigmas(self):
        return np.array([l.sigma for l in self.layers])

    def to_list(self):
        return [l.to_dict() for l in self.layers]


def sigma_report(trace, x=None, tol=0.05, method='mean'):
    """
    lambda_i, its standard error, sigma_i and the direction class for every
    layer of a trace.

    x : float (default: the trace's prune fraction)
    """
    x = trace.x if x is None else x
    if x is None:
        raise ValueError("prune fraction x unknown for this trace")
    layers = []
    for i in range(trace.spec.n_layers):
        lam, err = eigenvalue_estimate(LayerMagnitudeSeries.from_trace(trace, i), method=method)
        s = sigma(lam, x)
        layers.append(LayerSigma(i, lam, err, s, classify_direction(s, tol)))
    return SigmaReport(x=x, c=1.0 / (1.0 - x), layers=layers, method=method)


## ----- Power-law scaling

@dataclass
class PowerLawFit:
    """
    Least-squares line ln(e) = intercept + slope * ln(X) over the critical
    region, with X = d_C - d (axis='gap') or X = d (axis='density').

    gamma : float
        Critical exponent, the negative of the slope
    """
    d_l: float
    d_c: float
    gamma: float
    slope: float
    intercept: float
    r2: float
    n_points: int
    slope_stderr: float
    axis: str = 'gap'

    def abscissa(self, densities):
        densities = np.asarray(densities, dtype=np.float64)
        return self.d_c - densities if self.axis == 'gap' else densities

    def calculate(self, densities):
        """The fitted power law evaluated at `densities`"""
        return np.exp(self.intercept) * self.abscissa(densities)**self.slope

    def to_dict(self):
        return {'d_l': self.d_l, 'd_c': self.d_c, 'gamma': self.gamma, 'r2': self.r2,
                'slope': self.slope, 'intercept': self.intercept,
                'slope_stderr': self.slope_stderr, 'n_points': self.n_points,
                'axis': self.axis}


def fit_power_law_arrays(densities, losses, region, axis='gap'):
    """
    Fit e ~ X^slope on the points with d_L < d < d_C.

    **Inputs**

    densities, losses : array-like

    region : (d_L, d_C)

    axis : str
        'gap' regresses on ln(d_C - d); 'density' regresses on ln(d)

    **Returns**

    PowerLawFit. Raises InsufficientDataError with fewer than three
    points in the region, ValueError if any of them has a loss <= 0.
    """
    d_l, d_c = float(region[0]), float(region[1])
    if not d_l < d_c:
        raise ValueError("critical region must satisfy d_L < d_C, got {}".format(region))
    if axis not in ('gap', 'density'):
        raise ValueError("axis must be 'gap' or 'density'")
    d = np.asarray(densities, dtype=np.float64)
    e = np.asarray(losses, dtype=np.float64)
    sel = (d > d_l) & (d < d_c) & np.isfinite(e)
    if sel.sum() < 3:
        raise InsufficientDataError("only {} points inside ({}, {})".format(sel.sum(), d_l, d_c))
    if np.any(e[sel] <= 0.0):
        raise ValueError("power-law fits need positive losses")
    X = d_c - d[sel] if axis == 'gap' else d[sel]
    result = stats.linregress(np.log(X), np.log(e[sel]))
    r2 = float(np.clip(result.rvalue**2, 0.0, 1.0))
    return PowerLawFit(d_l=d_l, d_c=d_c, gamma=-float(result.slope), slope=float(result.slope),
                       intercept=float(result.intercept), r2=r2, n_points=int(sel.sum()),
                       slope_stderr=float(result.stderr), axis=axis)


def fit_power_law(trace, region, loss_key='final_loss', axis='gap'):
    """Power-law fit of a trace column against density over `region`"""
    return fit_power_law_arrays(trace.densities, trace.column(loss_key), region, axis=axis)


CriticalRegion = namedtuple('CriticalRegion', ['d_l', 'd_c'])

def detect_critical_region(trace, loss_key='final_loss', tolerance_factor=1.0, window=3):
    """
    Locate the density interval in which the loss has left its full-model
    baseline.

    The loss is smoothed with a `window`-point moving median. d_C is the
    density of the first iteration after which the smoothed loss stays
    above tolerance_factor * (full-model loss) for the rest of the trace;
    d_L is the smallest density reached before the trace ends (or before
    the first non-finite loss).

    **Returns**

    CriticalRegion(d_l, d_c), or None when the loss never departs from its
    baseline for good.
    """
    d = trace.densities
    e = trace.column(loss_key)
    if len(d) < 10:
        raise InsufficientDataError("region detection needs at least 10 iterations, got {}".format(len(d)))
    bad = np.flatnonzero(~np.isfinite(e))
    if len(bad):
        d, e = d[:bad[0]], e[:bad[0]]
    if len(d) < 2:
        return None
    smoothed = median_filter(e, size=window, mode='nearest')
    above = smoothed > tolerance_factor * e[0]
    if not above[-1]:
        return None
    below = np.flatnonzero(~above)
    onset = below[-1] + 1 if len(below) else 0
    d_c, d_l = float(d[onset]), float(d[-1])
    if not d_l < d_c:
        return None
    return CriticalRegion(d_l, d_c)
