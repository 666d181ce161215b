import numpy as np
import pytest
from hypothesis import given, settings, assume
from hypothesis import strategies as st

from pyimpflow import NetworkSpec, ParamState, Mask, init_network, ImpRecord, ImpTrace, \
    layer_magnitude_fraction, layer_magnitude_fractions, LayerMagnitudeSeries, \
    eigenvalue_estimate, sigma, Direction, classify_direction, sigma_report, \
    fit_power_law, fit_power_law_arrays, detect_critical_region, InsufficientDataError

SPEC = NetworkSpec(hidden_dims=(4, 4), output_dim=2)


def _trace(densities, losses, m_frac=None, x=0.1):
    n = len(densities)
    if m_frac is None:
        m_frac = np.tile([0.2, 0.5, 0.3], (n, 1))
    records = [ImpRecord(i, float(d), float(e), tuple(m), (1, 1, 1))
               for i, (d, e, m) in enumerate(zip(densities, losses, m_frac))]
    return ImpTrace(records, SPEC, config_echo={'x': x})


## Magnitude fractions

def test_magnitude_fractions_sum_to_one():
    rng = np.random.default_rng(0)
    for seed in range(20):
        p = init_network(SPEC, seed)
        m = Mask(SPEC, (rng.random(SPEC.n_weights) < 0.6).astype(np.uint8))
        if m.surviving() == 0:
            continue
        fractions = layer_magnitude_fractions(p, m)
        assert abs(fractions.sum() - 1.0) <= 1e-12
        assert np.all(fractions >= 0)
        assert layer_magnitude_fraction(p, m, 1) == fractions[1]

def test_magnitude_fractions_hand_computed():
    spec = NetworkSpec(hidden_dims=(1,), output_dim=1)
    p = ParamState(spec, [[[3.0]], [[-1.0]]], [[0.0], [0.0]])
    np.testing.assert_allclose(layer_magnitude_fractions(p, Mask.ones(spec)), [0.75, 0.25])
    with pytest.raises(InsufficientDataError):
        layer_magnitude_fractions(p, Mask.zeros(spec))
    with pytest.raises(IndexError):
        layer_magnitude_fraction(p, Mask.ones(spec), 2)


## Eigenvalues and sigma

def test_eigenvalue_estimate_constant_series():
    lam, err = eigenvalue_estimate([0.3] * 12)
    assert lam == 1.0
    assert err == 0.0

def test_eigenvalue_estimate_geometric_series():
    values = 0.5 * 1.1 ** np.arange(-8, 0)
    lam, err = eigenvalue_estimate(values)
    assert lam == pytest.approx(1.1, rel=1e-12)
    assert err == pytest.approx(0.0, abs=1e-12)
    lam_g, _ = eigenvalue_estimate(values, method='geometric')
    assert lam_g == pytest.approx(1.1, rel=1e-12)

def test_eigenvalue_estimate_single_ratio():
    lam, err = eigenvalue_estimate([0.4, 0.2])
    assert lam == 0.5
    assert err == 0.0

def test_eigenvalue_estimate_errors():
    with pytest.raises(InsufficientDataError):
        eigenvalue_estimate([0.5])
    with pytest.raises(ValueError):
        eigenvalue_estimate([0.5, 0.0, 0.2])
    with pytest.raises(ValueError):
        eigenvalue_estimate([0.5, 0.4], method='median')
    with pytest.raises(ValueError):
        LayerMagnitudeSeries(0, [0.5, 1.5])

@pytest.mark.parametrize('x', [0.01, 0.05, 0.1, 0.5])
def test_sigma_of_c_is_one(x):
    assert sigma(1.0 / (1.0 - x), x) == 1.0
    assert sigma(1.0, x) == 0.0

def test_sigma_errors():
    with pytest.raises(ValueError):
        sigma(0.0, 0.1)
    with pytest.raises(ValueError):
        sigma(1.1, 1.0)

def test_sigma_does_not_depend_on_sampling_stride():
    x, lam = 0.1, 1.02
    values = 0.01 * lam ** np.arange(20)
    s_full = sigma(eigenvalue_estimate(values)[0], x)
    # every second iteration is one IMP step at fraction 1 - (1 - x)^2
    s_half = sigma(eigenvalue_estimate(values[::2])[0], 1.0 - (1.0 - x)**2)
    assert s_full == pytest.approx(s_half, rel=1e-10)

def test_classify_direction():
    assert classify_direction(0.3) == Direction.RELEVANT
    assert classify_direction(-0.3) == Direction.IRRELEVANT
    assert classify_direction(0.02) == Direction.MARGINAL
    assert classify_direction(0.05) == Direction.MARGINAL

@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=0.5, max_value=2.0), st.floats(min_value=0.005, max_value=0.5))
def test_classification_matches_lambda_threshold(lam, x):
    s = sigma(lam, x)
    assume(abs(abs(s) - 0.05) > 1e-9)
    c = 1.0 / (1.0 - x)
    relevant = classify_direction(s) == Direction.RELEVANT
    assert relevant == (lam > c**0.05)

def test_sigma_report():
    n = 10
    m_frac = np.column_stack([0.2 * 1.01 ** np.arange(n), 0.5 * 0.99 ** np.arange(n),
                              0.3 * np.ones(n)])
    trace = _trace(np.linspace(1, 0.5, n), np.ones(n), m_frac=m_frac, x=0.01)
    report = sigma_report(trace)
    assert [l.direction for l in report.layers] == \
        [Direction.RELEVANT, Direction.IRRELEVANT, Direction.MARGINAL]
    assert report.layers[0].sigma == pytest.approx(np.log(1.01) / np.log(1 / 0.99))
    table = report.to_list()
    assert set(table[0]) == {'layer', 'lambda', 'stderr', 'sigma', 'class'}
    assert table[1]['class'] == 'irrelevant'


## Power law

def test_power_law_noiseless_recovery():
    d = np.linspace(0.31, 0.88, 20)
    e = (0.9 - d) ** -2.0
    fit = fit_power_law(_trace(d, e), (0.3, 0.9))
    assert fit.gamma == pytest.approx(2.0, abs=1e-6)
    assert fit.r2 == pytest.approx(1.0, abs=1e-9)
    assert fit.n_points == 20
    np.testing.assert_allclose(fit.calculate(d), e, rtol=1e-6)

def test_power_law_noisy_recovery():
    rng = np.random.default_rng(2)
    d = np.linspace(0.2, 0.85, 40)
    e = 0.01 * (0.9 - d) ** -1.5 * np.exp(rng.normal(0, 0.05, size=40))
    fit = fit_power_law_arrays(d, e, (0.15, 0.9))
    assert abs(fit.gamma - 1.5) <= 3 * fit.slope_stderr

def test_power_law_density_axis():
    d = np.linspace(0.2, 0.8, 15)
    e = 3.0 * d ** -4.0
    fit = fit_power_law_arrays(d, e, (0.1, 0.9), axis='density')
    assert fit.slope == pytest.approx(-4.0, abs=1e-9)
    assert fit.gamma == pytest.approx(4.0, abs=1e-9)

def test_power_law_constant_loss():
    d = np.linspace(0.3, 0.8, 10)
    fit = fit_power_law_arrays(d, np.full(10, 0.2), (0.2, 0.9))
    assert fit.gamma == pytest.approx(0.0, abs=1e-12)

def test_power_law_errors():
    d = np.linspace(0.3, 0.8, 10)
    with pytest.raises(InsufficientDataError):
        fit_power_law_arrays(d, np.ones(10), (0.3, 0.35))
    with pytest.raises(ValueError):
        fit_power_law_arrays(d, np.linspace(-1, 1, 10), (0.2, 0.9))
    with pytest.raises(ValueError):
        fit_power_law_arrays(d, np.ones(10), (0.9, 0.2))
    with pytest.raises(ValueError):
        fit_power_law_arrays(d, np.ones(10), (0.2, 0.9), axis='loss')


## Critical region

def test_critical_region_step():
    d = 0.99 ** np.arange(40)
    e = np.where(d >= 0.8, 1e-3, 1e-3 * (1 + 50 * (0.8 - d)))
    region = detect_critical_region(_trace(d, e))
    onset = np.flatnonzero(d < 0.8)[0]
    assert region.d_c == d[onset]
    assert region.d_l == d[-1]

def test_critical_region_flat_loss():
    d = 0.99 ** np.arange(20)
    assert detect_critical_region(_trace(d, np.full(20, 1e-3))) is None

def test_critical_region_recovering_loss():
    # the loss rises and then comes back below the baseline: no sustained departure
    d = 0.99 ** np.arange(20)
    e = np.full(20, 1e-3)
    e[5:12] = 5e-3
    assert detect_critical_region(_trace(d, e)) is None

def test_critical_region_too_short():
    with pytest.raises(InsufficientDataError):
        detect_critical_region(_trace(np.linspace(1, 0.9, 5), np.ones(5)))
