import importlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pyimpflow import NetworkSpec, ParamState, Mask, init_network, NLOscillator, HenonHeiles, \
    TrainConfig, PruneScope, ImpConfig, ImpRecord, ImpTrace, prune_step, rewind, density, \
    scope_density, run_imp, identify_winning_tickets, iterations_to_density, prune_rounds_to_density, \
    LayerCollapseError, TrainingDivergedError, InsufficientDataError, ShapeMismatchError

LINEAR = NetworkSpec(hidden_dims=(), output_dim=100)    # one layer, 100 weights
SMALL = NetworkSpec(hidden_dims=(6, 5), output_dim=2)
FAST = TrainConfig(epochs=3)


def _params_with_weights(spec, w):
    return ParamState(spec, [np.asarray(w, dtype=float).reshape(spec.layer_shapes[0])],
                      [np.zeros(spec.output_dim)])


## Prune scopes

def test_prune_scope():
    assert PruneScope.full_model().is_full_model
    assert PruneScope.full_model().layer_indices(SMALL) == (0, 1, 2)
    assert PruneScope.single_layer(1).layer_indices(SMALL) == (1,)
    assert PruneScope.of_layers(2, 1).layers == (1, 2)
    assert len(PruneScope.single_layer(1).weight_indices(SMALL)) == 30
    for label in ('full', 'layer:2', 'layer:1,2'):
        assert PruneScope.parse(label).label == label
    with pytest.raises(ValueError):
        PruneScope.single_layer(3).layer_indices(SMALL)
    with pytest.raises(ValueError):
        PruneScope.parse('everything')


## Single prune steps

def test_prune_step_count():
    rng = np.random.default_rng(0)
    p = _params_with_weights(LINEAR, rng.normal(size=100))
    m = prune_step(p, Mask.ones(LINEAR), 0.1, PruneScope.full_model())
    assert m.surviving() == 90
    # the ten smallest magnitudes are gone
    order = np.argsort(np.abs(p.weight_vector()))
    assert np.all(m.bits[order[:10]] == 0)
    assert np.all(m.bits[order[10:]] == 1)

def test_prune_step_prunes_at_least_one():
    p = _params_with_weights(LINEAR, np.arange(1, 101))
    bits = np.zeros(100, dtype=np.uint8)
    bits[:50] = 1
    m = prune_step(p, Mask(LINEAR, bits), 0.01, PruneScope.full_model())
    assert m.surviving() == 49
    assert m.bits[0] == 0

def test_prune_step_tie_break():
    p = _params_with_weights(LINEAR, np.ones(100))
    m = prune_step(p, Mask.ones(LINEAR), 0.05, PruneScope.full_model())
    np.testing.assert_array_equal(np.flatnonzero(m.bits == 0), np.arange(5))

@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(min_value=-3, max_value=3), min_size=100, max_size=100),
       st.floats(min_value=0.01, max_value=0.5))
def test_prune_step_matches_sorting_oracle(values, x):
    w = np.array(values, dtype=float)
    p = _params_with_weights(LINEAR, w)
    m = prune_step(p, Mask.ones(LINEAR), x, PruneScope.full_model())
    k = max(1, int(np.floor(x * 100)))
    # oracle: sort by (|w|, index)
    pruned = sorted(range(100), key=lambda i: (abs(w[i]), i))[:k]
    np.testing.assert_array_equal(np.flatnonzero(m.bits == 0), sorted(pruned))

def test_prune_step_layer_scope_and_collapse():
    p = init_network(SMALL, 0)
    m = prune_step(p, Mask.ones(SMALL), 0.5, PruneScope.single_layer(1))
    assert m.surviving(1) == 15
    assert m.surviving(0) == 6 and m.surviving(2) == 10
    assert scope_density(m, PruneScope.single_layer(1)) == 0.5
    # a layer reduced to a single weight cannot be pruned further
    bits = Mask.ones(SMALL).bits.copy()
    sl = Mask.ones(SMALL).layer_slice(2)
    bits[sl] = 0
    bits[sl.start] = 1
    with pytest.raises(LayerCollapseError) as err:
        prune_step(p, Mask(SMALL, bits), 0.1, PruneScope.single_layer(2))
    assert err.value.layer == 2

def test_prune_step_validation():
    p = init_network(SMALL, 0)
    with pytest.raises(ValueError):
        prune_step(p, Mask.ones(SMALL), 0.0, PruneScope.full_model())
    with pytest.raises(ValueError):
        prune_step(p, Mask.ones(SMALL), 1.0, PruneScope.full_model())

def test_rewind():
    init = init_network(SMALL, 5)
    rng = np.random.default_rng(5)
    m = Mask(SMALL, rng.integers(0, 2, SMALL.n_weights))
    r = rewind(init, m)
    w = r.weight_vector()
    np.testing.assert_array_equal(w[m.bits == 1], init.weight_vector()[m.bits == 1])
    assert np.all(w[m.bits == 0] == 0.0)
    for b, b0 in zip(r.biases, init.biases):
        np.testing.assert_array_equal(b, b0)

@pytest.mark.parametrize('x', [0.01, 0.05, 0.1, 0.2])
def test_density_closed_form(x):
    rng = np.random.default_rng(1)
    p = _params_with_weights(LINEAR, rng.normal(size=100))
    m = Mask.ones(LINEAR)
    N = LINEAR.n_weights
    for n in range(1, 15):
        m = prune_step(p, m, x, PruneScope.full_model())
        assert abs(density(m) - (1 - x)**n) <= n / N

@pytest.mark.parametrize(('x', 'expected'), [(0.01, 230), (0.05, 45), (0.1, 22)])
def test_iterations_to_density(x, expected):
    assert iterations_to_density(x, 0.1) == expected
    assert (1 - x)**expected <= 0.1 < (1 - x)**(expected - 1)

def test_prune_rounds_to_density():
    # one weight per step on a small scope, faster than the closed form
    assert prune_rounds_to_density(0.1, 0.5, 10) == 5
    assert iterations_to_density(0.1, 0.5) == 7
    assert prune_rounds_to_density(0.01, 0.1, 50) == 45
    # full oscillator network, 2650 weights
    assert prune_rounds_to_density(0.1, 0.1, NetworkSpec(hidden_dims=(50, 50), output_dim=2).n_weights) == 22
    with pytest.raises(ValueError):
        prune_rounds_to_density(0.5, 0.001, 100)
    with pytest.raises(ValueError):
        prune_rounds_to_density(0.0, 0.1, 100)

@pytest.mark.parametrize('x', [0.01, 0.05, 0.1, 0.2])
def test_prune_rounds_match_prune_step(x):
    rng = np.random.default_rng(2)
    p = _params_with_weights(LINEAR, rng.normal(size=100))
    m = Mask.ones(LINEAR)
    rounds = 0
    while density(m) > 0.1:
        m = prune_step(p, m, x, PruneScope.full_model())
        rounds += 1
    assert prune_rounds_to_density(x, 0.1, 100) == rounds


## Full IMP loop

def _run(seed=0, q=4, x=0.1, scope=PruneScope.full_model(), task=None, train_config=FAST):
    init = init_network(SMALL, 0)
    task = NLOscillator(n_points=8) if task is None else task
    return init, run_imp(init, task, ImpConfig(x=x, q=q, scope=scope, train_config=train_config,
                                               seed=seed))

def test_run_imp_trace():
    init, trace = _run()
    assert len(trace) == 5
    assert list(trace.iterations) == [0, 1, 2, 3, 4]
    assert trace[0].density == 1.0
    assert np.all(np.diff(trace.densities) < 0)
    np.testing.assert_allclose(trace.m_frac.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(trace.losses >= 0)
    assert trace.surviving.sum(axis=1)[0] == SMALL.n_weights
    # masks are nested
    for a, b in zip(trace.masks[1:], trace.masks[:-1]):
        assert a.is_subset_of(b)
    assert trace.x == 0.1
    assert trace.config_echo['scope'] == 'full'
    assert trace.init_fingerprint == init.fingerprint()

def test_run_imp_is_deterministic():
    _, a = _run(seed=3)
    _, b = _run(seed=3)
    np.testing.assert_array_equal(a.losses, b.losses)
    assert all(ma == mb for ma, mb in zip(a.masks, b.masks))

def test_run_imp_single_layer_scope():
    _, trace = _run(q=3, x=0.3, scope=PruneScope.single_layer(1))
    assert np.all(trace.surviving[:, 0] == 6)
    assert np.all(trace.surviving[:, 2] == 10)
    assert trace.surviving[-1, 1] < 30
    # density column is the density of the pruned layer
    assert trace.densities[-1] == trace.surviving[-1, 1] / 30

def test_run_imp_without_pruning():
    _, trace = _run(q=0)
    assert len(trace) == 1
    assert trace[0].iteration == 0
    assert trace[0].density == 1.0
    assert trace.masks[0] == Mask.ones(SMALL)

def test_run_imp_rewinds_every_round(monkeypatch):
    imp_module = importlib.import_module('pyimpflow.imp')
    original = imp_module.train
    started = []

    def recording_train(params, mask, task, config):
        started.append((params.copy(), mask))
        return original(params, mask, task, config)

    monkeypatch.setattr(imp_module, 'train', recording_train)
    init, trace = _run(q=3, x=0.2)
    assert len(started) == 4
    w0 = init.weight_vector()
    for params, mask in started:
        w = params.weight_vector()
        np.testing.assert_array_equal(w[mask.bits == 1], w0[mask.bits == 1])
        np.testing.assert_array_equal(w[mask.bits == 0], 0.0)
        for b, b0 in zip(params.biases, init.biases):
            np.testing.assert_array_equal(b, b0)
    assert [m for _, m in started] == trace.masks

def test_run_imp_failure_keeps_partial_trace():
    # three weights: pruning two of them always empties a layer
    spec = NetworkSpec(hidden_dims=(1,), output_dim=2)
    init = init_network(spec, 0)
    with pytest.raises(LayerCollapseError) as err:
        run_imp(init, NLOscillator(n_points=8), ImpConfig(x=0.9, q=2, train_config=FAST))
    assert err.value.iteration == 1
    partial = err.value.partial_trace
    assert len(partial) == 1
    assert partial[0].density == 1.0
    assert partial.init_fingerprint == init.fingerprint()
    assert partial.config_echo['q'] == 2

def test_run_imp_errors():
    init = init_network(SMALL, 0)
    with pytest.raises(ValueError):
        run_imp(init, NLOscillator(n_points=8),
                ImpConfig(x=0.1, q=SMALL.n_weights, train_config=FAST))
    with pytest.raises(ShapeMismatchError):
        run_imp(init, HenonHeiles(n_points=8), ImpConfig(q=1, train_config=FAST))
    with pytest.raises(TrainingDivergedError) as err:
        _run(train_config=TrainConfig(epochs=2, divergence_threshold=1e-12))
    assert err.value.iteration == 0

def test_imp_config_validation():
    with pytest.raises(ValueError):
        ImpConfig(x=1.5)
    with pytest.raises(ValueError):
        ImpConfig(q=-1)


## Winning tickets

def _synthetic_trace(losses, densities=None):
    densities = np.linspace(1.0, 0.5, len(losses)) if densities is None else densities
    records = [ImpRecord(n, d, e, (0.2, 0.5, 0.3), (1, 1, 1))
               for n, (d, e) in enumerate(zip(densities, losses))]
    return ImpTrace(records, SMALL, config_echo={'x': 0.1})

def test_identify_winning_tickets():
    trace = _synthetic_trace([1.0, 0.8, 1.2, 0.9, 3.0])
    tickets = identify_winning_tickets(trace)
    assert [n for n, _ in tickets] == [0, 1, 3]
    assert tickets[1][1] == trace[1].density
    assert [n for n, _ in identify_winning_tickets(trace, tolerance_factor=1.25)] == [0, 1, 2, 3]
    assert [n for n, _ in identify_winning_tickets(trace, full_model_loss=0.85)] == [1]
    with pytest.raises(ValueError):
        identify_winning_tickets(trace, tolerance_factor=0.5)
    with pytest.raises(InsufficientDataError):
        identify_winning_tickets(ImpTrace([], SMALL))
