"""
Iterative magnitude pruning (IMP)

Starting from the full network, every IMP iteration

1. trains the masked network from its rewound initial weights,
2. prunes the smallest fraction x of the surviving weights in scope,
3. rewinds the survivors to their initial values,

and records the density, final loss and per-layer magnitude fractions. The
sequence of masks and trained weights is the IMP flow.
"""
import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import LayerCollapseError, TrainingDivergedError, InsufficientDataError
from .logger import log
from .network import Mask, ParamState
from .rganalysis import layer_magnitude_fractions
from .training import TrainConfig, train

__all__ = ['PruneScope', 'ImpConfig', 'ImpRecord', 'ImpTrace',
           'prune_step', 'rewind', 'density', 'scope_density', 'run_imp',
           'identify_winning_tickets', 'iterations_to_density', 'prune_rounds_to_density']


@dataclass(frozen=True)
class PruneScope:
    """
    Which layers IMP may prune. `layers=None` is the full model.

    >>> PruneScope.full_model()
    >>> PruneScope.single_layer(2)
    >>> PruneScope.of_layers(1)       # e.g. hidden layer only
    """
    layers: tuple = None

    def __post_init__(self):
        if self.layers is not None:
            layers = tuple(sorted(set(int(i) for i in self.layers)))
            if len(layers) == 0 or layers[0] < 0:
                raise ValueError("invalid layer selection {}".format(self.layers))
            object.__setattr__(self, 'layers', layers)

    @classmethod
    def full_model(cls):
        return cls(None)

    @classmethod
    def single_layer(cls, layer):
        return cls((layer,))

    @classmethod
    def of_layers(cls, *layers):
        return cls(tuple(layers))

    @property
    def is_full_model(self):
        return self.layers is None

    def layer_indices(self, spec):
        if self.layers is None:
            return tuple(range(spec.n_layers))
        if self.layers[-1] >= spec.n_layers:
            raise ValueError("layer {} out of range for a {}-layer network".format(
                self.layers[-1], spec.n_layers))
        return self.layers

    def weight_indices(self, spec):
        """Mask positions of the in-scope weights, ascending"""
        mask = Mask.ones(spec)
        return np.concatenate([np.arange(mask.layer_slice(i).start, mask.layer_slice(i).stop)
                               for i in self.layer_indices(spec)])

    @property
    def label(self):
        if self.layers is None:
            return 'full'
        return 'layer:' + ','.join(str(i) for i in self.layers)

    @staticmethod
    def parse(text):
        """Inverse of `label`: 'full', 'layer:2' or 'layer:1,2'"""
        text = str(text).strip()
        if text in ('full', 'full_model'):
            return PruneScope.full_model()
        prefix, _, rest = text.partition(':')
        if prefix not in ('layer', 'layers') or not rest:
            raise ValueError("cannot parse prune scope '{}'".format(text))
        return PruneScope(tuple(int(i) for i in rest.split(',')))


@dataclass(frozen=True)
class ImpConfig:
    """
    **Attributes**

    x : float
        Fraction of surviving in-scope weights pruned per iteration, in (0, 1)

    q : int
        Number of prune/rewind/train rounds after the full-model run

    scope : PruneScope

    train_config : TrainConfig
        Its seed is replaced by `seed` for every round

    seed : int
        Run seed
    """
    x: float = 0.01
    q: int = 230
    scope: PruneScope = PruneScope()
    train_config: TrainConfig = TrainConfig()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'x', float(self.x))
        object.__setattr__(self, 'q', int(self.q))
        object.__setattr__(self, 'seed', int(self.seed))
        if not 0.0 < self.x < 1.0:
            raise ValueError("prune fraction x must lie in (0, 1), got {}".format(self.x))
        if self.q < 0:
            raise ValueError("q must be >= 0, got {}".format(self.q))


@dataclass
class ImpRecord:
    iteration: int
    density: float
    final_loss: float
    m_frac: tuple
    surviving: tuple
    final_loss_sem: float = None


class ImpTrace(object):
    """
    Per-iteration record of one IMP run (or of an average of runs).

    **Attributes**

    records : list of ImpRecord
        Iteration 0 is the full model

    spec : NetworkSpec

    config_echo : dict
        x, q, scope, seed, task, network and training settings of the run

    init_fingerprint : str
        SHA-256 of the initial parameters

    masks : list of Mask or None
        Mask used in each iteration (kept for mask transfer)
    """
    def __init__(self, records, spec, config_echo=None, init_fingerprint=None, masks=None):
        self.records = list(records)
        self.spec = spec
        self.config_echo = dict(config_echo or {})
        self.init_fingerprint = init_fingerprint
        self.masks = masks

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def x(self):
        return self.config_echo.get('x')

    @property
    def iterations(self):
        return np.array([r.iteration for r in self.records])

    @property
    def densities(self):
        return np.array([r.density for r in self.records])

    @property
    def losses(self):
        return np.array([r.final_loss for r in self.records])

    def column(self, key):
        """Values of a record field, e.g. 'final_loss' or 'final_loss_sem'"""
        return np.array([np.nan if getattr(r, key) is None else getattr(r, key)
                         for r in self.records], dtype=np.float64)

    @property
    def m_frac(self):
        """Magnitude fractions, shape (iterations, layers)"""
        return np.array([r.m_frac for r in self.records])

    @property
    def surviving(self):
        return np.array([r.surviving for r in self.records], dtype=int)

    def global_densities(self):
        return self.surviving.sum(axis=1) / self.spec.n_weights


## ----- Single steps

def prune_step(trained, mask, x, scope):
    """
    Prune the floor(x*s) smallest-magnitude surviving weights in scope
    (at least one while s > 1). Ties in |w| are broken by lower mask index.

    **Inputs**

    trained : ParamState
        Weights after training

    mask : Mask
        Current mask; not modified

    x : float
        Fraction in (0, 1)

    scope : PruneScope

    **Returns**

    A new Mask. Raises LayerCollapseError if an in-scope layer would be left
    with no surviving weight.
    """
    if not 0.0 < x < 1.0:
        raise ValueError("prune fraction x must lie in (0, 1), got {}".format(x))
    mask.check(trained)
    spec = mask.spec
    layers = scope.layer_indices(spec)
    in_scope = scope.weight_indices(spec)
    candidates = in_scope[mask.bits[in_scope] == 1]
    s = len(candidates)
    if s <= 1:
        raise LayerCollapseError(_layer_of(mask, candidates[0]) if s else layers[0])

    k = int(np.floor(x * s))
    if k == 0:
        k = 1
    magnitudes = np.abs(trained.weight_vector()[candidates])
    order = np.argsort(magnitudes, kind='stable')
    bits = mask.bits.copy()
    bits[candidates[order[:k]]] = 0
    result = Mask(spec, bits)

    for layer in layers:
        if result.surviving(layer) == 0:
            raise LayerCollapseError(layer)
    return result


def _layer_of(mask, index):
    for i in range(mask.spec.n_layers):
        sl = mask.layer_slice(i)
        if sl.start <= index < sl.stop:
            return i


def rewind(init, mask):
    """
    Reset to initialization under a mask: w = w_init * m (pruned weights
    exactly 0.0), biases back to their initial values.
    """
    mask.check(init)
    weights = [np.where(m == 1, W, 0.0) for W, m in zip(init.weights, mask.layers())]
    return ParamState(init.spec, weights, [b.copy() for b in init.biases])


def density(mask):
    """Surviving weights / all weights (biases excluded)"""
    return mask.density()


def scope_density(mask, scope):
    idx = scope.weight_indices(mask.spec)
    return float(mask.bits[idx].sum()) / len(idx)


def iterations_to_density(x, target=0.1):
    """
    Number of IMP iterations at fraction x needed to reach `target` density:
    ceil(ln target / ln(1 - x)).
    """
    if not 0.0 < x < 1.0 or not 0.0 < target < 1.0:
        raise ValueError("x and target must lie in (0, 1)")
    return int(np.ceil(np.log(target) / np.log1p(-x)))


def prune_rounds_to_density(x, target, n_weights):
    """
    Smallest number of `prune_step` calls that takes `n_weights` in-scope
    weights to a density <= `target`, counting the floor(x*s) (at least
    one) weights each step removes. For small scopes this differs from
    `iterations_to_density` in both directions.
    """
    if not 0.0 < x < 1.0 or not 0.0 < target < 1.0:
        raise ValueError("x and target must lie in (0, 1)")
    n_weights = int(n_weights)
    s, rounds = n_weights, 0
    while s / n_weights > target:
        k = int(np.floor(x * s))
        if k == 0:
            k = 1
        if s - k < 1:
            raise ValueError("density {} is out of reach for {} weights".format(target, n_weights))
        s -= k
        rounds += 1
    return rounds


## ----- Full loop

def _record(n, trained, mask, loss, scope):
    spec = mask.spec
    return ImpRecord(iteration=n,
                     density=scope_density(mask, scope),
                     final_loss=float(loss),
                     m_frac=tuple(float(m) for m in layer_magnitude_fractions(trained, mask)),
                     surviving=tuple(mask.surviving(i) for i in range(spec.n_layers)))


def run_imp(init, task, config, keep_masks=True):
    """
    Run q + 1 IMP rounds: iteration 0 trains the full model, each later
    iteration prunes, rewinds to `init` and retrains.

    **Inputs**

    init : ParamState
        Initial weights w_init (never modified)

    task : pyimpflow.tasks.Task

    config : ImpConfig

    keep_masks : bool
        If True, the trace keeps the mask of every iteration

    **Returns**

    ImpTrace

    TrainingDivergedError and LayerCollapseError propagate with their
    `iteration` attribute set and `partial_trace` holding the iterations
    completed before the failure.
    """
    spec = init.spec
    task.check_arity(spec)
    n_scope = len(config.scope.weight_indices(spec))
    if config.q >= n_scope:
        raise ValueError("q = {} prune steps cannot fit in {} in-scope weights".format(
            config.q, n_scope))
    train_config = dataclasses.replace(config.train_config, seed=config.seed)
    echo = {'x': config.x, 'q': config.q, 'scope': config.scope.label, 'seed': config.seed,
            'task': task.to_dict(), 'network': spec.to_dict(), 'train': train_config.to_dict()}

    mask = Mask.ones(spec)
    records, masks = [], []
    trained = None
    for n in range(config.q + 1):
        try:
            if n > 0:
                mask = prune_step(trained, mask, config.x, config.scope)
            trained, loss = train(rewind(init, mask), mask, task, train_config)
        except (TrainingDivergedError, LayerCollapseError) as err:
            err.iteration = n
            err.partial_trace = ImpTrace(records, spec, config_echo=echo,
                                         init_fingerprint=init.fingerprint(),
                                         masks=masks if keep_masks else None)
            raise
        records.append(_record(n, trained, mask, loss, config.scope))
        if keep_masks:
            masks.append(mask)
        log.info("IMP %s x=%g iteration %d/%d: density %.4f, loss %.4e",
                 task.name, config.x, n, config.q, records[-1].density, loss)

    return ImpTrace(records, spec, config_echo=echo, init_fingerprint=init.fingerprint(),
                    masks=masks if keep_masks else None)


def identify_winning_tickets(trace, full_model_loss=None, tolerance_factor=1.0):
    """
    Iterations whose subnetwork does as well as the full model or better.

    **Inputs**

    trace : ImpTrace

    full_model_loss : float (default: loss of iteration 0)

    tolerance_factor : float
        A ticket qualifies if its loss <= tolerance_factor * full_model_loss.
        Must be >= 1; 1.0 means "or better".

    **Returns**

    list of (iteration, density)
    """
    if len(trace) == 0:
        raise InsufficientDataError("cannot look for winning tickets in an empty trace")
    if tolerance_factor < 1.0:
        raise ValueError("tolerance_factor must be >= 1, got {}".format(tolerance_factor))
    if full_model_loss is None:
        full_model_loss = trace[0].final_loss
    limit = tolerance_factor * full_model_loss
    return [(r.iteration, r.density) for r in trace if r.final_loss <= limit]
