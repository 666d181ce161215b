"""
Experiment configuration files.

A config is a YAML mapping with the sections `task`, `network`, `train`,
`imp`, `analysis` and `transfer` plus the top-level keys `name`, `repeats`,
`seed`, `output_dir` and `workers`. Nested and flat dotted keys are
interchangeable::

    imp:
      x: 0.05
    imp.scope: layer:2
"""
import dataclasses
from dataclasses import dataclass, field

import yaml

from .imp import ImpConfig, PruneScope, prune_rounds_to_density
from .network import NetworkSpec
from .tasks import make_task, ALIASES, TaskId
from .training import TrainConfig

__all__ = ['TaskConfig', 'AnalysisConfig', 'TransferConfig', 'ExperimentConfig',
           'nest_keys', 'apply_overrides', 'load_config']


def nest_keys(d):
    """{'imp.x': 0.05} -> {'imp': {'x': 0.05}}, merged with nested keys"""
    out = {}
    for key, value in d.items():
        if isinstance(value, dict):
            value = nest_keys(value)
        *parents, leaf = str(key).split('.')
        node = out
        for p in parents:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ValueError("key '{}' conflicts with a scalar value".format(key))
        if isinstance(value, dict) and isinstance(node.get(leaf), dict):
            node[leaf].update(value)
        else:
            node[leaf] = value
    return out


def apply_overrides(d, overrides):
    """
    Apply `key.path=value` strings to a nested config dict. Values are read
    as YAML scalars, so `imp.x=0.05` sets a float and `task.constrained=true`
    a bool.
    """
    d = nest_keys(d)
    for item in overrides:
        key, sep, text = item.partition('=')
        if not sep or not key.strip():
            raise ValueError("override '{}' is not of the form key.path=value".format(item))
        d = nest_keys(dict(d, **{key.strip(): yaml.safe_load(text)}))
    return d


def _build(cls, d, section):
    d = dict(d or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValueError("unknown keys in '{}': {}".format(section, sorted(unknown)))
    return cls(**d)


@dataclass(frozen=True)
class TaskConfig:
    """
    task_id : str
        'nl_oscillator' / 'nl' or 'henon_heiles' / 'hh'

    time_domain, n_points, constrained :
        Passed to the task constructor when set

    initial_state : dict
        Initial values by state key, e.g. {'x': 1.0, 'p': 0.0}
    """
    task_id: str = 'nl_oscillator'
    time_domain: tuple = None
    n_points: int = None
    constrained: bool = False
    initial_state: dict = None

    def __post_init__(self):
        object.__setattr__(self, 'task_id', TaskId(ALIASES.get(self.task_id, self.task_id)).value)
        if self.time_domain is not None:
            object.__setattr__(self, 'time_domain', tuple(float(t) for t in self.time_domain))

    def build(self):
        kwargs = {'constrained': self.constrained}
        if self.time_domain is not None:
            kwargs['time_domain'] = self.time_domain
        if self.n_points is not None:
            kwargs['n_points'] = int(self.n_points)
        task = make_task(self.task_id, **kwargs)
        if self.initial_state:
            task.update(self.initial_state)
        return task

    def to_dict(self):
        return {'task_id': self.task_id,
                'time_domain': None if self.time_domain is None else list(self.time_domain),
                'n_points': self.n_points, 'constrained': self.constrained,
                'initial_state': None if self.initial_state is None else dict(self.initial_state)}


@dataclass(frozen=True)
class AnalysisConfig:
    """
    power_law, sigma, tickets : bool
        Analyses run on the averaged trace

    region : (d_L, d_C) or None
        Fixed critical region; detected from the loss curve when None

    axis : str
        Power-law abscissa, 'gap' or 'density'

    tolerance_factor : float
        Winning-ticket and critical-region tolerance on the full-model loss

    sigma_tol : float
        Marginal band |sigma| <= sigma_tol

    eigen_method : str
        'mean' or 'geometric'

    window : int
        Moving-median width of the critical-region rule
    """
    power_law: bool = True
    sigma: bool = True
    tickets: bool = True
    region: tuple = None
    axis: str = 'gap'
    tolerance_factor: float = 1.0
    sigma_tol: float = 0.05
    eigen_method: str = 'mean'
    window: int = 3

    def __post_init__(self):
        if self.region is not None:
            object.__setattr__(self, 'region', tuple(float(r) for r in self.region))
        if self.axis not in ('gap', 'density'):
            raise ValueError("analysis.axis must be 'gap' or 'density'")
        if self.eigen_method not in ('mean', 'geometric'):
            raise ValueError("analysis.eigen_method must be 'mean' or 'geometric'")
        if self.tolerance_factor < 1.0:
            raise ValueError("analysis.tolerance_factor must be >= 1")

    def to_dict(self):
        d = dataclasses.asdict(self)
        d['region'] = None if self.region is None else list(self.region)
        return d


@dataclass(frozen=True)
class TransferConfig:
    """
    source_dir : str
        Artifact directory of the experiment whose masks are transferred

    source_run : int
        Run of that experiment providing the masks

    shrink : str
        'truncate' or 'merge' when the source output layer is wider

    merge_mode : str
        'max' or 'min' for shrink='merge'
    """
    source_dir: str = None
    source_run: int = 0
    shrink: str = 'truncate'
    merge_mode: str = 'max'

    def __post_init__(self):
        if self.shrink not in ('truncate', 'merge'):
            raise ValueError("transfer.shrink must be 'truncate' or 'merge'")

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything needed to regenerate an experiment's artifacts.

    repeats : int
        Number R of independent IMP runs, seeded seed, seed+1, ..., seed+R-1

    workers : int
        Upper bound on concurrent runs (further capped by IMP_RG_WORKERS)
    """
    name: str = 'experiment'
    task: TaskConfig = field(default_factory=TaskConfig)
    network: NetworkSpec = field(default_factory=NetworkSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    imp: ImpConfig = field(default_factory=ImpConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    transfer: TransferConfig = None
    repeats: int = 8
    seed: int = 0
    output_dir: str = None
    workers: int = 1

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1, got {}".format(self.repeats))
        if self.workers < 1:
            raise ValueError("workers must be >= 1, got {}".format(self.workers))
        if self.output_dir is None:
            object.__setattr__(self, 'output_dir', 'results/{}'.format(self.name))

    def run_seeds(self):
        return [self.seed + r for r in range(self.repeats)]

    def imp_config(self, run_seed):
        return dataclasses.replace(self.imp, train_config=self.train, seed=run_seed)

    def with_seed(self, seed):
        return dataclasses.replace(self, seed=int(seed))

    def to_dict(self):
        return {'name': self.name,
                'task': self.task.to_dict(),
                'network': self.network.to_dict(),
                'train': self.train.to_dict(),
                'imp': {'x': self.imp.x, 'q': self.imp.q, 'scope': self.imp.scope.label},
                'analysis': self.analysis.to_dict(),
                'transfer': None if self.transfer is None else self.transfer.to_dict(),
                'repeats': self.repeats, 'seed': self.seed,
                'output_dir': self.output_dir, 'workers': self.workers}

    @classmethod
    def from_dict(cls, d):
        """
        Build from a (possibly flat-keyed) dict. `imp.target_density` may
        replace `imp.q`, which then becomes the number of prune steps that
        take the scope to that density. The network output width defaults
        to the task's number of state coordinates.
        """
        d = nest_keys(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError("unknown config keys: {}".format(sorted(unknown)))

        task = _build(TaskConfig, d.get('task'), 'task')
        net = dict(d.get('network') or {})
        if 'output_dim' not in net:
            net['output_dim'] = task.build().arity
        network = _build(NetworkSpec, net, 'network')
        train = _build(TrainConfig, d.get('train'), 'train')

        imp = dict(d.get('imp') or {})
        target = imp.pop('target_density', None)
        x = float(imp.get('x', ImpConfig.x))
        if 'scope' in imp:
            imp['scope'] = PruneScope.parse(imp['scope'])
        if 'q' not in imp and target is not None:
            n_scope = len(imp.get('scope', ImpConfig.scope).weight_indices(network))
            imp['q'] = prune_rounds_to_density(x, float(target), n_scope)
        imp = _build(ImpConfig, imp, 'imp')

        transfer = d.get('transfer')
        return cls(name=d.get('name', 'experiment'),
                   task=task, network=network, train=train, imp=imp,
                   analysis=_build(AnalysisConfig, d.get('analysis'), 'analysis'),
                   transfer=None if transfer is None else _build(TransferConfig, transfer, 'transfer'),
                   repeats=int(d.get('repeats', 8)),
                   seed=int(d.get('seed', 0)),
                   output_dir=d.get('output_dir'),
                   workers=int(d.get('workers', 1)))


def load_config(filename, overrides=(), seed=None):
    """
    Read an experiment config file.

    **Inputs**

    filename : str
        YAML file

    overrides : list of str
        `key.path=value` strings applied after reading

    seed : int, optional
        Replaces the config's base seed

    **Returns**

    ExperimentConfig
    """
    with open(filename) as f:
        d = yaml.safe_load(f) or {}
    if not isinstance(d, dict):
        raise ValueError("{} does not contain a mapping".format(filename))
    config = ExperimentConfig.from_dict(apply_overrides(d, overrides))
    return config if seed is None else config.with_seed(seed)
