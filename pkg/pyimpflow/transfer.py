"""
Transfer of IMP masks between networks that differ only in their output
layer, e.g. the 2-output oscillator network and the 4-output Henon-Heiles
network.

Output rows are paired: a 2-row mask (r0, r1) grows to (r0, r0, r1, r1),
and a 4-row mask shrinks by dropping rows 1 and 3 (or by merging each pair).
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ShapeMismatchError, TrainingDivergedError, InsufficientDataError
from .imp import rewind
from .logger import log
from .network import Mask, NetworkSpec
from .training import train

__all__ = ['RuleKind', 'LayerRule', 'MaskTransferPlan',
           'duplicate_output_mask', 'truncate_output_mask', 'merge_output_mask',
           'TransferRow', 'TransferTable', 'transfer_experiment']


class RuleKind(str, Enum):
    IDENTITY       = 'identity'
    DUPLICATE_ROWS = 'duplicate_rows'
    TRUNCATE_ROWS  = 'truncate_rows'
    MERGE_ROWS     = 'merge_rows'


@dataclass(frozen=True)
class LayerRule:
    """
    How one layer mask maps to the target network.

    kind : RuleKind

    rows : tuple of int
        Rows dropped by TRUNCATE_ROWS

    mode : str
        'max' (a weight survives if it survives in either row of the pair)
        or 'min' (only if it survives in both) for MERGE_ROWS
    """
    kind: RuleKind = RuleKind.IDENTITY
    rows: tuple = None
    mode: str = 'max'

    def __post_init__(self):
        object.__setattr__(self, 'kind', RuleKind(self.kind))
        if self.rows is not None:
            object.__setattr__(self, 'rows', tuple(sorted(set(int(r) for r in self.rows))))
        elif self.kind == RuleKind.TRUNCATE_ROWS:
            raise ValueError("truncate_rows needs the rows to drop")
        if self.mode not in ('max', 'min'):
            raise ValueError("merge mode must be 'max' or 'min', got '{}'".format(self.mode))

    def target_shape(self, shape):
        rows, cols = shape
        if self.kind == RuleKind.DUPLICATE_ROWS:
            return (2 * rows, cols)
        if self.kind == RuleKind.TRUNCATE_ROWS:
            return (rows - len(self.rows), cols)
        if self.kind == RuleKind.MERGE_ROWS:
            return (rows // 2, cols)
        return shape

    def __call__(self, m):
        if self.kind == RuleKind.DUPLICATE_ROWS:
            return np.repeat(m, 2, axis=0)
        if self.kind == RuleKind.TRUNCATE_ROWS:
            if any(not 0 <= r < m.shape[0] for r in self.rows):
                raise ShapeMismatchError("cannot drop rows {} from a {}-row mask".format(
                    self.rows, m.shape[0]))
            return np.delete(m, self.rows, axis=0)
        if self.kind == RuleKind.MERGE_ROWS:
            if m.shape[0] % 2:
                raise ShapeMismatchError("cannot merge row pairs of a {}-row mask".format(m.shape[0]))
            pairs = m.reshape(m.shape[0] // 2, 2, m.shape[1])
            return pairs.max(axis=1) if self.mode == 'max' else pairs.min(axis=1)
        return m.copy()

    def to_dict(self):
        d = {'kind': self.kind.value}
        if self.kind == RuleKind.TRUNCATE_ROWS:
            d['rows'] = list(self.rows)
        if self.kind == RuleKind.MERGE_ROWS:
            d['mode'] = self.mode
        return d


def _resized_spec(spec, output_dim):
    return NetworkSpec(spec.input_dim, spec.hidden_dims, output_dim, spec.activation)


@dataclass(frozen=True)
class MaskTransferPlan:
    """
    Source network, target network and one LayerRule per layer.

    Build with `MaskTransferPlan.for_specs`, which picks the output-layer
    rule from the two output widths.
    """
    source_spec: NetworkSpec
    target_spec: NetworkSpec
    rules: tuple = field(default=())

    def __post_init__(self):
        rules = tuple(self.rules)
        if len(rules) != self.source_spec.n_layers:
            raise ShapeMismatchError("{} rules for a {}-layer network".format(
                len(rules), self.source_spec.n_layers))
        if self.source_spec.n_layers != self.target_spec.n_layers:
            raise ShapeMismatchError("source and target depths differ ({} vs {})".format(
                self.source_spec.n_layers, self.target_spec.n_layers))
        for i, (rule, src, tgt) in enumerate(zip(rules, self.source_spec.layer_shapes,
                                                 self.target_spec.layer_shapes)):
            if rule.target_shape(src) != tgt:
                raise ShapeMismatchError("rule {} maps layer {} {} to {}, target needs {}".format(
                    rule.kind.value, i, src, rule.target_shape(src), tgt))
        object.__setattr__(self, 'rules', rules)

    @classmethod
    def for_specs(cls, source_spec, target_spec, shrink='truncate', merge_mode='max'):
        """
        Identity on every layer except the output layer, which is
        duplicated (target twice as wide), truncated or merged (target half
        as wide; `shrink` is 'truncate' or 'merge'), or copied (same width).
        """
        n_src, n_tgt = source_spec.output_dim, target_spec.output_dim
        if n_tgt == n_src:
            out = LayerRule(RuleKind.IDENTITY)
        elif n_tgt == 2 * n_src:
            out = LayerRule(RuleKind.DUPLICATE_ROWS)
        elif n_src == 2 * n_tgt and shrink == 'truncate':
            out = LayerRule(RuleKind.TRUNCATE_ROWS, rows=tuple(range(1, n_src, 2)))
        elif n_src == 2 * n_tgt and shrink == 'merge':
            out = LayerRule(RuleKind.MERGE_ROWS, mode=merge_mode)
        else:
            raise ShapeMismatchError("no output-layer rule maps {} rows to {} rows (shrink='{}')".format(
                n_src, n_tgt, shrink))
        rules = (LayerRule(),) * (source_spec.n_layers - 1) + (out,)
        return cls(source_spec, target_spec, rules)

    def apply(self, mask):
        if mask.spec != self.source_spec:
            raise ShapeMismatchError("plan expects masks for {}, got {}".format(
                self.source_spec, mask.spec))
        return Mask.from_layers(self.target_spec,
                                [rule(m) for rule, m in zip(self.rules, mask.layers())])

    def to_dict(self):
        return {'source': self.source_spec.to_dict(), 'target': self.target_spec.to_dict(),
                'rules': [r.to_dict() for r in self.rules]}


## ----- Output-layer mappings

def duplicate_output_mask(source, target_spec=None):
    """
    Double the output rows of a mask: (r0, r1) -> (r0, r0, r1, r1). Other
    layers are copied unchanged.
    """
    if target_spec is None:
        target_spec = _resized_spec(source.spec, 2 * source.spec.output_dim)
    if target_spec.output_dim != 2 * source.spec.output_dim:
        raise ShapeMismatchError("duplication needs a target with {} outputs, got {}".format(
            2 * source.spec.output_dim, target_spec.output_dim))
    return MaskTransferPlan.for_specs(source.spec, target_spec).apply(source)


def truncate_output_mask(source, drop_rows=(1, 3), target_spec=None):
    """
    Drop output rows (zero-indexed) of a mask: with the default,
    (a, b, c, d) -> (a, c). Other layers are copied unchanged.
    """
    drop_rows = tuple(drop_rows)
    if target_spec is None:
        target_spec = _resized_spec(source.spec, source.spec.output_dim - len(set(drop_rows)))
    rules = (LayerRule(),) * (source.spec.n_layers - 1) + \
            (LayerRule(RuleKind.TRUNCATE_ROWS, rows=drop_rows),)
    return MaskTransferPlan(source.spec, target_spec, rules).apply(source)


def merge_output_mask(source, target_spec=None, mode='max'):
    """
    Combine output row pairs (0, 1), (2, 3), ... into one row each, keeping
    a weight if it survives in either ('max') or both ('min') rows.
    """
    if target_spec is None:
        if source.spec.output_dim % 2:
            raise ShapeMismatchError("cannot merge row pairs of a {}-row output layer".format(
                source.spec.output_dim))
        target_spec = _resized_spec(source.spec, source.spec.output_dim // 2)
    plan = MaskTransferPlan.for_specs(source.spec, target_spec, shrink='merge', merge_mode=mode)
    return plan.apply(source)


## ----- Transfer experiment

@dataclass
class TransferRow:
    source_iter: int
    density: float
    transferred_loss: float
    native_loss: float = np.nan
    winning_flag: bool = False
    failed: bool = False
    native_density: float = np.nan


@dataclass
class TransferTable:
    """
    Transferred-vs-native comparison, one row per source IMP iteration.

    baseline_loss : float
        Full-model loss on the target task against which winning flags are
        set
    """
    rows: list
    plan: MaskTransferPlan = None
    baseline_loss: float = np.nan
    tolerance_factor: float = 1.0

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def column(self, key):
        return np.array([getattr(r, key) for r in self.rows])

    @property
    def n_failed(self):
        return int(sum(r.failed for r in self.rows))


def _transfer_row(args):
    n, mask, task, init, train_config = args
    try:
        _, loss = train(rewind(init, mask), mask, task, train_config)
        return n, mask.density(), float(loss), False
    except TrainingDivergedError as err:
        err.iteration = n
        log.warning("transfer row %d failed: %s", n, err)
        return n, mask.density(), np.nan, True


def transfer_experiment(source_trace, target_task, target_init, plan, train_config,
                        native_trace=None, tolerance_factor=1.0, workers=1):
    """
    Retrain the target network under every mask of a source IMP run.

    **Inputs**

    source_trace : ImpTrace
        Must keep its per-iteration masks

    target_task : pyimpflow.tasks.Task

    target_init : ParamState
        Initial target weights; every row rewinds to them

    plan : MaskTransferPlan

    train_config : TrainConfig
        Training settings of the target task; the same seed is used for
        every row, as in IMP itself

    native_trace : ImpTrace, optional
        IMP run on the target task; each row is paired with the native
        iteration of nearest global density, whatever the native prune scope

    tolerance_factor : float
        A row is a winning ticket if its loss <= tolerance_factor times the
        target full-model loss (native iteration 0, else transferred
        iteration 0)

    workers : int
        Rows run in a process pool when > 1

    **Returns**

    TransferTable. Diverged rows are marked `failed` with a NaN loss.
    """
    if source_trace.masks is None or len(source_trace.masks) != len(source_trace):
        raise InsufficientDataError("source trace does not keep its per-iteration masks")
    if target_init.spec != plan.target_spec:
        raise ShapeMismatchError("target initialisation does not follow the plan's target network")
    target_task.check_arity(plan.target_spec)
    if tolerance_factor < 1.0:
        raise ValueError("tolerance_factor must be >= 1, got {}".format(tolerance_factor))

    jobs = [(rec.iteration, plan.apply(m), target_task, target_init, train_config)
            for rec, m in zip(source_trace, source_trace.masks)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_transfer_row, jobs))
    else:
        results = [_transfer_row(job) for job in jobs]

    if native_trace is not None:
        # rows carry global densities; scoped traces record scope densities
        native_d, native_e = native_trace.global_densities(), native_trace.losses
        baseline = float(native_e[0])
    else:
        baseline = results[0][2]

    rows = []
    for n, d, loss, failed in results:
        row = TransferRow(source_iter=n, density=d, transferred_loss=loss, failed=failed)
        if native_trace is not None:
            j = int(np.argmin(np.abs(native_d - d)))
            row.native_loss, row.native_density = float(native_e[j]), float(native_d[j])
        row.winning_flag = bool(not failed and loss <= tolerance_factor * baseline)
        rows.append(row)
        log.info("transfer %s iteration %d: density %.4f, loss %.4e%s",
                 target_task.name, n, d, loss, " (winning)" if row.winning_flag else "")
    return TransferTable(rows, plan=plan, baseline_loss=baseline, tolerance_factor=tolerance_factor)
