## errors.py -- Exceptions raised by pyimpflow

__all__ = ['PyImpFlowError', 'ShapeMismatchError', 'TrainingDivergedError',
           'LayerCollapseError', 'InsufficientDataError', 'TraceFormatError']


class PyImpFlowError(Exception):
    """Base class for every error raised by pyimpflow"""


class ShapeMismatchError(PyImpFlowError, ValueError):
    """Masks, parameters, tasks or traces do not line up"""


class TrainingDivergedError(PyImpFlowError):
    """
    A training run produced a non-finite loss, or a loss above the
    divergence threshold.

    **Attributes**

    epoch : int
        Epoch at which the loss was found to diverge

    loss : float
        The offending loss value

    iteration : int or None
        IMP iteration during which training diverged (filled in by
        `pyimpflow.imp.run_imp`)

    partial_trace : ImpTrace or None
        Iterations completed before the failure (filled in by `run_imp`)
    """
    def __init__(self, epoch, loss, iteration=None):
        self.epoch = epoch
        self.loss = loss
        self.iteration = iteration
        self.partial_trace = None
        super().__init__(self._message())

    def _message(self):
        where = "epoch {}".format(self.epoch)
        if self.iteration is not None:
            where = "IMP iteration {}, {}".format(self.iteration, where)
        return "training diverged at {} (loss = {!r})".format(where, self.loss)

    def __str__(self):
        return self._message()


class LayerCollapseError(PyImpFlowError):
    """
    Pruning would remove every surviving weight of a layer, severing the
    flow of information through the network.

    **Attributes**

    layer : int
        Index of the collapsing layer

    iteration : int or None
        IMP iteration at which the collapse happened (filled in by
        `pyimpflow.imp.run_imp`)

    partial_trace : ImpTrace or None
        Iterations completed before the failure (filled in by `run_imp`)
    """
    def __init__(self, layer, iteration=None):
        self.layer = layer
        self.iteration = iteration
        self.partial_trace = None
        super().__init__(self._message())

    def _message(self):
        msg = "pruning would collapse layer {}".format(self.layer)
        if self.iteration is not None:
            msg += " at IMP iteration {}".format(self.iteration)
        return msg

    def __str__(self):
        return self._message()


class InsufficientDataError(PyImpFlowError, ValueError):
    """Not enough points to compute the requested statistic"""


class TraceFormatError(PyImpFlowError, ValueError):
    """A stored trace or artifact is missing, corrupt, or has unknown columns"""
