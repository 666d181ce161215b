from dataclasses import dataclass, asdict, fields

import numpy as np

from .errors import TrainingDivergedError
from .logger import log
from .network import ParamState, forward_cache, backpropagate
from .tasks.timegrid import TimeGrid

__all__ = ['TrainConfig', 'Adam', 'loss_and_gradient', 'train']


@dataclass(frozen=True)
class TrainConfig:
    """
    Full-batch training settings.

    **Attributes**

    epochs : int
        Number of optimizer steps (>= 1)

    lr : float
        Adam step size (default 8e-3)

    beta1, beta2, eps : float
        Adam moment decay rates and denominator offset

    divergence_threshold : float
        A loss above this value (or a non-finite loss) aborts training

    grid_jitter : float
        Standard deviation, in grid spacings, of the per-epoch perturbation
        of interior collocation points. 0 (default) keeps the grid fixed.

    seed : int
        Seed of the jitter stream; re-used at every call of `train`

    log_every : int
        If > 0, log the loss every `log_every` epochs at DEBUG level
    """
    epochs: int = 50000
    lr: float = 8e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    divergence_threshold: float = 1e6
    grid_jitter: float = 0.0
    seed: int = 0
    log_every: int = 0

    def __post_init__(self):
        # config files may spell numbers as '5e4' or '8e-3'
        for f in fields(self):
            cast = int if f.type is int else float
            object.__setattr__(self, f.name, cast(float(getattr(self, f.name))))
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1, got {}".format(self.epochs))
        if not self.lr > 0:
            raise ValueError("learning rate must be positive, got {}".format(self.lr))
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.grid_jitter < 0:
            raise ValueError("grid_jitter must be >= 0")

    def to_dict(self):
        return asdict(self)


class Adam(object):
    """
    Adam over a flat parameter vector. Coordinates flagged inactive get
    neither updates nor moment updates, so pruned weights leave no history
    in the moment buffers.
    """
    def __init__(self, n, lr=8e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, theta, grad, active):
        """Update `theta` in place on the `active` coordinates"""
        self.t += 1
        g = grad[active]
        self.m[active] = self.beta1 * self.m[active] + (1.0 - self.beta1) * g
        self.v[active] = self.beta2 * self.v[active] + (1.0 - self.beta2) * g**2
        m_hat = self.m[active] / (1.0 - self.beta1**self.t)
        v_hat = self.v[active] / (1.0 - self.beta2**self.t)
        theta[active] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return theta


def loss_and_gradient(params, mask, batch, task):
    """
    Residual loss of `task` on the collocation times `batch` and its exact
    gradient with respect to every parameter.

    **Inputs**

    params : ParamState

    mask : Mask

    batch : TimeGrid or numpy.ndarray
        Collocation times

    task : pyimpflow.tasks.Task
        Its arity must match params.spec.output_dim

    **Returns**

    loss : float

    grad : numpy.ndarray
        Flat gradient in `ParamState.flat()` order; entries of masked weights
        are exactly 0, bias entries are never masked.
    """
    task.check_arity(params.spec)
    t = batch.points if isinstance(batch, TimeGrid) else np.asarray(batch, dtype=np.float64)
    if len(t) == 0:
        raise ValueError("empty collocation batch")
    out, cache = forward_cache(params, mask, t)
    states, derivs = task.constrain(t, out.primal, out.tangent)
    loss, g_states, g_derivs = task.loss_and_adjoints(states, derivs)
    g_out, g_dout = task.pullback(t, g_states, g_derivs)
    weight_grads, bias_grads = backpropagate(cache, g_out, g_dout)
    grad = np.concatenate([np.concatenate([gw.ravel(), gb])
                           for gw, gb in zip(weight_grads, bias_grads)])
    return loss, grad


def _check_divergence(loss, epoch, threshold):
    if not np.isfinite(loss) or loss > threshold:
        raise TrainingDivergedError(epoch, loss)


def train(params, mask, task, config):
    """
    Train the masked network on the task's residual loss with full-batch
    Adam.

    Masked weights are set to exactly 0.0 before the first step and are
    never touched by the optimizer.

    **Returns**

    (trained ParamState, final loss on the task's nominal grid)

    Raises TrainingDivergedError (carrying the epoch) if the loss becomes
    non-finite or exceeds `config.divergence_threshold`.
    """
    task.check_arity(params.spec)
    mask.check(params)
    spec = params.spec
    theta = params.flat()
    positions = params.weight_positions()
    active = np.ones(spec.n_params, dtype=bool)
    active[positions] = mask.bits.astype(bool)
    theta[~active] = 0.0

    grid = task.grid()
    rng = np.random.default_rng(config.seed)
    optimizer = Adam(spec.n_params, config.lr, config.beta1, config.beta2, config.eps)

    for epoch in range(config.epochs):
        batch = grid.jittered(rng, config.grid_jitter)
        loss, grad = loss_and_gradient(ParamState.from_flat(spec, theta), mask, batch, task)
        _check_divergence(loss, epoch, config.divergence_threshold)
        optimizer.step(theta, grad, active)
        if config.log_every and epoch % config.log_every == 0:
            log.debug("epoch %d: loss %.6e", epoch, loss)

    trained = ParamState.from_flat(spec, theta)
    final_loss, _ = loss_and_gradient(trained, mask, grid, task)
    _check_divergence(final_loss, config.epochs, config.divergence_threshold)
    log.debug("trained %s for %d epochs at density %.4f: final loss %.6e",
              task.name, config.epochs, mask.density(), final_loss)
    return trained, final_loss
