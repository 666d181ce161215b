from enum import Enum

import numpy as np

from ..errors import ShapeMismatchError
from ..network import forward_with_time_derivative
from .timegrid import make_time_grid

__all__ = ['TaskId', 'Task', 'energy_drift']


class TaskId(str, Enum):
    NL_OSCILLATOR = 'nl_oscillator'
    HENON_HEILES  = 'henon_heiles'


class Task(object):
    def __init__(self, task_id, state_keys, initial_state, time_domain, n_points,
                 constrained=False, name='Task'):
        """
        Task superclass (a physics problem bound to a network)
        ------------------------------------------------------
        task_id : TaskId

        state_keys : list of strings
            Names of the phase-space coordinates, in network-output order

        initial_state : list of floats
            State at t0; used by the constraint transform and as the energy
            reference

        time_domain : tuple (t0, t_max)
            Interval covered by the collocation grid

        n_points : int
            Number of collocation points K

        constrained : bool
            If True, outputs N(t) are mapped to
            x0 + (1 - exp(-(t - t0))) * N(t), which pins the state at t0.
            If False (default), raw outputs are taken as the state.

        name : string
            Name describing the task
        """
        if len(state_keys) != len(initial_state):
            raise ShapeMismatchError("{} state keys but {} initial values".format(
                len(state_keys), len(initial_state)))
        t0, t_max = time_domain
        if not t_max > t0:
            raise ValueError("time domain must satisfy t_max > t0, got {}".format(time_domain))
        if n_points < 2:
            raise ValueError("need at least 2 collocation points, got {}".format(n_points))
        self.task_id = TaskId(task_id)
        self.name = name
        self.keys = list(state_keys)
        self.vals = dict(zip(self.keys, [float(v) for v in initial_state]))
        self.time_domain = (float(t0), float(t_max))
        self.n_points = int(n_points)
        self.constrained = bool(constrained)

    @property
    def arity(self):
        return len(self.keys)

    @property
    def initial_state(self):
        return np.array([self.vals[k] for k in self.keys])

    def __getitem__(self, key):
        """
        Parameters
        ----------
        key : string

        Returns
        -------
        Initial value of the state coordinate `key`
        """
        if key not in self.keys:
            raise KeyError("{} not a valid state key".format(key))
        return self.vals[key]

    def update(self, new_dict):
        """
        Parameters
        ----------
        new_dict : dict
            Key-value pairs for initial conditions that you wish to change
        """
        for k, v in new_dict.items():
            self[k]  # validates the key
            self.vals[k] = float(v)

    def grid(self, n_points=None):
        """The default collocation grid of the task (K equispaced points)"""
        t0, t_max = self.time_domain
        return make_time_grid(t0, t_max, self.n_points if n_points is None else n_points)

    def check_arity(self, spec):
        if spec.output_dim != self.arity:
            raise ShapeMismatchError("{} needs {} network outputs, network has {}".format(
                self.name, self.arity, spec.output_dim))

    ## Physics: implemented by each task

    def hamiltonian(self, states):
        """Energy of each row of `states` (shape (..., arity))"""
        raise NotImplementedError

    def equations_of_motion(self, states):
        """Hamilton's equations: time derivative of each state row"""
        raise NotImplementedError

    def residuals(self, states, derivs):
        """Residual terms of Hamilton's equations, shape (K, arity)"""
        raise NotImplementedError

    def loss_and_adjoints(self, states, derivs):
        """
        Residual MSE over K points together with its partial derivatives
        with respect to `states` and `derivs` (both shape (K, arity)).
        """
        raise NotImplementedError

    def loss(self, states, derivs):
        """Mean over points of the summed squared residuals"""
        r = self.residuals(np.atleast_2d(states), np.atleast_2d(derivs))
        return float(np.mean(np.sum(r**2, axis=1)))

    ## Optional initial-condition constraint

    def _envelope(self, t):
        dt = np.reshape(t, (-1, 1)) - self.time_domain[0]
        e = np.exp(-dt)
        return 1.0 - e, e

    def constrain(self, t, outputs, d_outputs):
        """Map raw network outputs (and time derivatives) to task states"""
        if not self.constrained:
            return outputs, d_outputs
        f, fdot = self._envelope(t)
        return self.initial_state + f * outputs, fdot * outputs + f * d_outputs

    def pullback(self, t, g_states, g_derivs):
        """Adjoints with respect to states -> adjoints with respect to raw outputs"""
        if not self.constrained:
            return g_states, g_derivs
        f, fdot = self._envelope(t)
        return g_states * f + g_derivs * fdot, g_derivs * f

    def to_dict(self):
        return {'task_id': self.task_id.value,
                'initial_state': [self.vals[k] for k in self.keys],
                'time_domain': list(self.time_domain),
                'n_points': self.n_points,
                'constrained': self.constrained}

    # Print information about this task
    def info(self):
        """
        Prints the state coordinates, initial values and time domain.
        """
        print("\n" + "-" * 60)
        print("{} ({} outputs, K = {}, t in [{}, {}])".format(
            self.name, self.arity, self.n_points, *self.time_domain))
        print("{:15}{:15}".format('Coordinate', 'Initial value'))
        print("-" * 60)
        for k in self.keys:
            print("{:15}{:<15}".format(k, self.vals[k]))
        return


def energy_drift(params, mask, task, grid=None):
    """
    Largest departure of the predicted energy from its value at the first
    grid point.

    **Inputs**

    params : pyimpflow.ParamState

    mask : pyimpflow.Mask

    task : Task

    grid : TimeGrid (default: task.grid())

    **Returns**

    max_n |H(state(t_n)) - H(state(t_0))|
    """
    task.check_arity(params.spec)
    if grid is None:
        grid = task.grid()
    outputs, d_outputs = forward_with_time_derivative(params, mask, grid.points)
    states, _ = task.constrain(grid.points, outputs, d_outputs)
    energy = task.hamiltonian(states)
    return float(np.max(np.abs(energy - energy[0])))
