import numpy as np

from .task import Task, TaskId

__all__ = ['NLOscillator', 'nl_hamiltonian', 'nl_equations_of_motion', 'nl_loss']


def nl_hamiltonian(x, p, quartic=0.5):
    """
    H(x, p) = p^2/2 + x^2/2 + quartic * x^4, quartic = 1/2 by default.

    The equations of motion below conserve the quartic = 1/4 form, which is
    what `NLOscillator.hamiltonian` evaluates.
    """
    return 0.5 * p**2 + 0.5 * x**2 + quartic * x**4


def nl_equations_of_motion(x, p):
    """(dx/dt, dp/dt) = (p, -(x + x^3))"""
    return p, -(x + x**3)


def _residuals(states, derivs):
    x, p = states[:, 0], states[:, 1]
    xdot, pdot = derivs[:, 0], derivs[:, 1]
    return np.stack([xdot - p, pdot + x + x**3], axis=1)


def nl_loss(states, derivs):
    """
    Residual mean squared error of the oscillator equations.

    states : numpy.ndarray, shape (K, 2)
        Predicted (x, p) at each collocation point

    derivs : numpy.ndarray, shape (K, 2)
        Predicted (dx/dt, dp/dt) at the same points

    Returns
    -------
    (1/K) sum_n [(xdot - p)^2 + (pdot + x + x^3)^2]
    """
    r = _residuals(np.atleast_2d(states), np.atleast_2d(derivs))
    return float(np.mean(np.sum(r**2, axis=1)))


class NLOscillator(Task):
    def __init__(self, x0=1.0, p0=0.0, time_domain=(0.0, 4.0*np.pi), n_points=200,
                 constrained=False, name='NLOscillator'):
        """
        One-dimensional nonlinear oscillator
        ------------------------------------
        Unit mass and natural frequency, quartic potential term.

        x0, p0 : float
            Initial position and momentum
        """
        Task.__init__(self, TaskId.NL_OSCILLATOR, ['x', 'p'], [x0, p0],
                      time_domain, n_points, constrained=constrained, name=name)

    def hamiltonian(self, states):
        states = np.asarray(states)
        return nl_hamiltonian(states[..., 0], states[..., 1], quartic=0.25)

    def equations_of_motion(self, states):
        states = np.asarray(states)
        return np.stack(nl_equations_of_motion(states[..., 0], states[..., 1]), axis=-1)

    def residuals(self, states, derivs):
        return _residuals(states, derivs)

    def loss_and_adjoints(self, states, derivs):
        r = _residuals(states, derivs)
        K = len(r)
        loss = float(np.mean(np.sum(r**2, axis=1)))
        r1, r2 = 2.0 * r[:, 0] / K, 2.0 * r[:, 1] / K
        x = states[:, 0]
        g_states = np.stack([r2 * (1.0 + 3.0 * x**2), -r1], axis=1)
        g_derivs = np.stack([r1, r2], axis=1)
        return loss, g_states, g_derivs
