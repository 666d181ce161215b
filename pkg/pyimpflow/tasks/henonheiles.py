import numpy as np

from .task import Task, TaskId

__all__ = ['HenonHeiles', 'hh_hamiltonian', 'hh_equations_of_motion', 'hh_loss']

## Henon-Heiles: a star moving in a plane around a galactic centre.
## State ordering everywhere is (x, y, px, py).

def hh_hamiltonian(x, y, px, py):
    """H = (px^2 + py^2)/2 + (x^2 + y^2)/2 + x^2 y - y^3/3"""
    return 0.5 * (px**2 + py**2) + 0.5 * (x**2 + y**2) + (x**2 * y - y**3 / 3.0)


def hh_equations_of_motion(x, y, px, py):
    """(xdot, ydot, pxdot, pydot) = (px, py, -(x + 2xy), -(y + x^2 - y^2))"""
    return px, py, -(x + 2.0 * x * y), -(y + x**2 - y**2)


def _residuals(states, derivs):
    x, y, px, py = (states[:, i] for i in range(4))
    xd, yd, pxd, pyd = (derivs[:, i] for i in range(4))
    return np.stack([xd - px,
                     yd - py,
                     pxd + x + 2.0 * x * y,
                     pyd + y + x**2 - y**2], axis=1)


def hh_loss(states, derivs):
    """
    Residual mean squared error of the Henon-Heiles equations.

    states, derivs : numpy.ndarray, shape (K, 4)
        Predicted (x, y, px, py) and their time derivatives
    """
    r = _residuals(np.atleast_2d(states), np.atleast_2d(derivs))
    return float(np.mean(np.sum(r**2, axis=1)))


class HenonHeiles(Task):
    def __init__(self, x0=0.3, y0=-0.3, px0=0.3, py0=0.15, time_domain=(0.0, 6.0),
                 n_points=200, constrained=False, name='HenonHeiles'):
        """
        Chaotic Henon-Heiles system
        ---------------------------
        The default initial state has H ~ 0.128, inside the bounded-motion
        regime H < 1/6.
        """
        Task.__init__(self, TaskId.HENON_HEILES, ['x', 'y', 'px', 'py'],
                      [x0, y0, px0, py0], time_domain, n_points,
                      constrained=constrained, name=name)

    def hamiltonian(self, states):
        states = np.asarray(states)
        return hh_hamiltonian(*(states[..., i] for i in range(4)))

    def equations_of_motion(self, states):
        states = np.asarray(states)
        return np.stack(hh_equations_of_motion(*(states[..., i] for i in range(4))), axis=-1)

    def residuals(self, states, derivs):
        return _residuals(states, derivs)

    def loss_and_adjoints(self, states, derivs):
        r = _residuals(states, derivs)
        K = len(r)
        loss = float(np.mean(np.sum(r**2, axis=1)))
        r1, r2, r3, r4 = (2.0 * r[:, i] / K for i in range(4))
        x, y = states[:, 0], states[:, 1]
        g_states = np.stack([r3 * (1.0 + 2.0 * y) + r4 * 2.0 * x,
                             r3 * 2.0 * x + r4 * (1.0 - 2.0 * y),
                             -r1,
                             -r2], axis=1)
        g_derivs = np.stack([r1, r2, r3, r4], axis=1)
        return loss, g_states, g_derivs
