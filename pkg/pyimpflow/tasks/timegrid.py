from dataclasses import dataclass

import numpy as np

__all__ = ['TimeGrid', 'make_time_grid']


@dataclass(frozen=True)
class TimeGrid:
    """
    Collocation times t^(n) at which the residual loss is evaluated.

    points : numpy.ndarray
        Strictly increasing times, at least one
    """
    points: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64).ravel()
        if len(points) < 1:
            raise ValueError("a time grid needs at least one point")
        if np.any(np.diff(points) <= 0.0):
            raise ValueError("time grid points must be strictly increasing")
        object.__setattr__(self, 'points', points)

    @property
    def count(self):
        return len(self.points)

    def __len__(self):
        return len(self.points)

    @property
    def spacing(self):
        if len(self.points) < 2:
            return 0.0
        return (self.points[-1] - self.points[0]) / (len(self.points) - 1)

    def jittered(self, rng, sigma):
        """
        Perturb the interior points by Gaussian noise of `sigma` grid
        spacings, clipped to +/-0.45 spacing so the order is kept. The
        endpoints stay fixed.
        """
        if sigma <= 0.0 or len(self.points) < 3:
            return self
        dt = self.spacing
        noise = np.clip(rng.normal(0.0, sigma * dt, size=len(self.points) - 2),
                        -0.45 * dt, 0.45 * dt)
        points = self.points.copy()
        points[1:-1] += noise
        return TimeGrid(points)


def make_time_grid(t0, t_max, K):
    """
    K equispaced times from t0 to t_max, both endpoints included.

    >>> make_time_grid(0.0, 1.0, 2).points
    array([0., 1.])
    """
    if K < 2:
        raise ValueError("K must be at least 2, got {}".format(K))
    if not t_max > t0:
        raise ValueError("t_max ({}) must exceed t0 ({})".format(t_max, t0))
    return TimeGrid(np.linspace(t0, t_max, int(K)))
