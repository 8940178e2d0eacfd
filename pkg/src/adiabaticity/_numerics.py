"""Grid differentiation and quadrature helpers."""
import numpy as np
from scipy.integrate import cumulative_simpson


def is_uniform(t, rtol=1e-9):
    dt = np.diff(t)
    return dt.size > 0 and np.allclose(dt, dt[0], rtol=rtol, atol=0.0)


def grid_derivative(y, t):
    """Derivative of samples ``y`` (time along axis 0) on the grid ``t``.

    Fourth-order five-point stencils on uniform grids, second-order
    ``np.gradient`` otherwise.
    """
    y = np.asarray(y)
    t = np.asarray(t, dtype=float)
    if len(t) < 5 or not is_uniform(t):
        return np.gradient(y, t, axis=0, edge_order=2)
    h = t[1] - t[0]
    d = np.empty_like(y, dtype=np.result_type(y, float))
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    d[0] = (-25 * y[0] + 48 * y[1] - 36 * y[2] + 16 * y[3] - 3 * y[4]) / (12 * h)
    d[1] = (-3 * y[0] - 10 * y[1] + 18 * y[2] - 6 * y[3] + y[4]) / (12 * h)
    d[-1] = (25 * y[-1] - 48 * y[-2] + 36 * y[-3] - 16 * y[-4] + 3 * y[-5]) / (12 * h)
    d[-2] = (3 * y[-1] + 10 * y[-2] - 18 * y[-3] + 6 * y[-4] - y[-5]) / (12 * h)
    return d


def cumulative_integral(y, t):
    """Running composite-Simpson integral, zero at ``t[0]``."""
    y = np.asarray(y)
    if len(t) < 3:
        return np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))])
    return cumulative_simpson(y, x=t, axis=0, initial=0.0)


def unwrap_mod_pi(phase, axis=0):
    """Unwrap an argument that is only meaningful modulo pi.

    Real couplings that change sign keep a constant phase instead of
    jumping by pi; the sign is carried by the amplitude.
    """
    return 0.5 * np.unwrap(2.0 * np.asarray(phase), axis=axis)


def spectral_norm(a):
    """Largest singular value of each matrix in a stack (or of a vector)."""
    a = np.asarray(a)
    if a.ndim == 1:
        return float(np.linalg.norm(a))
    return np.linalg.norm(a, ord=2, axis=(-2, -1))
