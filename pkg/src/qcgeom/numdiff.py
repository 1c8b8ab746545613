"""Richardson-extrapolated central differences.

Used to validate closed-form derivatives and to push tangent vectors
forward through maps that have no closed-form differential.
"""

import numpy as np

PUSHFORWARD_STEP = 1e-5
HESSIAN_STEP = 1e-3


def directional(fn, x, v, h=PUSHFORWARD_STEP):
    """d/ds fn(x + s v) at s = 0, fourth order accurate.

    ``fn`` may return any array; ``x`` and ``v`` broadcast together.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)

    def central(step):
        return (np.asarray(fn(x + step * v)) - np.asarray(fn(x - step * v))) / (2 * step)

    return (4 * central(h / 2) - central(h)) / 3


def gradient(fn, x, h=PUSHFORWARD_STEP):
    """Gradient of a scalar function evaluated on a stack of points ``(..., d)``."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    cols = [directional(fn, x, np.eye(d)[i], h) for i in range(d)]
    return np.stack(cols, axis=-1)


def hessian(fn, x, h=HESSIAN_STEP):
    """Hessian of a scalar function via Richardson mixed central differences."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    eye = np.eye(d)

    def second(i, j, step):
        ei, ej = eye[i] * step, eye[j] * step
        if i == j:
            return (fn(x + ei) - 2 * fn(x) + fn(x - ei)) / step ** 2
        return (fn(x + ei + ej) - fn(x + ei - ej) - fn(x - ei + ej) + fn(x - ei - ej)) / (4 * step ** 2)

    out = np.empty(x.shape[:-1] + (d, d))
    for i in range(d):
        for j in range(i, d):
            val = (4 * second(i, j, h / 2) - second(i, j, h)) / 3
            out[..., i, j] = val
            out[..., j, i] = val
    return out


def jacobian(fn, x, h=PUSHFORWARD_STEP):
    """Jacobian ``J[..., a, i] = d fn_a / d x_i`` of a vector map."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    cols = [directional(fn, x, np.eye(d)[i], h) for i in range(d)]
    return np.stack(cols, axis=-1)
