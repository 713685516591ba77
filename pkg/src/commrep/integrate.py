"""Fixed-step RK4 integration, vectorized over batches of states."""
from __future__ import annotations

import numpy as np


def rk4_step(f, t, y, dt):
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4(f, y0, t0, t1, n_steps):
    """Integrate dy/dt = f(t, y) from t0 to t1 with n_steps RK4 steps.

    ``y`` may have any shape; ``f`` must be vectorized accordingly.
    """
    y = np.array(y0, dtype=float)
    dt = (t1 - t0) / n_steps
    t = t0
    for _ in range(n_steps):
        y = rk4_step(f, t, y, dt)
        t += dt
    return y


def rk4_sampled(f, y0, t0, dt_out, n_out, substeps):
    """Integrate and record the state at n_out uniformly spaced output times.

    Returns an array of shape (n_out,) + y0.shape.
    """
    y = np.array(y0, dtype=float)
    out = np.empty((n_out,) + y.shape)
    t = t0
    for k in range(n_out):
        y = rk4(f, y, t, t + dt_out, substeps)
        t += dt_out
        out[k] = y
    return out
