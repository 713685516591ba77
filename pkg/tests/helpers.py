"""Shared test oracles, kept independent of the code paths they check."""
import numpy as np


def finite_difference_grads(loss_fn, params, h=1e-5):
    """Central finite differences of a scalar loss w.r.t. each Parameter.

    ``loss_fn`` takes no arguments and must be deterministic (fix any noise
    seeds inside it). Returns a dict Parameter -> gradient array.
    """
    grads = {}
    for p in params:
        g = np.zeros_like(p.value)
        flat = p.value.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads[p] = g
    return grads


def assert_grads_close(analytic, numeric, rel=1e-4, abs_floor=1e-7):
    """Relative comparison with an absolute floor for near-zero entries."""
    for p, g_num in numeric.items():
        g_ana = analytic[p]
        denom = np.maximum(np.abs(g_num), abs_floor / rel)
        err = np.max(np.abs(g_ana - g_num) / denom)
        assert err <= rel, f"gradient mismatch for {p.name}: rel err {err:.3e}"


def spearman(x, y):
    """Spearman rank correlation; 0.0 when either series is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.std(x) == 0.0 or np.std(y) == 0.0:
        return 0.0
    rx = np.argsort(np.argsort(x)).astype(float)
    ry = np.argsort(np.argsort(y)).astype(float)
    rx -= rx.mean()
    ry -= ry.mean()
    return float((rx * ry).sum() / np.sqrt((rx * rx).sum() * (ry * ry).sum()))
