import numpy as np
import pytest


def central_diff_grad(loss_fn, theta, h=1e-6):
    """Central finite differences of a scalar function of a flat vector."""
    theta = np.asarray(theta, dtype=np.float64)
    out = np.zeros_like(theta)
    for k in range(theta.size):
        up = theta.copy()
        dn = theta.copy()
        up[k] += h
        dn[k] -= h
        out[k] = (loss_fn(up) - loss_fn(dn)) / (2.0 * h)
    return out


def max_rel_err(analytic, fd):
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    fd = np.asarray(fd, dtype=np.float64).ravel()
    return float(np.max(np.abs(analytic - fd) / (np.abs(fd) + 1e-12)))


@pytest.fixture
def tmp_out(tmp_path):
    return tmp_path / "out"
