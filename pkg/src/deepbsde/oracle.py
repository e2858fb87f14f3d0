"""Independent reference solvers used to validate trained values.

None of these touch networks, tapes, or the rollout code: the Monte Carlo
routes ride on plain path simulation and closed-form reductions, and the 1-D
route is a finite-difference march. Agreement between a trained value and an
oracle is therefore evidence, not circularity.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConfigError, NumericError
from .problems import with_point_start
from .sde import simulate_paths

_MIN_SAMPLES = 100


@dataclass(frozen=True)
class OracleEstimate:
    """Point estimate, its standard error (0 for deterministic routes), and
    provenance metadata (sample counts or grid sizes)."""

    value: float
    stderr: float
    info: dict


def mc_feynman_kac(problem, x0, n_samples, grid, stream):
    """Plain Monte Carlo average of g over simulated paths from x0.

    Valid only for a zero driver (f is None): with a driver the average of g
    no longer represents the solution, so that misuse is rejected.
    """
    if problem.f is not None:
        raise ConfigError(
            f"problem '{problem.name}' has a nonzero driver; this estimator applies only to f == 0"
        )
    if n_samples < _MIN_SAMPLES:
        raise ConfigError(f"need at least {_MIN_SAMPLES} samples, got {n_samples}")
    restarted = with_point_start(problem, x0)
    paths, _ = simulate_paths(restarted, grid, n_samples, stream)
    values = np.asarray(problem.g(paths.states[:, -1, :]), dtype=np.float64).reshape(n_samples)
    if not np.all(np.isfinite(values)):
        raise NumericError("non-finite terminal values in Monte Carlo average")
    value = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / math.sqrt(n_samples))
    return OracleEstimate(value=value, stderr=stderr,
                          info={"samples": int(n_samples), "time_steps": grid.num_steps})


def cole_hopf_mc(lam, g, x0, horizon, n_samples, stream):
    """One-shot Monte Carlo for the quadratic-cost control problem.

    For zero drift, sigma = sqrt(2) I and driver -lam |z|^2 the solution at
    (0, x0) reduces to -(1/lam) log E[exp(-lam g(x0 + sqrt(2) W_T))], which
    needs only terminal Brownian draws. The log-average is computed with the
    max subtracted for overflow safety, and the standard error comes from the
    delta method on the exponential average.
    """
    if lam <= 0.0:
        raise ConfigError(f"lambda must be positive, got {lam}")
    if horizon <= 0.0:
        raise ConfigError(f"horizon must be positive, got {horizon}")
    if n_samples < _MIN_SAMPLES:
        raise ConfigError(f"need at least {_MIN_SAMPLES} samples, got {n_samples}")
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    d = x0.size
    scale = math.sqrt(2.0 * horizon)

    # chunked so 1e6-sample calls stay inside a small memory budget
    exponents = np.empty(n_samples, dtype=np.float64)
    chunk = 200_000
    for lo in range(0, n_samples, chunk):
        hi = min(lo + chunk, n_samples)
        z = stream.normals((hi - lo) * d).reshape(hi - lo, d)
        x_terminal = x0 + scale * z
        exponents[lo:hi] = -lam * np.asarray(g(x_terminal), dtype=np.float64).reshape(hi - lo)
    if not np.all(np.isfinite(exponents)):
        raise NumericError("non-finite terminal exponents in control-problem Monte Carlo")

    shift = float(np.max(exponents))
    weights = np.exp(exponents - shift)
    mean_w = float(np.mean(weights))
    value = -(shift + math.log(mean_w)) / lam
    stderr = float(np.std(weights, ddof=1) / (mean_w * math.sqrt(n_samples))) / lam
    if not math.isfinite(value):
        raise NumericError("control-problem Monte Carlo produced a non-finite value")
    return OracleEstimate(value=value, stderr=stderr, info={"samples": int(n_samples)})


def _scalar_sigma(problem, t, x_nodes):
    """Diffusion values sigma(t, x) at 1-D nodes, via the dense route."""
    dense = problem.sigma.dense(t, x_nodes[:, None])
    return dense[:, 0, 0]


def fd_semilinear_1d(problem, x0, half_width=None, nodes=400, time_steps=None):
    """Finite-difference march for d = 1 problems; returns u(0, x0).

    Backward in time from the terminal condition on [x0 - L, x0 + L]:
    Crank-Nicolson on the linear operator mu d_x + 0.5 sigma^2 d_xx, the
    driver treated explicitly at the current level with z = sigma d_x u by
    central differences. Boundary rows impose zero second derivative
    (linear extrapolation), which keeps the interior system tridiagonal.

    Defaults: L = 6 sigma sqrt(T); time_steps = ceil(4 nodes^2 sigma^2 T / L^2),
    the documented stability margin for the explicit part.
    """
    if problem.d != 1:
        raise ConfigError(f"finite-difference route requires d = 1, got d = {problem.d}")
    if nodes < 8:
        raise ConfigError(f"need at least 8 spatial intervals, got {nodes}")
    x0 = float(np.asarray(x0).reshape(-1)[0])
    T = problem.T
    sigma0 = float(_scalar_sigma(problem, 0.0, np.array([x0]))[0])
    if half_width is None:
        half_width = 6.0 * sigma0 * math.sqrt(T)
    half_width = float(half_width)
    if half_width <= 0.0:
        raise ConfigError(f"half_width must be positive, got {half_width}")
    if time_steps is None:
        time_steps = max(int(math.ceil(4.0 * nodes ** 2 * sigma0 ** 2 * T / half_width ** 2)), 1)
    if time_steps < 1:
        raise ConfigError(f"need at least one time step, got {time_steps}")

    m = int(nodes)
    xs = np.linspace(x0 - half_width, x0 + half_width, m + 1)
    dx = xs[1] - xs[0]
    dt = T / time_steps
    u = np.asarray(problem.g(xs[:, None]), dtype=np.float64).reshape(m + 1).copy()

    def operator_coeffs(t):
        mu = np.zeros(m + 1) if problem.mu is None else \
            np.asarray(problem.mu(t, xs[:, None]), dtype=np.float64).reshape(m + 1)
        s2 = _scalar_sigma(problem, t, xs) ** 2
        lower = -mu / (2.0 * dx) + s2 / (2.0 * dx ** 2)
        diag = -s2 / dx ** 2
        upper = mu / (2.0 * dx) + s2 / (2.0 * dx ** 2)
        return lower, diag, upper

    for j in range(time_steps):
        t_old = T - j * dt
        t_new = T - (j + 1) * dt

        lo_o, di_o, up_o = operator_coeffs(t_old)
        rhs_interior = u[1:m] + 0.5 * dt * (
            lo_o[1:m] * u[0:m - 1] + di_o[1:m] * u[1:m] + up_o[1:m] * u[2:m + 1]
        )
        if problem.f is not None:
            sig = _scalar_sigma(problem, t_old, xs)
            du_dx = np.empty(m + 1)
            du_dx[1:m] = (u[2:] - u[:-2]) / (2.0 * dx)
            du_dx[0] = (u[1] - u[0]) / dx
            du_dx[m] = (u[m] - u[m - 1]) / dx
            z = (sig * du_dx)[:, None]
            fv = np.asarray(
                problem.f(t_old, xs[:, None], u[:, None], z), dtype=np.float64
            ).reshape(m + 1)
            rhs_interior = rhs_interior + dt * fv[1:m]

        lo_n, di_n, up_n = operator_coeffs(t_new)
        a = -0.5 * dt * lo_n[1:m]
        b = 1.0 - 0.5 * dt * di_n[1:m]
        c = -0.5 * dt * up_n[1:m]
        # fold the zero-curvature boundary (u_0 = 2u_1 - u_2 and mirrored)
        # into the first and last interior rows
        b[0] += 2.0 * a[0]
        c[0] -= a[0]
        b[-1] += 2.0 * c[-1]
        a[-1] -= c[-1]

        ab = np.zeros((3, m - 1))
        ab[0, 1:] = c[:-1]
        ab[1, :] = b
        ab[2, :-1] = a[1:]
        interior = solve_banded((1, 1), ab, rhs_interior)
        u[1:m] = interior
        u[0] = 2.0 * u[1] - u[2]
        u[m] = 2.0 * u[m - 1] - u[m - 2]
        if not np.all(np.isfinite(u)):
            raise NumericError(f"non-finite values at time step {j}")

    value = float(np.interp(x0, xs, u))
    return OracleEstimate(
        value=value, stderr=0.0,
        info={"nodes": m, "time_steps": int(time_steps), "half_width": half_width},
    )
