"""Controlled rollout of the discretized value process and its losses.

Given simulated paths, the rollout threads a value estimate Y through time:
start from the initial-value head, and at each step n subtract the driver
contribution f * dt and add the gradient network's inner product with the
Brownian increment. The training loss is the mean squared mismatch between
the terminal value and g evaluated on the terminal state.

Three routes compute the same recursion:
  - rollout_loss: on the tape, differentiable w.r.t. the bank
  - rollout_values: plain numpy, for evaluation and statistical checks
  - oracle_rollout_loss: plain numpy with the closed-form solution standing
    in for the networks; isolates pure time-discretization error
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tape, Var, loss_mse, record_affine, record_dot, record_linear_combination,
)
from .errors import ConfigError, NumericError, ShapeError
from .net import bind_mlp, mlp_eval, mlp_forward
from .problems import sample_xi


@dataclass(frozen=True)
class RolloutResult:
    """Differentiable loss plus per-sample diagnostics (plain arrays)."""

    loss: Var
    y0_values: np.ndarray
    terminal_gap: np.ndarray


@dataclass(frozen=True)
class ValueRollout:
    """Tape-free rollout outputs."""

    loss: float
    y0_values: np.ndarray
    terminal_values: np.ndarray
    terminal_gap: np.ndarray


def _check_rollout_inputs(problem, bank, grid, paths, increments):
    states = paths.states
    incs = increments.increments
    if bank.d != problem.d:
        raise ConfigError(f"bank dimension {bank.d} != problem dimension {problem.d}")
    if bank.num_steps != grid.num_steps:
        raise ConfigError(f"bank has {bank.num_steps} steps, grid has {grid.num_steps}")
    if states.ndim != 3 or incs.ndim != 3:
        raise ShapeError("paths and increments must be [batch, steps(+1), d] arrays")
    batch = states.shape[0]
    if batch < 1:
        raise ShapeError("empty batch")
    if states.shape != (batch, grid.num_steps + 1, problem.d):
        raise ShapeError(f"paths shaped {states.shape}, expected {(batch, grid.num_steps + 1, problem.d)}")
    if incs.shape != (batch, grid.num_steps, problem.d):
        raise ShapeError(f"increments shaped {incs.shape}, expected {(batch, grid.num_steps, problem.d)}")
    return states, incs, batch


def _terminal_values(problem, x_terminal):
    g = np.asarray(problem.g(x_terminal), dtype=np.float64).reshape(x_terminal.shape[0])
    if not np.all(np.isfinite(g)):
        bad = int(np.argwhere(~np.isfinite(g))[0][0])
        raise NumericError(f"non-finite terminal value g at sample {bad}")
    return g


class _BoundBank:
    """Bank tensors inserted on a tape in flatten order, shared nets bound once."""

    def __init__(self, tape, bank):
        self.bank = bank
        if bank.mode == "general_xi":
            self.y0_net = bind_mlp(tape, bank.y0_net, "psi0")
            self.y0_var = None
            self.z0_var = None
        else:
            self.y0_net = None
            self.y0_var = tape.parameter(np.array([[bank.y0]]), name="y0")
            self.z0_var = tape.parameter(np.asarray(bank.z0)[None, :], name="z0")
        labels = bank._z_net_labels()
        self._bound_z = [bind_mlp(tape, net, lbl) for lbl, net in zip(labels, bank.z_nets)]

    def z_bound(self, n):
        bank = self.bank
        if bank.mode == "deterministic_xi":
            if n == 0:
                return None
            return self._bound_z[0] if bank.sharing == "shared" else self._bound_z[n - 1]
        return self._bound_z[0] if bank.sharing == "shared" else self._bound_z[n]


def _driver_term(problem, tape, t, x_plain, y_var, z_var, batch, n):
    try:
        fv = problem.f(t, x_plain, y_var, z_var)
    except NumericError as e:
        raise NumericError(f"driver evaluation failed at step {n}: {e}") from e
    if not isinstance(fv, Var):
        arr = np.broadcast_to(np.asarray(fv, dtype=np.float64), (batch, 1))
        if not np.all(np.isfinite(arr)):
            bad = int(np.argwhere(~np.isfinite(arr))[0][0])
            raise NumericError(f"non-finite driver value at step {n}, sample {bad}")
        fv = tape.constant(arr)
    if fv.shape != (batch, 1):
        raise ShapeError(f"driver must produce [batch, 1], got {fv.shape}")
    return fv


def rollout_loss(tape, problem, bank, grid, paths, increments):
    """Differentiable rollout; returns RolloutResult.

    Parameters are bound to the tape in flatten order, so `tape.param_ids`
    lines up with flatten_params / unflatten_params and gradient vectors can
    be assembled by simple concatenation.
    """
    states, incs, batch = _check_rollout_inputs(problem, bank, grid, paths, increments)
    times = grid.times
    bound = _BoundBank(tape, bank)

    ones = None
    if bank.mode == "deterministic_xi":
        ones = tape.constant(np.ones((batch, 1)))
        zero1 = tape.constant(np.zeros(1))
        zerod = tape.constant(np.zeros(problem.d))
        y = record_affine(tape, ones, bound.y0_var, zero1)
    else:
        x0 = tape.constant(states[:, 0, :], name="x0")
        y = mlp_forward(tape, bound.y0_net, x0)
    y0_values = y.value[:, 0].copy()

    for n in range(grid.num_steps):
        t_n = float(times[n])
        dt_n = float(times[n + 1] - times[n])
        x_n = states[:, n, :]
        znet = bound.z_bound(n)
        if znet is None:
            z = record_affine(tape, ones, bound.z0_var, zerod)
        else:
            z = mlp_forward(tape, znet, tape.constant(x_n))
        dw = tape.constant(incs[:, n, :])
        gain = record_dot(tape, z, dw)
        terms = [(1.0, y)]
        if problem.f is not None:
            fv = _driver_term(problem, tape, t_n, x_n, y, z, batch, n)
            terms.append((-dt_n, fv))
        terms.append((1.0, gain))
        y = record_linear_combination(tape, terms)

    g = _terminal_values(problem, states[:, grid.num_steps, :])
    target = tape.constant(g[:, None], name="terminal")
    loss = loss_mse(tape, y, target)
    gap = g - y.value[:, 0]
    return RolloutResult(loss=loss, y0_values=y0_values, terminal_gap=gap)


def rollout_values(problem, bank, grid, paths, increments):
    """Tape-free twin of rollout_loss (same arithmetic, plain numpy)."""
    states, incs, batch = _check_rollout_inputs(problem, bank, grid, paths, increments)
    times = grid.times

    if bank.mode == "deterministic_xi":
        y = np.full((batch, 1), bank.y0, dtype=np.float64)
    else:
        y = mlp_eval(bank.y0_net, states[:, 0, :])
    y0_values = y[:, 0].copy()

    for n in range(grid.num_steps):
        t_n = float(times[n])
        dt_n = float(times[n + 1] - times[n])
        x_n = states[:, n, :]
        znet = bank.z_net(n)
        if znet is None:
            z = np.broadcast_to(bank.z0, (batch, problem.d))
        else:
            z = mlp_eval(znet, x_n)
        gain = np.sum(z * incs[:, n, :], axis=1, keepdims=True)
        acc = 1.0 * y
        if problem.f is not None:
            fv = np.broadcast_to(
                np.asarray(problem.f(t_n, x_n, y, z), dtype=np.float64), (batch, 1)
            )
            if not np.all(np.isfinite(fv)):
                bad = int(np.argwhere(~np.isfinite(fv))[0][0])
                raise NumericError(f"non-finite driver value at step {n}, sample {bad}")
            acc = acc + (-dt_n) * fv
        y = acc + 1.0 * gain

    g = _terminal_values(problem, states[:, grid.num_steps, :])
    gap = g - y[:, 0]
    return ValueRollout(
        loss=float(np.mean(gap ** 2)),
        y0_values=y0_values,
        terminal_values=y[:, 0].copy(),
        terminal_gap=gap,
    )


def oracle_rollout_loss(problem, grid, paths, increments):
    """Rollout with the closed-form solution in place of the networks.

    The initial value is u(0, x_0) and each step feeds sigma^T grad u exactly,
    so the returned loss is pure time-discretization error: its large-batch
    limit shrinks linearly in the step size on smooth problems.
    """
    if problem.exact is None:
        raise ConfigError(f"problem '{problem.name}' has no closed-form solution")
    states = paths.states
    incs = increments.increments
    batch = states.shape[0]
    if states.shape != (batch, grid.num_steps + 1, problem.d):
        raise ShapeError(f"paths shaped {states.shape} do not match the grid")
    times = grid.times

    x0 = states[:, 0, :]
    y = np.asarray(problem.exact.u(0.0, x0), dtype=np.float64).reshape(batch, 1)
    for n in range(grid.num_steps):
        t_n = float(times[n])
        dt_n = float(times[n + 1] - times[n])
        x_n = states[:, n, :]
        grad = np.asarray(problem.exact.grad(t_n, x_n), dtype=np.float64)
        z = problem.sigma.apply_transpose(t_n, x_n, grad)
        gain = np.sum(z * incs[:, n, :], axis=1, keepdims=True)
        acc = 1.0 * y
        if problem.f is not None:
            fv = np.broadcast_to(
                np.asarray(problem.f(t_n, x_n, y, z), dtype=np.float64), (batch, 1)
            )
            acc = acc + (-dt_n) * fv
        y = acc + 1.0 * gain
        if not np.all(np.isfinite(y)):
            bad = int(np.argwhere(~np.isfinite(y))[0][0])
            raise NumericError(f"non-finite value at step {n}, sample {bad}")

    g = _terminal_values(problem, states[:, grid.num_steps, :])
    return float(np.mean((g - y[:, 0]) ** 2))


def estimate_u0(bank, problem, n_eval, stream):
    """(mean, stddev) of the initial-value head over fresh starting draws.

    In deterministic mode the head is a scalar, so the spread is exactly 0.
    """
    if bank.mode == "deterministic_xi":
        return float(bank.y0), 0.0
    if n_eval < 1:
        raise ConfigError(f"n_eval must be at least 1, got {n_eval}")
    x = sample_xi(problem, n_eval, stream)
    vals = mlp_eval(bank.y0_net, x)[:, 0]
    return float(np.mean(vals)), float(np.std(vals))
