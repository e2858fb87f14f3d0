"""Problem definitions: coefficients, terminal data, starting-point samplers,
and the built-in benchmark instances.

Conventions shared across the library:
  - drift mu(t, x) and terminal g(x) take x as [batch, d]; g returns [batch]
  - a driver f(t, x, y, z) takes y as [batch, 1] and z as [batch, d] and must
    be written with the operators shared by arrays and tape variables
    (+, -, *, and `dot`), so one definition serves plain evaluation and the
    differentiable rollout; f = None declares the linear case f == 0
  - diffusion matrices are structured (scalar multiple of identity, diagonal,
    or full) and applied through Diffusion so the structure is explicit
"""

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .autodiff import dot
from .errors import ConfigError, ShapeError
from .sde import block_uniforms

BUILTIN_PROBLEMS = ("heat", "hjb", "allen_cahn")

_DIFFUSION_KINDS = ("scalar", "diagonal", "full")


@dataclass(frozen=True)
class Diffusion:
    """Structured diffusion coefficient sigma(t, x).

    kind "scalar": fn returns a scalar (or [batch]) multiplying the identity.
    kind "diagonal": fn returns the diagonal, [d] or [batch, d].
    kind "full": fn returns the matrix, [d, d] or [batch, d, d].
    """

    kind: str
    fn: Callable

    def __post_init__(self):
        if self.kind not in _DIFFUSION_KINDS:
            raise ConfigError(f"unknown diffusion kind '{self.kind}' (expected one of {_DIFFUSION_KINDS})")

    @classmethod
    def scalar(cls, value):
        fn = value if callable(value) else (lambda t, x, _c=float(value): _c)
        return cls("scalar", fn)

    @classmethod
    def diagonal(cls, value):
        if callable(value):
            fn = value
        else:
            const = np.asarray(value, dtype=np.float64)
            fn = lambda t, x, _c=const: _c
        return cls("diagonal", fn)

    @classmethod
    def full(cls, value):
        if callable(value):
            fn = value
        else:
            const = np.asarray(value, dtype=np.float64)
            fn = lambda t, x, _c=const: _c
        return cls("full", fn)

    def _coeff(self, t, x):
        return np.asarray(self.fn(t, x), dtype=np.float64)

    def apply(self, t, x, v):
        """sigma(t, x) @ v for v of shape [batch, d]."""
        c = self._coeff(t, x)
        if self.kind == "scalar":
            return v * (c if c.ndim == 0 else c[:, None])
        if self.kind == "diagonal":
            return v * c
        if c.ndim == 2:
            return v @ c.T
        return np.einsum("bij,bj->bi", c, v)

    def apply_transpose(self, t, x, v):
        """sigma(t, x)^T @ v for v of shape [batch, d]."""
        c = self._coeff(t, x)
        if self.kind == "scalar":
            return v * (c if c.ndim == 0 else c[:, None])
        if self.kind == "diagonal":
            return v * c
        if c.ndim == 2:
            return v @ c
        return np.einsum("bji,bj->bi", c, v)

    def dense(self, t, x):
        """The full [batch, d, d] matrices ([d, d] for a single point);
        reference route for honesty checks."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return self.dense(t, x[None, :])[0]
        batch, d = x.shape
        c = self._coeff(t, x)
        eye = np.eye(d)
        if self.kind == "scalar":
            s = np.broadcast_to(c, (batch,)) if c.ndim <= 1 else c
            return s[:, None, None] * eye[None, :, :]
        if self.kind == "diagonal":
            diag = np.broadcast_to(c, (batch, d))
            return diag[:, :, None] * eye[None, :, :]
        if c.ndim == 2:
            return np.broadcast_to(c, (batch, d, d))
        return c


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form solution used by reference rollouts and residual audits."""

    u: Callable      # (t, x[batch, d]) -> [batch]
    grad: Callable   # (t, x[batch, d]) -> [batch, d]


@dataclass(frozen=True)
class XiSampler:
    """Initial-point law: a point mass or a uniform box."""

    kind: str
    point: np.ndarray | None = None
    low: np.ndarray | None = None
    high: np.ndarray | None = None

    @classmethod
    def point_mass(cls, x0):
        x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
        return cls("point", point=x0)

    @classmethod
    def uniform_box(cls, low, high):
        low = np.asarray(low, dtype=np.float64).reshape(-1)
        high = np.asarray(high, dtype=np.float64).reshape(-1)
        if low.shape != high.shape:
            raise ShapeError(f"box bounds differ in length: {low.shape} vs {high.shape}")
        if np.any(high < low):
            raise ConfigError("box upper bounds must not be below lower bounds")
        return cls("box", low=low, high=high)

    @property
    def dim(self):
        return self.point.size if self.kind == "point" else self.low.size

    def sample_block(self, stream, lo, hi):
        """[hi-lo, d] draws for absolute sample indices lo..hi-1.

        Uses per-sample sub-streams (stage 0), which keeps any slice of the
        batch reproducible independently of the rest.
        """
        if self.kind == "point":
            return np.tile(self.point, (hi - lo, 1))
        u = block_uniforms(stream, 0, lo, hi, self.dim)
        return self.low + (self.high - self.low) * u


@dataclass(frozen=True)
class ProblemSpec:
    """Everything the solver needs: coefficients, driver, terminal data,
    starting law, and (when known) the exact solution."""

    name: str
    d: int
    T: float
    mu: Callable | None
    sigma: Diffusion
    f: Callable | None
    g: Callable
    xi: XiSampler
    exact: ExactSolution | None = None

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError(f"dimension must be at least 1, got {self.d}")
        if self.T <= 0.0:
            raise ConfigError(f"horizon must be positive, got {self.T}")
        if self.xi.dim != self.d:
            raise ShapeError(f"initial sampler is {self.xi.dim}-dimensional, problem is {self.d}")


def sample_xi(problem, batch, stream):
    """Draw `batch` starting points from the problem's initial law."""
    if batch < 1:
        raise ConfigError(f"batch must be at least 1, got {batch}")
    return problem.xi.sample_block(stream, 0, batch)


def _sq_norm(x):
    return np.sum(x * x, axis=-1)


def _heat(d, T, xi):
    """Zero driver, sigma = sqrt(2) I, quadratic terminal data.

    The solution is known in closed form, which makes this the calibration
    instance for reference rollouts and residual audits.
    """

    def g(x):
        return _sq_norm(x)

    def u(t, x):
        return _sq_norm(x) + 2.0 * d * (T - t)

    def du(t, x):
        return 2.0 * x

    return ProblemSpec(
        name="heat", d=d, T=T, mu=None, sigma=Diffusion.scalar(np.sqrt(2.0)),
        f=None, g=g, xi=xi, exact=ExactSolution(u, du),
    )


def _hjb(d, T, lam, xi):
    """Control problem with quadratic running cost: driver -lam * |z|^2."""

    def g(x):
        return np.log(0.5 * (1.0 + _sq_norm(x)))

    def f(t, x, y, z):
        return (-lam) * dot(z, z)

    return ProblemSpec(
        name="hjb", d=d, T=T, mu=None, sigma=Diffusion.scalar(np.sqrt(2.0)),
        f=f, g=g, xi=xi, exact=None,
    )


def _allen_cahn(d, T, xi):
    """Cubic reaction term y - y^3 with a bump-shaped terminal condition."""

    def g(x):
        return 1.0 / (2.0 + 0.4 * _sq_norm(x))

    def f(t, x, y, z):
        return y - y * y * y

    return ProblemSpec(
        name="allen_cahn", d=d, T=T, mu=None, sigma=Diffusion.scalar(np.sqrt(2.0)),
        f=f, g=g, xi=xi, exact=None,
    )


_COMMON_KEYS = ("T", "xi_mode", "xi0", "box_low", "box_high")


def _as_vector(value, d, key):
    arr = np.asarray(value, dtype=np.float64).reshape(-1)
    if arr.size == 1:
        return np.full(d, arr[0])
    if arr.size != d:
        raise ConfigError(f"override '{key}' needs 1 or {d} entries, got {arr.size}")
    return arr


def _build_xi(d, overrides):
    mode = overrides.get("xi_mode", "point")
    if mode == "point":
        return XiSampler.point_mass(_as_vector(overrides.get("xi0", 0.0), d, "xi0"))
    if mode == "box":
        low = _as_vector(overrides.get("box_low", -1.0), d, "box_low")
        high = _as_vector(overrides.get("box_high", 1.0), d, "box_high")
        return XiSampler.uniform_box(low, high)
    raise ConfigError(f"unknown xi_mode '{mode}' (expected 'point' or 'box')")


def get_problem(name, d, overrides=None):
    """Construct a built-in problem instance.

    Accepted override keys: T, xi_mode, xi0, box_low, box_high, and (for
    hjb only) lambda. Unknown names and keys are rejected.
    """
    overrides = dict(overrides or {})
    if name not in BUILTIN_PROBLEMS:
        raise ConfigError(f"unknown problem '{name}' (expected one of {BUILTIN_PROBLEMS})")
    allowed = set(_COMMON_KEYS) | ({"lambda"} if name == "hjb" else set())
    unknown = sorted(set(overrides) - allowed)
    if unknown:
        raise ConfigError(
            f"unknown override keys {unknown} for '{name}' (accepted: {sorted(allowed)})"
        )
    T = float(overrides.get("T", 1.0))
    if T <= 0.0:
        raise ConfigError(f"override 'T' must be positive, got {T}")
    xi = _build_xi(d, overrides)
    if name == "heat":
        return _heat(d, T, xi)
    if name == "hjb":
        lam = float(overrides.get("lambda", 1.0))
        if lam <= 0.0:
            raise ConfigError(f"override 'lambda' must be positive, got {lam}")
        return _hjb(d, T, lam, xi)
    return _allen_cahn(d, T, xi)


def exact_eval(problem, t, x):
    """(u(t, x), grad u(t, x)) at a single point x of shape [d]."""
    if problem.exact is None:
        raise ConfigError(f"problem '{problem.name}' has no closed-form solution")
    if not 0.0 <= t <= problem.T:
        raise ConfigError(f"t={t} outside [0, {problem.T}]")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != problem.d:
        raise ShapeError(f"x must have {problem.d} entries, got {x.size}")
    xb = x[None, :]
    value = float(np.asarray(problem.exact.u(t, xb)).reshape(-1)[0])
    grad = np.asarray(problem.exact.grad(t, xb), dtype=np.float64).reshape(-1).copy()
    return value, grad


def pde_residual(problem, t, x, step=1e-3):
    """Finite-difference residual of the backward equation at one point.

    Estimates time derivative, gradient, and Hessian of the closed-form
    solution by central differences (never touching exact.grad), assembles
    dt_u + mu . grad + 0.5 tr(sigma sigma^T Hess) + f, and returns it. Zero
    up to discretization error certifies that the stored solution actually
    solves the equation. Requires step <= t <= T - step.
    """
    if problem.exact is None:
        raise ConfigError(f"problem '{problem.name}' has no closed-form solution")
    if not step <= t <= problem.T - step:
        raise ConfigError(f"t={t} leaves no room for a central difference of width {step}")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    d = problem.d

    def u(tt, xx):
        return float(np.asarray(problem.exact.u(tt, xx[None, :])).reshape(-1)[0])

    u0 = u(t, x)
    dt_u = (u(t + step, x) - u(t - step, x)) / (2.0 * step)

    grad = np.zeros(d)
    hess = np.zeros((d, d))
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = step
        up, dn = u(t, x + ei), u(t, x - ei)
        grad[i] = (up - dn) / (2.0 * step)
        hess[i, i] = (up - 2.0 * u0 + dn) / step ** 2
    for i in range(d):
        for j in range(i + 1, d):
            ei = np.zeros(d)
            ej = np.zeros(d)
            ei[i] = step
            ej[j] = step
            mixed = (
                u(t, x + ei + ej) - u(t, x + ei - ej)
                - u(t, x - ei + ej) + u(t, x - ei - ej)
            ) / (4.0 * step ** 2)
            hess[i, j] = hess[j, i] = mixed

    xb = x[None, :]
    residual = dt_u
    if problem.mu is not None:
        residual += float(np.asarray(problem.mu(t, xb)).reshape(-1) @ grad)
    sig = problem.sigma.dense(t, xb)[0]
    residual += 0.5 * float(np.trace(sig @ sig.T @ hess))
    if problem.f is not None:
        z = (sig.T @ grad)[None, :]
        fval = np.asarray(problem.f(t, xb, np.array([[u0]]), z), dtype=np.float64)
        residual += float(fval.reshape(-1)[0])
    return residual


def with_point_start(problem, x0):
    """Same problem restarted from a point mass at x0."""
    x0 = _as_vector(x0, problem.d, "x0")
    return replace(problem, xi=XiSampler.point_mass(x0))
