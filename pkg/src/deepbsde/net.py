"""Feedforward subnetworks and the parameter bank that drives a rollout.

A bank holds the initial-value head (a network when the starting point is
random, a plain trainable scalar plus gradient vector when it is a fixed
point) and one gradient network per time step, optionally shared across
steps. Flattening walks the bank in a fixed documented order so optimizer
state, archives, and gradient vectors always line up:

    initial-value head first (network tensors, or y0 then z0),
    then the gradient networks in step order (once, if shared);
    within a network layer by layer, weight before bias, rows major.
"""

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ACTIVATION_KINDS, record_activation, record_affine
from .errors import ConfigError, ShapeError
from .sde import RngStream

MODES = ("general_xi", "deterministic_xi")
SHARINGS = ("independent", "shared")


@dataclass(frozen=True)
class MLPConfig:
    """Layer widths input-to-output plus the hidden activation kind."""

    layer_widths: tuple
    activation: str = "tanh"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        if len(widths) < 2:
            raise ConfigError(f"need at least input and output widths, got {widths}")
        if any(w < 1 for w in widths):
            raise ConfigError(f"layer widths must be positive, got {widths}")
        if self.activation not in ACTIVATION_KINDS:
            raise ConfigError(
                f"unknown activation '{self.activation}' (expected one of {ACTIVATION_KINDS})"
            )
        object.__setattr__(self, "layer_widths", widths)


@dataclass
class MLPParams:
    config: MLPConfig
    weights: list
    biases: list


def init_params(config, seed):
    """Xavier-uniform weights and zero biases, drawn from RngStream(seed).

    Weights are drawn layer by layer in row-major element order, so the
    result is a pure function of (config, seed).
    """
    stream = RngStream(seed)
    widths = config.layer_widths
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        u = stream.uniforms(fan_in * fan_out)
        weights.append(((2.0 * u - 1.0) * bound).reshape(fan_in, fan_out))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return MLPParams(config, weights, biases)


@dataclass
class BoundMLP:
    """Network tensors already inserted on a tape as parameter nodes."""

    config: MLPConfig
    layers: list  # [(weight Var, bias Var), ...]


def bind_mlp(tape, params, prefix=""):
    layers = []
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        wv = tape.parameter(w, name=f"{prefix}.layer_{k}.weight" if prefix else None)
        bv = tape.parameter(b, name=f"{prefix}.layer_{k}.bias" if prefix else None)
        layers.append((wv, bv))
    return BoundMLP(params.config, layers)


def mlp_forward(tape, params, x):
    """Differentiable forward pass; hidden activations only, identity output.

    `params` may be MLPParams (tensors are bound to the tape here) or a
    BoundMLP when the caller shares one binding across several calls.
    """
    if isinstance(params, MLPParams):
        params = bind_mlp(tape, params)
    h = x
    last = len(params.layers) - 1
    for k, (wv, bv) in enumerate(params.layers):
        h = record_affine(tape, h, wv, bv)
        if k < last:
            h = record_activation(tape, h, params.config.activation)
    return h


def mlp_eval(params, x):
    """Tape-free forward pass; same operation order as mlp_forward."""
    h = np.asarray(x, dtype=np.float64)
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if k < last:
            if params.config.activation == "tanh":
                h = np.tanh(h)
            elif params.config.activation == "relu":
                h = np.maximum(h, 0.0)
    return h


@dataclass
class SubnetBank:
    """All trainable state for one rollout.

    general_xi mode: `y0_net` maps the random start to the initial value and
    `z_nets` holds one gradient network per step (a single entry if shared).
    deterministic_xi mode: the start is one fixed point, so the initial value
    is the plain scalar `y0`, the step-0 gradient is the plain vector `z0`,
    and `z_nets` covers steps 1..N-1 only.
    """

    mode: str
    sharing: str
    d: int
    num_steps: int
    y0_net: MLPParams | None = None
    y0: float | None = None
    z0: np.ndarray | None = None
    z_nets: list = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode '{self.mode}' (expected one of {MODES})")
        if self.sharing not in SHARINGS:
            raise ConfigError(f"unknown sharing '{self.sharing}' (expected one of {SHARINGS})")
        if self.d < 1 or self.num_steps < 1:
            raise ConfigError(
                f"need d >= 1 and num_steps >= 1, got d={self.d}, num_steps={self.num_steps}"
            )
        if self.mode == "general_xi":
            if self.y0_net is None or self.y0 is not None or self.z0 is not None:
                raise ConfigError("general_xi banks carry an initial-value network only")
        else:
            if self.y0_net is not None or self.y0 is None or self.z0 is None:
                raise ConfigError("deterministic_xi banks carry plain y0 and z0 only")
            if np.asarray(self.z0).shape != (self.d,):
                raise ShapeError(f"z0 must have shape ({self.d},), got {np.asarray(self.z0).shape}")
        expected = self.expected_z_net_count(self.mode, self.sharing, self.num_steps)
        if len(self.z_nets) != expected:
            raise ConfigError(
                f"{self.mode}/{self.sharing} with {self.num_steps} steps needs "
                f"{expected} gradient networks, got {len(self.z_nets)}"
            )

    @staticmethod
    def expected_z_net_count(mode, sharing, num_steps):
        networked_steps = num_steps if mode == "general_xi" else num_steps - 1
        if networked_steps == 0:
            return 0
        return 1 if sharing == "shared" else networked_steps

    @classmethod
    def create(cls, mode, sharing, d, num_steps, hidden=None, activation="tanh", seed=0):
        """Freshly initialized bank; per-network seeds derive from `seed`."""
        if hidden is None:
            hidden = (d + 10, d + 10)
        hidden = tuple(int(w) for w in hidden)
        root = RngStream(seed)
        z_config = MLPConfig((d, *hidden, d), activation)
        count = cls.expected_z_net_count(mode, sharing, num_steps)
        z_nets = [init_params(z_config, root.derive(k + 1).seed_state) for k in range(count)]
        if mode == "general_xi":
            y0_config = MLPConfig((d, *hidden, 1), activation)
            y0_net = init_params(y0_config, root.derive(0).seed_state)
            return cls(mode, sharing, d, num_steps, y0_net=y0_net, z_nets=z_nets)
        return cls(
            mode, sharing, d, num_steps,
            y0=0.0, z0=np.zeros(d, dtype=np.float64), z_nets=z_nets,
        )

    def z_net(self, n):
        """Gradient network used at step n (None when step 0 uses plain z0)."""
        if not 0 <= n < self.num_steps:
            raise ConfigError(f"step {n} outside 0..{self.num_steps - 1}")
        if self.mode == "deterministic_xi":
            if n == 0:
                return None
            return self.z_nets[0] if self.sharing == "shared" else self.z_nets[n - 1]
        return self.z_nets[0] if self.sharing == "shared" else self.z_nets[n]

    def _z_net_labels(self):
        if self.sharing == "shared":
            return ["phi_shared"] * len(self.z_nets)
        first = 0 if self.mode == "general_xi" else 1
        return [f"phi_{first + k}" for k in range(len(self.z_nets))]

    def tensor_items(self):
        """(name, array) pairs in flatten order; the wire naming of archives."""
        items = []
        if self.mode == "general_xi":
            items.extend(_mlp_items("psi0", self.y0_net))
        else:
            items.append(("y0", np.array([self.y0], dtype=np.float64)))
            items.append(("z0", np.asarray(self.z0, dtype=np.float64)))
        for label, net in zip(self._z_net_labels(), self.z_nets):
            items.extend(_mlp_items(label, net))
        return items


def _mlp_items(prefix, params):
    out = []
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        out.append((f"{prefix}.layer_{k}.weight", w))
        out.append((f"{prefix}.layer_{k}.bias", b))
    return out


def param_count(bank):
    return sum(arr.size for _, arr in bank.tensor_items())


def flatten_params(bank):
    """All trainable scalars as one float64 vector, in the documented order."""
    return np.concatenate([np.asarray(arr, dtype=np.float64).ravel() for _, arr in bank.tensor_items()])


def unflatten_params(template, vector):
    """Inverse of flatten_params against a structurally identical bank."""
    vector = np.asarray(vector, dtype=np.float64)
    expected = param_count(template)
    if vector.ndim != 1 or vector.size != expected:
        raise ShapeError(f"expected a flat vector of {expected} entries, got shape {vector.shape}")

    offset = 0

    def take(shape):
        nonlocal offset
        size = int(np.prod(shape))
        chunk = vector[offset:offset + size].reshape(shape).copy()
        offset += size
        return chunk

    kwargs = dict(mode=template.mode, sharing=template.sharing,
                  d=template.d, num_steps=template.num_steps)
    if template.mode == "general_xi":
        kwargs["y0_net"] = _take_mlp_interleaved(template.y0_net, take)
    else:
        kwargs["y0"] = float(take((1,))[0])
        kwargs["z0"] = take((template.d,))
    kwargs["z_nets"] = [_take_mlp_interleaved(net, take) for net in template.z_nets]
    return SubnetBank(**kwargs)


def _take_mlp_interleaved(params, take):
    weights, biases = [], []
    for w, b in zip(params.weights, params.biases):
        weights.append(take(w.shape))
        biases.append(take(b.shape))
    return MLPParams(params.config, weights, biases)
