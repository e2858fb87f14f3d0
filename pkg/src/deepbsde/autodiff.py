"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tape records operations as they execute and `backward` sweeps the records
in reverse, accumulating adjoints. Node ids grow monotonically, so the tape
is already topologically sorted and the reverse sweep is a single loop. A
fresh tape is built for every training step (each step sees newly simulated
paths), so there is no graph caching or reuse machinery.

Tapes are single-threaded by contract: never share one across threads.
"""

import numpy as np

from .errors import ConfigError, NumericError, ShapeError

ACTIVATION_KINDS = ("tanh", "relu", "identity")


class Node:
    """One recorded operation: kind, input ids, cached value, adjoint slot."""

    __slots__ = ("op", "inputs", "value", "aux", "adjoint", "name")

    def __init__(self, op, inputs, value, aux=None, name=None):
        self.op = op
        self.inputs = inputs
        self.value = value
        self.aux = aux
        self.adjoint = None
        self.name = name


class Var:
    """Handle to one tape node.

    Carries just enough operator support (+, -, unary -, * by scalars and
    elementwise by other Vars) that PDE driver callbacks written against
    plain numpy arrays also work when handed tape variables.
    """

    __slots__ = ("tape", "id")

    def __init__(self, tape, id):
        self.tape = tape
        self.id = id

    @property
    def value(self):
        return self.tape.nodes[self.id].value

    @property
    def shape(self):
        return self.tape.nodes[self.id].value.shape

    def _lift(self, other):
        if isinstance(other, Var):
            if other.tape is not self.tape:
                raise ShapeError("cannot combine variables from different tapes")
            return other
        arr = np.broadcast_to(np.asarray(other, dtype=np.float64), self.shape)
        return self.tape.constant(arr)

    def __add__(self, other):
        return record_linear_combination(self.tape, [(1.0, self), (1.0, self._lift(other))])

    __radd__ = __add__

    def __sub__(self, other):
        return record_linear_combination(self.tape, [(1.0, self), (-1.0, self._lift(other))])

    def __rsub__(self, other):
        return record_linear_combination(self.tape, [(-1.0, self), (1.0, self._lift(other))])

    def __neg__(self):
        return record_linear_combination(self.tape, [(-1.0, self)])

    def __mul__(self, other):
        if isinstance(other, Var) or isinstance(other, np.ndarray):
            return record_pointwise_mul(self.tape, self, self._lift(other))
        return record_linear_combination(self.tape, [(float(other), self)])

    __rmul__ = __mul__

    def __repr__(self):
        return f"Var(id={self.id}, shape={self.shape})"


class Tape:
    """Append-only record of float64 operations.

    Parameter nodes are remembered in creation order (`param_ids`), which is
    what makes gradient flattening deterministic.
    """

    def __init__(self):
        self.nodes = []
        self.param_ids = []

    def _push(self, op, inputs, value, aux=None, name=None):
        value = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            label = name or f"node {len(self.nodes)}"
            raise NumericError(f"non-finite value produced by op '{op}' ({label})")
        self.nodes.append(Node(op, inputs, value, aux, name))
        return Var(self, len(self.nodes) - 1)

    def constant(self, value, name=None):
        """Record a leaf that receives no gradient."""
        return self._push("const", (), value, name=name)

    def parameter(self, value, name=None):
        """Record a trainable leaf; `backward` reports a gradient for it."""
        var = self._push("param", (), value, name=name)
        self.param_ids.append(var.id)
        return var

    def __len__(self):
        return len(self.nodes)


def _check_var(tape, var, who):
    if not isinstance(var, Var) or var.tape is not tape:
        raise ShapeError(f"{who} expects variables recorded on the same tape")
    return tape.nodes[var.id].value


def record_affine(tape, x, w, b):
    """x @ w + b with x [batch, m], w [m, k], b [k]."""
    xv = _check_var(tape, x, "affine")
    wv = _check_var(tape, w, "affine")
    bv = _check_var(tape, b, "affine")
    if xv.ndim != 2 or wv.ndim != 2 or bv.ndim != 1:
        raise ShapeError(
            f"affine expects x [batch,m], w [m,k], b [k]; got {xv.shape}, {wv.shape}, {bv.shape}"
        )
    if xv.shape[1] != wv.shape[0] or wv.shape[1] != bv.shape[0]:
        raise ShapeError(
            f"affine dimension mismatch: x {xv.shape}, w {wv.shape}, b {bv.shape}"
        )
    return tape._push("affine", (x.id, w.id, b.id), xv @ wv + bv)


def record_activation(tape, x, kind):
    """Elementwise activation; relu uses derivative 0 at the kink."""
    if kind not in ACTIVATION_KINDS:
        raise ConfigError(f"unknown activation '{kind}' (expected one of {ACTIVATION_KINDS})")
    xv = _check_var(tape, x, "activation")
    if kind == "tanh":
        out = np.tanh(xv)
    elif kind == "relu":
        out = np.maximum(xv, 0.0)
    else:
        out = xv.copy()
    return tape._push("activation", (x.id,), out, aux=kind)


def record_linear_combination(tape, terms):
    """sum(c_i * v_i) over (coefficient, Var) pairs of identical shape."""
    if not terms:
        raise ShapeError("linear combination needs at least one term")
    coeffs = tuple(float(c) for c, _ in terms)
    values = [_check_var(tape, v, "linear combination") for _, v in terms]
    shape = values[0].shape
    for v in values[1:]:
        if v.shape != shape:
            raise ShapeError(f"linear combination shapes differ: {shape} vs {v.shape}")
    acc = coeffs[0] * values[0]
    for c, v in zip(coeffs[1:], values[1:]):
        acc = acc + c * v
    ids = tuple(v.id for _, v in terms)
    return tape._push("lincomb", ids, acc, aux=coeffs)


def record_dot(tape, a, b):
    """Batchwise inner product: [batch, d] x [batch, d] -> [batch, 1]."""
    av = _check_var(tape, a, "dot")
    bv = _check_var(tape, b, "dot")
    if av.ndim != 2 or av.shape != bv.shape:
        raise ShapeError(f"dot expects matching [batch, d] operands; got {av.shape}, {bv.shape}")
    out = np.sum(av * bv, axis=1, keepdims=True)
    return tape._push("dot", (a.id, b.id), out)


def record_pointwise_mul(tape, a, b):
    """Elementwise product of two same-shape variables."""
    av = _check_var(tape, a, "pointwise mul")
    bv = _check_var(tape, b, "pointwise mul")
    if av.shape != bv.shape:
        raise ShapeError(f"pointwise mul shapes differ: {av.shape} vs {bv.shape}")
    return tape._push("mul", (a.id, b.id), av * bv)


def loss_mse(tape, pred, target):
    """Mean squared error over the batch; the scalar root of every backward pass."""
    pv = _check_var(tape, pred, "mse")
    tv = _check_var(tape, target, "mse")
    if pv.shape != tv.shape:
        raise ShapeError(f"mse shapes differ: {pv.shape} vs {tv.shape}")
    if pv.ndim != 2 or pv.shape[1] != 1:
        raise ShapeError(f"mse expects [batch, 1] columns; got {pv.shape}")
    if pv.shape[0] == 0:
        raise ShapeError("mse over an empty batch")
    return tape._push("mse", (pred.id, target.id), np.mean((pv - tv) ** 2))


def dot(a, b):
    """Batchwise inner product along the last axis, on arrays or tape Vars.

    Driver callbacks use this so one definition serves both the plain-numpy
    evaluation path and the differentiable rollout.
    """
    if isinstance(a, Var) or isinstance(b, Var):
        tape = a.tape if isinstance(a, Var) else b.tape
        av = a if isinstance(a, Var) else tape.constant(np.asarray(a, dtype=np.float64))
        bv = b if isinstance(b, Var) else tape.constant(np.asarray(b, dtype=np.float64))
        return record_dot(tape, av, bv)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.sum(a * b, axis=-1, keepdims=True)


def _accumulate(tape, idx, delta):
    node = tape.nodes[idx]
    if node.adjoint is None:
        node.adjoint = np.zeros_like(node.value)
    node.adjoint += delta


def _propagate(tape, node, g):
    op = node.op
    if op in ("const", "param"):
        return
    if op == "affine":
        xi, wi, bi = node.inputs
        xv = tape.nodes[xi].value
        wv = tape.nodes[wi].value
        _accumulate(tape, xi, g @ wv.T)
        _accumulate(tape, wi, xv.T @ g)
        _accumulate(tape, bi, g.sum(axis=0))
    elif op == "activation":
        (xi,) = node.inputs
        kind = node.aux
        if kind == "tanh":
            _accumulate(tape, xi, g * (1.0 - node.value * node.value))
        elif kind == "relu":
            _accumulate(tape, xi, g * (tape.nodes[xi].value > 0.0))
        else:
            _accumulate(tape, xi, g)
    elif op == "lincomb":
        for coeff, idx in zip(node.aux, node.inputs):
            _accumulate(tape, idx, coeff * g)
    elif op == "dot":
        ai, bi = node.inputs
        av = tape.nodes[ai].value
        bv = tape.nodes[bi].value
        _accumulate(tape, ai, g * bv)
        _accumulate(tape, bi, g * av)
    elif op == "mul":
        ai, bi = node.inputs
        _accumulate(tape, ai, g * tape.nodes[bi].value)
        _accumulate(tape, bi, g * tape.nodes[ai].value)
    elif op == "mse":
        pi, ti = node.inputs
        pv = tape.nodes[pi].value
        tv = tape.nodes[ti].value
        scaled = g * (2.0 / pv.shape[0]) * (pv - tv)
        _accumulate(tape, pi, scaled)
        _accumulate(tape, ti, -scaled)
    else:
        raise ConfigError(f"unknown op kind '{op}'")


def backward(tape, loss):
    """Reverse sweep from `loss`; returns {parameter node id: gradient}.

    Adjoints are cleared first and nodes are visited in strictly decreasing
    id order, so the accumulation order (and hence the result) is
    deterministic. Parameters the loss never touched get exact zeros.
    """
    lv = _check_var(tape, loss, "backward")
    if lv.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {lv.shape}")
    for node in tape.nodes:
        node.adjoint = None
    tape.nodes[loss.id].adjoint = np.ones_like(lv)
    for i in range(loss.id, -1, -1):
        node = tape.nodes[i]
        g = node.adjoint
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            label = node.name or f"node {i}"
            raise NumericError(f"non-finite adjoint at {label} (op '{node.op}')")
        _propagate(tape, node, g)
    grads = {}
    for pid in tape.param_ids:
        node = tape.nodes[pid]
        if node.adjoint is None:
            grads[pid] = np.zeros_like(node.value)
        else:
            grads[pid] = node.adjoint.copy()
    return grads
