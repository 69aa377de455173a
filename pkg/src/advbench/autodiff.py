"""Dense-tensor computation graphs with reverse-mode differentiation.

Tensors are float64 numpy arrays in C order.  A Graph is an immutable,
topologically ordered list of primitive nodes over named leaves ("input"
and "param"); evaluate() runs the forward pass, gradient() the backward
pass for a scalar output.  Every node's output is checked finite, so NaN
or Inf surfaces as a NonFiniteError naming the node instead of propagating.

Primitives: add, subtract, multiply, matmul, conv2d (valid padding, stride
1), relu, tanh, reshape, sum, mean, max_over_axis, softmax,
softmax_cross_entropy, clip.  Subgradient conventions: relu is 0 at 0,
clip is 0 on the boundary, max routes ties to the first maximal index.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import backend
from .errors import AdvbenchError, NonFiniteError, ShapeError

LEAF_OPS = ("input", "param")


@dataclass(frozen=True)
class Node:
    op: str
    args: tuple = ()
    attrs: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Graph:
    """Immutable operation list; node args always point to earlier nodes."""

    nodes: tuple
    output: int

    @property
    def leaf_names(self):
        return {n.attrs["name"]: i for i, n in enumerate(self.nodes) if n.op in LEAF_OPS}

    def input_names(self):
        return [n.attrs["name"] for n in self.nodes if n.op == "input"]

    def param_names(self):
        return [n.attrs["name"] for n in self.nodes if n.op == "param"]


class GraphBuilder:
    """Accumulates nodes; methods return node ids usable as later arguments.

    extend(graph) starts from an existing graph's nodes, so loss heads can
    be appended to a prediction graph without rebuilding it.
    """

    def __init__(self):
        self._nodes = []
        self._names = set()

    @classmethod
    def extend(cls, graph: Graph) -> "GraphBuilder":
        b = cls()
        b._nodes = list(graph.nodes)
        b._names = set(graph.leaf_names)
        return b

    def _leaf(self, op, name):
        if name in self._names:
            raise AdvbenchError(f"duplicate leaf name {name!r}")
        self._names.add(name)
        self._nodes.append(Node(op, (), {"name": name}))
        return len(self._nodes) - 1

    def _node(self, op, *args, **attrs):
        for a in args:
            if not 0 <= a < len(self._nodes):
                raise AdvbenchError(f"{op}: argument {a} is not an existing node")
        self._nodes.append(Node(op, tuple(args), attrs))
        return len(self._nodes) - 1

    def input(self, name):
        return self._leaf("input", name)

    def param(self, name):
        return self._leaf("param", name)

    def add(self, a, b):
        return self._node("add", a, b)

    def subtract(self, a, b):
        return self._node("subtract", a, b)

    def multiply(self, a, b):
        return self._node("multiply", a, b)

    def matmul(self, a, b):
        return self._node("matmul", a, b)

    def conv2d(self, x, w):
        return self._node("conv2d", x, w)

    def relu(self, x):
        return self._node("relu", x)

    def tanh(self, x):
        return self._node("tanh", x)

    def reshape(self, x, shape):
        return self._node("reshape", x, shape=tuple(shape))

    def sum(self, x):
        return self._node("sum", x)

    def mean(self, x):
        return self._node("mean", x)

    def max_over_axis(self, x, axis):
        return self._node("max_over_axis", x, axis=int(axis))

    def softmax(self, x):
        return self._node("softmax", x)

    def softmax_cross_entropy(self, logits, targets):
        return self._node("softmax_cross_entropy", logits, targets)

    def clip(self, x, lo, hi):
        return self._node("clip", x, lo=float(lo), hi=float(hi))

    def build(self, output=None) -> Graph:
        if not self._nodes:
            raise AdvbenchError("empty graph")
        out = len(self._nodes) - 1 if output is None else output
        return Graph(tuple(self._nodes), out)


def _err(i, node, msg):
    return ShapeError(f"node {i} ({node.op}): {msg}")


def _broadcastable(sa, sb):
    try:
        return np.broadcast_shapes(sa, sb)
    except ValueError:
        return None


def _resolve_reshape(shape, size):
    shape = list(shape)
    if shape.count(-1) > 1:
        return None
    if -1 in shape:
        rest = int(np.prod([s for s in shape if s != -1], dtype=np.int64))
        if rest == 0 or size % rest != 0:
            return None
        shape[shape.index(-1)] = size // rest
    if int(np.prod(shape, dtype=np.int64)) != size:
        return None
    return tuple(shape)


def _check_shapes(graph, shapes_of_leaves):
    """Symbolic forward pass over shapes; raises ShapeError on the first violation."""
    shapes = [None] * len(graph.nodes)
    for i, node in enumerate(graph.nodes):
        a = [shapes[j] for j in node.args]
        if node.op in LEAF_OPS:
            shapes[i] = shapes_of_leaves[node.attrs["name"]]
        elif node.op in ("add", "subtract", "multiply"):
            out = _broadcastable(a[0], a[1])
            if out is None:
                raise _err(i, node, f"cannot broadcast {a[0]} with {a[1]}")
            shapes[i] = out
        elif node.op == "matmul":
            if len(a[0]) != 2 or len(a[1]) != 2 or a[0][1] != a[1][0]:
                raise _err(i, node, f"matmul needs (n,m) x (m,k), got {a[0]} x {a[1]}")
            shapes[i] = (a[0][0], a[1][1])
        elif node.op == "conv2d":
            xs, ws = a
            if len(xs) != 4 or len(ws) != 4:
                raise _err(i, node, f"conv2d needs 4-d input and weights, got {xs}, {ws}")
            if xs[1] != ws[1]:
                raise _err(i, node, f"channel mismatch: input {xs[1]}, weights {ws[1]}")
            if ws[2] > xs[2] or ws[3] > xs[3]:
                raise _err(i, node, f"kernel {ws[2:]} larger than image {xs[2:]}")
            shapes[i] = (xs[0], ws[0], xs[2] - ws[2] + 1, xs[3] - ws[3] + 1)
        elif node.op in ("relu", "tanh", "clip"):
            shapes[i] = a[0]
        elif node.op == "softmax":
            if len(a[0]) < 1:
                raise _err(i, node, "softmax needs at least 1 axis")
            shapes[i] = a[0]
        elif node.op == "reshape":
            out = _resolve_reshape(node.attrs["shape"], int(np.prod(a[0], dtype=np.int64)))
            if out is None:
                raise _err(i, node, f"cannot reshape {a[0]} to {node.attrs['shape']}")
            shapes[i] = out
        elif node.op in ("sum", "mean"):
            shapes[i] = ()
        elif node.op == "max_over_axis":
            ax = node.attrs["axis"]
            if not -len(a[0]) <= ax < len(a[0]):
                raise _err(i, node, f"axis {ax} out of range for shape {a[0]}")
            ax %= len(a[0])
            shapes[i] = a[0][:ax] + a[0][ax + 1:]
        elif node.op == "softmax_cross_entropy":
            if len(a[0]) != 2 or a[0] != a[1]:
                raise _err(i, node, f"needs matching (n,k) logits/targets, got {a[0]}, {a[1]}")
            shapes[i] = (a[0][0],)
        else:
            raise AdvbenchError(f"unknown op {node.op!r}")
    return shapes


def _softmax(z):
    e = np.exp(z - np.max(z, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def _forward_node(node, a):
    op = node.op
    if op == "add":
        return a[0] + a[1]
    if op == "subtract":
        return a[0] - a[1]
    if op == "multiply":
        return a[0] * a[1]
    if op == "matmul":
        return a[0] @ a[1]
    if op == "conv2d":
        return backend.conv2d_forward(a[0], a[1])
    if op == "relu":
        return np.maximum(a[0], 0.0)
    if op == "tanh":
        return np.tanh(a[0])
    if op == "reshape":
        return np.reshape(a[0], _resolve_reshape(node.attrs["shape"], a[0].size))
    if op == "sum":
        return np.asarray(np.sum(a[0]))
    if op == "mean":
        return np.asarray(np.mean(a[0]))
    if op == "max_over_axis":
        return np.max(a[0], axis=node.attrs["axis"])
    if op == "softmax":
        return _softmax(a[0])
    if op == "softmax_cross_entropy":
        z, t = a
        m = np.max(z, axis=-1, keepdims=True)
        lse = (m + np.log(np.sum(np.exp(z - m), axis=-1, keepdims=True)))[:, 0]
        return lse - np.sum(t * z, axis=-1)
    if op == "clip":
        return np.clip(a[0], node.attrs["lo"], node.attrs["hi"])
    raise AdvbenchError(f"unknown op {op!r}")


def _unbroadcast(g, shape):
    """Reduce a broadcasted gradient back to the operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _backward_node(node, a, out, g):
    op = node.op
    if op == "add":
        return (_unbroadcast(g, a[0].shape), _unbroadcast(g, a[1].shape))
    if op == "subtract":
        return (_unbroadcast(g, a[0].shape), _unbroadcast(-g, a[1].shape))
    if op == "multiply":
        return (_unbroadcast(g * a[1], a[0].shape), _unbroadcast(g * a[0], a[1].shape))
    if op == "matmul":
        return (g @ a[1].T, a[0].T @ g)
    if op == "conv2d":
        return (
            backend.conv2d_grad_input(np.ascontiguousarray(g), a[1]),
            backend.conv2d_grad_weights(a[0], np.ascontiguousarray(g)),
        )
    if op == "relu":
        return (g * (a[0] > 0.0),)
    if op == "tanh":
        return (g * (1.0 - out * out),)
    if op == "reshape":
        return (g.reshape(a[0].shape),)
    if op == "sum":
        return (np.broadcast_to(g, a[0].shape).copy(),)
    if op == "mean":
        return (np.broadcast_to(g / a[0].size, a[0].shape).copy(),)
    if op == "max_over_axis":
        ax = node.attrs["axis"] % a[0].ndim
        idx = np.expand_dims(np.argmax(a[0], axis=ax), ax)
        gx = np.zeros_like(a[0])
        np.put_along_axis(gx, idx, np.expand_dims(g, ax), axis=ax)
        return (gx,)
    if op == "softmax":
        dot = np.sum(g * out, axis=-1, keepdims=True)
        return ((g - dot) * out,)
    if op == "softmax_cross_entropy":
        z, t = a
        gz = g[:, None] * (_softmax(z) - t)
        gt = g[:, None] * -z
        return (gz, gt)
    if op == "clip":
        interior = (a[0] > node.attrs["lo"]) & (a[0] < node.attrs["hi"])
        return (g * interior,)
    raise AdvbenchError(f"unknown op {op!r}")


def _bind(graph, bindings):
    values = {}
    for name in graph.leaf_names:
        if name not in bindings:
            raise AdvbenchError(f"no binding for leaf {name!r}")
        v = np.asarray(bindings[name], dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise NonFiniteError(f"binding for leaf {name!r} contains NaN/Inf")
        values[name] = v
    return values


def _run_forward(graph, bindings):
    leaves = _bind(graph, bindings)
    _check_shapes(graph, {k: v.shape for k, v in leaves.items()})
    values = [None] * len(graph.nodes)
    for i, node in enumerate(graph.nodes):
        if node.op in LEAF_OPS:
            values[i] = leaves[node.attrs["name"]]
            continue
        values[i] = _forward_node(node, [values[j] for j in node.args])
        if not np.all(np.isfinite(values[i])):
            raise NonFiniteError(f"node {i} ({node.op}) produced non-finite values")
    return values


def evaluate(graph: Graph, bindings: dict) -> np.ndarray:
    """Value of the graph's output node under the given leaf bindings."""
    return _run_forward(graph, bindings)[graph.output]


def gradients(graph: Graph, bindings: dict, wrt: list) -> dict:
    """d(output)/d(leaf) for several leaves from one forward/backward pass.

    The output must be scalar (size 1).  Leaves the output does not depend
    on get zero gradients.
    """
    names = graph.leaf_names
    for name in wrt:
        if name not in names:
            raise AdvbenchError(f"unknown leaf {name!r}")
    values = _run_forward(graph, bindings)
    out = values[graph.output]
    if out.size != 1:
        raise ShapeError(f"gradient needs a scalar output, got shape {out.shape}")

    adjoints = [None] * len(graph.nodes)
    adjoints[graph.output] = np.ones_like(out)
    for i in range(graph.output, -1, -1):
        node, g = graph.nodes[i], adjoints[i]
        if g is None or node.op in LEAF_OPS:
            continue
        contribs = _backward_node(node, [values[j] for j in node.args], values[i], g)
        for j, contrib in zip(node.args, contribs):
            if adjoints[j] is None:
                adjoints[j] = np.zeros_like(values[j])
            adjoints[j] = adjoints[j] + contrib

    result = {}
    for name in wrt:
        i = names[name]
        result[name] = adjoints[i] if adjoints[i] is not None else np.zeros_like(values[i])
    return result


def gradient(graph: Graph, bindings: dict, wrt: str) -> np.ndarray:
    """d(output)/d(wrt) for one named leaf; see gradients()."""
    return gradients(graph, bindings, [wrt])[wrt]


@dataclass(frozen=True)
class AdamState:
    """Bias-corrected Adam state; one moment pair per parameter name."""

    first_moment: dict
    second_moment: dict
    step_count: int = 0
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise AdvbenchError("adam betas must lie in [0, 1)")
        if self.learning_rate <= 0.0 or self.eps_hat <= 0.0:
            raise AdvbenchError("adam learning_rate and eps_hat must be positive")


def init_adam(parameters: dict, learning_rate=1e-2, beta1=0.9, beta2=0.999,
              eps_hat=1e-8) -> AdamState:
    zeros = {k: np.zeros_like(np.asarray(v)) for k, v in parameters.items()}
    return AdamState({k: v.copy() for k, v in zeros.items()}, zeros,
                     0, learning_rate, beta1, beta2, eps_hat)


def adam_step(state: AdamState, grads: dict, parameters: dict):
    """One Adam update; returns (new_parameters, new_state), inputs untouched."""
    unknown = set(grads) - set(parameters)
    if unknown:
        raise AdvbenchError(f"gradients for unknown parameters: {sorted(unknown)}")
    t = state.step_count + 1
    new_params, m_new, v_new = dict(parameters), dict(state.first_moment), dict(state.second_moment)
    for name, g in grads.items():
        p = np.asarray(parameters[name], dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        m = state.beta1 * state.first_moment[name] + (1.0 - state.beta1) * g
        v = state.beta2 * state.second_moment[name] + (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        new_params[name] = p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps_hat)
        m_new[name], v_new[name] = m, v
    return new_params, replace(state, first_moment=m_new, second_moment=v_new, step_count=t)
