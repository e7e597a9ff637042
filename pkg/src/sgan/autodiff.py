"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Graph` is an append-only list of nodes, so node ids are already a
topological order. Leaves are either free inputs (data) or parameters; both
are bound by name when calling :func:`evaluate`. Evaluation returns a
:class:`Trace` holding every intermediate value, and :func:`backward` walks
the trace in reverse to produce gradients for every leaf.

Example::

    g = Graph()
    x = g.input("x", (None, 2))
    w = g.param("w", (2, 1))
    y = g.mean(g.sigmoid(g.matmul(x, w)))
    g.output("y", y)
    tr = evaluate(g, {"x": X, "w": W})
    grads = backward(tr, "y")
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

OPS = (
    "input",
    "param",
    "matmul",
    "add_bias",
    "tanh",
    "leaky_relu",
    "sigmoid",
    "log",
    "mean",
    "sum",
    "scalar_affine",
    "batchnorm",
)

LOG_CLAMP = (1e-7, 1.0)
BN_EPS = 1e-5


class ShapeError(ValueError):
    pass


class UnboundInputError(KeyError):
    pass


class DomainError(ValueError):
    pass


class BackwardError(RuntimeError):
    pass


@dataclass(frozen=True)
class Node:
    op: str
    inputs: tuple[int, ...] = ()
    attrs: tuple = ()
    name: str | None = None
    shape: tuple | None = None


@dataclass
class Graph:
    nodes: list[Node] = field(default_factory=list)
    outputs: dict[str, int] = field(default_factory=dict)

    def _add(self, node: Node) -> int:
        for i in node.inputs:
            if not 0 <= i < len(self.nodes):
                raise ValueError(f"node input {i} does not precede node {len(self.nodes)}")
        self.nodes.append(node)
        return len(self.nodes) - 1

    # leaves
    def input(self, name: str, shape: tuple) -> int:
        return self._add(Node("input", name=name, shape=tuple(shape)))

    def param(self, name: str, shape: tuple) -> int:
        return self._add(Node("param", name=name, shape=tuple(shape)))

    # ops
    def matmul(self, x: int, w: int) -> int:
        return self._add(Node("matmul", (x, w)))

    def add_bias(self, x: int, b: int) -> int:
        return self._add(Node("add_bias", (x, b)))

    def tanh(self, x: int) -> int:
        return self._add(Node("tanh", (x,)))

    def leaky_relu(self, x: int, slope: float = 0.2) -> int:
        return self._add(Node("leaky_relu", (x,), (float(slope),)))

    def sigmoid(self, x: int) -> int:
        return self._add(Node("sigmoid", (x,)))

    def log(self, x: int, clamp: tuple[float, float] | None = LOG_CLAMP) -> int:
        """Natural log. With ``clamp=None`` a non-positive input raises."""
        attrs = () if clamp is None else (float(clamp[0]), float(clamp[1]))
        return self._add(Node("log", (x,), attrs))

    def mean(self, x: int) -> int:
        return self._add(Node("mean", (x,)))

    def sum(self, *xs: int) -> int:
        """Elementwise sum of equally shaped nodes."""
        if not xs:
            raise ValueError("sum needs at least one operand")
        return self._add(Node("sum", tuple(xs)))

    def scalar_affine(self, x: int, scale: float, shift: float = 0.0) -> int:
        return self._add(Node("scalar_affine", (x,), (float(scale), float(shift))))

    def batchnorm(self, x: int, eps: float = BN_EPS) -> int:
        return self._add(Node("batchnorm", (x,), (float(eps),)))

    def output(self, name: str, node: int) -> int:
        self.outputs[name] = node
        return node

    @property
    def params(self) -> dict[str, Node]:
        return {n.name: n for n in self.nodes if n.op == "param"}

    @property
    def free_inputs(self) -> dict[str, Node]:
        return {n.name: n for n in self.nodes if n.op == "input"}


@dataclass
class Trace:
    """Forward values of one evaluation, needed by :func:`backward`."""

    graph: Graph
    values: list
    cache: dict

    @property
    def outputs(self) -> dict[str, np.ndarray]:
        return {k: self.values[i] for k, i in self.graph.outputs.items()}

    def __getitem__(self, name: str):
        return self.values[self.graph.outputs[name]]


def _check_leaf(node: Node, value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if node.shape is not None:
        if arr.ndim != len(node.shape) or any(
            d is not None and d != a for d, a in zip(node.shape, arr.shape)
        ):
            raise ShapeError(f"{node.op} '{node.name}' expects shape {node.shape}, got {arr.shape}")
    return arr


def evaluate(graph: Graph, inputs: dict) -> Trace:
    """Run the graph forward. ``inputs`` binds every input and param by name."""
    vals: list = [None] * len(graph.nodes)
    cache: dict = {}
    for i, node in enumerate(graph.nodes):
        op = node.op
        if op in ("input", "param"):
            if node.name not in inputs:
                raise UnboundInputError(f"{op} '{node.name}' is not bound")
            vals[i] = _check_leaf(node, inputs[node.name])
            continue
        args = [vals[j] for j in node.inputs]
        x = args[0]
        if op == "matmul":
            w = args[1]
            if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
                raise ShapeError(f"matmul node {i}: {x.shape} @ {w.shape}")
            vals[i] = x @ w
        elif op == "add_bias":
            b = args[1]
            if b.ndim != 1 or x.ndim != 2 or x.shape[1] != b.shape[0]:
                raise ShapeError(f"add_bias node {i}: {x.shape} + {b.shape}")
            vals[i] = x + b
        elif op == "tanh":
            vals[i] = np.tanh(x)
        elif op == "leaky_relu":
            vals[i] = np.where(x > 0, x, node.attrs[0] * x)
        elif op == "sigmoid":
            vals[i] = _sigmoid(x)
        elif op == "log":
            if node.attrs:
                lo, hi = node.attrs
                xc = np.clip(x, lo, hi)
            else:
                if np.any(x <= 0):
                    raise DomainError(f"log node {i}: non-positive input (min {x.min():.3g}); clamp it")
                xc = x
            vals[i] = np.log(xc)
            cache[i] = xc
        elif op == "mean":
            vals[i] = np.asarray(x.mean())
        elif op == "sum":
            for a in args[1:]:
                if a.shape != x.shape:
                    raise ShapeError(f"sum node {i}: {x.shape} vs {a.shape}")
            total = x.copy()
            for a in args[1:]:
                total = total + a
            vals[i] = total
        elif op == "scalar_affine":
            a, b = node.attrs
            vals[i] = a * x + b
        elif op == "batchnorm":
            if x.ndim != 2:
                raise ShapeError(f"batchnorm node {i} expects a 2-D batch, got {x.shape}")
            mu = x.mean(axis=0)
            var = ((x - mu) ** 2).mean(axis=0)
            inv = 1.0 / np.sqrt(var + node.attrs[0])
            xhat = (x - mu) * inv
            cache[i] = (xhat, inv)
            vals[i] = xhat
        else:
            raise ValueError(f"unknown op {op!r}")
    return Trace(graph, vals, cache)


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def backward(trace: Trace, output, seed=1.0, wrt=None) -> dict[str, np.ndarray]:
    """Gradients of ``sum(seed * output)`` with respect to every leaf.

    ``output`` is an output name or node id. The result maps each input and
    param name to an array of its shape; leaves the output does not depend
    on get zeros. ``wrt`` restricts the work (and the result) to the named
    leaves.
    """
    if not isinstance(trace, Trace):
        raise BackwardError("backward called before forward: pass the Trace returned by evaluate()")
    graph, vals = trace.graph, trace.values
    out_id = graph.outputs[output] if isinstance(output, str) else int(output)
    live = [True] * len(graph.nodes)
    if wrt is not None:
        wanted = set(wrt)
        for i, node in enumerate(graph.nodes):
            if node.op in ("input", "param"):
                live[i] = node.name in wanted
            else:
                live[i] = any(live[j] for j in node.inputs)
    adj: list = [None] * len(graph.nodes)
    adj[out_id] = np.broadcast_to(np.asarray(seed, dtype=np.float64), vals[out_id].shape).copy()

    def acc(j, g):
        adj[j] = g if adj[j] is None else adj[j] + g

    for i in range(out_id, -1, -1):
        g = adj[i]
        node = graph.nodes[i]
        if g is None or not live[i] or node.op in ("input", "param"):
            continue
        ins = node.inputs
        op = node.op
        if op == "matmul":
            x, w = vals[ins[0]], vals[ins[1]]
            if live[ins[0]]:
                acc(ins[0], g @ w.T)
            if live[ins[1]]:
                acc(ins[1], x.T @ g)
        elif op == "add_bias":
            acc(ins[0], g)
            if live[ins[1]]:
                acc(ins[1], g.sum(axis=0))
        elif op == "tanh":
            acc(ins[0], g * (1.0 - vals[i] ** 2))
        elif op == "leaky_relu":
            acc(ins[0], np.where(vals[ins[0]] > 0, g, node.attrs[0] * g))
        elif op == "sigmoid":
            s = vals[i]
            acc(ins[0], g * s * (1.0 - s))
        elif op == "log":
            xc = trace.cache[i]
            dx = g / xc
            if node.attrs:
                x = vals[ins[0]]
                lo, hi = node.attrs
                dx = np.where((x >= lo) & (x <= hi), dx, 0.0)
            acc(ins[0], dx)
        elif op == "mean":
            x = vals[ins[0]]
            acc(ins[0], np.full(x.shape, float(g) / x.size))
        elif op == "sum":
            for j in ins:
                if live[j]:
                    acc(j, g)
        elif op == "scalar_affine":
            acc(ins[0], node.attrs[0] * g)
        elif op == "batchnorm":
            xhat, inv = trace.cache[i]
            n = xhat.shape[0]
            dx = inv / n * (n * g - g.sum(axis=0) - xhat * (g * xhat).sum(axis=0))
            acc(ins[0], dx)

    grads = {}
    for j, node in enumerate(graph.nodes):
        if node.op in ("input", "param") and (wrt is None or node.name in wanted):
            grads[node.name] = adj[j] if adj[j] is not None else np.zeros_like(vals[j])
    return grads


@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    worst: str | None = None


def grad_check(graph: Graph, inputs: dict, output, tolerance: float = 1e-5,
               step: float = 1e-5, wrt=None, seed=None) -> GradCheckReport:
    """Compare :func:`backward` with central finite differences.

    The checked scalar is ``sum(seed * output)``; ``seed`` defaults to ones.
    ``wrt`` selects leaf names (default: all params). Relative error per
    entry is ``|ad - fd| / max(1, |ad|, |fd|)``. An entry that misses the
    tolerance is retried with steps 10x and 100x smaller: a stencil that
    straddles a leaky_relu kink is wrong by O(1), a real bug stays wrong.
    """
    inputs = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}
    trace = evaluate(graph, inputs)
    out_id = graph.outputs[output] if isinstance(output, str) else int(output)
    if seed is None:
        seed = np.ones_like(trace.values[out_id])
    seed = np.broadcast_to(np.asarray(seed, dtype=np.float64), trace.values[out_id].shape)
    ad = backward(trace, out_id, seed)
    names = list(graph.params) if wrt is None else list(wrt)

    def f(env):
        return float(np.sum(seed * evaluate(graph, env).values[out_id]))

    worst_err, worst = 0.0, None
    for name in names:
        base = inputs[name]
        flat = base.reshape(-1)
        g_ad = ad[name].reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            err = math.inf
            for h in (step, step / 10, step / 100):
                flat[k] = orig + h
                fp = f(inputs)
                flat[k] = orig - h
                fm = f(inputs)
                flat[k] = orig
                fd = (fp - fm) / (2 * h)
                err = min(err, abs(g_ad[k] - fd) / max(1.0, abs(g_ad[k]), abs(fd)))
                if err < tolerance:
                    break
            if err > worst_err:
                worst_err, worst = err, f"{name}[{k}]"
    return GradCheckReport(worst_err, bool(worst_err < tolerance), worst)
