"""MLP builders, parameter layout/initialisation and the Adam optimizer."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .autodiff import Graph
from .rng import Rng

ACTIVATIONS = ("none", "tanh", "leaky_relu", "sigmoid")
LEAKY_SLOPE = 0.2
INIT_STD = 0.01


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    batchnorm: bool = False
    activation: str = "none"

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError(f"layer dims must be >= 1, got {self.in_dim}->{self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")

    @classmethod
    def from_dict(cls, d) -> "LayerSpec":
        return cls(int(d["in_dim"]), int(d["out_dim"]), bool(d.get("batchnorm", False)),
                   d.get("activation", "none"))


def check_chain(specs) -> None:
    if not specs:
        raise ValueError("an MLP needs at least one layer")
    for k in range(1, len(specs)):
        if specs[k - 1].out_dim != specs[k].in_dim:
            raise ValueError(
                f"layer {k - 1} outputs {specs[k - 1].out_dim} but layer {k} expects {specs[k].in_dim}"
            )


def mlp(dims, batchnorm_hidden=False, hidden="none", last="none") -> list[LayerSpec]:
    """Shorthand: ``mlp([2, 16, 2], True, last="tanh")``."""
    layers = []
    for k in range(len(dims) - 1):
        is_last = k == len(dims) - 2
        layers.append(LayerSpec(dims[k], dims[k + 1],
                                batchnorm=batchnorm_hidden and not is_last,
                                activation=last if is_last else hidden))
    return layers


# Architectures from the hyper-parameter tables. Hidden generator layers are
# Linear + BN with no listed activation, which is reproduced as-is.
ARCHITECTURES = {
    "mog_generator": mlp([2, 16, 2], True, last="tanh"),
    "mog_generator_wide": mlp([2, 128, 2], True, last="tanh"),
    "mog_generator_deep": mlp([2, 128, 256, 512, 1024, 2], True, last="tanh"),
    "mog_discriminator": mlp([2, 512, 256, 1], hidden="leaky_relu", last="sigmoid"),
    "mnist_generator": mlp([100, 512, 784], True, last="tanh"),
    "mnist_discriminator": mlp([784, 512, 256, 1], hidden="leaky_relu", last="sigmoid"),
}


class ParamLayout:
    """Maps layer k to the (W{k}, b{k}) blocks of a flat parameter vector."""

    def __init__(self, specs):
        check_chain(specs)
        self.specs = list(specs)
        self.blocks = []  # (name, shape, start, stop)
        pos = 0
        for k, s in enumerate(self.specs):
            for name, shape in ((f"W{k}", (s.in_dim, s.out_dim)), (f"b{k}", (s.out_dim,))):
                size = int(np.prod(shape))
                self.blocks.append((name, shape, pos, pos + size))
                pos += size
        self.size = pos

    def unflatten(self, vec: np.ndarray, prefix: str = "") -> dict[str, np.ndarray]:
        if vec.shape != (self.size,):
            raise ValueError(f"parameter vector has shape {vec.shape}, layout needs ({self.size},)")
        return {prefix + name: vec[a:b].reshape(shape) for name, shape, a, b in self.blocks}

    def flatten(self, blocks: dict[str, np.ndarray], prefix: str = "") -> np.ndarray:
        return np.concatenate([np.asarray(blocks[prefix + name], dtype=np.float64).reshape(-1)
                               for name, _, _, _ in self.blocks])

    def block_of(self, index: int) -> str:
        for name, _, a, b in self.blocks:
            if a <= index < b:
                return name
        raise IndexError(index)


def build_mlp(specs, graph: Graph | None = None, x: int | None = None, prefix: str = "",
              input_name: str = "x", slope: float = LEAKY_SLOPE) -> tuple[Graph, int]:
    """Append an MLP to ``graph`` (a new one by default). Returns (graph, output node).

    Each layer is matmul -> add_bias -> [batchnorm] -> activation. Params are
    named ``{prefix}W{k}`` and ``{prefix}b{k}``.
    """
    check_chain(specs)
    g = graph if graph is not None else Graph()
    h = x if x is not None else g.input(input_name, (None, specs[0].in_dim))
    for k, s in enumerate(specs):
        w = g.param(f"{prefix}W{k}", (s.in_dim, s.out_dim))
        b = g.param(f"{prefix}b{k}", (s.out_dim,))
        h = g.add_bias(g.matmul(h, w), b)
        if s.batchnorm:
            h = g.batchnorm(h)
        if s.activation == "tanh":
            h = g.tanh(h)
        elif s.activation == "leaky_relu":
            h = g.leaky_relu(h, slope)
        elif s.activation == "sigmoid":
            h = g.sigmoid(h)
    return g, h


def param_count(specs) -> int:
    return ParamLayout(specs).size


def init_params(specs, rng: Rng, std: float = INIT_STD) -> np.ndarray:
    """Weights ~ N(0, std^2), biases exactly 0."""
    layout = ParamLayout(specs)
    vec = np.zeros(layout.size)
    for name, shape, a, b in layout.blocks:
        if name.startswith("W"):
            vec[a:b] = std * rng.normal(b - a)
    return vec


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, **hyper) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0, **hyper)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["m"], d["v"] = self.m.tolist(), self.v.tolist()
        return d

    @classmethod
    def from_dict(cls, d) -> "AdamState":
        return cls(np.array(d["m"], dtype=np.float64), np.array(d["v"], dtype=np.float64),
                   int(d["step"]), float(d["lr"]), float(d["beta1"]), float(d["beta2"]), float(d["eps"]))


class NonFiniteGradient(FloatingPointError):
    pass


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState,
              layout: ParamLayout | None = None) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam descent step. Returns new (params, state)."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}")
    bad = ~np.isfinite(grads)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        where = layout.block_of(k) if layout is not None else f"index {k}"
        raise NonFiniteGradient(f"non-finite gradient in block {where}")
    t = state.step + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grads
    v = state.beta2 * state.v + (1 - state.beta2) * grads * grads
    m_hat = m / (1 - state.beta1 ** t)
    v_hat = v / (1 - state.beta2 ** t)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, replace(state, m=m, v=v, step=t)
