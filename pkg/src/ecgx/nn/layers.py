"""Layer modules and construction from an architecture descriptor.

A descriptor is a list of plain dicts, e.g.
``{"layer": "conv1d", "in_channels": 1, "out_channels": 16, "kernel_size": 5, "padding": 2}``,
so it serializes to JSON inside a model bundle.
"""

from __future__ import annotations

from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np

from ..errors import ShapeMismatch
from . import functional as F
from .tensor import Tensor, parameter


class Module:
    training = True

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        return iter(())

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        return iter(())

    def children(self) -> List["Module"]:
        return []

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for child in self.children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        missing = (set(params) | set(buffers)) - set(state)
        if missing:
            raise KeyError(f"state is missing {sorted(missing)}")
        for name, p in params.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ValueError(f"{name}: shape {value.shape} != {p.shape}")
            p.data = value.astype(p.dtype, copy=True)
        for name, b in buffers.items():
            b[...] = state[name]

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)


class Conv1d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, padding=0, stride=1, rng=None,
                 init="kaiming", dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        fan_in = in_channels * kernel_size
        fan_out = out_channels * kernel_size
        bound = _init_bound(init, fan_in, fan_out)
        self.weight = parameter(rng.uniform(-bound, bound, (out_channels, in_channels, kernel_size)).astype(dtype))
        self.bias = parameter(np.zeros(out_channels, dtype=dtype))
        self.padding = padding
        self.stride = stride

    def named_parameters(self, prefix=""):
        yield prefix + "weight", self.weight
        yield prefix + "bias", self.bias

    def forward(self, x):
        return F.conv1d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class Dense(Module):
    def __init__(self, in_features, out_features, rng=None, init="kaiming", dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        bound = _init_bound(init, in_features, out_features)
        self.weight = parameter(rng.uniform(-bound, bound, (out_features, in_features)).astype(dtype))
        self.bias = parameter(np.zeros(out_features, dtype=dtype))

    def named_parameters(self, prefix=""):
        yield prefix + "weight", self.weight
        yield prefix + "bias", self.bias

    def forward(self, x):
        return F.dense(x, self.weight, self.bias)


class BatchNorm1d(Module):
    def __init__(self, num_features, dtype=np.float32):
        self.gamma = parameter(np.ones(num_features, dtype=dtype))
        self.beta = parameter(np.zeros(num_features, dtype=dtype))
        self.running_mean = np.zeros(num_features, dtype=np.float32)
        self.running_var = np.ones(num_features, dtype=np.float32)

    def named_parameters(self, prefix=""):
        yield prefix + "gamma", self.gamma
        yield prefix + "beta", self.beta

    def named_buffers(self, prefix=""):
        yield prefix + "running_mean", self.running_mean
        yield prefix + "running_var", self.running_var

    def forward(self, x):
        return F.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var, self.training)


class ReLU(Module):
    def forward(self, x):
        return F.relu(x)


class Sigmoid(Module):
    def forward(self, x):
        return F.sigmoid(x)


class Softmax(Module):
    def forward(self, x):
        return F.softmax(x)


class Flatten(Module):
    def forward(self, x):
        return F.flatten(x)


class MaxPool1d(Module):
    def __init__(self, width=2):
        self.width = width

    def forward(self, x):
        return F.max_pool1d(x, self.width)


class Upsample(Module):
    def __init__(self, factor=2):
        self.factor = factor

    def forward(self, x):
        return F.upsample_nearest(x, self.factor)


class Sequential(Module):
    def __init__(self, layers: Sequence[Module]):
        self.layers = list(layers)

    def children(self):
        return self.layers

    def named_parameters(self, prefix=""):
        for i, layer in enumerate(self.layers):
            yield from layer.named_parameters(f"{prefix}{i}.")

    def named_buffers(self, prefix=""):
        for i, layer in enumerate(self.layers):
            yield from layer.named_buffers(f"{prefix}{i}.")

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, i):
        return self.layers[i]


class ModuleGroup(Module):
    """Named sub-networks; parameter names are prefixed with the member name."""

    def __init__(self, **members: Module):
        self.members = dict(members)

    def __getattr__(self, name):
        members = self.__dict__.get("members", {})
        if name in members:
            return members[name]
        raise AttributeError(name)

    def children(self):
        return list(self.members.values())

    def named_parameters(self, prefix=""):
        for name, member in self.members.items():
            yield from member.named_parameters(f"{prefix}{name}.")

    def named_buffers(self, prefix=""):
        for name, member in self.members.items():
            yield from member.named_buffers(f"{prefix}{name}.")


def _init_bound(init: str, fan_in: int, fan_out: int) -> float:
    if init == "kaiming":
        return float(np.sqrt(6.0 / fan_in))
    if init == "glorot":
        return float(np.sqrt(6.0 / (fan_in + fan_out)))
    raise ValueError(f"unknown init {init!r}")


def _feeds_relu(descriptor: Sequence[dict], i: int) -> bool:
    for spec in descriptor[i + 1 :]:
        if spec["layer"] == "batchnorm":
            continue
        return spec["layer"] == "relu"
    return False


def build_network(descriptor: Sequence[dict], rng: np.random.Generator | None = None,
                  dtype=np.float32) -> Sequential:
    """Instantiate a :class:`Sequential` from a descriptor.

    Conv and dense layers whose output (after an optional batch norm) goes
    through a ReLU get Kaiming-uniform weights, the rest Glorot-uniform.
    Biases start at zero, batch-norm scale at one and shift at zero.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    layers: List[Module] = []
    for i, spec in enumerate(descriptor):
        kind = spec["layer"]
        init = "kaiming" if _feeds_relu(descriptor, i) else "glorot"
        if kind == "conv1d":
            layers.append(
                Conv1d(spec["in_channels"], spec["out_channels"], spec["kernel_size"],
                       padding=spec.get("padding", 0), stride=spec.get("stride", 1),
                       rng=rng, init=init, dtype=dtype)
            )
        elif kind == "dense":
            layers.append(Dense(spec["in_features"], spec["out_features"], rng=rng, init=init, dtype=dtype))
        elif kind == "batchnorm":
            layers.append(BatchNorm1d(spec["num_features"], dtype=dtype))
        elif kind == "relu":
            layers.append(ReLU())
        elif kind == "maxpool":
            layers.append(MaxPool1d(spec.get("width", 2)))
        elif kind == "upsample":
            layers.append(Upsample(spec.get("factor", 2)))
        elif kind == "flatten":
            layers.append(Flatten())
        elif kind == "sigmoid":
            layers.append(Sigmoid())
        elif kind == "softmax":
            layers.append(Softmax())
        else:
            raise ValueError(f"unknown layer type {kind!r}")
    return Sequential(layers)


def count_parameters(descriptor: Sequence[dict]) -> int:
    """Number of trainable scalars implied by ``descriptor``."""
    total = 0
    for spec in descriptor:
        kind = spec["layer"]
        if kind == "conv1d":
            total += spec["out_channels"] * (spec["in_channels"] * spec["kernel_size"] + 1)
        elif kind == "dense":
            total += spec["out_features"] * (spec["in_features"] + 1)
        elif kind == "batchnorm":
            total += 2 * spec["num_features"]
    return total


def output_shape(descriptor: Sequence[dict], input_shape: Tuple[int, ...]) -> Tuple[int, ...]:
    """Per-sample output shape of ``descriptor`` for ``input_shape`` (no batch axis)."""
    return trace_shapes(descriptor, input_shape)[-1]


def trace_shapes(descriptor: Sequence[dict], input_shape: Tuple[int, ...]) -> List[Tuple[int, ...]]:
    """Shapes before the first layer and after every layer; raises on inconsistency."""
    shape = tuple(input_shape)
    shapes = [shape]
    for i, spec in enumerate(descriptor):
        kind = spec["layer"]
        if kind == "conv1d":
            if len(shape) != 2 or shape[0] != spec["in_channels"]:
                raise ShapeMismatch(f"layer {i} (conv1d) expects {spec['in_channels']} channels, got {shape}")
            length = (shape[1] + 2 * spec.get("padding", 0) - spec["kernel_size"]) // spec.get("stride", 1) + 1
            if length < 1:
                raise ShapeMismatch(f"layer {i} (conv1d) produces empty output from {shape}")
            shape = (spec["out_channels"], length)
        elif kind == "dense":
            if len(shape) != 1 or shape[0] != spec["in_features"]:
                raise ShapeMismatch(f"layer {i} (dense) expects {spec['in_features']} features, got {shape}")
            shape = (spec["out_features"],)
        elif kind == "batchnorm":
            if shape[0] != spec["num_features"]:
                raise ShapeMismatch(f"layer {i} (batchnorm) expects {spec['num_features']} channels, got {shape}")
        elif kind == "maxpool":
            shape = (shape[0], shape[1] // spec.get("width", 2))
            if shape[1] < 1:
                raise ShapeMismatch(f"layer {i} (maxpool) produces empty output")
        elif kind == "upsample":
            shape = (shape[0], shape[1] * spec.get("factor", 2))
        elif kind == "flatten":
            shape = (int(np.prod(shape)),)
        elif kind not in ("relu", "sigmoid", "softmax"):
            raise ValueError(f"unknown layer type {kind!r}")
        shapes.append(shape)
    return shapes
