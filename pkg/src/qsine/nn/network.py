"""Single-input DAG of named layers.

Nodes are added in topological order; each consumes the network input ("x")
or an earlier node's output, so fan-out (several nodes reading one tensor)
is allowed and the backward pass accumulates gradients at the shared source.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .layers import Layer

INPUT = "x"


@dataclass
class _Node:
    name: str
    layer: Layer
    src: str


class Network:
    def __init__(self):
        self.nodes: list[_Node] = []
        self._names: set[str] = {INPUT}

    def add(self, name: str, layer: Layer, src: str = INPUT) -> str:
        """Appends a named layer reading from src ("x" or an earlier node)."""
        if name in self._names:
            raise ValueError(f"duplicate node name {name!r}")
        if src not in self._names:
            raise ValueError(f"unknown input {src!r} for node {name!r}")
        self.nodes.append(_Node(name, layer, src))
        self._names.add(name)
        return name

    def forward(self, x: np.ndarray, train: bool = False) -> dict[str, np.ndarray]:
        """Runs all nodes; returns every intermediate keyed by node name."""
        values: dict[str, np.ndarray] = {INPUT: x}
        for node in self.nodes:
            values[node.name] = node.layer.forward(values[node.src], train=train)
        return values

    def backward(self, out_grads: dict[str, np.ndarray]) -> np.ndarray:
        """Backpropagates from the given output gradients; returns d loss / d x.

        Nodes that neither receive an entry in out_grads nor feed one that
        does are skipped (their parameter grads stay zero).
        """
        acc: dict[str, np.ndarray | None] = {n.name: None for n in self.nodes}
        acc[INPUT] = None
        for name, g in out_grads.items():
            if name not in acc or name == INPUT:
                raise ValueError(f"unknown output node {name!r}")
            acc[name] = np.array(g, copy=True)
        for node in reversed(self.nodes):
            g = acc[node.name]
            if g is None:
                continue
            dsrc = node.layer.backward(g)
            if acc[node.src] is None:
                acc[node.src] = dsrc
            else:
                acc[node.src] = acc[node.src] + dsrc
        dx = acc[INPUT]
        if dx is None:
            raise ValueError("no gradient reached the network input")
        return dx

    # --- parameter plumbing -------------------------------------------------

    def named_params(self) -> dict[str, np.ndarray]:
        out = {}
        for node in self.nodes:
            for key, val in node.layer.params.items():
                out[f"{node.name}.{key}"] = val
        return out

    def named_grads(self) -> dict[str, np.ndarray]:
        out = {}
        for node in self.nodes:
            for key, val in node.layer.grads.items():
                out[f"{node.name}.{key}"] = val
        return out

    def set_param(self, name: str, value: np.ndarray):
        node_name, key = name.rsplit(".", 1)
        layer = self.get_layer(node_name)
        cur = layer.params[key]
        if cur.shape != value.shape:
            raise ValueError(f"shape mismatch for {name}: {cur.shape} vs {value.shape}")
        layer.params[key] = value.astype(cur.dtype)

    def get_layer(self, name: str) -> Layer:
        for node in self.nodes:
            if node.name == name:
                return node.layer
        raise KeyError(name)

    def zero_grads(self):
        for node in self.nodes:
            node.layer.zero_grads()

    def param_count(self) -> int:
        return sum(v.size for v in self.named_params().values())

    def astype(self, dtype) -> "Network":
        """Deep copy with parameters, buffers and layer dtype cast to dtype."""
        net = copy.deepcopy(self)
        for node in net.nodes:
            node.layer.astype(dtype)
        return net

    def snapshot(self) -> dict[str, np.ndarray]:
        """Copies of all parameters and state buffers (for best-weight restore)."""
        out = {k: v.copy() for k, v in self.named_params().items()}
        for node in self.nodes:
            for key, val in node.layer.state.items():
                out[f"{node.name}.state.{key}"] = val.copy()
        return out

    def restore(self, snap: dict[str, np.ndarray]):
        for node in self.nodes:
            for key in node.layer.params:
                node.layer.params[key] = snap[f"{node.name}.{key}"].copy()
            for key in node.layer.state:
                node.layer.state[key] = snap[f"{node.name}.state.{key}"].copy()
