"""Layers, parameter containers, Adam and JSON checkpoints on top of :mod:`dfcopt.autodiff`."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class Params(dict):
    """Ordered name -> Tensor map of trainable parameters."""

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self[name] = t
        return t

    def zero_grad(self) -> None:
        for t in self.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {k: (t.grad if t.grad is not None else np.zeros(t.shape)) for k, t in self.items()}

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: t.value.copy() for k, t in self.items()}

    def load(self, values: dict[str, np.ndarray]) -> None:
        for k, t in self.items():
            v = np.asarray(values[k], dtype=np.float64)
            if v.shape != t.shape:
                raise ad.ShapeError(f"parameter {k!r}: expected {t.shape}, got {v.shape}")
            t.value = v.copy()

    def n_values(self) -> int:
        return int(sum(t.value.size for t in self.values()))


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def dense(x: Tensor, params: Params, prefix: str) -> Tensor:
    return ad.add(ad.matmul(x, params[f"{prefix}.W"]), params[f"{prefix}.b"])


def add_dense(params: Params, prefix: str, fan_in: int, fan_out: int,
              rng: np.random.Generator, gain: float = 1.0) -> None:
    params.add(f"{prefix}.W", gain * glorot(rng, fan_in, fan_out))
    params.add(f"{prefix}.b", np.zeros(fan_out))


def grad_norm(params: Params) -> float:
    return float(np.sqrt(sum(float((t.grad ** 2).sum()) for t in params.values() if t.grad is not None)))


def clip_grad_norm(params: Params, max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``; return the pre-clip norm."""
    norm = grad_norm(params)
    if max_norm > 0 and norm > max_norm:
        factor = max_norm / (norm + 1e-12)
        for t in params.values():
            if t.grad is not None:
                t.grad = t.grad * factor
    return norm


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Params, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update from ``param.grad``; gradients are zeroed afterwards."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros(p.shape)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros(p.shape)
            v = np.zeros(p.shape)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        if lr != 0.0:
            p.value = p.value - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.grad = None


class Adam:
    def __init__(self, params: Params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.state = AdamState(beta1=betas[0], beta2=betas[1], eps=eps)

    def step(self) -> None:
        adam_step(self.params, self.state, self.lr)

    def zero_grad(self) -> None:
        self.params.zero_grad()


# -- checkpoints ------------------------------------------------------------

def params_to_json(params: Params | dict[str, np.ndarray], meta: dict | None = None) -> str:
    items = {}
    for name, t in params.items():
        arr = t.value if isinstance(t, Tensor) else np.asarray(t)
        items[name] = {"shape": list(arr.shape), "values": [float(v) for v in arr.ravel()]}
    return json.dumps({"meta": meta or {}, "params": items})


def params_from_json(text: str) -> tuple[dict[str, np.ndarray], dict]:
    data = json.loads(text)
    out = {name: np.array(item["values"], dtype=np.float64).reshape(item["shape"])
           for name, item in data["params"].items()}
    return out, data.get("meta", {})


def save_checkpoint(path: str | Path, params: Params, meta: dict | None = None) -> None:
    Path(path).write_text(params_to_json(params, meta))


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    return params_from_json(Path(path).read_text())
