"""First-order optimizers over :class:`Parameter` lists."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..nn import Parameter


class Optimizer:
    def __init__(self, params: Sequence[Parameter], lr: float):
        self.params = list(params)
        self.lr = lr

    def step(self) -> None:
        raise NotImplementedError

    def state_dict(self) -> dict[str, np.ndarray]:
        return {}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        pass


class SGD(Optimizer):
    """Heavy-ball momentum: ``v = mu * v + g``; ``p -= lr * v``."""

    def __init__(self, params, lr: float, momentum: float = 0.9):
        super().__init__(params, lr)
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                continue
            v *= self.momentum
            v += p.grad
            p.data -= self.lr * v

    def state_dict(self):
        return {f"velocity.{i}": v for i, v in enumerate(self.velocity)}

    def load_state_dict(self, state):
        self.velocity = [np.array(state[f"velocity.{i}"], dtype=p.dtype) for i, p in enumerate(self.params)]


class Adam(Optimizer):
    """Adam with bias correction."""

    def __init__(self, params, lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        super().__init__(params, lr)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            if g is None:
                continue
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self):
        state = {"t": np.array([self.t], dtype=np.float64)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            state[f"m.{i}"] = m
            state[f"v.{i}"] = v
        return state

    def load_state_dict(self, state):
        self.t = int(state["t"][0])
        self.m = [np.array(state[f"m.{i}"], dtype=p.dtype) for i, p in enumerate(self.params)]
        self.v = [np.array(state[f"v.{i}"], dtype=p.dtype) for i, p in enumerate(self.params)]


def make_optimizer(name: str, params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
                   momentum: float = 0.9) -> Optimizer:
    name = name.lower()
    if name == "adam":
        return Adam(params, lr, betas, eps)
    if name in ("sgd", "sgd-momentum"):
        return SGD(params, lr, momentum)
    raise ValueError(f"unknown optimizer {name!r}; use 'adam' or 'sgd-momentum'")
