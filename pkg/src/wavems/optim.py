"""Momentum SGD with coupled L2 weight decay."""

from __future__ import annotations

from typing import Iterable

from .tensor import Parameter


def sgd_step(params: Iterable[Parameter], lr: float, momentum: float,
             weight_decay: float) -> None:
    """One update: g += wd*w (unless exempt); v = mu*v + g; w -= lr*v.

    Classic coupled L2: decay joins the gradient before the momentum
    accumulation. Raises if any parameter is missing its gradient.
    """
    for p in params:
        if p.value.grad is None:
            raise RuntimeError(
                f"sgd_step: parameter with shape {p.value.shape} has no gradient")
        g = p.value.grad
        if weight_decay != 0.0 and not p.decay_exempt:
            g = g + weight_decay * p.value.data
        p.velocity *= momentum
        p.velocity += g
        p.value.data -= lr * p.velocity
