"""Noam-style learning-rate schedule and a functional Adam step."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
from torch import Tensor

from mmsg.errors import InvalidSchedule, ShapeMismatch


def noam_lr(
    step: int,
    init_lr: float,
    max_lr: float,
    final_lr: float,
    warmup_steps: int,
    total_steps: int,
) -> float:
    """Linear warmup init_lr -> max_lr, then geometric decay reaching final_lr at total_steps.

    Steps past ``total_steps`` stay at ``final_lr``.
    """
    if step < 0:
        raise InvalidSchedule(f"step must be >= 0, got {step}")
    if not (0 < init_lr <= max_lr and 0 < final_lr <= max_lr):
        raise InvalidSchedule(f"need 0 < init_lr <= max_lr and 0 < final_lr <= max_lr, got {init_lr}, {max_lr}, {final_lr}")
    if warmup_steps < 0 or total_steps <= warmup_steps:
        raise InvalidSchedule(f"need 0 <= warmup_steps < total_steps, got {warmup_steps}, {total_steps}")
    if step < warmup_steps:
        return init_lr + (max_lr - init_lr) * step / warmup_steps
    if step >= total_steps:
        return final_lr
    # gamma ** (total - warmup) == final / max
    log_gamma = math.log(final_lr / max_lr) / (total_steps - warmup_steps)
    return max_lr * math.exp(log_gamma * (step - warmup_steps))


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    exp_avg: list[Tensor] = field(default_factory=list)
    exp_avg_sq: list[Tensor] = field(default_factory=list)


def adam_step(params: list[Tensor], grads: list[Tensor | None], state: AdamState, lr: float) -> AdamState:
    """In-place bias-corrected Adam update. ``None`` grads count as zero."""
    if len(params) != len(grads):
        raise ShapeMismatch(f"{len(params)} parameters vs {len(grads)} gradients")
    if not state.exp_avg:
        state.exp_avg = [torch.zeros_like(p) for p in params]
        state.exp_avg_sq = [torch.zeros_like(p) for p in params]
    if len(state.exp_avg) != len(params):
        raise ShapeMismatch("optimizer state does not match parameter list")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1 - b1**state.step
    corr2 = 1 - b2**state.step
    with torch.no_grad():
        for p, g, m, v in zip(params, grads, state.exp_avg, state.exp_avg_sq):
            if g is None:
                g = torch.zeros_like(p)
            if g.shape != p.shape:
                raise ShapeMismatch(f"gradient {tuple(g.shape)} vs parameter {tuple(p.shape)}")
            m.mul_(b1).add_(g, alpha=1 - b1)
            v.mul_(b2).addcmul_(g, g, value=1 - b2)
            denom = (v / corr2).sqrt().add_(state.eps)
            p.addcdiv_(m, denom, value=-lr / corr1)
    return state
