"""Differentiable primitives on top of torch autograd, plus a finite-difference checker.

Everything here accepts float32 or float64 tensors; tests run in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import torch
from torch import Tensor, nn

from mmsg.errors import IndexOutOfRange, NonDeterministicLoss, ShapeMismatch


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias``."""
    if x.shape[-1] != weight.shape[-1]:
        raise ShapeMismatch(f"linear: input width {x.shape[-1]} vs weight {tuple(weight.shape)}")
    if bias is not None and bias.shape != weight.shape[:1]:
        raise ShapeMismatch(f"linear: bias {tuple(bias.shape)} vs weight {tuple(weight.shape)}")
    y = x @ weight.transpose(0, 1)
    return y if bias is None else y + bias


def segment_reduce(values: Tensor, segment_ids: Tensor, num_segments: int, mode: str = "sum") -> Tensor:
    """Reduce rows of ``values`` into ``num_segments`` output rows.

    Empty segments give zero rows for every mode. For ``max`` the gradient
    goes to a single row per coordinate, the lowest-index row attaining it.
    """
    if values.shape[0] != segment_ids.shape[0]:
        raise ShapeMismatch(f"segment_reduce: {values.shape[0]} rows vs {segment_ids.shape[0]} ids")
    if segment_ids.numel() and (int(segment_ids.min()) < 0 or int(segment_ids.max()) >= num_segments):
        raise IndexOutOfRange(f"segment id outside [0, {num_segments})")
    out_shape = (num_segments,) + tuple(values.shape[1:])
    if mode == "sum":
        return values.new_zeros(out_shape).index_add(0, segment_ids, values)
    if mode == "mean":
        total = values.new_zeros(out_shape).index_add(0, segment_ids, values)
        counts = torch.bincount(segment_ids, minlength=num_segments).clamp(min=1).to(values.dtype)
        return total / counts.view((-1,) + (1,) * (values.dim() - 1))
    if mode == "max":
        if values.shape[0] == 0:
            return values.new_zeros(out_shape)
        flat = values.reshape(values.shape[0], -1)
        idx = segment_ids.view(-1, 1).expand_as(flat)
        with torch.no_grad():
            seg_max = flat.new_full((num_segments, flat.shape[1]), -math.inf)
            seg_max = seg_max.scatter_reduce(0, idx, flat, reduce="amax", include_self=True)
            rows = torch.arange(flat.shape[0], device=flat.device).view(-1, 1).expand_as(flat)
            is_max = flat == seg_max.gather(0, idx)
            sentinel = flat.shape[0]
            cand = torch.where(is_max, rows, torch.full_like(rows, sentinel))
            first = torch.full((num_segments, flat.shape[1]), sentinel, dtype=rows.dtype, device=flat.device)
            first = first.scatter_reduce(0, idx, cand, reduce="amin", include_self=True)
            empty = first == sentinel
            first = first.masked_fill(empty, 0)
        picked = flat.gather(0, first)
        picked = picked.masked_fill(empty, 0.0)
        return picked.reshape(out_shape)
    raise ValueError(f"unknown reduction {mode!r}")


def gru_cell(x: Tensor, h_prev: Tensor, weight_ih: Tensor, weight_hh: Tensor, bias_ih: Tensor, bias_hh: Tensor) -> Tensor:
    """One GRU step with gates stacked as (reset, update, candidate)."""
    hidden = h_prev.shape[-1]
    if weight_ih.shape != (3 * hidden, x.shape[-1]) or weight_hh.shape != (3 * hidden, hidden):
        raise ShapeMismatch(
            f"gru_cell: x {tuple(x.shape)}, h {tuple(h_prev.shape)}, "
            f"W_ih {tuple(weight_ih.shape)}, W_hh {tuple(weight_hh.shape)}"
        )
    gi = linear(x, weight_ih, bias_ih)
    gh = linear(h_prev, weight_hh, bias_hh)
    i_r, i_z, i_n = gi.chunk(3, dim=-1)
    h_r, h_z, h_n = gh.chunk(3, dim=-1)
    r = torch.sigmoid(i_r + h_r)
    z = torch.sigmoid(i_z + h_z)
    n = torch.tanh(i_n + r * h_n)
    return (1.0 - z) * n + z * h_prev


def softmax_rows(x: Tensor) -> Tensor:
    shifted = x - x.amax(dim=-1, keepdim=True).detach()
    e = shifted.exp()
    return e / e.sum(dim=-1, keepdim=True)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    return torch.nn.functional.layer_norm(x, x.shape[-1:], gain, bias, eps)


def relu(x: Tensor) -> Tensor:
    return torch.relu(x)


def glorot_uniform_(t: Tensor, generator: torch.Generator | None = None) -> Tensor:
    """Uniform in +-sqrt(6 / (fan_in + fan_out)) using the last two dims."""
    fan_out, fan_in = t.shape[-2], t.shape[-1]
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    with torch.no_grad():
        return t.uniform_(-bound, bound, generator=generator)


def init_parameters(module: nn.Module, generator: torch.Generator) -> None:
    """Glorot for every matrix, zeros for vectors; layer norms reset to (1, 0).

    Walks modules in registration order so a seeded generator fixes the result.
    """
    with torch.no_grad():
        for sub in module.modules():
            if isinstance(sub, nn.LayerNorm):
                sub.reset_parameters()
                continue
            for p in sub.parameters(recurse=False):
                if p.dim() >= 2:
                    glorot_uniform_(p, generator)
                else:
                    p.zero_()


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    skipped_kinks: int
    worst: str = ""

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: Iterable[tuple[str, Tensor]] | Sequence[Tensor],
    step: float = 1e-5,
    tolerance: float = 1e-4,
    samples_per_param: int | None = 8,
    generator: torch.Generator | None = None,
    floor: float = 1e-6,
) -> GradCheckResult:
    """Compare autograd gradients with central finite differences.

    ``params`` may be named pairs (as from ``named_parameters``) or bare
    tensors. Relative error is ``|a - n| / max(|a|, |n|, floor)``. Coordinates
    that fail and whose one-sided differences do not scale with the step (a
    ReLU or max kink within ``step``) are counted as skipped, not failed.
    """
    named = [(p[0], p[1]) if isinstance(p, tuple) else (f"param{i}", p) for i, p in enumerate(params)]
    named = [(n, p) for n, p in named if p.numel() > 0]
    if not named:
        raise ValueError("grad_check: no parameter entries to check")

    for _, p in named:
        p.grad = None
    loss = loss_fn()
    grads = torch.autograd.grad(loss, [p for _, p in named], allow_unused=True)
    base = float(loss.detach())
    with torch.no_grad():
        if float(loss_fn()) != base:
            raise NonDeterministicLoss("loss differs between two evaluations at the same point")

    def f_at(p: Tensor, flat_idx: int, delta: float) -> float:
        with torch.no_grad():
            view = p.view(-1)
            old = view[flat_idx].item()
            view[flat_idx] = old + delta
            val = float(loss_fn())
            view[flat_idx] = old
        return val

    worst, worst_name = 0.0, ""
    checked = skipped = 0
    for (name, p), g in zip(named, grads):
        g = torch.zeros_like(p) if g is None else g
        n = p.numel()
        if samples_per_param is None or samples_per_param >= n:
            idxs = list(range(n))
        else:
            idxs = torch.randperm(n, generator=generator)[:samples_per_param].tolist()
        for i in idxs:
            fp, fm = f_at(p, i, step), f_at(p, i, -step)
            num = (fp - fm) / (2 * step)
            ana = float(g.reshape(-1)[i])
            rel = abs(ana - num) / max(abs(ana), abs(num), floor)
            checked += 1
            if rel >= tolerance and _is_kink(f_at, p, i, step, base, fp, fm, abs(ana - num)):
                skipped += 1
                continue
            if rel > worst:
                worst, worst_name = rel, f"{name}[{i}]"
    return GradCheckResult(worst, checked - skipped, skipped, worst_name)


def _is_kink(f_at, p: Tensor, i: int, h: float, f0: float, fp: float, fm: float, err: float) -> bool:
    # A kink inside the stencil bounds the central-difference error by the
    # one-sided asymmetry, and that asymmetry does not shrink linearly with
    # the step the way smooth curvature does.
    asym_h = (fp - f0) / h - (f0 - fm) / h
    if abs(asym_h) < err:
        return False
    fp2, fm2 = f_at(p, i, h / 2), f_at(p, i, -h / 2)
    asym_h2 = (fp2 - f0) / (h / 2) - (f0 - fm2) / (h / 2)
    if asym_h2 == 0.0:
        return asym_h != 0.0
    return abs(asym_h / asym_h2 - 2.0) > 0.5
