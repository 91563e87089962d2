"""SMILES branch: bidirectional GRU over one-hot tokens, then pre-LN
Transformer blocks whose attention logits carry a per-head key-position bias
computed from the graph's bond readout. No positional encoding is used.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from mmsg.diffcore import layer_norm, linear, relu, softmax_rows
from mmsg.errors import ConfigError, EmptySequence, ShapeMismatch


def key_padding_mask(lengths: Tensor, n: int, dtype: torch.dtype) -> Tensor:
    """(B, n) additive mask: 0 on real tokens, -inf on padding."""
    pos = torch.arange(n, device=lengths.device)
    pad = pos.unsqueeze(0) >= lengths.unsqueeze(1)
    return torch.zeros(pad.shape, dtype=dtype, device=lengths.device).masked_fill(pad, -math.inf)


class MultiHeadAttention(nn.Module):
    def __init__(self, d: int, heads: int):
        super().__init__()
        if d % heads:
            raise ConfigError(f"model width {d} is not divisible by {heads} heads")
        self.d, self.heads, self.d_k = d, heads, d // heads
        self.q = nn.Linear(d, d)
        self.k = nn.Linear(d, d)
        self.v = nn.Linear(d, d)
        self.o = nn.Linear(d, d)

    def scores(self, x: Tensor, key_bias: Tensor) -> Tensor:
        """Attention weights (B, heads, n, n); ``key_bias`` is (B, heads, n) and already holds the mask."""
        B, n, _ = x.shape
        q = linear(x, self.q.weight, self.q.bias).view(B, n, self.heads, self.d_k).transpose(1, 2)
        k = linear(x, self.k.weight, self.k.bias).view(B, n, self.heads, self.d_k).transpose(1, 2)
        logits = q @ k.transpose(-1, -2) / math.sqrt(self.d_k)
        return softmax_rows(logits + key_bias.unsqueeze(2))

    def forward(self, x: Tensor, key_bias: Tensor) -> Tensor:
        B, n, _ = x.shape
        if key_bias.shape != (B, self.heads, n):
            raise ShapeMismatch(f"attention bias {tuple(key_bias.shape)} vs expected {(B, self.heads, n)}")
        attn = self.scores(x, key_bias)
        v = linear(x, self.v.weight, self.v.bias).view(B, n, self.heads, self.d_k).transpose(1, 2)
        out = (attn @ v).transpose(1, 2).reshape(B, n, self.d)
        return linear(out, self.o.weight, self.o.bias)


class TransformerBlock(nn.Module):
    """H' = MHA(LN(H)) + H ; out = FFN(LN(H')) + H'."""

    def __init__(self, d: int, heads: int, ffn_hidden: int):
        super().__init__()
        self.attn_norm = nn.LayerNorm(d)
        self.attn = MultiHeadAttention(d, heads)
        self.ffn_norm = nn.LayerNorm(d)
        self.ffn_in = nn.Linear(d, ffn_hidden)
        self.ffn_out = nn.Linear(ffn_hidden, d)

    def forward(self, h: Tensor, key_bias: Tensor) -> Tensor:
        h = self.attn(layer_norm(h, self.attn_norm.weight, self.attn_norm.bias), key_bias) + h
        z = layer_norm(h, self.ffn_norm.weight, self.ffn_norm.bias)
        z = linear(relu(linear(z, self.ffn_in.weight, self.ffn_in.bias)), self.ffn_out.weight, self.ffn_out.bias)
        return z + h


def pool_tokens(h: Tensor, lengths: Tensor) -> Tensor:
    """Mean over each sequence's real tokens."""
    if h.shape[1] == 0 or bool((lengths < 1).any()):
        raise EmptySequence("cannot pool an empty token sequence")
    keep = (torch.arange(h.shape[1], device=h.device).unsqueeze(0) < lengths.unsqueeze(1)).to(h.dtype)
    return (h * keep.unsqueeze(-1)).sum(dim=1) / lengths.to(h.dtype).unsqueeze(1)


class SequenceEncoder(nn.Module):
    def __init__(
        self,
        vocab_size: int,
        d: int,
        heads: int,
        layers: int,
        max_len: int,
        gru_hidden: int,
        gru_layers: int = 1,
        ffn_hidden: int | None = None,
        bond_dim: int | None = None,
    ):
        super().__init__()
        if max_len < 1 or layers < 0:
            raise ConfigError("max_len must be >= 1 and layers >= 0")
        self.vocab_size, self.d, self.heads, self.max_len = vocab_size, d, heads, max_len
        self.bigru = nn.GRU(vocab_size, gru_hidden, num_layers=gru_layers, bidirectional=True, batch_first=True)
        self.context_proj = nn.Linear(2 * gru_hidden, d)
        self.bias_proj = nn.Linear(bond_dim or d, heads * max_len)
        self.blocks = nn.ModuleList(TransformerBlock(d, heads, ffn_hidden or d) for _ in range(layers))

    def contextualize(self, token_ids: Tensor, lengths: Tensor, project: bool = True) -> Tensor:
        """(B, n, d) contextual token vectors, or the raw (B, n, 2*gru) concat."""
        if token_ids.shape[1] == 0 or bool((lengths < 1).any()):
            raise EmptySequence("token sequence must contain at least one token")
        dtype = self.context_proj.weight.dtype
        onehot = F.one_hot(token_ids, self.vocab_size).to(dtype)
        packed = nn.utils.rnn.pack_padded_sequence(onehot, lengths.cpu(), batch_first=True, enforce_sorted=False)
        out, _ = self.bigru(packed)
        out, _ = nn.utils.rnn.pad_packed_sequence(out, batch_first=True, total_length=token_ids.shape[1])
        if not project:
            return out
        return linear(out, self.context_proj.weight, self.context_proj.bias)

    def bias_from_bonds(self, H_E: Tensor | None, lengths: Tensor, n: int) -> Tensor:
        """Per-head key-position bias (B, heads, n) with padding at -inf.

        ``H_E=None`` gives a zero bias, i.e. plain attention.
        """
        if n > self.max_len:
            raise ShapeMismatch(f"sequence length {n} exceeds max_len {self.max_len}")
        B = lengths.shape[0]
        mask = key_padding_mask(lengths, n, self.bias_proj.weight.dtype).unsqueeze(1)
        if H_E is None:
            return mask.expand(B, self.heads, n)
        bias = linear(H_E, self.bias_proj.weight, self.bias_proj.bias).view(B, self.heads, self.max_len)
        return bias[:, :, :n] + mask

    def encode(self, token_ids: Tensor, lengths: Tensor, key_bias: Tensor) -> Tensor:
        h = self.contextualize(token_ids, lengths)
        for block in self.blocks:
            h = block(h, key_bias)
        return h

    def forward(self, token_ids: Tensor, lengths: Tensor, H_E: Tensor | None) -> tuple[Tensor, Tensor]:
        key_bias = self.bias_from_bonds(H_E, lengths, token_ids.shape[1])
        h = self.encode(token_ids, lengths, key_bias)
        return h, pool_tokens(h, lengths)
