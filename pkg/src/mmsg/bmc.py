"""Bidirectional message communication over atoms and directed bonds.

Each of the first ``depth - 1`` rounds:

* node message   m_v = MAX(h_e in) * SUM(h_e in) over incoming edges
* edge message   m_vw = MEAN(h_v, h_w)
* communicate    p = m + h (both kinds)
* edge p_vw is replaced by p_v - p_wv, reading the reverse edge's value from
  before any replacement
* update         h = ReLU(h0 + W p), with W_v and W_e shared across rounds

A final round adds the projected raw attributes instead of updating, then
GRU readouts sum over atoms (H_V) and directed edges (H_E).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor, nn

from mmsg.diffcore import linear, relu, segment_reduce
from mmsg.errors import ConfigError, ShapeMismatch
from mmsg.featurize import ATOM_DIM, BOND_DIM


def aggregate_edges_to_node(edge_hidden: Tensor, edge_target: Tensor, n_nodes: int) -> Tensor:
    hi = segment_reduce(edge_hidden, edge_target, n_nodes, "max")
    total = segment_reduce(edge_hidden, edge_target, n_nodes, "sum")
    return hi * total


def aggregate_nodes_to_edge(h_source: Tensor, h_target: Tensor) -> Tensor:
    if h_source.shape != h_target.shape:
        raise ShapeMismatch(f"endpoint hiddens {tuple(h_source.shape)} vs {tuple(h_target.shape)}")
    return (h_source + h_target) / 2


def communicate(message: Tensor, hidden: Tensor) -> Tensor:
    if message.shape != hidden.shape:
        raise ShapeMismatch(f"message {tuple(message.shape)} vs hidden {tuple(hidden.shape)}")
    return message + hidden


def subtract_reverse(p_source_node: Tensor, p_reverse_edge: Tensor) -> Tensor:
    return p_source_node - p_reverse_edge


def update_hidden(p: Tensor, h0: Tensor, weight: Tensor) -> Tensor:
    if p.shape != h0.shape:
        raise ShapeMismatch(f"p {tuple(p.shape)} vs h0 {tuple(h0.shape)}")
    return relu(h0 + linear(p, weight))


def sequence_readout(rows: Tensor, owner: Tensor, counts: Tensor, gru: nn.GRU) -> Tensor:
    """Run ``gru`` over each molecule's rows in index order and sum its outputs.

    ``owner`` maps rows to molecules and must be sorted (molecules contiguous).
    Molecules without rows read out as zero.
    """
    n_mol = counts.shape[0]
    out = rows.new_zeros((n_mol, gru.hidden_size))
    if rows.shape[0] == 0:
        return out
    present = torch.nonzero(counts > 0).flatten()
    lens = counts[present]
    offsets = torch.cumsum(counts, 0) - counts
    pos = torch.arange(rows.shape[0], device=rows.device) - offsets[owner]
    slot = torch.full((n_mol,), -1, dtype=torch.long, device=rows.device)
    slot[present] = torch.arange(present.shape[0], device=rows.device)
    padded = rows.new_zeros((present.shape[0], int(lens.max()), rows.shape[1]))
    padded = padded.index_put((slot[owner], pos), rows)
    packed = nn.utils.rnn.pack_padded_sequence(padded, lens.cpu(), batch_first=True, enforce_sorted=False)
    seq_out, _ = gru(packed)
    seq_out, _ = nn.utils.rnn.pad_packed_sequence(seq_out, batch_first=True)
    return out.index_put((present,), seq_out.sum(dim=1))


@dataclass
class GraphEmbeddings:
    H_V: Tensor
    H_E: Tensor
    node_hidden: Tensor
    edge_hidden: Tensor
    history: list[tuple[Tensor, Tensor]] | None = None


class BMCEncoder(nn.Module):
    def __init__(self, hidden: int, depth: int, atom_dim: int = ATOM_DIM, bond_dim: int = BOND_DIM):
        super().__init__()
        if depth < 1:
            raise ConfigError(f"message passing depth must be >= 1, got {depth}")
        if hidden < 1:
            raise ConfigError(f"hidden size must be >= 1, got {hidden}")
        self.hidden = hidden
        self.depth = depth
        self.atom_proj = nn.Linear(atom_dim, hidden)
        self.bond_proj = nn.Linear(bond_dim, hidden)
        self.W_v = nn.Linear(hidden, hidden, bias=False)
        self.W_e = nn.Linear(hidden, hidden, bias=False)
        self.node_readout = nn.GRU(hidden, hidden, batch_first=True)
        self.edge_readout = nn.GRU(hidden, hidden, batch_first=True)

    def propagate(
        self, x_v: Tensor, x_e: Tensor, edge_src: Tensor, edge_dst: Tensor, record: bool = False
    ) -> tuple[Tensor, Tensor, list[tuple[Tensor, Tensor]] | None]:
        """Message passing only; returns final node and edge hiddens."""
        n = x_v.shape[0]
        rev = torch.arange(x_e.shape[0], device=x_e.device) ^ 1
        h_v0 = self.atom_proj(x_v)
        h_e0 = self.bond_proj(x_e)
        h_v, h_e = h_v0, h_e0
        history = [(h_v, h_e)] if record else None
        for _ in range(self.depth - 1):
            p_v = communicate(aggregate_edges_to_node(h_e, edge_dst, n), h_v)
            p_e = communicate(aggregate_nodes_to_edge(h_v[edge_src], h_v[edge_dst]), h_e)
            p_e = subtract_reverse(p_v[edge_src], p_e[rev])
            h_e = update_hidden(p_e, h_e0, self.W_e.weight)
            h_v = update_hidden(p_v, h_v0, self.W_v.weight)
            if record:
                history.append((h_v, h_e))
        m_v = aggregate_edges_to_node(h_e, edge_dst, n)
        m_e = aggregate_nodes_to_edge(h_v[edge_src], h_v[edge_dst])
        h_v = m_v + h_v + h_v0
        h_e = m_e + h_e + h_e0
        if record:
            history.append((h_v, h_e))
        return h_v, h_e, history

    def forward(self, batch, record: bool = False) -> GraphEmbeddings:
        h_v, h_e, history = self.propagate(batch.x_v, batch.x_e, batch.edge_src, batch.edge_dst, record)
        H_V = sequence_readout(h_v, batch.atom_mol, batch.atom_counts, self.node_readout)
        H_E = sequence_readout(h_e, batch.edge_mol, batch.edge_counts, self.edge_readout)
        return GraphEmbeddings(H_V, H_E, h_v, h_e, history)
