import numpy as np
import pytest
import torch

from conftest import perturb_
from mmsg.bmc import (
    BMCEncoder,
    aggregate_edges_to_node,
    aggregate_nodes_to_edge,
    communicate,
    sequence_readout,
    subtract_reverse,
    update_hidden,
)
from mmsg.chem import build_dictionary
from mmsg.data import collate, prepare
from mmsg.diffcore import grad_check, init_parameters
from mmsg.errors import ConfigError, ShapeMismatch
from oracles import bmc_oracle, gru_unroll, np_

f64 = torch.float64


def T(*rows):
    return torch.tensor(rows, dtype=f64)


def batch_of(*smiles):
    d = build_dictionary(smiles)
    return collate([prepare(s, d) for s in smiles], dtype=f64)


def encoder(hidden=8, depth=2, seed=0, scale=0.2):
    enc = BMCEncoder(hidden, depth).double()
    init_parameters(enc, torch.Generator().manual_seed(seed))
    perturb_(enc, scale, seed)
    return enc


def test_node_aggregation_examples():
    assert aggregate_edges_to_node(T([1.0, 2.0]), torch.tensor([0]), 1).tolist() == [[1.0, 4.0]]
    assert aggregate_edges_to_node(T([1.0, 0.0], [0.0, 1.0]), torch.tensor([0, 0]), 1).tolist() == [[1.0, 1.0]]
    assert aggregate_edges_to_node(T([1.0, 2.0]), torch.tensor([0]), 2)[1].tolist() == [0.0, 0.0]


def test_edge_aggregation_examples():
    assert aggregate_nodes_to_edge(T([2.0, 0.0]), T([0.0, 2.0])).tolist() == [[1.0, 1.0]]
    h = T([0.3, -1.7])
    assert torch.equal(aggregate_nodes_to_edge(h, h), h)
    z = torch.zeros(1, 2, dtype=f64)
    assert torch.equal(aggregate_nodes_to_edge(z, z), z)
    with pytest.raises(ShapeMismatch):
        aggregate_nodes_to_edge(T([1.0, 2.0]), T([1.0, 2.0, 3.0]))


def test_communicate_and_subtract():
    m = T([1.0, 2.0])
    assert torch.equal(communicate(m, torch.zeros_like(m)), m)
    assert communicate(T([1.0, 2.0]), T([3.0, 4.0])).tolist() == [[4.0, 6.0]]
    assert torch.equal(communicate(torch.zeros_like(m), m), m)
    with pytest.raises(ShapeMismatch):
        communicate(T([1.0, 2.0]), T([1.0]))
    assert torch.equal(subtract_reverse(m, torch.zeros_like(m)), m)
    assert subtract_reverse(m, m).tolist() == [[0.0, 0.0]]
    assert subtract_reverse(T([3.0, 1.0]), T([1.0, 1.0])).tolist() == [[2.0, 0.0]]


def test_update_examples():
    eye = torch.eye(2, dtype=f64)
    assert update_hidden(T([0.0, 1.0]), T([1.0, -3.0]), eye).tolist() == [[1.0, 0.0]]
    h0 = T([0.5, 2.0])
    assert torch.equal(update_hidden(torch.zeros_like(h0), h0, eye), h0)
    assert update_hidden(T([9.0, 9.0]), T([1.0, -3.0]), torch.zeros(2, 2, dtype=f64)).tolist() == [[1.0, 0.0]]
    with pytest.raises(ShapeMismatch):
        update_hidden(T([1.0]), T([1.0, 2.0]), eye)


def test_depth_and_hidden_validation():
    with pytest.raises(ConfigError):
        BMCEncoder(8, 0)
    with pytest.raises(ConfigError):
        BMCEncoder(0, 2)


def test_final_pass_identities():
    enc = encoder(depth=1)
    with torch.no_grad():
        for p in (enc.atom_proj.weight, enc.atom_proj.bias, enc.bond_proj.weight, enc.bond_proj.bias):
            p.zero_()
    b = batch_of("CC")
    h_v, h_e, _ = enc.propagate(b.x_v, b.x_e, b.edge_src, b.edge_dst)
    assert torch.equal(h_v, torch.zeros_like(h_v)) and torch.equal(h_e, torch.zeros_like(h_e))


def test_single_atom_final_pass():
    enc = encoder(depth=3)
    b = batch_of("C")
    h_v, h_e, hist = enc.propagate(b.x_v, b.x_e, b.edge_src, b.edge_dst, record=True)
    h_prev = hist[-2][0]
    assert torch.allclose(h_v, h_prev + enc.atom_proj(b.x_v), atol=0, rtol=0)
    assert h_e.shape == (0, 8)


def test_methane_embeddings():
    enc = encoder()
    out = enc(batch_of("C"))
    assert torch.equal(out.H_E, torch.zeros(1, 8, dtype=f64))
    assert torch.all(torch.isfinite(out.H_V))


@pytest.mark.parametrize("smiles, depth", [("CC", 1), ("CC", 2), ("CCO", 2), ("CCCO", 3), ("c1ccccc1O", 2)])
def test_matches_straight_line_oracle(smiles, depth):
    enc = encoder(depth=depth, seed=depth)
    b = batch_of(smiles)
    out = enc(b, record=True)
    edges = list(zip(b.edge_src.tolist(), b.edge_dst.tolist()))
    hv, he, H_V, H_E, hist = bmc_oracle(np_(b.x_v), np_(b.x_e), edges, enc)
    assert np.max(np.abs(np_(out.node_hidden) - hv)) < 1e-12
    assert np.max(np.abs(np_(out.edge_hidden) - he)) < 1e-12
    assert np.max(np.abs(np_(out.H_V[0]) - H_V)) < 1e-12
    assert np.max(np.abs(np_(out.H_E[0]) - H_E)) < 1e-12
    for (a_v, a_e), (o_v, o_e) in zip(out.history, hist):
        assert np.max(np.abs(np_(a_v) - o_v)) < 1e-12
        assert np.max(np.abs(np_(a_e) - o_e)) < 1e-12


def test_relabeled_molecule_equivariant():
    enc = encoder(seed=5)
    a, b = batch_of("CCO"), batch_of("OCC")
    ha, _, _ = enc.propagate(a.x_v, a.x_e, a.edge_src, a.edge_dst)
    hb, _, _ = enc.propagate(b.x_v, b.x_e, b.edge_src, b.edge_dst)
    assert torch.allclose(ha, hb.flip(0), atol=1e-12)


def test_batched_equals_separate():
    enc = encoder(seed=3)
    mols = ["CCO", "C", "c1ccccc1", "CC(=O)N"]
    together = enc(batch_of(*mols))
    for i, s in enumerate(mols):
        alone = enc(batch_of(s))
        assert torch.allclose(together.H_V[i], alone.H_V[0], atol=1e-12)
        assert torch.allclose(together.H_E[i], alone.H_E[0], atol=1e-12)


def test_readout_examples():
    gru = torch.nn.GRU(3, 3, batch_first=True).double()
    init_parameters(gru, torch.Generator().manual_seed(0))
    perturb_(gru, 0.3)
    rows = T([0.5, -1.0, 2.0], [1.5, 0.2, -0.3])
    w = [np_(p) for p in (gru.weight_ih_l0, gru.weight_hh_l0, gru.bias_ih_l0, gru.bias_hh_l0)]
    one = sequence_readout(rows[:1], torch.tensor([0]), torch.tensor([1]), gru)
    assert np.allclose(np_(one[0]), gru_unroll(np_(rows[:1]), *w)[0], atol=1e-14)
    two = sequence_readout(rows, torch.tensor([0, 0]), torch.tensor([2]), gru)
    steps = gru_unroll(np_(rows), *w)
    assert np.allclose(np_(two[0]), steps[0] + steps[1], atol=1e-14)
    empty = sequence_readout(rows[:0], torch.tensor([], dtype=torch.long), torch.tensor([0]), gru)
    assert torch.equal(empty, torch.zeros(1, 3, dtype=f64))


def test_bmc_gradients():
    # small weights keep the readout gates away from saturation, where true
    # gradients fall below the finite-difference roundoff floor
    enc = encoder(hidden=4, depth=3, seed=11, scale=0.05)
    b = batch_of("CC(O)=O")

    def loss():
        out = enc(b)
        return out.H_V.sum() + out.H_E.pow(2).sum()

    r = grad_check(loss, list(enc.named_parameters()), samples_per_param=6, generator=torch.Generator().manual_seed(0))
    assert r.passed(1e-4), r
