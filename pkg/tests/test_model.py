import math

import numpy as np
import pytest
import torch

from conftest import perturb_
from mmsg.chem import build_dictionary
from mmsg.data import collate, prepare
from mmsg.errors import AllMasked, ConfigError, EmptyBatch, ParseError, SequenceTooLong, ShapeMismatch
from mmsg.model import MMSG, ModelConfig, export_embedding, load_checkpoint, masked_bce_loss, mse_loss, predict, save_checkpoint
from oracles import mmsg_oracle, np_

f64 = torch.float64
SMILES = ["CC", "CCO", "c1ccccc1O", "CC(=O)N", "C"]


@pytest.fixture(scope="module")
def dictionary():
    return build_dictionary(SMILES)


def small_model(d, seed=0, scale=0.1, **kw):
    cfg = dict(vocab_size=len(d), max_len=12, hidden=8, depth=2, gru_hidden=6, heads=2, trans_layers=2, head_hidden=8)
    cfg.update(kw)
    model = MMSG(ModelConfig(**cfg), torch.Generator().manual_seed(seed)).double()
    perturb_(model, scale, seed)
    return model


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(vocab_size=5, max_len=4, num_tasks=0)
    with pytest.raises(ConfigError):
        ModelConfig(vocab_size=5, max_len=4, task_type="ranking")
    with pytest.raises(ConfigError):
        ModelConfig(vocab_size=5, max_len=4, hidden=10, heads=4)


def test_init_is_seeded(dictionary):
    a = MMSG(ModelConfig(len(dictionary), 12, hidden=8, heads=2), torch.Generator().manual_seed(3))
    b = MMSG(ModelConfig(len(dictionary), 12, hidden=8, heads=2), torch.Generator().manual_seed(3))
    for (n, p), (_, q) in zip(a.named_parameters(), b.named_parameters()):
        assert torch.equal(p, q), n


def test_constant_head(dictionary):
    model = small_model(dictionary)
    with torch.no_grad():
        for p in model.head.parameters():
            p.zero_()
        model.head[-1].bias.fill_(0.37)
    out = predict(model, SMILES, dictionary)
    assert torch.equal(out, torch.full((len(SMILES), 1), 0.37, dtype=f64))


@pytest.mark.parametrize("smiles", ["CC", "CCO", "C"])
@pytest.mark.parametrize("bias", [True, False])
def test_forward_matches_oracle(dictionary, smiles, bias):
    model = small_model(dictionary, seed=2, bias_enabled=bias)
    record = prepare(smiles, dictionary)
    y, fused = mmsg_oracle(record, model)
    assert np.max(np.abs(np_(predict(model, smiles, dictionary)) - y)) < 1e-12
    assert np.max(np.abs(np_(export_embedding(model, smiles, dictionary)) - fused)) < 1e-12


def test_bias_disabled_equals_zeroed_projection(dictionary):
    off = small_model(dictionary, seed=4, bias_enabled=False)
    on = small_model(dictionary, seed=4, bias_enabled=True)
    with torch.no_grad():
        on.seq.bias_proj.weight.zero_()
        on.seq.bias_proj.bias.zero_()
        off.seq.bias_proj.weight.zero_()
        off.seq.bias_proj.bias.zero_()
    assert torch.equal(predict(on, SMILES, dictionary), predict(off, SMILES, dictionary))


def test_batch_rows_independent(dictionary):
    model = small_model(dictionary, seed=5)
    together = predict(model, SMILES, dictionary)
    for i, s in enumerate(SMILES):
        assert torch.allclose(together[i], predict(model, s, dictionary), atol=1e-12)


def test_predict_values_transform(dictionary):
    model = small_model(dictionary)
    b = collate([prepare(s, dictionary) for s in SMILES], dtype=f64)
    with torch.no_grad():
        model.target_mean.fill_(2.0)
        model.target_std.fill_(3.0)
        raw = model(b)
        assert torch.allclose(model.predict_values(b), raw * 3 + 2, atol=1e-14)
    clf = small_model(dictionary, task_type="classification", num_tasks=2)
    with torch.no_grad():
        p = clf.predict_values(b)
    assert p.shape == (5, 2) and torch.all((p > 0) & (p < 1))


def test_bce_examples():
    one = torch.ones(1, 1, dtype=f64)
    assert masked_bce_loss(torch.full((1, 1), 20.0, dtype=f64), one, one).item() < 1e-8
    assert masked_bce_loss(torch.zeros(1, 1, dtype=f64), one, one).item() == pytest.approx(math.log(2), abs=1e-15)
    logits = torch.tensor([[0.0, 5.0]], dtype=f64)
    labels = torch.tensor([[1.0, float("nan")]], dtype=f64)
    mask = torch.tensor([[1.0, 0.0]], dtype=f64)
    assert masked_bce_loss(logits, labels, mask).item() == pytest.approx(math.log(2), abs=1e-15)


def test_bce_ignores_masked_labels():
    g = torch.Generator().manual_seed(0)
    logits = torch.randn(6, 3, dtype=f64, generator=g, requires_grad=True)
    labels = (torch.rand(6, 3, generator=g) > 0.5).to(f64)
    mask = (torch.rand(6, 3, generator=g) > 0.3).to(f64)
    base = masked_bce_loss(logits, labels, mask)
    changed = labels.clone()
    changed[mask == 0] = 1 - changed[mask == 0]
    assert torch.equal(base, masked_bce_loss(logits, changed, mask))
    (grad,) = torch.autograd.grad(base, logits)
    assert torch.all(grad[mask == 0] == 0)


def test_bce_errors():
    z = torch.zeros(2, 1, dtype=f64)
    with pytest.raises(AllMasked):
        masked_bce_loss(z, z, z)
    with pytest.raises(ShapeMismatch):
        masked_bce_loss(z, torch.zeros(2, 2, dtype=f64), z)


def test_mse_examples():
    assert mse_loss(torch.zeros(2, 1, dtype=f64), torch.tensor([[3.0], [4.0]], dtype=f64)).item() == 12.5
    assert math.sqrt(12.5) == pytest.approx(3.5355, abs=1e-4)
    with pytest.raises(EmptyBatch):
        mse_loss(torch.zeros(0, 1), torch.zeros(0, 1))
    with pytest.raises(AllMasked):
        mse_loss(torch.zeros(2, 1), torch.ones(2, 1), torch.zeros(2, 1))


def test_embedding_properties(dictionary):
    model = small_model(dictionary)
    e1 = export_embedding(model, "CCO", dictionary)
    assert e1.shape == (8,) and torch.equal(e1, export_embedding(model, "CCO", dictionary))
    with torch.no_grad():
        for p in model.parameters():
            p.zero_()
    assert torch.equal(export_embedding(model, "CCO", dictionary), torch.zeros(8, dtype=f64))


def test_bad_inputs(dictionary):
    model = small_model(dictionary)
    with pytest.raises(ParseError):
        predict(model, "C1CC", dictionary)
    with pytest.raises(SequenceTooLong):
        predict(model, "C" * 13, dictionary)


def test_checkpoint_round_trip(dictionary, tmp_path):
    model = small_model(dictionary, seed=8, task_type="classification", num_tasks=2)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model, dictionary, ["a", "b"], {"seed": 8})
    loaded, d2, blob = load_checkpoint(path)
    assert d2 == dictionary and blob["task_names"] == ["a", "b"] and blob["extra"] == {"seed": 8}
    assert loaded.config == model.config and loaded.dtype == f64
    for (n, p), (_, q) in zip(model.state_dict().items(), loaded.state_dict().items()):
        assert torch.equal(p, q), n
    assert torch.equal(predict(model, SMILES, dictionary), predict(loaded, SMILES, d2))


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.ckpt"
    torch.save({"format": "something-else"}, path)
    with pytest.raises(ConfigError):
        load_checkpoint(path)
