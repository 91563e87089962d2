import numpy as np
import pytest
import torch

from mmsg.chem import build_dictionary
from mmsg.data import collate, load_csv, prepare, scaffold_keys
from mmsg.errors import DataError, EmptyDataset, MissingSmilesColumn, SequenceTooLong


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_blank_cells_are_masked(tmp_path):
    t = load_csv(write(tmp_path, "smiles,a,b\nCC,1,0\nCCO,,1\nCCN,0,1\n"), "classification")
    assert t.mask.tolist() == [[True, True], [False, True], [True, True]]
    assert np.isnan(t.labels[1, 0]) and t.task_names == ["a", "b"]


def test_header_case_and_task_columns(tmp_path):
    p = write(tmp_path, "y,SMILES,z\n1.5,CC,2\n-0.5,CO,3\n")
    t = load_csv(p, task_columns=["y"])
    assert t.smiles == ["CC", "CO"] and t.labels[:, 0].tolist() == [1.5, -0.5]
    with pytest.raises(DataError):
        load_csv(p, task_columns=["missing"])


def test_missing_smiles_column(tmp_path):
    with pytest.raises(MissingSmilesColumn):
        load_csv(write(tmp_path, "mol,y\nCC,1\n"))


def test_unparseable_rows_dropped(tmp_path):
    t = load_csv(write(tmp_path, "smiles,y\nCC,1.0\nC1CC,1.0\nCCO,2.0\n"))
    assert t.smiles == ["CC", "CCO"]
    assert (t.rows_in, t.rows_dropped) == (3, 1)
    assert t.rows_in == len(t) + t.rows_dropped


def test_bad_labels(tmp_path):
    with pytest.raises(DataError):
        load_csv(write(tmp_path, "smiles,y\nCC,2\n"), "classification")
    with pytest.raises(DataError):
        load_csv(write(tmp_path, "smiles,y\nCC,abc\n"))
    with pytest.raises(DataError):
        load_csv(tmp_path / "absent.csv")
    with pytest.raises(EmptyDataset):
        load_csv(write(tmp_path, "smiles,y\nC1CC,1\n"))


def test_bundled_datasets(esol, freesolv, lipo):
    assert len(esol) == 1128 and len(freesolv) == 642 and len(lipo) == 4200
    for t in (esol, freesolv, lipo):
        assert t.rows_dropped == 0 and t.mask.all() and t.num_tasks == 1


def test_subset(esol):
    s = esol.subset([3, 1])
    assert s.smiles == [esol.smiles[3], esol.smiles[1]]
    assert s.labels[0, 0] == esol.labels[3, 0]


def test_prepare_and_collate():
    d = build_dictionary(["CCO", "c1ccccc1"])
    recs = [prepare("CCO", d), prepare("C", d), prepare("c1ccccc1", d)]
    b = collate(recs, labels=np.array([[1.0], [2.0], [3.0]]), mask=np.ones((3, 1), bool), dtype=torch.float64)
    assert b.size == 3
    assert b.atom_counts.tolist() == [3, 1, 6] and b.edge_counts.tolist() == [4, 0, 12]
    assert b.x_v.shape == (10, 127) and b.x_e.shape == (16, 12)
    assert b.lengths.tolist() == [3, 1, 8] and b.token_ids.shape == (3, 8)
    assert torch.all(b.token_ids[1, 1:] == 0)
    # edge endpoints stay inside their own molecule
    assert torch.equal(b.atom_mol[b.edge_src], b.edge_mol) and torch.equal(b.atom_mol[b.edge_dst], b.edge_mol)
    with pytest.raises(SequenceTooLong):
        prepare("c1ccccc1", d, max_len=5)


def test_scaffold_keys():
    keys = scaffold_keys(["c1ccccc1CC", "c1ccccc1O", "CCO", "CCN"])
    assert keys[0] == keys[1] and keys[2] == keys[3] and keys[0] != keys[2]
