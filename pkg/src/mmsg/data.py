"""Dataset tables, per-molecule preprocessing and batch collation."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import Tensor

from mmsg.chem import MolGraph, TokenDictionary, parse, tokenize
from mmsg.chem.scaffold import murcko_scaffold
from mmsg.errors import DataError, EmptyDataset, MissingSmilesColumn, MmsgError, SequenceTooLong
from mmsg.featurize import featurize

log = logging.getLogger(__name__)

TASK_TYPES = ("classification", "regression")


@dataclass
class DatasetTable:
    smiles: list[str]
    labels: np.ndarray  # n x tasks, nan where missing
    mask: np.ndarray  # n x tasks, False where the source cell was blank
    task_names: list[str]
    task_type: str
    name: str = "dataset"
    rows_in: int = 0
    rows_dropped: int = 0

    def __len__(self) -> int:
        return len(self.smiles)

    @property
    def num_tasks(self) -> int:
        return len(self.task_names)

    def subset(self, indices: Sequence[int]) -> "DatasetTable":
        idx = list(indices)
        return DatasetTable(
            smiles=[self.smiles[i] for i in idx],
            labels=self.labels[idx],
            mask=self.mask[idx],
            task_names=list(self.task_names),
            task_type=self.task_type,
            name=self.name,
            rows_in=len(idx),
        )


def load_csv(
    path: str | Path,
    task_type: str = "regression",
    task_columns: Sequence[str] | None = None,
) -> DatasetTable:
    """Read a MoleculeNet-style CSV with a ``smiles`` column (any case).

    All other columns, or just ``task_columns``, become tasks. Blank cells are
    masked. Rows whose SMILES fail to parse are dropped and counted.
    """
    if task_type not in TASK_TYPES:
        raise DataError(f"task_type must be one of {TASK_TYPES}, got {task_type!r}")
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not header:
        raise EmptyDataset(f"{path} has no header row")
    lowered = [h.strip().lower() for h in header]
    if "smiles" not in lowered:
        raise MissingSmilesColumn(f"{path} has no 'smiles' column (header: {header})")
    s_col = lowered.index("smiles")
    if task_columns is None:
        t_cols = [i for i in range(len(header)) if i != s_col]
    else:
        missing = [c for c in task_columns if c not in header]
        if missing:
            raise DataError(f"{path}: task columns not found: {missing}")
        t_cols = [header.index(c) for c in task_columns]
    if not t_cols:
        raise DataError(f"{path} has no label columns")

    smiles, labels, mask = [], [], []
    dropped = 0
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        smi = row[s_col].strip()
        try:
            parse(smi)
        except MmsgError as exc:
            dropped += 1
            log.debug("%s:%d dropped %r: %s", path, lineno, smi, exc)
            continue
        vals, present = [], []
        for c in t_cols:
            cell = row[c].strip() if c < len(row) else ""
            if cell == "":
                vals.append(math.nan)
                present.append(False)
                continue
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric label {cell!r}") from None
            if task_type == "classification" and v not in (0.0, 1.0):
                raise DataError(f"{path}:{lineno}: classification label must be 0/1/blank, got {cell!r}")
            vals.append(v)
            present.append(True)
        smiles.append(smi)
        labels.append(vals)
        mask.append(present)
    rows_in = len(smiles) + dropped
    if dropped:
        log.warning("%s: dropped %d of %d rows with unparseable SMILES", path, dropped, rows_in)
    if not smiles:
        raise EmptyDataset(f"{path} has no usable rows")
    log.info("%s: rows_in=%d rows_used=%d rows_dropped=%d", path, rows_in, len(smiles), dropped)
    return DatasetTable(
        smiles=smiles,
        labels=np.asarray(labels, dtype=np.float64),
        mask=np.asarray(mask, dtype=bool),
        task_names=[header[c] for c in t_cols],
        task_type=task_type,
        name=path.stem,
        rows_in=rows_in,
        rows_dropped=dropped,
    )


@dataclass
class MoleculeRecord:
    smiles: str
    graph: MolGraph
    x_v: np.ndarray
    x_e: np.ndarray
    token_ids: tuple[int, ...]
    scaffold: str = field(default="", repr=False)


def prepare(smiles: str, dictionary: TokenDictionary, max_len: int | None = None) -> MoleculeRecord:
    graph = parse(smiles)
    x_v, x_e = featurize(graph)
    ids = tokenize(smiles, dictionary).ids
    if max_len is not None and len(ids) > max_len:
        raise SequenceTooLong(f"{smiles!r} has {len(ids)} tokens, limit is {max_len}")
    return MoleculeRecord(smiles, graph, x_v, x_e, ids)


def scaffold_keys(smiles: Sequence[str]) -> list[str]:
    return [murcko_scaffold(parse(s)) for s in smiles]


@dataclass
class MolBatch:
    """Disjoint union of graphs plus padded token ids."""

    x_v: Tensor
    x_e: Tensor
    edge_src: Tensor
    edge_dst: Tensor
    atom_mol: Tensor
    edge_mol: Tensor
    atom_counts: Tensor
    edge_counts: Tensor
    token_ids: Tensor
    lengths: Tensor
    labels: Tensor | None = None
    mask: Tensor | None = None

    @property
    def size(self) -> int:
        return int(self.atom_counts.shape[0])


def collate(
    records: Sequence[MoleculeRecord],
    labels: np.ndarray | None = None,
    mask: np.ndarray | None = None,
    dtype: torch.dtype = torch.float32,
    pad_id: int = TokenDictionary.pad_id,
) -> MolBatch:
    x_v, x_e, src, dst, amol, emol = [], [], [], [], [], []
    offset = 0
    for i, r in enumerate(records):
        g = r.graph
        x_v.append(r.x_v)
        x_e.append(r.x_e)
        if g.n_edges:
            e = np.asarray([(s, d) for s, d, _ in g.directed_edges], dtype=np.int64) + offset
            src.append(e[:, 0])
            dst.append(e[:, 1])
        amol.append(np.full(g.n_atoms, i, dtype=np.int64))
        emol.append(np.full(g.n_edges, i, dtype=np.int64))
        offset += g.n_atoms
    cat = lambda xs, w: np.concatenate(xs) if xs else np.zeros((0, w))  # noqa: E731
    lengths = [len(r.token_ids) for r in records]
    ids = np.full((len(records), max(lengths)), pad_id, dtype=np.int64)
    for i, r in enumerate(records):
        ids[i, : len(r.token_ids)] = r.token_ids
    as_long = lambda xs: torch.from_numpy(np.concatenate(xs)) if xs else torch.zeros(0, dtype=torch.long)  # noqa: E731
    batch = MolBatch(
        x_v=torch.from_numpy(cat(x_v, 127)).to(dtype),
        x_e=torch.from_numpy(cat(x_e, 12)).to(dtype),
        edge_src=as_long(src),
        edge_dst=as_long(dst),
        atom_mol=as_long(amol),
        edge_mol=as_long(emol),
        atom_counts=torch.tensor([r.graph.n_atoms for r in records], dtype=torch.long),
        edge_counts=torch.tensor([r.graph.n_edges for r in records], dtype=torch.long),
        token_ids=torch.from_numpy(ids),
        lengths=torch.tensor(lengths, dtype=torch.long),
    )
    if labels is not None:
        batch.labels = torch.from_numpy(np.nan_to_num(np.asarray(labels, dtype=np.float64))).to(dtype)
        batch.mask = torch.from_numpy(np.asarray(mask, dtype=bool))
    return batch
