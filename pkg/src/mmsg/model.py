"""Fused graph + sequence model, its losses, and checkpoint I/O."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from mmsg.bmc import BMCEncoder, GraphEmbeddings
from mmsg.chem import TokenDictionary
from mmsg.data import MolBatch, collate, prepare
from mmsg.diffcore import init_parameters
from mmsg.errors import AllMasked, ConfigError, EmptyBatch, ShapeMismatch
from mmsg.featurize import ATOM_DIM, BOND_DIM
from mmsg.sequence import SequenceEncoder

CHECKPOINT_FORMAT = "mmsg-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    vocab_size: int
    max_len: int
    num_tasks: int = 1
    task_type: str = "regression"
    hidden: int = 128
    depth: int = 2
    gru_hidden: int = 128
    gru_layers: int = 1
    heads: int = 16
    trans_layers: int = 6
    trans_ffn_hidden: int | None = None
    head_hidden: int = 128
    head_layers: int = 2
    bias_enabled: bool = True

    def __post_init__(self) -> None:
        if self.num_tasks < 1:
            raise ConfigError("num_tasks must be >= 1")
        if self.task_type not in ("classification", "regression"):
            raise ConfigError(f"unknown task_type {self.task_type!r}")
        if self.hidden % self.heads:
            raise ConfigError(f"hidden {self.hidden} must be divisible by heads {self.heads}")
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")


class MMSG(nn.Module):
    """Y = FFN(H_S + H_V), with H_E steering the sequence attention."""

    def __init__(self, config: ModelConfig, generator: torch.Generator | None = None):
        super().__init__()
        self.config = config
        c = config
        self.bmc = BMCEncoder(c.hidden, c.depth, ATOM_DIM, BOND_DIM)
        self.seq = SequenceEncoder(
            vocab_size=c.vocab_size,
            d=c.hidden,
            heads=c.heads,
            layers=c.trans_layers,
            max_len=c.max_len,
            gru_hidden=c.gru_hidden,
            gru_layers=c.gru_layers,
            ffn_hidden=c.trans_ffn_hidden,
            bond_dim=c.hidden,
        )
        head: list[nn.Module] = []
        width = c.hidden
        for _ in range(c.head_layers):
            head += [nn.Linear(width, c.head_hidden), nn.ReLU()]
            width = c.head_hidden
        head.append(nn.Linear(width, c.num_tasks))
        self.head = nn.Sequential(*head)
        # regression targets are standardised during training
        self.register_buffer("target_mean", torch.zeros(c.num_tasks))
        self.register_buffer("target_std", torch.ones(c.num_tasks))
        if generator is None:
            generator = torch.Generator().manual_seed(0)
        init_parameters(self, generator)

    def encode(self, batch: MolBatch) -> tuple[Tensor, GraphEmbeddings]:
        """Fused pre-head representation H_S + H_V."""
        graph = self.bmc(batch)
        H_E = graph.H_E if self.config.bias_enabled else None
        _, H_S = self.seq(batch.token_ids, batch.lengths, H_E)
        return H_S + graph.H_V, graph

    def forward(self, batch: MolBatch) -> Tensor:
        """Raw outputs in the standardised target space (logits for classification)."""
        fused, _ = self.encode(batch)
        return self.head(fused)

    def predict_values(self, batch: MolBatch) -> Tensor:
        """Probabilities for classification, de-standardised values for regression."""
        out = self(batch)
        if self.config.task_type == "classification":
            return torch.sigmoid(out)
        return out * self.target_std + self.target_mean

    @property
    def dtype(self) -> torch.dtype:
        return self.head[-1].weight.dtype


def predict(model: MMSG, smiles: str | list[str], dictionary: TokenDictionary) -> Tensor:
    """Raw per-task outputs for one SMILES (1-D) or a list (2-D)."""
    single = isinstance(smiles, str)
    items = [smiles] if single else smiles
    records = [prepare(s, dictionary, model.config.max_len) for s in items]
    with torch.no_grad():
        out = model(collate(records, dtype=model.dtype))
    return out[0] if single else out


def export_embedding(model: MMSG, smiles: str | list[str], dictionary: TokenDictionary) -> Tensor:
    single = isinstance(smiles, str)
    items = [smiles] if single else smiles
    records = [prepare(s, dictionary, model.config.max_len) for s in items]
    with torch.no_grad():
        fused, _ = model.encode(collate(records, dtype=model.dtype))
    return fused[0] if single else fused


def masked_bce_loss(logits: Tensor, labels: Tensor, mask: Tensor) -> Tensor:
    """Mean binary cross-entropy with logits over unmasked entries."""
    if logits.shape != labels.shape or labels.shape != mask.shape:
        raise ShapeMismatch(f"logits {tuple(logits.shape)}, labels {tuple(labels.shape)}, mask {tuple(mask.shape)}")
    mask = mask.bool()
    count = int(mask.sum())
    if count == 0:
        raise AllMasked("every label is masked")
    safe = torch.where(mask, labels, torch.zeros_like(labels))
    per = F.binary_cross_entropy_with_logits(logits, safe, reduction="none")
    return torch.where(mask, per, torch.zeros_like(per)).sum() / count


def mse_loss(preds: Tensor, targets: Tensor, mask: Tensor | None = None) -> Tensor:
    if preds.shape != targets.shape:
        raise ShapeMismatch(f"preds {tuple(preds.shape)} vs targets {tuple(targets.shape)}")
    if preds.numel() == 0:
        raise EmptyBatch("mse of an empty batch")
    if mask is None:
        return ((preds - targets) ** 2).mean()
    mask = mask.bool()
    count = int(mask.sum())
    if count == 0:
        raise AllMasked("every target is masked")
    sq = torch.where(mask, (preds - torch.where(mask, targets, torch.zeros_like(targets))) ** 2, torch.zeros_like(preds))
    return sq.sum() / count


def rmse(preds: Tensor, targets: Tensor, mask: Tensor | None = None) -> Tensor:
    return mse_loss(preds, targets, mask).sqrt()


def save_checkpoint(path: str | Path, model: MMSG, dictionary: TokenDictionary, task_names: list[str], extra: dict | None = None) -> None:
    state = {k: v.detach().cpu() for k, v in model.state_dict().items()}
    torch.save(
        {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": asdict(model.config),
            "dtype": str(model.dtype).removeprefix("torch."),
            "tokens": list(dictionary.tokens),
            "task_names": list(task_names),
            "shapes": {k: list(v.shape) for k, v in state.items()},
            "params": state,
            "extra": extra or {},
        },
        path,
    )


def load_checkpoint(path: str | Path) -> tuple[MMSG, TokenDictionary, dict]:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    if blob.get("format") != CHECKPOINT_FORMAT or "version" not in blob:
        raise ConfigError(f"{path} is not a model checkpoint")
    if blob["version"] > CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: checkpoint version {blob['version']} is newer than supported")
    known = {f.name for f in fields(ModelConfig)}
    config = ModelConfig(**{k: v for k, v in blob["config"].items() if k in known})
    model = MMSG(config).to(getattr(torch, blob["dtype"]))
    for name, shape in blob["shapes"].items():
        if list(blob["params"][name].shape) != shape:
            raise ConfigError(f"{path}: tensor {name} has shape {list(blob['params'][name].shape)}, header says {shape}")
    model.load_state_dict(blob["params"])
    model.eval()
    tokens = blob["tokens"]
    dictionary = TokenDictionary(tokens[2:])
    return model, dictionary, blob
