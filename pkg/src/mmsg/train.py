"""Training loop and the multi-seed experiment protocol."""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from mmsg.chem import TokenDictionary, build_dictionary, split_tokens
from mmsg.config import RunConfig
from mmsg.data import DatasetTable, MoleculeRecord, collate, prepare, scaffold_keys
from mmsg.metrics import higher_is_better, masked_task_metric, metric_name
from mmsg.model import MMSG, ModelConfig, masked_bce_loss, mse_loss, save_checkpoint
from mmsg.optim import AdamState, adam_step, noam_lr
from mmsg.splits import SplitAssignment, random_split, scaffold_split

log = logging.getLogger(__name__)


@dataclass
class SeedResult:
    seed: int
    test_metric: float
    best_val_metric: float
    best_epoch: int
    checkpoint: str | None = None
    train_losses: list[float] = field(default_factory=list)


@dataclass
class ExperimentReport:
    metric: str
    per_seed: list[float]
    mean: float
    std: float
    config: dict
    wall_clock: float = 0.0
    seeds: list[SeedResult] = field(default_factory=list)

    def to_json(self) -> str:
        # wall-clock stays out of the file so identical runs give identical bytes
        body = {"metric": self.metric, "per_seed": self.per_seed, "mean": self.mean, "std": self.std, "config": self.config}
        return json.dumps(body, indent=2, sort_keys=True) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def summarize(values: list[float]) -> tuple[float, float]:
    """Mean and population standard deviation."""
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=0))


def torch_dtype(precision: str) -> torch.dtype:
    return {"float32": torch.float32, "float64": torch.float64}[precision]


def model_config(cfg: RunConfig, vocab_size: int, max_len: int, num_tasks: int) -> ModelConfig:
    return ModelConfig(
        vocab_size=vocab_size,
        max_len=max_len,
        num_tasks=num_tasks,
        task_type=cfg.task_type,
        hidden=cfg.gnn_hidden,
        depth=cfg.gnn_depth,
        gru_hidden=cfg.gru_hidden,
        gru_layers=cfg.gru_layers,
        heads=cfg.heads,
        trans_layers=cfg.trans_layers,
        trans_ffn_hidden=cfg.trans_ffn_hidden,
        head_hidden=cfg.ffn_hidden,
        head_layers=cfg.ffn_layers,
        bias_enabled=cfg.bias_enabled,
    )


def make_split(table: DatasetTable, cfg: RunConfig, seed: int, keys: list[str] | None = None) -> SplitAssignment:
    if cfg.split_kind == "random":
        return random_split(len(table), cfg.split_ratios, seed)
    return scaffold_split(keys if keys is not None else scaffold_keys(table.smiles), cfg.split_ratios, seed)


class Trainer:
    """Fits one model on one split with Adam and the warmup/decay schedule."""

    def __init__(self, model: MMSG, cfg: RunConfig, records: list[MoleculeRecord], table: DatasetTable):
        self.model = model
        self.cfg = cfg
        self.records = records
        self.table = table
        self.dtype = torch_dtype(cfg.precision)
        self.task_type = table.task_type

    def batch(self, idx, labels: np.ndarray | None = None):
        labels = self.table.labels[idx] if labels is None else labels[idx]
        return collate([self.records[i] for i in idx], labels, self.table.mask[idx], dtype=self.dtype)

    def loss(self, out, batch):
        if self.task_type == "classification":
            return masked_bce_loss(out, batch.labels, batch.mask)
        return mse_loss(out, batch.labels, batch.mask)

    def predict(self, idx: list[int], batch_size: int | None = None) -> np.ndarray:
        """De-standardised predictions (probabilities for classification)."""
        bs = batch_size or self.cfg.batch_size
        self.model.eval()
        outs = []
        with torch.no_grad():
            for start in range(0, len(idx), bs):
                chunk = idx[start : start + bs]
                outs.append(self.model.predict_values(collate([self.records[i] for i in chunk], dtype=self.dtype)))
        self.model.train()
        return torch.cat(outs).double().numpy() if outs else np.zeros((0, self.table.num_tasks))

    def evaluate(self, idx: list[int]) -> float:
        if not idx:
            return math.nan
        return masked_task_metric(self.predict(idx), self.table.labels[idx], self.table.mask[idx], self.task_type)

    def fit(self, split: SplitAssignment, seed: int) -> SeedResult:
        cfg, model = self.cfg, self.model
        train_idx = list(split.train)
        scaled = self.table.labels.copy()
        if self.task_type == "regression":
            mean, std = standardize_stats(self.table.labels[train_idx], self.table.mask[train_idx])
            scaled = (scaled - mean) / std
            model.target_mean.copy_(torch.as_tensor(mean, dtype=model.target_mean.dtype))
            model.target_std.copy_(torch.as_tensor(std, dtype=model.target_std.dtype))
        params = [p for p in model.parameters() if p.requires_grad]
        state = AdamState()
        steps_per_epoch = math.ceil(len(train_idx) / cfg.batch_size)
        total = cfg.epochs * steps_per_epoch
        warm = cfg.warmup_epochs * steps_per_epoch
        rng = np.random.default_rng(seed)
        better = higher_is_better(self.task_type)
        best_val, best_epoch, best_state = math.nan, -1, None
        losses = []
        step = 0
        model.train()
        for epoch in range(cfg.epochs):
            order = rng.permutation(len(train_idx))
            epoch_loss = 0.0
            for start in range(0, len(order), cfg.batch_size):
                idx = [train_idx[i] for i in order[start : start + cfg.batch_size]]
                b = self.batch(idx, scaled)
                if not bool(b.mask.any()):
                    step += 1
                    continue
                loss = self.loss(model(b), b)
                grads = torch.autograd.grad(loss, params, allow_unused=True)
                adam_step(params, list(grads), state, noam_lr(step, cfg.init_lr, cfg.max_lr, cfg.final_lr, warm, total))
                step += 1
                epoch_loss += float(loss.detach()) * len(idx)
            losses.append(epoch_loss / max(len(train_idx), 1))
            val = self.evaluate(split.val) if split.val else math.nan
            if not split.val:
                improved = True  # nothing to select on; keep the latest
            elif best_state is None or math.isnan(best_val):
                improved = True
            else:
                improved = val > best_val if better else val < best_val
            if improved:
                best_val, best_epoch = val, epoch
                best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
            log.debug("seed %d epoch %d loss %.6f val %s", seed, epoch, losses[-1], val)
        model.load_state_dict(best_state)
        test = self.evaluate(split.test) if split.test else math.nan
        return SeedResult(seed, test, best_val, best_epoch, train_losses=losses)


def standardize_stats(labels: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = np.zeros(labels.shape[1])
    std = np.ones(labels.shape[1])
    for k in range(labels.shape[1]):
        vals = labels[mask[:, k], k]
        if vals.size:
            mean[k] = vals.mean()
            s = vals.std()
            std[k] = s if s > 0 else 1.0
    return mean, std


def prepare_records(table: DatasetTable, dictionary: TokenDictionary, max_len: int) -> list[MoleculeRecord]:
    return [prepare(s, dictionary, max_len) for s in table.smiles]


def default_threads() -> int:
    raw = os.environ.get("MMSG_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            log.warning("ignoring non-integer MMSG_THREADS=%r", raw)
    return os.cpu_count() or 1


def run_experiment(
    table: DatasetTable,
    cfg: RunConfig,
    dictionary: TokenDictionary | None = None,
    output_dir: str | Path | None = None,
    threads: int | None = None,
) -> ExperimentReport:
    """Train and test once per seed, then aggregate the test metric."""
    t0 = time.perf_counter()
    dictionary = dictionary or build_dictionary(table.smiles)
    max_len = cfg.max_len or max(len(split_tokens(s)) for s in table.smiles)
    records = prepare_records(table, dictionary, max_len)
    keys = scaffold_keys(table.smiles) if cfg.split_kind == "scaffold" else None
    mcfg = model_config(cfg, len(dictionary), max_len, table.num_tasks)
    out = Path(output_dir) if output_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    def one(seed: int) -> SeedResult:
        split = make_split(table, cfg, seed, keys)
        model = MMSG(mcfg, torch.Generator().manual_seed(seed)).to(torch_dtype(cfg.precision))
        result = Trainer(model, cfg, records, table).fit(split, seed)
        if out is not None:
            path = out / f"{table.name}-{cfg.split_kind}-{seed}.ckpt"
            save_checkpoint(path, model, dictionary, table.task_names, {"seed": seed, "split": split.subsets()})
            result.checkpoint = str(path)
        log.info("seed %d: test %s %.6f (best val %.6f at epoch %d)", seed, metric_name(cfg.task_type), result.test_metric, result.best_val_metric, result.best_epoch)
        return result

    workers = min(threads or default_threads(), len(cfg.seeds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, cfg.seeds))
    else:
        results = [one(s) for s in cfg.seeds]
    per_seed = [r.test_metric for r in results]
    mean, std = summarize(per_seed)
    elapsed = time.perf_counter() - t0
    log.info("%s over %d seeds: mean %.6f std %.6f (%.1f s)", metric_name(cfg.task_type), len(per_seed), mean, std, elapsed)
    return ExperimentReport(metric_name(cfg.task_type), per_seed, mean, std, cfg.to_dict(), elapsed, results)
