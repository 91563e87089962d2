"""Command-line entry point: ``mmsg <command> ...``.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 failed check.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np
import torch

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3

log = logging.getLogger("mmsg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits 2 by default; 2 is reserved for data errors here
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _read_smiles(path: str | None) -> list[str]:
    text = sys.stdin.read() if path in (None, "-") else Path(path).read_text(encoding="utf-8")
    rows = [line.strip() for line in text.splitlines()]
    rows = [r for r in rows if r]
    if rows and rows[0].lower() == "smiles":
        rows = rows[1:]
    return [r.split(",")[0].strip() for r in rows]


def _write_csv(path: str | None, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if path in (None, "-"):
        sys.stdout.write(buf.getvalue())
    else:
        Path(path).write_text(buf.getvalue(), encoding="utf-8")


def cmd_build_vocab(args) -> int:
    from mmsg.chem import build_dictionary
    from mmsg.data import load_csv

    table = load_csv(args.data, args.task_type)
    d = build_dictionary(table.smiles)
    d.save(args.out)
    print(f"wrote {len(d)} tokens to {args.out}")
    return EXIT_OK


def cmd_split(args) -> int:
    from mmsg.data import load_csv, scaffold_keys
    from mmsg.splits import random_split, scaffold_split

    table = load_csv(args.data, args.task_type)
    if args.kind == "random":
        split = random_split(len(table), args.ratios, args.seed)
    else:
        split = scaffold_split(scaffold_keys(table.smiles), args.ratios, args.seed)
    text = split.to_json()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_train(args) -> int:
    from mmsg.config import RunConfig
    from mmsg.chem import TokenDictionary
    from mmsg.data import load_csv
    from mmsg.train import run_experiment

    cfg = RunConfig.load(args.config)
    if args.data:
        cfg.dataset_path = args.data
    if args.output_dir:
        cfg.output_dir = args.output_dir
    if args.seeds:
        cfg.seeds = args.seeds
    cfg.validate()
    cfg.warn_out_of_range()
    if not cfg.dataset_path:
        raise UsageError("no dataset: set dataset_path in the config or pass --data")
    table = load_csv(cfg.dataset_path, cfg.task_type, cfg.task_columns)
    vocab = TokenDictionary.load(args.vocab) if args.vocab else None
    report = run_experiment(table, cfg, vocab, cfg.output_dir, threads=args.threads)
    report_path = Path(args.report) if args.report else Path(cfg.output_dir) / "report.json"
    report.write(report_path)
    print(f"{report.metric}: mean {report.mean:.6f} std {report.std:.6f} over {len(report.per_seed)} seeds -> {report_path}")
    return EXIT_OK


def _load_model(path: str):
    from mmsg.model import load_checkpoint

    return load_checkpoint(path)


def cmd_eval(args) -> int:
    from mmsg.data import collate, load_csv, prepare
    from mmsg.metrics import masked_task_metric, metric_name

    model, dictionary, blob = _load_model(args.checkpoint)
    table = load_csv(args.data, model.config.task_type, blob["task_names"])
    idx = list(range(len(table)))
    if args.split_file:
        idx = json.loads(Path(args.split_file).read_text(encoding="utf-8"))[args.subset]
    elif args.subset != "all":
        saved = blob.get("extra", {}).get("split")
        if not saved:
            raise UsageError("checkpoint carries no split; pass --split-file or --subset all")
        idx = saved[args.subset]
    preds = []
    for start in range(0, len(idx), 64):
        recs = [prepare(table.smiles[i], dictionary, model.config.max_len) for i in idx[start : start + 64]]
        preds.append(model.predict_values(collate(recs, dtype=model.dtype)).double().numpy())
    value = masked_task_metric(np.concatenate(preds), table.labels[idx], table.mask[idx], model.config.task_type)
    print(f"{metric_name(model.config.task_type)} {value:.6f}")
    return EXIT_OK


def cmd_predict(args) -> int:
    from mmsg.data import collate, prepare

    model, dictionary, blob = _load_model(args.checkpoint)
    smiles = _read_smiles(args.input)
    rows = []
    for s in smiles:
        out = model.predict_values(collate([prepare(s, dictionary, model.config.max_len)], dtype=model.dtype))[0]
        rows.append([s] + [repr(float(v)) for v in out])
    _write_csv(args.out, ["smiles"] + list(blob["task_names"]), rows)
    return EXIT_OK


def cmd_embed(args) -> int:
    from mmsg.model import export_embedding

    model, dictionary, _ = _load_model(args.checkpoint)
    smiles = _read_smiles(args.input)
    rows = [[s] + [repr(float(v)) for v in export_embedding(model, s, dictionary)] for s in smiles]
    _write_csv(args.out, ["smiles"] + [f"e{i}" for i in range(model.config.hidden)], rows)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from mmsg.chem import build_dictionary, split_tokens
    from mmsg.data import collate, prepare
    from mmsg.diffcore import grad_check
    from mmsg.model import MMSG, ModelConfig, masked_bce_loss

    d = build_dictionary([args.smiles])
    n = len(split_tokens(args.smiles))
    cfg = ModelConfig(
        vocab_size=len(d), max_len=n, num_tasks=1, task_type="classification",
        hidden=args.hidden, depth=args.depth, gru_hidden=args.hidden, heads=args.heads,
        trans_layers=args.layers, head_hidden=args.hidden,
    )
    gen = torch.Generator().manual_seed(args.seed)
    model = MMSG(cfg, gen).double()
    with torch.no_grad():  # move biases off zero so every path carries signal
        for p in model.parameters():
            p.add_(0.1 * torch.randn(p.shape, generator=gen, dtype=p.dtype))
    batch = collate([prepare(args.smiles, d, n)], [[1.0]], [[True]], dtype=torch.float64)
    result = grad_check(
        lambda: masked_bce_loss(model(batch), batch.labels, batch.mask),
        list(model.named_parameters()),
        step=args.step,
        tolerance=args.tolerance,
        samples_per_param=args.samples or None,
        generator=torch.Generator().manual_seed(args.seed),
    )
    ok = result.passed(args.tolerance)
    print(f"max_rel_error {result.max_rel_error:.3e} checked {result.checked} skipped_kinks {result.skipped_kinks} worst {result.worst or '-'}")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mmsg", description="Graph + SMILES molecular property models.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("build-vocab", help="write the token dictionary of a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--task-type", default="regression", choices=["classification", "regression"])
    s.set_defaults(func=cmd_build_vocab)

    s = sub.add_parser("split", help="write train/val/test indices as JSON")
    s.add_argument("--data", required=True)
    s.add_argument("--kind", default="random", choices=["random", "scaffold"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--ratios", type=float, nargs=3, default=[0.8, 0.1, 0.1])
    s.add_argument("--task-type", default="regression", choices=["classification", "regression"])
    s.add_argument("--out")
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("train", help="run the multi-seed experiment from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--data", help="overrides dataset_path")
    s.add_argument("--output-dir", help="overrides output_dir")
    s.add_argument("--seeds", type=int, nargs="+", help="overrides seeds")
    s.add_argument("--vocab", help="dictionary file from build-vocab")
    s.add_argument("--report", help="report path (default: <output_dir>/report.json)")
    s.add_argument("--threads", type=int, help="parallel seeds (default: MMSG_THREADS or core count)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="score a checkpoint on a dataset")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--subset", default="test", choices=["train", "val", "test", "all"])
    s.add_argument("--split-file")
    s.set_defaults(func=cmd_eval)

    for name, func, what in (("predict", cmd_predict, "per-task outputs"), ("embed", cmd_embed, "fused embeddings")):
        s = sub.add_parser(name, help=f"write {what} as CSV")
        s.add_argument("--checkpoint", required=True)
        s.add_argument("--input", help="SMILES file, one per line (default: stdin)")
        s.add_argument("--out", help="CSV path (default: stdout)")
        s.set_defaults(func=func)

    s = sub.add_parser("gradcheck", help="finite-difference check of a fresh model")
    s.add_argument("--smiles", default="CCO")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--hidden", type=int, default=8)
    s.add_argument("--depth", type=int, default=2)
    s.add_argument("--layers", type=int, default=1)
    s.add_argument("--heads", type=int, default=1)
    s.add_argument("--step", type=float, default=1e-5)
    s.add_argument("--tolerance", type=float, default=1e-4)
    s.add_argument("--samples", type=int, default=0, help="coordinates per tensor (0: all)")
    s.set_defaults(func=cmd_gradcheck)
    return p


def _apply_thread_cap() -> None:
    from mmsg.train import default_threads

    torch.set_num_threads(default_threads())


def main(argv: list[str] | None = None) -> int:
    from mmsg.config import RangeWarning
    from mmsg.errors import ConfigError, DataError, MmsgError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.captureWarnings(True)
    warnings.simplefilter("always", RangeWarning)
    _apply_thread_cap()
    inference = args.command in ("eval", "predict", "embed")
    try:
        with torch.no_grad() if inference else contextlib.nullcontext():
            return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"mmsg {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"mmsg {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MmsgError as exc:
        print(f"mmsg {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
