"""Command-line driver: synthetic data, mining, pretraining, fine-tuning and evaluation.

Every command reads a JSON run configuration and writes its outputs under
``--out``. Exit status is 0 on success, 1 for invalid input or usage, and 2
for file-system errors.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from threadpoolctl import threadpool_limits

from .checkpoint import checkpoint_from_model, load_checkpoint, model_from_checkpoint, save_checkpoint
from .corpus import build_vocab, downsample_triples, load_dump, load_triples, mine_triples_with_stats, write_dump, write_triples
from .model import HmdeConfig, HmdeModel, set_lower_frozen
from .pipeline import (
    ClassifierHead,
    FinetuneConfig,
    PretrainConfig,
    evaluate_accuracy,
    finetune_classifier,
    pretrain,
)
from .retrieval import ENCODERS, build_index, load_qrels, load_queries, mean_average_precision, retrieve, write_qrels, write_queries, write_run
from .synthetic import CorpusSpec, classification_split, generate_synthetic_corpus, retrieval_task, split_heldout
from .transformer import TransformerConfig

log = logging.getLogger("hmde")

COMMANDS = ("gen-corpus", "mine", "pretrain", "finetune", "eval-cls", "eval-clir")
METRIC_KEYS = ("task", "split", "metric", "value", "config_hash", "seed")
PATH_KEYS = ("corpus", "triples", "checkpoint", "train", "val", "test", "queries", "qrels", "collection")


class UsageError(Exception):
    """Bad command line or configuration; maps to exit status 1."""


# -- run configuration -----------------------------------------------------------------


@dataclass
class DataConfig:
    synthetic: dict = field(default_factory=dict)
    heldout_concepts: int = 0
    val_fraction: float = 0.2
    languages: list[str] | None = None
    corpus: str | None = None
    triples: str | None = None
    checkpoint: str | None = None
    train: str | None = None
    val: str | None = None
    test: str | None = None
    queries: str | None = None
    qrels: str | None = None
    collection: str | None = None


@dataclass
class EvalConfig:
    segment_len: int = 128
    top_k: int | None = None
    encoder: str = "hmde"


@dataclass
class RunConfig:
    model: HmdeConfig
    pretrain: PretrainConfig
    finetune: FinetuneConfig
    data: DataConfig
    eval: EvalConfig
    seed: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    @property
    def corpus_spec(self) -> CorpusSpec:
        _check_keys(CorpusSpec, self.data.synthetic, "data.synthetic")
        try:
            return CorpusSpec(**{**self.data.synthetic, "seed": self.seed})
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid 'data.synthetic' section: {exc}") from None

    @property
    def languages(self) -> list[str]:
        return list(self.data.languages or self.corpus_spec.languages)


def _check_keys(cls, values: dict, where: str) -> None:
    if not isinstance(values, dict):
        raise UsageError(f"config section '{where}' must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in values:
        if key not in names:
            raise UsageError(f"unknown config key '{where}.{key}'")
        if key == "seed":
            raise UsageError(f"'{where}.seed' is not settable; use the top-level 'seed'")


def _build(cls, values: dict, where: str):
    _check_keys(cls, values, where)
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid '{where}' section: {exc}") from None


def resolve_config(raw: dict, base_dir: Path | None = None) -> RunConfig:
    """Validate a configuration mapping; unknown keys at any level are rejected."""
    _check_keys(RunConfig, {k: v for k, v in raw.items() if k != "seed"}, "config")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise UsageError(f"'seed' must be a non-negative integer, got {seed!r}")

    model_raw = dict(raw.get("model", {}))
    _check_keys(HmdeConfig, model_raw, "model")
    for part in ("lower", "upper"):
        if part in model_raw:
            model_raw[part] = _build(TransformerConfig, model_raw[part], f"model.{part}")
    model = _build(HmdeConfig, model_raw, "model")
    model.seed = seed

    pre_raw = dict(raw.get("pretrain", {}))
    _check_keys(PretrainConfig, pre_raw, "pretrain")
    if "temperature" in pre_raw and pre_raw["temperature"] != model.temperature:
        raise UsageError("'pretrain.temperature' disagrees with 'model.temperature'")
    pre_raw["temperature"] = model.temperature
    pre = _build(PretrainConfig, pre_raw, "pretrain")
    pre.seed = seed

    fine = _build(FinetuneConfig, raw.get("finetune", {}), "finetune")
    fine.seed = seed
    data = _build(DataConfig, raw.get("data", {}), "data")
    ev = _build(EvalConfig, raw.get("eval", {}), "eval")
    if ev.encoder not in ENCODERS:
        raise UsageError(f"unknown encoder '{ev.encoder}' in 'eval.encoder'")
    if base_dir is not None:
        for key in PATH_KEYS:
            value = getattr(data, key)
            if value is not None:
                setattr(data, key, str(base_dir / value))
    cfg = RunConfig(model, pre, fine, data, ev, seed)
    cfg.corpus_spec  # validates the synthetic section early
    return cfg


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return resolve_config({})
    p = Path(path)
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(raw, dict):
        raise UsageError(f"{path}: the configuration must be a JSON object")
    return resolve_config(raw, p.resolve().parent)


# -- metrics -----------------------------------------------------------------------------


def emit_metrics(results: Sequence[dict], path: str | Path) -> None:
    """One JSON object per line at ``path`` plus a CSV mirror next to it (``.csv``)."""
    path = Path(path)
    rows = [{k: r[k] for k in METRIC_KEYS} for r in results]
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    with open(path.with_suffix(".csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_KEYS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _metric(cfg: RunConfig, task: str, split: str, metric: str, value: float) -> dict:
    return {"task": task, "split": split, "metric": metric, "value": value, "config_hash": cfg.hash, "seed": cfg.seed}


def _write_json(obj: Any, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _require(cfg: RunConfig, *keys: str) -> list[str]:
    paths = []
    for key in keys:
        value = getattr(cfg.data, key)
        if value is None:
            raise UsageError(f"this command needs 'data.{key}' in the config")
        if not Path(value).is_file():
            raise FileNotFoundError(f"data.{key}: no such file '{value}'")
        paths.append(value)
    return paths


# -- commands ------------------------------------------------------------------------------


def cmd_gen_corpus(cfg: RunConfig, args, out: Path) -> None:
    spec = cfg.corpus_spec
    docs = generate_synthetic_corpus(spec)
    train_docs, held_docs = split_heldout(docs, cfg.data.heldout_concepts)
    l1, l2 = spec.languages[:2]
    write_dump(train_docs, out / "corpus.jsonl", labeled=True)
    if held_docs:
        write_dump(held_docs, out / "heldout.jsonl", labeled=True)
    task = retrieval_task(held_docs or docs, l1, l2)
    write_queries(task.queries, out / "queries.jsonl")
    write_qrels(task.qrels, out / "qrels.txt")
    write_dump(task.collection, out / "collection.jsonl")
    train, val, test = classification_split(train_docs, l1, l2, cfg.data.val_fraction, cfg.seed)
    for name, part in (("train", train), ("val", val), ("test", test)):
        write_dump(part, out / f"cls_{name}.jsonl", labeled=True)
    _write_json(spec.to_dict(), out / "corpus_spec.json")
    log.info("wrote %d documents (%d held out)", len(docs), len(held_docs))


def cmd_mine(cfg: RunConfig, args, out: Path) -> None:
    (corpus,) = _require(cfg, "corpus")
    docs = load_dump(corpus, labeled=_has_labels(corpus))
    triples, stats = mine_triples_with_stats(docs, cfg.languages, cfg.seed)
    summary = stats.to_dict()
    if args.downsample is not None:
        triples = downsample_triples(triples, args.downsample, cfg.seed)
        summary["downsampled_to"] = len(triples)
    write_triples(triples, out / "triples.jsonl")
    _write_json(summary, out / "mining_stats.json")
    log.info("mined %d triples", len(triples))


def cmd_pretrain(cfg: RunConfig, args, out: Path) -> None:
    corpus, triples_path = _require(cfg, "corpus", "triples")
    docs = load_dump(corpus, labeled=_has_labels(corpus))
    triples = load_triples(triples_path)
    if args.downsample is not None:
        triples = downsample_triples(triples, args.downsample, cfg.seed)
    vocab = build_vocab(docs)
    vocab.save(out / "vocab.txt")
    model = HmdeModel(cfg.model, vocab)
    set_lower_frozen(model, args.frozen_lower)
    save_checkpoint(out / "init.ckpt", checkpoint_from_model(model))
    result = pretrain(model, triples, docs, cfg.pretrain)
    save_checkpoint(out / "model.ckpt", checkpoint_from_model(model))
    _write_json(
        {"batch_losses": result.batch_losses, "step_losses": result.step_losses, "step_lrs": result.step_lrs},
        out / "pretrain_trace.json",
    )
    emit_metrics(
        [
            _metric(cfg, "pretrain", "train", "optimizer_steps", result.optimizer_steps),
            _metric(cfg, "pretrain", "train", "final_step_loss", result.step_losses[-1]),
        ],
        out / "metrics.jsonl",
    )


def _load_model(cfg: RunConfig):
    (ckpt,) = _require(cfg, "checkpoint")
    return model_from_checkpoint(load_checkpoint(ckpt))


def cmd_finetune(cfg: RunConfig, args, out: Path) -> None:
    train_path, val_path = _require(cfg, "train", "val")
    model, _ = _load_model(cfg)
    train, val = load_dump(train_path, labeled=True), load_dump(val_path, labeled=True)
    head = ClassifierHead.init(cfg.finetune.num_classes, model.config.hidden_size, seed=cfg.seed)
    result = finetune_classifier(
        model, head, train, [d.label for d in train], val, [d.label for d in val], cfg.finetune
    )
    save_checkpoint(out / "finetuned.ckpt", checkpoint_from_model(model, head))
    _write_json(dataclasses.asdict(result), out / "finetune_trace.json")
    emit_metrics(
        [
            _metric(cfg, "xldc", "val", "loss", min(result.val_losses)),
            _metric(cfg, "xldc", "val", "accuracy", evaluate_accuracy(model, head, val, [d.label for d in val])),
            _metric(cfg, "xldc", "val", "best_epoch", result.best_epoch),
        ],
        out / "metrics.jsonl",
    )


def cmd_eval_cls(cfg: RunConfig, args, out: Path) -> None:
    (test_path,) = _require(cfg, "test")
    model, head = _load_model(cfg)
    if head is None:
        raise UsageError("the checkpoint has no classifier head; run 'finetune' first")
    test = load_dump(test_path, labeled=True)
    acc = evaluate_accuracy(model, head, test, [d.label for d in test])
    emit_metrics([_metric(cfg, "xldc", "test", "accuracy", acc)], out / "metrics.jsonl")


def cmd_eval_clir(cfg: RunConfig, args, out: Path) -> None:
    queries_path, qrels_path, coll_path = _require(cfg, "queries", "qrels", "collection")
    model, _ = _load_model(cfg)
    encoder = args.encoder or cfg.eval.encoder
    collection = load_dump(coll_path, labeled=_has_labels(coll_path))
    index = build_index(collection, model, encoder, cfg.eval.segment_len)
    run = retrieve(load_queries(queries_path), index, model, cfg.eval.top_k)
    write_run(run, out / "run.txt", tag=encoder)
    score = mean_average_precision(run, load_qrels(qrels_path))
    emit_metrics([_metric(cfg, f"clir-{encoder}", "test", "map", score)], out / "metrics.jsonl")


def _has_labels(path: str) -> bool:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                try:
                    return "label" in json.loads(line)
                except json.JSONDecodeError:
                    return False
    return False


HANDLERS = {
    "gen-corpus": cmd_gen_corpus,
    "mine": cmd_mine,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "eval-cls": cmd_eval_cls,
    "eval-clir": cmd_eval_clir,
}


# -- argument parsing -------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _nonneg_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{text}' is not an integer") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"'{text}' must be >= 0")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (defaults apply when omitted)")
    common.add_argument("--seed", type=_nonneg_int, help="override the configured seed")
    common.add_argument("--out", required=True, help="output directory (created if missing)")
    common.add_argument("--segmentation", choices=("sentence", "chunk"), help="override model.segmentation")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    extra = {
        "gen-corpus": [],
        "mine": ["downsample"],
        "pretrain": ["frozen-lower", "downsample"],
        "finetune": [],
        "eval-cls": [],
        "eval-clir": ["encoder"],
    }
    helps = {
        "gen-corpus": "generate a synthetic comparable corpus and its evaluation splits",
        "mine": "mine cross-lingual training triples",
        "pretrain": "contrastive pretraining from mined triples",
        "finetune": "fine-tune a classifier head on labeled documents",
        "eval-cls": "classification accuracy on a labeled test set",
        "eval-clir": "cross-lingual retrieval run and MAP",
    }
    parser = _Parser(prog="hmde", formatter_class=argparse.RawDescriptionHelpFormatter, description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)
    lines = ["commands and flags:"]
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=helps[name], description=helps[name])
        p.set_defaults(downsample=None, frozen_lower=False, encoder=None)
        if "downsample" in extra[name]:
            p.add_argument("--downsample", type=_nonneg_int, metavar="N", help="keep a seeded sample of N triples")
        if "frozen-lower" in extra[name]:
            p.add_argument("--frozen-lower", action="store_true", help="train only the upper stack and DBOS")
        if "encoder" in extra[name]:
            p.add_argument("--encoder", choices=ENCODERS, help="document encoder (default: eval.encoder)")
        lines.append("  " + p.format_usage().strip().removeprefix("usage: "))
    lines.append("\nenvironment: HMDE_THREADS caps BLAS threads (default 1)")
    parser.epilog = "\n".join(lines)
    return parser


def run_command(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            _reseed(cfg, args.seed)
        if args.segmentation is not None:
            cfg.model.segmentation = args.segmentation
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(cfg.to_dict(), out / "resolved_config.json")
        threads = _thread_cap()
        with threadpool_limits(limits=threads):
            HANDLERS[args.command](cfg, args, out)
    except OSError as exc:
        print(f"hmde {args.command}: I/O error: {exc}", file=sys.stderr)
        return 2
    except (UsageError, ValueError) as exc:
        print(f"hmde {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def _reseed(cfg: RunConfig, seed: int) -> None:
    cfg.seed = seed
    cfg.model.seed = cfg.pretrain.seed = cfg.finetune.seed = seed


def _thread_cap() -> int:
    text = os.environ.get("HMDE_THREADS", "1")
    if not text.isdigit() or int(text) < 1:
        raise UsageError(f"HMDE_THREADS must be a positive integer, got '{text}'")
    return int(text)


def main() -> None:
    sys.exit(run_command())
