"""
An experiment through the command line
======================================

The same steps are available as ``hmde <command>`` (or ``python -m hmde``).
Each command takes a JSON run configuration, writes into ``--out``, and
records metrics as JSON lines with a CSV copy. Paths inside the
configuration are relative to the configuration file.

This script drives the commands in-process on a throwaway directory.
"""

import json
import tempfile
from pathlib import Path

from hmde.cli import run_command

work = Path(tempfile.mkdtemp(prefix="hmde-demo-"))
tiny = {"hidden_size": 16, "num_layers": 1, "num_heads": 2, "ff_size": 32}
(work / "gen.json").write_text(json.dumps({
    "seed": 0,
    "data": {"synthetic": {"num_concepts": 40}, "heldout_concepts": 10},
}))
(work / "run.json").write_text(json.dumps({
    "seed": 0,
    "model": {"lower": {**tiny, "init_std": 0.3}, "upper": {**tiny, "max_positions": 40}},
    "pretrain": {"grad_accumulation": 1, "epochs": 3, "base_lr": 3e-3, "warmup_steps": 10},
    "finetune": {"lr": 1e-3, "grad_accumulation": 1, "max_epochs": 10, "warmup_steps": 5},
    "data": {
        "corpus": "gen/corpus.jsonl", "triples": "mine/triples.jsonl", "checkpoint": "pre/model.ckpt",
        "train": "gen/cls_train.jsonl", "val": "gen/cls_val.jsonl",
        "queries": "gen/queries.jsonl", "qrels": "gen/qrels.txt", "collection": "gen/collection.jsonl",
    },
}))


def hmde(*argv, config="run.json"):
    code = run_command([argv[0], "--config", str(work / config), "--out", str(work / argv[1]), *argv[2:]])
    print(f"$ hmde {' '.join(argv[:1] + ('--out', argv[1]) + argv[2:])}  -> exit {code}")


hmde("gen-corpus", "gen", config="gen.json")
hmde("mine", "mine")
print("   ", json.loads((work / "mine" / "mining_stats.json").read_text()))
hmde("pretrain", "pre")
hmde("pretrain", "pre-frozen", "--frozen-lower")
for encoder in ("hmde", "sliding", "truncated"):
    hmde("eval-clir", f"clir-{encoder}", "--encoder", encoder)
    print("   ", (work / f"clir-{encoder}" / "metrics.jsonl").read_text().strip())
print("    first run line:", (work / "clir-hmde" / "run.txt").read_text().splitlines()[0])
hmde("finetune", "ft")
print((work / "ft" / "metrics.csv").read_text())
print("outputs under", work)
