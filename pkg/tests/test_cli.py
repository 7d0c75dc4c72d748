import csv
import json

import numpy as np
import pytest

from hmde.checkpoint import load_checkpoint
from hmde.cli import COMMANDS, UsageError, emit_metrics, resolve_config, run_command

TINY_MODEL = {
    "lower": {"hidden_size": 8, "num_layers": 1, "num_heads": 2, "ff_size": 16, "max_positions": 130},
    "upper": {"hidden_size": 8, "num_layers": 1, "num_heads": 2, "ff_size": 16, "max_positions": 40},
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A generated corpus plus a run config pointing at the files the commands produce."""
    root = tmp_path_factory.mktemp("cli")
    (root / "gen.json").write_text(json.dumps(
        {"seed": 3, "data": {"synthetic": {"num_concepts": 12, "sentences_per_doc": [2, 4]}, "heldout_concepts": 4}}
    ))
    assert run_command(["gen-corpus", "--config", str(root / "gen.json"), "--out", str(root / "g")]) == 0
    cfg = {
        "seed": 3,
        "model": TINY_MODEL,
        "pretrain": {"grad_accumulation": 2, "base_lr": 1e-2, "warmup_steps": 2},
        "finetune": {"max_epochs": 2, "warmup_steps": 1, "lr": 1e-3},
        "data": {
            "corpus": "g/corpus.jsonl", "triples": "m/triples.jsonl", "checkpoint": "p/model.ckpt",
            "train": "g/cls_train.jsonl", "val": "g/cls_val.jsonl", "test": "g/cls_test.jsonl",
            "queries": "g/queries.jsonl", "qrels": "g/qrels.txt", "collection": "g/collection.jsonl",
        },
    }
    (root / "run.json").write_text(json.dumps(cfg))
    cfg["data"]["checkpoint"] = "f/finetuned.ckpt"
    (root / "eval.json").write_text(json.dumps(cfg))
    return root


def hmde(ws, *argv, config="run.json"):
    out = str(ws / argv[1]) if len(argv) > 1 else None
    args = [argv[0], "--config", str(ws / config), "--out", out, *argv[2:]]
    return run_command(args)


def read_metrics(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


@pytest.fixture(scope="module")
def pipeline_run(workspace):
    ws = workspace
    assert hmde(ws, "mine", "m") == 0
    assert hmde(ws, "pretrain", "p") == 0
    assert hmde(ws, "finetune", "f") == 0
    return ws


def test_gen_corpus_outputs(workspace):
    names = {p.name for p in (workspace / "g").iterdir()}
    assert {"corpus.jsonl", "heldout.jsonl", "queries.jsonl", "qrels.txt", "collection.jsonl",
            "cls_train.jsonl", "cls_val.jsonl", "cls_test.jsonl", "corpus_spec.json"} <= names
    assert len((workspace / "g" / "queries.jsonl").read_text().splitlines()) == 4


def test_mine_writes_triples_and_stats(pipeline_run):
    stats = json.loads((pipeline_run / "m" / "mining_stats.json").read_text())
    assert {"concepts_kept", "pairs_dropped_no_negative", "triples"} <= set(stats)
    lines = (pipeline_run / "m" / "triples.jsonl").read_text().splitlines()
    assert len(lines) == stats["triples"] > 0


def test_mine_downsample(pipeline_run):
    assert hmde(pipeline_run, "mine", "m_small", "--downsample", "3") == 0
    assert len((pipeline_run / "m_small" / "triples.jsonl").read_text().splitlines()) == 3


def test_pretrain_outputs(pipeline_run):
    p = pipeline_run / "p"
    trace = json.loads((p / "pretrain_trace.json").read_text())
    steps = {m["metric"]: m["value"] for m in read_metrics(p / "metrics.jsonl")}
    assert len(trace["step_losses"]) == steps["optimizer_steps"]
    assert (p / "vocab.txt").read_text().splitlines()[:3] == ["[PAD]", "[UNK]", "[BOS]"]


def test_frozen_lower_leaves_lower_tensors_untouched(pipeline_run):
    assert hmde(pipeline_run, "pretrain", "pf", "--frozen-lower") == 0
    init = load_checkpoint(pipeline_run / "pf" / "init.ckpt").tensors
    final = load_checkpoint(pipeline_run / "pf" / "model.ckpt").tensors
    lower = [k for k in init if k.startswith("lower.")]
    assert lower and all(init[k].tobytes() == final[k].tobytes() for k in lower)
    assert not np.array_equal(init["dbos_embedding"], final["dbos_embedding"])


@pytest.mark.parametrize("encoder", ["hmde", "sliding", "truncated"])
def test_eval_clir(pipeline_run, encoder):
    out = f"c_{encoder}"
    assert hmde(pipeline_run, "eval-clir", out, "--encoder", encoder) == 0
    first = (pipeline_run / out / "run.txt").read_text().splitlines()[0].split()
    assert first[1] == "Q0" and first[3] == "1" and first[5] == encoder
    (m,) = read_metrics(pipeline_run / out / "metrics.jsonl")
    assert m["metric"] == "map" and 0.0 <= m["value"] <= 1.0


def test_finetune_and_eval_cls(pipeline_run):
    val = {m["metric"]: m["value"] for m in read_metrics(pipeline_run / "f" / "metrics.jsonl")}
    assert 0 <= val["accuracy"] <= 1 and val["best_epoch"] in (1, 2)
    assert hmde(pipeline_run, "eval-cls", "e", config="eval.json") == 0
    (m,) = read_metrics(pipeline_run / "e" / "metrics.jsonl")
    assert (m["task"], m["split"], m["metric"]) == ("xldc", "test", "accuracy")


def test_eval_cls_needs_a_head(pipeline_run, capsys):
    assert hmde(pipeline_run, "eval-cls", "e_bad") == 1
    assert "classifier head" in capsys.readouterr().err


def test_commands_are_byte_reproducible(pipeline_run):
    ws = pipeline_run
    for cmd, a, b in [("mine", "m", "m2"), ("pretrain", "p", "p2"), ("eval-clir", "c_hmde", "c2")]:
        extra = ["--encoder", "hmde"] if cmd == "eval-clir" else []
        assert hmde(ws, cmd, b, *extra) == 0
        for f in (ws / a).iterdir():
            assert f.read_bytes() == (ws / b / f.name).read_bytes(), f.name


def test_seed_override_changes_outputs(pipeline_run):
    assert hmde(pipeline_run, "pretrain", "p_seed", "--seed", "9") == 0
    a = (pipeline_run / "p" / "model.ckpt").read_bytes()
    assert a != (pipeline_run / "p_seed" / "model.ckpt").read_bytes()
    (m, _) = read_metrics(pipeline_run / "p_seed" / "metrics.jsonl")
    assert m["seed"] == 9


def test_chunk_segmentation_override(pipeline_run):
    assert hmde(pipeline_run, "pretrain", "p_chunk", "--segmentation", "chunk") == 0
    resolved = json.loads((pipeline_run / "p_chunk" / "resolved_config.json").read_text())
    assert resolved["model"]["segmentation"] == "chunk"


# -- usage and error handling ----------------------------------------------------------


def test_help_lists_every_command_and_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        run_command(["--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for token in COMMANDS + ("--config", "--seed", "--out", "--frozen-lower", "--segmentation", "--encoder",
                             "--downsample", "HMDE_THREADS"):
        assert token in text


@pytest.mark.parametrize(
    "argv, token",
    [
        (["train", "--out", "x"], "train"),
        (["mine", "--out", "x", "--bogus"], "--bogus"),
        (["eval-clir", "--out", "x", "--encoder", "bm25"], "bm25"),
        (["mine", "--out", "x", "--downsample", "many"], "many"),
    ],
)
def test_usage_errors_exit_1_and_name_the_token(argv, token, capsys):
    with pytest.raises(SystemExit) as exc:
        run_command(argv)
    assert exc.value.code == 1
    assert token in capsys.readouterr().err


def test_missing_input_file_exits_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"data": {"corpus": "nowhere.jsonl"}}))
    assert run_command(["mine", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "nowhere.jsonl" in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path):
    assert run_command(["mine", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path / "o")]) == 2


def test_malformed_corpus_exits_1(tmp_path, capsys):
    (tmp_path / "bad.jsonl").write_text("{not json\n")
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"data": {"corpus": "bad.jsonl"}}))
    assert run_command(["mine", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "line 1" in capsys.readouterr().err


def test_bad_thread_count_exits_1(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("HMDE_THREADS", "zero")
    assert run_command(["gen-corpus", "--out", str(tmp_path / "o")]) == 1
    assert "HMDE_THREADS" in capsys.readouterr().err


# -- configuration -------------------------------------------------------------------------


@pytest.mark.parametrize(
    "raw, key",
    [
        ({"modle": {}}, "config.modle"),
        ({"model": {"lower": {"hidden": 8}}}, "model.lower.hidden"),
        ({"pretrain": {"lr": 1.0}}, "pretrain.lr"),
        ({"data": {"synthetic": {"concepts": 3}}}, "data.synthetic.concepts"),
        ({"eval": {"k": 3}}, "eval.k"),
    ],
)
def test_unknown_config_keys_are_rejected(raw, key):
    with pytest.raises(UsageError, match=key.replace(".", r"\.")):
        resolve_config(raw)


def test_section_seeds_are_rejected():
    with pytest.raises(UsageError, match="top-level"):
        resolve_config({"pretrain": {"seed": 4}})


def test_temperature_conflict():
    with pytest.raises(UsageError, match="temperature"):
        resolve_config({"model": {"temperature": 0.1}, "pretrain": {"temperature": 0.2}})
    assert resolve_config({"model": {"temperature": 0.2}}).pretrain.temperature == 0.2


def test_defaults_follow_training_recipe():
    cfg = resolve_config({})
    assert cfg.pretrain.batch_size == 2 and cfg.pretrain.grad_accumulation == 64
    assert cfg.pretrain.base_lr == 1e-5
    assert (cfg.finetune.lr, cfg.finetune.batch_size, cfg.finetune.grad_accumulation) == (2e-5, 4, 8)
    assert (cfg.finetune.max_epochs, cfg.finetune.patience, cfg.finetune.weight_decay) == (50, 7, 0.0)
    assert cfg.eval.segment_len == 128


def test_config_hash_is_stable_and_sensitive():
    a, b = resolve_config({"seed": 1}), resolve_config({"seed": 1})
    assert a.hash == b.hash and len(a.hash) == 16
    assert resolve_config({"seed": 2}).hash != a.hash


# -- metrics ----------------------------------------------------------------------------------


def metric(value):
    return {"task": "xldc", "split": "test", "metric": "accuracy", "value": value, "config_hash": "abc", "seed": 0}


def test_single_metric(tmp_path):
    emit_metrics([metric(0.5)], tmp_path / "m.jsonl")
    assert (tmp_path / "m.jsonl").read_text() == json.dumps(metric(0.5)) + "\n"
    rows = list(csv.reader((tmp_path / "m.csv").open()))
    assert rows == [["task", "split", "metric", "value", "config_hash", "seed"],
                    ["xldc", "test", "accuracy", "0.5", "abc", "0"]]


def test_empty_metrics(tmp_path):
    emit_metrics([], tmp_path / "m.jsonl")
    assert (tmp_path / "m.jsonl").read_text() == ""
    assert (tmp_path / "m.csv").read_text() == "task,split,metric,value,config_hash,seed\n"


def test_metric_key_order_is_fixed(tmp_path):
    shuffled = dict(reversed(list(metric(1.0).items())))
    emit_metrics([shuffled], tmp_path / "a.jsonl")
    emit_metrics([metric(1.0)], tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_unwritable_metrics_path(tmp_path):
    with pytest.raises(OSError):
        emit_metrics([metric(1.0)], tmp_path / "missing" / "m.jsonl")
