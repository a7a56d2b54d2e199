import csv
import io
import os

import numpy as np
import pytest

from fewtag.cli import main, write_points_csv
from fewtag.corpus import corpus_to_conll, save_embedding_store
from fewtag.sampler import episode_from_json
from fewtag.synth import generate, separable_spec


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    """Synthetic train/test corpora and stores written to disk."""
    root = tmp_path_factory.mktemp("data")
    train_corpus, train_store = generate(separable_spec(n_types=6, seed=301, sentences=160, type_prefix="TR"))
    test_corpus, test_store = generate(separable_spec(n_types=6, seed=302, sentences=160, type_prefix="TE"))
    paths = {}
    for name, corpus, store in (
        ("train", train_corpus, train_store),
        ("test", test_corpus, test_store),
    ):
        conll = root / f"{name}.conll"
        emb = root / f"{name}.emb"
        conll.write_text(corpus_to_conll(corpus), encoding="utf-8")
        emb.write_bytes(save_embedding_store(store))
        paths[name] = (str(conll), str(emb))
    return paths


def _train_args(paths, out_dir, epochs=3, seed=5, extra=()):
    corpus, emb = paths["train"]
    return [
        "train", "--corpus", corpus, "--store", emb,
        "--n-ways", "3", "--k-shots", "2", "--query-size", "2",
        "--seed", str(seed), "--epochs", str(epochs),
        "--hidden1", "16", "--hidden2", "8",
        "--out-dir", out_dir,
    ] + list(extra)


def test_train_missing_corpus_is_usage_error(tmp_path, capsys):
    code = main(["train", "--corpus", str(tmp_path / "nope.conll"),
                 "--out-dir", str(tmp_path)])
    assert code == 2
    assert "--corpus" in capsys.readouterr().err


def test_train_zero_epochs_writes_initial_checkpoint(data_dir, tmp_path):
    out = str(tmp_path / "run")
    assert main(_train_args(data_dir, out, epochs=0)) == 0
    assert os.path.isfile(os.path.join(out, "checkpoint.mtn"))
    assert os.path.isfile(os.path.join(out, "loss_log.tsv"))


def test_train_is_byte_deterministic(data_dir, tmp_path):
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(_train_args(data_dir, out1)) == 0
    assert main(_train_args(data_dir, out2)) == 0
    read = lambda d, n: open(os.path.join(d, n), "rb").read()
    assert read(out1, "checkpoint.mtn") == read(out2, "checkpoint.mtn")
    assert read(out1, "loss_log.tsv") == read(out2, "loss_log.tsv")


def test_train_invalid_hyperparameter_is_usage_error(data_dir, tmp_path, capsys):
    code = main(_train_args(data_dir, str(tmp_path), extra=["--alpha", "1.5"]))
    assert code == 2
    assert "alpha" in capsys.readouterr().err


@pytest.fixture(scope="module")
def trained(data_dir, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("trained"))
    assert main(_train_args(data_dir, out, epochs=10)) == 0
    return os.path.join(out, "checkpoint.mtn")


def _eval_args(paths, ckpt, extra=()):
    corpus, emb = paths["test"]
    return [
        "eval", "--corpus", corpus, "--store", emb, "--checkpoint", ckpt,
        "--n-ways", "3", "--k-shots", "2", "--query-size", "2",
        "--episodes", "3", "--seed", "9",
    ] + list(extra)


def test_eval_bad_checkpoint_magic_is_runtime_error(data_dir, tmp_path, capsys):
    bad = tmp_path / "bad.mtn"
    bad.write_bytes(b"XXXX" + b"\x00" * 40)
    code = main(_eval_args(data_dir, str(bad)))
    assert code == 1
    assert "magic" in capsys.readouterr().err


def test_eval_is_deterministic(data_dir, trained, capsys):
    assert main(_eval_args(data_dir, trained)) == 0
    first = capsys.readouterr().out
    assert main(_eval_args(data_dir, trained)) == 0
    second = capsys.readouterr().out
    assert first == second
    assert "micro F1" in first


def test_eval_line_format_parses(data_dir, trained, capsys):
    assert main(_eval_args(data_dir, trained, extra=["--format", "line"])) == 0
    line = capsys.readouterr().out.strip()
    fields = line.split("\t")
    assert len(fields) == 6
    assert int(fields[0]) == 3
    for value in fields[1:]:
        float(value)


def test_eval_rejects_overlapping_train_corpus(data_dir, trained, capsys):
    corpus, _ = data_dir["test"]
    code = main(_eval_args(data_dir, trained, extra=["--train-corpus", corpus]))
    assert code == 1
    assert "overlap" in capsys.readouterr().err


def test_eval_accepts_disjoint_train_corpus(data_dir, trained):
    train_conll, _ = data_dir["train"]
    assert main(_eval_args(data_dir, trained, extra=["--train-corpus", train_conll])) == 0


def test_sample_episodes_insufficient_types(data_dir, capsys):
    corpus, _ = data_dir["train"]
    code = main([
        "sample-episodes", "--corpus", corpus, "--episodes", "1",
        "--n-ways", "20", "--k-shots", "1", "--query-size", "1",
    ])
    assert code == 1
    assert "insufficient" in capsys.readouterr().err


def test_sample_episodes_deterministic_and_revalidating(data_dir, tmp_path):
    corpus_path, _ = data_dir["train"]
    args = [
        "sample-episodes", "--corpus", corpus_path, "--episodes", "4",
        "--n-ways", "3", "--k-shots", "2", "--query-size", "2", "--seed", "31",
    ]
    out1, out2 = tmp_path / "e1.jsonl", tmp_path / "e2.jsonl"
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()

    from fewtag.corpus import parse_conll

    with open(corpus_path, encoding="utf-8") as fh:
        corpus = parse_conll(fh)
    lines = out1.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 4
    for line in lines:
        episode_from_json(line, corpus.label_set)  # revalidates invariants


def test_export_points_csv(data_dir, trained, tmp_path):
    corpus, emb = data_dir["test"]
    out = tmp_path / "points.csv"
    assert main([
        "export-points", "--corpus", corpus, "--store", emb,
        "--checkpoint", trained, "--n-ways", "3", "--k-shots", "2",
        "--query-size", "2", "--seed", "3", "--out", str(out),
    ]) == 0
    with open(out, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    assert header[:3] == ["kind", "slot", "label"]
    assert header[3] == "dim_0" and header[-1] == "dim_7"
    n_queries = sum(1 for r in body if r[0] == "query")
    n_protos = sum(1 for r in body if r[0] == "prototype")
    assert n_protos == 3
    assert len(body) == n_queries + n_protos
    for row in body:  # lossless float round trip
        for cell in row[3:]:
            assert repr(float(cell)) == cell


def test_train_checkpoint_interval(data_dir, tmp_path):
    out = str(tmp_path / "ck")
    args = _train_args(data_dir, out, epochs=4, extra=["--checkpoint-every", "2"])
    assert main(args) == 0
    for name in ("ckpt_000002.mtn", "ckpt_000004.mtn", "checkpoint.mtn"):
        assert os.path.isfile(os.path.join(out, name))


def test_train_with_hash_provider(data_dir, tmp_path):
    corpus, _ = data_dir["train"]
    out = str(tmp_path / "hash")
    assert main([
        "train", "--corpus", corpus, "--hash-dim", "16",
        "--n-ways", "3", "--k-shots", "2", "--query-size", "2",
        "--seed", "1", "--epochs", "2", "--hidden1", "8", "--hidden2", "4",
        "--out-dir", out,
    ]) == 0
    assert os.path.isfile(os.path.join(out, "checkpoint.mtn"))


def test_export_points_without_adaptation(data_dir, trained, tmp_path):
    corpus, emb = data_dir["test"]
    out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
    base = [
        "export-points", "--corpus", corpus, "--store", emb,
        "--checkpoint", trained, "--n-ways", "3", "--k-shots", "2",
        "--query-size", "2", "--seed", "3",
    ]
    assert main(base + ["--no-adapt", "--out", str(out_a)]) == 0
    assert main(base + ["--out", str(out_b)]) == 0
    assert out_a.read_bytes() != out_b.read_bytes()  # adaptation moves points


def test_write_points_csv_empty_is_header_only():
    sink = io.StringIO()
    write_points_csv(np.zeros((0, 4)), [], [], np.zeros((0, 4)), [], sink)
    lines = sink.getvalue().splitlines()
    assert lines == ["kind,slot,label,dim_0,dim_1,dim_2,dim_3"]


def test_help_lists_documented_defaults(capsys):
    assert main(["train", "--help"]) == 0
    text = capsys.readouterr().out
    for needle in ("0.2", "0.0001", "3", "0.3", "0.1", "1", "6000"):
        assert needle in text
    assert main(["eval", "--help"]) == 0
    assert "500" in capsys.readouterr().out


def test_config_file_defaults_and_flag_override(data_dir, tmp_path):
    corpus_path, _ = data_dir["train"]
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("seed=31\nepisodes=4\n# comment line\n", encoding="utf-8")
    base = [
        "sample-episodes", "--corpus", corpus_path,
        "--n-ways", "3", "--k-shots", "2", "--query-size", "2",
    ]
    from_config = tmp_path / "c.jsonl"
    explicit = tmp_path / "x.jsonl"
    assert main(base + ["--config", str(cfg_file), "--out", str(from_config)]) == 0
    assert main(base + ["--episodes", "4", "--seed", "31", "--out", str(explicit)]) == 0
    assert from_config.read_bytes() == explicit.read_bytes()

    override = tmp_path / "o.jsonl"
    assert main(
        base + ["--config", str(cfg_file), "--seed", "99", "--out", str(override)]
    ) == 0
    assert override.read_bytes() != from_config.read_bytes()


def test_config_file_unknown_key_is_usage_error(data_dir, tmp_path, capsys):
    corpus_path, _ = data_dir["train"]
    cfg_file = tmp_path / "bad.cfg"
    cfg_file.write_text("not-a-flag=1\n", encoding="utf-8")
    code = main([
        "sample-episodes", "--corpus", corpus_path, "--config", str(cfg_file),
    ])
    assert code == 2
