import json
import os
import struct

import numpy as np
import pytest

from ilmt import checkpoint, synth
from ilmt.checkpoint import CheckpointError, load, payload_crc, save
from ilmt.cli import main
from ilmt.model import ModelConfig, MultilingualModel


def small_model(seed=0, extra_cfg=None):
    langs = ["A", "B"]
    kw = dict(languages=langs, hub_language="A",
              vocab_sizes={l: 11 for l in langs},
              source_embedding_size=4, target_embedding_size=4,
              encoder_hidden_size=4, interlingua_hidden_size=4,
              interlingua_length=6, decoder_hidden_size=4,
              max_source_length=6, seed=seed)
    kw.update(extra_cfg or {})
    return MultilingualModel(ModelConfig(**kw))


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path):
        model = small_model(seed=7)
        path = tmp_path / "m.ilmt"
        save(model, path)
        loaded, header = load(path)
        assert loaded.config.to_dict() == model.config.to_dict()
        orig = model.parameters()
        back = loaded.parameters()
        assert set(orig) == set(back)
        for name in orig:
            assert np.array_equal(orig[name].data, back[name].data), name

    def test_extra_header_survives(self, tmp_path):
        model = small_model()
        path = tmp_path / "m.ilmt"
        save(model, path, extra={"tokenizers": {"A": "x", "B": "y"}})
        _, header = load(path)
        assert header["tokenizers"] == {"A": "x", "B": "y"}

    def test_unknown_config_keys_ignored(self, tmp_path):
        model = small_model()
        path = tmp_path / "m.ilmt"
        save(model, path)
        blob = path.read_bytes()
        version, header_len = struct.unpack("<II", blob[4:12])
        header = json.loads(blob[12:12 + header_len])
        header["config"]["future_option"] = 42
        new_header = json.dumps(header, sort_keys=True).encode()
        path.write_bytes(blob[:4] + struct.pack("<II", version,
                                                len(new_header))
                         + new_header + blob[12 + header_len:])
        loaded, _ = load(path)
        assert loaded.config.languages == ["A", "B"]

    def test_corrupted_payload_detected(self, tmp_path):
        model = small_model()
        path = tmp_path / "m.ilmt"
        save(model, path)
        blob = bytearray(path.read_bytes())
        blob[-20] ^= 0xFF   # flip a payload byte, keep the stored CRC
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="CRC"):
            load(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "m.ilmt"
        path.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(CheckpointError, match="magic"):
            load(path)

    def test_future_version_rejected(self, tmp_path):
        model = small_model()
        path = tmp_path / "m.ilmt"
        save(model, path)
        blob = bytearray(path.read_bytes())
        blob[4:8] = struct.pack("<I", checkpoint.FORMAT_VERSION + 1)
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="version"):
            load(path)

    def test_crc_fingerprints_parameters(self, tmp_path):
        m1 = small_model(seed=1)
        m2 = small_model(seed=1)
        m3 = small_model(seed=2)
        p1, p2, p3 = (tmp_path / n for n in ("a", "b", "c"))
        save(m1, p1)
        save(m2, p2)
        save(m3, p3)
        assert payload_crc(p1) == payload_crc(p2)
        assert payload_crc(p1) != payload_crc(p3)


# ---------------------------------------------------------------------------
# CLI


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Synthetic corpus plus one short training run shared by CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    corpus_dir = root / "corpus"
    assert main(["synth", "--seed", "5", "--vocab", "20",
                 "--sentences", "80", "--languages", "A", "B",
                 "--out", str(corpus_dir)]) == 0
    run_dir = root / "run"
    config = root / "run.conf"
    config.write_text(f"""
# desk-scale smoke configuration
languages = A B
hub language = A
run dir = {run_dir}
vocabulary size = 200
source embedding size = 8
target embedding size = 8
encoder hidden size = 8
decoder hidden size = 8
interlingua hidden size = 8
interlingua length = 14
max source length = 14
batch size = 8
steps = 20
log every = 5
learning rate = 0.002
corpus A B = {corpus_dir}/train.A-B.A {corpus_dir}/train.A-B.B
mono A = {corpus_dir}/mono.A
mono B = {corpus_dir}/mono.B
""")
    assert main(["train", str(config)]) == 0
    return {"root": root, "corpus": corpus_dir, "run": run_dir,
            "config": config,
            "checkpoint": run_dir / "checkpoint.ilmt"}


class TestSynthCommand:
    def test_writes_corpus_files(self, workspace):
        d = workspace["corpus"]
        for name in ("train.A-B.A", "train.A-B.B", "mono.A", "mono.B",
                     "test.A-B.A", "test.B-A.B", "labels.train",
                     "manifest.txt"):
            assert (d / name).exists(), name

    def test_bad_params_exit_code(self, tmp_path, capsys):
        code = main(["synth", "--vocab", "3", "--languages", "A", "B",
                     "--out", str(tmp_path / "x")])
        assert code == 2
        assert capsys.readouterr().err.startswith("error: bad-params: ")


class TestTrainCommand:
    def test_outputs_exist(self, workspace):
        run = workspace["run"]
        assert (run / "checkpoint.ilmt").exists()
        assert (run / "metrics.tsv").exists()
        for lang in "AB":
            assert (run / f"bpe.{lang}.merges").exists()
            assert (run / f"bpe.{lang}.vocab").exists()
        assert not (run / ".lock").exists()

    def test_metrics_format(self, workspace):
        lines = (workspace["run"] / "metrics.tsv").read_text().splitlines()
        assert lines
        for line in lines:
            step, src, tgt, loss = line.split("\t")
            int(step)
            float(loss)
            assert src in "AB" and tgt in "AB"

    def test_run_lock_refused(self, workspace, capsys):
        lock = workspace["run"] / ".lock"
        lock.write_text("")
        try:
            code = main(["train", str(workspace["config"])])
            assert code == 2
            assert "error: run-locked:" in capsys.readouterr().err
        finally:
            lock.unlink()

    def test_missing_config(self, capsys):
        assert main(["train", "/nonexistent.conf"]) == 2
        assert capsys.readouterr().err.startswith("error: config-missing:")

    def test_config_syntax_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.conf"
        bad.write_text("languages A B\n")
        assert main(["train", str(bad)]) == 2
        assert "error: config-syntax:" in capsys.readouterr().err

    def test_deterministic_given_seed(self, workspace, tmp_path):
        config2 = tmp_path / "run2.conf"
        config2.write_text(workspace["config"].read_text().replace(
            str(workspace["run"]), str(tmp_path / "run2")))
        assert main(["train", str(config2)]) == 0
        crc1 = payload_crc(workspace["checkpoint"])
        crc2 = payload_crc(tmp_path / "run2" / "checkpoint.ilmt")
        assert crc1 == crc2


class TestTranslateCommand:
    def test_file_to_file(self, workspace, tmp_path):
        src = tmp_path / "in.txt"
        out = tmp_path / "out.txt"
        src.write_text("aa ab ba\nba aa\n")
        code = main(["translate", str(workspace["checkpoint"]),
                     "--src", "A", "--tgt", "B",
                     "-i", str(src), "-o", str(out)])
        assert code == 0
        assert len(out.read_text().splitlines()) == 2

    def test_pivot_flag(self, workspace, tmp_path):
        src = tmp_path / "in.txt"
        out = tmp_path / "out.txt"
        src.write_text("aa ab\n")
        code = main(["translate", str(workspace["checkpoint"]),
                     "--src", "B", "--tgt", "B", "--pivot", "A",
                     "-i", str(src), "-o", str(out)])
        assert code == 0
        assert len(out.read_text().splitlines()) == 1

    def test_unknown_language(self, workspace, tmp_path, capsys):
        src = tmp_path / "in.txt"
        src.write_text("aa\n")
        code = main(["translate", str(workspace["checkpoint"]),
                     "--src", "A", "--tgt", "Z", "-i", str(src)])
        assert code == 2
        assert capsys.readouterr().err == "error: unknown-language: Z\n"

    def test_missing_checkpoint(self, tmp_path, capsys):
        code = main(["translate", str(tmp_path / "none.ilmt"),
                     "--src", "A", "--tgt", "B", "-i", "/dev/null"])
        assert code == 2
        assert capsys.readouterr().err.startswith(
            "error: checkpoint-missing:")


class TestEvaluateCommand:
    def test_direct_and_pivot_rows(self, workspace, tmp_path, capsys):
        d = workspace["corpus"]
        manifest = tmp_path / "eval.tsv"
        manifest.write_text(
            f"A\tB\t{d}/test.A-B.A\t{d}/test.A-B.B\tdirect\n"
            f"B\tA\t{d}/test.B-A.B\t{d}/test.B-A.A\tpivot:A\n")
        code = main(["evaluate", str(workspace["checkpoint"]),
                     str(manifest), "--smooth"])
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 2
        assert lines[0].startswith("A-B\tdirect\t")
        assert lines[1].startswith("B-A\tpivot:A\t")
        for line in lines:
            fields = line.split("\t")
            assert len(fields) == 5
            float(fields[2])

    def test_bad_manifest(self, workspace, tmp_path, capsys):
        manifest = tmp_path / "bad.tsv"
        manifest.write_text("A\tB\tonly-three\n")
        assert main(["evaluate", str(workspace["checkpoint"]),
                     str(manifest)]) == 2
        assert "error: manifest-syntax:" in capsys.readouterr().err


@pytest.fixture(scope="module")
def embeddings(workspace, tmp_path_factory):
    """Embedding dumps plus aligned labels for both languages."""
    root = tmp_path_factory.mktemp("emb")
    d = workspace["corpus"]
    merged = root / "emb.tsv"
    labels = root / "labels.txt"
    label_lines = (d / "labels.train").read_text().splitlines()
    with open(merged, "w") as out, open(labels, "w") as lab:
        for lang in "AB":
            part = root / f"emb.{lang}.tsv"
            assert main(["embed", str(workspace["checkpoint"]),
                         "--lang", lang, str(d / f"mono.{lang}"),
                         "-o", str(part)]) == 0
            out.write(part.read_text())
            lab.write("\n".join(label_lines) + "\n")
    return {"root": root, "merged": merged, "labels": labels}


class TestEmbedCommand:
    def test_dump_format(self, workspace, embeddings):
        lines = (embeddings["root"] / "emb.A.tsv").read_text().splitlines()
        mono = (workspace["corpus"] / "mono.A").read_text().splitlines()
        assert len(lines) == len(mono)
        for line in lines[:5]:
            lang, vec = line.split("\t")
            assert lang == "A"
            values = [float(x) for x in vec.split(",")]
            assert len(values) == 8  # interlingua width

    def test_same_width_across_languages(self, embeddings):
        widths = set()
        for line in (embeddings["merged"]).read_text().splitlines():
            widths.add(len(line.split("\t")[1].split(",")))
        assert len(widths) == 1


class TestClassifyCommand:
    def test_train_then_predict(self, embeddings, tmp_path, capsys):
        model_path = tmp_path / "clf.json"
        code = main(["classify",
                     "--train-embeddings", str(embeddings["merged"]),
                     "--train-labels", str(embeddings["labels"]),
                     "--out", str(model_path)])
        assert code == 0
        payload = json.loads(model_path.read_text())
        assert len(payload["weights"]) == 8
        capsys.readouterr()

        code = main(["classify", "--model", str(model_path),
                     "--embeddings", str(embeddings["merged"]),
                     "--labels", str(embeddings["labels"])])
        assert code == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0].split()[0] == "language"
        assert "%" in out[1]

    def test_predict_without_labels_prints_probabilities(self, embeddings,
                                                         tmp_path, capsys):
        model_path = tmp_path / "clf.json"
        assert main(["classify",
                     "--train-embeddings", str(embeddings["merged"]),
                     "--train-labels", str(embeddings["labels"]),
                     "--out", str(model_path)]) == 0
        capsys.readouterr()
        assert main(["classify", "--model", str(model_path),
                     "--embeddings", str(embeddings["merged"])]) == 0
        for line in capsys.readouterr().out.splitlines()[:5]:
            lang, p = line.split("\t")
            assert 0.0 <= float(p) <= 1.0

    def test_incomplete_arguments(self, capsys):
        assert main(["classify", "--train-embeddings", "x"]) == 2
        assert "error: bad-args:" in capsys.readouterr().err


class TestVisualizeCommand:
    def test_writes_svg_and_tsv(self, embeddings, tmp_path):
        groups = tmp_path / "groups.txt"
        n = len(embeddings["merged"].read_text().splitlines())
        groups.write_text("\n".join("g%d" % (i % 2) for i in range(n))
                          + "\n")
        svg = tmp_path / "plot.svg"
        tsv = tmp_path / "plot.tsv"
        assert main(["visualize", str(embeddings["merged"]), str(groups),
                     "--out-svg", str(svg), "--out-tsv", str(tsv)]) == 0
        assert svg.read_text().startswith("<svg")
        assert len(tsv.read_text().splitlines()) == n

    def test_group_count_mismatch(self, embeddings, tmp_path, capsys):
        groups = tmp_path / "groups.txt"
        groups.write_text("g0\n")
        assert main(["visualize", str(embeddings["merged"]), str(groups),
                     "--out-svg", str(tmp_path / "x.svg"),
                     "--out-tsv", str(tmp_path / "x.tsv")]) == 2
        assert "error: group-mismatch:" in capsys.readouterr().err
