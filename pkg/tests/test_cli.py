import json

import pytest

from legalner.cli import main
from legalner.corpus import TagSet, read_conll, tokenize, validate_bio
from legalner.errors import TrainingDiverged
from legalner.toydata import toy_annotation_docs

from conftest import write_config


@pytest.fixture(scope="module")
def toy_files(tmp_path_factory):
    """Toy corpus as CoNLL train/dev files plus a scaled-down config."""
    root = tmp_path_factory.mktemp("toyfiles")
    docs = toy_annotation_docs()
    (root / "toy.json").write_text(json.dumps(docs), encoding="utf-8")
    assert main(["convert", str(root / "toy.json"),
                 str(root / "toy.conll")]) == 0
    write_config(root / "config.json", epochs=3, learning_rate=0.05,
                 batch_size=8, glove_dim=8, word_dropout=0.0, lstm_hidden=4,
                 patience=3, seed=11)
    return root


@pytest.fixture(scope="module")
def tiny_checkpoint(toy_files, tmp_path_factory):
    out = tmp_path_factory.mktemp("ckpt") / "run"
    code = main(["train", str(toy_files / "config.json"),
                 str(toy_files / "toy.conll"), str(toy_files / "toy.conll"),
                 str(out)])
    assert code == 0
    return out


class TestConvert:
    def test_fixture_reproduces_golden_file(self, data_dir, tmp_path, capsys):
        out = tmp_path / "out.conll"
        assert main(["convert", str(data_dir / "annotations.json"),
                     str(out)]) == 0
        assert out.read_bytes() == (data_dir / "golden.conll").read_bytes()
        stdout = capsys.readouterr().out
        assert "sentences:  5" in stdout
        assert "spans:      12" in stdout

    def test_empty_annotation_array(self, tmp_path, capsys):
        src = tmp_path / "empty.json"
        src.write_text("[]", encoding="utf-8")
        out = tmp_path / "out.conll"
        assert main(["convert", str(src), str(out)]) == 0
        assert out.read_bytes() == b""

    def test_out_of_range_offset_strict_exits_1(self, tmp_path, capsys):
        src = tmp_path / "bad.json"
        src.write_text(json.dumps([{
            "id": "doc-bad", "text": "ab",
            "annotations": [{"start": 0, "end": 99, "label": "COURT"}],
        }]), encoding="utf-8")
        assert main(["convert", str(src), str(tmp_path / "o.conll")]) == 1
        assert "doc-bad" in capsys.readouterr().err

    def test_misaligned_lenient_snaps_and_counts(self, tmp_path, capsys):
        src = tmp_path / "snap.json"
        src.write_text(json.dumps([{
            "id": "d", "text": "Supreme Court",
            "annotations": [{"start": 2, "end": 13, "label": "COURT"}],
        }]), encoding="utf-8")
        out = tmp_path / "o.conll"
        assert main(["convert", str(src), str(out), "--mode", "lenient"]) == 0
        assert "violations: 1" in capsys.readouterr().out
        rows = read_conll(out, TagSet.default())
        assert rows == [(["Supreme", "Court"], ["B-COURT", "I-COURT"])]

    def test_misaligned_strict_exits_1(self, tmp_path):
        src = tmp_path / "snap.json"
        src.write_text(json.dumps([{
            "id": "d", "text": "Supreme Court",
            "annotations": [{"start": 2, "end": 13, "label": "COURT"}],
        }]), encoding="utf-8")
        assert main(["convert", str(src), str(tmp_path / "o.conll")]) == 1

    def test_malformed_json_exits_2(self, tmp_path):
        src = tmp_path / "bad.json"
        src.write_text("[{", encoding="utf-8")
        assert main(["convert", str(src), str(tmp_path / "o.conll")]) == 2

    def test_unknown_label_exits_1(self, tmp_path):
        src = tmp_path / "bad.json"
        src.write_text(json.dumps([{
            "id": "d", "text": "ab",
            "annotations": [{"start": 0, "end": 2, "label": "NOT_A_CLASS"}],
        }]), encoding="utf-8")
        assert main(["convert", str(src), str(tmp_path / "o.conll")]) == 1

    def test_stoplist_drops_unprotected_tokens(self, tmp_path, data_dir):
        src = tmp_path / "doc.json"
        src.write_text(json.dumps([{
            "id": "d", "text": "the Supreme Court of India on appeal",
            "annotations": [{"start": 4, "end": 26, "label": "COURT"}],
        }]), encoding="utf-8")
        out = tmp_path / "o.conll"
        assert main(["convert", str(src), str(out),
                     "--stoplist", str(data_dir / "stopwords.txt")]) == 0
        [(tokens, tags)] = read_conll(out, TagSet.default())
        assert tokens == ["Supreme", "Court", "of", "India", "appeal"]
        assert tags == ["B-COURT", "I-COURT", "I-COURT", "I-COURT", "O"]

    def test_missing_input_exits_2(self, tmp_path):
        assert main(["convert", str(tmp_path / "nope.json"),
                     str(tmp_path / "o.conll")]) == 2


class TestStats:
    def test_counts_match_independent_tally(self, data_dir, capsys):
        assert main(["stats", str(data_dir / "annotations.json"),
                     "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        [split] = payload["splits"]
        docs = json.loads((data_dir / "annotations.json").read_text())
        independent = sum(len(d["annotations"]) for d in docs)
        assert split["total"] == independent == 12
        assert split["counts"]["COURT"] == 3
        assert split["counts"]["DATE"] == 2
        assert split["counts"]["WITNESS"] == 0

    def test_conll_and_json_agree(self, data_dir, capsys):
        assert main(["stats", str(data_dir / "annotations.json"),
                     str(data_dir / "golden.conll"), "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        a, b = payload["splits"]
        assert a["counts"] == b["counts"]

    def test_text_table_lists_all_classes(self, data_dir, capsys):
        assert main(["stats", str(data_dir / "golden.conll")]) == 0
        out = capsys.readouterr().out
        for cls in TagSet.default().classes:
            assert cls in out
        assert "TOTAL" in out

    def test_empty_dataset_all_zeros(self, tmp_path, capsys):
        src = tmp_path / "empty.json"
        src.write_text("[]", encoding="utf-8")
        assert main(["stats", str(src), "--json"]) == 0
        [split] = json.loads(capsys.readouterr().out)["splits"]
        assert split["total"] == 0
        assert all(v == 0 for v in split["counts"].values())


class TestTrain:
    def test_checkpoint_and_log_written(self, tiny_checkpoint):
        assert (tiny_checkpoint / "meta.json").exists()
        assert (tiny_checkpoint / "tensors.bin").exists()
        log_lines = (tiny_checkpoint / "train_log.jsonl").read_text().splitlines()
        entries = [json.loads(line) for line in log_lines]
        assert [e["epoch"] for e in entries] == list(range(1, len(entries) + 1))
        for e in entries:
            assert {"epoch", "train_loss", "dev_micro_f1", "dev_accuracy",
                    "lr", "seconds"} <= set(e)

    def test_same_seed_is_byte_identical(self, toy_files, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["train", str(toy_files / "config.json"),
                         str(toy_files / "toy.conll"),
                         str(toy_files / "toy.conll"), str(out)]) == 0
            outs.append(out)
        assert (outs[0] / "tensors.bin").read_bytes() == \
            (outs[1] / "tensors.bin").read_bytes()
        assert (outs[0] / "meta.json").read_bytes() == \
            (outs[1] / "meta.json").read_bytes()

    def test_seed_flag_changes_checkpoint(self, toy_files, tmp_path):
        out = tmp_path / "c"
        assert main(["train", str(toy_files / "config.json"),
                     str(toy_files / "toy.conll"), str(toy_files / "toy.conll"),
                     str(out), "--seed", "999"]) == 0
        meta = json.loads((out / "meta.json").read_text())
        assert meta["seed"] == 999
        assert meta["hyperparameters"]["seed"] == 999

    def test_missing_config_field_exits_2(self, toy_files, tmp_path, capsys):
        config = json.loads((toy_files / "config.json").read_text())
        del config["batch_size"]
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(config), encoding="utf-8")
        assert main(["train", str(bad), str(toy_files / "toy.conll"),
                     str(toy_files / "toy.conll"), str(tmp_path / "o")]) == 2
        assert "batch_size" in capsys.readouterr().err

    def test_merge_dev_disables_early_stop(self, toy_files, tmp_path):
        out = tmp_path / "m"
        assert main(["train", str(toy_files / "config.json"),
                     str(toy_files / "toy.conll"), str(toy_files / "toy.conll"),
                     str(out), "--merge-dev"]) == 0
        entries = [json.loads(line) for line in
                   (out / "train_log.jsonl").read_text().splitlines()]
        assert all(e["dev_micro_f1"] is None for e in entries)
        assert len(entries) == 3  # the full epoch budget

    def test_char_lm_round_trips_through_checkpoint(self, toy_files, tmp_path,
                                                    capsys):
        out = tmp_path / "lm"
        assert main(["train", str(toy_files / "config.json"),
                     str(toy_files / "toy.conll"), str(toy_files / "toy.conll"),
                     str(out), "--char-lm-hidden", "6",
                     "--char-lm-epochs", "1"]) == 0
        assert "char LM pre-training loss" in capsys.readouterr().out
        meta = json.loads((out / "meta.json").read_text())
        assert meta["char_lm"] is not None
        assert main(["evaluate", str(out), str(toy_files / "toy.conll")]) == 0

    def test_glove_initialization(self, toy_files, tmp_path, capsys):
        glove = tmp_path / "vectors.txt"
        glove.write_text(
            "justice " + " ".join(["0.5"] * 8) + "\n", encoding="utf-8")
        out = tmp_path / "g"
        assert main(["train", str(toy_files / "config.json"),
                     str(toy_files / "toy.conll"), str(toy_files / "toy.conll"),
                     str(out), "--glove", str(glove)]) == 0
        assert "cover" in capsys.readouterr().out

    def test_divergence_exit_code(self, toy_files, tmp_path, monkeypatch):
        import legalner.cli as cli_module

        def explode(*args, **kwargs):
            raise TrainingDiverged("boom", epoch=1, batch=0,
                                   param_norms={"w": 1.0})

        monkeypatch.setattr(cli_module, "train", explode)
        assert main(["train", str(toy_files / "config.json"),
                     str(toy_files / "toy.conll"), str(toy_files / "toy.conll"),
                     str(tmp_path / "d")]) == 3


class TestEvaluate:
    def test_text_and_json_agree(self, tiny_checkpoint, toy_files, capsys):
        assert main(["evaluate", str(tiny_checkpoint),
                     str(toy_files / "toy.conll")]) == 0
        text = capsys.readouterr().out
        assert main(["evaluate", str(tiny_checkpoint),
                     str(toy_files / "toy.conll"), "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert f"{payload['micro_f1']:.4f}" in text
        assert f"{payload['token_accuracy']:.4f}" in text
        for cls in ("COURT", "JUDGE", "DATE"):
            row = next(r for r in payload["per_class"] if r["label"] == cls)
            assert f"{row['f1']:.4f}" in text

    def test_unknown_tag_exits_2(self, tiny_checkpoint, tmp_path, capsys):
        bad = tmp_path / "bad.conll"
        bad.write_text("tok B-FOO\n", encoding="utf-8")
        assert main(["evaluate", str(tiny_checkpoint), str(bad)]) == 2
        assert "B-FOO" in capsys.readouterr().err

    def test_missing_checkpoint_exits_2(self, toy_files, tmp_path):
        assert main(["evaluate", str(tmp_path / "nope"),
                     str(toy_files / "toy.conll")]) == 2


class TestPredict:
    def test_empty_text_gives_empty_annotations(self, tiny_checkpoint,
                                                tmp_path, capsys):
        src = tmp_path / "empty.txt"
        src.write_text("", encoding="utf-8")
        assert main(["predict", str(tiny_checkpoint), str(src)]) == 0
        [doc] = json.loads(capsys.readouterr().out)
        assert doc["annotations"] == []

    def test_output_schema_and_no_overlap(self, tiny_checkpoint, tmp_path,
                                          capsys):
        src = tmp_path / "doc.txt"
        src.write_text("the supreme court of india ruled on 4 january 1998",
                       encoding="utf-8")
        assert main(["predict", str(tiny_checkpoint), str(src)]) == 0
        [doc] = json.loads(capsys.readouterr().out)
        text = doc["text"]
        prev_end = 0
        for ann in doc["annotations"]:
            assert 0 <= ann["start"] < ann["end"] <= len(text)
            assert ann["start"] >= prev_end  # sorted, non-overlapping
            assert ann["label"] in TagSet.default().classes
            assert not text[ann["start"]:ann["end"]].strip(" ") == ""
            prev_end = ann["end"]

    def test_constrained_output_is_bio_valid(self, tiny_checkpoint, tmp_path,
                                             capsys):
        src = tmp_path / "doc.txt"
        src.write_text("justice sharma of the high court of delhi",
                       encoding="utf-8")
        assert main(["predict", str(tiny_checkpoint), str(src)]) == 0
        [doc] = json.loads(capsys.readouterr().out)
        # Reconstruct token-level tags from the emitted character spans.
        tagset = TagSet.default()
        tokens = tokenize(doc["text"])
        tags = [0] * len(tokens)
        starts = {t.char_start: i for i, t in enumerate(tokens)}
        ends = {t.char_end: i for i, t in enumerate(tokens)}
        for ann in doc["annotations"]:
            first, last = starts[ann["start"]], ends[ann["end"]]
            tags[first] = tagset.tag_id(f"B-{ann['label']}")
            for i in range(first + 1, last + 1):
                tags[i] = tagset.tag_id(f"I-{ann['label']}")
        assert validate_bio(tags, tagset) == []

    def test_json_documents_in_and_out(self, tiny_checkpoint, tmp_path):
        src = tmp_path / "docs.json"
        src.write_text(json.dumps([
            {"id": "p1", "text": "justice rao spoke",
             "meta": {"section": "PREAMBLE"}},
            {"id": "p2", "text": ""},
        ]), encoding="utf-8")
        out = tmp_path / "pred.json"
        assert main(["predict", str(tiny_checkpoint), str(src),
                     "--output", str(out)]) == 0
        docs = json.loads(out.read_text())
        assert [d["id"] for d in docs] == ["p1", "p2"]
        assert docs[0]["meta"]["section"] == "PREAMBLE"
        assert docs[1]["annotations"] == []

    def test_random_texts_always_yield_valid_disjoint_spans(
            self, tiny_checkpoint, tmp_path, capsys):
        import numpy as np

        rng = np.random.default_rng(99)
        words = ["the", "supreme", "court", "of", "india", "justice",
                 "sharma", "12", "march", "2001", "appeal", "zzz", "q7"]
        for case in range(8):
            n = int(rng.integers(1, 15))
            text = " ".join(str(rng.choice(words)) for _ in range(n))
            src = tmp_path / f"rand{case}.txt"
            src.write_text(text, encoding="utf-8")
            assert main(["predict", str(tiny_checkpoint), str(src)]) == 0
            [doc] = json.loads(capsys.readouterr().out)
            prev_end = 0
            for ann in doc["annotations"]:
                assert set(ann) == {"start", "end", "label"}
                assert 0 <= ann["start"] < ann["end"] <= len(text)
                assert ann["start"] >= prev_end
                assert ann["label"] in TagSet.default().classes
                prev_end = ann["end"]

    def test_deterministic(self, tiny_checkpoint, tmp_path, capsys):
        src = tmp_path / "doc.txt"
        src.write_text("the high court of bombay dismissed the appeal",
                       encoding="utf-8")
        assert main(["predict", str(tiny_checkpoint), str(src)]) == 0
        first = capsys.readouterr().out
        assert main(["predict", str(tiny_checkpoint), str(src)]) == 0
        assert capsys.readouterr().out == first

    def test_io_error_exits_2(self, tiny_checkpoint, tmp_path):
        assert main(["predict", str(tiny_checkpoint),
                     str(tmp_path / "missing.txt")]) == 2
