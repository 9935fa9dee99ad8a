"""End-to-end CLI tests on the micro world: artifacts, reruns, exit codes.

One module-scoped fixture drives the full pipeline (ingest -> relabel ->
pretrain -> tag -> train) into a shared work directory; the tests then
exercise the read-only subcommands and the documented exit codes against it.
"""

import io
import json
import shutil

import pytest

from ksaqa.cli import main

CFG_TEMPLATE = """
kb_triples = {data}/triples.txt
kb_aliases = {data}/aliases.txt
train_file = {data}/train.txt
valid_file = {data}/valid.txt
test_file  = {data}/test.txt
workdir    = {work}

seed = 0
dropout = 0.0
d_word = 16
d_rel = 12
d_hidden = 10
attention_hidden = 8
lr = 0.05
epochs = 10
batch_size = 8

transe_dim = 12
transe_epochs = 10
transe_batch_size = 4
transe_lr = 0.05

tagger_d_word = 12
tagger_hidden = 8
tagger_lr = 0.02
tagger_epochs = 40
tagger_patience = 40
"""


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory, micro_raw):
    """Run every build stage once; returns (cfg_path, data_dir, work_dir)."""
    root = tmp_path_factory.mktemp("cli")
    data, work = root / "data", root / "work"
    data.mkdir()
    (data / "triples.txt").write_text("".join(micro_raw.triple_lines))
    (data / "aliases.txt").write_text("".join(micro_raw.alias_lines))
    (data / "train.txt").write_text("".join(micro_raw.question_lines))
    (data / "valid.txt").write_text("".join(micro_raw.question_lines[:4]))
    (data / "test.txt").write_text("".join(micro_raw.question_lines[4:]))
    cfg = root / "pipeline.cfg"
    cfg.write_text(CFG_TEMPLATE.format(data=data, work=work))
    for argv in (["ingest-kb"], ["relabel"], ["pretrain-transe"],
                 ["train-tagger"], ["train"]):
        assert main(argv + ["--config", str(cfg)]) == 0, argv
    return cfg, data, work


def test_pipeline_writes_every_artifact(pipeline):
    _, _, work = pipeline
    for name in ("kb.npz", "aliases.tsv", "vocab.txt",
                 "train.jsonl", "valid.jsonl", "test.jsonl",
                 "train_formatted.tsv", "alias_report.tsv", "pattern_report.tsv",
                 "transe.ckpt", "transe.ckpt.json",
                 "tagger.ckpt", "tagger.ckpt.json", "tagger_history.json",
                 "model.ckpt", "model.ckpt.json", "history.json"):
        assert (work / name).exists(), name


def test_ingest_prints_exact_counts(pipeline, capsys):
    cfg, _, _ = pipeline
    assert main(["ingest-kb", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "entities  13" in out
    assert "relations 5" in out
    assert "triples   10" in out
    assert "aliases   13" in out    # entities carrying at least one alias


def test_relabel_reruns_byte_identically(pipeline):
    cfg, _, work = pipeline
    before = {n: (work / n).read_bytes()
              for n in ("train.jsonl", "valid.jsonl", "test.jsonl", "vocab.txt")}
    assert main(["relabel", "--config", str(cfg)]) == 0
    for name, blob in before.items():
        assert (work / name).read_bytes() == blob, name


def test_stats_reports_the_ambiguity_rate(pipeline, capsys):
    cfg, _, _ = pipeline
    assert main(["stats", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "ambiguity rate" in out or "ambiguous" in out


def test_history_records_every_epoch(pipeline):
    _, _, work = pipeline
    history = json.loads((work / "history.json").read_text())
    assert [h["epoch"] for h in history] == list(range(1, 11))
    assert all("valid_macro_f1" in h for h in history)


def test_eval_writes_reports(pipeline, capsys):
    cfg, _, work = pipeline
    rc = main(["eval", "--config", str(cfg), "--split", "test",
               "--gold-spans", "--baseline"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "macro F1" in out and "baseline" in out
    report = json.loads((work / "report.json").read_text())
    assert set(report) >= {"macro_f1", "top1_accuracy", "hit_any_rate"}
    assert (work / "report.txt").exists()
    assert (work / "diff.jsonl").exists()


def test_eval_with_the_trained_tagger(pipeline, capsys):
    cfg, _, _ = pipeline
    assert main(["eval", "--config", str(cfg), "--split", "valid"]) == 0
    assert "detection failures" in capsys.readouterr().out


def test_predict_marks_scores_above_lambda(pipeline, capsys):
    cfg, _, _ = pipeline
    rc = main(["predict", "--config", str(cfg), "--lambda", "0.000001",
               "--question", "where was john smith born"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "formatted: where was <e> born" in out
    starred = [l for l in out.splitlines() if l.startswith("*")]
    assert starred and all("people/person/place_of_birth" in l or "/" in l
                           for l in starred)


def test_predict_accepts_an_explicit_mention(pipeline, capsys):
    cfg, _, _ = pipeline
    rc = main(["predict", "--config", str(cfg), "--mention", "mary",
               "--question", "what genre is mary"])
    assert rc == 0
    assert "music/artist/genre" in capsys.readouterr().out


def test_attention_writes_the_heatmap(pipeline, capsys):
    cfg, _, work = pipeline
    rc = main(["attention", "--config", str(cfg), "--subject", "01",
               "--question", "what did john smith write"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "subject:" in out and "#" in out
    lines = (work / "attention.tsv").read_text().splitlines()
    assert lines[0] == "token\tweight"
    assert len(lines) == 1 + len("what did <e> write".split())
    total = sum(float(l.split("\t")[1]) for l in lines[1:])
    assert abs(total - 1.0) < 1e-3


def test_answer_non_interactive_lists_interpretations(pipeline, capsys):
    cfg, _, _ = pipeline
    rc = main(["answer", "--config", str(cfg), "--non-interactive",
               "--lambda", "0.000001", "what did john smith write"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "1." in out and "book/author/works_written" in out


def test_answer_asks_for_clarification_when_ambiguous(pipeline, capsys,
                                                      monkeypatch):
    cfg, _, _ = pipeline
    monkeypatch.setattr("sys.stdin", io.StringIO("1\n"))
    rc = main(["answer", "--config", str(cfg), "--lambda", "0.000001",
               "what did john smith write"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "Which one do you mean?" in out
    assert "2." in out          # at least two numbered interpretations


def test_answer_falls_back_to_best_guess(pipeline, capsys):
    cfg, _, _ = pipeline
    rc = main(["answer", "--config", str(cfg), "--lambda", "0.999999",
               "--non-interactive", "what did john smith write"])
    assert rc == 0
    assert "best guess" in capsys.readouterr().out


def test_answer_rejects_a_bad_pick(pipeline, capsys, monkeypatch):
    cfg, _, _ = pipeline
    monkeypatch.setattr("sys.stdin", io.StringIO("99\n"))
    rc = main(["answer", "--config", str(cfg), "--lambda", "0.000001",
               "what did john smith write"])
    assert rc == 3
    assert "out of range" in capsys.readouterr().err


# -- exit codes -----------------------------------------------------------------


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["ingest-kb", "--no-such-flag"])
    assert exc.value.code == 2


def test_bad_backend_exits_3(pipeline, capsys):
    cfg, _, _ = pipeline
    assert main(["stats", "--config", str(cfg), "--backend", "cuda"]) == 3
    assert "cuda" in capsys.readouterr().err


def test_full_flag_rejects_micro_counts(pipeline, capsys):
    cfg, _, _ = pipeline
    assert main(["ingest-kb", "--config", str(cfg), "--full"]) == 3
    assert "--full expects" in capsys.readouterr().err


def test_transe_dimension_mismatch_exits_3(pipeline, tmp_path, capsys):
    cfg, _, work = pipeline
    broken = tmp_path / "work"
    shutil.copytree(work, broken)
    rc = main(["train", "--config", str(cfg), "--workdir", str(broken),
               "--d-rel", "20", "--epochs", "1"])
    assert rc == 3
    assert "transe_dim" in capsys.readouterr().err
    assert main(["train", "--config", str(cfg), "--workdir", str(broken),
                 "--d-rel", "20", "--epochs", "1", "--no-transe-init"]) == 0


def test_bad_pattern_splits_exits_3(pipeline, capsys):
    cfg, _, _ = pipeline
    assert main(["relabel", "--config", str(cfg),
                 "--pattern-splits", "test"]) == 3
    assert "train/valid" in capsys.readouterr().err


def test_missing_input_file_exits_4(pipeline, tmp_path, capsys):
    cfg, _, _ = pipeline
    rc = main(["ingest-kb", "--config", str(cfg),
               "--triples", str(tmp_path / "absent.txt"),
               "--workdir", str(tmp_path / "w")])
    assert rc == 4
    assert "missing input" in capsys.readouterr().err


def test_malformed_input_exits_5(pipeline, tmp_path, capsys):
    cfg, data, _ = pipeline
    bad = tmp_path / "bad.txt"
    bad.write_text("www.freebase.com/m/01\n")     # one column, not three
    rc = main(["ingest-kb", "--config", str(cfg), "--triples", str(bad),
               "--workdir", str(tmp_path / "w")])
    assert rc == 5
    assert "malformed input" in capsys.readouterr().err


def test_missing_artifact_exits_6(pipeline, tmp_path, capsys):
    cfg, _, _ = pipeline
    rc = main(["stats", "--config", str(cfg), "--workdir", str(tmp_path / "empty")])
    assert rc == 6
    err = capsys.readouterr().err
    assert "missing artifact" in err and "ksaqa ingest-kb" in err


def test_unresolvable_mention_exits_7(pipeline, capsys):
    cfg, _, _ = pipeline
    rc = main(["predict", "--config", str(cfg), "--mention", "nobody",
               "--question", "where was john smith born"])
    assert rc == 7
    assert "detection failure" in capsys.readouterr().err


def test_corrupt_checkpoint_exits_8(pipeline, tmp_path, capsys):
    cfg, _, work = pipeline
    broken = tmp_path / "work"
    shutil.copytree(work, broken)
    blob = bytearray((broken / "model.ckpt").read_bytes())
    blob[:6] = b"XXXXXX"
    (broken / "model.ckpt").write_bytes(bytes(blob))
    rc = main(["predict", "--config", str(cfg), "--workdir", str(broken),
               "--question", "where was john smith born"])
    assert rc == 8
    assert "checkpoint error" in capsys.readouterr().err
