"""Command-line pipeline.

Subcommands: ingest-kb, relabel, stats, pretrain-transe, train-tagger,
train, eval, predict, attention, answer.  Configuration comes from a flat
key=value file (--config) with per-flag overrides; later sources win.

Artifacts live in the work directory: kb.npz, aliases.tsv, vocab.txt,
{train,valid,test}.jsonl, alias_report.tsv, pattern_report.tsv,
transe.ckpt, tagger.ckpt, model.ckpt (each with a .json manifest),
history.json, report.{txt,json}, diff.jsonl, attention.tsv.

Exit codes:
    0  success
    2  usage error (bad flags or unknown subcommand)
    3  configuration error (unreadable config, unknown key, bad value)
    4  missing input file
    5  malformed input data (parse error with line number)
    6  missing pipeline artifact (run the earlier stage first)
    7  detection failure (no subject mention or no matching entity)
    8  corrupt or incompatible checkpoint
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import kernels
from .autodiff import Rng
from .config import PipelineConfig, load_config
from .dataset import build_vocabulary, parse_simplequestions, write_formatted_tsv, Vocabulary
from .errors import CheckpointError, ConfigError, IngestError, KsaqaError
from .evaluation import diff_report, evaluate, export_attention, random_baseline
from .kb import AliasTable, KnowledgeBase, ingest_aliases, ingest_triples, tokenize
from .model import KsaModel, ModelConfig, train_model
from .relabel import (build_pattern_index, load_jsonl, export_jsonl,
                      relabel_dataset, ambiguity_rate, write_report)
from .tagger import TaggerConfig, TaggerModel, predict_span, span_to_formatted, \
    tags_for_span, train_tagger
from .transe import EmbeddingSet, TransEConfig, export_relation_embeddings, train_transe

FULL_KB_COUNTS = (2_150_604, 6_701, 14_180_937)
FULL_SPLIT_COUNTS = {"train": 75_910, "valid": 10_845, "test": 21_687}


class MissingArtifactError(KsaqaError):
    pass


class DetectionFailureError(KsaqaError):
    pass


def _log(msg: str) -> None:
    print(msg, flush=True)


def _work(cfg: PipelineConfig) -> Path:
    path = Path(cfg.workdir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"{path} not found; run `ksaqa {hint}` first")
    return path


def _open_input(path_str: str, what: str) -> Path:
    if not path_str:
        raise ConfigError(f"no {what} path configured")
    path = Path(path_str)
    if not path.exists():
        raise FileNotFoundError(f"{what} file not found: {path}")
    return path


def _load_kb(work: Path) -> tuple[KnowledgeBase, AliasTable]:
    kb = KnowledgeBase.load(_require(work / "kb.npz", "ingest-kb"))
    aliases = AliasTable.load(_require(work / "aliases.tsv", "ingest-kb"))
    return kb, aliases


def _load_vocab(work: Path) -> Vocabulary:
    return Vocabulary.load(_require(work / "vocab.txt", "relabel"))


def _load_model(work: Path, kb: KnowledgeBase, vocab: Vocabulary) -> KsaModel:
    path = _require(work / "model.ckpt", "train")
    _require(work / "model.ckpt.json", "train")
    return KsaModel.load(path, vocab, kb.relations)


def _entity_label(aliases: AliasTable, entity: str) -> str:
    names = aliases.aliases_of(entity)
    return f"{names[0]} [{entity}]" if names else entity


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_ingest_kb(args, cfg: PipelineConfig) -> int:
    work = _work(cfg)
    kb = ingest_triples(_open_input(cfg.kb_triples, "triples"))
    aliases = ingest_aliases(_open_input(cfg.kb_aliases, "aliases"))
    kb.save(work / "kb.npz")
    aliases.save(work / "aliases.tsv")
    counts = (kb.entity_count, kb.relation_count, kb.triple_count)
    _log(f"entities  {counts[0]}")
    _log(f"relations {counts[1]}")
    _log(f"triples   {counts[2]}")
    _log(f"aliases   {len(aliases)}")
    if args.full and counts != FULL_KB_COUNTS:
        raise ConfigError(
            f"--full expects KB counts {FULL_KB_COUNTS}, got {counts}")
    return 0


def cmd_relabel(args, cfg: PipelineConfig) -> int:
    work = _work(cfg)
    kb, aliases = _load_kb(work)
    splits = {}
    for split, path_str in (("train", cfg.train_file), ("valid", cfg.valid_file),
                            ("test", cfg.test_file)):
        if path_str:
            splits[split] = parse_simplequestions(_open_input(path_str, split), split)
    if "train" not in splits:
        raise ConfigError("relabel needs at least a train_file")
    if args.full:
        for split, records in splits.items():
            want = FULL_SPLIT_COUNTS[split]
            if len(records) != want:
                raise ConfigError(
                    f"--full expects {want} {split} records, got {len(records)}")

    pattern_splits = [s.strip() for s in cfg.pattern_splits.split(",") if s.strip()]
    for s in pattern_splits:
        if s not in ("train", "valid"):
            raise ConfigError(f"pattern_splits may name train/valid only, got {s!r}")

    from .dataset import format_question
    formatted = {split: [format_question(r, aliases) for r in records]
                 for split, records in splits.items()}
    index = build_pattern_index(
        [r for s in pattern_splits if s in splits for r in splits[s]],
        [f for s in pattern_splits if s in splits for f in formatted[s]])

    vocab_streams = [r.tokens for r in splits["train"]]
    vocab_streams += [f.tokens for f in formatted["train"] if f is not None]
    vocab = build_vocabulary(vocab_streams, cfg.min_count)
    vocab.save(work / "vocab.txt")
    _log(f"vocabulary {len(vocab)} tokens (min_count={cfg.min_count})")

    for split, records in splits.items():
        examples, skipped = relabel_dataset(records, kb, aliases, index)
        export_jsonl(examples, work / f"{split}.jsonl")
        write_formatted_tsv(work / f"{split}_formatted.tsv", records, formatted[split])
        rate = ambiguity_rate(examples)
        _log(f"{split}: {len(records)} records, {len(examples)} formatable, "
             f"{skipped} without alias match, ambiguity rate {rate:.4f}")
        if split == "train":
            write_report(examples, work / "alias_report.tsv", work / "pattern_report.tsv")
    return 0


def cmd_stats(args, cfg: PipelineConfig) -> int:
    work = _work(cfg)
    kb, aliases = _load_kb(work)
    _log(f"entities  {kb.entity_count}")
    _log(f"relations {kb.relation_count}")
    _log(f"triples   {kb.triple_count}")
    _log(f"aliases   {len(aliases)}")
    for split in ("train", "valid", "test"):
        path = work / f"{split}.jsonl"
        if path.exists():
            examples = load_jsonl(path, split)
            _log(f"{split}: {len(examples)} examples, "
                 f"ambiguity rate {ambiguity_rate(examples):.4f}")
    return 0


def cmd_pretrain_transe(args, cfg: PipelineConfig) -> int:
    work = _work(cfg)
    kb, _ = _load_kb(work)
    tcfg = TransEConfig(dim=cfg.transe_dim, margin=cfg.transe_margin,
                        norm=cfg.transe_norm, lr=cfg.transe_lr,
                        epochs=cfg.transe_epochs, batch_size=cfg.transe_batch_size,
                        seed=cfg.seed)
    emb, history = train_transe(kb, tcfg, log=_log)
    emb.save(work / "transe.ckpt")
    _log(f"saved transe.ckpt (dim={tcfg.dim}, final epoch loss {history[-1]:.4f})")
    return 0


def cmd_train_tagger(args, cfg: PipelineConfig) -> int:
    work = _work(cfg)
    vocab = _load_vocab(work)
    train_examples = load_jsonl(_require(work / "train.jsonl", "relabel"), "train")
    pairs = [(ex.record.tokens, tags_for_span(len(ex.record.tokens), ex.formatted.mention_span))
             for ex in train_examples]
    valid_path = work / "valid.jsonl"
    valid_pairs = None
    if valid_path.exists():
        valid_pairs = [(ex.record.tokens,
                        tags_for_span(len(ex.record.tokens), ex.formatted.mention_span))
                       for ex in load_jsonl(valid_path, "valid")]
    tcfg = TaggerConfig(d_word=cfg.tagger_d_word, hidden=cfg.tagger_hidden,
                        lr=cfg.tagger_lr, epochs=cfg.tagger_epochs,
                        patience=cfg.tagger_patience, seed=cfg.seed)
    model, history = train_tagger(pairs, tcfg, vocab, valid_pairs, log=_log)
    model.save(work / "tagger.ckpt")
    (work / "tagger_history.json").write_text(json.dumps(history, indent=2) + "\n")
    _log("saved tagger.ckpt")
    return 0


def cmd_train(args, cfg: PipelineConfig) -> int:
    work = _work(cfg)
    kb, _ = _load_kb(work)
    vocab = _load_vocab(work)
    train_examples = load_jsonl(_require(work / "train.jsonl", "relabel"), "train")
    valid_examples = None
    if (work / "valid.jsonl").exists():
        valid_examples = load_jsonl(work / "valid.jsonl", "valid")
    mcfg = ModelConfig(
        d_word=cfg.d_word, d_rel=cfg.d_rel, d_hidden=cfg.d_hidden,
        question_layers=cfg.question_layers, attention_hidden=cfg.attention_hidden,
        dropout=cfg.dropout, lam=cfg.lam,
        negatives_per_positive=cfg.negatives_per_positive, variant=cfg.variant,
        lr=cfg.lr, epochs=cfg.epochs, batch_size=cfg.batch_size, seed=cfg.seed,
        shuffle_augment=cfg.shuffle_augment,
        negatives_from_empty_candidates=cfg.negatives_from_empty_candidates)
    model = KsaModel(vocab, kb.relations, mcfg)
    transe_path = work / "transe.ckpt"
    if args.no_transe_init:
        _log("relation embeddings: random init (--no-transe-init)")
    elif transe_path.exists():
        emb = EmbeddingSet.load(transe_path)
        rows = export_relation_embeddings(emb, model.relations, Rng(cfg.seed + 7))
        if rows.shape[1] != cfg.d_rel:
            raise ConfigError(
                f"transe.ckpt holds {rows.shape[1]}-dim vectors but d_rel is "
                f"{cfg.d_rel}; set transe_dim = d_rel or pass --no-transe-init")
        model.rel_emb.data[: len(model.relations)] = rows
        _log(f"relation embeddings: initialized from {transe_path.name}")
    else:
        _log("relation embeddings: random init (no transe.ckpt found)")
    history = train_model(model, train_examples, kb, valid_examples, log=_log)
    model.save(work / "model.ckpt")
    (work / "history.json").write_text(json.dumps(history, indent=2) + "\n")
    _log(f"saved model.ckpt ({model.parameter_count()} parameters, "
         f"variant {mcfg.variant})")
    return 0


def cmd_eval(args, cfg: PipelineConfig) -> int:
    work = _work(cfg)
    kb, aliases = _load_kb(work)
    vocab = _load_vocab(work)
    model = _load_model(work, kb, vocab)
    split = args.split
    examples = load_jsonl(_require(work / f"{split}.jsonl", "relabel"), split)
    tagger = None
    if not cfg.gold_spans:
        tagger = TaggerModel.load(_require(work / "tagger.ckpt", "train-tagger"), vocab)
    report = evaluate(examples, model, kb, aliases=aliases, tagger=tagger,
                      gold_spans=cfg.gold_spans, lam=cfg.lam,
                      skip_detection_failures=cfg.skip_detection_failures)
    _log(report.table())
    (work / "report.txt").write_text(report.table() + "\n")
    (work / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    n_diff = diff_report(report.results, work / "diff.jsonl")
    _log(f"diff.jsonl: {n_diff} disagreeing questions")
    if args.baseline:
        base = random_baseline(examples, kb, Rng(cfg.seed + 13),
                               skip_detection_failures=cfg.skip_detection_failures)
        _log("random baseline:")
        _log(base.table())
    return 0


def _resolve_mention(cfg, work, vocab, tokens, mention_flag):
    """Mention from --mention or the tagger; raises DetectionFailureError."""
    if mention_flag:
        mention_tokens = tokenize(mention_flag)
        for start in range(len(tokens) - len(mention_tokens) + 1):
            if tokens[start : start + len(mention_tokens)] == mention_tokens:
                return (start, start + len(mention_tokens))
        raise DetectionFailureError(
            f"--mention {mention_flag!r} does not occur in the question")
    tagger_path = work / "tagger.ckpt"
    if not tagger_path.exists():
        raise MissingArtifactError(
            "no tagger.ckpt; run `ksaqa train-tagger` or pass --mention")
    tagger = TaggerModel.load(tagger_path, vocab)
    sp = predict_span(tagger, tokens)
    if sp.failed:
        raise DetectionFailureError("the tagger found no subject mention")
    return sp.span


def _question_setup(args, cfg):
    work = _work(cfg)
    kb, aliases = _load_kb(work)
    vocab = _load_vocab(work)
    model = _load_model(work, kb, vocab)
    tokens = tokenize(args.question)
    if not tokens:
        raise ConfigError("empty question")
    span = _resolve_mention(cfg, work, vocab, tokens, args.mention)
    fq = span_to_formatted(tokens, span)
    candidates = aliases.entities_for_alias(fq.mention_text)
    if not candidates:
        raise DetectionFailureError(
            f"no entity is known under the alias {fq.mention_text!r}")
    return work, kb, aliases, model, fq, candidates


def cmd_predict(args, cfg: PipelineConfig) -> int:
    _, kb, aliases, model, fq, candidates = _question_setup(args, cfg)
    _log(f"formatted: {fq.text}")
    scores = model.score_pairs(fq.tokens, candidates, kb)
    for s in scores:
        mark = "*" if s.probability > cfg.lam else " "
        _log(f"{mark} {s.probability:.4f}  {_entity_label(aliases, s.pair[0])}"
             f"  {s.pair[1]}")
    if not scores:
        _log("no candidate pairs")
    return 0


def cmd_attention(args, cfg: PipelineConfig) -> int:
    work, kb, aliases, model, fq, candidates = _question_setup(args, cfg)
    subject = args.subject
    if subject is None:
        top = model.top1(fq.tokens, candidates, kb)
        if top is None:
            raise DetectionFailureError("no scorable candidate pairs")
        subject = top[0]
    amap = export_attention(model, fq.tokens, subject, kb, path=work / "attention.tsv")
    _log(f"subject: {_entity_label(aliases, subject)}")
    _log(amap.heatmap())
    _log(f"wrote {work / 'attention.tsv'}")
    return 0


def cmd_answer(args, cfg: PipelineConfig) -> int:
    _, kb, aliases, model, fq, candidates = _question_setup(args, cfg)
    scores = model.score_pairs(fq.tokens, candidates, kb)
    chosen = [s for s in scores if s.probability > cfg.lam]
    if not chosen and scores:
        _log(f"no interpretation scores above {cfg.lam}; best guess:")
        chosen = [scores[0]]
    if not chosen:
        raise DetectionFailureError("no scorable candidate pairs")

    def show_objects(pair):
        s, r = pair
        objs = kb.objects(kb.entity_id(s), kb.relation_id(r))
        if objs.size == 0:
            _log("no objects recorded for this pair")
        for t in objs:
            _log(f"  {_entity_label(aliases, kb.entities[t])}")

    if len(chosen) == 1 or args.non_interactive:
        for i, s in enumerate(chosen, start=1):
            _log(f"{i}. {_entity_label(aliases, s.pair[0])} | {s.pair[1]} "
                 f"(p={s.probability:.4f})")
        if len(chosen) == 1 and not args.non_interactive:
            show_objects(chosen[0].pair)
        return 0
    _log("Which one do you mean?")
    for i, s in enumerate(chosen, start=1):
        _log(f"{i}. {_entity_label(aliases, s.pair[0])} | {s.pair[1]} "
             f"(p={s.probability:.4f})")
    try:
        raw = input("> ").strip()
    except EOFError:
        raise ConfigError("no choice provided on stdin") from None
    try:
        pick = int(raw)
    except ValueError:
        raise ConfigError(f"expected a number 1..{len(chosen)}, got {raw!r}") from None
    if not 1 <= pick <= len(chosen):
        raise ConfigError(f"choice {pick} out of range 1..{len(chosen)}")
    show_objects(chosen[pick - 1].pair)
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

# (flag, config key, type) triplets; None type = string
_COMMON = [("--workdir", "workdir", str), ("--seed", "seed", int),
           ("--backend", "backend", str)]
_MODEL_FLAGS = [
    ("--variant", "variant", str), ("--d-word", "d_word", int),
    ("--d-rel", "d_rel", int), ("--d-hidden", "d_hidden", int),
    ("--attention-hidden", "attention_hidden", int),
    ("--dropout", "dropout", float), ("--lambda", "lam", float),
    ("--negatives", "negatives_per_positive", int), ("--lr", "lr", float),
    ("--epochs", "epochs", int), ("--batch-size", "batch_size", int),
]


def _add_flags(sub, triplets):
    for flag, key, kind in triplets:
        sub.add_argument(flag, dest=key, type=kind, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ksaqa",
        description="Ambiguity-aware single-relation KBQA pipeline.",
        epilog="Exit codes: 2 usage, 3 config, 4 missing input, 5 malformed "
               "input, 6 missing artifact, 7 detection failure, 8 bad checkpoint.")
    subs = parser.add_subparsers(dest="command", required=True)

    def sub(name, func, helptext):
        s = subs.add_parser(name, help=helptext)
        s.add_argument("--config", default=None)
        _add_flags(s, _COMMON)
        s.set_defaults(func=func)
        return s

    s = sub("ingest-kb", cmd_ingest_kb, "build the KB and alias indexes")
    s.add_argument("--triples", dest="kb_triples", default=None)
    s.add_argument("--aliases", dest="kb_aliases", default=None)
    s.add_argument("--full", action="store_true",
                   help="assert full Freebase-2M ingest counts")

    s = sub("relabel", cmd_relabel, "format questions and compute plausible sets")
    s.add_argument("--train", dest="train_file", default=None)
    s.add_argument("--valid", dest="valid_file", default=None)
    s.add_argument("--test", dest="test_file", default=None)
    s.add_argument("--pattern-splits", dest="pattern_splits", default=None)
    s.add_argument("--min-count", dest="min_count", type=int, default=None)
    s.add_argument("--full", action="store_true",
                   help="assert full SimpleQuestions split sizes")

    sub("stats", cmd_stats, "print KB and relabeled-dataset statistics")

    s = sub("pretrain-transe", cmd_pretrain_transe, "pretrain relation embeddings")
    _add_flags(s, [("--transe-dim", "transe_dim", int),
                   ("--transe-margin", "transe_margin", float),
                   ("--transe-norm", "transe_norm", str),
                   ("--transe-lr", "transe_lr", float),
                   ("--transe-epochs", "transe_epochs", int),
                   ("--transe-batch-size", "transe_batch_size", int)])

    s = sub("train-tagger", cmd_train_tagger, "train the subject-span tagger")
    _add_flags(s, [("--tagger-d-word", "tagger_d_word", int),
                   ("--tagger-hidden", "tagger_hidden", int),
                   ("--tagger-lr", "tagger_lr", float),
                   ("--tagger-epochs", "tagger_epochs", int),
                   ("--tagger-patience", "tagger_patience", int)])

    s = sub("train", cmd_train, "train the relation predictor")
    _add_flags(s, _MODEL_FLAGS)
    s.add_argument("--shuffle-augment", dest="shuffle_augment",
                   action=argparse.BooleanOptionalAction, default=None)
    s.add_argument("--no-transe-init", action="store_true")
    s.add_argument("--full", action="store_true",
                   help="paper-scale defaults (they are the config defaults)")

    s = sub("eval", cmd_eval, "evaluate a trained model")
    s.add_argument("--split", default="test", choices=("train", "valid", "test"))
    s.add_argument("--gold-spans", dest="gold_spans",
                   action=argparse.BooleanOptionalAction, default=None)
    s.add_argument("--skip-detection-failures", dest="skip_detection_failures",
                   action=argparse.BooleanOptionalAction, default=None)
    s.add_argument("--lambda", dest="lam", type=float, default=None)
    s.add_argument("--baseline", action="store_true",
                   help="also print the seeded random baseline")

    for name, func, helptext in (
            ("predict", cmd_predict, "score all interpretations of one question"),
            ("attention", cmd_attention, "export the attention map for one question"),
            ("answer", cmd_answer, "interactive clarification flow")):
        s = sub(name, func, helptext)
        if name == "answer":
            s.add_argument("question")
            s.add_argument("--non-interactive", action="store_true")
        else:
            s.add_argument("--question", required=True)
        s.add_argument("--mention", default=None)
        s.add_argument("--lambda", dest="lam", type=float, default=None)
        if name == "attention":
            s.add_argument("--subject", default=None)
    return parser


_CONFIG_KEYS = {f for f in PipelineConfig.__dataclass_fields__}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items()
                 if k in _CONFIG_KEYS and v is not None}
    try:
        cfg = load_config(args.config, overrides)
        try:
            kernels.set_backend(cfg.backend)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return 4
    except IngestError as exc:
        print(f"malformed input: {exc}", file=sys.stderr)
        return 5
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return 6
    except DetectionFailureError as exc:
        print(f"detection failure: {exc}", file=sys.stderr)
        return 7
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return 8


if __name__ == "__main__":
    sys.exit(main())
