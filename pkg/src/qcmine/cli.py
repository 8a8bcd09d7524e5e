"""End-to-end mining pipeline and its command-line interface.

Subcommands: parse, filter-train, filter, train, eval, ensemble-eval,
mine, stats, merge. A JSON config file (sections: tokenize, vocab, model,
train, mine) carries everything not given as a flag. The dump is JSON
Lines, one record per question:

    {"question_id": int, "title": str, "tags": [str],
     "question_body_html": str, "accepted_answer_html": str}
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from enum import Enum

from . import baselines, models, question_filter, train_eval
from .models import CheckpointMismatch, Variant, VariantConfig
from .post_parser import (
    Block,
    BlockKind,
    BlockSequence,
    EmptyPost,
    PositionMismatch,
    extract_instances,
    parse_answer_post,
    tokenize_sequence,
)
from . import tokenize as tokenize_mod
from .tokenize import Language, normalize_code, tokenize_text
from .train_eval import Decision, Metrics, TrainConfig, evaluate
from .vocab_embed import build_vocab


class DumpParseError(ValueError):
    pass


class Provenance(Enum):
    SINGLE_CODE = "single_code"
    ENSEMBLE_MINED = "ensemble_mined"
    ANNOTATED = "annotated"


@dataclass
class MinedPair:
    question_id: int
    title: str
    code: str
    position: int
    provenance: Provenance
    score: float | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "question_id": self.question_id,
                "title": self.title,
                "code": self.code,
                "position": self.position,
                "provenance": self.provenance.value,
                "score": self.score,
            },
            sort_keys=True,
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "MinedPair":
        obj = json.loads(line)
        return cls(
            question_id=int(obj["question_id"]),
            title=obj["title"],
            code=obj["code"],
            position=int(obj["position"]),
            provenance=Provenance(obj["provenance"]),
            score=obj.get("score"),
        )


DEFAULT_CONFIG = {
    "language": "python",
    "tokenize": {"python_keep_list": None, "connectives": None},
    "vocab": {"min_count": 1},
    "model": {
        "variant": "biv_hnn",
        "d_embed": 150,
        "d_token_gru": 64,
        "d_block": 128,
        "seed": 0,
        "share_text_question_encoder": True,
        "word_embedding_file": None,
        "code_embedding_file": None,
    },
    "train": {
        "lr": 0.001,
        "batch_size": 100,
        "max_epochs": 100,
        "patience": 10,
        "seed": 0,
        "freeze_embeddings": False,
        "l2": 1e-4,
        "linear_epochs": 30,
        "linear_lr": 0.1,
    },
    "mine": {},
}


def load_config(path=None) -> dict:
    config = {k: dict(v) if isinstance(v, dict) else v for k, v in DEFAULT_CONFIG.items()}
    if path:
        with open(path, encoding="utf-8") as f:
            user = json.load(f)
        for key, value in user.items():
            if isinstance(value, dict) and isinstance(config.get(key), dict):
                config[key].update(value)
            else:
                config[key] = value
    return config


def config_language(config) -> Language:
    return Language(config.get("language", "python"))


def apply_tokenize_config(config) -> None:
    """Install a custom Python keep-list when the config names one."""
    path = config.get("tokenize", {}).get("python_keep_list")
    tokenize_mod.set_default_keep_list(tokenize_mod.load_keep_list(path) if path else None)


def config_connectives(config):
    path = config.get("tokenize", {}).get("connectives")
    return baselines.load_connectives(path) if path else baselines.default_connectives()


# --------------------------------------------------------------------------
# Dump and label readers
# --------------------------------------------------------------------------

_REQUIRED_FIELDS = ("question_id", "title", "tags", "accepted_answer_html")


def read_dump(path):
    """Yield (record, error) pairs; malformed lines yield
    (None, DumpParseError) so callers can count skips without aborting."""
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                yield None, DumpParseError(f"line {line_no}: {exc}")
                continue
            missing = [k for k in _REQUIRED_FIELDS if k not in record]
            if missing:
                yield None, DumpParseError(f"line {line_no}: missing fields {missing}")
                continue
            try:
                record["question_id"] = int(record["question_id"])
            except (TypeError, ValueError):
                yield None, DumpParseError(f"line {line_no}: non-integer question_id")
                continue
            yield record, None


def domain_matches(tags, language: Language) -> bool:
    lowered = [str(t).lower() for t in tags]
    if language is Language.PYTHON:
        return any("python" in t for t in lowered)
    if language is Language.SQL:
        return any(t in ("sql", "database", "oracle") for t in lowered)
    return False


def read_annotation_csv(path) -> dict[int, dict[int, int]]:
    """CSV (question_id, code_position, label) -> {qid: {position: label}}."""
    labels: dict[int, dict[int, int]] = {}
    with open(path, encoding="utf-8", newline="") as f:
        for row in csv.reader(f):
            if not row or not row[0].strip() or not row[0].strip().lstrip("-").isdigit():
                continue  # header or blank
            qid, pos, label = int(row[0]), int(row[1]), int(row[2])
            if label not in (0, 1):
                raise ValueError(f"{path}: label must be 0/1, got {label}")
            labels.setdefault(qid, {})[pos] = label
    return labels


def read_question_labels_csv(path) -> dict[int, question_filter.QuestionLabel]:
    out = {}
    with open(path, encoding="utf-8", newline="") as f:
        for row in csv.reader(f):
            if not row or not row[0].strip().lstrip("-").isdigit():
                continue
            out[int(row[0])] = question_filter.QuestionLabel(row[1].strip().lower())
    return out


def _parse_or_empty(html: str, qid: int) -> BlockSequence:
    try:
        return parse_answer_post(html or "", qid)
    except EmptyPost:
        return BlockSequence(qid, [Block(BlockKind.TEXT, "")])


# --------------------------------------------------------------------------
# Dataset assembly
# --------------------------------------------------------------------------


def load_labeled_instances(dump_path, labels_by_qid, language: Language):
    """Extract labeled instances for training/evaluation.

    Returns (instances, report). Positions without an adopted label are
    dropped; label positions that do not exist raise PositionMismatch.
    """
    instances = []
    report = {"records": 0, "parse_errors": 0, "matched_questions": 0}
    for record, err in read_dump(dump_path):
        report["records"] += 1
        if err:
            report["parse_errors"] += 1
            continue
        qid = record["question_id"]
        if qid not in labels_by_qid:
            continue
        try:
            seq = parse_answer_post(record["accepted_answer_html"], qid)
        except EmptyPost:
            report["parse_errors"] += 1
            continue
        report["matched_questions"] += 1
        tokenize_sequence(seq, language)
        for inst in extract_instances(record["title"], seq, labels_by_qid[qid], language):
            if inst.label is not None:
                instances.append(inst)
    return instances, report


def build_vocabs(instances, min_count: int = 1):
    word_streams = []
    code_streams = []
    for inst in instances:
        word_streams.append(inst.question_tokens)
        word_streams.append(inst.pre_tokens)
        word_streams.append(inst.post_tokens)
        code_streams.append(inst.code_tokens)
    return build_vocab(word_streams, min_count), build_vocab(code_streams, min_count)


# --------------------------------------------------------------------------
# Mining
# --------------------------------------------------------------------------


def _load_ensemble(biv_path, text_path, code_path):
    biv = models.load_model(biv_path)
    text = models.load_model(text_path)
    code = models.load_model(code_path)
    expected = (Variant.BIV_HNN, Variant.TEXT_HNN, Variant.CODE_HNN)
    actual = (biv.config.variant, text.config.variant, code.config.variant)
    if actual != expected:
        raise CheckpointMismatch(f"ensemble needs variants {expected}, got {actual}")
    if not (
        biv.word_vocab.token_to_id
        == text.word_vocab.token_to_id
        == code.word_vocab.token_to_id
    ):
        raise CheckpointMismatch("ensemble checkpoints disagree on the word vocabulary")
    if biv.code_vocab.token_to_id != code.code_vocab.token_to_id:
        raise CheckpointMismatch("ensemble checkpoints disagree on the code vocabulary")
    return biv, text, code


def mine(
    dump_path,
    biv_path,
    text_path,
    code_path,
    filter_model_path,
    out_path,
    config: dict | None = None,
) -> dict:
    """Run the full mining pipeline over a dump.

    Per question: drop non-how-to questions; single-code answers emit the
    pair directly; multi-code answers go through the agreement ensemble,
    with unanimous label-1 blocks mined, unanimous label-0 dropped, and
    disagreements recorded in an abstentions sidecar.
    """
    config = config or load_config()
    language = config_language(config)
    biv, text, code = _load_ensemble(biv_path, text_path, code_path)
    qfilter = question_filter.QuestionFilterModel.load(filter_model_path)

    report = {
        "records": 0,
        "parse_errors": 0,
        "domain_skipped": 0,
        "non_howto": 0,
        "no_code": 0,
        "single_code_pairs": 0,
        "ensemble_pairs": 0,
        "ensemble_rejections": 0,
        "abstentions": 0,
    }
    abstention_path = str(out_path) + ".abstentions.jsonl"
    with open(out_path, "w", encoding="utf-8") as out, open(
        abstention_path, "w", encoding="utf-8"
    ) as abstain_out:
        for record, err in read_dump(dump_path):
            report["records"] += 1
            if err:
                report["parse_errors"] += 1
                continue
            if not domain_matches(record["tags"], language):
                report["domain_skipped"] += 1
                continue
            qid = record["question_id"]
            title = record["title"]
            try:
                answer_seq = parse_answer_post(record["accepted_answer_html"], qid)
            except EmptyPost:
                report["parse_errors"] += 1
                continue
            code_blocks = answer_seq.code_blocks()
            if not code_blocks:
                report["no_code"] += 1
                continue

            question_seq = _parse_or_empty(record.get("question_body_html", ""), qid)
            feats = question_filter.featurize_question(
                title, question_seq, answer_seq, qfilter.keywords
            )
            label, _ = question_filter.classify_question(feats, qfilter)
            if label is not question_filter.QuestionLabel.HOW_TO:
                report["non_howto"] += 1
                continue

            if len(code_blocks) == 1:
                pair = MinedPair(qid, title, code_blocks[0].raw, 1, Provenance.SINGLE_CODE)
                out.write(pair.to_json() + "\n")
                report["single_code_pairs"] += 1
                continue

            tokenize_sequence(answer_seq, language)
            for inst in extract_instances(title, answer_seq, None, language):
                decision = train_eval.ensemble(biv, text, code, inst)
                if decision.decision is Decision.LABEL1:
                    pair = MinedPair(
                        qid,
                        title,
                        inst.raw_code,
                        inst.position,
                        Provenance.ENSEMBLE_MINED,
                        score=decision.scores[0],
                    )
                    out.write(pair.to_json() + "\n")
                    report["ensemble_pairs"] += 1
                elif decision.decision is Decision.LABEL0:
                    report["ensemble_rejections"] += 1
                else:
                    abstain_out.write(
                        json.dumps(
                            {
                                "question_id": qid,
                                "position": inst.position,
                                "votes": list(decision.votes),
                                "scores": list(decision.scores),
                            },
                            sort_keys=True,
                        )
                        + "\n"
                    )
                    report["abstentions"] += 1
    return report


def merge_annotated(mined_path, annotated_csv, dump_path, out_path) -> dict:
    """Add annotated label-1 pairs to a mined dataset.

    On a (question_id, position) collision the annotated pair wins.
    Positions that do not exist in the dump raise PositionMismatch.
    """
    labels = read_annotation_csv(annotated_csv)
    posts: dict[int, tuple[str, list[str]]] = {}
    for record, err in read_dump(dump_path):
        if err or record["question_id"] not in labels:
            continue
        try:
            seq = parse_answer_post(record["accepted_answer_html"], record["question_id"])
        except EmptyPost:
            continue
        posts[record["question_id"]] = (
            record["title"],
            [b.raw for b in seq.code_blocks()],
        )

    annotated: dict[tuple[int, int], MinedPair] = {}
    for qid, by_pos in sorted(labels.items()):
        if qid not in posts:
            raise PositionMismatch(f"annotated question {qid} not found in dump")
        title, code_blocks = posts[qid]
        for pos, label in sorted(by_pos.items()):
            if pos < 1 or pos > len(code_blocks):
                raise PositionMismatch(
                    f"annotated position {pos} of question {qid} exceeds "
                    f"{len(code_blocks)} code blocks"
                )
            if label == 1:
                annotated[(qid, pos)] = MinedPair(
                    qid, title, code_blocks[pos - 1], pos, Provenance.ANNOTATED
                )

    report = {"mined_kept": 0, "mined_replaced": 0, "annotated_added": len(annotated)}
    with open(out_path, "w", encoding="utf-8") as out:
        with open(mined_path, encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                pair = MinedPair.from_json(line)
                if (pair.question_id, pair.position) in annotated:
                    report["mined_replaced"] += 1
                    continue
                out.write(pair.to_json() + "\n")
                report["mined_kept"] += 1
        for key in sorted(annotated):
            out.write(annotated[key].to_json() + "\n")
    report["total"] = report["mined_kept"] + report["annotated_added"]
    return report


def dataset_stats(dataset_path, language: Language = Language.PYTHON) -> dict:
    """Pair counts, average token lengths, and distinct-token counts."""
    n = 0
    by_provenance = {p.value: 0 for p in Provenance}
    question_tokens = 0
    code_tokens = 0
    distinct_q: set[str] = set()
    distinct_c: set[str] = set()
    with open(dataset_path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            pair = MinedPair.from_json(line)
            n += 1
            by_provenance[pair.provenance.value] += 1
            q_toks = tokenize_text(pair.title).tokens
            c_toks = normalize_code(pair.code, language).tokens
            question_tokens += len(q_toks)
            code_tokens += len(c_toks)
            distinct_q.update(q_toks)
            distinct_c.update(c_toks)
    return {
        "pairs": n,
        "by_provenance": by_provenance,
        "avg_question_tokens": question_tokens / n if n else 0.0,
        "avg_code_tokens": code_tokens / n if n else 0.0,
        "distinct_question_tokens": len(distinct_q),
        "distinct_code_tokens": len(distinct_c),
        "provenance_sum_matches_total": sum(by_provenance.values()) == n,
    }


# --------------------------------------------------------------------------
# Training / evaluation entry points
# --------------------------------------------------------------------------


def _variant_config(config: dict, variant: str | None = None) -> VariantConfig:
    section = config["model"]
    return VariantConfig(
        variant=Variant(variant or section["variant"]),
        d_embed=int(section["d_embed"]),
        d_token_gru=int(section["d_token_gru"]),
        d_block=int(section["d_block"]),
        seed=int(section["seed"]),
        share_text_question_encoder=bool(section["share_text_question_encoder"]),
    )


def train_neural(dump_path, train_csv, valid_csv, config, variant=None, out_path=None):
    language = config_language(config)
    train_insts, _ = load_labeled_instances(dump_path, read_annotation_csv(train_csv), language)
    valid_insts, _ = load_labeled_instances(dump_path, read_annotation_csv(valid_csv), language)
    word_vocab, code_vocab = build_vocabs(train_insts, config["vocab"]["min_count"])
    cfg = _variant_config(config, variant)
    model = models.init_model(
        cfg,
        word_vocab,
        code_vocab,
        config["model"]["word_embedding_file"],
        config["model"]["code_embedding_file"],
    )
    section = config["train"]
    hyper = TrainConfig(
        lr=section["lr"],
        batch_size=section["batch_size"],
        max_epochs=section["max_epochs"],
        patience=section["patience"],
        seed=section["seed"],
        freeze_embeddings=section["freeze_embeddings"],
    )
    model, history = train_eval.train(model, train_insts, valid_insts, hyper)
    if out_path:
        models.save_model(model, out_path)
    return model, history


def train_linear_baseline(dump_path, train_csv, config, kind, out_path=None):
    """Train the LR / SVM baseline, including the Python CodeClass
    sub-classifier harvested from the same dump."""
    language = config_language(config)
    train_insts, _ = load_labeled_instances(dump_path, read_annotation_csv(train_csv), language)
    section = config["train"]
    connectives = config_connectives(config)

    codeclass_model = None
    if language is Language.PYTHON:
        sequences = []
        for record, err in read_dump(dump_path):
            if err:
                continue
            try:
                sequences.append(parse_answer_post(record["accepted_answer_html"], record["question_id"]))
            except EmptyPost:
                continue
        corpus = baselines.harvest_codeclass_corpus(sequences, seed=section["seed"])
        if len({label for _, label in corpus}) == 2:
            streams = [(normalize_code(raw, language), label) for raw, label in corpus]
            codeclass_model = baselines.train_codeclass(
                streams, l2=section["l2"], epochs=section["linear_epochs"],
                lr=section["linear_lr"], seed=section["seed"],
            )

    registry = baselines.FeatureRegistry()
    data = [
        (baselines.extract_features(inst, registry, codeclass_model, connectives), inst.label)
        for inst in train_insts
    ]
    registry.freeze()
    linear = baselines.train_linear(
        data,
        kind=kind,
        l2=section["l2"],
        epochs=section["linear_epochs"],
        lr=section["linear_lr"],
        seed=section["seed"],
        dim=registry.size,
    )
    bundle = LinearBundle(linear, registry, codeclass_model, connectives)
    if out_path:
        bundle.save(out_path)
    return bundle


@dataclass
class LinearBundle:
    """A trained linear baseline with its frozen feature space, connective
    lexicon, and optional CodeClass sub-classifier."""

    linear: baselines.LinearModel
    registry: baselines.FeatureRegistry
    codeclass: baselines.LinearModel | None = None
    connectives: list | None = None

    def predict(self, inst):
        feats = baselines.extract_features(inst, self.registry, self.codeclass, self.connectives)
        return baselines.predict_linear(self.linear, feats)

    def save(self, path):
        obj = {
            "format": "qcmine-linear-v1",
            "linear": self.linear.to_dict(),
            "registry": self.registry.to_dict(),
            "codeclass": self.codeclass.to_dict() if self.codeclass else None,
            "connectives": self.connectives,
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(obj, f, sort_keys=True)

    @classmethod
    def load(cls, path) -> "LinearBundle":
        with open(path, encoding="utf-8") as f:
            obj = json.load(f)
        if obj.get("format") != "qcmine-linear-v1":
            raise CheckpointMismatch(f"{path} is not a linear baseline bundle")
        cc = obj.get("codeclass")
        return cls(
            linear=baselines.LinearModel.from_dict(obj["linear"]),
            registry=baselines.FeatureRegistry.from_dict(obj["registry"]),
            codeclass=baselines.LinearModel.from_dict(cc) if cc else None,
            connectives=obj.get("connectives"),
        )


def evaluate_checkpoint(dump_path, labels_csv, checkpoint_path, config) -> dict:
    """Evaluate any checkpoint (neural or linear) plus the two heuristics
    on a labeled set."""
    language = config_language(config)
    labels = read_annotation_csv(labels_csv)
    instances, _ = load_labeled_instances(dump_path, labels, language)
    golds = [inst.label for inst in instances]

    with open(checkpoint_path, encoding="utf-8") as f:
        fmt = json.load(f).get("format")
    if fmt == "qcmine-linear-v1":
        bundle = LinearBundle.load(checkpoint_path)
        preds = [bundle.predict(inst)[0] for inst in instances]
    else:
        model = models.load_model(checkpoint_path)
        preds = [models.predict_label(model, inst)[0] for inst in instances]

    first_preds, all_preds = [], []
    for record, err in read_dump(dump_path):
        if err or record["question_id"] not in labels:
            continue
        try:
            seq = parse_answer_post(record["accepted_answer_html"], record["question_id"])
        except EmptyPost:
            continue
        by_pos = labels[record["question_id"]]
        sf = train_eval.select_first(seq)
        sa = train_eval.select_all(seq)
        for pos in sorted(by_pos):
            first_preds.append(sf[pos - 1])
            all_preds.append(sa[pos - 1])
    return {
        "model": evaluate(preds, golds).to_dict(),
        "select_first": evaluate(first_preds, golds).to_dict(),
        "select_all": evaluate(all_preds, golds).to_dict(),
        "instances": len(instances),
    }


def ensemble_evaluate(dump_path, labels_csv, biv_path, text_path, code_path, config) -> dict:
    """Agreement-ensemble coverage and quality on a labeled set."""
    language = config_language(config)
    biv, text, code = _load_ensemble(biv_path, text_path, code_path)
    instances, _ = load_labeled_instances(dump_path, read_annotation_csv(labels_csv), language)
    decided_preds, decided_golds = [], []
    abstained = 0
    for inst in instances:
        decision = train_eval.ensemble(biv, text, code, inst)
        if decision.decision is Decision.ABSTAIN:
            abstained += 1
        else:
            decided_preds.append(decision.decision.value)
            decided_golds.append(inst.label)
    coverage = len(decided_preds) / len(instances) if instances else 0.0
    decided = (
        evaluate(decided_preds, decided_golds).to_dict() if decided_preds else Metrics().to_dict()
    )
    return {
        "instances": len(instances),
        "coverage": coverage,
        "abstained": abstained,
        "decided_metrics": decided,
    }


# --------------------------------------------------------------------------
# CLI wiring
# --------------------------------------------------------------------------


def cmd_parse(args):
    n_ok = n_err = 0
    with open(args.out, "w", encoding="utf-8") as out:
        for record, err in read_dump(args.dump):
            if err:
                n_err += 1
                continue
            try:
                seq = parse_answer_post(record["accepted_answer_html"], record["question_id"])
            except EmptyPost:
                n_err += 1
                continue
            out.write(
                json.dumps(
                    {
                        "question_id": record["question_id"],
                        "title": record["title"],
                        "blocks": [{"kind": b.kind.value, "raw": b.raw} for b in seq.blocks],
                    },
                    sort_keys=True,
                    ensure_ascii=False,
                )
                + "\n"
            )
            n_ok += 1
    print(json.dumps({"parsed": n_ok, "skipped": n_err}))
    return 0


def cmd_filter_train(args):
    config = load_config(args.config)
    labels = read_question_labels_csv(args.labels)
    section = config["train"]
    labeled = []
    for record, err in read_dump(args.dump):
        if err or record["question_id"] not in labels:
            continue
        answer_seq = _parse_or_empty(record["accepted_answer_html"], record["question_id"])
        question_seq = _parse_or_empty(record.get("question_body_html", ""), record["question_id"])
        feats = question_filter.featurize_question(record["title"], question_seq, answer_seq)
        labeled.append((feats, labels[record["question_id"]]))
    model = question_filter.train_question_filter(
        labeled, l2=section["l2"], epochs=section["linear_epochs"],
        lr=section["linear_lr"], seed=section["seed"],
    )
    model.save(args.out)
    preds = [
        1 if question_filter.classify_question(f, model)[0] is question_filter.QuestionLabel.HOW_TO else 0
        for f, _ in labeled
    ]
    golds = [1 if lab is question_filter.QuestionLabel.HOW_TO else 0 for _, lab in labeled]
    print(json.dumps({"train_metrics": evaluate(preds, golds).to_dict(), "questions": len(labeled)}))
    return 0


def cmd_filter(args):
    model = question_filter.QuestionFilterModel.load(args.model)
    n = 0
    with open(args.out, "w", encoding="utf-8") as out:
        for record, err in read_dump(args.dump):
            if err:
                continue
            answer_seq = _parse_or_empty(record["accepted_answer_html"], record["question_id"])
            question_seq = _parse_or_empty(record.get("question_body_html", ""), record["question_id"])
            feats = question_filter.featurize_question(
                record["title"], question_seq, answer_seq, model.keywords
            )
            label, prob = question_filter.classify_question(feats, model)
            out.write(
                json.dumps(
                    {"question_id": record["question_id"], "label": label.value, "probability": prob},
                    sort_keys=True,
                )
                + "\n"
            )
            n += 1
    print(json.dumps({"classified": n}))
    return 0


def cmd_train(args):
    config = load_config(args.config)
    apply_tokenize_config(config)
    variant = args.variant or config["model"]["variant"]
    if variant in ("lr", "svm"):
        kind = baselines.LOGISTIC if variant == "lr" else baselines.HINGE_SVM
        bundle = train_linear_baseline(args.dump, args.train_labels, config, kind, args.out)
        if args.valid_labels:
            language = config_language(config)
            insts, _ = load_labeled_instances(
                args.dump, read_annotation_csv(args.valid_labels), language
            )
            preds = [bundle.predict(inst)[0] for inst in insts]
            print(json.dumps({"valid_metrics": evaluate(preds, [i.label for i in insts]).to_dict()}))
        else:
            print(json.dumps({"trained": variant}))
        return 0
    if not args.valid_labels:
        raise SystemExit("neural training requires --valid-labels")
    _, history = train_neural(
        args.dump, args.train_labels, args.valid_labels, config, variant, args.out
    )
    last = history[-1]
    best = max(history, key=lambda h: h.valid.f1)
    print(
        json.dumps(
            {
                "epochs": last.epoch,
                "best_epoch": best.epoch,
                "best_valid": best.valid.to_dict(),
            }
        )
    )
    return 0


def cmd_eval(args):
    config = load_config(args.config)
    apply_tokenize_config(config)
    print(json.dumps(evaluate_checkpoint(args.dump, args.labels, args.checkpoint, config)))
    return 0


def cmd_ensemble_eval(args):
    config = load_config(args.config)
    apply_tokenize_config(config)
    print(
        json.dumps(
            ensemble_evaluate(args.dump, args.labels, args.biv, args.text, args.code, config)
        )
    )
    return 0


def cmd_mine(args):
    config = load_config(args.config)
    apply_tokenize_config(config)
    report = mine(args.dump, args.biv, args.text, args.code, args.filter_model, args.out, config)
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_stats(args):
    config = load_config(args.config)
    apply_tokenize_config(config)
    print(json.dumps(dataset_stats(args.dataset, config_language(config)), sort_keys=True))
    return 0


def cmd_merge(args):
    report = merge_annotated(args.mined, args.annotated, args.dump, args.out)
    print(json.dumps(report, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcmine", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, *specs):
        p = sub.add_parser(name)
        for flags, kwargs in specs:
            p.add_argument(flags, **kwargs)
        p.set_defaults(fn=fn)
        return p

    opt_config = ("--config", {"default": None})
    add("parse", cmd_parse, ("--dump", {"required": True}), ("--out", {"required": True}), opt_config)
    add(
        "filter-train", cmd_filter_train,
        ("--dump", {"required": True}), ("--labels", {"required": True}),
        ("--out", {"required": True}), opt_config,
    )
    add(
        "filter", cmd_filter,
        ("--dump", {"required": True}), ("--model", {"required": True}),
        ("--out", {"required": True}), opt_config,
    )
    add(
        "train", cmd_train,
        ("--dump", {"required": True}), ("--train-labels", {"required": True}),
        ("--valid-labels", {"default": None}), ("--variant", {"default": None}),
        ("--out", {"required": True}), opt_config,
    )
    add(
        "eval", cmd_eval,
        ("--dump", {"required": True}), ("--labels", {"required": True}),
        ("--checkpoint", {"required": True}), opt_config,
    )
    add(
        "ensemble-eval", cmd_ensemble_eval,
        ("--dump", {"required": True}), ("--labels", {"required": True}),
        ("--biv", {"required": True}), ("--text", {"required": True}),
        ("--code", {"required": True}), opt_config,
    )
    add(
        "mine", cmd_mine,
        ("--dump", {"required": True}), ("--biv", {"required": True}),
        ("--text", {"required": True}), ("--code", {"required": True}),
        ("--filter-model", {"required": True}), ("--out", {"required": True}),
        opt_config,
    )
    add("stats", cmd_stats, ("--dataset", {"required": True}), opt_config)
    add(
        "merge", cmd_merge,
        ("--mined", {"required": True}), ("--annotated", {"required": True}),
        ("--dump", {"required": True}), ("--out", {"required": True}),
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
