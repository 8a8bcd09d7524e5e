"""Training loop, evaluation metrics, heuristic baselines, and the
three-model agreement ensemble."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import models as models_mod
from .nn_core import AdamState, adam_update, backward, softmax_xent
from .post_parser import BlockSequence, CodeContextInstance


class LengthMismatch(ValueError):
    pass


class EmptyInput(ValueError):
    pass


class EmptySplit(ValueError):
    pass


@dataclass
class Metrics:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    accuracy: float = 0.0
    zero_division: bool = False

    def to_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "precision": self.precision, "recall": self.recall,
            "f1": self.f1, "accuracy": self.accuracy,
        }


def evaluate(preds, golds) -> Metrics:
    """Binary classification metrics with label 1 as the positive class.
    Degenerate denominators yield 0 and set the zero_division flag."""
    preds, golds = list(preds), list(golds)
    if len(preds) != len(golds):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(golds)} golds")
    m = Metrics()
    for p, g in zip(preds, golds):
        if p == 1 and g == 1:
            m.tp += 1
        elif p == 1:
            m.fp += 1
        elif g == 1:
            m.fn += 1
        else:
            m.tn += 1
    total = m.tp + m.fp + m.tn + m.fn
    if m.tp + m.fp:
        m.precision = m.tp / (m.tp + m.fp)
    else:
        m.zero_division = True
    if m.tp + m.fn:
        m.recall = m.tp / (m.tp + m.fn)
    else:
        m.zero_division = True
    if m.precision + m.recall:
        m.f1 = 2 * m.precision * m.recall / (m.precision + m.recall)
    else:
        m.zero_division = True
    m.accuracy = (m.tp + m.tn) / total if total else 0.0
    return m


def select_first(seq: BlockSequence) -> list[int]:
    """Heuristic: only the first code block is a solution."""
    n = len(seq.code_blocks())
    return [1] + [0] * (n - 1) if n else []


def select_all(seq: BlockSequence) -> list[int]:
    """Heuristic: every code block is a solution."""
    return [1] * len(seq.code_blocks())


def mrr(ranks) -> float:
    """Mean reciprocal rank over 1-based rank positions."""
    ranks = list(ranks)
    if not ranks:
        raise EmptyInput("mrr needs at least one rank")
    if any(r < 1 for r in ranks):
        raise ValueError("ranks are 1-based")
    return sum(1.0 / r for r in ranks) / len(ranks)


def cohens_kappa(labels_a, labels_b) -> float:
    """Chance-corrected agreement between two binary label vectors."""
    a, b = list(labels_a), list(labels_b)
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} vs {len(b)} labels")
    if not a:
        raise EmptyInput("kappa needs at least one pair")
    n = len(a)
    p_o = sum(1 for x, y in zip(a, b) if x == y) / n
    pa = sum(a) / n
    pb = sum(b) / n
    p_e = pa * pb + (1 - pa) * (1 - pb)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1 - p_e)


# --------------------------------------------------------------------------
# Agreement ensemble
# --------------------------------------------------------------------------


class Decision(Enum):
    LABEL0 = 0
    LABEL1 = 1
    ABSTAIN = "abstain"


@dataclass
class EnsembleDecision:
    decision: Decision
    votes: tuple[int, int, int]
    scores: tuple[float, float, float]


def combine_votes(votes) -> Decision:
    votes = tuple(votes)
    if all(v == votes[0] for v in votes):
        return Decision.LABEL1 if votes[0] == 1 else Decision.LABEL0
    return Decision.ABSTAIN


def ensemble(biv, text, code, inst: CodeContextInstance) -> EnsembleDecision:
    """Predict only on unanimous votes of the three models, else abstain."""
    votes, scores = [], []
    for model in (biv, text, code):
        label, score = models_mod.predict_label(model, inst)
        votes.append(label)
        scores.append(score)
    return EnsembleDecision(combine_votes(votes), tuple(votes), tuple(scores))


# --------------------------------------------------------------------------
# Neural training loop
# --------------------------------------------------------------------------


@dataclass
class TrainConfig:
    lr: float = 0.001
    batch_size: int = 100
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    freeze_embeddings: bool = False


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    valid: Metrics


def _epoch_pass(model, instances, order, batch_size, adam, freeze_embeddings=False) -> float:
    total_loss = 0.0
    for start in range(0, len(order), batch_size):
        batch = order[start : start + batch_size]
        model.zero_grad()
        for idx in batch:
            inst = instances[idx]
            logits, _ = models_mod.forward_graph(model, inst)
            _, loss = softmax_xent(logits, inst.label)
            backward(loss, seed=1.0 / len(batch))
            total_loss += float(loss.value)
        if freeze_embeddings:
            for name in ("word_embeddings", "code_embeddings"):
                node = model.params.get(name)
                if node is not None:
                    node.grad = None
        adam_update(model.named_values(), model.named_grads(), adam)
    return total_loss / len(order)


def evaluate_model(model, instances) -> Metrics:
    preds = [models_mod.predict_label(model, inst)[0] for inst in instances]
    return evaluate(preds, [inst.label for inst in instances])


def train(
    model: "models_mod.ModelParameters",
    train_set: list[CodeContextInstance],
    valid_set: list[CodeContextInstance],
    hyper: TrainConfig | None = None,
) -> tuple["models_mod.ModelParameters", list[EpochStats]]:
    """Adam mini-batch training with validation-F1 model selection.

    The best-epoch parameters are restored into ``model`` before returning;
    training stops early after ``patience`` non-improving epochs.
    """
    hyper = hyper or TrainConfig()
    if not train_set or not valid_set:
        raise EmptySplit("train and validation splits must be nonempty")
    if any(inst.label is None for inst in train_set + valid_set):
        raise ValueError("all training/validation instances must be labeled")

    rng = np.random.default_rng(hyper.seed)
    adam = AdamState(lr=hyper.lr)
    best = model.snapshot()
    best_f1 = -1.0
    stale = 0
    history: list[EpochStats] = []
    for epoch in range(1, hyper.max_epochs + 1):
        order = rng.permutation(len(train_set))
        mean_loss = _epoch_pass(
            model, train_set, order, hyper.batch_size, adam, hyper.freeze_embeddings
        )
        metrics = evaluate_model(model, valid_set)
        history.append(EpochStats(epoch, mean_loss, metrics))
        if metrics.f1 > best_f1:
            best_f1 = metrics.f1
            best = model.snapshot()
            stale = 0
        else:
            stale += 1
            if stale >= hyper.patience:
                break
    model.restore(best)
    return model, history
