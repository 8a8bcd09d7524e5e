"""Shared test utilities: finite-difference gradient checking, fuzz post
generation, and synthetic datasets."""

from __future__ import annotations

import json
import random

import numpy as np

from qcmine.nn_core import backward, zero_grad
from qcmine.post_parser import CodeContextInstance
from qcmine.vocab_embed import build_vocab


def finite_diff_check(loss_fn, nodes, eps=1e-5, floor=1e-6):
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` must rebuild the graph from the current node values and
    return the scalar loss node. ``nodes`` are the leaves to check.
    """
    zero_grad(nodes)
    backward(loss_fn())

    def value():
        return float(np.ravel(loss_fn().value)[0])

    worst = 0.0
    for node in nodes:
        arr = node.value
        analytic = node.grad if node.grad is not None else np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + eps
            up = value()
            arr[idx] = orig - eps
            down = value()
            arr[idx] = orig
            numeric = (up - down) / (2 * eps)
            a = analytic[idx]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, rel)
    return worst


# --------------------------------------------------------------------------
# Fuzzed answer posts
# --------------------------------------------------------------------------

_WORDS = "alpha beta gamma delta value result data frame index call".split()
_CODE_LINES = ["x = 1", "print(x)", ">>> f(2)", "for i in items: pass", "y = 'txt'"]


def random_post(rng: random.Random, max_segments=8):
    """A random composite post. Returns (html, visible_text, n_code)."""
    html_parts = []
    visible = []
    n_code = 0
    for _ in range(rng.randint(1, max_segments)):
        kind = rng.choice(["p", "code", "ul", "blockquote", "h2", "bare", "p_inline"])
        words = " ".join(rng.choice(_WORDS) for _ in range(rng.randint(1, 6)))
        if kind == "p":
            html_parts.append(f"<p>{words}</p>")
            visible.append(words)
        elif kind == "p_inline":
            w2 = rng.choice(_WORDS)
            html_parts.append(f"<p>{words} <code>{w2}</code> tail</p>")
            visible.append(f"{words} {w2} tail")
        elif kind == "code":
            lines = [rng.choice(_CODE_LINES) for _ in range(rng.randint(1, 3))]
            body = "\n".join(lines)
            html_parts.append("<pre><code>" + body.replace("'", "&#39;") + "\n</code></pre>")
            visible.append(body)
            n_code += 1
        elif kind == "ul":
            items = [rng.choice(_WORDS) for _ in range(rng.randint(1, 3))]
            html_parts.append("<ul>" + "".join(f"<li>{w}</li>" for w in items) + "</ul>")
            visible.extend(items)
        elif kind == "blockquote":
            html_parts.append(f"<blockquote><p>{words}</p></blockquote>")
            visible.append(words)
        elif kind == "h2":
            html_parts.append(f"<h2>{words}</h2>")
            visible.append(words)
        else:
            html_parts.append(words + " ")
            visible.append(words)
    return "".join(html_parts), " ".join(" ".join(visible).split()), n_code


# --------------------------------------------------------------------------
# Synthetic separable dataset for capacity checks
# --------------------------------------------------------------------------

_FILLER = ["the", "a", "of", "code", "value", "number", "data", "way"]


def make_cue_dataset(n=50, seed=0):
    """Instances whose label shows in both views: label-1 contexts carry a
    "try" cue and a print-call snippet, label-0 contexts carry "output"
    and a console transcript. Returns (instances, word_vocab, code_vocab)."""
    rng = random.Random(seed)
    instances = []
    for i in range(n):
        label = i % 2
        filler = rng.choice(_FILLER)
        if label == 1:
            pre = ["you", "can", "try", "this", filler]
            post = ["works", "fine"]
            code = ["print", "(", "STRING", ")", rng.choice(["VAR", "NUMBER"])]
        else:
            pre = ["the", "output", "is", filler]
            post = ["as", "shown"]
            code = [">>>", "VAR", rng.choice(["NUMBER", "STRING"])]
        instances.append(
            CodeContextInstance(
                question_tokens=["how", "to", "do", "it"],
                pre_tokens=pre,
                code_tokens=code,
                post_tokens=post,
                position=1,
                label=label,
            )
        )
    word_streams = [inst.question_tokens + inst.pre_tokens + inst.post_tokens for inst in instances]
    code_streams = [inst.code_tokens for inst in instances]
    return instances, build_vocab(word_streams), build_vocab(code_streams)


# --------------------------------------------------------------------------
# Synthetic pipeline workspace (dump + label CSVs + config)
# --------------------------------------------------------------------------

SOLUTION_HTML = (
    "<p>You can try this approach</p>"
    "<pre><code>print(alpha)\nbeta = compute(1)</code></pre>"
    "<p>The output is</p>"
    "<pre><code>&gt;&gt;&gt; run(2)\n42</code></pre>"
    "<p>works fine</p>"
)
SINGLE_HTML = "<p>Do it like so</p><pre><code>def frob(x):\n    return x + 1</code></pre>"


def dump_record(qid, title, tags, answer_html, question_html="<p>context</p>"):
    return {
        "question_id": qid,
        "title": title,
        "tags": tags,
        "question_body_html": question_html,
        "accepted_answer_html": answer_html,
    }


def build_workspace(root):
    """A small self-consistent pipeline workspace: a dump of how-to and
    non-how-to questions (multi-code posts have a cue-separable solution at
    position 1 and a demo at position 2), annotation CSVs, a question-type
    CSV, and a tiny-model config. Returns a dict of paths."""
    dump = root / "dump.jsonl"
    lines = []
    train_rows, valid_rows = [], []
    for i in range(14):
        qid = 100 + i
        lines.append(dump_record(qid, f"How to frob the {i} widget", ["python"], SOLUTION_HTML))
        target = train_rows if i < 10 else valid_rows
        target.append((qid, 1, 1))
        target.append((qid, 2, 0))
    for i in range(4):
        lines.append(dump_record(200 + i, f"How to unfrob {i} things", ["python-3.x"], SINGLE_HTML))
    for i in range(8):
        lines.append(dump_record(300 + i, f"Why does widget {i} explode", ["python"], SINGLE_HTML))
    lines.append(dump_record(400, "How to join tables", ["sql"], SINGLE_HTML))
    lines.append(dump_record(401, "How to think about it", ["python"], "<p>just think</p>"))

    with open(dump, "w", encoding="utf-8") as f:
        for rec in lines:
            f.write(json.dumps(rec) + "\n")
        f.write("{not valid json\n")
        f.write(json.dumps({"question_id": 999, "title": "missing fields"}) + "\n")

    def write_labels(path, rows):
        with open(path, "w", encoding="utf-8") as f:
            f.write("question_id,code_position,label\n")
            for qid, pos, label in rows:
                f.write(f"{qid},{pos},{label}\n")

    train_csv, valid_csv = root / "train.csv", root / "valid.csv"
    write_labels(train_csv, train_rows)
    write_labels(valid_csv, valid_rows)

    qlabels = root / "question_labels.csv"
    with open(qlabels, "w", encoding="utf-8") as f:
        f.write("question_id,label\n")
        for i in range(14):
            f.write(f"{100 + i},howto\n")
        for i in range(4):
            f.write(f"{200 + i},howto\n")
        for i in range(8):
            f.write(f"{300 + i},other\n")

    config = root / "config.json"
    config.write_text(
        json.dumps(
            {
                "language": "python",
                "model": {"d_embed": 4, "d_token_gru": 3, "d_block": 3, "seed": 0},
                "train": {
                    "lr": 0.05, "batch_size": 8, "max_epochs": 15,
                    "patience": 15, "seed": 0,
                },
            }
        )
    )
    return {
        "dump": dump, "train": train_csv, "valid": valid_csv,
        "qlabels": qlabels, "config": config,
    }
