"""Differentiable building blocks on a minimal reverse-mode tape.

Everything is double precision and unbatched: each op takes vectors (or a
matrix parameter), returns a Node carrying its value, and records a closure
that routes the incoming gradient to its parents. ``backward`` replays the
tape once per loss; parameter gradients accumulate across calls until
``zero_grad``, which is what mini-batch averaging relies on.

The GRU follows the convention where the update gate u weighs the previous
state: h = u*h_prev + (1-u)*h_tilde, so u near 1 memorizes the past.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ShapeMismatch(ValueError):
    pass


class NonFiniteInput(ValueError):
    pass


class EmptySequence(ValueError):
    pass


class Node:
    """A value in the computation graph.

    Leaves (parameters, constants) have no backward closure. ``grad`` is
    allocated lazily and accumulates until explicitly cleared.
    """

    __slots__ = ("value", "grad", "parents", "backward_fn")

    def __init__(self, value, parents=(), backward_fn=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn

    def __repr__(self):
        return f"Node(shape={self.value.shape}, leaf={self.backward_fn is None})"


def as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def _acc(node: Node, g):
    if node.grad is None:
        node.grad = np.zeros_like(node.value)
    node.grad += g


def backward(loss: Node, seed: float = 1.0) -> None:
    """Reverse-mode sweep from ``loss``, seeding dL/dloss = seed.

    Gradients accumulate into ``.grad`` of every reachable node, so calling
    this once per instance with seed 1/N yields mean-loss gradients.
    """
    topo: list[Node] = []
    visited: set[int] = set()
    stack: list[tuple[Node, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    _acc(loss, np.full_like(loss.value, seed))
    for node in reversed(topo):
        if node.backward_fn is not None:
            node.backward_fn(node.grad)


def zero_grad(nodes) -> None:
    for node in nodes:
        node.grad = None


def _check_vector(x: Node, name: str) -> None:
    if x.value.ndim != 1:
        raise ShapeMismatch(f"{name} must be a vector, got shape {x.value.shape}")
    if not np.isfinite(x.value).all():
        raise NonFiniteInput(f"{name} contains NaN or Inf")


def concat(*nodes: Node) -> Node:
    nodes = tuple(as_node(n) for n in nodes)
    sizes = [n.value.shape[0] for n in nodes]
    out = Node(np.concatenate([n.value for n in nodes]), nodes)

    def backward_fn(g):
        offset = 0
        for node, size in zip(nodes, sizes):
            _acc(node, g[offset : offset + size])
            offset += size

    out.backward_fn = backward_fn
    return out


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


# --------------------------------------------------------------------------
# GRU
# --------------------------------------------------------------------------


@dataclass
class GruParams:
    """Gate parameters; each matrix is d_h x (d_x + d_h)."""

    w_r: Node
    w_u: Node
    w: Node
    b_r: Node
    b_u: Node
    b: Node

    @property
    def d_h(self) -> int:
        return self.w.value.shape[0]

    @property
    def d_x(self) -> int:
        return self.w.value.shape[1] - self.d_h

    def nodes(self):
        return [
            ("w_r", self.w_r), ("w_u", self.w_u), ("w", self.w),
            ("b_r", self.b_r), ("b_u", self.b_u), ("b", self.b),
        ]


def init_gru(d_x: int, d_h: int, rng: np.random.Generator) -> GruParams:
    shape = (d_h, d_x + d_h)
    return GruParams(
        w_r=Node(glorot_init(shape, rng)),
        w_u=Node(glorot_init(shape, rng)),
        w=Node(glorot_init(shape, rng)),
        b_r=Node(np.zeros(d_h)),
        b_u=Node(np.zeros(d_h)),
        b=Node(np.zeros(d_h)),
    )


def gru_step(x, h_prev, p: GruParams) -> Node:
    """One GRU step, fused into a single tape entry.

        r = sigmoid(W_r [x, h_prev] + b_r)
        u = sigmoid(W_u [x, h_prev] + b_u)
        h_tilde = tanh(W [x, r*h_prev] + b)
        h = u*h_prev + (1-u)*h_tilde
    """
    x, h_prev = as_node(x), as_node(h_prev)
    _check_vector(x, "x")
    _check_vector(h_prev, "h_prev")
    d_x, d_h = p.d_x, p.d_h
    if x.value.shape[0] != d_x or h_prev.value.shape[0] != d_h:
        raise ShapeMismatch(
            f"expected x[{d_x}], h_prev[{d_h}], got x[{x.value.shape[0]}], "
            f"h_prev[{h_prev.value.shape[0]}]"
        )

    xv, hv = x.value, h_prev.value
    xh = np.concatenate([xv, hv])
    r = _sigmoid(p.w_r.value @ xh + p.b_r.value)
    u = _sigmoid(p.w_u.value @ xh + p.b_u.value)
    xrh = np.concatenate([xv, r * hv])
    hc = np.tanh(p.w.value @ xrh + p.b.value)
    h = u * hv + (1.0 - u) * hc

    out = Node(h, (x, h_prev, p.w_r, p.w_u, p.w, p.b_r, p.b_u, p.b))

    def backward_fn(g):
        d_u = g * (hv - hc)
        d_ac = g * (1.0 - u) * (1.0 - hc * hc)
        d_hp = g * u
        _acc(p.w, np.outer(d_ac, xrh))
        _acc(p.b, d_ac)
        d_xrh = p.w.value.T @ d_ac
        d_rh = d_xrh[d_x:]
        d_r = d_rh * hv
        d_hp = d_hp + d_rh * r
        d_ar = d_r * r * (1.0 - r)
        d_au = d_u * u * (1.0 - u)
        _acc(p.w_r, np.outer(d_ar, xh))
        _acc(p.b_r, d_ar)
        _acc(p.w_u, np.outer(d_au, xh))
        _acc(p.b_u, d_au)
        d_xh = p.w_r.value.T @ d_ar + p.w_u.value.T @ d_au
        _acc(x, d_xrh[:d_x] + d_xh[:d_x])
        _acc(h_prev, d_hp + d_xh[d_x:])

    out.backward_fn = backward_fn
    return out


def bigru_encode(xs, fwd: GruParams, bwd: GruParams):
    """Run forward and backward GRUs over a sequence of vectors.

    Both directions start from zero states. Returns (last forward state,
    first-position backward state, per-step (fwd, bwd) state pairs).
    """
    xs = [as_node(x) for x in xs]
    if not xs:
        raise EmptySequence("bigru_encode needs at least one input vector")
    h = Node(np.zeros(fwd.d_h))
    fwd_states = []
    for x in xs:
        h = gru_step(x, h, fwd)
        fwd_states.append(h)
    h = Node(np.zeros(bwd.d_h))
    bwd_states: list[Node] = []
    for x in reversed(xs):
        h = gru_step(x, h, bwd)
        bwd_states.append(h)
    bwd_states.reverse()
    return fwd_states[-1], bwd_states[0], list(zip(fwd_states, bwd_states))


# --------------------------------------------------------------------------
# Dense / softmax
# --------------------------------------------------------------------------

TANH = "tanh"
LINEAR = "linear"


@dataclass
class DenseParams:
    w: Node
    b: Node
    activation: str = TANH  # TANH or LINEAR

    def nodes(self):
        return [("w", self.w), ("b", self.b)]


def init_dense(d_in: int, d_out: int, activation: str, rng: np.random.Generator) -> DenseParams:
    return DenseParams(
        w=Node(glorot_init((d_out, d_in), rng)), b=Node(np.zeros(d_out)), activation=activation
    )


def dense(x, p: DenseParams) -> Node:
    x = as_node(x)
    _check_vector(x, "x")
    if x.value.shape[0] != p.w.value.shape[1]:
        raise ShapeMismatch(
            f"dense expects input[{p.w.value.shape[1]}], got [{x.value.shape[0]}]"
        )
    a = p.w.value @ x.value + p.b.value
    y = np.tanh(a) if p.activation == TANH else a
    out = Node(y, (x, p.w, p.b))

    def backward_fn(g):
        da = g * (1.0 - y * y) if p.activation == TANH else g
        _acc(p.w, np.outer(da, x.value))
        _acc(p.b, da)
        _acc(x, p.w.value.T @ da)

    out.backward_fn = backward_fn
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def softmax_xent(logits, gold: int):
    """Softmax cross-entropy against a 0/1 gold label.

    Returns (probabilities, scalar loss node). The gradient to the logits
    is the exact closed form probs - onehot(gold).
    """
    logits = as_node(logits)
    if logits.value.shape != (2,):
        raise ShapeMismatch(f"expected 2 logits, got shape {logits.value.shape}")
    if gold not in (0, 1):
        raise ValueError(f"gold label must be 0 or 1, got {gold!r}")
    probs = softmax(logits.value)
    # -log(p[gold]) via logsumexp for stability at saturation
    z = logits.value - logits.value.max()
    loss_val = np.log(np.exp(z).sum()) - z[gold]
    out = Node(loss_val, (logits,))

    def backward_fn(g):
        d = probs.copy()
        d[gold] -= 1.0
        _acc(logits, g * d)

    out.backward_fn = backward_fn
    return probs, out


def embedding_row(table: Node, idx: int) -> Node:
    """Pick row ``idx`` of an embedding matrix; gradient scatters back."""
    out = Node(table.value[idx], (table,))

    def backward_fn(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.value)
        table.grad[idx] += g

    out.backward_fn = backward_fn
    return out


# --------------------------------------------------------------------------
# Optimization / initialization
# --------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_update(params: dict, grads: dict, state: AdamState):
    """Bias-corrected Adam step, in place on the parameter arrays.

    Parameters with no gradient entry (or a None one) are treated as zero
    gradient; with fresh moments that leaves them bit-identical.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1**state.t
    correction2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise ShapeMismatch(f"gradient for {name}: {g.shape} vs parameter {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return params, state


def glorot_init(shape, rng) -> np.ndarray:
    """Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out))."""
    if len(shape) != 2:
        raise ValueError(f"glorot_init expects a 2-D shape, got {shape}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    a = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-a, a, shape)


# --------------------------------------------------------------------------
# Checkpoint helpers
# --------------------------------------------------------------------------


def tensor_to_obj(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "data": arr.ravel().tolist()}


def tensor_from_obj(obj: dict) -> np.ndarray:
    return np.array(obj["data"], dtype=np.float64).reshape(obj["shape"])
