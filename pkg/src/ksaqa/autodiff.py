"""Dense float64 tensors with reverse-mode differentiation on a tape.

Ops record onto the innermost active :class:`Tape` whenever any input is
tracked; with no tape active they are plain numpy computations, which is the
inference fast path.  Every op output is checked for NaN/Inf.  Gradients
accumulate into ``Tensor.grad`` on :func:`backward`.

The GRU sequence and CRF log-likelihood are fused primitives backed by the
``kernels`` package (numba or numpy lane); their hand-derived backwards are
covered by the finite-difference suite like every other primitive.
"""

from __future__ import annotations

import numpy as np

from .errors import NonFiniteError, ShapeError
from . import kernels as K
from .kernels import crf as crf_k
from .kernels import gru as gru_k

_TAPES: list["Tape"] = []


class Rng:
    """Deterministic counter-based random stream (Philox) behind a 64-bit seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.gen = np.random.Generator(np.random.Philox(key=self.seed))

    def uniform(self, low, high, size=None):
        return self.gen.uniform(low, high, size)

    def random(self, size=None):
        return self.gen.random(size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size=size)

    def permutation(self, n):
        return self.gen.permutation(n)

    def choice(self, n, size, replace=False):
        return self.gen.choice(n, size=size, replace=replace)


class Tape:
    """Ordered record of op nodes; creation order is topological order."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.pop()
        return False

    def record(self, t: "Tensor"):
        t.node_id = len(self.nodes)
        t.tape = self
        self.nodes.append(t)


def _active_tape():
    return _TAPES[-1] if _TAPES else None


class Tensor:
    """A dense float64 array, optionally tracked for differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "parents", "bwd", "op", "node_id", "tape")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor initialized with non-finite values")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.parents = ()
        self.bwd = None
        self.op = ""
        self.node_id = None
        self.tape = None

    @property
    def shape(self):
        return self.data.shape

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad = self.grad + g

    def zero_grad(self):
        self.grad = None

    def __getitem__(self, key):
        return _getitem(self, key)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op!r})"


class Parameter(Tensor):
    """A named, always-tracked tensor."""

    __slots__ = ("name",)

    def __init__(self, name: str, data):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def _make(data, parents, bwd, op):
    """Wrap an op result; record on the tape when tracking applies."""
    out = Tensor.__new__(Tensor)
    arr = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"op {op!r} produced non-finite values")
    out.data = arr
    out.grad = None
    out.parents = ()
    out.bwd = None
    out.op = op
    out.node_id = None
    out.tape = None
    tape = _active_tape()
    tracked = tape is not None and any(p.requires_grad for p in parents)
    out.requires_grad = tracked
    if tracked:
        out.parents = tuple(parents)
        out.bwd = bwd
        tape.record(out)
    return out


def backward(loss: Tensor):
    """Propagate d(loss)/d(node) through the tape; fills ``.grad`` fields."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if loss.tape is None:
        raise ShapeError("backward called on an untracked tensor (no tape active?)")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(loss.tape.nodes[: loss.node_id + 1]):
        if node.grad is None or node.bwd is None:
            continue
        node.bwd(node.grad)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.data.shape} and {b.data.shape}") from None

    def bwd(g):
        a.accumulate(_unbroadcast(g, a.data.shape))
        b.accumulate(_unbroadcast(g, b.data.shape))

    return _make(data, (a, b), bwd, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.data.shape} and {b.data.shape}") from None

    def bwd(g):
        a.accumulate(_unbroadcast(g * b.data, a.data.shape))
        b.accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), bwd, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    def bwd(g):
        a.accumulate(g * c)

    return _make(a.data * c, (a,), bwd, "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if ad.ndim == 0 or bd.ndim == 0 or ad.shape[-1] != bd.shape[0]:
        raise ShapeError(f"matmul: shapes {ad.shape} and {bd.shape}")
    data = ad @ bd

    def bwd(g):
        if ad.ndim == 2 and bd.ndim == 2:
            a.accumulate(g @ bd.T)
            b.accumulate(ad.T @ g)
        elif ad.ndim == 2 and bd.ndim == 1:
            a.accumulate(np.outer(g, bd))
            b.accumulate(ad.T @ g)
        elif ad.ndim == 1 and bd.ndim == 2:
            a.accumulate(bd @ g)
            b.accumulate(np.outer(ad, g))
        else:
            a.accumulate(g * bd)
            b.accumulate(g * ad)

    return _make(data, (a, b), bwd, "matmul")


def concat(tensors, axis: int = 0) -> Tensor:
    datas = [t.data for t in tensors]
    data = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            t.accumulate(g[tuple(sl)])

    return _make(data, tuple(tensors), bwd, "concat")


def _getitem(a: Tensor, key) -> Tensor:
    data = a.data[key]

    def bwd(g):
        full = np.zeros_like(a.data)
        # add.at accumulates across duplicate indices in fancy-index keys
        np.add.at(full, key, g)
        a.accumulate(full)

    return _make(data, (a,), bwd, "slice")


def sigmoid(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        data = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(g):
        a.accumulate(g * data * (1.0 - data))

    return _make(data, (a,), bwd, "sigmoid")


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def bwd(g):
        a.accumulate(g * (1.0 - data * data))

    return _make(data, (a,), bwd, "tanh")


def softmax(a: Tensor) -> Tensor:
    """Stable softmax over the last axis; outputs are strictly positive."""
    shifted = a.data - np.max(a.data, axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / np.sum(e, axis=-1, keepdims=True)

    def bwd(g):
        dot = np.sum(g * data, axis=-1, keepdims=True)
        a.accumulate((g - dot) * data)

    return _make(data, (a,), bwd, "softmax")


def embedding_lookup(table: Tensor, indices) -> Tensor:
    """Rows of a 2-D table selected by an integer index list."""
    idx = np.asarray(indices, dtype=np.int64)
    data = table.data[idx]

    def bwd(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        table.accumulate(full)

    return _make(data, (table,), bwd, "embedding_lookup")


def dropout(a: Tensor, rate: float, train: bool, rng: Rng | None) -> Tensor:
    """Inverted dropout: identity when not training or rate == 0."""
    if not train or rate == 0.0:
        return a
    if not 0.0 <= rate < 1.0:
        raise ShapeError(f"dropout rate must be in [0, 1), got {rate}")
    mask = (rng.random(a.data.shape) >= rate) / (1.0 - rate)

    def bwd(g):
        a.accumulate(g * mask)

    return _make(a.data * mask, (a,), bwd, "dropout")


def sum_all(a: Tensor) -> Tensor:
    def bwd(g):
        a.accumulate(np.full_like(a.data, float(g)))

    return _make(a.data.sum(), (a,), bwd, "sum")


def tile_rows(a: Tensor, m: int) -> Tensor:
    """Repeat a 1-D tensor as m identical rows."""
    data = np.broadcast_to(a.data, (m,) + a.data.shape).copy()

    def bwd(g):
        a.accumulate(g.sum(axis=0))

    return _make(data, (a,), bwd, "tile_rows")


def flip0(a: Tensor) -> Tensor:
    """Reverse along axis 0 (used for the backward GRU direction)."""
    def bwd(g):
        a.accumulate(g[::-1])

    return _make(a.data[::-1].copy(), (a,), bwd, "flip0")


def binary_cross_entropy(prob: Tensor, label) -> Tensor:
    """Elementwise BCE. When ``prob`` came from :func:`sigmoid`, the loss is
    computed from the underlying logits (softplus form) so saturated
    probabilities never hit log(0); gradient then flows to the logits node
    directly, which is the same value the chain rule gives through sigmoid.
    """
    y = np.asarray(label, dtype=np.float64)
    if prob.op == "sigmoid" and prob.parents:
        logits = prob.parents[0]
        x = logits.data
        data = np.logaddexp(0.0, x) - x * y

        def bwd(g):
            logits.accumulate(g * (1.0 / (1.0 + np.exp(-x)) - y))

        return _make(data, (logits,), bwd, "bce")
    p = np.clip(prob.data, 1e-12, 1.0 - 1e-12)
    data = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))

    def bwd(g):
        prob.accumulate(g * (p - y) / (p * (1.0 - p)))

    return _make(data, (prob,), bwd, "bce")


def bce_with_logits_sum(logits: Tensor, labels) -> Tensor:
    """Summed binary cross entropy straight from logits (log-space, stable)."""
    y = np.asarray(labels, dtype=np.float64)
    x = logits.data
    data = np.sum(np.logaddexp(0.0, x) - x * y)

    def bwd(g):
        logits.accumulate(float(g) * (1.0 / (1.0 + np.exp(-x)) - y))

    return _make(data, (logits,), bwd, "bce_logits")


def gru_sequence(x: Tensor, h0: Tensor, wx: Tensor, wh: Tensor, b: Tensor) -> Tensor:
    """All hidden states [m, H] of a GRU run over ``x`` [m, d_in] (fused)."""
    if x.data.ndim != 2 or x.data.shape[1] != wx.data.shape[0]:
        raise ShapeError(f"gru_sequence: input {x.data.shape} vs Wx {wx.data.shape}")
    hs, zs, rs, ns, hwn = gru_k.gru_forward(x.data, h0.data, wx.data, wh.data, b.data)

    def bwd(g):
        dx, dh0, dwx, dwh, db = gru_k.gru_backward(
            np.ascontiguousarray(g), x.data, wx.data, wh.data, hs, zs, rs, ns, hwn
        )
        x.accumulate(dx)
        h0.accumulate(dh0)
        wx.accumulate(dwx)
        wh.accumulate(dwh)
        b.accumulate(db)

    return _make(hs[1:], (x, h0, wx, wh, b), bwd, "gru_sequence")


def crf_log_likelihood(emissions: Tensor, transitions: Tensor, start: Tensor,
                       stop: Tensor, tags) -> Tensor:
    """score(tags) - logZ for a linear-chain CRF (fused forward-backward)."""
    y = np.asarray(tags, dtype=np.int64)
    m, k = emissions.data.shape
    if y.shape[0] != m:
        raise ShapeError(f"crf_log_likelihood: {m} emission rows vs {y.shape[0]} tags")
    logz, alpha = crf_k.crf_logz(emissions.data, transitions.data, start.data, stop.data)
    gold = start.data[y[0]] + emissions.data[np.arange(m), y].sum()
    if m > 1:
        gold += transitions.data[y[:-1], y[1:]].sum()
    gold += stop.data[y[-1]]

    def bwd(g):
        unary, dtrans, dstart, dstop = crf_k.crf_marginals(
            emissions.data, transitions.data, start.data, stop.data, alpha, logz
        )
        ge = np.zeros((m, k))
        ge[np.arange(m), y] = 1.0
        gt = np.zeros((k, k))
        if m > 1:
            np.add.at(gt, (y[:-1], y[1:]), 1.0)
        gs = np.zeros(k)
        gs[y[0]] = 1.0
        gp = np.zeros(k)
        gp[y[-1]] = 1.0
        s = float(g)
        emissions.accumulate(s * (ge - unary))
        transitions.accumulate(s * (gt - dtrans))
        start.accumulate(s * (gs - dstart))
        stop.accumulate(s * (gp - dstop))

    return _make(gold - logz, (emissions, transitions, start, stop), bwd, "crf_ll")


# ---------------------------------------------------------------------------
# initialization and gradient checking
# ---------------------------------------------------------------------------


def init_embedding(rng: Rng, shape) -> np.ndarray:
    """Uniform(-0.08, 0.08), the scheme for lookup tables."""
    return rng.uniform(-0.08, 0.08, shape)


def init_weight(rng: Rng, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    """Scaled-uniform +-sqrt(6 / (fan_in + fan_out)) for weight matrices."""
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, shape if shape is not None else (fan_in, fan_out))


def grad_check(function, inputs, h: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``function`` maps the list of tensors to a scalar Tensor and must rebuild
    its graph on every call.  Relative error per coordinate is
    |g_a - g_n| / max(1e-8, |g_a| + |g_n|).
    """
    with Tape():
        out = function(inputs)
        if out.data.size != 1:
            raise ShapeError("grad_check needs a scalar-valued function")
        for t in inputs:
            t.zero_grad()
        backward(out)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]
    worst = 0.0
    for t, ga in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        gaf = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(function(inputs).data)
            flat[i] = orig - h
            dn = float(function(inputs).data)
            flat[i] = orig
            gn = (up - dn) / (2.0 * h)
            err = abs(gaf[i] - gn) / max(1e-8, abs(gaf[i]) + abs(gn))
            worst = max(worst, err)
    return worst
