"""Differentiable operations over :class:`~lyricgen.nn.tensor.Tensor`.

Every op returns a new graph node whose ``backward_fn`` accumulates exact
gradients into its parents. Shapes are validated eagerly; a mismatch is a
bug in the caller and raises immediately.
"""

from __future__ import annotations

import numpy as np

from .tensor import Parameter, Tensor


def _check(cond, msg):
    if not cond:
        raise ValueError(msg)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check(a.ndim == 2 and b.ndim == 2, "matmul expects 2-D operands")
    _check(a.shape[1] == b.shape[0], f"matmul shapes {a.shape} x {b.shape}")
    out = Tensor(a.value @ b.value, parents=(a, b))

    def backward(g):
        a.accumulate_grad(g @ b.value.T)
        b.accumulate_grad(a.value.T @ g)

    out.backward_fn = backward
    return out


def matmul_bt(a: Tensor, b: Tensor) -> Tensor:
    """a @ b.T, for weights stored with the output dimension first."""
    _check(a.ndim == 2 and b.ndim == 2, "matmul_bt expects 2-D operands")
    _check(a.shape[1] == b.shape[1], f"matmul_bt shapes {a.shape} x {b.shape}^T")
    out = Tensor(a.value @ b.value.T, parents=(a, b))

    def backward(g):
        a.accumulate_grad(g @ b.value)
        b.accumulate_grad(g.T @ a.value)

    out.backward_fn = backward
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    _check(a.shape == b.shape, f"add shapes {a.shape} vs {b.shape}")
    out = Tensor(a.value + b.value, parents=(a, b))

    def backward(g):
        a.accumulate_grad(g)
        b.accumulate_grad(g)

    out.backward_fn = backward
    return out


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Broadcast a length-K bias over the rows of a B x K matrix."""
    _check(x.ndim == 2 and b.ndim == 1, "add_bias expects matrix + vector")
    _check(x.shape[1] == b.shape[0], f"add_bias shapes {x.shape} + {b.shape}")
    out = Tensor(x.value + b.value, parents=(x, b))

    def backward(g):
        x.accumulate_grad(g)
        b.accumulate_grad(g.sum(axis=0))

    out.backward_fn = backward
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check(a.shape == b.shape, f"mul shapes {a.shape} vs {b.shape}")
    out = Tensor(a.value * b.value, parents=(a, b))

    def backward(g):
        a.accumulate_grad(g * b.value)
        b.accumulate_grad(g * a.value)

    out.backward_fn = backward
    return out


def scale(x: Tensor, c: float) -> Tensor:
    out = Tensor(x.value * c, parents=(x,))
    out.backward_fn = lambda g: x.accumulate_grad(g * c)
    return out


def sigmoid(x: Tensor) -> Tensor:
    # Split by sign to avoid overflow in exp.
    v = x.value
    s = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))),
                 np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
    out = Tensor(s, parents=(x,))
    out.backward_fn = lambda g: x.accumulate_grad(g * s * (1.0 - s))
    return out


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.value)
    out = Tensor(t, parents=(x,))
    out.backward_fn = lambda g: x.accumulate_grad(g * (1.0 - t * t))
    return out


def softplus(x: Tensor) -> Tensor:
    """log(1 + exp(x)), overflow-safe."""
    v = x.value
    sp = np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v)))
    out = Tensor(sp, parents=(x,))
    sig = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))),
                   np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
    out.backward_fn = lambda g: x.accumulate_grad(g * sig)
    return out


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    _check(x.ndim == 2, "slice_cols expects a matrix")
    out = Tensor(x.value[:, start:stop], parents=(x,))

    def backward(g):
        full = np.zeros_like(x.value)
        full[:, start:stop] = g
        x.accumulate_grad(full)

    out.backward_fn = backward
    return out


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    _check(a.ndim == 2 and b.ndim == 2 and a.shape[0] == b.shape[0],
           f"concat_cols shapes {a.shape} vs {b.shape}")
    na = a.shape[1]
    out = Tensor(np.concatenate([a.value, b.value], axis=1), parents=(a, b))

    def backward(g):
        a.accumulate_grad(g[:, :na])
        b.accumulate_grad(g[:, na:])

    out.backward_fn = backward
    return out


def embed(table: Tensor, idx) -> Tensor:
    """Gather rows of an embedding table; grad scatter-adds back."""
    idx = np.asarray(idx, dtype=np.int64)
    out = Tensor(table.value[idx], parents=(table,))

    def backward(g):
        full = np.zeros_like(table.value)
        np.add.at(full, idx, g)
        table.accumulate_grad(full)

    out.backward_fn = backward
    return out


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b for w stored input-dim first (D x K)."""
    return add_bias(matmul(x, w), b)


def log_softmax(x: Tensor) -> Tensor:
    """Row-wise log softmax, stabilized by max subtraction."""
    _check(x.ndim == 2 and x.shape[1] >= 1, "log_softmax expects B x V")
    v = x.value
    shifted = v - v.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - lse
    out = Tensor(logp, parents=(x,))

    def backward(g):
        x.accumulate_grad(g - np.exp(logp) * g.sum(axis=1, keepdims=True))

    out.backward_fn = backward
    return out


def pick(x: Tensor, idx) -> Tensor:
    """y[i] = x[i, idx[i]] — gathers one column per row."""
    idx = np.asarray(idx, dtype=np.int64)
    _check(x.ndim == 2 and idx.shape == (x.shape[0],), "pick shape mismatch")
    rows = np.arange(x.shape[0])
    out = Tensor(x.value[rows, idx], parents=(x,))

    def backward(g):
        full = np.zeros_like(x.value)
        full[rows, idx] = g
        x.accumulate_grad(full)

    out.backward_fn = backward
    return out


def sum_all(x: Tensor) -> Tensor:
    out = Tensor(x.value.sum(), parents=(x,))
    out.backward_fn = lambda g: x.accumulate_grad(np.full_like(x.value, float(g)))
    return out


def lstm_step(params, x: Tensor, h: Tensor, c: Tensor):
    """One LSTM cell step.

    Gate order in the stacked 4H weights is input, forget, cell, output.
    Returns (h', c').
    """
    hidden = params.hidden_dim
    _check(x.shape[1] == params.input_dim,
           f"lstm_step input dim {x.shape[1]} != {params.input_dim}")
    _check(h.shape[1] == hidden and c.shape[1] == hidden,
           "lstm_step state dim mismatch")
    gates = add_bias(add(matmul_bt(x, params.w_x), matmul_bt(h, params.w_h)),
                     params.bias)
    i = sigmoid(slice_cols(gates, 0, hidden))
    f = sigmoid(slice_cols(gates, hidden, 2 * hidden))
    g = tanh(slice_cols(gates, 2 * hidden, 3 * hidden))
    o = sigmoid(slice_cols(gates, 3 * hidden, 4 * hidden))
    c_next = add(mul(f, c), mul(i, g))
    h_next = mul(o, tanh(c_next))
    return h_next, c_next


class LstmCellParams:
    """Weights for one LSTM cell: w_x (4H x D), w_h (4H x H), bias (4H)."""

    def __init__(self, input_dim: int, hidden_dim: int, rng=None, scale=0.1):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        if rng is None:
            self.w_x = Parameter(np.zeros((4 * hidden_dim, input_dim)))
            self.w_h = Parameter(np.zeros((4 * hidden_dim, hidden_dim)))
        else:
            self.w_x = Parameter(rng.uniform(-scale, scale, (4 * hidden_dim, input_dim)))
            self.w_h = Parameter(rng.uniform(-scale, scale, (4 * hidden_dim, hidden_dim)))
        self.bias = Parameter(np.zeros(4 * hidden_dim))

    def parameters(self):
        return [self.w_x, self.w_h, self.bias]


def conv1d_maxpool(x: Tensor, filters) -> Tensor:
    """Valid 1-D convolution over time followed by max-over-time pooling.

    ``x`` is B x T x D; each filter is a Parameter of shape w x D x F.
    Outputs are concatenated over filters to B x sum(F). Ties in the max
    resolve to the earliest time step.
    """
    _check(x.ndim == 3, "conv1d_maxpool expects B x T x D input")
    batch, seq, dim = x.shape
    pooled = []
    grads = []
    for k in filters:
        w, d, _f = k.shape
        _check(d == dim, f"filter depth {d} != input depth {dim}")
        if w > seq:
            raise ValueError(f"filter width {w} exceeds sequence length {seq}")
        # windows: B x (T-w+1) x w x D
        windows = np.lib.stride_tricks.sliding_window_view(x.value, w, axis=1)
        windows = windows.transpose(0, 1, 3, 2)
        conv = np.einsum("btjd,jdf->btf", windows, k.value)
        arg = conv.argmax(axis=1)  # B x F
        pooled.append(np.take_along_axis(conv, arg[:, None, :], axis=1)[:, 0, :])
        grads.append((k, windows, arg, conv.shape[1]))

    out = Tensor(np.concatenate(pooled, axis=1), parents=(x, *filters))

    def backward(g):
        dx = np.zeros_like(x.value)
        col = 0
        for k, windows, arg, t_out in grads:
            w, _d, f = k.shape
            gk = g[:, col:col + f]
            col += f
            dconv = np.zeros((batch, t_out, f))
            np.put_along_axis(dconv, arg[:, None, :], gk[:, None, :], axis=1)
            k.accumulate_grad(np.einsum("btjd,btf->jdf", windows, dconv))
            dwin = np.einsum("btf,jdf->btjd", dconv, k.value)
            for j in range(w):
                dx[:, j:j + t_out, :] += dwin[:, :, j, :]
        x.accumulate_grad(dx)

    out.backward_fn = backward
    return out


def dropout(x: Tensor, rate: float, rng, train: bool) -> Tensor:
    """Inverted dropout; identity when not training or rate is 0."""
    if not train or rate <= 0.0:
        return x
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep).astype(np.float64) / keep
    out = Tensor(x.value * mask, parents=(x,))
    out.backward_fn = lambda g: x.accumulate_grad(g * mask)
    return out


def masked_mean_nll(logps, targets, mask) -> Tensor:
    """Cross-entropy averaged over unmasked positions.

    ``logps`` is a list of T tensors of shape B x V (already log-softmaxed),
    ``targets`` and ``mask`` are int/bool arrays of shape B x T.
    """
    total = None
    for t, lp in enumerate(logps):
        m = mask[:, t].astype(np.float64)
        step = mul(pick(lp, targets[:, t]), Tensor(m))
        total = step if total is None else add(total, step)
    n = float(mask.sum())
    _check(n > 0, "masked_mean_nll: empty mask")
    return scale(sum_all(total), -1.0 / n)


def weighted_mean_nll(logps, targets, weights, mask, batch_size) -> Tensor:
    """Policy-gradient surrogate: -(1/B) sum_t w_t * log p(target_t)."""
    total = None
    for t, lp in enumerate(logps):
        w = weights[:, t] * mask[:, t].astype(np.float64)
        step = mul(pick(lp, targets[:, t]), Tensor(w))
        total = step if total is None else add(total, step)
    return scale(sum_all(total), -1.0 / float(batch_size))


def bce_with_logits(logits: Tensor, labels) -> Tensor:
    """Mean binary cross-entropy from pre-sigmoid logits (stable)."""
    y = np.asarray(labels, dtype=np.float64)
    _check(logits.shape == y.shape, "bce shape mismatch")
    # softplus(z) - y*z  ==  -[y log s(z) + (1-y) log(1-s(z))]
    sp = softplus(logits)
    yz = mul(logits, Tensor(y))
    n = float(y.size)
    return scale(sum_all(add(sp, scale(yz, -1.0))), 1.0 / n)
