"""Differentiable operations.

Every op takes :class:`Tensor` inputs (integer indices and labels are plain
arrays), computes its result with numpy and, when a tape is active,
records a closure producing input gradients from output gradients.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, record


def _mismatch(op: str, a, b) -> ShapeError:
    return ShapeError(f"{op}: incompatible shapes {tuple(a)} and {tuple(b)}")


def _sum_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    return grad


# -- elementwise / linear algebra -------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise _mismatch("add", a.shape, b.shape)
    out = Tensor(a.data + b.data)
    record("add", (a, b), (out,), lambda g: (g[0], g[0]))
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise _mismatch("sub", a.shape, b.shape)
    out = Tensor(a.data - b.data)
    record("sub", (a, b), (out,), lambda g: (g[0], -g[0]))
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise _mismatch("mul", a.shape, b.shape)
    out = Tensor(a.data * b.data)
    record("mul", (a, b), (out,), lambda g: (g[0] * b.data, g[0] * a.data))
    return out


def scale(a: Tensor, factor: float) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data * factor)
    record("scale", (a,), (out,), lambda g: (g[0] * factor,))
    return out


def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    out = Tensor(a.data.sum())
    record("sum", (a,), (out,), lambda g: (np.broadcast_to(g[0], a.shape).copy(),))
    return out


def mean(a: Tensor) -> Tensor:
    a = as_tensor(a)
    n = a.data.size
    out = Tensor(a.data.mean())
    record("mean", (a,), (out,), lambda g: (np.full(a.shape, float(g[0]) / n),))
    return out


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape))
    record("reshape", (a,), (out,), lambda g: (g[0].reshape(a.shape),))
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a[..., k] @ b[k, n]``; leading axes of ``a`` act as a batch."""
    a, b = as_tensor(a), as_tensor(b)
    if b.data.ndim != 2 or a.data.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise _mismatch("matmul", a.shape, b.shape)
    out = Tensor(a.data @ b.data)

    def backward(g):
        g = g[0]
        ga = g @ b.data.T
        gb = a.data.reshape(-1, b.shape[0]).T @ g.reshape(-1, b.shape[1])
        return ga, gb

    record("matmul", (a, b), (out,), backward)
    return out


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    x, bias = as_tensor(x), as_tensor(bias)
    if bias.data.ndim != 1 or x.shape[-1:] != bias.shape:
        raise _mismatch("add_bias", x.shape, bias.shape)
    out = Tensor(x.data + bias.data)
    record("add_bias", (x, bias), (out,), lambda g: (g[0], g[0].reshape(-1, bias.shape[0]).sum(axis=0)))
    return out


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Fully connected layer ``x @ weight + bias``."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if weight.data.ndim != 2 or x.shape[-1] != weight.shape[0] or bias.shape != (weight.shape[1],):
        raise ShapeError(f"dense: incompatible shapes {x.shape}, {weight.shape}, {bias.shape}")
    out = Tensor(x.data @ weight.data + bias.data)
    n_in, n_out = weight.shape

    def backward(g):
        g = g[0]
        g2 = g.reshape(-1, n_out)
        return g @ weight.data.T, x.data.reshape(-1, n_in).T @ g2, g2.sum(axis=0)

    record("dense", (x, weight, bias), (out,), backward)
    return out


# -- activations --------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0.0))
    record("relu", (x,), (out,), lambda g: (g[0] * mask,))
    return out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid(x.data)
    out = Tensor(s)
    record("sigmoid", (x,), (out,), lambda g: (g[0] * s * (1.0 - s),))
    return out


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.data)
    out = Tensor(t)
    record("tanh", (x,), (out,), lambda g: (g[0] * (1.0 - t * t),))
    return out


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    x = as_tensor(x)
    p = _softmax(x.data)
    out = Tensor(p)

    def backward(g):
        g = g[0]
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    record("softmax", (x,), (out,), backward)
    return out


def dropout(x: Tensor, rate: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """Inverted dropout: scaled binary mask when training, identity otherwise."""
    x = as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout: rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout: training mode needs an rng")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    out = Tensor(x.data * mask)
    record("dropout", (x,), (out,), lambda g: (g[0] * mask,))
    return out


# -- lookup, recurrence, convolution ------------------------------------------


def embedding_lookup(table: Tensor, indices) -> Tensor:
    table = as_tensor(table)
    idx = np.asarray(indices)
    if not np.issubdtype(idx.dtype, np.integer):
        raise ShapeError(f"embedding_lookup: indices must be integers, got {idx.dtype}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError(f"embedding_lookup: index out of range for table {table.shape}")
    out = Tensor(table.data[idx])

    def backward(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, idx.reshape(-1), g[0].reshape(-1, table.shape[1]))
        return (grad,)

    record("embedding_lookup", (table,), (out,), backward)
    return out


def _lstm_check(x, h0, c0, wx, wh, b):
    batch, hidden = h0.shape
    ok = (
        c0.shape == h0.shape
        and wh.shape == (hidden, 4 * hidden)
        and wx.shape == (x.shape[-1], 4 * hidden)
        and b.shape == (4 * hidden,)
        and x.shape[0] == batch
    )
    if not ok:
        raise ShapeError(
            f"lstm: incompatible shapes x={x.shape} h={h0.shape} c={c0.shape} "
            f"wx={wx.shape} wh={wh.shape} b={b.shape}"
        )


def _lstm_forward(x, h0, c0, wx, wh, b):
    """x: [B, T, E]. Gate order in the 4H axis: input, forget, cell, output."""
    batch, steps, _ = x.shape
    hidden = h0.shape[1]
    xw = (x.reshape(batch * steps, x.shape[2]) @ wx + b).reshape(batch, steps, 4 * hidden)
    hs = np.empty((batch, steps, hidden))
    cs = np.empty((batch, steps, hidden))
    gates = np.empty((batch, steps, 4 * hidden))
    h, c = h0, c0
    for t in range(steps):
        z = xw[:, t] + h @ wh
        act = gates[:, t]
        act[:, : 2 * hidden] = _sigmoid(z[:, : 2 * hidden])
        act[:, 2 * hidden : 3 * hidden] = np.tanh(z[:, 2 * hidden : 3 * hidden])
        act[:, 3 * hidden :] = _sigmoid(z[:, 3 * hidden :])
        c = act[:, hidden : 2 * hidden] * c + act[:, :hidden] * act[:, 2 * hidden : 3 * hidden]
        h = act[:, 3 * hidden :] * np.tanh(c)
        hs[:, t] = h
        cs[:, t] = c
    return hs, cs, gates


def _lstm_backward(x, h0, c0, wx, wh, hs, cs, gates, dhs, dh_last, dc_last):
    batch, steps, _ = x.shape
    hidden = h0.shape[1]
    dz_all = np.empty_like(gates)
    dh_next, dc_next = dh_last, dc_last
    for t in range(steps - 1, -1, -1):
        act = gates[:, t]
        i, f = act[:, :hidden], act[:, hidden : 2 * hidden]
        g, o = act[:, 2 * hidden : 3 * hidden], act[:, 3 * hidden :]
        c_prev = cs[:, t - 1] if t > 0 else c0
        tc = np.tanh(cs[:, t])
        dh = dhs[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = dz_all[:, t]
        dz[:, :hidden] = dc * g * i * (1.0 - i)
        dz[:, hidden : 2 * hidden] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * hidden : 3 * hidden] = dc * i * (1.0 - g * g)
        dz[:, 3 * hidden :] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = dz @ wh.T
    h_prev = np.concatenate([h0[:, None, :], hs[:, :-1]], axis=1)
    dz2 = dz_all.reshape(batch * steps, 4 * hidden)
    dwh = h_prev.reshape(batch * steps, hidden).T @ dz2
    dwx = x.reshape(batch * steps, x.shape[2]).T @ dz2
    db = dz2.sum(axis=0)
    dx = (dz2 @ wx.T).reshape(x.shape)
    return dx, dh_next, dc_next, dwx, dwh, db


def lstm(x: Tensor, h0: Tensor, c0: Tensor, wx: Tensor, wh: Tensor, b: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """Run an LSTM over ``x[B, T, E]``; returns (all hidden states, last h, last c)."""
    x, h0, c0, wx, wh, b = map(as_tensor, (x, h0, c0, wx, wh, b))
    if x.data.ndim != 3:
        raise ShapeError(f"lstm: expected input [batch, time, features], got {x.shape}")
    _lstm_check(x.data, h0.data, c0.data, wx.data, wh.data, b.data)
    steps = x.shape[1]
    hs, cs, gates = _lstm_forward(x.data, h0.data, c0.data, wx.data, wh.data, b.data)
    out_hs = Tensor(hs)
    out_h = Tensor(hs[:, -1].copy() if steps else h0.data.copy())
    out_c = Tensor(cs[:, -1].copy() if steps else c0.data.copy())

    def backward(g):
        dhs, dh_last, dc_last = g
        if steps == 0:
            return None, dh_last, dc_last, None, None, None
        dx, dh0, dc0, dwx, dwh, db = _lstm_backward(
            x.data, h0.data, c0.data, wx.data, wh.data, hs, cs, gates, dhs, dh_last, dc_last
        )
        return dx, dh0, dc0, dwx, dwh, db

    record("lstm", (x, h0, c0, wx, wh, b), (out_hs, out_h, out_c), backward)
    return out_hs, out_h, out_c


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, wx: Tensor, wh: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """One LSTM step on ``x[B, E]`` from state (h, c); returns the new (h, c)."""
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"lstm_cell: expected input [batch, features], got {x.shape}")
    _, h_new, c_new = lstm(reshape(x, (x.shape[0], 1, x.shape[1])), h, c, wx, wh, b)
    return h_new, c_new


def conv1d(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Valid, stride-1 convolution.

    ``x`` is [time, channels] or [batch, time, channels]; ``kernel`` is
    [width, channels, filters]. The output has ``time - width + 1`` steps.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    squeeze = x.data.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3 or kernel.data.ndim != 3 or kernel.shape[1] != xd.shape[2]:
        raise _mismatch("conv1d", x.shape, kernel.shape)
    width, channels, filters = kernel.shape
    batch, steps, _ = xd.shape
    if steps < width:
        raise ShapeError(f"conv1d: sequence of length {steps} is shorter than kernel width {width}")
    out_steps = steps - width + 1
    # im2col: [B, T', W*C]
    cols = np.lib.stride_tricks.sliding_window_view(xd, width, axis=1)  # [B, T', C, W]
    cols = cols.transpose(0, 1, 3, 2).reshape(batch, out_steps, width * channels)
    kmat = kernel.data.reshape(width * channels, filters)
    y = cols @ kmat
    inputs = [x, kernel]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (filters,):
            raise _mismatch("conv1d", kernel.shape, bias.shape)
        y = y + bias.data
        inputs.append(bias)
    out = Tensor(y[0] if squeeze else y)

    def backward(g):
        gy = g[0][None] if squeeze else g[0]
        g2 = gy.reshape(-1, filters)
        gk = (cols.reshape(-1, width * channels).T @ g2).reshape(kernel.shape)
        gcols = (g2 @ kmat.T).reshape(batch, out_steps, width, channels)
        gx = np.zeros_like(xd)
        for w in range(width):
            gx[:, w : w + out_steps] += gcols[:, :, w]
        grads = [gx[0] if squeeze else gx, gk]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return grads

    record("conv1d", inputs, (out,), backward)
    return out


def global_max_pool1d(x: Tensor) -> Tensor:
    """Maximum over the time axis of [time, channels] or [batch, time, channels]."""
    x = as_tensor(x)
    if x.data.ndim not in (2, 3):
        raise ShapeError(f"global_max_pool1d: expected 2 or 3 dims, got {x.shape}")
    axis = x.data.ndim - 2
    arg = x.data.argmax(axis=axis)
    out = Tensor(x.data.max(axis=axis))

    def backward(g):
        grad = np.zeros_like(x.data)
        gx = np.expand_dims(g[0], axis)
        np.put_along_axis(grad, np.expand_dims(arg, axis), gx, axis=axis)
        return (grad,)

    record("global_max_pool1d", (x,), (out,), backward)
    return out


# -- losses -------------------------------------------------------------------


def _check_targets(op: str, scores: np.ndarray, targets: np.ndarray) -> None:
    if scores.shape[:-1] != targets.shape:
        raise _mismatch(op, scores.shape, targets.shape)
    if targets.size and (targets.min() < 0 or targets.max() >= scores.shape[-1]):
        raise ShapeError(f"{op}: target index out of range for {scores.shape[-1]} classes")


def categorical_cross_entropy(probs: Tensor, targets) -> Tensor:
    """Mean of ``-log probs[target]`` over all leading positions."""
    probs = as_tensor(probs)
    targets = np.asarray(targets)
    _check_targets("categorical_cross_entropy", probs.data, targets)
    picked = np.take_along_axis(probs.data, targets[..., None], axis=-1)[..., 0]
    n = targets.size
    out = Tensor(-np.log(picked).mean())

    def backward(g):
        grad = np.zeros_like(probs.data)
        np.put_along_axis(grad, targets[..., None], (-float(g[0]) / (n * picked))[..., None], axis=-1)
        return (grad,)

    record("categorical_cross_entropy", (probs,), (out,), backward)
    return out


def softmax_cross_entropy(logits: Tensor, targets, weights: Optional[np.ndarray] = None) -> Tensor:
    """Fused softmax + cross-entropy, ``mean(w * -log softmax(logits)[target])``.

    ``weights`` (same shape as ``targets``, default ones) scale each
    position's term, which turns this into the REINFORCE surrogate when the
    weights are advantages.
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets)
    _check_targets("softmax_cross_entropy", logits.data, targets)
    w = np.ones(targets.shape) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != targets.shape:
        raise _mismatch("softmax_cross_entropy", targets.shape, w.shape)
    logp = _log_softmax(logits.data)
    nll = -np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    n = targets.size
    out = Tensor((w * nll).sum() / n)

    def backward(g):
        grad = np.exp(logp)
        np.put_along_axis(grad, targets[..., None], np.take_along_axis(grad, targets[..., None], axis=-1) - 1.0, axis=-1)
        return (grad * (w * float(g[0]) / n)[..., None],)

    record("softmax_cross_entropy", (logits,), (out,), backward)
    return out


def binary_cross_entropy(probs: Tensor, labels) -> Tensor:
    probs = as_tensor(probs)
    y = np.asarray(labels, dtype=np.float64)
    if probs.shape != y.shape:
        raise _mismatch("binary_cross_entropy", probs.shape, y.shape)
    p = probs.data
    n = y.size
    out = Tensor(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).mean())
    record("binary_cross_entropy", (probs,), (out,), lambda g: (float(g[0]) * (p - y) / (p * (1.0 - p)) / n,))
    return out


def sigmoid_binary_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Fused sigmoid + binary cross-entropy on raw scores (stable for large |z|)."""
    logits = as_tensor(logits)
    y = np.asarray(labels, dtype=np.float64)
    if logits.shape != y.shape:
        raise _mismatch("sigmoid_binary_cross_entropy", logits.shape, y.shape)
    z = logits.data
    n = y.size
    loss = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    out = Tensor(loss.mean())
    record(
        "sigmoid_binary_cross_entropy",
        (logits,),
        (out,),
        lambda g: (float(g[0]) * (_sigmoid(z) - y) / n,),
    )
    return out
