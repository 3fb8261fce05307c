"""Layer primitives with explicit backward passes.

Tensors are float64 numpy arrays in channels-last layout:

* 1D stage: (N, L, C)       N = batch * sensor rows
* 2D stage: (B, H, W, C)    H = sensor rows, W = time

Every convolution uses "same" zero padding (left pad ``(k - 1) // 2``).
"""

from __future__ import annotations

import numpy as np


def conv1d_forward(x, w, b):
    """x (N, L, Cin), w (k, Cin, F), b (F,) -> y (N, L, F), cache."""
    n, length, cin = x.shape
    k = w.shape[0]
    pad = (k - 1) // 2
    cols = np.empty((n, length, k, cin))
    for i in range(k):
        # column block i holds x[t + i - pad], zero outside the signal
        lo, hi = max(0, pad - i), min(length, length + pad - i)
        cols[:, :lo, i, :] = 0.0
        cols[:, hi:, i, :] = 0.0
        cols[:, lo:hi, i, :] = x[:, lo + i - pad:hi + i - pad]
    cols = cols.reshape(n * length, k * cin)
    y = cols @ w.reshape(k * cin, -1)
    y += b
    return y.reshape(n, length, -1), (cols, x.shape, w)


def conv1d_backward(dy, cache, need_dx=True):
    cols, (n, length, cin), w = cache
    k, _, f = w.shape
    dyf = dy.reshape(n * length, f)
    dw = (cols.T @ dyf).reshape(w.shape)
    db = dyf.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = (dyf @ w.reshape(k * cin, f).T).reshape(n, length, k, cin)
    pad = (k - 1) // 2
    dx = np.zeros((n, length, cin))
    for i in range(k):
        lo, hi = max(0, pad - i), min(length, length + pad - i)
        dx[:, lo + i - pad:hi + i - pad] += dcols[:, lo:hi, i, :]
    return dx, dw, db


def conv2d_forward(x, w, b):
    """x (B, H, W, C), w (kh, kw, C, F), b (F,) -> y (B, H, W, F), cache.

    The kh row offsets are gathered into the channel axis; each of the kw
    column offsets is then a row shift of that flattened image, so one
    (kh * C) x (kw * F) matrix product covers the whole kernel.
    """
    bsz, h, wd, c = x.shape
    kh, kw, _, f = w.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    wp = wd + kw - 1
    gathered = np.zeros((bsz, h, wp, kh * c))
    for i in range(kh):
        lo, hi = max(0, ph - i), min(h, h + ph - i)
        gathered[:, lo:hi, pw:pw + wd, i * c:(i + 1) * c] = x[:, lo + i - ph:hi + i - ph]
    flat = gathered.reshape(-1, kh * c)
    n = flat.shape[0]
    wcat = w.transpose(0, 2, 1, 3).reshape(kh * c, kw * f)
    z = flat @ wcat
    y = z[:, :f].copy()
    for j in range(1, kw):
        y[:n - j] += z[j:, j * f:(j + 1) * f]
    y = y.reshape(bsz, h, wp, f)[:, :, :wd]
    y += b
    return y, (flat, x.shape, w)


def conv2d_backward(dy, cache, need_dx=True):
    flat, (bsz, h, wd, c), w = cache
    kh, kw, _, f = w.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    wp = wd + kw - 1
    dyp = np.zeros((bsz, h, wp, f))
    dyp[:, :, :wd] = dy
    dyf = dyp.reshape(-1, f)
    n = dyf.shape[0]
    # shifted[r, j-th block] = dy at output row r - j
    shifted = np.zeros((n, kw * f))
    for j in range(kw):
        shifted[j:, j * f:(j + 1) * f] = dyf[:n - j]
    dw = (flat.T @ shifted).reshape(kh, c, kw, f).transpose(0, 2, 1, 3)
    db = dy.sum(axis=(0, 1, 2))
    if not need_dx:
        return None, np.ascontiguousarray(dw), db
    wcat = w.transpose(0, 2, 1, 3).reshape(kh * c, kw * f)
    dflat = (shifted @ wcat.T).reshape(bsz, h, wp, kh * c)
    dx = np.zeros((bsz, h, wd, c))
    for i in range(kh):
        lo, hi = max(0, ph - i), min(h, h + ph - i)
        dx[:, lo + i - ph:hi + i - ph] += dflat[:, lo:hi, pw:pw + wd, i * c:(i + 1) * c]
    return dx, np.ascontiguousarray(dw), db


def relu_forward(x):
    """In place: ``x`` is overwritten."""
    mask = x > 0
    np.maximum(x, 0.0, out=x)
    return x, mask


def relu_backward(dy, mask):
    return np.multiply(dy, mask, out=dy) if dy.flags.writeable else dy * mask


def gap_forward(x):
    """Global average pooling over the spatial axes of (B, H, W, C)."""
    return x.mean(axis=(1, 2)), x.shape


def gap_backward(dg, shape):
    bsz, h, wd, c = shape
    return np.broadcast_to(dg[:, None, None, :] / (h * wd), shape).copy()


def dense_forward(x, w, b):
    return x @ w + b, x


def dense_backward(dz, x, w):
    return dz @ w.T, x.T @ dz, dz.sum(axis=0)


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def weighted_cross_entropy(probs, labels, weights, floor=1e-12):
    """Mean over the batch of -w[y] * log p[y].

    ``labels`` are class indices, ``weights`` is indexed by class.  Returns
    (loss, number of probabilities clamped at ``floor``).
    """
    probs = np.atleast_2d(probs)
    labels = np.atleast_1d(labels)
    p = probs[np.arange(labels.size), labels]
    clamped = int(np.count_nonzero(p < floor))
    p = np.maximum(p, floor)
    w = np.asarray(weights, dtype=np.float64)[labels]
    return float(np.mean(-w * np.log(p))), clamped


def weighted_cross_entropy_grad(probs, labels, weights):
    """Gradient of the mean weighted loss with respect to the logits."""
    probs = np.atleast_2d(probs)
    labels = np.atleast_1d(labels)
    onehot = np.zeros_like(probs)
    onehot[np.arange(labels.size), labels] = 1.0
    w = np.asarray(weights, dtype=np.float64)[labels]
    return (probs - onehot) * (w / labels.size)[:, None]
