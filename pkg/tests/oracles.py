"""Independent reference computations shared by the tests.

Nothing here imports pyrfuse: these are the slow, obvious versions that the
library's vectorised paths are checked against.
"""

import numpy as np


def central_difference(f, arr, idx, step):
    old = arr[idx]
    arr[idx] = old + step
    plus = f()
    arr[idx] = old - step
    minus = f()
    arr[idx] = old
    return (plus - minus) / (2.0 * step)


def relative_error(a, b):
    a, b = float(a), float(b)
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0.0 else abs(a - b) / scale


def naive_conv(x, w, b):
    """Nested-loop cross-correlation with reflect padding on (N, C, H, W) input."""
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2)), mode="reflect")
    out = np.zeros((n, o, h, wd))
    for i in range(n):
        for q in range(o):
            for y in range(h):
                for z in range(wd):
                    out[i, q, y, z] = np.sum(xp[i, :, y : y + kh, z : z + kw] * w[q]) + b[q]
    return out


def lrelu(x, slope=0.2):
    return np.where(x > 0, x, slope * x)


BURT = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def naive_expand(img):
    """Zero-insert then direct 2-D correlation with 4 * outer(h, h) over a reflect pad."""
    k = 4.0 * np.outer(BURT, BURT)
    up = np.zeros(img.shape[:-2] + (2 * img.shape[-2], 2 * img.shape[-1]))
    up[..., ::2, ::2] = img
    pad = [(0, 0)] * (img.ndim - 2) + [(2, 2), (2, 2)]
    padded = np.pad(up, pad, mode="reflect")
    out = np.zeros(up.shape)
    for y in range(up.shape[-2]):
        for x in range(up.shape[-1]):
            out[..., y, x] = np.sum(padded[..., y : y + 5, x : x + 5] * k, axis=(-2, -1))
    return out


def naive_reduce(img):
    k = np.outer(BURT, BURT)
    pad = [(0, 0)] * (img.ndim - 2) + [(2, 2), (2, 2)]
    padded = np.pad(img, pad, mode="reflect")
    h, w = img.shape[-2:]
    out = np.zeros(img.shape[:-2] + (h, w))
    for y in range(h):
        for x in range(w):
            out[..., y, x] = np.sum(padded[..., y : y + 5, x : x + 5] * k, axis=(-2, -1))
    return out[..., ::2, ::2]


def naive_q(x, y, window):
    """Mean UIQI over every stride-1 window, looping window by window."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    values = []
    for i in range(x.shape[0] - window + 1):
        for j in range(x.shape[1] - window + 1):
            a = x[i : i + window, j : j + window].ravel()
            b = y[i : i + window, j : j + window].ravel()
            ma, mb = a.mean(), b.mean()
            va, vb = a.var(), b.var()
            cov = np.mean((a - ma) * (b - mb))
            den = (va + vb) * (ma * ma + mb * mb)
            if den != 0:
                values.append(4 * cov * ma * mb / den)
    return float(np.mean(values))


def naive_highpass(band):
    k = -np.ones((3, 3))
    k[1, 1] = 8.0
    padded = np.pad(np.asarray(band, dtype=np.float64), 1, mode="reflect")
    out = np.zeros(band.shape)
    for y in range(band.shape[0]):
        for x in range(band.shape[1]):
            out[y, x] = np.sum(padded[y : y + 3, x : x + 3] * k)
    return out


def shape_walk_count(bands, blocks, features=48):
    """Parameter count summed layer by layer from the architecture description."""
    head = (bands + 1) * features * 25 + features
    conv = features * features * 25 + features
    block_fuse = 3 * features * features + features
    global_fuse = blocks * features * features + features
    tail = features * bands * 25 + bands
    return head + 2 * conv + block_fuse + global_fuse + tail
