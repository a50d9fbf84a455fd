"""Independent reference implementations used as test oracles.

Everything here is written in the most transparent style possible (nested
loops, direct formulas) and kept free of any imports from the package under
test except for plain data containers. A failure therefore points at the
production code, not at a shared helper.
"""

from __future__ import annotations

import numpy as np


def conv2d_loops(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Quadruple-loop stride-1 same-padding cross-correlation."""
    n, c_in, h, wd = x.shape
    c_out, _, k, _ = w.shape
    p = k // 2
    out = np.zeros((n, c_out, h, wd), dtype=np.float64)
    for ni in range(n):
        for o in range(c_out):
            for yy in range(h):
                for xx in range(wd):
                    acc = 0.0
                    for ci in range(c_in):
                        for dy in range(k):
                            for dx in range(k):
                                sy = yy + dy - p
                                sx = xx + dx - p
                                if 0 <= sy < h and 0 <= sx < wd:
                                    acc += x[ni, ci, sy, sx] * w[o, ci, dy, dx]
                    out[ni, o, yy, xx] = acc + b[o]
    return out


def upsample_1d_scalar(row: np.ndarray, r: int) -> np.ndarray:
    """Half-pixel-centers bilinear scaling of a 1-D signal, one sample at a time."""
    src = len(row)
    out = np.zeros(src * r, dtype=np.float64)
    for i in range(src * r):
        s = (i + 0.5) / r - 0.5
        lo = int(np.floor(s))
        frac = s - lo
        a = row[min(max(lo, 0), src - 1)]
        b = row[min(max(lo + 1, 0), src - 1)]
        out[i] = (1.0 - frac) * a + frac * b
    return out


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of an array."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x.copy(); xp[idx] += h
        xm = x.copy(); xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2.0 * h)
        it.iternext()
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    return float(np.abs(a - b).max() / denom)


def quantile_w2_1d(xs: np.ndarray, p: np.ndarray, ys: np.ndarray, q: np.ndarray) -> float:
    """Squared 2-Wasserstein distance between 1-D discrete measures via the
    monotone (quantile) coupling, evaluated by direct CDF merging."""
    order_x = np.argsort(xs, kind="stable")
    order_y = np.argsort(ys, kind="stable")
    xs, p = xs[order_x], p[order_x]
    ys, q = ys[order_y], q[order_y]
    i = j = 0
    pi, qj = p[0], q[0]
    total = 0.0
    while i < len(xs) and j < len(ys):
        m = min(pi, qj)
        total += m * (xs[i] - ys[j]) ** 2
        pi -= m
        qj -= m
        if pi <= 1e-15:
            i += 1
            pi = p[i] if i < len(xs) else 0.0
        if qj <= 1e-15:
            j += 1
            qj = q[j] if j < len(ys) else 0.0
    return total


def jacobi_eigh(a: np.ndarray, sweeps: int = 100, tol: float = 1e-13):
    """Classical Jacobi rotation eigensolver for small symmetric matrices.
    Returns (eigenvalues desc, eigenvectors as columns)."""
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(sweeps):
        off = np.abs(a - np.diag(np.diag(a))).max() if n > 1 else 0.0
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < tol:
                    continue
                theta = 0.5 * np.arctan2(2.0 * a[p, q], a[q, q] - a[p, p])
                c, s = np.cos(theta), np.sin(theta)
                rot = np.eye(n)
                rot[p, p] = c; rot[q, q] = c
                rot[p, q] = s; rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    vals = np.diag(a).copy()
    order = np.argsort(vals)[::-1]
    return vals[order], v[:, order]


def sequential_forward_ref(x: np.ndarray, w1, b1, w2, b2) -> np.ndarray:
    """Reference two-step forward for a 1x1-then-KxK pair, with the
    intermediate map computed on a zero-extended canvas: outside the image the
    1x1 conv sees zeros, so the intermediate value there is exactly b1. The
    second conv then runs VALID over that canvas. This is the composition the
    sequential merge must reproduce everywhere, borders included."""
    n, c_in, h, wd = x.shape
    c_mid = w1.shape[0]
    c_out, _, k, _ = w2.shape
    p = k // 2
    canvas = np.zeros((n, c_mid, h + 2 * p, wd + 2 * p), dtype=np.float64)
    canvas += b1[None, :, None, None]
    inner = np.einsum("mi,nihw->nmhw", w1[:, :, 0, 0], x)
    canvas[:, :, p : p + h, p : p + wd] += inner
    out = np.zeros((n, c_out, h, wd), dtype=np.float64)
    for yy in range(h):
        for xx in range(wd):
            window = canvas[:, :, yy : yy + k, xx : xx + k]
            out[:, :, yy, xx] = np.einsum("omuv,nmuv->no", w2, window)
    return out + b2[None, :, None, None]


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Pair-counting ARI between two labelings of the same items."""
    labels_a = np.asarray(labels_a)
    labels_b = np.asarray(labels_b)
    n = len(labels_a)
    cats_a = {v: i for i, v in enumerate(sorted(set(labels_a.tolist())))}
    cats_b = {v: i for i, v in enumerate(sorted(set(labels_b.tolist())))}
    table = np.zeros((len(cats_a), len(cats_b)), dtype=np.int64)
    for a, b in zip(labels_a, labels_b):
        table[cats_a[a], cats_b[b]] += 1

    def comb2(x):
        return x * (x - 1) // 2

    sum_ij = sum(comb2(v) for v in table.ravel())
    sum_a = sum(comb2(v) for v in table.sum(axis=1))
    sum_b = sum(comb2(v) for v in table.sum(axis=0))
    total = comb2(n)
    expected = sum_a * sum_b / total if total else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def bicubic_1d_scalar(row: np.ndarray, dst: int) -> np.ndarray:
    """Per-sample bicubic resample of a 1-D signal: Keys a=-0.5, half-pixel
    centers, edge clamp, antialiasing stretch when shrinking, row-normalized.
    Pure python loops, no precomputed matrix."""
    import math

    def keys(t):
        t = abs(t)
        if t <= 1.0:
            return 1.5 * t ** 3 - 2.5 * t ** 2 + 1.0
        if t < 2.0:
            return -0.5 * t ** 3 + 2.5 * t ** 2 - 4.0 * t + 2.0
        return 0.0

    src = len(row)
    scale = dst / src
    support = max(1.0, 1.0 / scale)
    out = np.zeros(dst)
    for i in range(dst):
        center = (i + 0.5) / scale - 0.5
        lo = math.floor(center - 2.0 * support) + 1
        hi = math.floor(center + 2.0 * support)
        acc = 0.0
        wsum = 0.0
        for j in range(lo, hi + 1):
            wj = keys((j - center) / support)
            acc += wj * row[min(max(j, 0), src - 1)]
            wsum += wj
        out[i] = acc / wsum
    return out


def psnr_scalar(a: np.ndarray, b: np.ndarray) -> float:
    """Pixel-loop PSNR on [0, 1] arrays, 100 dB cap."""
    import math

    fa = np.asarray(a, dtype=np.float64).ravel()
    fb = np.asarray(b, dtype=np.float64).ravel()
    acc = 0.0
    for x, y in zip(fa, fb):
        acc += (x - y) ** 2
    mse = acc / len(fa)
    if mse == 0.0:
        return 100.0
    return min(10.0 * math.log10(1.0 / mse), 100.0)


def ssim_reference(a: np.ndarray, b: np.ndarray, size: int = 11, sigma: float = 1.5,
                   k1: float = 0.01, k2: float = 0.03) -> float:
    """Direct per-window SSIM with explicit loops over interior positions."""
    import math

    half = (size - 1) / 2.0
    g = np.array([[math.exp(-((i - half) ** 2 + (j - half) ** 2) / (2 * sigma ** 2))
                   for j in range(size)] for i in range(size)])
    g /= g.sum()
    c1, c2 = k1 ** 2, k2 ** 2
    h, w = a.shape
    vals = []
    for y in range(h - size + 1):
        for x in range(w - size + 1):
            pa = a[y : y + size, x : x + size]
            pb = b[y : y + size, x : x + size]
            mu_a = (g * pa).sum()
            mu_b = (g * pb).sum()
            va = (g * pa * pa).sum() - mu_a ** 2
            vb = (g * pb * pb).sum() - mu_b ** 2
            cov = (g * pa * pb).sum() - mu_a * mu_b
            vals.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                        / ((mu_a ** 2 + mu_b ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def adam_scalar_reference(grads, lr: float, beta1: float = 0.9,
                          beta2: float = 0.999, eps: float = 1e-8,
                          x0: float = 0.0) -> list:
    """Bias-corrected Adam on one scalar; returns the value after each step."""
    import math

    x, m, v = x0, 0.0, 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        x = x - lr * m_hat / (math.sqrt(v_hat) + eps)
        out.append(x)
    return out
