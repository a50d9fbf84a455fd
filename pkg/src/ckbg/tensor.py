"""Dense 4-D tensors with the forward ops the network needs and reverse-mode
gradients for each.

This is deliberately not a general autodiff framework: stride-1 same-padding
convolution on square 1x1/3x3 kernels, bilinear warping/upsampling, channel
concat, pixel shuffle, ReLU, elementwise add, and the scalar reductions the
training loss needs. Values are float32 or float64; everything is validated
finite at construction.

Recording: ops executed inside a ``with Tape() as tape:`` block append nodes in
execution order (which is a topological order of the graph); ``backward``
replays that list once in reverse. Tensors and ConvParams hold read-only numpy
arrays and are safe to share across threads; one tape is single-threaded.

Bilinear upsampling uses the half-pixel-centers convention. For upscale r, the
output pixel with index i samples the input at ``(i + 0.5) / r - 0.5`` along
each axis, with the two neighboring taps clamped to the valid index range and
their weights ``1 - frac`` / ``frac``. r = 1 is therefore the exact identity.

Warping is backward warping: the output at p copies the input at p + flow(p),
bilinearly interpolated; any corner of the interpolation square outside the
image contributes zero (not edge clamp) so the gradient stays simple.
"""

from __future__ import annotations

import itertools
import struct
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor4",
    "ConvParams",
    "FlowField",
    "Tape",
    "Scalar",
    "Gradients",
    "conv2d",
    "relu",
    "bilinear_warp",
    "concat_channels",
    "channel_slice",
    "pixel_shuffle",
    "pixel_unshuffle",
    "bilinear_upsample",
    "add",
    "add_seq_bias",
    "tsum",
    "charbonnier_term",
    "scalar_mean",
    "backward",
    "read_tensor4",
    "write_tensor4",
]

_DTYPES = {"f32": np.float32, "f64": np.float64}
_PRECISION = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}

_node_ids = itertools.count()
_tls = threading.local()


def _freeze(arr: np.ndarray) -> np.ndarray:
    if arr.flags.writeable:
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
    return arr


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains NaN or Inf")


class Tensor4:
    """Immutable dense (N, C, H, W) tensor, float32 or float64."""

    __slots__ = ("data", "node")

    def __init__(self, data, precision: str | None = None, _node: int | None = None):
        arr = np.asarray(data)
        if precision is not None:
            arr = arr.astype(_DTYPES[precision], copy=False)
        elif arr.dtype not in _PRECISION:
            arr = arr.astype(np.float64)
        if arr.ndim != 4:
            raise ValueError(f"Tensor4 needs 4 dims (N, C, H, W), got shape {arr.shape}")
        _check_finite(arr, "Tensor4 data")
        self.data = _freeze(np.ascontiguousarray(arr))
        self.node = _node

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def precision(self) -> str:
        return _PRECISION[self.data.dtype]

    def astype(self, precision: str) -> "Tensor4":
        return Tensor4(self.data, precision=precision)

    def __repr__(self) -> str:
        return f"Tensor4(dims={self.dims}, precision={self.precision})"


@dataclass
class ConvParams:
    """Weights of one convolution: (C_out, C_in, K, K) kernel plus bias.

    ``trainable=False`` marks parameters the optimizer must never touch
    (grafted kernels). The arrays are read-only; the optimizer swaps in new
    arrays rather than mutating.
    """

    weight: np.ndarray
    bias: np.ndarray
    trainable: bool = True

    def __post_init__(self):
        w = np.asarray(self.weight)
        if w.ndim != 4 or w.shape[2] != w.shape[3] or w.shape[2] not in (1, 3):
            raise ValueError(f"conv weight must be (C_out, C_in, K, K) with K in {{1, 3}}, got {w.shape}")
        b = np.asarray(self.bias, dtype=w.dtype)
        if b.shape != (w.shape[0],):
            raise ValueError(f"bias must have length C_out={w.shape[0]}, got shape {b.shape}")
        _check_finite(w, "conv weight")
        _check_finite(b, "conv bias")
        self.weight = _freeze(np.ascontiguousarray(w))
        self.bias = _freeze(np.ascontiguousarray(b))

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def ksize(self) -> int:
        return self.weight.shape[2]

    def astype(self, precision: str) -> "ConvParams":
        dt = _DTYPES[precision]
        return ConvParams(self.weight.astype(dt), self.bias.astype(dt), self.trainable)


@dataclass
class FlowField:
    """Per-pixel displacements, shape (2, H, W): channel 0 = dx, channel 1 = dy."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] != 2:
            raise ValueError(f"flow must have shape (2, H, W), got {arr.shape}")
        _check_finite(arr, "flow field")
        self.data = _freeze(np.ascontiguousarray(arr))

    @property
    def spatial(self) -> tuple[int, int]:
        return self.data.shape[1], self.data.shape[2]

    @classmethod
    def zero(cls, h: int, w: int) -> "FlowField":
        return cls(np.zeros((2, h, w)))


class Scalar:
    """A 0-d differentiable value (loss node)."""

    __slots__ = ("value", "node")

    def __init__(self, value: float, _node: int | None = None):
        v = float(value)
        if not np.isfinite(v):
            raise ValueError("scalar value is NaN or Inf")
        self.value = v
        self.node = _node

    def __repr__(self) -> str:
        return f"Scalar({self.value})"


class Tape:
    """Recorded operation graph. Nodes are appended in execution order and the
    backward pass replays them once, in reverse."""

    def __init__(self):
        # each step: (out_node, [(in_node, pullback), ...])
        self._steps: list[tuple[int, list[tuple[int, Callable[[np.ndarray], np.ndarray]]]]] = []
        # param identity -> (weight node, bias node)
        self._param_nodes: dict[int, tuple[int, int]] = {}
        self._params: dict[int, ConvParams] = {}
        self._watched: dict[int, int] = {}  # id(tensor) -> node

    def __enter__(self) -> "Tape":
        stack = getattr(_tls, "tapes", None)
        if stack is None:
            stack = _tls.tapes = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _tls.tapes.pop()
        return False

    def watch(self, t: Tensor4) -> Tensor4:
        """Track a leaf tensor so backward() can return dL/d(tensor)."""
        if t.node is None:
            t.node = next(_node_ids)
        self._watched[id(t)] = t.node
        return t

    def _record(self, inputs, out_node):
        self._steps.append((out_node, inputs))

    def _nodes_for(self, params: ConvParams) -> tuple[int, int]:
        key = id(params)
        nodes = self._param_nodes.get(key)
        if nodes is None:
            nodes = (next(_node_ids), next(_node_ids))
            self._param_nodes[key] = nodes
            self._params[key] = params
        return nodes


def _active_tape() -> Tape | None:
    stack = getattr(_tls, "tapes", None)
    return stack[-1] if stack else None


def _out_node(tape: Tape | None, inputs) -> int | None:
    """Register a step if a tape is active and any input is tracked."""
    if tape is None:
        return None
    tracked = [(n, pb) for (n, pb) in inputs if n is not None]
    if not tracked:
        return None
    node = next(_node_ids)
    tape._record(tracked, node)
    return node


class Gradients:
    """Result of backward(): gradients keyed by parameter set / watched tensor."""

    def __init__(self, grads: dict[int, np.ndarray], tape: Tape):
        self._grads = grads
        self._tape = tape

    def wrt_params(self, params: ConvParams) -> tuple[np.ndarray, np.ndarray] | None:
        nodes = self._tape._param_nodes.get(id(params))
        if nodes is None:
            return None
        wn, bn = nodes
        gw = self._grads.get(wn)
        gb = self._grads.get(bn)
        if gw is None and gb is None:
            return None
        if gw is None:
            gw = np.zeros_like(params.weight)
        if gb is None:
            gb = np.zeros_like(params.bias)
        return gw, gb

    def wrt(self, t: Tensor4) -> np.ndarray:
        node = self._tape._watched.get(id(t))
        if node is None:
            raise KeyError("tensor was not watched on this tape")
        g = self._grads.get(node)
        return g if g is not None else np.zeros_like(t.data)

    def trainable_items(self) -> list[tuple[ConvParams, np.ndarray, np.ndarray]]:
        out = []
        for key, params in self._tape._params.items():
            if not params.trainable:
                continue
            wn, bn = self._tape._param_nodes[key]
            gw = self._grads.get(wn)
            gb = self._grads.get(bn)
            if gw is None and gb is None:
                continue
            out.append((
                params,
                gw if gw is not None else np.zeros_like(params.weight),
                gb if gb is not None else np.zeros_like(params.bias),
            ))
        return out


def backward(tape: Tape, loss: Scalar) -> Gradients:
    """Reverse-mode sweep from a scalar loss over everything the tape recorded."""
    if not isinstance(loss, Scalar):
        raise ValueError("loss must be a Scalar")
    if loss.node is None:
        raise ValueError("loss is not connected to this tape (no tracked inputs)")
    grads: dict[int, np.ndarray] = {loss.node: np.array(1.0)}
    for out_node, inputs in reversed(tape._steps):
        g_out = grads.get(out_node)
        if g_out is None:
            continue
        for in_node, pullback in inputs:
            g_in = pullback(g_out)
            acc = grads.get(in_node)
            grads[in_node] = g_in if acc is None else acc + g_in
    return Gradients(grads, tape)


# ---------------------------------------------------------------------------
# convolution


# above this pixel count the im2col patch copy costs more than it saves
_SHIFT_AREA = 4096


def _conv_core(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Stride-1 cross-correlation with same-size zero padding. x (N,C,H,W),
    w (O,C,K,K) -> (N,O,H,W)."""
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    if k == 1:
        flat = x.reshape(n, c, h * wd)
        out = np.einsum("oc,ncp->nop", w.reshape(o, c), flat, optimize=True)
        return np.ascontiguousarray(out.reshape(n, o, h, wd))
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    if h * wd >= _SHIFT_AREA and o <= 8:
        # high resolution, few outputs: shift-and-add beats the patch copy
        out = np.zeros((n, o, h, wd), dtype=x.dtype)
        for dy in range(k):
            for dx in range(k):
                out += np.einsum(
                    "oc,nchw->nohw", w[:, :, dy, dx], xp[:, :, dy : dy + h, dx : dx + wd],
                    optimize=True,
                )
        return out
    cols = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    cols = np.ascontiguousarray(cols.transpose(0, 2, 3, 1, 4, 5)).reshape(n * h * wd, c * k * k)
    out = cols @ w.reshape(o, c * k * k).T
    return np.ascontiguousarray(out.reshape(n, h, wd, o).transpose(0, 3, 1, 2))


def _conv_weight_grad(x: np.ndarray, g: np.ndarray, k: int) -> np.ndarray:
    n, c, h, w = x.shape
    o = g.shape[1]
    if k == 1:
        gw = np.einsum("nohw,nchw->oc", g, x, optimize=True)
        return gw.reshape(o, c, 1, 1)
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    if h * w >= _SHIFT_AREA:
        gw = np.empty((o, c, k, k), dtype=x.dtype)
        for dy in range(k):
            for dx in range(k):
                gw[:, :, dy, dx] = np.einsum(
                    "nohw,nchw->oc", g, xp[:, :, dy : dy + h, dx : dx + w], optimize=True
                )
        return gw
    cols = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    cols = np.ascontiguousarray(cols.transpose(0, 2, 3, 1, 4, 5)).reshape(n * h * w, c * k * k)
    g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * h * w, o)
    return (g2.T @ cols).reshape(o, c, k, k)


def _conv_input_grad(g: np.ndarray, w: np.ndarray) -> np.ndarray:
    # correlate grad with the spatially flipped, channel-swapped kernel
    w_t = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    return _conv_core(g, w_t)


def conv2d(x: Tensor4, params: ConvParams, with_bias: bool = True) -> Tensor4:
    """Same-size, stride-1 convolution; bias added per output channel."""
    if x.dims[1] != params.in_channels:
        raise ValueError(f"input has {x.dims[1]} channels, conv expects {params.in_channels}")
    w = params.weight
    if w.dtype != x.data.dtype:
        w = w.astype(x.data.dtype)
    out = _conv_core(x.data, w)
    if with_bias:
        out = out + params.bias.astype(x.data.dtype)[None, :, None, None]

    tape = _active_tape()
    node = None
    if tape is not None:
        inputs = []
        if x.node is not None:
            inputs.append((x.node, lambda g, w=w: _conv_input_grad(g, w)))
        if params.trainable:
            wn, bn = tape._nodes_for(params)
            xd = x.data
            k = params.ksize
            inputs.append((wn, lambda g, xd=xd, k=k: _conv_weight_grad(xd, g, k)))
            if with_bias:
                inputs.append((bn, lambda g: g.sum(axis=(0, 2, 3))))
        node = _out_node(tape, inputs)
    return Tensor4(out, _node=node)


def add_seq_bias(x: Tensor4, mix: ConvParams, tap_sums: np.ndarray) -> Tensor4:
    """Add the bias a 1x1->KxK sequential pair contributes on the zero-extended
    canvas: per output channel, ``tap_sums @ mix.bias`` where
    ``tap_sums[o, m] = sum of the fixed kernel's taps for (o, m)``.

    Keeping the bias out of the intermediate map (and adding its exact effect
    here) is what makes the multi-branch and merged forms agree at image
    borders.
    """
    tap_sums = np.asarray(tap_sums, dtype=x.data.dtype)
    if tap_sums.shape != (x.dims[1], mix.out_channels):
        raise ValueError(
            f"tap_sums must be (C_out={x.dims[1]}, C_mid={mix.out_channels}), got {tap_sums.shape}"
        )
    vec = tap_sums @ mix.bias.astype(x.data.dtype)
    out = x.data + vec[None, :, None, None]

    tape = _active_tape()
    node = None
    if tape is not None:
        inputs = []
        if x.node is not None:
            inputs.append((x.node, lambda g: g))
        if mix.trainable:
            _, bn = tape._nodes_for(mix)
            inputs.append((bn, lambda g, ts=tap_sums: ts.T @ g.sum(axis=(0, 2, 3))))
        node = _out_node(tape, inputs)
    return Tensor4(out, _node=node)


# ---------------------------------------------------------------------------
# pointwise / structural ops


def relu(x: Tensor4) -> Tensor4:
    out = np.maximum(x.data, 0)
    tape = _active_tape()
    node = None
    if tape is not None and x.node is not None:
        mask = x.data > 0
        node = _out_node(tape, [(x.node, lambda g, m=mask: g * m)])
    return Tensor4(out, _node=node)


def add(a: Tensor4, b: Tensor4) -> Tensor4:
    if a.dims != b.dims:
        raise ValueError(f"add: shape mismatch {a.dims} vs {b.dims}")
    out = a.data + b.data
    tape = _active_tape()
    node = None
    if tape is not None:
        inputs = []
        if a.node is not None:
            inputs.append((a.node, lambda g: g))
        if b.node is not None:
            inputs.append((b.node, lambda g: g))
        node = _out_node(tape, inputs)
    return Tensor4(out, _node=node)


def concat_channels(a: Tensor4, b: Tensor4) -> Tensor4:
    na, ca, ha, wa = a.dims
    nb, cb, hb, wb = b.dims
    if (na, ha, wa) != (nb, hb, wb):
        raise ValueError(f"concat: N/H/W mismatch {a.dims} vs {b.dims}")
    out = np.concatenate([a.data, b.data], axis=1)
    tape = _active_tape()
    node = None
    if tape is not None:
        inputs = []
        if a.node is not None:
            inputs.append((a.node, lambda g, c=ca: g[:, :c]))
        if b.node is not None:
            inputs.append((b.node, lambda g, c=ca: g[:, c:]))
        node = _out_node(tape, inputs)
    return Tensor4(out, _node=node)


def channel_slice(x: Tensor4, start: int, stop: int) -> Tensor4:
    """View channels [start, stop) as a new tensor (test/introspection helper)."""
    if not (0 <= start < stop <= x.dims[1]):
        raise ValueError(f"bad channel range [{start}, {stop}) for C={x.dims[1]}")
    return Tensor4(x.data[:, start:stop])


def pixel_shuffle(x: Tensor4, r: int) -> Tensor4:
    """(N, C, H, W) -> (N, C/r^2, rH, rW); out[n,c,rh+i,rw+j] = in[n, c*r^2 + i*r + j, h, w]."""
    n, c, h, w = x.dims
    if r < 1:
        raise ValueError("upscale factor must be >= 1")
    if c % (r * r) != 0:
        raise ValueError(f"channels ({c}) not divisible by r^2 ({r * r})")
    co = c // (r * r)
    out = x.data.reshape(n, co, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, co, h * r, w * r)
    tape = _active_tape()
    node = None
    if tape is not None and x.node is not None:
        def pull(g, n=n, co=co, r=r, h=h, w=w):
            return g.reshape(n, co, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, co * r * r, h, w)
        node = _out_node(tape, [(x.node, pull)])
    return Tensor4(out, _node=node)


def pixel_unshuffle(x: Tensor4, r: int) -> Tensor4:
    """Exact inverse of pixel_shuffle (not tape-recorded; test utility)."""
    n, c, h, w = x.dims
    if h % r or w % r:
        raise ValueError("spatial dims not divisible by r")
    out = x.data.reshape(n, c, h // r, r, w // r, r).transpose(0, 1, 3, 5, 2, 4)
    return Tensor4(out.reshape(n, c * r * r, h // r, w // r))


@lru_cache(maxsize=64)
def _upsample_matrix(src: int, r: int) -> np.ndarray:
    """(r*src, src) bilinear sampling matrix, half-pixel centers, edge clamp."""
    dst = src * r
    mat = np.zeros((dst, src))
    for i in range(dst):
        s = (i + 0.5) / r - 0.5
        lo = int(np.floor(s))
        frac = s - lo
        i0 = min(max(lo, 0), src - 1)
        i1 = min(max(lo + 1, 0), src - 1)
        mat[i, i0] += 1.0 - frac
        mat[i, i1] += frac
    return mat


def bilinear_upsample(x: Tensor4, r: int) -> Tensor4:
    if r < 1:
        raise ValueError("upscale factor must be >= 1")
    if r == 1:
        out = x.data
        ay = ax = None
    else:
        n, c, h, w = x.dims
        ay = _upsample_matrix(h, r).astype(x.data.dtype)
        ax = _upsample_matrix(w, r).astype(x.data.dtype)
        out = np.einsum("ih,nchw,jw->ncij", ay, x.data, ax, optimize=True)
    tape = _active_tape()
    node = None
    if tape is not None and x.node is not None:
        if r == 1:
            node = _out_node(tape, [(x.node, lambda g: g)])
        else:
            def pull(g, ay=ay, ax=ax):
                return np.einsum("ih,ncij,jw->nchw", ay, g, ax, optimize=True)
            node = _out_node(tape, [(x.node, pull)])
    return Tensor4(out, _node=node)


# ---------------------------------------------------------------------------
# warping


def _warp_arrays(feat: np.ndarray, flow: np.ndarray):
    """Shared forward machinery; returns (output, corner index/weight lists)."""
    n, c, h, w = feat.shape
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    sx = xs + flow[0]
    sy = ys + flow[1]
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = (sx - x0).astype(feat.dtype)
    fy = (sy - y0).astype(feat.dtype)
    corners = []
    out = np.zeros_like(feat)
    flat = feat.reshape(n, c, h * w)
    one = np.ones_like(fx)
    for (yc, xc, wgt) in (
        (y0, x0, (one - fx) * (one - fy)),
        (y0, x0 + 1, fx * (one - fy)),
        (y0 + 1, x0, (one - fx) * fy),
        (y0 + 1, x0 + 1, fx * fy),
    ):
        valid = (yc >= 0) & (yc < h) & (xc >= 0) & (xc < w)
        idx = np.where(valid, yc * w + xc, 0).ravel()
        wv = (wgt * valid).astype(feat.dtype).ravel()
        out += (flat[:, :, idx] * wv).reshape(n, c, h, w)
        corners.append((idx, wv))
    return out, corners


def bilinear_warp(feat: Tensor4, flow: FlowField) -> Tensor4:
    """Backward warp: out(p) = feat(p + flow(p)), zero outside the image."""
    n, c, h, w = feat.dims
    if flow.spatial != (h, w):
        raise ValueError(f"flow spatial dims {flow.spatial} do not match feature {h, w}")
    out, corners = _warp_arrays(feat.data, flow.data)
    tape = _active_tape()
    node = None
    if tape is not None and feat.node is not None:
        def pull(g, corners=corners, n=n, c=c, h=h, w=w):
            dflat = np.zeros((n, c, h * w), dtype=g.dtype)
            gflat = g.reshape(n, c, h * w)
            for idx, wv in corners:
                np.add.at(dflat, (slice(None), slice(None), idx), gflat * wv)
            return dflat.reshape(n, c, h, w)
        node = _out_node(tape, [(feat.node, pull)])
    return Tensor4(out, _node=node)


# ---------------------------------------------------------------------------
# scalar reductions


def tsum(x: Tensor4) -> Scalar:
    out = float(x.data.sum())
    tape = _active_tape()
    node = None
    if tape is not None and x.node is not None:
        shape = x.dims
        dtype = x.data.dtype
        node = _out_node(tape, [(x.node, lambda g: np.full(shape, float(g), dtype=dtype))])
    return Scalar(out, _node=node)


def charbonnier_term(pred: Tensor4, target: Tensor4, eps: float) -> Scalar:
    """sqrt(sum(diff^2) + eps) for one frame; the norm runs over all elements."""
    if pred.dims != target.dims:
        raise ValueError(f"charbonnier: shape mismatch {pred.dims} vs {target.dims}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    diff = pred.data.astype(np.float64) - target.data.astype(np.float64)
    val = float(np.sqrt((diff * diff).sum() + eps))
    tape = _active_tape()
    node = None
    if tape is not None:
        inputs = []
        coeff = diff / val
        if pred.node is not None:
            inputs.append((pred.node, lambda g, c=coeff, dt=pred.data.dtype: (float(g) * c).astype(dt)))
        if target.node is not None:
            inputs.append((target.node, lambda g, c=coeff, dt=target.data.dtype: (-float(g) * c).astype(dt)))
        node = _out_node(tape, inputs)
    return Scalar(val, _node=node)


def scalar_mean(terms: Sequence[Scalar]) -> Scalar:
    if not terms:
        raise ValueError("mean of no terms")
    val = sum(t.value for t in terms) / len(terms)
    tape = _active_tape()
    node = None
    if tape is not None:
        inputs = [(t.node, lambda g, k=len(terms): np.asarray(g) / k) for t in terms if t.node is not None]
        node = _out_node(tape, inputs)
    return Scalar(val, _node=node)


# ---------------------------------------------------------------------------
# raw tensor file ("CKT4")

_CKT4_MAGIC = b"CKT4"


def write_tensor4(path, t: Tensor4) -> None:
    """Raw tensor file: magic "CKT4", u32 LE version=1, four u32 LE dims,
    f32 LE row-major payload."""
    data = t.data.astype(np.float32)
    with open(path, "wb") as fh:
        fh.write(_CKT4_MAGIC)
        fh.write(struct.pack("<5I", 1, *data.shape))
        fh.write(data.tobytes())


def read_tensor4(path) -> Tensor4:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CKT4_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {_CKT4_MAGIC!r}")
        version, n, c, h, w = struct.unpack("<5I", fh.read(20))
        if version != 1:
            raise ValueError(f"unsupported CKT4 version {version}")
        payload = fh.read(4 * n * c * h * w)
        if len(payload) != 4 * n * c * h * w:
            raise ValueError("truncated CKT4 payload")
        arr = np.frombuffer(payload, dtype="<f4").reshape(n, c, h, w)
    return Tensor4(arr)
