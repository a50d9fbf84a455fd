"""Recurrent online video super-resolution network built from bypass graft blocks.

Per frame: a head conv lifts the image into feature space, the previous hidden
state is warped by estimated flow and fused with the new features, a cascade
of bypass graft blocks (ReLU between blocks) refines them, and a pixel-shuffle
head reconstructs a residual over the bilinear upsample of the input. The
hidden state carried forward is the post-block, pre-reconstruction feature
map. Frame t's output depends only on frames 0..t.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .formats import load_model, save_model
from .kernel_prior import BasisSet, GraftSpec, build_graft
from .reparam import BGBParams, bgb_forward, collapse_bgb
from .tensor import (
    ConvParams,
    FlowField,
    Tensor4,
    add,
    bilinear_upsample,
    bilinear_warp,
    concat_channels,
    conv2d,
    pixel_shuffle,
    relu,
)

__all__ = [
    "NetConfig",
    "NetParams",
    "RecurrentState",
    "ZeroFlow",
    "LookupFlow",
    "BlockMatchingFlow",
    "make_flow_provider",
    "estimate_flow",
    "temporal_aggregate",
    "initial_state",
    "forward_step",
    "run_sequence",
    "init_net_params",
    "to_deploy",
    "save_net",
    "load_net",
]

_FLOW_MODES = ("zero", "lookup", "block")
_PRECISIONS = {"f32": np.float32, "f64": np.float64}


@dataclass(frozen=True)
class NetConfig:
    """Architecture and graft-construction settings."""

    scale: int = 4
    c_feat: int = 16
    num_bgb: int = 4
    m_clusters: int = 64
    d_inner: int = 4
    grafts_per_block: int = 2
    identity_branch: bool = True
    flow_mode: str = "block"
    precision: str = "f32"
    seed: int = 0

    def __post_init__(self):
        if self.scale not in (2, 4):
            raise ValueError(f"scale must be 2 or 4, got {self.scale}")
        if self.c_feat < 1:
            raise ValueError("c_feat must be >= 1")
        if self.num_bgb < 1:
            raise ValueError("num_bgb must be >= 1")
        if self.m_clusters < 1:
            raise ValueError("m_clusters must be >= 1")
        if self.d_inner < 1:
            raise ValueError("d_inner must be >= 1")
        if self.grafts_per_block < 0:
            raise ValueError("grafts_per_block must be >= 0")
        if self.flow_mode not in _FLOW_MODES:
            raise ValueError(f"unknown flow mode {self.flow_mode!r}; expected one of {_FLOW_MODES}")
        if self.precision not in _PRECISIONS:
            raise ValueError(f"precision must be one of {tuple(_PRECISIONS)}")

    @property
    def dtype(self):
        return _PRECISIONS[self.precision]

    def to_dict(self) -> dict:
        return {
            "scale": self.scale,
            "c_feat": self.c_feat,
            "num_bgb": self.num_bgb,
            "m_clusters": self.m_clusters,
            "d_inner": self.d_inner,
            "grafts_per_block": self.grafts_per_block,
            "identity_branch": self.identity_branch,
            "flow_mode": self.flow_mode,
            "precision": self.precision,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        return cls(**d)


def _check_conv(name: str, p: ConvParams, c_in: int, c_out: int, k: int) -> None:
    if p.in_channels != c_in or p.out_channels != c_out or p.ksize != k:
        raise ValueError(
            f"{name} conv must be {c_in}->{c_out} {k}x{k}, got "
            f"{p.in_channels}->{p.out_channels} {p.ksize}x{p.ksize}"
        )


@dataclass(frozen=True)
class NetParams:
    """All weights of one network, in train form (multi-branch blocks) or
    deploy form (each block merged to a single 3x3 conv)."""

    config: NetConfig
    form: str
    head: ConvParams
    fusion: ConvParams
    blocks: tuple
    up: ConvParams
    out: ConvParams

    def __post_init__(self):
        if self.form not in ("train", "deploy"):
            raise ValueError("form must be 'train' or 'deploy'")
        c = self.config.c_feat
        r = self.config.scale
        _check_conv("head", self.head, 3, c, 3)
        _check_conv("fusion", self.fusion, 2 * c, c, 3)
        _check_conv("up", self.up, c, c * r * r, 3)
        _check_conv("out", self.out, c, 3, 3)
        if len(self.blocks) != self.config.num_bgb:
            raise ValueError("block count does not match config")
        for i, blk in enumerate(self.blocks):
            if self.form == "train":
                if not isinstance(blk, BGBParams):
                    raise ValueError("train form requires multi-branch blocks")
                _check_conv(f"block {i} main", blk.main_branch, c, c, 3)
            else:
                if not isinstance(blk, ConvParams):
                    raise ValueError("deploy form must contain no multi-branch blocks")
                _check_conv(f"block {i}", blk, c, c, 3)
        object.__setattr__(self, "blocks", tuple(self.blocks))

    def all_conv_params(self) -> list[tuple[str, ConvParams]]:
        """Named parameter sets in a stable order."""
        named = [("head", self.head), ("fusion", self.fusion)]
        for i, blk in enumerate(self.blocks):
            if self.form == "train":
                named.append((f"bgb{i}.main", blk.main_branch))
                for j, g in enumerate(blk.grafts):
                    named.append((f"bgb{i}.graft{j}.mix", g.mix_1x1))
                    named.append((f"bgb{i}.graft{j}.fixed", g.fixed_3x3))
            else:
                named.append((f"block{i}", blk))
        named.append(("up", self.up))
        named.append(("out", self.out))
        return named


@dataclass(frozen=True)
class RecurrentState:
    """Streaming state between frames: previous hidden features and frame."""

    h: Tensor4
    prev_frame: Tensor4

    def __post_init__(self):
        if self.h.dims[0] != 1 or self.prev_frame.dims[0] != 1:
            raise ValueError("state tensors must have batch size 1")
        if self.h.dims[2:] != self.prev_frame.dims[2:]:
            raise ValueError("hidden state and previous frame must share spatial dims")


# ---------------------------------------------------------------------------
# flow providers


class ZeroFlow:
    """Assumes no motion."""

    def begin_sequence(self) -> None:
        pass

    def flow(self, x_t: Tensor4, x_prev: Tensor4) -> FlowField:
        _, _, h, w = x_t.dims
        return FlowField(np.zeros((2, h, w), dtype=x_t.data.dtype))


class LookupFlow:
    """Replays a known per-frame global flow table (dx, dy) rows."""

    def __init__(self, table):
        table = np.asarray(table, dtype=np.float64)
        if table.ndim != 2 or table.shape[1] != 2:
            raise ValueError("flow table must be (T, 2) rows of (dx, dy)")
        self._table = table
        self._t = 0

    def begin_sequence(self) -> None:
        self._t = 0

    def flow(self, x_t: Tensor4, x_prev: Tensor4) -> FlowField:
        if self._t >= len(self._table):
            raise ValueError(
                f"flow table has {len(self._table)} entries but frame {self._t} was requested"
            )
        dx, dy = self._table[self._t]
        self._t += 1
        _, _, h, w = x_t.dims
        field = np.empty((2, h, w), dtype=x_t.data.dtype)
        field[0] = dx
        field[1] = dy
        return FlowField(field)


def _box_sum(a: np.ndarray, radius: int) -> np.ndarray:
    """Sum over a (2*radius+1)^2 window around each cell, zero outside."""
    k = 2 * radius + 1
    h, w = a.shape
    s = np.zeros((h + 2 * radius + 1, w + 2 * radius + 1), dtype=np.float64)
    np.cumsum(np.pad(a, radius), axis=0, out=s[1:, 1:][: h + 2 * radius])
    np.cumsum(s[1:, 1:], axis=1, out=s[1:, 1:])
    return s[k:, k:] - s[:-k, k:] - s[k:, :-k] + s[:-k, :-k]


class BlockMatchingFlow:
    """Integer-pixel block matching: per pixel, the displacement d within
    +/- window minimizing the patch sum of absolute differences
    |x_t(p) - x_prev(p + d)|. Ties go to the smallest (|d|^2, dy, dx)."""

    def __init__(self, window: int = 4, patch: int = 5):
        if window < 1 or patch < 1 or patch % 2 != 1:
            raise ValueError("window must be >= 1 and patch odd and positive")
        self.window = window
        self.radius = patch // 2

    def begin_sequence(self) -> None:
        pass

    def flow(self, x_t: Tensor4, x_prev: Tensor4) -> FlowField:
        cur = x_t.data[0].astype(np.float64)
        prev = x_prev.data[0].astype(np.float64)
        _, h, w = cur.shape
        win = self.window
        prev_pad = np.pad(prev, ((0, 0), (win, win), (win, win)))
        cands = sorted(
            ((dy, dx) for dy in range(-win, win + 1) for dx in range(-win, win + 1)),
            key=lambda d: (d[0] * d[0] + d[1] * d[1], d[0], d[1]),
        )
        best = np.full((h, w), np.inf)
        best_dy = np.zeros((h, w), dtype=np.int64)
        best_dx = np.zeros((h, w), dtype=np.int64)
        for dy, dx in cands:
            shifted = prev_pad[:, win + dy : win + dy + h, win + dx : win + dx + w]
            cost = _box_sum(np.abs(cur - shifted).sum(axis=0), self.radius)
            better = cost < best
            best = np.where(better, cost, best)
            best_dy[better] = dy
            best_dx[better] = dx
        field = np.empty((2, h, w), dtype=x_t.data.dtype)
        field[0] = best_dx
        field[1] = best_dy
        return FlowField(field)


def make_flow_provider(mode: str, flow_table=None):
    """Build the provider named by a config's flow mode."""
    if mode == "zero":
        return ZeroFlow()
    if mode == "block":
        return BlockMatchingFlow()
    if mode == "lookup":
        if flow_table is None:
            raise ValueError("lookup flow needs the generator's flow table")
        return LookupFlow(flow_table)
    raise ValueError(f"unknown flow provider {mode!r}")


def estimate_flow(provider, x_t: Tensor4, x_prev: Tensor4) -> FlowField:
    """Dense flow such that x_t(p) is found at x_prev(p + flow(p))."""
    if x_t.dims != x_prev.dims:
        raise ValueError("frames must share dims")
    return provider.flow(x_t, x_prev)


# ---------------------------------------------------------------------------
# forward passes


def temporal_aggregate(
    feat_t: Tensor4, state: RecurrentState, flow: FlowField, fusion: ConvParams
) -> Tensor4:
    """Fuse current features with the flow-warped previous hidden state."""
    if feat_t.dims != state.h.dims:
        raise ValueError("feature map and hidden state must share dims")
    warped = bilinear_warp(state.h, flow)
    return conv2d(concat_channels(feat_t, warped), fusion)


def initial_state(params: NetParams, x0: Tensor4) -> RecurrentState:
    """Zero hidden features; the first frame doubles as its own predecessor."""
    n, c, h, w = x0.dims
    if n != 1 or c != 3:
        raise ValueError("frames must be (1, 3, H, W)")
    zeros = np.zeros((1, params.config.c_feat, h, w), dtype=params.config.dtype)
    return RecurrentState(h=Tensor4(zeros), prev_frame=x0)


def _apply_block(blk, x: Tensor4) -> Tensor4:
    if isinstance(blk, BGBParams):
        return bgb_forward(blk, x)
    return conv2d(x, blk)


def forward_step(
    params: NetParams,
    state: RecurrentState,
    x_t: Tensor4,
    provider=None,
    flow: FlowField | None = None,
) -> tuple[Tensor4, RecurrentState]:
    """One streaming step: (1, 3, H, W) frame -> (1, 3, rH, rW) frame plus
    the state for the next step."""
    n, c, h, w = x_t.dims
    if n != 1 or c != 3:
        raise ValueError("frames must be (1, 3, H, W)")
    if x_t.dims != state.prev_frame.dims:
        raise ValueError("frame dims changed mid-sequence")
    if flow is None:
        if provider is None:
            provider = make_flow_provider(params.config.flow_mode)
        flow = estimate_flow(provider, x_t, state.prev_frame)

    feat = conv2d(x_t, params.head)
    z = temporal_aggregate(feat, state, flow, params.fusion)
    for blk in params.blocks:
        z = relu(_apply_block(blk, z))
    hidden = z

    up = conv2d(z, params.up)
    hr = pixel_shuffle(up, params.config.scale)
    residual = conv2d(hr, params.out)
    sr = add(residual, bilinear_upsample(x_t, params.config.scale))
    return sr, RecurrentState(h=hidden, prev_frame=x_t)


def run_sequence(params: NetParams, frames: list, provider=None) -> list:
    """Super-resolve a whole clip strictly frame by frame."""
    if not frames:
        raise ValueError("empty sequence")
    if provider is None and params.config.flow_mode == "lookup":
        raise ValueError("lookup flow needs a provider built from the clip's flow table")
    if provider is None:
        provider = make_flow_provider(params.config.flow_mode)
    provider.begin_sequence()
    dims = frames[0].dims
    state = initial_state(params, frames[0])
    outputs = []
    for t, frame in enumerate(frames):
        if frame.dims != dims:
            raise ValueError(f"frame {t} dims {frame.dims} differ from {dims}")
        sr, state = forward_step(params, state, frame, provider=provider)
        outputs.append(sr)
    return outputs


# ---------------------------------------------------------------------------
# construction and form conversion


# residual-branch init scale: with the identity branch each block starts near
# identity, keeping the feature recurrence contractive at initialization
_BRANCH_DAMP = 0.1


def _uniform_conv(rng, c_in: int, c_out: int, k: int) -> ConvParams:
    bound = 1.0 / np.sqrt(c_in * k * k)
    w = rng.uniform(-bound, bound, size=(c_out, c_in, k, k))
    return ConvParams(w, np.zeros(c_out), trainable=True)


def init_net_params(config: NetConfig, basis: BasisSet | None = None) -> NetParams:
    """Fresh train-form network. Grafted blocks need a basis set; with
    grafts_per_block = 0 the blocks are plain conv + identity."""
    if config.grafts_per_block > 0 and basis is None:
        raise ValueError("graft construction needs a basis set")
    rng = np.random.default_rng(config.seed)
    c, r = config.c_feat, config.scale
    head = _uniform_conv(rng, 3, c, 3)
    fusion = _uniform_conv(rng, 2 * c, c, 3)
    blocks = []
    for _ in range(config.num_bgb):
        main = _uniform_conv(rng, c, c, 3)
        main = ConvParams(main.weight * _BRANCH_DAMP, main.bias, trainable=True)
        grafts = []
        for _ in range(config.grafts_per_block):
            g = build_graft(basis, c, c, config.d_inner, rng)
            mix = ConvParams(g.mix_1x1.weight * _BRANCH_DAMP, g.mix_1x1.bias, trainable=True)
            grafts.append(GraftSpec(g.sampled_indices, g.fixed_3x3, mix))
        blocks.append(BGBParams(main_branch=main, grafts=tuple(grafts), identity=config.identity_branch))
    up = _uniform_conv(rng, c, c * r * r, 3)
    # zero residual head: the untrained network is exactly the bilinear upsampler
    out = ConvParams(np.zeros((3, c, 3, 3)), np.zeros(3), trainable=True)
    return NetParams(
        config=config, form="train", head=head, fusion=fusion,
        blocks=tuple(blocks), up=up, out=out,
    )


def to_deploy(params: NetParams) -> NetParams:
    """Merge every block into a single 3x3 conv."""
    if params.form != "train":
        raise ValueError("params are already in deploy form")
    merged = tuple(collapse_bgb(blk) for blk in params.blocks)
    return replace(params, form="deploy", blocks=merged)


# ---------------------------------------------------------------------------
# model files


def save_net(path, params: NetParams) -> None:
    cfg = {"config": params.config.to_dict(), "form": params.form}
    tensors: dict[str, np.ndarray] = {}
    for name, p in params.all_conv_params():
        tensors[f"{name}.weight"] = p.weight
        tensors[f"{name}.bias"] = p.bias
    if params.form == "train":
        for i, blk in enumerate(params.blocks):
            for j, g in enumerate(blk.grafts):
                # which basis fills each fixed-conv slot; exact in f32 storage
                tensors[f"bgb{i}.graft{j}.indices"] = g.sampled_indices.astype(np.float64)
    save_model(path, cfg, tensors)


def _conv_from(tensors: dict, name: str, trainable: bool = True) -> ConvParams:
    try:
        w = tensors[f"{name}.weight"]
        b = tensors[f"{name}.bias"]
    except KeyError as exc:
        raise ValueError(f"model file is missing tensor {exc.args[0]!r}") from exc
    return ConvParams(w.astype(np.float64), b.astype(np.float64), trainable=trainable)


def load_net(path) -> NetParams:
    cfg, tensors = load_model(path)
    try:
        config = NetConfig.from_dict(cfg["config"])
        form = cfg["form"]
    except (KeyError, TypeError) as exc:
        raise ValueError("model file config is not a network description") from exc
    blocks: list = []
    for i in range(config.num_bgb):
        if form == "deploy":
            blocks.append(_conv_from(tensors, f"block{i}"))
            continue
        main = _conv_from(tensors, f"bgb{i}.main")
        grafts = []
        for j in range(config.grafts_per_block):
            mix = _conv_from(tensors, f"bgb{i}.graft{j}.mix")
            fixed = _conv_from(tensors, f"bgb{i}.graft{j}.fixed", trainable=False)
            idx = tensors[f"bgb{i}.graft{j}.indices"].astype(np.int64)
            grafts.append(GraftSpec(sampled_indices=idx, fixed_3x3=fixed, mix_1x1=mix))
        blocks.append(
            BGBParams(main_branch=main, grafts=tuple(grafts), identity=config.identity_branch)
        )
    return NetParams(
        config=config,
        form=form,
        head=_conv_from(tensors, "head"),
        fusion=_conv_from(tensors, "fusion"),
        blocks=tuple(blocks),
        up=_conv_from(tensors, "up"),
        out=_conv_from(tensors, "out"),
    )
