"""Quality, complexity, and latency measurement.

PSNR is 10*log10(1/MSE) on [0, 1] frames, capped at 100 dB for identical
inputs, in RGB (all channels) or on the BT.601 full-range luma channel. SSIM
uses the standard Gaussian 11x11 sigma=1.5 window with K1=0.01, K2=0.03 at
dynamic range 1, averaged over fully interior windows. The trade-off score is
2^PSNR / (2^20 * t) with t the total per-frame latency in milliseconds:
caching delay (future frames required times the source frame period) plus
measured runtime.

Complexity counters follow the convention of counting one multiply-accumulate
as one FLOP, over convolutions only; activations count every conv output
element. Both are analytic functions of the architecture, so merged deploy
networks get exactly the single-conv counts.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from statistics import median

import numpy as np

from .tensor import ConvParams
from .vsr_net import NetParams, run_sequence

__all__ = [
    "SRMetrics",
    "LatencyReport",
    "luma",
    "psnr",
    "ssim",
    "tradeoff_score",
    "count_params",
    "count_flops",
    "count_activations",
    "latency_report",
]

_PSNR_CAP = 100.0
_BT601 = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class SRMetrics:
    psnr: float
    ssim: float
    space: str

    def __post_init__(self):
        if self.space not in ("RGB", "Y"):
            raise ValueError("space must be 'RGB' or 'Y'")
        if not -1.0 <= self.ssim <= 1.0:
            raise ValueError(f"ssim {self.ssim} outside [-1, 1]")


@dataclass(frozen=True)
class LatencyReport:
    t_cache_ms: float
    t_run_ms: float
    params: int
    flops: int
    activations: int
    score: float | None = None

    @property
    def t_ms(self) -> float:
        return self.t_cache_ms + self.t_run_ms

    @property
    def fps(self) -> float:
        return 1000.0 / self.t_ms

    def to_dict(self) -> dict:
        return {
            "t_cache_ms": self.t_cache_ms,
            "t_run_ms": self.t_run_ms,
            "t_ms": self.t_ms,
            "fps": self.fps,
            "params": self.params,
            "flops": self.flops,
            "activations": self.activations,
            "score": self.score,
        }


def luma(frame: np.ndarray) -> np.ndarray:
    """BT.601 full-range luma of an (H, W, 3) frame in [0, 1]."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ValueError(f"luma needs (H, W, 3), got {frame.shape}")
    return frame @ _BT601


def _as_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, space: str = "RGB") -> float:
    """Peak signal-to-noise ratio in dB between [0, 1] frames."""
    a, b = _as_pair(a, b)
    if space == "Y":
        a, b = luma(a), luma(b)
    elif space != "RGB":
        raise ValueError("space must be 'RGB' or 'Y'")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return _PSNR_CAP
    return min(10.0 * np.log10(1.0 / mse), _PSNR_CAP)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    xs = np.arange(size) - half
    g = np.exp(-(xs**2) / (2.0 * sigma**2))
    g2 = np.outer(g, g)
    return g2 / g2.sum()


def _windowed(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    k = win.shape[0]
    views = np.lib.stride_tricks.sliding_window_view(img, (k, k))
    return np.einsum("hwuv,uv->hw", views, win, optimize=True)


def ssim(a, b, size: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean local SSIM over interior Gaussian windows, dynamic range 1.
    Color frames are compared on the luma channel."""
    a, b = _as_pair(a, b)
    if a.ndim == 3:
        a, b = luma(a), luma(b)
    if a.ndim != 2:
        raise ValueError(f"ssim needs (H, W) or (H, W, 3), got {a.shape}")
    if min(a.shape) < size:
        raise ValueError(f"frame {a.shape} smaller than the {size}x{size} window")
    win = _gaussian_window(size, sigma)
    c1, c2 = k1**2, k2**2
    mu_a = _windowed(a, win)
    mu_b = _windowed(b, win)
    var_a = _windowed(a * a, win) - mu_a**2
    var_b = _windowed(b * b, win) - mu_b**2
    cov = _windowed(a * b, win) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def tradeoff_score(psnr_db: float, t_ms: float) -> float:
    """Quality/latency trade-off: 2^PSNR / (2^20 * t)."""
    if t_ms <= 0:
        raise ValueError("latency must be positive")
    return float(2.0 ** (psnr_db - 20.0) / t_ms)


# ---------------------------------------------------------------------------
# complexity counters


def _conv_sites(params: NetParams, h: int, w: int) -> list[tuple[ConvParams, int]]:
    """Every conv with the pixel count it runs at for an (h, w) input frame."""
    r = params.config.scale
    sites = []
    for name, p in params.all_conv_params():
        area = h * w * r * r if name == "out" else h * w
        sites.append((p, area))
    return sites


def count_params(params: NetParams) -> int:
    """Stored weight and bias scalars across all convs."""
    return sum(p.weight.size + p.bias.size for _, p in params.all_conv_params())


def count_flops(params: NetParams, h: int, w: int) -> int:
    """Multiply-accumulates of all convs for one (h, w) input frame."""
    total = 0
    for p, area in _conv_sites(params, h, w):
        total += area * p.in_channels * p.out_channels * p.ksize * p.ksize
    return total


def count_activations(params: NetParams, h: int, w: int) -> int:
    """Total conv output elements for one (h, w) input frame."""
    return sum(area * p.out_channels for p, area in _conv_sites(params, h, w))


# ---------------------------------------------------------------------------
# latency


def latency_report(
    params: NetParams,
    probe_frames: list,
    future_frames_required: int = 0,
    source_fps: float = 24.0,
    warmup: int = 2,
    iters: int = 30,
    psnr_db: float | None = None,
    provider=None,
) -> LatencyReport:
    """Median per-frame runtime over repeated timed passes, plus the caching
    delay implied by how many future frames the method needs."""
    if not probe_frames:
        raise ValueError("empty probe set")
    if iters < 1 or warmup < 0:
        raise ValueError("need at least one timed iteration")
    if source_fps <= 0:
        raise ValueError("source fps must be positive")
    for _ in range(warmup):
        run_sequence(params, probe_frames, provider=provider)
    per_frame = []
    for _ in range(iters):
        t0 = time.perf_counter()
        run_sequence(params, probe_frames, provider=provider)
        dt = time.perf_counter() - t0
        per_frame.append(1000.0 * dt / len(probe_frames))
    t_run = float(median(per_frame))
    t_cache = future_frames_required * (1000.0 / source_fps)
    h, w = probe_frames[0].dims[2], probe_frames[0].dims[3]
    score = None if psnr_db is None else tradeoff_score(psnr_db, t_cache + t_run)
    return LatencyReport(
        t_cache_ms=t_cache,
        t_run_ms=t_run,
        params=count_params(params),
        flops=count_flops(params, h, w),
        activations=count_activations(params, h, w),
        score=score,
    )
