"""Synthetic video data with exact ground truth.

Clips are drifting band-limited sinusoid mixtures. Each frame evaluates one
continuous texture at grid coordinates shifted by the cumulative drift, so
frame-to-frame motion is an exact global translation with a known table of
per-step displacements: the generator's flow tables are ground truth by
construction, not estimates. Drifts are integers in low-resolution pixels
(high-resolution frames move by scale x drift), which makes bicubic
downsampling commute with the motion and lets integer block matching recover
the drift exactly.

Bicubic resampling uses the standard two-parameter-free convention: Keys
kernel a = -0.5, half-pixel centers, edge clamp, per-row weight
normalization, and antialiasing (kernel stretched by the scale factor) when
downsampling. Up- and downsampling are separable and implemented as cached
1-D sampling matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "SynthConfig",
    "SynthClip",
    "bicubic_matrix",
    "bicubic_resize",
    "bicubic_down",
    "bicubic_up",
    "make_clip",
    "synth_dataset",
]


def _keys_cubic(t: np.ndarray) -> np.ndarray:
    a = -0.5
    t = np.abs(t)
    out = np.zeros_like(t)
    near = t <= 1.0
    far = (t > 1.0) & (t < 2.0)
    out[near] = (a + 2.0) * t[near] ** 3 - (a + 3.0) * t[near] ** 2 + 1.0
    out[far] = a * (t[far] ** 3 - 5.0 * t[far] ** 2 + 8.0 * t[far] - 4.0)
    return out


@lru_cache(maxsize=128)
def bicubic_matrix(src: int, dst: int) -> np.ndarray:
    """(dst, src) 1-D bicubic sampling matrix, half-pixel centers, edge clamp,
    antialiased when dst < src, rows normalized to sum 1."""
    if src < 1 or dst < 1:
        raise ValueError("sizes must be positive")
    scale = dst / src
    support = max(1.0, 1.0 / scale)  # kernel stretch for antialiasing
    mat = np.zeros((dst, src))
    for i in range(dst):
        center = (i + 0.5) / scale - 0.5
        lo = int(np.floor(center - 2.0 * support)) + 1
        hi = int(np.floor(center + 2.0 * support))
        taps = np.arange(lo, hi + 1)
        w = _keys_cubic((taps - center) / support)
        for j, wj in zip(taps, w):
            mat[i, min(max(j, 0), src - 1)] += wj
        mat[i] /= mat[i].sum()
    return mat


def bicubic_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bicubic resize of an (H, W) or (H, W, C) image."""
    ay = bicubic_matrix(img.shape[0], out_h)
    ax = bicubic_matrix(img.shape[1], out_w)
    if img.ndim == 2:
        return ay @ img @ ax.T
    if img.ndim == 3:
        return np.einsum("ih,hwc,jw->ijc", ay, img, ax, optimize=True)
    raise ValueError(f"expected 2-D or 3-D image, got shape {img.shape}")


def bicubic_down(img: np.ndarray, r: int) -> np.ndarray:
    h, w = img.shape[:2]
    if h % r or w % r:
        raise ValueError(f"image {h}x{w} not divisible by scale {r}")
    return bicubic_resize(img, h // r, w // r)


def bicubic_up(img: np.ndarray, r: int) -> np.ndarray:
    h, w = img.shape[:2]
    return bicubic_resize(img, h * r, w * r)


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings. Sizes are low-resolution pixels; high-resolution
    frames are ``scale`` times larger. ``drift_max`` bounds each per-step
    drift component (integers), chosen to stay inside the block-matching
    search window."""

    lr_height: int = 32
    lr_width: int = 32
    n_frames: int = 10
    scale: int = 4
    drift_max: int = 2
    n_waves: int = 6
    min_wavelength_lr: float = 4.0
    max_wavelength_lr: float = 16.0

    def __post_init__(self):
        if self.lr_height < 8 or self.lr_width < 8:
            raise ValueError("low-resolution frames must be at least 8x8")
        if self.n_frames < 1:
            raise ValueError("need at least one frame")
        if self.scale not in (2, 4):
            raise ValueError("scale must be 2 or 4")
        if self.drift_max < 0:
            raise ValueError("drift_max must be nonnegative")
        if not (2.0 <= self.min_wavelength_lr <= self.max_wavelength_lr):
            raise ValueError("wavelength band invalid")


@dataclass(frozen=True)
class SynthClip:
    """One clip: aligned frame lists plus the exact per-step flow table.
    ``flows[t]`` is the (dx, dy) displacement that backward-warps frame t-1
    content onto frame t (``flows[0]`` is zero)."""

    hr_frames: tuple[np.ndarray, ...]
    lr_frames: tuple[np.ndarray, ...]
    flows: tuple[tuple[float, float], ...]


def _wave_field(cfg: SynthConfig, rng) -> list[dict]:
    """Random band-limited wave parameters per color channel, in
    high-resolution pixel units."""
    waves = []
    r = cfg.scale
    for _ in range(3):
        n = cfg.n_waves
        wavelength = rng.uniform(cfg.min_wavelength_lr * r, cfg.max_wavelength_lr * r, size=n)
        theta = rng.uniform(0.0, np.pi, size=n)
        freq = 2.0 * np.pi / wavelength
        waves.append({
            "fy": freq * np.sin(theta),
            "fx": freq * np.cos(theta),
            "phase": rng.uniform(0.0, 2.0 * np.pi, size=n),
            "amp": rng.uniform(0.5, 1.0, size=n) / n,
        })
    return waves


def _render_hr(cfg: SynthConfig, waves: list[dict], shift_y: float, shift_x: float) -> np.ndarray:
    h = cfg.lr_height * cfg.scale
    w = cfg.lr_width * cfg.scale
    ys = np.arange(h, dtype=np.float64)[:, None] + shift_y
    xs = np.arange(w, dtype=np.float64)[None, :] + shift_x
    img = np.zeros((h, w, 3))
    for c, wv in enumerate(waves):
        acc = np.zeros((h, w))
        for fy, fx, ph, amp in zip(wv["fy"], wv["fx"], wv["phase"], wv["amp"]):
            acc += amp * np.sin(fy * ys + fx * xs + ph)
        img[:, :, c] = acc
    # mixture amplitude is at most 1 by construction; map to [0.1, 0.9]
    return 0.5 + 0.4 * img


def make_clip(cfg: SynthConfig, seed: int) -> SynthClip:
    """Deterministically generate one drifting-texture clip."""
    rng = np.random.default_rng(seed)
    waves = _wave_field(cfg, rng)
    steps = [(0, 0)]
    for _ in range(cfg.n_frames - 1):
        steps.append((
            int(rng.integers(-cfg.drift_max, cfg.drift_max + 1)),
            int(rng.integers(-cfg.drift_max, cfg.drift_max + 1)),
        ))
    hr_frames = []
    lr_frames = []
    flows = []
    cum_x = cum_y = 0
    for t, (dx, dy) in enumerate(steps):
        cum_x += dx
        cum_y += dy
        hr = _render_hr(cfg, waves, cfg.scale * cum_y, cfg.scale * cum_x)
        hr_frames.append(hr)
        lr_frames.append(bicubic_down(hr, cfg.scale))
        flows.append((float(dx), float(dy)) if t > 0 else (0.0, 0.0))
    return SynthClip(tuple(hr_frames), tuple(lr_frames), tuple(flows))


def synth_dataset(cfg: SynthConfig, n_clips: int, seed: int) -> list[SynthClip]:
    """A list of clips with decorrelated but seed-determined content."""
    if n_clips < 1:
        raise ValueError("need at least one clip")
    root = np.random.default_rng(seed)
    clip_seeds = root.integers(0, 2**63 - 1, size=n_clips)
    return [make_clip(cfg, int(s)) for s in clip_seeds]
