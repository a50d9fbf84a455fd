"""Training and evaluation on synthetic clips.

The loop draws a random clip, crop, and dihedral augmentation per iteration,
runs the recurrent network over the whole short sequence, and minimizes the
Charbonnier loss with bias-corrected Adam under cosine learning-rate
annealing. Fixed graft convolutions receive no updates and stay byte-
identical through training. Ablation modes share every component except the
clustering metric that produces the kernel prior: "w-kmeans" clusters in
Wasserstein space, "e-kmeans" in Euclidean space, "no-graft" skips grafts
entirely.

Training and evaluation on synthetic data replay each clip's exact generator
flow table; the configured flow provider is an inference-time concern.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .kernel_prior import (
    BasisSet,
    KernelBank,
    euclidean_kmeans,
    pca_centroids,
    synthetic_teacher_bank,
    wasserstein_kmeans,
)
from .metrics import psnr, ssim
from .synth import SynthClip, SynthConfig, bicubic_up, synth_dataset
from .tensor import ConvParams, Scalar, Tape, Tensor4, backward, charbonnier_term, scalar_mean
from .vsr_net import LookupFlow, NetConfig, NetParams, init_net_params, run_sequence

__all__ = [
    "TrainConfig",
    "AdamState",
    "TrainResult",
    "TrainingDiverged",
    "MODE_CLUSTERING",
    "charbonnier_loss",
    "adam_step",
    "cosine_anneal",
    "build_prior",
    "frame_to_tensor",
    "tensor_to_frame",
    "train_loop",
    "evaluate_on_clips",
]

_MODES = ("no-graft", "e-kmeans", "w-kmeans")

# the ablation switch: everything else in the pipeline is shared
MODE_CLUSTERING = {"e-kmeans": euclidean_kmeans, "w-kmeans": wasserstein_kmeans}


@dataclass(frozen=True)
class TrainConfig:
    patch: int = 32
    batch: int = 1
    iterations: int = 2000
    seq_frames: int = 5
    n_clips: int = 8
    lr0: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    eta_min: float = 1e-7
    charbonnier_eps: float = 1e-8
    seed: int = 0
    mode: str = "w-kmeans"

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        positive = {
            "patch": self.patch, "batch": self.batch, "iterations": self.iterations,
            "seq_frames": self.seq_frames, "n_clips": self.n_clips, "lr0": self.lr0,
            "beta1": self.beta1, "beta2": self.beta2, "eps_adam": self.eps_adam,
            "eta_min": self.eta_min, "charbonnier_eps": self.charbonnier_eps,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.beta1 >= 1.0 or self.beta2 >= 1.0:
            raise ValueError("betas must be < 1")


class TrainingDiverged(RuntimeError):
    """Loss left the reals; carries the loss log up to the failure."""

    def __init__(self, iteration: int, log):
        super().__init__(f"loss became non-finite at iteration {iteration}")
        self.iteration = iteration
        self.log = tuple(log)


@dataclass(frozen=True)
class TrainResult:
    params: NetParams
    log: tuple  # rows of (iteration, lr, loss)
    basis: BasisSet | None


# ---------------------------------------------------------------------------
# loss and optimizer


def charbonnier_loss(sr_frames, gt_frames, eps: float = 1e-8) -> Scalar:
    """Mean over frames of sqrt(sum of squared differences + eps); at sr = gt
    this is exactly sqrt(eps) and it is differentiable everywhere."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if len(sr_frames) != len(gt_frames):
        raise ValueError(f"{len(sr_frames)} outputs vs {len(gt_frames)} targets")
    if not sr_frames:
        raise ValueError("empty frame lists")
    terms = [charbonnier_term(sr, gt, eps) for sr, gt in zip(sr_frames, gt_frames)]
    return scalar_mean(terms)


class AdamState:
    """First/second moment estimates per parameter set, plus the step count."""

    def __init__(self):
        self.step = 0
        self.slots: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = {}

    def slot(self, name: str, p: ConvParams):
        if name not in self.slots:
            self.slots[name] = (
                np.zeros_like(p.weight), np.zeros_like(p.weight),
                np.zeros_like(p.bias), np.zeros_like(p.bias),
            )
        return self.slots[name]


def _adam_update(x, g, m, v, lr, beta1, beta2, eps, step):
    m[...] = beta1 * m + (1.0 - beta1) * g
    v[...] = beta2 * v + (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    return x - lr * m_hat / (np.sqrt(v_hat) + eps)


def adam_step(
    named_params: list,
    grads,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps_adam: float = 1e-8,
) -> list:
    """One bias-corrected Adam update over (name, ConvParams) pairs. Returns
    the updated pairs; non-trainable entries pass through untouched (same
    object, no moment slots)."""
    state.step += 1
    out = []
    for name, p in named_params:
        if not p.trainable:
            out.append((name, p))
            continue
        got = grads.wrt_params(p)
        gw, gb = got if got is not None else (np.zeros_like(p.weight), np.zeros_like(p.bias))
        m_w, v_w, m_b, v_b = state.slot(name, p)
        new_w = _adam_update(p.weight, gw.astype(np.float64), m_w, v_w,
                             lr, beta1, beta2, eps_adam, state.step)
        new_b = _adam_update(p.bias, gb.astype(np.float64), m_b, v_b,
                             lr, beta1, beta2, eps_adam, state.step)
        out.append((name, ConvParams(new_w, new_b, trainable=True)))
    return out


def cosine_anneal(lr0: float, step: int, total: int, eta_min: float = 1e-7) -> float:
    """eta_min + (lr0 - eta_min) * (1 + cos(pi * step / total)) / 2."""
    if total <= 0:
        raise ValueError("total steps must be positive")
    if not 0 <= step <= total:
        raise ValueError(f"step {step} outside [0, {total}]")
    return eta_min + 0.5 * (lr0 - eta_min) * (1.0 + np.cos(np.pi * step / total))


# ---------------------------------------------------------------------------
# prior construction per ablation mode


def build_prior(mode: str, bank: KernelBank | None, m: int, seed: int) -> BasisSet | None:
    """Cluster the teacher bank and extract significance-weighted bases; the
    mode selects only the clustering metric."""
    if mode == "no-graft":
        return None
    if mode not in MODE_CLUSTERING:
        raise ValueError(f"mode must be one of {_MODES}, got {mode!r}")
    if bank is None:
        raise ValueError("grafted modes need a teacher kernel bank")
    centroids = MODE_CLUSTERING[mode](bank, m, seed=seed)
    return pca_centroids(centroids)


# ---------------------------------------------------------------------------
# frame conversion and augmentation


def frame_to_tensor(frame: np.ndarray, dtype=np.float32) -> Tensor4:
    """(H, W, 3) in [0, 1] -> (1, 3, H, W)."""
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ValueError(f"frame must be (H, W, 3), got {frame.shape}")
    return Tensor4(np.ascontiguousarray(frame.transpose(2, 0, 1)[None]).astype(dtype))


def tensor_to_frame(t: Tensor4) -> np.ndarray:
    """(1, 3, H, W) -> (H, W, 3), clipped to [0, 1] for metric evaluation."""
    if t.dims[0] != 1 or t.dims[1] != 3:
        raise ValueError(f"expected (1, 3, H, W), got {t.dims}")
    return np.clip(t.data[0].transpose(1, 2, 0).astype(np.float64), 0.0, 1.0)


def _augment_frame(frame: np.ndarray, flip_y: bool, flip_x: bool, transpose: bool) -> np.ndarray:
    out = frame
    if flip_y:
        out = out[::-1]
    if flip_x:
        out = out[:, ::-1]
    if transpose:
        out = out.transpose(1, 0, 2)
    return np.ascontiguousarray(out)


def _augment_flow(dx: float, dy: float, flip_y: bool, flip_x: bool, transpose: bool):
    if flip_y:
        dy = -dy
    if flip_x:
        dx = -dx
    if transpose:
        dx, dy = dy, dx
    return dx, dy


def _sample_example(clip: SynthClip, scale: int, patch: int, rng, dtype):
    """Random crop plus random dihedral transform of one clip; flows follow
    the same transform."""
    lr_h, lr_w, _ = clip.lr_frames[0].shape
    y0 = int(rng.integers(0, lr_h - patch + 1))
    x0 = int(rng.integers(0, lr_w - patch + 1))
    flip_y, flip_x, transpose = (bool(v) for v in rng.integers(0, 2, size=3))
    lr, hr, flows = [], [], []
    for t in range(len(clip.lr_frames)):
        lr_crop = clip.lr_frames[t][y0 : y0 + patch, x0 : x0 + patch]
        r = scale
        hr_crop = clip.hr_frames[t][r * y0 : r * (y0 + patch), r * x0 : r * (x0 + patch)]
        lr.append(frame_to_tensor(_augment_frame(lr_crop, flip_y, flip_x, transpose), dtype))
        hr.append(frame_to_tensor(_augment_frame(hr_crop, flip_y, flip_x, transpose), dtype))
        flows.append(_augment_flow(*clip.flows[t], flip_y, flip_x, transpose))
    return lr, hr, flows


# ---------------------------------------------------------------------------
# the loop


# texture band in low-resolution pixels: waves sit just above the Nyquist
# wavelength of 2, where plain interpolation visibly undershoots
_MIN_WAVELENGTH = 2.2
_MAX_WAVELENGTH = 3.5


def _train_synth_config(net_config: NetConfig, train_config: TrainConfig) -> SynthConfig:
    # clips are generated larger than the patch so crops have room
    return SynthConfig(
        lr_height=train_config.patch + 8,
        lr_width=train_config.patch + 8,
        n_frames=train_config.seq_frames,
        scale=net_config.scale,
        drift_max=2,
        min_wavelength_lr=_MIN_WAVELENGTH,
        max_wavelength_lr=_MAX_WAVELENGTH,
    )


def held_out_clips(net_config: NetConfig, n_clips: int = 4, n_frames: int = 10,
                   lr_size: int = 32, seed: int = 9000) -> list:
    """Evaluation clips drawn from the same texture family as training."""
    cfg = SynthConfig(
        lr_height=lr_size, lr_width=lr_size, n_frames=n_frames,
        scale=net_config.scale, drift_max=2,
        min_wavelength_lr=_MIN_WAVELENGTH, max_wavelength_lr=_MAX_WAVELENGTH,
    )
    return synth_dataset(cfg, n_clips, seed=seed)


def train_loop(
    net_config: NetConfig,
    train_config: TrainConfig,
    bank: KernelBank | None = None,
    basis: BasisSet | None = None,
    clips: list | None = None,
    log_hook=None,
) -> TrainResult:
    """Train a fresh network; deterministic under the config seeds. An
    explicit basis or clip list overrides the built-in synthetic ones."""
    mode = train_config.mode
    if mode == "no-graft":
        net_config = replace(net_config, grafts_per_block=0)
        basis = None
    elif basis is None:
        if bank is None:
            bank = synthetic_teacher_bank(240, seed=net_config.seed)
        basis = build_prior(mode, bank, net_config.m_clusters, net_config.seed)

    params = init_net_params(net_config, basis)
    named = params.all_conv_params()
    fixed_before = {
        name: p.weight.tobytes() for name, p in named if not p.trainable
    }

    if clips is None:
        clips = synth_dataset(
            _train_synth_config(net_config, train_config),
            train_config.n_clips,
            seed=train_config.seed,
        )
    for clip in clips:
        lr_h, lr_w, _ = clip.lr_frames[0].shape
        if lr_h < train_config.patch or lr_w < train_config.patch:
            raise ValueError("clips are smaller than the training patch")

    rng = np.random.default_rng(train_config.seed + 1)
    state = AdamState()
    dtype = net_config.dtype
    log = []
    for it in range(train_config.iterations):
        lr_now = cosine_anneal(
            train_config.lr0, it, train_config.iterations, train_config.eta_min
        )
        try:
            with Tape() as tape:
                losses = []
                for _ in range(train_config.batch):
                    clip = clips[int(rng.integers(0, len(clips)))]
                    lr_frames, hr_frames, flows = _sample_example(
                        clip, net_config.scale, train_config.patch, rng, dtype
                    )
                    outs = run_sequence(params, lr_frames, provider=LookupFlow(flows))
                    losses.append(
                        charbonnier_loss(outs, hr_frames, train_config.charbonnier_eps)
                    )
                loss = scalar_mean(losses)
                loss_val = float(loss.value)
        except ValueError as exc:
            # finite-validation inside the forward pass is the divergence signal
            if "NaN or Inf" in str(exc):
                raise TrainingDiverged(it, log) from exc
            raise
        grads = backward(tape, loss)
        updated = dict(
            adam_step(
                named, grads, state, lr_now,
                train_config.beta1, train_config.beta2, train_config.eps_adam,
            )
        )
        params = _rebuild(params, updated)
        named = params.all_conv_params()
        log.append((it, lr_now, loss_val))
        if log_hook is not None:
            log_hook(it, lr_now, loss_val)

    for name, p in named:
        if not p.trainable and p.weight.tobytes() != fixed_before[name]:
            raise AssertionError(f"fixed parameter {name} changed during training")
    return TrainResult(params=params, log=tuple(log), basis=basis)


def _rebuild(params: NetParams, updated: dict) -> NetParams:
    """New NetParams with each trainable conv replaced by its updated copy."""
    from .kernel_prior import GraftSpec
    from .reparam import BGBParams

    blocks = []
    for i, blk in enumerate(params.blocks):
        grafts = []
        for j, g in enumerate(blk.grafts):
            grafts.append(
                GraftSpec(
                    sampled_indices=g.sampled_indices,
                    fixed_3x3=g.fixed_3x3,
                    mix_1x1=updated[f"bgb{i}.graft{j}.mix"],
                )
            )
        blocks.append(
            BGBParams(
                main_branch=updated[f"bgb{i}.main"],
                grafts=tuple(grafts),
                identity=blk.identity,
            )
        )
    return NetParams(
        config=params.config,
        form="train",
        head=updated["head"],
        fusion=updated["fusion"],
        blocks=tuple(blocks),
        up=updated["up"],
        out=updated["out"],
    )


# ---------------------------------------------------------------------------
# evaluation


def evaluate_on_clips(params: NetParams, clips: list, space: str = "RGB") -> dict:
    """Mean PSNR/SSIM of the network and of bicubic upsampling over held-out
    clips, replaying each clip's ground-truth flow table."""
    if not clips:
        raise ValueError("no evaluation clips")
    dtype = params.config.dtype
    r = params.config.scale
    net_psnr, net_ssim, cubic_psnr, cubic_ssim = [], [], [], []
    for clip in clips:
        lr_frames = [frame_to_tensor(f, dtype) for f in clip.lr_frames]
        outs = run_sequence(params, lr_frames, provider=LookupFlow(clip.flows))
        for t, gt in enumerate(clip.hr_frames):
            sr = tensor_to_frame(outs[t])
            up = np.clip(bicubic_up(clip.lr_frames[t], r), 0.0, 1.0)
            net_psnr.append(psnr(sr, gt, space))
            cubic_psnr.append(psnr(up, gt, space))
            net_ssim.append(ssim(sr, gt))
            cubic_ssim.append(ssim(up, gt))
    return {
        "psnr": float(np.mean(net_psnr)),
        "ssim": float(np.mean(net_ssim)),
        "bicubic_psnr": float(np.mean(cubic_psnr)),
        "bicubic_ssim": float(np.mean(cubic_ssim)),
        "psnr_gain_over_bicubic": float(np.mean(net_psnr) - np.mean(cubic_psnr)),
        "space": space,
    }
