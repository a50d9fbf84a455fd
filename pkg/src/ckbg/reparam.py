"""Structural re-parameterization: collapse a multi-branch block (trainable
3x3 main branch + graft branches + optional identity) into one 3x3 convolution
with exactly the same input-output map.

Two merge rules cover everything:

Sequential (1x1 then KxK). For a 1x1 conv F1 (C_mid x C_in) with bias b1
followed by a KxK conv F2 (C_out x C_mid x K x K) with bias b2, the merged
kernel is F'[o, i] = sum_m F2[o, m] * F1[m, i] and the merged bias is
b[o] = b2[o] + sum_m b1[m] * sum_uv F2[o, m, u, v]. The bias rule folds the
constant map that b1 would paint over the padded intermediate canvas through
F2; under same-size zero padding this is exact everywhere, including image
borders, provided the two-step form also treats the intermediate bias that
way (the network's graft branches do: they apply the 1x1 without bias and add
the folded bias term separately).

Parallel. Branches sharing C_in, C_out, and padding sum both kernels and
biases; 1x1 kernels are zero-embedded at the center of a 3x3, the identity
branch is a Dirac kernel.

All merges compute in float64 and cast back to the runtime precision at the
end, which keeps float32 deployments within a 5e-4 output tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel_prior import GraftSpec
from .tensor import ConvParams, Tensor4, add, add_seq_bias, conv2d

__all__ = [
    "BGBParams",
    "merge_sequential",
    "merge_parallel",
    "collapse_bgb",
    "bgb_forward",
    "dirac_kernel",
    "embed_1x1",
]


def dirac_kernel(channels: int, k: int = 3, dtype=np.float64) -> np.ndarray:
    """Identity map as a conv kernel: center tap 1 on the diagonal."""
    w = np.zeros((channels, channels, k, k), dtype=dtype)
    c = k // 2
    for i in range(channels):
        w[i, i, c, c] = 1.0
    return w


def embed_1x1(weight: np.ndarray, k: int = 3) -> np.ndarray:
    """Zero-embed a (C_out, C_in, 1, 1) kernel at the center of a KxK kernel."""
    c_out, c_in, kh, kw = weight.shape
    if (kh, kw) != (1, 1):
        raise ValueError(f"expected a 1x1 kernel, got {kh}x{kw}")
    out = np.zeros((c_out, c_in, k, k), dtype=weight.dtype)
    out[:, :, k // 2, k // 2] = weight[:, :, 0, 0]
    return out


def merge_sequential(f1: ConvParams, f2: ConvParams) -> ConvParams:
    """Merge a 1x1 conv followed by a KxK conv into one KxK conv."""
    if f1.ksize != 1:
        raise ValueError("first conv of a sequential merge must be 1x1")
    if f1.out_channels != f2.in_channels:
        raise ValueError(
            f"channel mismatch: 1x1 outputs {f1.out_channels}, "
            f"{f2.ksize}x{f2.ksize} expects {f2.in_channels}"
        )
    w1 = f1.weight.astype(np.float64)
    b1 = f1.bias.astype(np.float64)
    w2 = f2.weight.astype(np.float64)
    b2 = f2.bias.astype(np.float64)
    merged_w = np.einsum("omuv,mi->oiuv", w2, w1[:, :, 0, 0])
    tap_sums = w2.sum(axis=(2, 3))  # (C_out, C_mid)
    merged_b = b2 + tap_sums @ b1
    dtype = f2.weight.dtype
    return ConvParams(merged_w.astype(dtype), merged_b.astype(dtype), trainable=f2.trainable)


def merge_parallel(branches: list[ConvParams]) -> ConvParams:
    """Sum parallel conv branches into one; mixed 1x1/3x3 sizes allowed."""
    if not branches:
        raise ValueError("no branches to merge")
    k = max(b.ksize for b in branches)
    c_out = branches[0].out_channels
    c_in = branches[0].in_channels
    w = np.zeros((c_out, c_in, k, k), dtype=np.float64)
    b = np.zeros(c_out, dtype=np.float64)
    for br in branches:
        if (br.out_channels, br.in_channels) != (c_out, c_in):
            raise ValueError("parallel branches must share channel counts")
        bw = br.weight.astype(np.float64)
        if br.ksize != k:
            bw = embed_1x1(bw, k)
        w += bw
        b += br.bias.astype(np.float64)
    dtype = branches[0].weight.dtype
    return ConvParams(w.astype(dtype), b.astype(dtype))


@dataclass(frozen=True)
class BGBParams:
    """Train-form block: a trainable 3x3 main branch, graft branches, and an
    optional identity branch, summed."""

    main_branch: ConvParams
    grafts: tuple[GraftSpec, ...] = ()
    identity: bool = True

    def __post_init__(self):
        c_in = self.main_branch.in_channels
        c_out = self.main_branch.out_channels
        if self.main_branch.ksize != 3:
            raise ValueError("main branch must be a 3x3 conv")
        if self.identity and c_in != c_out:
            raise ValueError("identity branch requires C_in = C_out")
        for g in self.grafts:
            if g.mix_1x1.in_channels != c_in or g.fixed_3x3.out_channels != c_out:
                raise ValueError("graft channel counts must match the main branch")
        object.__setattr__(self, "grafts", tuple(self.grafts))

    @property
    def branch_count(self) -> int:
        return 1 + len(self.grafts) + (1 if self.identity else 0)


def collapse_bgb(bgb: BGBParams) -> ConvParams:
    """Deploy form of a block: one 3x3 conv with identical outputs."""
    branches = [bgb.main_branch]
    for g in bgb.grafts:
        branches.append(merge_sequential(g.mix_1x1, g.fixed_3x3))
    if bgb.identity:
        c = bgb.main_branch.out_channels
        dtype = bgb.main_branch.weight.dtype
        branches.append(ConvParams(dirac_kernel(c, 3, dtype), np.zeros(c, dtype=dtype)))
    return merge_parallel(branches)


def bgb_forward(bgb: BGBParams, x: Tensor4) -> Tensor4:
    """Train-form forward pass: sum of all branch outputs.

    Graft branches run the 1x1 mixer without bias, apply the fixed 3x3, then
    add the folded mixer-bias term; this matches the zero-padded canvas
    semantics the sequential merge assumes, so deploy form is exact at image
    borders too. Gradients flow to the main branch and each mixer.
    """
    out = conv2d(x, bgb.main_branch)
    for g in bgb.grafts:
        mixed = conv2d(x, g.mix_1x1, with_bias=False)
        branch = conv2d(mixed, g.fixed_3x3, with_bias=False)
        tap_sums = g.fixed_3x3.weight.sum(axis=(2, 3))
        branch = add_seq_bias(branch, g.mix_1x1, tap_sums)
        out = add(out, branch)
    if bgb.identity:
        out = add(out, x)
    return out
