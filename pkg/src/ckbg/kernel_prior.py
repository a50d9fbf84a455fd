"""Kernel-prior learning: cluster a teacher's kernel slices in Wasserstein
space, extract spectral bases from the centroid matrix, and build graft
branches (a trainable 1x1 mixer feeding a fixed 3x3 conv of sampled bases).

Clustering treats each 2-D kernel slice as a signed measure on its own cell
grid (cell centers at integer offsets from the kernel center). Assignment uses
the signed Wasserstein distance; centroid updates compute per-lobe entropic
barycenters plus mean lobe masses, and a guard keeps the previous centroid
whenever the candidate would raise that cluster's cost, so the clustering
objective is non-increasing on every iteration by construction.

An alternative Euclidean mode (plain squared distance on raw kernel vectors,
arithmetic-mean updates) exists for ablation comparisons and shares the same
Lloyd loop; the two modes differ only in their distance and update rules.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass

import numpy as np

from .tensor import ConvParams
from .transport import (
    GridMeasure,
    SignedGridMeasure,
    barycenter,
    signed_w2_batch,
)

__all__ = [
    "KernelSlice",
    "KernelBank",
    "Centroids",
    "BasisSet",
    "GraftSpec",
    "save_kernel_bank",
    "load_kernel_bank",
    "kernel_to_measure",
    "measure_to_kernel",
    "wasserstein_kmeans",
    "euclidean_kmeans",
    "pca_centroids",
    "sample_bases",
    "build_graft",
    "synthetic_teacher_bank",
    "planted_cluster_bank",
]

log = logging.getLogger(__name__)

_BANK_MAGIC = b"CKBG"


@dataclass(frozen=True)
class KernelSlice:
    """One 2-D spatial slice of a conv filter and where it came from."""

    values: np.ndarray
    provenance: tuple[str, int, int] = ("unknown", 0, 0)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] % 2 == 0:
            raise ValueError(f"kernel slice must be odd square, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("kernel slice contains NaN or Inf")
        v = np.ascontiguousarray(v)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "provenance", tuple(self.provenance))

    @property
    def ksize(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class KernelBank:
    """All slices extracted from one teacher model."""

    kernels: tuple[KernelSlice, ...]
    teacher_id: str = "unknown"

    def __post_init__(self):
        ks = tuple(self.kernels)
        if not ks:
            raise ValueError("kernel bank is empty")
        sizes = {k.ksize for k in ks}
        if len(sizes) != 1:
            raise ValueError(f"bank mixes kernel sizes {sorted(sizes)}")
        object.__setattr__(self, "kernels", ks)

    @property
    def count(self) -> int:
        return len(self.kernels)

    @property
    def ksize(self) -> int:
        return self.kernels[0].ksize

    def as_array(self) -> np.ndarray:
        return np.stack([k.values for k in self.kernels])


def save_kernel_bank(path, bank: KernelBank) -> None:
    """Bank file: magic "CKBG", u32 LE version=1, u32 count, u32 K, then
    count*K*K f32 LE row-major values, then u32 metadata-length + UTF-8 JSON."""
    k = bank.ksize
    meta = {
        "teacher_id": bank.teacher_id,
        "provenance": [list(s.provenance) for s in bank.kernels],
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_BANK_MAGIC)
        fh.write(struct.pack("<3I", 1, bank.count, k))
        fh.write(bank.as_array().astype("<f4").tobytes())
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)


def load_kernel_bank(path) -> KernelBank:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _BANK_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {_BANK_MAGIC!r}")
        version, count, k = struct.unpack("<3I", fh.read(12))
        if version != 1:
            raise ValueError(f"unsupported bank version {version}")
        if count == 0:
            raise ValueError("bank header declares zero kernels")
        payload = fh.read(4 * count * k * k)
        if len(payload) != 4 * count * k * k:
            raise ValueError("truncated bank payload")
        values = np.frombuffer(payload, dtype="<f4").reshape(count, k, k).astype(np.float64)
        meta_len_raw = fh.read(4)
        meta = {}
        if len(meta_len_raw) == 4:
            (meta_len,) = struct.unpack("<I", meta_len_raw)
            blob = fh.read(meta_len)
            if len(blob) != meta_len:
                raise ValueError("truncated bank metadata")
            meta = json.loads(blob.decode("utf-8"))
    prov = meta.get("provenance")
    if prov is not None and len(prov) != count:
        raise ValueError("metadata provenance count does not match header count")
    slices = []
    for i in range(count):
        p = tuple(prov[i]) if prov else ("unknown", i, 0)
        slices.append(KernelSlice(values[i], (str(p[0]), int(p[1]), int(p[2]))))
    return KernelBank(tuple(slices), teacher_id=str(meta.get("teacher_id", "unknown")))


def _grid_coords(k: int) -> np.ndarray:
    """Cell-center coordinates (row offset, col offset) of a K x K kernel,
    unit spacing, origin at the kernel center."""
    r = k // 2
    offs = np.arange(-r, r + 1, dtype=np.float64)
    yy, xx = np.meshgrid(offs, offs, indexing="ij")
    return np.stack([yy.ravel(), xx.ravel()], axis=1)


def kernel_to_measure(slice_: KernelSlice | np.ndarray) -> SignedGridMeasure:
    """View a kernel as a signed measure: positive and negative entries become
    separately normalized lobes on the cell grid, with their total masses."""
    v = slice_.values if isinstance(slice_, KernelSlice) else np.asarray(slice_, dtype=np.float64)
    k = v.shape[0]
    coords = _grid_coords(k)
    flat = v.ravel()
    pos_mask = flat > 0
    neg_mask = flat < 0
    pos_mass = float(flat[pos_mask].sum())
    neg_mass = float(-flat[neg_mask].sum())
    if pos_mass == 0.0 and neg_mass == 0.0:
        raise ValueError("all-zero kernel has no measure representation")
    pos = GridMeasure(coords[pos_mask], flat[pos_mask] / pos_mass) if pos_mass > 0 else None
    neg = GridMeasure(coords[neg_mask], -flat[neg_mask] / neg_mass) if neg_mass > 0 else None
    return SignedGridMeasure(pos, neg, pos_mass, neg_mass)


def measure_to_kernel(m: SignedGridMeasure, k: int) -> np.ndarray:
    """Inverse of ``kernel_to_measure`` for measures supported on the K x K
    cell grid: pos lobe times its mass minus neg lobe times its mass."""
    coords = _grid_coords(k)
    lookup = {tuple(c): i for i, c in enumerate(coords)}
    out = np.zeros(k * k)
    for part, sign, mass in ((m.positive_part, 1.0, m.pos_mass), (m.negative_part, -1.0, m.neg_mass)):
        if part is None:
            continue
        for pt, w in zip(part.support, part.mass):
            idx = lookup.get(tuple(pt))
            if idx is None:
                raise ValueError(f"support point {pt} is not a cell of a {k}x{k} kernel grid")
            out[idx] += sign * mass * w
    return out.reshape(k, k)


@dataclass(frozen=True)
class Centroids:
    """Clustering result: dense centroid kernels, the partition labels, and
    the per-iteration objective trace."""

    centers: np.ndarray
    labels: np.ndarray
    history: tuple[float, ...]
    metric: str
    degenerate: bool = False
    skipped: tuple[int, ...] = ()

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=np.float64)
        if c.ndim != 3 or c.shape[1] != c.shape[2]:
            raise ValueError(f"centers must be (M, K, K), got {c.shape}")
        lab = np.asarray(self.labels, dtype=np.int64)
        active = lab[lab >= 0]
        if active.size and (active.max() >= len(c)):
            raise ValueError("label out of centroid range")
        hist = tuple(float(h) for h in self.history)
        for prev, cur in zip(hist, hist[1:]):
            if cur > prev + 1e-9:
                raise ValueError(f"objective increased: {prev} -> {cur}")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "history", hist)
        object.__setattr__(self, "skipped", tuple(int(i) for i in self.skipped))

    @property
    def n_clusters(self) -> int:
        return len(self.centers)

    def partition(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.labels == m) for m in range(self.n_clusters)]


class _WassersteinRules:
    """Distance and centroid-update rules for the signed-measure metric."""

    name = "wasserstein"

    def __init__(
        self,
        ksize: int,
        lambda_mass: float,
        bary_epsilon: float,
        bary_max_iter: int,
        bary_tol: float,
    ):
        self.ksize = ksize
        self.grid = _grid_coords(ksize)
        self.lambda_mass = lambda_mass
        self.bary_epsilon = bary_epsilon
        self.bary_max_iter = bary_max_iter
        self.bary_tol = bary_tol

    def prepare(self, kernels: np.ndarray):
        return [kernel_to_measure(kv) for kv in kernels]

    @staticmethod
    def subset(items, idx: np.ndarray):
        return [items[i] for i in idx]

    def distances(self, items, center_kernels: np.ndarray) -> np.ndarray:
        centers = [kernel_to_measure(c) for c in center_kernels]
        pairs = [(item, c) for item in items for c in centers]
        d = signed_w2_batch(pairs, lambda_mass=self.lambda_mass)
        return d.reshape(len(items), len(centers))

    def update(self, items, member_idx: np.ndarray, old_center: np.ndarray) -> np.ndarray:
        members = [items[i] for i in member_idx]
        pos_mass = float(np.mean([m.pos_mass for m in members]))
        neg_mass = float(np.mean([m.neg_mass for m in members]))
        parts: dict[str, GridMeasure | None] = {"pos": None, "neg": None}
        for key, mass, sel in (
            ("pos", pos_mass, [m.positive_part for m in members if m.positive_part is not None]),
            ("neg", neg_mass, [m.negative_part for m in members if m.negative_part is not None]),
        ):
            if mass > 0 and sel:
                weights = np.full(len(sel), 1.0 / len(sel))
                parts[key] = barycenter(
                    sel,
                    weights,
                    self.grid,
                    epsilon=self.bary_epsilon,
                    max_iter=self.bary_max_iter,
                    tol=self.bary_tol,
                )
        if parts["pos"] is None and parts["neg"] is None:
            return old_center
        cand = SignedGridMeasure(
            parts["pos"],
            parts["neg"],
            pos_mass if parts["pos"] is not None else 0.0,
            neg_mass if parts["neg"] is not None else 0.0,
        )
        return measure_to_kernel(cand, self.ksize)


class _EuclideanRules:
    """Plain k-means rules on raw kernel vectors (ablation mode)."""

    name = "euclidean"

    def __init__(self, ksize: int):
        self.ksize = ksize

    def prepare(self, kernels: np.ndarray):
        return kernels.reshape(len(kernels), -1)

    @staticmethod
    def subset(items, idx: np.ndarray):
        return items[idx]

    def distances(self, items, center_kernels: np.ndarray) -> np.ndarray:
        flat = center_kernels.reshape(len(center_kernels), -1)
        diff = items[:, None, :] - flat[None, :, :]
        return np.einsum("nmk,nmk->nm", diff, diff)

    def update(self, items, member_idx: np.ndarray, old_center: np.ndarray) -> np.ndarray:
        return items[member_idx].mean(axis=0).reshape(self.ksize, self.ksize)


def _kmeans_pp_seed(rules, items, kernels: np.ndarray, m: int, rng) -> tuple[np.ndarray, bool]:
    """Greedy k-means++ seeding under the clustering metric: each step samples
    several candidates from the squared-distance distribution and keeps the one
    that lowers the total potential most. Returns the chosen kernels and a
    degeneracy flag (fewer than m distinct seeds available)."""
    n = len(kernels)
    n_trials = 2 + int(np.log(max(m, 2)))
    first = int(rng.integers(n))
    chosen = [first]
    d_min = np.clip(rules.distances(items, kernels[[first]])[:, 0], 0.0, None)
    while len(chosen) < m:
        total = d_min.sum()
        if total <= 1e-12:
            return kernels[chosen].copy(), True
        cands = rng.choice(n, size=n_trials, p=d_min / total)
        d_cand = np.clip(rules.distances(items, kernels[cands]), 0.0, None)
        potentials = np.minimum(d_min[:, None], d_cand).sum(axis=0)
        best = int(np.argmin(potentials))
        chosen.append(int(cands[best]))
        d_min = np.minimum(d_min, d_cand[:, best])
    return kernels[chosen].copy(), False


def _lloyd(bank: KernelBank, m: int, seed: int, max_iter: int, rules) -> Centroids:
    if m <= 0:
        raise ValueError("cluster count must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    values = bank.as_array()
    nonzero = np.any(values.reshape(bank.count, -1) != 0.0, axis=1)
    keep = np.flatnonzero(nonzero)
    skipped = tuple(int(i) for i in np.flatnonzero(~nonzero))
    if skipped:
        log.info("skipping %d all-zero kernels from clustering", len(skipped))
    if len(keep) == 0:
        raise ValueError("bank contains only all-zero kernels")
    if m > len(keep):
        raise ValueError(f"cluster count {m} exceeds usable bank size {len(keep)}")
    kernels = values[keep]
    rng = np.random.default_rng(seed)
    items = rules.prepare(kernels)

    centers, degenerate = _kmeans_pp_seed(rules, items, kernels, m, rng)
    m_eff = len(centers)
    labels = np.full(bank.count, -1, dtype=np.int64)
    history: list[float] = []
    assign = None

    for _ in range(max_iter):
        d = rules.distances(items, centers)
        new_assign = d.argmin(axis=1)
        history.append(float(d[np.arange(len(items)), new_assign].sum()))
        if assign is not None and np.array_equal(new_assign, assign):
            assign = new_assign
            break
        assign = new_assign
        for c in range(m_eff):
            member_idx = np.flatnonzero(assign == c)
            if len(member_idx) == 0:
                continue
            candidate = rules.update(items, member_idx, centers[c])
            if np.array_equal(candidate, centers[c]):
                continue
            # keep the old centroid unless the candidate lowers (or ties) the
            # cluster cost; this makes the objective non-increasing even though
            # the entropic barycenter is only an approximate minimizer
            members = rules.subset(items, member_idx)
            old_cost = float(rules.distances(members, centers[[c]]).sum())
            new_cost = float(rules.distances(members, candidate[None]).sum())
            if new_cost <= old_cost:
                centers[c] = candidate

    labels[keep] = assign
    return Centroids(
        centers=centers,
        labels=labels,
        history=tuple(history),
        metric=rules.name,
        degenerate=degenerate,
        skipped=skipped,
    )


def wasserstein_kmeans(
    bank: KernelBank,
    m: int,
    seed: int = 0,
    max_iter: int = 30,
    lambda_mass: float = 1.0,
    bary_epsilon: float = 1e-3,
    bary_max_iter: int = 1000,
    bary_tol: float = 3e-5,
) -> Centroids:
    """Lloyd clustering of kernel slices under the signed Wasserstein metric,
    centroid updates by per-lobe entropic barycenter (guarded so the objective
    never increases)."""
    rules = _WassersteinRules(bank.ksize, lambda_mass, bary_epsilon, bary_max_iter, bary_tol)
    return _lloyd(bank, m, seed, max_iter, rules)


def euclidean_kmeans(bank: KernelBank, m: int, seed: int = 0, max_iter: int = 30) -> Centroids:
    """Plain k-means on raw kernel vectors; the ablation counterpart that
    differs from ``wasserstein_kmeans`` only in distance and update rules."""
    return _lloyd(bank, m, seed, max_iter, _EuclideanRules(bank.ksize))


@dataclass(frozen=True)
class BasisSet:
    """Spectral bases of the centroid matrix with significance weights.

    Columns of the centroid matrix C (K^2 x M) are flattened centroids; the
    eigenvectors of C C^T (descending eigenvalues, near-zero ones dropped)
    become K x K bases and the normalized eigenvalues become the sampling
    distribution over bases."""

    bases: np.ndarray
    singulars: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bases, dtype=np.float64)
        s = np.asarray(self.singulars, dtype=np.float64)
        p = np.asarray(self.probs, dtype=np.float64)
        if b.ndim != 3 or b.shape[1] != b.shape[2]:
            raise ValueError(f"bases must be (R, K, K), got {b.shape}")
        if len(s) != len(b) or len(p) != len(b):
            raise ValueError("singulars/probs length must match basis count")
        if len(b) == 0:
            raise ValueError("empty basis set")
        if s.min() < 0 or np.any(np.diff(s) > 1e-12):
            raise ValueError("singular values must be nonnegative and descending")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"probs sum to {p.sum()}, expected 1")
        flat = b.reshape(len(b), -1)
        gram = flat @ flat.T
        if np.abs(gram - np.eye(len(b))).max() > 1e-6:
            raise ValueError("bases are not orthonormal")
        object.__setattr__(self, "bases", b)
        object.__setattr__(self, "singulars", s)
        object.__setattr__(self, "probs", p)

    @property
    def count(self) -> int:
        return len(self.bases)

    @property
    def ksize(self) -> int:
        return self.bases.shape[1]


def pca_centroids(centroids: Centroids, drop_tol: float = 1e-10) -> BasisSet:
    """Eigen-decompose C C^T (C = centroid matrix, no mean centering) into
    bases, eigenvalues, and significance probabilities."""
    k = centroids.centers.shape[1]
    c = centroids.centers.reshape(centroids.n_clusters, k * k).T
    cct = c @ c.T
    vals, vecs = np.linalg.eigh(cct)
    order = np.argsort(vals)[::-1]
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order]
    if vals[0] <= 0:
        raise ValueError("centroid matrix is zero; no bases to extract")
    kept = vals >= drop_tol * vals[0]
    vals = vals[kept]
    vecs = vecs[:, kept]
    probs = vals / vals.sum()
    return BasisSet(
        bases=np.ascontiguousarray(vecs.T.reshape(-1, k, k)),
        singulars=vals,
        probs=probs,
    )


def sample_bases(basis: BasisSet, slots: int, rng) -> np.ndarray:
    """Draw one basis index per slot, i.i.d. from the significance weights."""
    if basis.count == 0:
        raise ValueError("empty basis set")
    if slots < 0:
        raise ValueError("negative slot count")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    return rng.choice(basis.count, size=slots, p=basis.probs)


@dataclass(frozen=True)
class GraftSpec:
    """One graft branch: trainable 1x1 mixer into a fixed 3x3 conv whose
    filters are sampled bases."""

    sampled_indices: np.ndarray
    fixed_3x3: ConvParams
    mix_1x1: ConvParams

    def __post_init__(self):
        idx = np.asarray(self.sampled_indices, dtype=np.int64)
        if idx.ndim != 2:
            raise ValueError("sampled_indices must be (C_out, D)")
        if self.fixed_3x3.trainable:
            raise ValueError("fixed conv must have trainable=False")
        if not self.mix_1x1.trainable:
            raise ValueError("mixer conv must be trainable")
        if self.mix_1x1.ksize != 1:
            raise ValueError("mixer must be 1x1")
        c_out, d = idx.shape
        if self.fixed_3x3.weight.shape[:2] != (c_out, d):
            raise ValueError("fixed conv shape does not match sampled index grid")
        if self.mix_1x1.out_channels != d:
            raise ValueError("mixer output width must equal inner width D")
        object.__setattr__(self, "sampled_indices", idx)

    @property
    def inner_width(self) -> int:
        return self.sampled_indices.shape[1]


def build_graft(basis: BasisSet, c_in: int, c_out: int, d: int, rng) -> GraftSpec:
    """Construct a graft: sample a basis per (output, inner) slot into the
    fixed conv; initialize the mixer zero-mean uniform with gain 1/sqrt(D).

    The merged kernel for any (output, input) channel pair is
    sum_d mix[d, input] * bases[idx[output, d]], which lies in the span of
    that output's sampled bases; this is validated on construction.
    """
    if d < 1:
        raise ValueError("inner width must be >= 1")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    idx = sample_bases(basis, c_out * d, rng).reshape(c_out, d)
    k = basis.ksize
    fixed_w = basis.bases[idx]  # (c_out, d, k, k)
    fixed = ConvParams(fixed_w, np.zeros(c_out), trainable=False)
    bound = 1.0 / np.sqrt(d)
    mix_w = rng.uniform(-bound, bound, size=(d, c_in, 1, 1))
    mix = ConvParams(mix_w, np.zeros(d), trainable=True)

    # span check: merged (o, i) kernel must be a combination of slot-o bases
    merged = np.einsum("odxy,di->oixy", fixed_w, mix_w[:, :, 0, 0])
    for o in range(c_out):
        span = basis.bases[np.unique(idx[o])].reshape(-1, k * k).T
        target = merged[o].reshape(c_in, k * k).T
        coef, *_ = np.linalg.lstsq(span, target, rcond=None)
        resid = np.abs(span @ coef - target).max()
        scale = max(np.abs(target).max(), 1e-12)
        if resid / scale > 1e-8:
            raise AssertionError("merged graft kernel escaped the sampled-basis span")
    if fixed.weight.tobytes() != basis.bases[idx].astype(fixed.weight.dtype).tobytes():
        raise AssertionError("fixed conv is not byte-identical to the sampled bases")
    return GraftSpec(sampled_indices=idx, fixed_3x3=fixed, mix_1x1=mix)


def synthetic_teacher_bank(
    count: int = 300, ksize: int = 3, seed: int = 0, teacher_id: str = "synthetic-teacher"
) -> KernelBank:
    """A stand-in teacher bank: mixture of oriented-edge, center-surround, and
    blob kernels with noise, loosely shaped like trained SR-model filters."""
    rng = np.random.default_rng(seed)
    r = ksize // 2
    offs = np.arange(-r, r + 1, dtype=np.float64)
    yy, xx = np.meshgrid(offs, offs, indexing="ij")
    slices = []
    for i in range(count):
        family = i % 3
        if family == 0:  # oriented edge
            theta = rng.uniform(0, np.pi)
            proj = np.cos(theta) * xx + np.sin(theta) * yy
            base = np.tanh(2.0 * proj)
        elif family == 1:  # center-surround
            rad2 = xx**2 + yy**2
            base = np.exp(-rad2 / 1.2) - 0.45 * np.exp(-rad2 / 4.0)
        else:  # gaussian blob, random offset
            cy, cx = rng.uniform(-0.8, 0.8, size=2)
            base = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / 1.5)
        noisy = base * rng.uniform(0.5, 1.5) + rng.normal(0, 0.05, size=base.shape)
        slices.append(KernelSlice(noisy, ("synthetic", i // 64, i % 64)))
    return KernelBank(tuple(slices), teacher_id=teacher_id)


def planted_cluster_bank(
    per_cluster: int = 20, seed: int = 0, jitter: float = 0.02
) -> tuple[KernelBank, np.ndarray]:
    """Three well-separated families of 3x3 bumps with ground-truth labels:
    mass parked on the left column, center cell, and right column."""
    rng = np.random.default_rng(seed)
    templates = [
        np.array([[0.5, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 0.0, 0.0]]),
        np.array([[0.0, 0.2, 0.0], [0.2, 1.0, 0.2], [0.0, 0.2, 0.0]]),
        np.array([[0.0, 0.0, 0.5], [0.0, 0.0, 1.0], [0.0, 0.0, 0.5]]),
    ]
    slices = []
    labels = []
    for label, tmpl in enumerate(templates):
        for j in range(per_cluster):
            noise = rng.uniform(-jitter, jitter, size=(3, 3))
            vals = np.clip(tmpl + noise * (tmpl > 0), 0.0, None)
            slices.append(KernelSlice(vals, ("planted", label, j)))
            labels.append(label)
    order = rng.permutation(len(slices))
    slices = [slices[i] for i in order]
    labels = np.asarray(labels)[order]
    return KernelBank(tuple(slices), teacher_id="planted"), labels
