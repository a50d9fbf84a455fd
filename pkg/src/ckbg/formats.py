"""File formats: the model container, PPM frames, and JSON artifacts for
clustering results and basis sets.

Every writer here is deterministic: identical inputs produce byte-identical
files (no timestamps, sorted keys, fixed record order), which is what makes
re-running a pipeline under the same seed reproducible at the artifact level.

Model container ("CKBM"): magic, u32 LE version=1, u32 LE config length and
UTF-8 JSON config, then named tensor records sorted by name, each as u32 name
length, UTF-8 name, u32 ndims, u32 dims, f32 LE row-major payload.

Frames: binary PPM (P6, maxval 255). Values are float in [0, 1] in memory and
are rounded to bytes on write.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .kernel_prior import BasisSet, Centroids

__all__ = [
    "save_model",
    "load_model",
    "write_ppm",
    "read_ppm",
    "frame_to_ppm_bytes",
    "save_centroids_json",
    "load_centroids_json",
    "save_basis_json",
    "load_basis_json",
]

_MODEL_MAGIC = b"CKBM"


def save_model(path, config: dict, tensors: dict[str, np.ndarray]) -> None:
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC)
        fh.write(struct.pack("<2I", 1, len(blob)))
        fh.write(blob)
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name], dtype="<f4")
            enc = name.encode("utf-8")
            fh.write(struct.pack("<I", len(enc)))
            fh.write(enc)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_model(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MODEL_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {_MODEL_MAGIC!r}")
        version, cfg_len = struct.unpack("<2I", fh.read(8))
        if version != 1:
            raise ValueError(f"unsupported model version {version}")
        config = json.loads(fh.read(cfg_len).decode("utf-8"))
        tensors: dict[str, np.ndarray] = {}
        while True:
            head = fh.read(4)
            if not head:
                break
            (name_len,) = struct.unpack("<I", head)
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            dims = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            count = int(np.prod(dims)) if ndim else 1
            payload = fh.read(4 * count)
            if len(payload) != 4 * count:
                raise ValueError(f"truncated tensor record {name!r}")
            tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    return config, tensors


def frame_to_ppm_bytes(frame: np.ndarray) -> bytes:
    """Encode an (H, W, 3) float frame in [0, 1] as binary PPM bytes."""
    f = np.asarray(frame, dtype=np.float64)
    if f.ndim != 3 or f.shape[2] != 3:
        raise ValueError(f"frame must be (H, W, 3), got {f.shape}")
    h, w, _ = f.shape
    data = np.clip(np.rint(f * 255.0), 0, 255).astype(np.uint8)
    return b"P6\n%d %d\n255\n" % (w, h) + data.tobytes()


def write_ppm(path, frame: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(frame_to_ppm_bytes(frame))


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM into an (H, W, 3) float array in [0, 1]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(b"P6"):
        raise ValueError("not a binary PPM (P6) file")
    # header = magic, width, height, maxval separated by whitespace/comments
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(raw[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise ValueError(f"unsupported PPM maxval {maxval}")
    payload = raw[pos : pos + 3 * w * h]
    if len(payload) != 3 * w * h:
        raise ValueError("truncated PPM payload")
    img = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
    return img.astype(np.float64) / 255.0


def save_centroids_json(path, centroids: Centroids) -> None:
    doc = {
        "centers": centroids.centers.tolist(),
        "labels": centroids.labels.tolist(),
        "history": list(centroids.history),
        "metric": centroids.metric,
        "degenerate": centroids.degenerate,
        "skipped": list(centroids.skipped),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_centroids_json(path) -> Centroids:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return Centroids(
        centers=np.asarray(doc["centers"], dtype=np.float64),
        labels=np.asarray(doc["labels"], dtype=np.int64),
        history=tuple(doc["history"]),
        metric=doc["metric"],
        degenerate=bool(doc["degenerate"]),
        skipped=tuple(doc["skipped"]),
    )


def save_basis_json(path, basis: BasisSet) -> None:
    doc = {
        "bases": basis.bases.tolist(),
        "singulars": basis.singulars.tolist(),
        "probs": basis.probs.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_basis_json(path) -> BasisSet:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return BasisSet(
        bases=np.asarray(doc["bases"], dtype=np.float64),
        singulars=np.asarray(doc["singulars"], dtype=np.float64),
        probs=np.asarray(doc["probs"], dtype=np.float64),
    )
