"""Teacher checkpoint -> kernel-bank exporter.

Reads a pretrained super-resolution model's weight archive (a PyTorch
checkpoint, its usual distribution format, or a plain .npz), selects conv
layers by a name pattern, and writes every 3x3 weight tensor's 2-D spatial
slices to the portable "CKBG" bank file. Values are the checkpoint values
with no transformation beyond the f32 cast the wire format fixes.

Bank wire format (the sole interface to the consumer):
magic "CKBG", u32 LE version=1, u32 count, u32 K, count*K*K f32 LE row-major
values, u32 metadata-length, UTF-8 JSON {teacher_id, provenance}.
"""

from __future__ import annotations

import argparse
import fnmatch
import json
import pickle
import struct
import sys
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["ExportManifest", "export_bank", "main"]

_BANK_MAGIC = b"CKBG"
_GRAFT_KSIZE = 3


@dataclass(frozen=True)
class ExportManifest:
    """What one export run produced."""

    teacher_id: str
    filter_pattern: str
    count: int
    per_layer: dict[str, int] = field(default_factory=dict)
    skipped: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.count != sum(self.per_layer.values()):
            raise ValueError("count does not match the per-layer totals")

    def to_dict(self) -> dict:
        return {
            "teacher_id": self.teacher_id,
            "filter_pattern": self.filter_pattern,
            "count": self.count,
            "per_layer": dict(self.per_layer),
            "skipped": dict(self.skipped),
        }


def _load_npz(path: Path) -> dict[str, np.ndarray]:
    with np.load(path) as archive:
        return {name: np.asarray(archive[name]) for name in archive.files}


def _load_torch(path: Path) -> dict[str, np.ndarray]:
    import torch

    state = torch.load(path, map_location="cpu", weights_only=True)
    # common checkpoint wrappers around the raw state dict
    for key in ("state_dict", "model", "params"):
        if isinstance(state, dict) and key in state and isinstance(state[key], dict):
            state = state[key]
    if not isinstance(state, dict):
        raise ValueError("checkpoint does not hold a name -> tensor mapping")
    return {
        name: tensor.detach().cpu().numpy()
        for name, tensor in state.items()
        if hasattr(tensor, "detach")
    }


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Name -> array mapping from a .npz or PyTorch checkpoint file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    try:
        if path.suffix == ".npz":
            return _load_npz(path)
        return _load_torch(path)
    except (OSError, RuntimeError, KeyError, json.JSONDecodeError,
            pickle.UnpicklingError, zipfile.BadZipFile) as exc:
        raise ValueError(f"unreadable checkpoint archive {path}: {exc}") from exc


def _layer_name(key: str) -> str:
    """Tensor key -> layer name (the usual trailing '.weight' stripped)."""
    return key[: -len(".weight")] if key.endswith(".weight") else key


def select_kernels(
    tensors: dict[str, np.ndarray], pattern: str
) -> tuple[list[tuple[str, int, int, np.ndarray]], dict[str, int], dict[str, str]]:
    """Pick 3x3 conv slices from the filtered layers.

    Returns (slices, per-layer counts, skipped layers with their kernel size).
    Slices keep archive order, then output-major channel order. Only 4-D
    weight tensors are conv candidates; matched ones that are not 3x3 are
    skipped with a note since the graft grid is fixed at 3x3.
    """
    slices: list[tuple[str, int, int, np.ndarray]] = []
    per_layer: dict[str, int] = {}
    skipped: dict[str, str] = {}
    matched_any = False
    for key, arr in tensors.items():
        if arr.ndim != 4:
            continue
        layer = _layer_name(key)
        if not fnmatch.fnmatchcase(layer, pattern):
            continue
        matched_any = True
        c_out, c_in, kh, kw = arr.shape
        if kh != _GRAFT_KSIZE or kw != _GRAFT_KSIZE:
            skipped[layer] = f"{kh}x{kw}"
            continue
        per_layer[layer] = c_out * c_in
        for o in range(c_out):
            for i in range(c_in):
                slices.append((layer, o, i, arr[o, i]))
    if not matched_any:
        raise ValueError(f"filter pattern {pattern!r} matched no conv layers")
    if not slices:
        raise ValueError(
            f"filter pattern {pattern!r} matched only non-3x3 conv layers: "
            + ", ".join(f"{n} ({k})" for n, k in skipped.items())
        )
    return slices, per_layer, skipped


def write_bank(path, slices, teacher_id: str) -> None:
    """Write the CKBG bank file for (layer, out, in, 3x3 values) slices."""
    values = np.stack([s[3] for s in slices]).astype("<f4")
    meta = {
        "teacher_id": teacher_id,
        "provenance": [[layer, o, i] for layer, o, i, _ in slices],
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_BANK_MAGIC)
        fh.write(struct.pack("<3I", 1, len(slices), _GRAFT_KSIZE))
        fh.write(values.tobytes())
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)


def _read_header_count(path) -> int:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _BANK_MAGIC:
            raise ValueError(f"bad magic {magic!r} in written bank")
        _, count, _ = struct.unpack("<3I", fh.read(12))
    return count


def export_bank(checkpoint_path, filter_pattern: str, out_path,
                teacher_id: str | None = None) -> ExportManifest:
    """Extract matching 3x3 conv kernels into a bank file at ``out_path``."""
    tensors = load_checkpoint(checkpoint_path)
    slices, per_layer, skipped = select_kernels(tensors, filter_pattern)
    if teacher_id is None:
        teacher_id = Path(checkpoint_path).stem
    write_bank(out_path, slices, teacher_id)
    manifest = ExportManifest(
        teacher_id=teacher_id,
        filter_pattern=filter_pattern,
        count=len(slices),
        per_layer=per_layer,
        skipped=skipped,
    )
    header_count = _read_header_count(out_path)
    if manifest.count != header_count:
        raise AssertionError(
            f"manifest count {manifest.count} != bank header count {header_count}"
        )
    return manifest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="teacher-export",
        description="extract 3x3 conv kernels from an SR checkpoint into a bank file",
    )
    parser.add_argument("--checkpoint", required=True, help=".pt/.pth or .npz archive")
    parser.add_argument("--filter", default="*", help="layer-name glob (default: all)")
    parser.add_argument("--out", required=True, help="bank file to write")
    parser.add_argument("--teacher-id", dest="teacher_id",
                        help="manifest id (default: checkpoint file stem)")
    args = parser.parse_args(argv)
    try:
        manifest = export_bank(args.checkpoint, args.filter, args.out, args.teacher_id)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(manifest.to_dict(), sort_keys=True, indent=1))
    return 0


if __name__ == "__main__":
    sys.exit(main())
