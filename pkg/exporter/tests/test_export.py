"""Exporter tests: selection rules, wire format, manifest, CLI surface."""

import io
import json
import struct
from contextlib import redirect_stderr, redirect_stdout

import numpy as np
import pytest
import torch

from teacher_exporter import ExportManifest, export_bank, load_checkpoint, main


def write_npz_checkpoint(path, tensors: dict) -> None:
    np.savez(path, **tensors)


def write_torch_checkpoint(path, tensors: dict, wrapper: str | None = None) -> None:
    state = {k: torch.from_numpy(np.asarray(v)) for k, v in tensors.items()}
    torch.save({wrapper: state} if wrapper else state, path)


def small_checkpoint(rng) -> dict:
    return {
        "head.weight": rng.normal(size=(3, 2, 3, 3)).astype(np.float32),
        "head.bias": rng.normal(size=3).astype(np.float32),
        "body.0.conv.weight": rng.normal(size=(2, 3, 3, 3)).astype(np.float32),
        "tail.weight": rng.normal(size=(4, 2, 1, 1)).astype(np.float32),
    }


class TestSelection:
    def test_single_conv_slice_count(self, tmp_path):
        rng = np.random.default_rng(0)
        ckpt = tmp_path / "one.npz"
        write_npz_checkpoint(ckpt, {
            "conv.weight": rng.normal(size=(3, 2, 3, 3)).astype(np.float32),
        })
        manifest = export_bank(ckpt, "*", tmp_path / "one.ckbg")
        assert manifest.count == 6
        assert manifest.per_layer == {"conv": 6}
        assert manifest.skipped == {}

    def test_filter_narrows_layers(self, tmp_path):
        rng = np.random.default_rng(1)
        ckpt = tmp_path / "net.npz"
        write_npz_checkpoint(ckpt, small_checkpoint(rng))
        manifest = export_bank(ckpt, "body.*", tmp_path / "body.ckbg")
        assert manifest.per_layer == {"body.0.conv": 6}
        assert manifest.count == 6

    def test_zero_match_filter_is_an_error(self, tmp_path):
        rng = np.random.default_rng(2)
        ckpt = tmp_path / "net.npz"
        write_npz_checkpoint(ckpt, small_checkpoint(rng))
        with pytest.raises(ValueError, match="matched no conv layers"):
            export_bank(ckpt, "decoder.*", tmp_path / "x.ckbg")

    def test_non_3x3_layers_skipped_with_note(self, tmp_path):
        rng = np.random.default_rng(3)
        ckpt = tmp_path / "net.npz"
        write_npz_checkpoint(ckpt, small_checkpoint(rng))
        manifest = export_bank(ckpt, "*", tmp_path / "all.ckbg")
        assert manifest.skipped == {"tail": "1x1"}
        assert set(manifest.per_layer) == {"head", "body.0.conv"}
        assert manifest.count == 6 + 6

    def test_only_skipped_matches_is_an_error(self, tmp_path):
        rng = np.random.default_rng(4)
        ckpt = tmp_path / "net.npz"
        write_npz_checkpoint(ckpt, small_checkpoint(rng))
        with pytest.raises(ValueError, match="non-3x3"):
            export_bank(ckpt, "tail", tmp_path / "x.ckbg")

    def test_bias_and_vectors_are_not_conv_candidates(self, tmp_path):
        rng = np.random.default_rng(5)
        ckpt = tmp_path / "net.npz"
        write_npz_checkpoint(ckpt, {
            "conv.weight": rng.normal(size=(2, 2, 3, 3)).astype(np.float32),
            "conv.bias": rng.normal(size=2).astype(np.float32),
            "norm.scale": rng.normal(size=(2, 2)).astype(np.float32),
        })
        manifest = export_bank(ckpt, "*", tmp_path / "b.ckbg")
        assert manifest.per_layer == {"conv": 4}


class TestWireFormat:
    def test_header_count_matches_manifest(self, tmp_path):
        rng = np.random.default_rng(6)
        ckpt = tmp_path / "net.npz"
        write_npz_checkpoint(ckpt, small_checkpoint(rng))
        out = tmp_path / "net.ckbg"
        manifest = export_bank(ckpt, "*", out)
        raw = out.read_bytes()
        assert raw[:4] == b"CKBG"
        version, count, k = struct.unpack("<3I", raw[4:16])
        assert (version, count, k) == (1, manifest.count, 3)

    def test_values_bit_identical_and_order(self, tmp_path):
        rng = np.random.default_rng(7)
        weights = rng.normal(size=(3, 2, 3, 3)).astype(np.float32)
        ckpt = tmp_path / "net.npz"
        write_npz_checkpoint(ckpt, {"conv.weight": weights})
        out = tmp_path / "net.ckbg"
        export_bank(ckpt, "*", out)
        raw = out.read_bytes()
        payload = np.frombuffer(raw[16 : 16 + 4 * 6 * 9], dtype="<f4")
        # output-major, input-minor slice order
        assert payload.tobytes() == weights.reshape(6, 9).tobytes()

    def test_metadata_trailer(self, tmp_path):
        rng = np.random.default_rng(8)
        ckpt = tmp_path / "net.npz"
        write_npz_checkpoint(ckpt, {
            "conv.weight": rng.normal(size=(2, 1, 3, 3)).astype(np.float32),
        })
        out = tmp_path / "net.ckbg"
        export_bank(ckpt, "*", out, teacher_id="toy-sr")
        raw = out.read_bytes()
        body = 16 + 4 * 2 * 9
        (meta_len,) = struct.unpack("<I", raw[body : body + 4])
        meta = json.loads(raw[body + 4 : body + 4 + meta_len].decode("utf-8"))
        assert meta["teacher_id"] == "toy-sr"
        assert meta["provenance"] == [["conv", 0, 0], ["conv", 1, 0]]

    def test_primary_component_round_trip(self, tmp_path):
        from ckbg.kernel_prior import load_kernel_bank

        rng = np.random.default_rng(9)
        tensors = small_checkpoint(rng)
        ckpt = tmp_path / "teacher.npz"
        write_npz_checkpoint(ckpt, tensors)
        out = tmp_path / "teacher.ckbg"
        manifest = export_bank(ckpt, "*", out)
        bank = load_kernel_bank(out)
        assert bank.count == manifest.count
        assert bank.ksize == 3
        assert bank.teacher_id == "teacher"
        want = np.concatenate([
            tensors["head.weight"].reshape(-1, 3, 3),
            tensors["body.0.conv.weight"].reshape(-1, 3, 3),
        ])
        got = bank.as_array().astype(np.float32)
        assert got.tobytes() == want.tobytes()
        assert bank.kernels[0].provenance == ("head", 0, 0)
        assert bank.kernels[6].provenance == ("body.0.conv", 0, 0)

    def test_deterministic_bytes(self, tmp_path):
        rng = np.random.default_rng(10)
        tensors = small_checkpoint(rng)
        ckpt = tmp_path / "net.npz"
        write_npz_checkpoint(ckpt, tensors)
        a, b = tmp_path / "a.ckbg", tmp_path / "b.ckbg"
        export_bank(ckpt, "*", a)
        export_bank(ckpt, "*", b)
        assert a.read_bytes() == b.read_bytes()


class TestTorchCheckpoints:
    def test_plain_state_dict(self, tmp_path):
        rng = np.random.default_rng(11)
        tensors = small_checkpoint(rng)
        ckpt = tmp_path / "model.pt"
        write_torch_checkpoint(ckpt, tensors)
        manifest = export_bank(ckpt, "*", tmp_path / "m.ckbg")
        assert manifest.count == 12
        assert manifest.teacher_id == "model"

    def test_wrapped_state_dict(self, tmp_path):
        rng = np.random.default_rng(12)
        ckpt = tmp_path / "wrapped.pth"
        write_torch_checkpoint(
            ckpt, {"conv.weight": rng.normal(size=(2, 2, 3, 3)).astype(np.float32)},
            wrapper="state_dict",
        )
        manifest = export_bank(ckpt, "*", tmp_path / "w.ckbg")
        assert manifest.count == 4

    def test_torch_and_npz_exports_agree(self, tmp_path):
        rng = np.random.default_rng(13)
        tensors = small_checkpoint(rng)
        pt, npz = tmp_path / "m.pt", tmp_path / "m.npz"
        write_torch_checkpoint(pt, tensors)
        write_npz_checkpoint(npz, tensors)
        export_bank(pt, "*", tmp_path / "pt.ckbg", teacher_id="same")
        export_bank(npz, "*", tmp_path / "npz.ckbg", teacher_id="same")
        assert (tmp_path / "pt.ckbg").read_bytes() == (tmp_path / "npz.ckbg").read_bytes()


class TestErrorsAndManifest:
    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "nope.pt")

    def test_unreadable_archive(self, tmp_path):
        bad = tmp_path / "junk.pt"
        bad.write_bytes(b"not a checkpoint")
        with pytest.raises(ValueError, match="unreadable checkpoint archive"):
            load_checkpoint(bad)

    def test_manifest_count_consistency_enforced(self):
        with pytest.raises(ValueError, match="count does not match"):
            ExportManifest("t", "*", 5, per_layer={"a": 4})


class TestCommandLine:
    def run_cli(self, *argv):
        out, err = io.StringIO(), io.StringIO()
        with redirect_stdout(out), redirect_stderr(err):
            code = main(list(argv))
        return code, out.getvalue(), err.getvalue()

    def test_manifest_json_on_stdout(self, tmp_path):
        rng = np.random.default_rng(14)
        ckpt = tmp_path / "net.npz"
        write_npz_checkpoint(ckpt, small_checkpoint(rng))
        code, out, _ = self.run_cli(
            "--checkpoint", str(ckpt), "--out", str(tmp_path / "n.ckbg"),
            "--teacher-id", "toy",
        )
        assert code == 0
        manifest = json.loads(out)
        assert manifest["teacher_id"] == "toy"
        assert manifest["count"] == 12
        assert manifest["skipped"] == {"tail": "1x1"}

    def test_error_exit_code(self, tmp_path):
        rng = np.random.default_rng(15)
        ckpt = tmp_path / "net.npz"
        write_npz_checkpoint(ckpt, small_checkpoint(rng))
        code, _, err = self.run_cli(
            "--checkpoint", str(ckpt), "--filter", "nope.*",
            "--out", str(tmp_path / "n.ckbg"),
        )
        assert code == 1 and "error:" in err
