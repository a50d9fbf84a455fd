"""Command line front end: inspect kernel banks, learn graft priors, build,
train, collapse, and benchmark models, and run frame-directory inference."""

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .formats import (
    load_basis_json,
    read_ppm,
    save_basis_json,
    save_centroids_json,
    write_ppm,
)
from .kernel_prior import load_kernel_bank, pca_centroids, synthetic_teacher_bank
from .metrics import count_activations, count_flops, count_params, latency_report, psnr, ssim, tradeoff_score
from .synth import make_clip, SynthConfig
from .tensor import Tensor4
from .train_eval import (
    MODE_CLUSTERING,
    TrainConfig,
    build_prior,
    evaluate_on_clips,
    frame_to_tensor,
    held_out_clips,
    tensor_to_frame,
    train_loop,
)
from .transport import barycenter, count_local_maxima, demo_unimodal_family, euclidean_mean
from .vsr_net import (
    NetConfig,
    init_net_params,
    load_net,
    make_flow_provider,
    run_sequence,
    save_net,
    to_deploy,
)

__all__ = ["CommandConfig", "main", "worker_cap"]


@dataclass(frozen=True)
class CommandConfig:
    """Fully resolved invocation: the subcommand, its file paths, and every
    override after applying CLI > config file > default precedence."""

    subcommand: str
    paths: dict
    overrides: dict

    def to_dict(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "paths": {k: str(v) for k, v in self.paths.items() if v is not None},
            "overrides": dict(self.overrides),
        }


def _default_table() -> dict:
    nc, tc = NetConfig(), TrainConfig()
    return {
        "scale": nc.scale, "channels": nc.c_feat, "num_bgb": nc.num_bgb,
        "clusters": nc.m_clusters, "d_inner": nc.d_inner,
        "grafts": nc.grafts_per_block, "flow": nc.flow_mode,
        "precision": nc.precision, "seed": nc.seed,
        "patch": tc.patch, "batch": tc.batch, "iterations": tc.iterations,
        "seq_frames": tc.seq_frames, "n_clips": tc.n_clips, "lr0": tc.lr0,
        "eta_min": tc.eta_min, "mode": tc.mode,
        "bank_size": 120, "kmeans_iters": 30,
        "points": 256, "threshold": 1e-3,
        "probe_frames": 8, "probe_size": 32,
        "fps": 24.0, "future_frames": 0, "timing_iters": 30,
        "eval_clips": 2, "eval_frames": 6,
    }


_DEFAULTS = _default_table()


def _load_config_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    unknown = sorted(set(data) - set(_DEFAULTS))
    if unknown:
        raise ValueError(f"unknown config file keys: {', '.join(unknown)}")
    return data


def _resolve(args, keys) -> dict:
    """CLI flag > config file > built-in default, for the listed keys."""
    file_cfg = _load_config_file(args.config) if getattr(args, "config", None) else {}
    out = {}
    for key in keys:
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            out[key] = cli_val
        elif key in file_cfg:
            out[key] = type(_DEFAULTS[key])(file_cfg[key])
        else:
            out[key] = _DEFAULTS[key]
    return out


def worker_cap() -> int:
    """Worker-thread ceiling for per-frame metric fan-out."""
    raw = os.environ.get("CKBG_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        cap = int(raw)
    except ValueError:
        cap = 0
    if cap < 1:
        raise ValueError(f"CKBG_THREADS must be a positive integer, got {raw!r}")
    return cap


def _require_file(path, what: str) -> None:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"{what} not found: {path}")


def _ensure_parent(path) -> None:
    parent = Path(path).resolve().parent
    parent.mkdir(parents=True, exist_ok=True)


def _emit(report: dict, report_path=None) -> None:
    text = json.dumps(report, sort_keys=True, indent=1)
    print(text)
    if report_path:
        _ensure_parent(report_path)
        Path(report_path).write_text(text + "\n", encoding="utf-8")


def _net_config(ov: dict) -> NetConfig:
    grafts = 0 if ov["mode"] == "no-graft" else ov["grafts"]
    return NetConfig(
        scale=ov["scale"], c_feat=ov["channels"], num_bgb=ov["num_bgb"],
        m_clusters=ov["clusters"], d_inner=ov["d_inner"], grafts_per_block=grafts,
        flow_mode=ov["flow"], precision=ov["precision"], seed=ov["seed"],
    )


def _train_config(ov: dict) -> TrainConfig:
    return TrainConfig(
        patch=ov["patch"], batch=ov["batch"], iterations=ov["iterations"],
        seq_frames=ov["seq_frames"], n_clips=ov["n_clips"], lr0=ov["lr0"],
        eta_min=ov["eta_min"], seed=ov["seed"], mode=ov["mode"],
    )


def _bank_and_basis(ov: dict, bank_path, basis_path):
    """Load or synthesize the teacher bank, then learn or load the prior."""
    if basis_path is not None:
        _require_file(basis_path, "basis file")
        return None, load_basis_json(basis_path)
    if ov["mode"] == "no-graft":
        return None, None
    if bank_path is not None:
        _require_file(bank_path, "kernel bank")
        bank = load_kernel_bank(bank_path)
    else:
        bank = synthetic_teacher_bank(ov["bank_size"], seed=ov["seed"])
    return bank, None


# ---------------------------------------------------------------------------
# subcommands


def cmd_bank_info(args) -> int:
    _require_file(args.bank, "kernel bank")
    cfg = CommandConfig("bank-info", {"bank": args.bank}, {})
    bank = load_kernel_bank(args.bank)
    arr = bank.as_array()
    layers: dict[str, int] = {}
    for s in bank.kernels:
        layers[s.provenance[0]] = layers.get(s.provenance[0], 0) + 1
    _emit({
        "config": cfg.to_dict(),
        "count": bank.count,
        "ksize": bank.ksize,
        "teacher_id": bank.teacher_id,
        "layers": layers,
        "values": {
            "min": float(arr.min()), "max": float(arr.max()),
            "mean": float(arr.mean()), "std": float(arr.std()),
        },
    }, getattr(args, "report", None))
    return 0


def cmd_prior(args) -> int:
    ov = _resolve(args, ("clusters", "seed", "mode", "kmeans_iters", "bank_size"))
    if ov["mode"] not in MODE_CLUSTERING:
        raise ValueError(f"prior needs a clustering mode, got {ov['mode']!r}")
    if args.bank is not None:
        _require_file(args.bank, "kernel bank")
        bank = load_kernel_bank(args.bank)
    else:
        bank = synthetic_teacher_bank(ov["bank_size"], seed=ov["seed"])
    cfg = CommandConfig("prior", {
        "bank": args.bank, "centroids_out": args.centroids_out,
        "basis_out": args.basis_out,
    }, ov)
    centroids = MODE_CLUSTERING[ov["mode"]](
        bank, ov["clusters"], seed=ov["seed"], max_iter=ov["kmeans_iters"]
    )
    basis = pca_centroids(centroids)
    _ensure_parent(args.centroids_out)
    save_centroids_json(args.centroids_out, centroids)
    _ensure_parent(args.basis_out)
    save_basis_json(args.basis_out, basis)
    _emit({
        "config": cfg.to_dict(),
        "objective_history": [float(v) for v in centroids.history],
        "theta": [float(v) for v in basis.probs],
        "theta_sum": float(np.sum(basis.probs)),
        "degenerate": bool(centroids.degenerate),
    }, getattr(args, "report", None))
    return 0


def cmd_demo_bary1d(args) -> int:
    ov = _resolve(args, ("seed", "points", "threshold"))
    cfg = CommandConfig("demo-bary1d", {"out": args.out}, ov)
    measures = demo_unimodal_family(6, ov["points"], seed=ov["seed"])
    weights = np.full(6, 1.0 / 6.0)
    support = measures[0].support
    bary = barycenter(measures, weights, support)
    mean = euclidean_mean(measures, weights)
    _ensure_parent(args.out)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"density_{i}" for i in range(6)] + ["euclidean_mean", "barycenter"])
        columns = [m.mass for m in measures] + [mean.mass, bary.mass]
        for row in zip(*columns):
            writer.writerow([f"{v:.9e}" for v in row])
    _emit({
        "config": cfg.to_dict(),
        "modes_euclidean": count_local_maxima(mean.mass, ov["threshold"]),
        "modes_barycenter": count_local_maxima(bary.mass, ov["threshold"]),
        "csv": str(args.out),
    }, getattr(args, "report", None))
    return 0


def cmd_build(args) -> int:
    keys = ("scale", "channels", "num_bgb", "clusters", "d_inner", "grafts",
            "flow", "precision", "seed", "mode", "kmeans_iters", "bank_size",
            "probe_size")
    ov = _resolve(args, keys)
    bank, basis = _bank_and_basis(ov, args.bank, args.basis)
    if basis is None and bank is not None:
        basis = build_prior(ov["mode"], bank, ov["clusters"], ov["seed"])
    if basis is not None:
        ov["clusters"] = basis.count
    cfg = CommandConfig("build", {
        "bank": args.bank, "basis": args.basis, "out": args.out,
    }, ov)
    params = init_net_params(_net_config(ov), basis)
    _ensure_parent(args.out)
    save_net(args.out, params)
    s = ov["probe_size"]
    _emit({
        "config": cfg.to_dict(),
        "model": str(args.out),
        "form": params.form,
        "params": count_params(params),
        "counter_frame_size": s,
        "flops_per_frame": count_flops(params, s, s),
        "activations_per_frame": count_activations(params, s, s),
    }, getattr(args, "report", None))
    return 0


def cmd_train(args) -> int:
    keys = ("scale", "channels", "num_bgb", "clusters", "d_inner", "grafts",
            "flow", "precision", "seed", "mode", "bank_size",
            "patch", "batch", "iterations", "seq_frames", "n_clips", "lr0",
            "eta_min", "eval_clips", "eval_frames")
    ov = _resolve(args, keys)
    bank, basis = _bank_and_basis(ov, args.bank, args.basis)
    if basis is not None:
        ov["clusters"] = basis.count
    cfg = CommandConfig("train", {
        "bank": args.bank, "basis": args.basis, "out": args.out,
        "loss_log": args.loss_log,
    }, ov)
    net_cfg = _net_config(ov)
    result = train_loop(net_cfg, _train_config(ov), bank=bank, basis=basis)
    _ensure_parent(args.out)
    save_net(args.out, result.params)
    if args.loss_log:
        _ensure_parent(args.loss_log)
        with open(args.loss_log, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "lr", "loss"])
            for it, lr, loss in result.log:
                writer.writerow([it, f"{lr:.9e}", f"{loss:.9e}"])
    clips = held_out_clips(net_cfg, n_clips=ov["eval_clips"],
                           n_frames=ov["eval_frames"], seed=ov["seed"] + 77)
    evaluation = evaluate_on_clips(result.params, clips)
    window = max(1, len(result.log) // 10)
    losses = [row[2] for row in result.log]
    _emit({
        "config": cfg.to_dict(),
        "model": str(args.out),
        "iterations": len(result.log),
        "first_window_loss": float(np.mean(losses[:window])),
        "final_window_loss": float(np.mean(losses[-window:])),
        "evaluation": {k: (float(v) if isinstance(v, (int, float)) else v)
                       for k, v in evaluation.items()},
    }, getattr(args, "report", None))
    return 0


def cmd_reparam(args) -> int:
    ov = _resolve(args, ("seed", "probe_frames", "probe_size"))
    _require_file(args.model, "model file")
    cfg = CommandConfig("reparam", {"model": args.model, "out": args.out}, ov)
    params = load_net(args.model)
    deployed = to_deploy(params)
    _ensure_parent(args.out)
    save_net(args.out, deployed)

    clip = make_clip(SynthConfig(
        lr_height=ov["probe_size"], lr_width=ov["probe_size"],
        n_frames=ov["probe_frames"], scale=params.config.scale,
    ), seed=ov["seed"])
    dtype = params.config.dtype
    frames = [frame_to_tensor(f, dtype) for f in clip.lr_frames]

    def outputs(p):
        provider = make_flow_provider(
            p.config.flow_mode,
            clip.flows if p.config.flow_mode == "lookup" else None,
        )
        return run_sequence(p, frames, provider=provider)

    diffs = [
        float(np.abs(a.data.astype(np.float64) - b.data.astype(np.float64)).max())
        for a, b in zip(outputs(params), outputs(deployed))
    ]
    tolerance = 1e-10 if params.config.precision == "f64" else 5e-4
    max_diff = max(diffs)
    _emit({
        "config": cfg.to_dict(),
        "model": str(args.out),
        "form": deployed.form,
        "max_abs_output_diff": max_diff,
        "tolerance": tolerance,
        "equivalent": max_diff <= tolerance,
        "probe_size": ov["probe_size"],
        "train_flops_per_frame": count_flops(params, ov["probe_size"], ov["probe_size"]),
        "deploy_flops_per_frame": count_flops(deployed, ov["probe_size"], ov["probe_size"]),
    }, getattr(args, "report", None))
    return 0 if max_diff <= tolerance else 1


def cmd_infer(args) -> int:
    _require_file(args.model, "model file")
    if not os.path.isdir(args.frames):
        raise FileNotFoundError(f"frame directory not found: {args.frames}")
    params = load_net(args.model)
    file_cfg = _load_config_file(args.config) if args.config else {}
    if args.flow is not None:
        flow_mode = args.flow
    else:
        flow_mode = file_cfg.get("flow", params.config.flow_mode)
    cfg = CommandConfig("infer", {
        "model": args.model, "frames": args.frames, "out": args.out,
    }, {"flow": flow_mode})
    paths = sorted(Path(args.frames).glob("*.ppm"))
    if not paths:
        raise ValueError(f"no .ppm frames in {args.frames}")
    dtype = params.config.dtype
    frames = [frame_to_tensor(read_ppm(p), dtype) for p in paths]
    provider = make_flow_provider(flow_mode)
    outputs = run_sequence(params, frames, provider=provider)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for i, sr in enumerate(outputs):
        name = out_dir / f"sr_{i:04d}.ppm"
        write_ppm(name, tensor_to_frame(sr))
        names.append(str(name))
    h, w = frames[0].dims[2], frames[0].dims[3]
    _emit({
        "config": cfg.to_dict(),
        "frames": len(names),
        "input_size": [h, w],
        "output_size": [h * params.config.scale, w * params.config.scale],
        "outputs": names,
    }, getattr(args, "report", None))
    return 0


def cmd_bench(args) -> int:
    ov = _resolve(args, ("seed", "probe_frames", "probe_size", "fps",
                         "future_frames", "timing_iters"))
    _require_file(args.model, "model file")
    params = load_net(args.model)
    cfg = CommandConfig("bench", {"model": args.model}, ov)
    clip = held_out_clips(params.config, n_clips=1, n_frames=ov["probe_frames"],
                          lr_size=ov["probe_size"], seed=ov["seed"] + 77)[0]
    dtype = params.config.dtype
    frames = [frame_to_tensor(f, dtype) for f in clip.lr_frames]

    def clip_provider():
        mode = params.config.flow_mode
        return make_flow_provider(mode, clip.flows if mode == "lookup" else None)

    outputs = run_sequence(params, frames, provider=clip_provider())
    pairs = [(tensor_to_frame(sr), hr) for sr, hr in zip(outputs, clip.hr_frames)]
    with ThreadPoolExecutor(max_workers=min(worker_cap(), len(pairs))) as pool:
        psnrs = list(pool.map(lambda ab: psnr(ab[0], ab[1]), pairs))
        ssims = list(pool.map(lambda ab: ssim(ab[0], ab[1]), pairs))
    mean_psnr = float(np.mean(psnrs))
    report = latency_report(
        params, frames,
        future_frames_required=ov["future_frames"], source_fps=ov["fps"],
        iters=ov["timing_iters"], psnr_db=mean_psnr, provider=clip_provider(),
    )
    _emit({
        "config": cfg.to_dict(),
        "psnr": mean_psnr,
        "ssim": float(np.mean(ssims)),
        "space": "RGB",
        "params": report.params,
        "flops": report.flops,
        "activations": report.activations,
        "t_run_ms": report.t_run_ms,
        "t_cache_ms": report.t_cache_ms,
        "score": report.score,
    }, getattr(args, "report", None))
    return 0


def cmd_score(args) -> int:
    cfg = CommandConfig("score", {}, {"psnr_db": args.psnr_db, "t_ms": args.t_ms})
    _emit({
        "config": cfg.to_dict(),
        "psnr_db": args.psnr_db,
        "t_ms": args.t_ms,
        "score": tradeoff_score(args.psnr_db, args.t_ms),
    }, getattr(args, "report", None))
    return 0


# ---------------------------------------------------------------------------
# argument surface


def _add_common(sub, *flags):
    sub.add_argument("--config", help="JSON file of override defaults")
    sub.add_argument("--report", help="also write the JSON report here")
    if "seed" in flags:
        sub.add_argument("--seed", type=int)
    if "net" in flags:
        sub.add_argument("--scale", type=int)
        sub.add_argument("--channels", type=int)
        sub.add_argument("--num-bgb", dest="num_bgb", type=int)
        sub.add_argument("--clusters", type=int)
        sub.add_argument("--d-inner", dest="d_inner", type=int)
        sub.add_argument("--grafts", type=int)
        sub.add_argument("--flow", choices=["zero", "lookup", "block"])
        sub.add_argument("--precision", choices=["f32", "f64"])
        sub.add_argument("--mode", choices=["no-graft", "e-kmeans", "w-kmeans"])
        sub.add_argument("--bank-size", dest="bank_size", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ckbg",
        description="kernel-grafted recurrent video super-resolution toolkit",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("bank-info", help="summarize a kernel bank file")
    p.add_argument("--bank", required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_bank_info)

    p = subs.add_parser("prior", help="cluster a bank and write centroids + basis")
    p.add_argument("--bank", help="kernel bank path (default: synthetic bank)")
    p.add_argument("--centroids-out", dest="centroids_out", required=True)
    p.add_argument("--basis-out", dest="basis_out", required=True)
    p.add_argument("--clusters", type=int)
    p.add_argument("--mode", choices=["e-kmeans", "w-kmeans"])
    p.add_argument("--kmeans-iters", dest="kmeans_iters", type=int)
    p.add_argument("--bank-size", dest="bank_size", type=int)
    _add_common(p, "seed")
    p.set_defaults(fn=cmd_prior)

    p = subs.add_parser("demo-bary1d", help="mean-vs-barycenter demo CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--points", type=int)
    p.add_argument("--threshold", type=float)
    _add_common(p, "seed")
    p.set_defaults(fn=cmd_demo_bary1d)

    p = subs.add_parser("build", help="initialize a train-form model file")
    p.add_argument("--bank", help="kernel bank path (default: synthetic bank)")
    p.add_argument("--basis", help="basis JSON path (skips clustering)")
    p.add_argument("--out", required=True)
    p.add_argument("--kmeans-iters", dest="kmeans_iters", type=int)
    p.add_argument("--probe-size", dest="probe_size", type=int)
    _add_common(p, "seed", "net")
    p.set_defaults(fn=cmd_build)

    p = subs.add_parser("train", help="train a model on synthetic sequences")
    p.add_argument("--bank", help="kernel bank path (default: synthetic bank)")
    p.add_argument("--basis", help="basis JSON path (skips clustering)")
    p.add_argument("--out", required=True)
    p.add_argument("--loss-log", dest="loss_log", help="loss CSV path")
    p.add_argument("--patch", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--seq-frames", dest="seq_frames", type=int)
    p.add_argument("--n-clips", dest="n_clips", type=int)
    p.add_argument("--lr0", type=float)
    p.add_argument("--eta-min", dest="eta_min", type=float)
    p.add_argument("--eval-clips", dest="eval_clips", type=int)
    p.add_argument("--eval-frames", dest="eval_frames", type=int)
    _add_common(p, "seed", "net")
    p.set_defaults(fn=cmd_train)

    p = subs.add_parser("reparam", help="collapse a train-form model for deployment")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--probe-frames", dest="probe_frames", type=int)
    p.add_argument("--probe-size", dest="probe_size", type=int)
    _add_common(p, "seed")
    p.set_defaults(fn=cmd_reparam)

    p = subs.add_parser("infer", help="super-resolve a directory of PPM frames")
    p.add_argument("--model", required=True)
    p.add_argument("--frames", required=True, help="input directory of .ppm files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--flow", choices=["zero", "block"])
    _add_common(p)
    p.set_defaults(fn=cmd_infer)

    p = subs.add_parser("bench", help="latency + quality report on synthetic frames")
    p.add_argument("--model", required=True)
    p.add_argument("--probe-frames", dest="probe_frames", type=int)
    p.add_argument("--probe-size", dest="probe_size", type=int)
    p.add_argument("--fps", type=float)
    p.add_argument("--future-frames", dest="future_frames", type=int)
    p.add_argument("--timing-iters", dest="timing_iters", type=int)
    _add_common(p, "seed")
    p.set_defaults(fn=cmd_bench)

    p = subs.add_parser("score", help="latency/quality trade-off score")
    p.add_argument("--psnr-db", dest="psnr_db", type=float, required=True)
    p.add_argument("--t-ms", dest="t_ms", type=float, required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_score)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
