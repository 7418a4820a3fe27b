"""Command-line surface: compress, decompress, verify, ifr-study, bench.

Exit codes are a stable contract: 0 success, 1 verify mismatch, 2 I/O
failure, 3 corrupt container, 64 bad usage or invalid configuration.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .container import ContainerError, read_container, write_container
from .ifr import gaussian_self_test, run_ifr_study, study_csv, study_trend
from .model import (ModelConfig, dense_mixer_param_count, lte_param_count,
                    model_param_count, model_param_count_dense_mixer)
from .pipeline import compress, decompress

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_IO = 2
EXIT_CORRUPT = 3
EXIT_USAGE = 64

# paper profile: the published training setup; desk profile: small enough to
# iterate on a laptop CPU while keeping the same shape constraints.
PROFILES = {
    "paper": dict(context_len=16, embed_dim=16, hidden_local=2048, hidden_global=4096,
                  lte_ratio=4, branches=2, lanes=64, segments=32),
    "desk": dict(context_len=16, embed_dim=8, hidden_local=256, hidden_global=512,
                 lte_ratio=4, branches=2, lanes=16, segments=4),
}


class UsageError(Exception):
    pass


@dataclass
class Metrics:
    file: str
    original_bytes: int
    compressed_bytes: int
    ratio: float
    seconds: dict = field(default_factory=dict)
    throughput_kb_per_min: float = 0.0
    param_count: int = 0
    peak_queue_depth: int = 0

    def human(self) -> str:
        sec = self.seconds.get("wall", 0.0)
        return (f"{self.file}: {self.original_bytes} -> {self.compressed_bytes} bytes"
                f"  ratio {self.ratio:.4f}  {self.throughput_kb_per_min:.1f} KB/min"
                f"  wall {sec:.2f}s  params {self.param_count}"
                f"  peak-queue {self.peak_queue_depth}")

    def json_line(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)


def order0_entropy_bits(data: bytes) -> float:
    """Bits/byte of the file's global byte-frequency distribution."""
    if not data:
        return 0.0
    counts = np.bincount(np.frombuffer(data, dtype=np.uint8), minlength=256)
    p = counts[counts > 0] / len(data)
    return float(-(p * np.log2(p)).sum())


def order0_bound_ratio(data: bytes) -> float:
    """Compression ratio of an ideal order-0 coder on this file."""
    h = order0_entropy_bits(data)
    return 8.0 / h if h > 0 else float("inf")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--profile", choices=sorted(PROFILES), default="paper")
    p.add_argument("--lanes", type=int, default=None)
    p.add_argument("--segments", type=int, default=None)
    p.add_argument("--context", type=int, default=None, help="history bytes per prediction")
    p.add_argument("--embed-dim", type=int, default=None)
    p.add_argument("--hidden-local", type=int, default=None)
    p.add_argument("--hidden-global", type=int, default=None)
    p.add_argument("--lte-ratio", type=int, default=None)
    p.add_argument("--branches", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--serial", action="store_true", help="disable the prediction/coding overlap")
    p.add_argument("--metrics-out", default=None, help="append one JSON metrics line per file")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _resolve_config(args, need_segments: bool = True) -> tuple[ModelConfig, int]:
    base = dict(PROFILES[args.profile])
    segments = base.pop("segments")
    overrides = {
        "lanes": args.lanes,
        "context_len": args.context,
        "embed_dim": args.embed_dim,
        "hidden_local": args.hidden_local,
        "hidden_global": args.hidden_global,
        "lte_ratio": args.lte_ratio,
        "branches": args.branches,
        "lr": args.lr,
    }
    for key, val in overrides.items():
        if val is not None:
            base[key] = val
    cfg = ModelConfig(seed=args.seed, **base)
    if args.segments is not None:
        segments = args.segments
    try:
        cfg.validate()
        if need_segments and (segments < 1 or cfg.lanes % segments != 0):
            raise ValueError(f"segments ({segments}) must divide lanes ({cfg.lanes})")
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return cfg, segments


def _resolve_threads(args) -> int | None:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("EDPC_THREADS")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"EDPC_THREADS is not an integer: {env!r}") from exc
    return None


def _emit_metrics(args, metrics: Metrics) -> None:
    print(metrics.human())
    if args.metrics_out:
        with open(args.metrics_out, "a", encoding="utf-8") as fh:
            fh.write(metrics.json_line() + "\n")


def _read_file(path: str) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _write_file(path: str, data: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(data)


def cmd_compress(args) -> int:
    cfg, segments = _resolve_config(args)
    data = _read_file(args.input)
    stats: dict = {}
    container = compress(data, cfg, segments, serial=args.serial,
                         threads=_resolve_threads(args), stats=stats)
    blob = write_container(container)
    _write_file(args.output, blob)
    wall = stats.get("wall_s", 0.0)
    metrics = Metrics(
        file=args.input,
        original_bytes=len(data),
        compressed_bytes=len(blob),
        ratio=len(data) / len(blob) if blob else 0.0,
        seconds={"predict": round(stats.get("predict_s", 0.0), 4),
                 "train": round(stats.get("train_s", 0.0), 4),
                 "encode": round(stats.get("encode_s", 0.0), 4),
                 "wall": round(wall, 4)},
        throughput_kb_per_min=(len(data) / 1024.0) / (wall / 60.0) if wall > 0 else 0.0,
        param_count=model_param_count(cfg),
        peak_queue_depth=stats.get("peak_queue_depth", 0),
    )
    _emit_metrics(args, metrics)
    return EXIT_OK


def cmd_decompress(args) -> int:
    blob = _read_file(args.input)
    container = read_container(blob)
    stats: dict = {}
    data = decompress(container, threads=_resolve_threads(args) or 1, stats=stats)
    _write_file(args.output, data)
    if args.verbose:
        print(f"{args.input}: {len(blob)} -> {len(data)} bytes"
              f"  wall {stats.get('wall_s', 0.0):.2f}s")
    return EXIT_OK


def cmd_verify(args) -> int:
    original = _read_file(args.input)
    container = read_container(_read_file(args.container))
    restored = decompress(container, threads=_resolve_threads(args) or 1)
    if restored == original:
        print(f"verify OK: {args.input} ({len(original)} bytes)")
        return EXIT_OK
    offset = next((i for i, (a, b) in enumerate(zip(original, restored)) if a != b),
                  min(len(original), len(restored)))
    print(f"verify FAILED: {args.input}: first divergence at byte {offset}"
          f" (original {len(original)} bytes, restored {len(restored)} bytes)")
    return EXIT_MISMATCH


def cmd_ifr(args) -> int:
    if args.self_test:
        result = gaussian_self_test(n=args.samples, neighbors=args.neighbors, seed=args.seed)
        print(json.dumps(result, sort_keys=True))
        ok = (result["abs_error"] <= 0.08
              and abs(result["independent_estimate"]) < 0.05)
        print(f"gaussian self-test: {'OK' if ok else 'FAILED'}")
        return EXIT_OK if ok else EXIT_MISMATCH
    if not args.input:
        raise UsageError("ifr-study needs -i probe data (or --self-test)")
    cfg, _ = _resolve_config(args, need_segments=False)
    probe = _read_file(args.input)
    seeds = [args.seed + i for i in range(args.seeds)]
    rows = run_ifr_study(cfg, probe, seeds, n_samples=args.samples,
                         neighbors=args.neighbors, warmup_steps=args.warmup)
    csv = study_csv(rows)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(csv)
    else:
        sys.stdout.write(csv)
    trend = study_trend(rows)
    print(json.dumps(trend, sort_keys=True))
    print("trend: mutual information decreases with added branches"
          if trend["mi_decreases_with_branches"]
          else "trend: monotone decrease not observed on this probe/seed set")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg, segments = _resolve_config(args)
    if not os.path.isdir(args.input):
        raise UsageError(f"bench expects a corpus directory, got {args.input!r}")
    files = sorted(
        os.path.join(args.input, name) for name in os.listdir(args.input)
        if os.path.isfile(os.path.join(args.input, name))
    )
    if not files:
        raise UsageError(f"no files in corpus directory {args.input!r}")

    f = cfg.feature_dim
    latent = f // cfg.lte_ratio
    print(f"model parameters: {model_param_count(cfg)} with latent transform, "
          f"{model_param_count_dense_mixer(cfg)} with a dense mixer")
    print(f"latent-transform params {lte_param_count(f, cfg.lte_ratio, cfg.lanes)}"
          f" vs dense {dense_mixer_param_count(f)}")
    reduction = 1.0 - (latent * latent) / (f * f)
    print(f"per-lane latent matrix {latent}x{latent} vs dense {f}x{f}: "
          f"{100.0 * reduction:.2f}% fewer weights")

    threads = _resolve_threads(args)
    for path in files:
        data = _read_file(path)
        stats_p: dict = {}
        t0 = time.perf_counter()
        container = compress(data, cfg, segments, serial=False, threads=threads, stats=stats_p)
        piped_s = time.perf_counter() - t0
        t0 = time.perf_counter()
        compress(data, cfg, segments, serial=True)
        serial_s = time.perf_counter() - t0
        blob = write_container(container)
        restored = decompress(read_container(blob))
        if restored != data:
            print(f"{path}: ROUNDTRIP FAILED")
            return EXIT_MISMATCH
        ratio = len(data) / len(blob) if blob else 0.0
        speedup = serial_s / piped_s if piped_s > 0 else float("inf")
        metrics = Metrics(
            file=path,
            original_bytes=len(data),
            compressed_bytes=len(blob),
            ratio=ratio,
            seconds={"pipelined": round(piped_s, 4), "serial": round(serial_s, 4),
                     "predict": round(stats_p.get("predict_s", 0.0), 4),
                     "train": round(stats_p.get("train_s", 0.0), 4),
                     "encode": round(stats_p.get("encode_s", 0.0), 4),
                     "wall": round(piped_s, 4)},
            throughput_kb_per_min=(len(data) / 1024.0) / (piped_s / 60.0) if piped_s > 0 else 0.0,
            param_count=model_param_count(cfg),
            peak_queue_depth=stats_p.get("peak_queue_depth", 0),
        )
        _emit_metrics(args, metrics)
        print(f"    order-0 bound ratio {order0_bound_ratio(data):.4f}"
              f"  pipelined/serial speedup {speedup:.2f}x")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edpc",
                                     description="online-learning neural lossless compressor")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="compress a file")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    _add_model_flags(p)
    p.set_defaults(fn=cmd_compress)

    p = sub.add_parser("decompress", help="restore a compressed file")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    _add_model_flags(p)
    p.set_defaults(fn=cmd_decompress)

    p = sub.add_parser("verify", help="decompress in memory and compare with the original")
    p.add_argument("-i", "--input", required=True, help="original file")
    p.add_argument("-c", "--container", required=True, help="compressed file")
    _add_model_flags(p)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("ifr-study", help="branch-count mutual-information study")
    p.add_argument("-i", "--input", default=None, help="probe data file")
    p.add_argument("-o", "--output", default=None, help="CSV output path (default stdout)")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds (seed, seed+1, ...)")
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--neighbors", type=int, default=5)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--self-test", action="store_true",
                   help="validate the estimator on correlated Gaussians")
    _add_model_flags(p)
    p.set_defaults(fn=cmd_ifr)

    p = sub.add_parser("bench", help="compression metrics over a corpus directory")
    p.add_argument("-i", "--input", required=True, help="corpus directory")
    _add_model_flags(p)
    p.set_defaults(fn=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage; remap to the documented code
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ContainerError as exc:
        print(f"error: corrupt container: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
