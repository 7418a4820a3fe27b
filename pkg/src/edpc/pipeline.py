"""Compression orchestration: lane splitting, the online predict/encode/update
loop, and the mirrored decode loop.

The input is split into `lanes` contiguous substreams processed as one batch
row each per autoregressive step. Prediction and parameter updates run on
the calling thread (stage A, the sole owner of the model); quantization and
arithmetic coding run either inline (serial mode) or on worker threads
(stage B) fed through bounded queues. Each segment groups lanes/segments
contiguous lanes and owns one independent coder, so segment payloads are
identical no matter how stage B is scheduled: worker count and queue
capacity only ever change timing, never bytes.

Decoding is stricter: step i+1's prediction needs step i's decoded bytes,
so the only available parallelism is across segments within one step.
"""

from __future__ import annotations

import os
import queue
import threading
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .coder import ArithmeticDecoder, ArithmeticEncoder, quantize_rows, uniform_distribution
from .container import EdpcContainer, Header
from .model import EdpcModel, ModelConfig

StepHook = Callable[[int, np.ndarray, np.ndarray], None]
ParamProbe = Callable[[int, EdpcModel], None]


@dataclass
class LaneSplit:
    lane_count: int
    lane_len: int
    original_len: int
    pad_value: int = 0


def split_lanes(data: bytes, lanes: int):
    """Split into `lanes` contiguous rows of ceil(len/lanes) bytes, zero-padded.

    Returns (LaneSplit, matrix of shape (lanes, lane_len) uint8).
    """
    if lanes < 1:
        raise ValueError("lane count must be >= 1")
    n = len(data)
    lane_len = -(-n // lanes) if n else 0
    mat = np.zeros((lanes, lane_len), dtype=np.uint8)
    if n:
        mat.reshape(-1)[:n] = np.frombuffer(data, dtype=np.uint8)
    return LaneSplit(lane_count=lanes, lane_len=lane_len, original_len=n), mat


def join_lanes(split: LaneSplit, mat: np.ndarray) -> bytes:
    """Inverse of split_lanes (drops the padding)."""
    if mat.shape != (split.lane_count, split.lane_len):
        raise ValueError("lane matrix shape mismatch")
    return mat.reshape(-1)[: split.original_len].tobytes()


def _segment_spans(lanes: int, segments: int) -> list[tuple[int, int]]:
    chunk = lanes // segments
    return [(s * chunk, (s + 1) * chunk) for s in range(segments)]


def _validate_geometry(cfg: ModelConfig, segments: int) -> None:
    cfg.validate()
    if segments < 1:
        raise ValueError("segment count must be >= 1")
    if cfg.lanes % segments != 0:
        raise ValueError(f"segments ({segments}) must divide lanes ({cfg.lanes})")


def _uniform_tile(rows: int) -> np.ndarray:
    uni = uniform_distribution().cumulative
    return np.ascontiguousarray(np.broadcast_to(uni, (rows, 257)))


def _encode_bootstrap(coders, spans, mat, boot_len):
    if boot_len == 0:
        return
    tile = _uniform_tile(spans[0][1] - spans[0][0])
    for (lo, hi), enc in zip(spans, coders):
        for i in range(boot_len):
            enc.encode_rows(tile, mat[lo:hi, i])


def _decode_bootstrap(decoders, spans, mat, boot_len):
    if boot_len == 0:
        return
    chunk = spans[0][1] - spans[0][0]
    tile = _uniform_tile(chunk)
    out = np.empty(chunk, dtype=np.int64)
    for (lo, hi), dec in zip(spans, decoders):
        for i in range(boot_len):
            dec.decode_rows(tile, out)
            mat[lo:hi, i] = out


def _encode_rows(enc: ArithmeticEncoder, probs_slice: np.ndarray, targets_slice: np.ndarray):
    enc.encode_prob_rows(probs_slice, targets_slice)


def compress(data: bytes, cfg: ModelConfig, segments: int = 4, *,
             serial: bool = False, threads: int | None = None,
             queue_capacity: int = 8, stats: dict | None = None,
             step_hook: StepHook | None = None,
             param_probe: ParamProbe | None = None,
             probe_every: int = 0) -> EdpcContainer:
    """Compress `data` into a self-describing container.

    The output bytes are a pure function of (data, cfg, segments); `serial`,
    `threads` and `queue_capacity` affect wall time only.
    """
    _validate_geometry(cfg, segments)
    t0 = time.perf_counter()
    n = len(data)
    if n == 0:
        header = Header.from_config(cfg, 0, [])
        if stats is not None:
            stats.update(steps=0, predict_s=0.0, train_s=0.0, encode_s=0.0,
                         wall_s=time.perf_counter() - t0, peak_queue_depth=0)
        return EdpcContainer(header=header, segments=[])

    split, mat = split_lanes(data, cfg.lanes)
    t = cfg.context_len
    L = split.lane_len
    boot = min(t, L)
    spans = _segment_spans(cfg.lanes, segments)
    coders = [ArithmeticEncoder() for _ in range(segments)]
    model = EdpcModel(cfg)
    _encode_bootstrap(coders, spans, mat, boot)

    predict_s = train_s = 0.0
    encode_s = [0.0]
    peak_depth = 0

    if L > t and serial:
        for i in range(t, L):
            tp = time.perf_counter()
            probs, cache = model.predict(mat[:, i - t : i])
            predict_s += time.perf_counter() - tp
            targets = mat[:, i]
            if step_hook is not None:
                step_hook(i, probs, targets)
            te = time.perf_counter()
            for (lo, hi), enc in zip(spans, coders):
                _encode_rows(enc, probs[lo:hi], targets[lo:hi])
            encode_s[0] += time.perf_counter() - te
            tt = time.perf_counter()
            model.train_step(cache, targets)
            train_s += time.perf_counter() - tt
            if probe_every and param_probe is not None and (i - t + 1) % probe_every == 0:
                param_probe(i, model)
    elif L > t:
        if threads is None:
            threads = min(segments, os.cpu_count() or 1)
        n_workers = max(1, min(threads, segments))
        queues = [queue.Queue(maxsize=max(1, queue_capacity)) for _ in range(n_workers)]
        failures: list[BaseException] = []
        worker_s = [0.0] * n_workers

        def worker(w: int) -> None:
            my = list(range(segments))[w::n_workers]
            q = queues[w]
            busy = 0.0
            while True:
                item = q.get()
                if item is None:
                    worker_s[w] = busy
                    return
                if failures:
                    continue  # keep draining so stage A never deadlocks
                _, probs, targets = item
                try:
                    te = time.perf_counter()
                    for s in my:
                        lo, hi = spans[s]
                        _encode_rows(coders[s], probs[lo:hi], targets[lo:hi])
                    busy += time.perf_counter() - te
                except BaseException as exc:  # propagated after join
                    failures.append(exc)

        pool = [threading.Thread(target=worker, args=(w,), daemon=True)
                for w in range(n_workers)]
        for th in pool:
            th.start()
        try:
            for i in range(t, L):
                tp = time.perf_counter()
                probs, cache = model.predict(mat[:, i - t : i])
                predict_s += time.perf_counter() - tp
                targets = mat[:, i]
                if step_hook is not None:
                    step_hook(i, probs, targets)
                item = (i, probs, targets)
                for q in queues:
                    depth = q.qsize()
                    if depth > peak_depth:
                        peak_depth = depth
                    q.put(item)
                tt = time.perf_counter()
                model.train_step(cache, targets)
                train_s += time.perf_counter() - tt
                if probe_every and param_probe is not None and (i - t + 1) % probe_every == 0:
                    param_probe(i, model)
        finally:
            for q in queues:
                q.put(None)
            for th in pool:
                th.join()
        encode_s[0] = sum(worker_s)
        if failures:
            raise failures[0]

    payloads = []
    bit_lengths = []
    for enc in coders:
        payload, bits = enc.finish()
        payloads.append(payload)
        bit_lengths.append(bits)
    header = Header.from_config(cfg, n, bit_lengths)
    if stats is not None:
        stats.update(steps=max(0, L - t), predict_s=predict_s, train_s=train_s,
                     encode_s=encode_s[0], wall_s=time.perf_counter() - t0,
                     peak_queue_depth=peak_depth)
    return EdpcContainer(header=header, segments=payloads)


def decompress(container: EdpcContainer, *, threads: int = 1,
               stats: dict | None = None,
               step_hook: StepHook | None = None,
               param_probe: ParamProbe | None = None,
               probe_every: int = 0) -> bytes:
    """Reconstruct the original bytes by replaying the encoder's schedule."""
    t0 = time.perf_counter()
    header = container.header
    header.validate()
    n = header.original_len
    if n == 0:
        if stats is not None:
            stats.update(steps=0, wall_s=time.perf_counter() - t0)
        return b""
    cfg = header.model_config()
    segments = header.segment_count
    _validate_geometry(cfg, segments)
    split = LaneSplit(lane_count=cfg.lanes, lane_len=-(-n // cfg.lanes), original_len=n)
    mat = np.zeros((cfg.lanes, split.lane_len), dtype=np.uint8)
    t = cfg.context_len
    L = split.lane_len
    boot = min(t, L)
    spans = _segment_spans(cfg.lanes, segments)
    decoders = [ArithmeticDecoder(payload, bits)
                for payload, bits in zip(container.segments, header.bit_lengths)]
    model = EdpcModel(cfg)
    _decode_bootstrap(decoders, spans, mat, boot)

    if L > t:
        executor = None
        if threads > 1 and segments > 1:
            from concurrent.futures import ThreadPoolExecutor
            executor = ThreadPoolExecutor(max_workers=min(threads, segments))

        chunk = cfg.lanes // segments
        outs = [np.empty(chunk, dtype=np.int64) for _ in range(segments)]

        def decode_segment(s: int, i: int, probs: np.ndarray) -> None:
            lo, hi = spans[s]
            decoders[s].decode_prob_rows(probs[lo:hi], outs[s])
            mat[lo:hi, i] = outs[s]

        try:
            for i in range(t, L):
                probs, cache = model.predict(mat[:, i - t : i])
                if executor is not None:
                    list(executor.map(lambda s: decode_segment(s, i, probs), range(segments)))
                else:
                    for s in range(segments):
                        decode_segment(s, i, probs)
                targets = mat[:, i]
                if step_hook is not None:
                    step_hook(i, probs, targets)
                model.train_step(cache, targets)
                if probe_every and param_probe is not None and (i - t + 1) % probe_every == 0:
                    param_probe(i, model)
        finally:
            if executor is not None:
                executor.shutdown()

    out = join_lanes(split, mat)
    if stats is not None:
        stats.update(steps=max(0, L - t), wall_s=time.perf_counter() - t0)
    return out
