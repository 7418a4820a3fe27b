"""Command-line contract: flags, exit codes, metrics output."""

import json
import os

import numpy as np
import pytest

from edpc.cli import (EXIT_CORRUPT, EXIT_IO, EXIT_MISMATCH, EXIT_OK, EXIT_USAGE,
                      main, order0_bound_ratio, order0_entropy_bits)

FAST = ["--lanes", "8", "--context", "8", "--embed-dim", "4",
        "--hidden-local", "16", "--hidden-global", "32", "--segments", "4"]


def run(argv):
    return main(argv)


@pytest.fixture
def sample(tmp_path):
    path = tmp_path / "sample.txt"
    path.write_bytes(b"the compressible sample text. " * 120)
    return path


def test_compress_decompress_verify_cycle(tmp_path, sample):
    out = tmp_path / "sample.edpc"
    restored = tmp_path / "restored.txt"
    assert run(["compress", "-i", str(sample), "-o", str(out)] + FAST) == EXIT_OK
    assert out.exists()
    assert run(["decompress", "-i", str(out), "-o", str(restored)] + FAST) == EXIT_OK
    assert restored.read_bytes() == sample.read_bytes()
    assert run(["verify", "-i", str(sample), "-c", str(out)] + FAST) == EXIT_OK


def test_usage_error_segments_must_divide_lanes(tmp_path, sample):
    out = tmp_path / "x.edpc"
    code = run(["compress", "-i", str(sample), "-o", str(out),
                "--lanes", "64", "--segments", "5"])
    assert code == EXIT_USAGE


def test_missing_input_is_io_error(tmp_path):
    code = run(["compress", "-i", str(tmp_path / "absent.bin"),
                "-o", str(tmp_path / "x.edpc")] + FAST)
    assert code == EXIT_IO


def test_decompress_non_container_is_corrupt(tmp_path):
    bogus = tmp_path / "bogus.edpc"
    bogus.write_bytes(b"this is not a container at all")
    code = run(["decompress", "-i", str(bogus), "-o", str(tmp_path / "y")] + FAST)
    assert code == EXIT_CORRUPT


def test_verify_mismatch_reports_offset(tmp_path, sample, capsys):
    out = tmp_path / "sample.edpc"
    assert run(["compress", "-i", str(sample), "-o", str(out)] + FAST) == EXIT_OK
    tampered = tmp_path / "tampered.txt"
    data = bytearray(sample.read_bytes())
    data[17] ^= 0xFF
    tampered.write_bytes(bytes(data))
    code = run(["verify", "-i", str(tampered), "-c", str(out)] + FAST)
    assert code == EXIT_MISMATCH
    assert "byte 17" in capsys.readouterr().out


def test_empty_file_cycle(tmp_path):
    empty = tmp_path / "empty"
    empty.write_bytes(b"")
    out = tmp_path / "empty.edpc"
    restored = tmp_path / "empty.out"
    assert run(["compress", "-i", str(empty), "-o", str(out)] + FAST) == EXIT_OK
    assert run(["decompress", "-i", str(out), "-o", str(restored)] + FAST) == EXIT_OK
    assert restored.read_bytes() == b""


def test_identical_flags_give_identical_containers(tmp_path, sample):
    a = tmp_path / "a.edpc"
    b = tmp_path / "b.edpc"
    assert run(["compress", "-i", str(sample), "-o", str(a), "--seed", "9"] + FAST) == EXIT_OK
    assert run(["compress", "-i", str(sample), "-o", str(b), "--seed", "9"] + FAST) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.edpc"
    assert run(["compress", "-i", str(sample), "-o", str(c), "--seed", "10"] + FAST) == EXIT_OK
    assert a.read_bytes() != c.read_bytes()


def test_serial_flag_matches_pipelined(tmp_path, sample):
    a = tmp_path / "a.edpc"
    b = tmp_path / "b.edpc"
    assert run(["compress", "-i", str(sample), "-o", str(a), "--serial"] + FAST) == EXIT_OK
    assert run(["compress", "-i", str(sample), "-o", str(b)] + FAST) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_metrics_json_line(tmp_path, sample):
    out = tmp_path / "s.edpc"
    metrics = tmp_path / "metrics.jsonl"
    assert run(["compress", "-i", str(sample), "-o", str(out),
                "--metrics-out", str(metrics)] + FAST) == EXIT_OK
    line = metrics.read_text().strip()
    m = json.loads(line)
    assert m["original_bytes"] == len(sample.read_bytes())
    assert m["compressed_bytes"] == out.stat().st_size
    assert m["ratio"] > 0
    assert m["param_count"] > 0
    assert "wall" in m["seconds"]


def test_desk_profile_flag(tmp_path):
    data = b"profile check " * 200
    src = tmp_path / "p.txt"
    src.write_bytes(data)
    out = tmp_path / "p.edpc"
    restored = tmp_path / "p.out"
    assert run(["compress", "-i", str(src), "-o", str(out), "--profile", "desk"]) == EXIT_OK
    assert run(["decompress", "-i", str(out), "-o", str(restored)]) == EXIT_OK
    assert restored.read_bytes() == data


def test_threads_env_fallback(tmp_path, sample, monkeypatch):
    out = tmp_path / "env.edpc"
    monkeypatch.setenv("EDPC_THREADS", "2")
    assert run(["compress", "-i", str(sample), "-o", str(out)] + FAST) == EXIT_OK
    monkeypatch.setenv("EDPC_THREADS", "junk")
    assert run(["compress", "-i", str(sample), "-o", str(out)] + FAST) == EXIT_USAGE


def test_unknown_flag_is_usage_error(tmp_path, sample):
    assert run(["compress", "-i", str(sample), "-o", "x", "--bogus"]) == EXIT_USAGE
    assert run(["nonsense"]) == EXIT_USAGE


def test_ifr_self_test_subcommand(capsys):
    assert run(["ifr-study", "--self-test", "--samples", "2500", "--seed", "1"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "gaussian self-test: OK" in out


def test_ifr_study_emits_csv(tmp_path, capsys):
    probe = tmp_path / "probe.txt"
    import pydoc
    text = (pydoc.render_doc("json", renderer=pydoc.plaintext) * 8).encode()
    probe.write_bytes(text[:100_000])
    csv_path = tmp_path / "study.csv"
    code = run(["ifr-study", "-i", str(probe), "-o", str(csv_path),
                "--seeds", "2", "--samples", "300", "--warmup", "60",
                "--lanes", "16", "--context", "8", "--embed-dim", "4",
                "--hidden-local", "16", "--hidden-global", "32"])
    assert code == EXIT_OK
    lines = csv_path.read_text().strip().split("\n")
    assert lines[0].startswith("seed,")
    assert len(lines) == 3
    assert "trend:" in capsys.readouterr().out


def test_bench_over_corpus(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    (corpus / "a.txt").write_bytes(b"aaaa bbbb cccc " * 150)
    (corpus / "b.bin").write_bytes(np.random.default_rng(0).integers(0, 256, 1500, dtype=np.uint8).tobytes())
    metrics = tmp_path / "bench.jsonl"
    code = run(["bench", "-i", str(corpus), "--metrics-out", str(metrics)] + FAST)
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "order-0 bound ratio" in out
    assert "speedup" in out
    assert "dense mixer" in out
    lines = [json.loads(l) for l in metrics.read_text().strip().split("\n")]
    assert len(lines) == 2


def test_bench_requires_directory(tmp_path, sample):
    assert run(["bench", "-i", str(sample)]) == EXIT_USAGE


def test_order0_entropy_helpers():
    assert order0_entropy_bits(b"") == 0.0
    assert abs(order0_entropy_bits(bytes(range(256)) * 4) - 8.0) < 1e-12
    assert order0_entropy_bits(b"\x00" * 100) == 0.0
    assert abs(order0_bound_ratio(b"\x00\x01" * 64) - 8.0) < 1e-12
