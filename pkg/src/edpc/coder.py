"""Integer arithmetic coder and the probability quantization bridge.

The coder never sees floats: the model's softmax rows are first quantized
into integer frequency tables summing to exactly 2^16, with every symbol
kept at frequency >= 1 so any byte stays decodable. Encoder and decoder
therefore agree as long as they are fed identical tables in identical
order; floating-point reproducibility matters upstream (in the model), not
here.

Coder internals: 32 active register bits, classic underflow handling via
pending-bit counting, MSB-first bit packing with the final partial byte
zero-padded. The exact bit length of each stream is recorded by the
container, not in-band. The per-symbol loops are numba-compiled and run
without the GIL, which is what lets segment coders overlap with model math
on real threads.
"""

from __future__ import annotations

import numpy as np
from numba import njit

TOTAL_BITS = 16
TOTAL = 1 << TOTAL_BITS          # fixed frequency total per distribution
STATE_BITS = 32
_MASK = (1 << STATE_BITS) - 1
_HALF = 1 << (STATE_BITS - 1)
_QUARTER = 1 << (STATE_BITS - 2)
_THREE_QUARTERS = _HALF + _QUARTER

# encoder register layout: [low, high, pending_bits]; decoder: [low, high, code]
_R_LOW, _R_HIGH, _R_AUX = 0, 1, 2


class CoderError(Exception):
    pass


class QuantizedDistribution:
    """256 integer frequencies summing to TOTAL, with a cumulative table."""

    __slots__ = ("freqs", "cumulative")

    def __init__(self, freqs: np.ndarray):
        freqs = np.asarray(freqs, dtype=np.uint32)
        if freqs.shape != (256,):
            raise ValueError("need exactly 256 frequencies")
        if freqs.min() < 1:
            raise ValueError("every symbol needs frequency >= 1")
        cum = np.zeros(257, dtype=np.uint64)
        np.cumsum(freqs, out=cum[1:])
        if int(cum[-1]) != TOTAL:
            raise ValueError(f"frequencies sum to {int(cum[-1])}, expected {TOTAL}")
        self.freqs = freqs
        self.cumulative = cum


@njit(cache=True, nogil=True)
def _quantize_kernel(probs, freqs, cums):
    n = probs.shape[0]
    scale = float(TOTAL - 256)
    for r in range(n):
        total = 0
        frac = np.empty(256)
        for s in range(256):
            scaled = probs[r, s] * scale
            base = int(np.floor(scaled))
            frac[s] = base - scaled  # negated remainder: ascending sort = descending frac
            freqs[r, s] = base + 1
            total += base + 1
        deficit = TOTAL - total
        if deficit > 0:
            order = np.argsort(frac, kind="mergesort")  # stable: ties by symbol index
            for j in range(deficit):
                freqs[r, order[j]] += 1
        acc = 0
        cums[r, 0] = 0
        for s in range(256):
            acc += freqs[r, s]
            cums[r, s + 1] = acc


def quantize_rows(probs: np.ndarray):
    """Deterministic batch quantization; returns (freqs (n,256), cumulative (n,257)).

    Scale by (TOTAL - 256) and floor, give every symbol a baseline 1, then
    hand the remaining deficit one unit at a time to the symbols with the
    largest fractional remainders (ties broken by ascending symbol index).
    Row-independent: quantizing a slice gives the same rows as quantizing
    the whole batch.
    """
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] != 256:
        raise ValueError(f"expected (n, 256) probabilities, got {probs.shape}")
    if not np.isfinite(probs).all():
        raise ValueError("probability contains NaN or Inf")
    if probs.min() < 0.0:
        raise ValueError("negative probability")
    sums = probs.sum(axis=1)
    if np.abs(sums - 1.0).max() > 1e-6:
        raise ValueError("probability row does not sum to 1")
    n = probs.shape[0]
    freqs = np.empty((n, 256), dtype=np.int64)
    cums = np.empty((n, 257), dtype=np.uint64)
    _quantize_kernel(probs, freqs, cums)
    return freqs, cums


def quantize(prob_row: np.ndarray) -> QuantizedDistribution:
    """Single-row quantization to a distribution object."""
    freqs, _ = quantize_rows(np.asarray(prob_row, dtype=np.float64).reshape(1, 256))
    return QuantizedDistribution(freqs[0])


_UNIFORM = None


def uniform_distribution() -> QuantizedDistribution:
    """The bootstrap table: every byte at frequency TOTAL/256."""
    global _UNIFORM
    if _UNIFORM is None:
        _UNIFORM = QuantizedDistribution(np.full(256, TOTAL // 256, dtype=np.uint32))
    return _UNIFORM


@njit(cache=True, nogil=True)
def _encode_kernel(reg, buf, bitpos, cums, symbols):
    low = reg[_R_LOW]
    high = reg[_R_HIGH]
    pending = reg[_R_AUX]
    bp = bitpos[0]
    for r in range(symbols.shape[0]):
        s = symbols[r]
        span = high - low + 1
        high = low + (span * np.int64(cums[r, s + 1])) // TOTAL - 1
        low = low + (span * np.int64(cums[r, s])) // TOTAL
        while True:
            if high < _HALF:
                bit = 0
            elif low >= _HALF:
                bit = 1
                low -= _HALF
                high -= _HALF
            elif low >= _QUARTER and high < _THREE_QUARTERS:
                pending += 1
                low -= _QUARTER
                high -= _QUARTER
                low <<= 1
                high = (high << 1) | 1
                continue
            else:
                break
            buf[bp >> 3] |= bit << (7 - (bp & 7))
            bp += 1
            inv = 1 - bit
            while pending > 0:
                buf[bp >> 3] |= inv << (7 - (bp & 7))
                bp += 1
                pending -= 1
            low <<= 1
            high = (high << 1) | 1
    reg[_R_LOW] = low
    reg[_R_HIGH] = high
    reg[_R_AUX] = pending
    bitpos[0] = bp


@njit(cache=True, nogil=True)
def _encode_probs_kernel(reg, buf, bitpos, probs, symbols):
    n = probs.shape[0]
    freqs = np.empty((n, 256), dtype=np.int64)
    cums = np.empty((n, 257), dtype=np.uint64)
    _quantize_kernel(probs, freqs, cums)
    _encode_kernel(reg, buf, bitpos, cums, symbols)


@njit(cache=True, nogil=True)
def _decode_kernel(reg, data, bit_length, bitpos, cums, out):
    low = reg[_R_LOW]
    high = reg[_R_HIGH]
    code = reg[_R_AUX]
    bp = bitpos[0]
    limit = bit_length + 2 * STATE_BITS
    for r in range(out.shape[0]):
        span = high - low + 1
        value = ((code - low + 1) * TOTAL - 1) // span
        # binary search for s with cums[r, s] <= value < cums[r, s+1]
        lo_i = 0
        hi_i = 256
        uval = np.uint64(value)
        while hi_i - lo_i > 1:
            mid = (lo_i + hi_i) >> 1
            if cums[r, mid] > uval:
                hi_i = mid
            else:
                lo_i = mid
        s = lo_i
        high = low + (span * np.int64(cums[r, s + 1])) // TOTAL - 1
        low = low + (span * np.int64(cums[r, s])) // TOTAL
        while True:
            if high < _HALF:
                pass
            elif low >= _HALF:
                low -= _HALF
                high -= _HALF
                code -= _HALF
            elif low >= _QUARTER and high < _THREE_QUARTERS:
                low -= _QUARTER
                high -= _QUARTER
                code -= _QUARTER
            else:
                break
            low <<= 1
            high = (high << 1) | 1
            bit = 0
            if bp < bit_length:
                bit = (data[bp >> 3] >> (7 - (bp & 7))) & 1
            elif bp > limit:
                bitpos[0] = bp
                out[r] = -1  # exhausted: caller raises
                return r
            bp += 1
            code = (code << 1) | bit
        out[r] = s
    reg[_R_LOW] = low
    reg[_R_HIGH] = high
    reg[_R_AUX] = code
    bitpos[0] = bp
    return out.shape[0]


@njit(cache=True, nogil=True)
def _decode_probs_kernel(reg, data, bit_length, bitpos, probs, out):
    n = probs.shape[0]
    freqs = np.empty((n, 256), dtype=np.int64)
    cums = np.empty((n, 257), dtype=np.uint64)
    _quantize_kernel(probs, freqs, cums)
    return _decode_kernel(reg, data, bit_length, bitpos, cums, out)


class ArithmeticEncoder:
    """Streaming encoder; collect the final bitstream with finish()."""

    def __init__(self):
        # registers: low, high, pending_bits (64-bit ints, 32 active bits)
        self._reg = np.array([0, _MASK, 0], dtype=np.int64)
        self._bitpos = np.zeros(1, dtype=np.int64)
        self._buf = np.zeros(4096, dtype=np.uint8)
        self._finished = False

    @property
    def pending_bits(self) -> int:
        return int(self._reg[_R_AUX])

    def _ensure_capacity(self, extra_bits: int) -> None:
        need = int(self._bitpos[0]) + extra_bits
        cap = self._buf.shape[0] * 8
        if need > cap:
            new_cap_bytes = max(self._buf.shape[0] * 2, (need + 7) // 8 + 4096)
            grown = np.zeros(new_cap_bytes, dtype=np.uint8)
            grown[: self._buf.shape[0]] = self._buf
            self._buf = grown

    def encode_rows(self, cums: np.ndarray, symbols: np.ndarray) -> None:
        """Encode one symbol per row of a batched cumulative table."""
        if self._finished:
            raise CoderError("encoder already finished")
        symbols = np.ascontiguousarray(symbols, dtype=np.int64)
        # worst case per symbol: ~17 renorm bits, plus the pending backlog
        self._ensure_capacity(18 * symbols.shape[0] + self.pending_bits + 64)
        _encode_kernel(self._reg, self._buf, self._bitpos, cums, symbols)

    def encode_prob_rows(self, probs: np.ndarray, symbols: np.ndarray) -> None:
        """Quantize and encode in one GIL-free call (the pipeline hot path).

        probs must already be valid softmax rows; the public quantize API
        carries the input validation.
        """
        if self._finished:
            raise CoderError("encoder already finished")
        probs = np.ascontiguousarray(probs, dtype=np.float64)
        symbols = np.ascontiguousarray(symbols, dtype=np.int64)
        self._ensure_capacity(18 * symbols.shape[0] + self.pending_bits + 64)
        _encode_probs_kernel(self._reg, self._buf, self._bitpos, probs, symbols)

    def encode_symbol(self, dist: QuantizedDistribution, symbol: int) -> None:
        self.encode_rows(dist.cumulative.reshape(1, 257),
                         np.array([symbol], dtype=np.int64))

    def finish(self) -> tuple[bytes, int]:
        """Flush disambiguation bits; returns (byte-aligned stream, exact bit length)."""
        if self._finished:
            raise CoderError("encoder already finished")
        self._finished = True
        self._ensure_capacity(self.pending_bits + 8)
        low = int(self._reg[_R_LOW])
        pending = int(self._reg[_R_AUX]) + 1
        first = 0 if low < _QUARTER else 1
        bp = int(self._bitpos[0])
        bits = [first] + [first ^ 1] * pending
        for bit in bits:
            self._buf[bp >> 3] |= bit << (7 - (bp & 7))
            bp += 1
        self._bitpos[0] = bp
        nbytes = (bp + 7) // 8
        return self._buf[:nbytes].tobytes(), bp


class ArithmeticDecoder:
    """Mirror of ArithmeticEncoder over a finished bitstream.

    Reads past the declared bit length yield zeros (the encoder's final
    byte is zero-padded); reading far beyond it means the stream cannot
    supply the requested symbols and raises.
    """

    def __init__(self, data: bytes, bit_length: int):
        if bit_length > len(data) * 8:
            raise CoderError(f"bit length {bit_length} exceeds payload of {len(data)} bytes")
        self._data = np.frombuffer(data, dtype=np.uint8) if data else np.zeros(1, np.uint8)
        self._bit_length = bit_length
        self._bitpos = np.zeros(1, dtype=np.int64)
        self._reg = np.array([0, _MASK, 0], dtype=np.int64)
        # prime the code register with the first 32 bits
        code = 0
        for _ in range(STATE_BITS):
            bp = int(self._bitpos[0])
            bit = 0
            if bp < bit_length:
                bit = (int(self._data[bp >> 3]) >> (7 - (bp & 7))) & 1
            self._bitpos[0] = bp + 1
            code = (code << 1) | bit
        self._reg[_R_AUX] = code

    def decode_rows(self, cums: np.ndarray, out: np.ndarray) -> None:
        """Decode one symbol per row of a batched cumulative table into out."""
        done = _decode_kernel(self._reg, self._data, self._bit_length,
                              self._bitpos, cums, out)
        if done != out.shape[0]:
            raise CoderError(f"bitstream exhausted at symbol {int(done)} of this batch")

    def decode_prob_rows(self, probs: np.ndarray, out: np.ndarray) -> None:
        """Quantize and decode in one GIL-free call (mirror of encode_prob_rows)."""
        probs = np.ascontiguousarray(probs, dtype=np.float64)
        done = _decode_probs_kernel(self._reg, self._data, self._bit_length,
                                    self._bitpos, probs, out)
        if done != out.shape[0]:
            raise CoderError(f"bitstream exhausted at symbol {int(done)} of this batch")

    def decode_symbol(self, dist: QuantizedDistribution) -> int:
        out = np.empty(1, dtype=np.int64)
        self.decode_rows(dist.cumulative.reshape(1, 257), out)
        return int(out[0])
