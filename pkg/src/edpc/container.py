"""On-disk format for compressed artifacts.

Layout (all integers little-endian, offsets in bytes):

    0   magic            4   b"EDPC"
    4   format_version   1   currently 1
    5   original_len     8   u64
    13  seed             8   u64
    21  context_len      4   u32
    25  embed_dim        4   u32
    29  hidden_local     4   u32
    33  hidden_global    4   u32
    37  lte_ratio        4   u32
    41  branches         4   u32
    45  lanes            4   u32
    49  segment_count    4   u32  (S)
    53  lr               8   f64
    61  beta1            8   f64
    69  beta2            8   f64
    77  adam_eps         8   f64
    85  bit_lengths      8*S u64 per segment
    ..  header_checksum  4   CRC32 over bytes [0, 85+8S)
    ..  payloads             ceil(bits/8) bytes per segment, in order

Header size is therefore 89 + 8*S bytes. Magic, version and segment count
are validated before anything is sized from untrusted fields, and payload
extents are bounds-checked against the actual stream, so parsing never
allocates beyond the input size plus a constant.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

from .model import ModelConfig

MAGIC = b"EDPC"
FORMAT_VERSION = 1
_FIXED = struct.Struct("<QQ8I4d")  # everything between version byte and bit lengths
_FIXED_SIZE = 5 + _FIXED.size      # magic + version + fixed fields = 85
_MAX_SEGMENTS = 1 << 20


class ContainerError(Exception):
    """Base class for malformed containers."""


class BadMagicError(ContainerError):
    pass


class BadVersionError(ContainerError):
    pass


class ChecksumError(ContainerError):
    pass


class TruncatedError(ContainerError):
    pass


class InvalidHeaderError(ContainerError):
    pass


@dataclass
class Header:
    original_len: int
    seed: int
    context_len: int
    embed_dim: int
    hidden_local: int
    hidden_global: int
    lte_ratio: int
    branches: int
    lanes: int
    segment_count: int
    lr: float
    beta1: float
    beta2: float
    adam_eps: float
    bit_lengths: list[int]

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            context_len=self.context_len,
            embed_dim=self.embed_dim,
            hidden_local=self.hidden_local,
            hidden_global=self.hidden_global,
            lte_ratio=self.lte_ratio,
            branches=self.branches,
            lanes=self.lanes,
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            adam_eps=self.adam_eps,
            seed=self.seed,
        )

    @classmethod
    def from_config(cls, cfg: ModelConfig, original_len: int, bit_lengths: list[int]) -> "Header":
        return cls(
            original_len=original_len,
            seed=cfg.seed,
            context_len=cfg.context_len,
            embed_dim=cfg.embed_dim,
            hidden_local=cfg.hidden_local,
            hidden_global=cfg.hidden_global,
            lte_ratio=cfg.lte_ratio,
            branches=cfg.branches,
            lanes=cfg.lanes,
            segment_count=len(bit_lengths),
            lr=cfg.lr,
            beta1=cfg.beta1,
            beta2=cfg.beta2,
            adam_eps=cfg.adam_eps,
            bit_lengths=list(bit_lengths),
        )

    def validate(self) -> None:
        s = self.segment_count
        if s != len(self.bit_lengths):
            raise InvalidHeaderError("segment count does not match bit length table")
        if s == 0:
            if self.original_len != 0:
                raise InvalidHeaderError("no segments but nonzero original length")
        else:
            if self.lanes < 1 or self.lanes % s != 0:
                raise InvalidHeaderError("segment count must divide lane count")
        if self.context_len < 1 or self.embed_dim < 1:
            raise InvalidHeaderError("bad model geometry")
        f = self.context_len * self.embed_dim
        if self.lte_ratio < 1 or f % self.lte_ratio != 0:
            raise InvalidHeaderError("latent ratio must divide the feature dim")
        if self.branches < 1 or self.hidden_local < 1 or self.hidden_global < 1:
            raise InvalidHeaderError("bad model geometry")


@dataclass
class EdpcContainer:
    header: Header
    segments: list[bytes]


def header_size(segment_count: int) -> int:
    return _FIXED_SIZE + 8 * segment_count + 4


def write_container(container: EdpcContainer) -> bytes:
    h = container.header
    h.validate()
    if len(container.segments) != h.segment_count:
        raise InvalidHeaderError("segment payload count mismatch")
    for i, (payload, bits) in enumerate(zip(container.segments, h.bit_lengths)):
        if len(payload) != (bits + 7) // 8:
            raise InvalidHeaderError(f"segment {i}: payload does not match bit length")
    out = bytearray()
    out += MAGIC
    out.append(FORMAT_VERSION)
    out += _FIXED.pack(
        h.original_len, h.seed,
        h.context_len, h.embed_dim, h.hidden_local, h.hidden_global,
        h.lte_ratio, h.branches, h.lanes, h.segment_count,
        h.lr, h.beta1, h.beta2, h.adam_eps,
    )
    for bits in h.bit_lengths:
        out += struct.pack("<Q", bits)
    out += struct.pack("<I", zlib.crc32(out))
    for payload in container.segments:
        out += payload
    return bytes(out)


def read_container(buf: bytes) -> EdpcContainer:
    if len(buf) < 5:
        raise TruncatedError("shorter than magic + version")
    if buf[:4] != MAGIC:
        raise BadMagicError("bad magic")
    if buf[4] != FORMAT_VERSION:
        raise BadVersionError(f"unsupported format version {buf[4]}")
    if len(buf) < _FIXED_SIZE:
        raise TruncatedError("truncated fixed header")
    fields = _FIXED.unpack_from(buf, 5)
    (original_len, seed, context_len, embed_dim, hidden_local, hidden_global,
     lte_ratio, branches, lanes, segment_count, lr, beta1, beta2, adam_eps) = fields
    if segment_count > _MAX_SEGMENTS:
        raise InvalidHeaderError(f"implausible segment count {segment_count}")
    hsize = header_size(segment_count)
    if len(buf) < hsize:
        raise TruncatedError("truncated header")
    bit_lengths = list(struct.unpack_from(f"<{segment_count}Q", buf, _FIXED_SIZE))
    (declared_crc,) = struct.unpack_from("<I", buf, hsize - 4)
    actual_crc = zlib.crc32(buf[: hsize - 4])
    if declared_crc != actual_crc:
        raise ChecksumError("header checksum mismatch")
    header = Header(
        original_len=original_len, seed=seed,
        context_len=context_len, embed_dim=embed_dim,
        hidden_local=hidden_local, hidden_global=hidden_global,
        lte_ratio=lte_ratio, branches=branches, lanes=lanes,
        segment_count=segment_count,
        lr=lr, beta1=beta1, beta2=beta2, adam_eps=adam_eps,
        bit_lengths=bit_lengths,
    )
    header.validate()
    segments: list[bytes] = []
    pos = hsize
    for i, bits in enumerate(bit_lengths):
        nbytes = (bits + 7) // 8
        if pos + nbytes > len(buf):
            raise TruncatedError(f"segment {i}: payload truncated")
        segments.append(bytes(buf[pos : pos + nbytes]))
        pos += nbytes
    return EdpcContainer(header=header, segments=segments)
