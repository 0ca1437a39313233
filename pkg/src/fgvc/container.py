"""Bitstream container.

Layout (all multi-byte integers little-endian, floats IEEE-754 binary64):

    magic       4s   b"FGVC"
    version     u8
    flags       u8   reserved, must be 0
    L, H, W     u32  true (pre-padding) frame count and dimensions
    fps_num     u32
    fps_den     u32
    channels    u8   1 (mono) or 3 (4:4:4)
    l, m        u16  nominal group length and overlap
    s, d        u8   temporal / spatial block factors
    gamma       f64  fusion weight
    T           u32  schedule steps
    beta_start  f64
    beta_end    f64
    chunk_size  u16  coefficients per chunk before KL splitting
    kl_cap      f64  per-chunk expected-KL cap (bits)
    base_seed   u64
    prior_id    u8   0 = power law (amplitude f64, exponent f64)
                     1 = fitted profile sidecar (sha256 32s, coeff count u64)
    gop_count   u32
    per GOP:    t_star u32, coded_frames u16, payload_len u32

GOP payloads follow the header back to back; each is byte-aligned. The header
is fully self-describing: decoding needs no out-of-band data except the
optional variance-profile sidecar referenced by hash.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .errors import MalformedBitstream

MAGIC = b"FGVC"
VERSION = 1
PRIOR_POWER_LAW = 0
PRIOR_SIDECAR = 1


@dataclass
class GopRecord:
    t_star: int
    coded_frames: int
    payload_len: int


@dataclass
class BitstreamHeader:
    frames: int
    height: int
    width: int
    fps: tuple[int, int] = (30, 1)
    channels: int = 1
    gop_len: int = 48
    overlap: int = 4
    s: int = 4
    d: int = 8
    gamma: float = 0.5
    T: int = 512
    beta_start: float = 1e-4
    beta_end: float = 0.02
    chunk_size: int = 16
    kl_cap: float = 4.0
    base_seed: int = 0
    prior_id: int = PRIOR_POWER_LAW
    prior_amplitude: float = 1.0
    prior_exponent: float = 2.0
    profile_sha256: bytes = b"\x00" * 32
    profile_len: int = 0
    version: int = VERSION
    flags: int = 0
    gops: list[GopRecord] = field(default_factory=list)


_FIXED = struct.Struct("<4sBBIIIIIBHHBBdIddHdQB")


def serialize_header(h: BitstreamHeader) -> bytes:
    out = bytearray()
    out += _FIXED.pack(MAGIC, h.version, h.flags, h.frames, h.height, h.width,
                       h.fps[0], h.fps[1], h.channels, h.gop_len, h.overlap,
                       h.s, h.d, h.gamma, h.T, h.beta_start, h.beta_end,
                       h.chunk_size, h.kl_cap, h.base_seed, h.prior_id)
    if h.prior_id == PRIOR_POWER_LAW:
        out += struct.pack("<dd", h.prior_amplitude, h.prior_exponent)
    elif h.prior_id == PRIOR_SIDECAR:
        out += struct.pack("<32sQ", h.profile_sha256, h.profile_len)
    else:
        raise MalformedBitstream(f"unknown prior id {h.prior_id}")
    out += struct.pack("<I", len(h.gops))
    for g in h.gops:
        out += struct.pack("<IHI", g.t_star, g.coded_frames, g.payload_len)
    return bytes(out)


def parse_header(buf: bytes) -> tuple[BitstreamHeader, int]:
    """Parse a header from the front of ``buf``; returns (header, byte offset
    of the first GOP payload)."""
    if len(buf) < _FIXED.size:
        raise MalformedBitstream("buffer shorter than the fixed header", offset=len(buf))
    (magic, version, flags, frames, height, width, fps_n, fps_d, channels,
     gop_len, overlap, s, d, gamma, T, b0, b1, chunk_size, kl_cap, base_seed,
     prior_id) = _FIXED.unpack_from(buf, 0)
    if magic != MAGIC:
        raise MalformedBitstream(f"bad magic {magic!r}", offset=0)
    if version != VERSION:
        raise MalformedBitstream(f"unsupported version {version}", offset=4)
    pos = _FIXED.size

    h = BitstreamHeader(frames=frames, height=height, width=width,
                        fps=(fps_n, fps_d), channels=channels, gop_len=gop_len,
                        overlap=overlap, s=s, d=d, gamma=gamma, T=T,
                        beta_start=b0, beta_end=b1, chunk_size=chunk_size,
                        kl_cap=kl_cap, base_seed=base_seed, prior_id=prior_id,
                        version=version, flags=flags)

    if prior_id == PRIOR_POWER_LAW:
        if len(buf) < pos + 16:
            raise MalformedBitstream("truncated prior parameters", offset=pos)
        h.prior_amplitude, h.prior_exponent = struct.unpack_from("<dd", buf, pos)
        pos += 16
    elif prior_id == PRIOR_SIDECAR:
        if len(buf) < pos + 40:
            raise MalformedBitstream("truncated sidecar reference", offset=pos)
        h.profile_sha256, h.profile_len = struct.unpack_from("<32sQ", buf, pos)
        pos += 40
    else:
        raise MalformedBitstream(f"unknown prior id {prior_id}", offset=pos - 1)

    if len(buf) < pos + 4:
        raise MalformedBitstream("truncated GOP count", offset=pos)
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    need = pos + 10 * count
    if len(buf) < need:
        raise MalformedBitstream(
            f"truncated GOP table ({count} records)", offset=pos)
    for _ in range(count):
        t_star, coded, plen = struct.unpack_from("<IHI", buf, pos)
        h.gops.append(GopRecord(t_star, coded, plen))
        pos += 10
    return h, pos
