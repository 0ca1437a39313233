"""Y4M and raw video readers/writers.

Accepted Y4M colorspaces are mono and C444 (8-bit); anything else is rejected
rather than silently converted. Raw files carry no header, so they require a
JSON dims sidecar at ``<path>.dims.json`` with frames/height/width/channels.
Sample values map to [0, 1] by dividing by 255; writers invert exactly, so
read/write round-trips are byte-identical on valid files.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .errors import MalformedY4M, SizeMismatch, UnsupportedChroma
from .pipeline import VideoTensor

_FRAME_MARK = b"FRAME"


def _parse_y4m_header(line: bytes):
    tokens = line.split(b" ")
    if tokens[0] != b"YUV4MPEG2":
        raise MalformedY4M(f"bad signature {tokens[0]!r} at byte 0")
    width = height = None
    fps = (30, 1)
    chroma = b"420"  # Y4M default when the C token is absent
    pos = len(tokens[0]) + 1
    for tok in tokens[1:]:
        if not tok:
            pos += 1
            continue
        key, val = tok[:1], tok[1:]
        try:
            if key == b"W":
                width = int(val)
            elif key == b"H":
                height = int(val)
            elif key == b"F":
                num, den = val.split(b":")
                fps = (int(num), int(den))
            elif key == b"C":
                chroma = val
            # I, A, X tokens are accepted and ignored
        except (ValueError, IndexError) as exc:
            raise MalformedY4M(f"bad token {tok!r} at byte {pos}") from exc
        pos += len(tok) + 1
    if width is None or height is None:
        raise MalformedY4M("header missing W or H token")
    return width, height, fps, chroma


def read_y4m(path) -> VideoTensor:
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise MalformedY4M("no newline-terminated header")
    width, height, fps, chroma = _parse_y4m_header(data[:nl])

    if chroma == b"mono":
        channels = 1
    elif chroma == b"444":
        channels = 3
    else:
        raise UnsupportedChroma(f"colorspace C{chroma.decode(errors='replace')} "
                                "not supported (use mono or 444)")

    frame_bytes = width * height * channels
    frames = []
    pos = nl + 1
    while pos < len(data):
        mark_end = data.find(b"\n", pos)
        if mark_end < 0 or not data[pos:mark_end].startswith(_FRAME_MARK):
            raise MalformedY4M(f"expected FRAME marker at byte {pos}")
        pos = mark_end + 1
        if pos + frame_bytes > len(data):
            raise MalformedY4M(f"truncated frame payload at byte {pos}")
        raw = np.frombuffer(data, dtype=np.uint8, count=frame_bytes, offset=pos)
        if channels == 1:
            frames.append(raw.reshape(height, width))
        else:
            frames.append(raw.reshape(3, height, width).transpose(1, 2, 0))
        pos += frame_bytes
    if not frames:
        raise MalformedY4M("file contains no frames")
    arr = np.stack(frames).astype(np.float64) / 255.0
    return VideoTensor(data=arr, fps=fps)


def write_y4m(path, video: VideoTensor) -> None:
    arr = np.clip(np.round(video.data * 255.0), 0, 255).astype(np.uint8)
    chroma = "mono" if video.channels == 1 else "444"
    header = f"YUV4MPEG2 W{video.width} H{video.height} " \
             f"F{video.fps[0]}:{video.fps[1]} Ip A1:1 C{chroma}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for i in range(video.frames):
            fh.write(b"FRAME\n")
            frame = arr[i]
            if video.channels == 3:
                frame = frame.transpose(2, 0, 1)
            fh.write(frame.tobytes())


def _dims_sidecar(path) -> Path:
    return Path(str(path) + ".dims.json")


def read_raw(path) -> VideoTensor:
    sidecar = _dims_sidecar(path)
    if not sidecar.exists():
        raise SizeMismatch(f"raw input needs a dims sidecar at {sidecar}")
    dims = json.loads(sidecar.read_text())
    L, H, W = int(dims["frames"]), int(dims["height"]), int(dims["width"])
    channels = int(dims.get("channels", 1))
    fps = tuple(dims.get("fps", (30, 1)))
    raw = np.fromfile(path, dtype=np.uint8)
    expected = L * H * W * channels
    if raw.size != expected:
        raise SizeMismatch(f"{path}: {raw.size} bytes, sidecar implies {expected}")
    shape = (L, H, W) if channels == 1 else (L, H, W, channels)
    return VideoTensor(data=raw.reshape(shape).astype(np.float64) / 255.0,
                       fps=(int(fps[0]), int(fps[1])))


def write_raw(path, video: VideoTensor) -> None:
    arr = np.clip(np.round(video.data * 255.0), 0, 255).astype(np.uint8)
    arr.tofile(path)
    _dims_sidecar(path).write_text(json.dumps({
        "frames": video.frames, "height": video.height, "width": video.width,
        "channels": video.channels, "fps": list(video.fps),
    }))


def read_video(path) -> VideoTensor:
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".y4m":
        return read_y4m(path)
    return read_raw(path)


def write_video(path, video: VideoTensor) -> None:
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".y4m":
        write_y4m(path, video)
    else:
        write_raw(path, video)
