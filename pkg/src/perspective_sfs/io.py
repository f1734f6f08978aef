"""File formats: binary PGM, little-endian PFM, key=value manifests, CSV traces."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


class FormatError(ValueError):
    pass


def _read_header_tokens(buf: bytes, count: int):
    """Return ``count`` whitespace-separated header tokens and the payload offset."""
    tokens = []
    pos = 0
    n = len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos : pos + 1] == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated header")
        tokens.append(buf[start:pos].decode("ascii"))
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def write_pgm(path, levels: np.ndarray):
    levels = np.asarray(levels)
    if levels.ndim != 2:
        raise ValueError("PGM needs a 2-D array")
    if levels.dtype != np.uint8:
        if levels.min() < 0 or levels.max() > 255:
            raise ValueError("PGM levels must lie in 0..255")
        levels = np.floor(levels + 0.5).astype(np.uint8)
    h, w = levels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(levels).tobytes())


def read_pgm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    tokens, offset = _read_header_tokens(buf, 4)
    if tokens[0] != "P5":
        raise FormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    payload = buf[offset : offset + w * h]
    if len(payload) != w * h:
        raise FormatError(f"{path}: raster is truncated")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy()


def write_pfm(path, data: np.ndarray):
    """Single-channel PFM, little-endian, rows stored bottom to top."""
    data = np.asarray(data, dtype="<f4")
    if data.ndim != 2:
        raise ValueError("PFM needs a 2-D array")
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(np.ascontiguousarray(np.flipud(data)).tobytes())


def read_pfm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    tokens, offset = _read_header_tokens(buf, 4)
    if tokens[0] != "Pf":
        raise FormatError(f"{path}: not a greyscale PFM (magic {tokens[0]!r})")
    w, h = int(tokens[1]), int(tokens[2])
    scale = float(tokens[3])
    dtype = "<f4" if scale < 0 else ">f4"
    payload = buf[offset : offset + 4 * w * h]
    if len(payload) != 4 * w * h:
        raise FormatError(f"{path}: raster is truncated")
    data = np.frombuffer(payload, dtype=dtype).reshape(h, w)
    return np.flipud(data).astype(np.float32)


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(v) for v in value)
    return str(value)


def serialise_manifest(entries: dict) -> str:
    lines = []
    for key, value in entries.items():
        text = format_value(value)
        if "=" in key or any(c in key or c in text for c in "\r\n"):
            raise ValueError(f"manifest entry {key!r} cannot be serialised on one line")
        lines.append(f"{key}={text}\n")
    return "".join(lines)


def parse_manifest(text: str) -> dict:
    entries = {}
    for line in text.split("\n"):
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"manifest line without '=': {line!r}")
        entries[key] = value
    return entries


def write_manifest(path, entries: dict):
    Path(path).write_text(serialise_manifest(entries), encoding="utf-8")


def read_manifest(path) -> dict:
    return parse_manifest(Path(path).read_text(encoding="utf-8"))


def write_trace(path, traces):
    """``traces`` is ``[(level, [(iteration, energy), ...]), ...]``."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["iteration", "level", "energy"])
        for level, samples in traces:
            for iteration, energy in samples:
                writer.writerow([iteration, level, repr(float(energy))])


def read_trace(path):
    with open(path, newline="") as f:
        return [(int(r["iteration"]), int(r["level"]), float(r["energy"])) for r in csv.DictReader(f)]
