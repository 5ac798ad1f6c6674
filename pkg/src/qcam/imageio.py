"""Binary PGM (P5) and CSV dumps for images, angles and histograms."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .frqi import AngleImage, GrayImage

_PGM_HEADER = re.compile(rb"^P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s")


def pgm_bytes(img: GrayImage) -> bytes:
    data = np.round(img.pixels * 255.0).astype(np.uint8).tobytes()
    return f"P5\n{img.side} {img.side}\n255\n".encode("ascii") + data


def write_pgm(path, img: GrayImage) -> Path:
    path = Path(path)
    path.write_bytes(pgm_bytes(img))
    return path


def parse_pgm(raw: bytes) -> np.ndarray:
    m = _PGM_HEADER.match(raw)
    if not m:
        raise ValueError("not a binary PGM (P5) file")
    width, height, maxval = (int(g) for g in m.groups())
    if not 0 < maxval < 256:
        raise ValueError(f"only 8-bit PGM is supported (maxval {maxval})")
    body = raw[m.end():]
    if len(body) < width * height:
        raise ValueError(f"PGM payload truncated: {len(body)} < {width * height} bytes")
    arr = np.frombuffer(body[: width * height], dtype=np.uint8).reshape(height, width)
    return arr.astype(np.float64) / maxval


def read_pgm(path) -> GrayImage:
    return GrayImage.from_array(parse_pgm(Path(path).read_bytes()))


def write_angles_csv(path, angles: AngleImage) -> Path:
    path = Path(path)
    side = angles.side
    rows = angles.thetas.reshape(side, side)
    path.write_text("\n".join(",".join(repr(float(v)) for v in row) for row in rows) + "\n")
    return path


def read_angles_csv(path) -> AngleImage:
    rows = np.loadtxt(path, delimiter=",", ndmin=2)
    side = rows.shape[0]
    return AngleImage(side.bit_length() - 1, rows.ravel())
