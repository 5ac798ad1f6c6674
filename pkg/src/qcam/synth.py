"""Offline stand-in for EMNIST: font-rendered digits and uppercase letters.

Glyphs are rendered white-on-black, randomly rotated, sheared, thickened and
shifted, fitted into a 20x20 box inside a 28x28 frame and lightly blurred,
then written as EMNIST-style IDX files (transposed storage, balanced labels).
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFilter, ImageFont

from .data import BALANCED_MAPPING, CHARS, write_idx, write_mapping
from .rng import derive_seed, make_rng

log = logging.getLogger(__name__)

_FONT_NAMES = (
    "DejaVuSans.ttf", "DejaVuSans-Bold.ttf", "DejaVuSans-Oblique.ttf",
    "DejaVuSans-BoldOblique.ttf", "DejaVuSansMono.ttf", "DejaVuSansMono-Bold.ttf",
    "DejaVuSansMono-Oblique.ttf", "DejaVuSerif.ttf", "DejaVuSerif-Bold.ttf",
    "DejaVuSerif-Italic.ttf", "DejaVuSerif-BoldItalic.ttf", "STIXGeneral.ttf",
    "STIXGeneralBol.ttf", "STIXGeneralItalic.ttf", "STIXGeneralBolIta.ttf",
    "cmr10.ttf", "cmss10.ttf", "cmtt10.ttf", "cmb10.ttf",
)
_CANVAS = 72


def font_paths() -> list[Path]:
    import matplotlib

    root = Path(matplotlib.get_data_path()) / "fonts" / "ttf"
    found = [root / n for n in _FONT_NAMES if (root / n).exists()]
    if not found:
        raise RuntimeError(f"no usable fonts under {root}")
    return found


def render_glyph(ch: str, font_path: Path, rng: np.random.Generator) -> np.ndarray:
    """One 28x28 glyph in [0, 1] with random geometric jitter."""
    font = ImageFont.truetype(str(font_path), size=int(rng.integers(40, 52)))
    img = Image.new("L", (_CANVAS, _CANVAS), 0)
    draw = ImageDraw.Draw(img)
    stroke = int(rng.integers(0, 4))
    draw.text((_CANVAS / 2, _CANVAS / 2), ch, fill=255, font=font, anchor="mm",
              stroke_width=stroke, stroke_fill=255)
    shear = rng.uniform(-0.25, 0.25)
    img = img.transform(img.size, Image.AFFINE, (1, shear, -shear * _CANVAS / 2, 0, 1, 0),
                        resample=Image.BILINEAR)
    img = img.rotate(rng.uniform(-14, 14), resample=Image.BILINEAR)
    bbox = img.getbbox()
    if bbox is None:
        raise RuntimeError(f"font {font_path.name} rendered nothing for {ch!r}")
    img = img.crop(bbox)
    w, h = img.size
    box = rng.uniform(17, 21)
    scale = box / max(w, h)
    nw = max(1, int(round(w * scale * rng.uniform(0.85, 1.0))))
    nh = max(1, int(round(h * scale)))
    img = img.resize((nw, nh), Image.LANCZOS)
    frame = Image.new("L", (28, 28), 0)
    ox = (28 - nw) // 2 + int(rng.integers(-2, 3))
    oy = (28 - nh) // 2 + int(rng.integers(-2, 3))
    frame.paste(img, (min(max(ox, 0), 28 - nw), min(max(oy, 0), 28 - nh)))
    frame = frame.filter(ImageFilter.GaussianBlur(radius=rng.uniform(0.3, 1.0)))
    arr = np.asarray(frame, dtype=np.float64)
    peak = arr.max()
    return arr / peak if peak > 0 else arr


def generate(per_class: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """``per_class`` 28x28 samples for each of the 36 characters, with balanced labels."""
    fonts = font_paths()
    images = np.empty((per_class * len(CHARS), 28, 28))
    labels = np.empty(per_class * len(CHARS), dtype=np.int64)
    k = 0
    for label, ch in enumerate(CHARS):
        rng = make_rng(derive_seed(seed, "glyph", label))
        for _ in range(per_class):
            font = fonts[int(rng.integers(len(fonts)))]
            images[k] = render_glyph(ch, font, rng)
            labels[k] = label
            k += 1
    order = make_rng(derive_seed(seed, "shuffle")).permutation(k)
    return images[order], labels[order]


def write_synthetic_emnist(out_dir, per_class: int, seed: int, prefix: str = "synth-balanced") -> dict:
    """Write IDX image/label files and the balanced mapping; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    images, labels = generate(per_class, seed)
    paths = {
        "images": out / f"{prefix}-images-idx3-ubyte",
        "labels": out / f"{prefix}-labels-idx1-ubyte",
        "mapping": out / f"{prefix}-mapping.txt",
    }
    write_idx(paths["images"], paths["labels"], images, labels)
    write_mapping(paths["mapping"], BALANCED_MAPPING)
    log.info("wrote %d synthetic glyphs to %s", len(labels), out)
    return paths
