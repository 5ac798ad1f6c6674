"""Character datasets: IDX ingestion, label mapping, resampling, augmentations.

Private labels: 0-9 are digits, 10-35 are uppercase A-Z. The public label is
0 for a digit and 1 for a letter.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .actions import ActionCatalog, run_action_set, sample_action_set
from .frqi import DEFAULT_SHOTS, GrayImage
from .rng import derive_seed, make_rng

NUM_PRIVATE = 36
NUM_PUBLIC = 2
IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
CHARS = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ"

# EMNIST "balanced" mapping: label -> ASCII code.
BALANCED_MAPPING = {i: ord(c) for i, c in enumerate(CHARS)}
BALANCED_MAPPING.update(
    {36 + i: ord(c) for i, c in enumerate("abdefghnqrt")}
)


class IdxError(ValueError):
    pass


class IdxMagicError(IdxError):
    pass


class IdxTruncatedError(IdxError):
    pass


class IdxCountMismatchError(IdxError):
    pass


def public_label(private_label: int) -> int:
    return int(private_label >= 10)


def char_to_private(ch: str) -> int | None:
    if ch.isdigit() and ch.isascii():
        return int(ch)
    if "A" <= ch <= "Z":
        return 10 + ord(ch) - ord("A")
    return None


@dataclass(frozen=True)
class LabeledImage:
    image: GrayImage
    private_label: int

    def __post_init__(self):
        if not 0 <= self.private_label < NUM_PRIVATE:
            raise ValueError(f"private label {self.private_label} out of range")

    @property
    def public_label(self) -> int:
        return public_label(self.private_label)


@dataclass
class Dataset:
    """A batch of 16x16 images with their private labels, kept as arrays."""

    images: np.ndarray  # (N, side, side) float64 in [0, 1]
    labels: np.ndarray  # (N,) private labels

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 3 or self.images.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"images {self.images.shape} and labels {self.labels.shape} do not line up"
            )

    def __len__(self) -> int:
        return self.labels.shape[0]

    def __getitem__(self, i: int) -> LabeledImage:
        return LabeledImage(GrayImage.from_array(self.images[i]), int(self.labels[i]))

    @property
    def public_labels(self) -> np.ndarray:
        return (self.labels >= 10).astype(np.int64)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.images[idx], self.labels[idx])

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.images, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.labels, dtype="<i8").tobytes())
        return h.hexdigest()

    @classmethod
    def concat(cls, parts: list["Dataset"]) -> "Dataset":
        return cls(np.concatenate([p.images for p in parts]), np.concatenate([p.labels for p in parts]))

    def save(self, path) -> Path:
        path = Path(path)
        np.savez(path, images=self.images, labels=self.labels)
        return path

    @classmethod
    def load(cls, path) -> "Dataset":
        with np.load(path) as z:
            return cls(z["images"], z["labels"])


@dataclass
class DatasetSplit:
    train: Dataset
    val: Dataset
    test: Dataset
    seed: int
    indices: dict[str, list[int]]

    def manifest(self) -> dict:
        return {
            "seed": self.seed,
            "sizes": {k: len(v) for k, v in self.indices.items()},
            "indices": self.indices,
            "digests": {
                "train": self.train.digest(),
                "val": self.val.digest(),
                "test": self.test.digest(),
            },
        }


# -- IDX -------------------------------------------------------------------

def _read_idx_header(raw: bytes, expected_magic: int, ndim: int, what: str) -> tuple[int, ...]:
    if len(raw) < 4:
        raise IdxTruncatedError(f"{what}: file truncated at offset 0 (no magic number)")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise IdxMagicError(
            f"{what}: bad magic 0x{magic:08x} at offset 0, expected 0x{expected_magic:08x}"
        )
    need = 4 + 4 * ndim
    if len(raw) < need:
        raise IdxTruncatedError(f"{what}: header truncated at offset {len(raw)}, need {need} bytes")
    return struct.unpack(f">{ndim}I", raw[4:need])


def load_idx(images_path, labels_path, transpose: bool = True) -> list[tuple[np.ndarray, int]]:
    """Read an IDX image/label file pair.

    EMNIST stores glyphs transposed; ``transpose`` undoes that so glyphs are upright.
    """
    iraw = Path(images_path).read_bytes()
    lraw = Path(labels_path).read_bytes()
    n_img, rows, cols = _read_idx_header(iraw, IMAGE_MAGIC, 3, "images")
    (n_lab,) = _read_idx_header(lraw, LABEL_MAGIC, 1, "labels")
    if n_img != n_lab:
        raise IdxCountMismatchError(f"{n_img} images but {n_lab} labels")
    body = 16 + n_img * rows * cols
    if len(iraw) < body:
        raise IdxTruncatedError(
            f"images: payload truncated at offset {len(iraw)}, expected {body} bytes"
        )
    if len(lraw) < 8 + n_lab:
        raise IdxTruncatedError(
            f"labels: payload truncated at offset {len(lraw)}, expected {8 + n_lab} bytes"
        )
    pix = np.frombuffer(iraw, dtype=np.uint8, count=n_img * rows * cols, offset=16)
    pix = pix.reshape(n_img, rows, cols).astype(np.float64) / 255.0
    if transpose:
        pix = pix.transpose(0, 2, 1)
    labels = np.frombuffer(lraw, dtype=np.uint8, count=n_lab, offset=8)
    return [(pix[i], int(labels[i])) for i in range(n_img)]


def write_idx(images_path, labels_path, images: np.ndarray, labels, transpose: bool = True) -> None:
    """Write 8-bit IDX files; ``images`` are upright floats in [0, 1]."""
    arr = np.asarray(images, dtype=np.float64)
    if transpose:
        arr = arr.transpose(0, 2, 1)
    n, rows, cols = arr.shape
    pix = np.round(np.clip(arr, 0, 1) * 255).astype(np.uint8)
    lab = np.asarray(labels, dtype=np.uint8)
    Path(images_path).write_bytes(struct.pack(">4I", IMAGE_MAGIC, n, rows, cols) + pix.tobytes())
    Path(labels_path).write_bytes(struct.pack(">2I", LABEL_MAGIC, lab.shape[0]) + lab.tobytes())


def read_mapping(path) -> dict[int, int]:
    """Parse an EMNIST mapping file ("label ascii" per line)."""
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            label, code = line.split()
            out[int(label)] = int(code)
    return out


def write_mapping(path, mapping: dict[int, int] = BALANCED_MAPPING) -> Path:
    path = Path(path)
    path.write_text("".join(f"{k} {v}\n" for k, v in sorted(mapping.items())))
    return path


def map_label(raw_label: int, mapping: dict[int, int] = BALANCED_MAPPING) -> int | None:
    """Private label for a raw dataset label, or None for classes we drop (lowercase)."""
    code = mapping.get(raw_label)
    return None if code is None else char_to_private(chr(code))


# -- resampling ------------------------------------------------------------

def _bilinear_matrix(src: int, dst: int) -> np.ndarray:
    # Half-pixel-centre sampling, clamped at the borders.
    m = np.zeros((dst, src))
    scale = src / dst
    for j in range(dst):
        x = min(max((j + 0.5) * scale - 0.5, 0.0), src - 1)
        x0 = int(math.floor(x))
        x1 = min(x0 + 1, src - 1)
        w = x - x0
        m[j, x0] += 1.0 - w
        m[j, x1] += w
    return m


_M28_16 = _bilinear_matrix(28, 16)


def to_16x16(raw: np.ndarray) -> GrayImage:
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape != (28, 28):
        raise ValueError(f"expected a 28x28 image, got {raw.shape}")
    out = _M28_16 @ raw @ _M28_16.T
    return GrayImage.from_array(np.clip(out, 0.0, 1.0))


def resize_batch(raw: np.ndarray, side: int = 16) -> np.ndarray:
    m = _bilinear_matrix(raw.shape[1], side)
    return np.clip(np.einsum("ij,njk,lk->nil", m, raw, m), 0.0, 1.0)


# -- augmentations ---------------------------------------------------------

def gaussian_kernel(side: int = 4, sigma: float = 1.0) -> np.ndarray:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    offsets = np.arange(side) - (side - 1) / 2.0
    g = np.exp(-(offsets**2) / (2 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def _blur_array(arr: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # Correlation with clamp-to-edge borders; even kernels anchor at index (side-1)//2.
    ks = kernel.shape[0]
    before = (ks - 1) // 2
    after = ks - 1 - before
    pad = [(0, 0)] * (arr.ndim - 2) + [(before, after), (before, after)]
    padded = np.pad(arr, pad, mode="edge")
    out = np.zeros_like(arr)
    h, w = arr.shape[-2:]
    for di in range(ks):
        for dj in range(ks):
            out += kernel[di, dj] * padded[..., di:di + h, dj:dj + w]
    return out


def augment_gaussian_blur(img: GrayImage, kernel_side: int = 4, sigma: float = 1.0) -> GrayImage:
    out = _blur_array(img.as_array(), gaussian_kernel(kernel_side, sigma))
    return GrayImage.from_array(np.clip(out, 0.0, 1.0))


def augment_gaussian_noise(img: GrayImage, sigma: float = 0.3, seed: int = 0) -> GrayImage:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    noise = make_rng(seed).normal(0.0, sigma, img.pixels.shape)
    return GrayImage(img.side, np.clip(img.pixels + noise, 0.0, 1.0))


def augment_quantum_random(
    img: GrayImage, catalog: ActionCatalog, seed: int, shots: int = DEFAULT_SHOTS
) -> GrayImage:
    """Measure ``img`` after a uniformly random action set from ``catalog``."""
    action_set = sample_action_set(catalog, make_rng(derive_seed(seed, "action")))
    return run_action_set(img, action_set, catalog, derive_seed(seed, "run"), shots)


def augment_shot_noise(img: GrayImage, shots: int, seed: int) -> GrayImage:
    """Plain FRQI capture at a reduced shot count."""
    return run_action_set(img, None, None, seed, shots)


def blur_dataset(ds: Dataset, kernel_side: int = 4, sigma: float = 1.0) -> Dataset:
    out = _blur_array(ds.images, gaussian_kernel(kernel_side, sigma))
    return Dataset(np.clip(out, 0.0, 1.0), ds.labels.copy())


def noise_dataset(ds: Dataset, sigma: float = 0.3, seed: int = 0) -> Dataset:
    noise = make_rng(seed).normal(0.0, sigma, ds.images.shape)
    return Dataset(np.clip(ds.images + noise, 0.0, 1.0), ds.labels.copy())


def quantum_random_dataset(
    ds: Dataset, catalog: ActionCatalog, seed: int, shots: int = DEFAULT_SHOTS
) -> Dataset:
    imgs = np.empty_like(ds.images)
    for i in range(len(ds)):
        g = augment_quantum_random(GrayImage.from_array(ds.images[i]), catalog, derive_seed(seed, i), shots)
        imgs[i] = g.as_array()
    return Dataset(imgs, ds.labels.copy())


@dataclass(frozen=True)
class AugmentationRecipe:
    """Fractions of a training set replaced by augmented copies (rest stays clean)."""

    quantum_random: float = 0.25
    shot_noise: float = 0.25
    shot_levels: tuple[int, ...] = (4096, 2048, 1024, 512, 256, 128)

    def __post_init__(self):
        if self.quantum_random < 0 or self.shot_noise < 0 or self.quantum_random + self.shot_noise > 1:
            raise ValueError("augmentation fractions must be non-negative and sum to <= 1")

    @classmethod
    def clean(cls) -> "AugmentationRecipe":
        return cls(0.0, 0.0)


def apply_recipe(
    ds: Dataset, recipe: AugmentationRecipe, catalog: ActionCatalog | None, seed: int,
    shots: int = DEFAULT_SHOTS,
) -> Dataset:
    n = len(ds)
    order = make_rng(derive_seed(seed, "recipe")).permutation(n)
    n_q = int(round(recipe.quantum_random * n))
    n_s = int(round(recipe.shot_noise * n))
    if n_q and catalog is None:
        raise ValueError("quantum augmentation needs an action catalog")
    imgs = ds.images.copy()
    for rank, i in enumerate(order[: n_q + n_s]):
        img = GrayImage.from_array(ds.images[i])
        s = derive_seed(seed, "aug", int(i))
        if rank < n_q:
            out = augment_quantum_random(img, catalog, s, shots)
        else:
            level = recipe.shot_levels[int(make_rng(s).integers(len(recipe.shot_levels)))]
            out = augment_shot_noise(img, level, s)
        imgs[i] = out.as_array()
    return Dataset(imgs, ds.labels.copy())


# -- splits ----------------------------------------------------------------

def balanced_split(
    ds: Dataset, n_train: int, n_val: int, n_test: int, seed: int
) -> DatasetSplit:
    """Disjoint class-balanced train/val/test split (per-class counts differ by <= 1)."""
    rng = make_rng(derive_seed(seed, "split"))
    by_class = [rng.permutation(np.flatnonzero(ds.labels == c)) for c in range(NUM_PRIVATE)]
    present = [c for c in range(NUM_PRIVATE) if by_class[c].size]
    if not present:
        raise ValueError("dataset is empty")
    cursor = {c: 0 for c in present}
    out: dict[str, list[int]] = {}
    for name, total in (("train", n_train), ("val", n_val), ("test", n_test)):
        per, extra = divmod(total, len(present))
        picked = []
        for rank, c in enumerate(present):
            want = per + (1 if rank < extra else 0)
            start = cursor[c]
            if start + want > by_class[c].size:
                raise ValueError(
                    f"class {CHARS[c]} has {by_class[c].size} samples, "
                    f"not enough for the requested split"
                )
            picked.extend(int(i) for i in by_class[c][start:start + want])
            cursor[c] = start + want
        out[name] = sorted(picked)
    return DatasetSplit(
        ds.subset(out["train"]), ds.subset(out["val"]), ds.subset(out["test"]), seed, out
    )


def load_emnist_like(
    images_path, labels_path, mapping: dict[int, int] | None = None
) -> Dataset:
    """Load IDX files, keep digits and uppercase letters, rescale to 16x16."""
    mapping = mapping or BALANCED_MAPPING
    raws, labels = [], []
    for raw, lab in load_idx(images_path, labels_path):
        priv = map_label(lab, mapping)
        if priv is not None:
            raws.append(raw)
            labels.append(priv)
    if not raws:
        raise ValueError("no digit or uppercase samples found")
    return Dataset(resize_batch(np.stack(raws)), np.array(labels))


def write_split_manifest(path, split: DatasetSplit) -> Path:
    path = Path(path)
    path.write_text(json.dumps(split.manifest(), indent=1))
    return path
