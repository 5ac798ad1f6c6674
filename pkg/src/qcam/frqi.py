"""FRQI encoding and decoding of square grayscale images.

Layout: qubit 0 is the color qubit, qubits 1..2n hold the pixel index
``i = y * 2**n + x`` (positional qubit ``p_k`` is qubit ``k + 1`` and carries
bit ``k`` of ``i``). The basis index of (pixel i, color c) is ``(i << 1) | c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .qsim import (
    Circuit,
    MeasurementHistogram,
    StateVector,
    h,
    ry,
    sample_measurements,
)

HALF_PI = math.pi / 2
DEFAULT_SHOTS = 8192


@dataclass(frozen=True)
class GrayImage:
    side: int
    pixels: np.ndarray  # row-major, length side**2, values in [0, 1]

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64).ravel()
        if self.side < 1 or self.side & (self.side - 1):
            raise ValueError(f"side must be a power of two, got {self.side}")
        if px.shape[0] != self.side * self.side:
            raise ValueError(f"expected {self.side**2} pixels, got {px.shape[0]}")
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise ValueError("pixel intensities must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_array(cls, arr) -> "GrayImage":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"expected a square 2-D array, got shape {arr.shape}")
        return cls(arr.shape[0], arr.ravel())

    def as_array(self) -> np.ndarray:
        return self.pixels.reshape(self.side, self.side)


@dataclass(frozen=True)
class AngleImage:
    n: int
    thetas: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.thetas, dtype=np.float64).ravel()
        if th.shape[0] != 1 << (2 * self.n):
            raise ValueError(f"expected {1 << (2 * self.n)} angles, got {th.shape[0]}")
        if th.min() < 0.0 or th.max() > HALF_PI + 1e-12:
            raise ValueError("angles must lie in [0, pi/2]")
        object.__setattr__(self, "thetas", th)

    @property
    def side(self) -> int:
        return 1 << self.n


@dataclass(frozen=True)
class FrqiLayout:
    n: int

    @classmethod
    def for_side(cls, side: int) -> "FrqiLayout":
        if side < 1 or side & (side - 1):
            raise ValueError(f"side must be a power of two, got {side}")
        return cls(side.bit_length() - 1)

    @property
    def side(self) -> int:
        return 1 << self.n

    @property
    def num_pixels(self) -> int:
        return 1 << (2 * self.n)

    @property
    def num_qubits(self) -> int:
        return 2 * self.n + 1

    @property
    def color_qubit(self) -> int:
        return 0

    @property
    def positional_qubits(self) -> list[int]:
        return list(range(1, 2 * self.n + 1))

    def positional(self, k: int) -> int:
        """Qubit index of positional qubit p_k."""
        if not 0 <= k < 2 * self.n:
            raise ValueError(f"positional qubit p{k} out of range for n={self.n}")
        return k + 1

    def pixel_index(self, x: int, y: int) -> int:
        return y * self.side + x

    def basis_index(self, pixel: int, color: int) -> int:
        return (pixel << 1) | color


def image_to_angles(img: GrayImage) -> AngleImage:
    n = img.side.bit_length() - 1
    return AngleImage(n, np.clip(img.pixels * HALF_PI, 0.0, HALF_PI))


def angles_to_image(angles: AngleImage) -> GrayImage:
    return GrayImage(angles.side, np.clip(angles.thetas / HALF_PI, 0.0, 1.0))


def frqi_amplitudes(angles: AngleImage) -> np.ndarray:
    amps = np.empty(2 * angles.thetas.shape[0], dtype=np.complex128)
    scale = 1.0 / angles.side
    amps[0::2] = np.cos(angles.thetas) * scale
    amps[1::2] = np.sin(angles.thetas) * scale
    return amps


def prepare_frqi_state(angles: AngleImage, layout: FrqiLayout | None = None) -> StateVector:
    layout = layout or FrqiLayout(angles.n)
    if layout.n != angles.n:
        raise ValueError(f"layout n={layout.n} does not match image n={angles.n}")
    return StateVector(layout.num_qubits, frqi_amplitudes(angles))


def build_frqi_encoder_circuit(angles: AngleImage, layout: FrqiLayout | None = None) -> Circuit:
    """Hadamards on the position register, then one fully controlled RY(2θ) per pixel."""
    layout = layout or FrqiLayout(angles.n)
    pos = layout.positional_qubits
    circ = Circuit(layout.num_qubits)
    for q in pos:
        circ.append(h(q))
    for i, theta in enumerate(angles.thetas):
        controls = tuple((q, (i >> k) & 1) for k, q in enumerate(pos))
        circ.append(ry(2.0 * float(theta), layout.color_qubit, controls))
    return circ


def decode_histogram(hist: MeasurementHistogram, layout: FrqiLayout) -> GrayImage:
    """Per-pixel conditional estimate θ = arcsin(sqrt(c1 / (c0 + c1)))."""
    if hist.num_qubits != layout.num_qubits or hist.counts.shape[0] != 2 * layout.num_pixels:
        raise ValueError(
            f"histogram over {hist.num_qubits} qubits does not fit a "
            f"{layout.num_qubits}-qubit FRQI layout"
        )
    counts = np.asarray(hist.counts, dtype=np.float64)
    c0 = counts[0::2]
    c1 = counts[1::2]
    total = c0 + c1
    frac = np.divide(c1, total, out=np.zeros_like(c1), where=total > 0)
    theta = np.arcsin(np.sqrt(np.clip(frac, 0.0, 1.0)))
    return GrayImage(layout.side, np.clip(theta / HALF_PI, 0.0, 1.0))


def measure_image(
    state: StateVector, shots: int, seed: int, layout: FrqiLayout
) -> GrayImage:
    return decode_histogram(sample_measurements(state, shots, seed), layout)


def redact_pixels(angles: AngleImage, pixel_indices: Iterable[int], theta_r: float) -> AngleImage:
    if not 0.0 <= theta_r <= HALF_PI:
        raise ValueError(f"redaction angle must lie in [0, pi/2], got {theta_r}")
    idx = np.fromiter((int(i) for i in pixel_indices), dtype=np.int64)
    npx = angles.thetas.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= npx):
        raise ValueError(f"pixel index out of range [0, {npx})")
    thetas = angles.thetas.copy()
    thetas[idx] = theta_r
    return AngleImage(angles.n, thetas)
