"""Privacy action catalog, action-set enumeration and compilation.

An action set is a non-empty combination of at most ``max_select`` catalog
entries. Sets are indexed size-major, then lexicographically by their sorted
index tuples, which is the order ``itertools.combinations`` yields.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Union

import numpy as np

from .frqi import (
    DEFAULT_SHOTS,
    HALF_PI,
    AngleImage,
    FrqiLayout,
    GrayImage,
    image_to_angles,
    measure_image,
    prepare_frqi_state,
    redact_pixels,
)
from .qsim import Gate, apply_circuit, rx
from .rng import derive_seed, make_rng

QUARTER_PI = math.pi / 4
DEFAULT_SHOT_LEVELS = (4096, 2048, 1024, 512, 256, 128)
DEFAULT_PIXEL_FRACTIONS = (0.05, 0.1, 0.2, 0.3, 0.4, 0.5)


@dataclass(frozen=True)
class CrxGate:
    control: int  # positional qubit p_k
    control_value: int = 1
    angle: float = HALF_PI

    def __post_init__(self):
        if self.control_value not in (0, 1):
            raise ValueError("control_value must be 0 or 1")

    def label(self) -> str:
        return f"CRX(p{self.control}={self.control_value})"


@dataclass(frozen=True)
class ShotNoise:
    shots: int

    def __post_init__(self):
        if self.shots < 1:
            raise ValueError("shots must be >= 1")

    def label(self) -> str:
        return f"Shots({self.shots})"


@dataclass(frozen=True)
class PixelNoise:
    fraction: float
    theta_r: float = QUARTER_PI

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError("fraction must lie in (0, 1]")
        if not 0.0 <= self.theta_r <= HALF_PI:
            raise ValueError("theta_r must lie in [0, pi/2]")

    def label(self) -> str:
        return f"Pixels({self.fraction:g})"


BaseAction = Union[CrxGate, ShotNoise, PixelNoise]
_KINDS = {"crx": CrxGate, "shots": ShotNoise, "pixels": PixelNoise}
_KIND_NAMES = {cls: name for name, cls in _KINDS.items()}


@dataclass(frozen=True)
class ActionCatalog:
    actions: tuple[BaseAction, ...]
    max_select: int = 4

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))
        if not self.actions:
            raise ValueError("catalog must hold at least one action")
        if self.max_select < 1:
            raise ValueError("max_select must be >= 1")

    def __len__(self) -> int:
        return len(self.actions)

    def __getitem__(self, i: int) -> BaseAction:
        return self.actions[i]

    @property
    def num_action_sets(self) -> int:
        return count_action_sets(len(self.actions), self.max_select)

    def to_json(self) -> str:
        items = [{"kind": _KIND_NAMES[type(a)], **asdict(a)} for a in self.actions]
        return json.dumps({"max_select": self.max_select, "actions": items}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ActionCatalog":
        doc = json.loads(text)
        actions = []
        for item in doc["actions"]:
            item = dict(item)
            kind = item.pop("kind")
            if kind not in _KINDS:
                raise ValueError(f"unknown action kind {kind!r}")
            actions.append(_KINDS[kind](**item))
        return cls(tuple(actions), int(doc.get("max_select", 4)))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_json())
        return path

    @classmethod
    def load(cls, path) -> "ActionCatalog":
        return cls.from_json(Path(path).read_text())

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def describe(self, action_set: "ActionSet") -> str:
        return "+".join(self.actions[i].label() for i in action_set.indices)


@dataclass(frozen=True)
class ActionSet:
    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise ValueError("action set must be non-empty")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"indices must be strictly increasing, got {idx}")
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class ActionPlan:
    gate_suffix: list[Gate] = field(default_factory=list)
    shots_override: int | None = None
    pixel_redaction: tuple[float, float, int] | None = None  # (fraction, theta_r, seed)

    def redact(self, angles: AngleImage) -> AngleImage:
        """Apply the plan's seeded random pixel redaction, if any."""
        if self.pixel_redaction is None:
            return angles
        fraction, theta_r, seed = self.pixel_redaction
        npx = angles.thetas.shape[0]
        k = min(npx, math.ceil(fraction * npx))
        chosen = make_rng(seed).choice(npx, size=k, replace=False)
        return redact_pixels(angles, chosen, theta_r)


def default_catalog(layout: FrqiLayout | None = None) -> ActionCatalog:
    """16 CRX(pi/2) gates (p0..p7 on 1, then p0..p7 on 0) and 12 noise levels."""
    layout = layout or FrqiLayout(4)
    if layout.n != 4:
        raise ValueError(f"the default catalog is defined for 16x16 images (n=4), got n={layout.n}")
    npos = 2 * layout.n
    actions: list[BaseAction] = []
    actions += [CrxGate(k, 1, HALF_PI) for k in range(npos)]
    actions += [CrxGate(k, 0, HALF_PI) for k in range(npos)]
    actions += [ShotNoise(s) for s in DEFAULT_SHOT_LEVELS]
    actions += [PixelNoise(f, QUARTER_PI) for f in DEFAULT_PIXEL_FRACTIONS]
    return ActionCatalog(tuple(actions), 4)


def reduced_catalog() -> ActionCatalog:
    """Eight-action desk-scale catalog with at most two selections (36 action sets).

    The CRX gates on the top position bits p3 and p7 with both control values,
    plus the two mildest shot and pixel-noise levels.
    """
    actions = (
        CrxGate(3, 1), CrxGate(7, 1), CrxGate(3, 0), CrxGate(7, 0),
        ShotNoise(4096), ShotNoise(1024), PixelNoise(0.05), PixelNoise(0.1),
    )
    return ActionCatalog(actions, 2)


def count_action_sets(n_actions: int, max_select: int) -> int:
    return sum(math.comb(n_actions, k) for k in range(1, min(max_select, n_actions) + 1))


def enumerate_action_sets(catalog: ActionCatalog) -> list[ActionSet]:
    return list(iter_action_sets(len(catalog), catalog.max_select))


def iter_action_sets(n_actions: int, max_select: int) -> Iterator[ActionSet]:
    for k in range(1, min(max_select, n_actions) + 1):
        for combo in itertools.combinations(range(n_actions), k):
            yield ActionSet(combo)


def encode_action_set(action_set: ActionSet, n_actions: int) -> int:
    """Rank of ``action_set`` in the enumeration order."""
    k = len(action_set)
    if action_set.indices[-1] >= n_actions:
        raise ValueError(f"index {action_set.indices[-1]} out of catalog range {n_actions}")
    offset = sum(math.comb(n_actions, j) for j in range(1, k))
    rank = 0
    prev = -1
    for pos, idx in enumerate(action_set.indices):
        remaining = k - pos - 1
        for skipped in range(prev + 1, idx):
            rank += math.comb(n_actions - skipped - 1, remaining)
        prev = idx
    return offset + rank


def decode_action_index(index: int, n_actions: int, max_select: int) -> ActionSet:
    total = count_action_sets(n_actions, max_select)
    if not 0 <= index < total:
        raise ValueError(f"action index {index} out of range [0, {total})")
    k = 1
    while index >= math.comb(n_actions, k):
        index -= math.comb(n_actions, k)
        k += 1
    out = []
    nxt = 0
    for remaining in range(k - 1, -1, -1):
        while True:
            block = math.comb(n_actions - nxt - 1, remaining)
            if index < block:
                break
            index -= block
            nxt += 1
        out.append(nxt)
        nxt += 1
    return ActionSet(tuple(out))


def compile_action_set(
    action_set: ActionSet, catalog: ActionCatalog, seed: int, layout: FrqiLayout | None = None
) -> ActionPlan:
    """Turn an action set into gates plus measurement/redaction overrides.

    Gates keep catalog order. Several shot levels resolve to the smallest;
    several pixel-noise levels resolve to the largest fraction.
    """
    layout = layout or FrqiLayout(4)
    plan = ActionPlan()
    strongest: PixelNoise | None = None
    for i in action_set.indices:
        a = catalog[i]
        if isinstance(a, CrxGate):
            ctl = ((layout.positional(a.control), a.control_value),)
            plan.gate_suffix.append(rx(a.angle, layout.color_qubit, ctl))
        elif isinstance(a, ShotNoise):
            if plan.shots_override is None or a.shots < plan.shots_override:
                plan.shots_override = a.shots
        elif isinstance(a, PixelNoise):
            if strongest is None or a.fraction > strongest.fraction:
                strongest = a
    if strongest is not None:
        plan.pixel_redaction = (strongest.fraction, strongest.theta_r, int(seed))
    return plan


def sample_action_set(catalog: ActionCatalog, rng: np.random.Generator) -> ActionSet:
    idx = int(rng.integers(catalog.num_action_sets))
    return decode_action_index(idx, len(catalog), catalog.max_select)


def run_action_set(
    img: GrayImage,
    action_set: ActionSet | None,
    catalog: ActionCatalog | None,
    seed: int,
    default_shots: int = DEFAULT_SHOTS,
) -> GrayImage:
    """Encode ``img``, apply the compiled action set and return the measured image.

    ``action_set=None`` is a plain FRQI capture with no privacy actions.
    """
    layout = FrqiLayout.for_side(img.side)
    angles = image_to_angles(img)
    shots = default_shots
    suffix: list[Gate] = []
    if action_set is not None:
        plan = compile_action_set(action_set, catalog, derive_seed(seed, "redact"), layout)
        angles = plan.redact(angles)
        suffix = plan.gate_suffix
        if plan.shots_override is not None:
            shots = plan.shots_override
    state = apply_circuit(prepare_frqi_state(angles, layout), suffix)
    return measure_image(state, shots, derive_seed(seed, "measure"), layout)
