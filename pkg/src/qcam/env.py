"""Quantum camera environment: characters in, damaged measured images out.

The agent never sees the clean image. Its state is the concatenated
penultimate activations and logits of the public and private classifiers on
the most recently measured (damaged) image.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .actions import ActionCatalog, decode_action_index, run_action_set
from .classifiers import Classifier, extract_features
from .data import Dataset
from .frqi import DEFAULT_SHOTS, GrayImage
from .rng import derive_seed, make_rng

RECENT_WINDOW = 8


@dataclass(frozen=True)
class PublicBased:
    bonus: float = 1.0


@dataclass(frozen=True)
class PublicPrivate:
    bonus: float = 1.0
    penalty: float = 1.0


@dataclass(frozen=True)
class LengthBased:
    threshold: float = 0.6
    per_step: float = 1.0


@dataclass(frozen=True)
class AccuracyBased:
    scale: float = 1.0


RewardPolicy = Union[PublicBased, PublicPrivate, LengthBased, AccuracyBased]
POLICIES = {
    "public": PublicBased,
    "public_private": PublicPrivate,
    "length": LengthBased,
    "accuracy": AccuracyBased,
}


def make_policy(name: str, **kwargs) -> RewardPolicy:
    if name not in POLICIES:
        raise ValueError(f"unknown reward policy {name!r}; choose from {sorted(POLICIES)}")
    policy = POLICIES[name](**kwargs)
    for key, val in vars(policy).items():
        if key == "threshold":
            if not 0.0 < val < 1.0:
                raise ValueError("threshold must lie in (0, 1)")
        elif val <= 0:
            raise ValueError(f"{key} must be positive")
    return policy


def policy_name(policy: RewardPolicy) -> str:
    return next(k for k, v in POLICIES.items() if isinstance(policy, v))


@dataclass
class EpisodeStats:
    steps: int = 0
    public_correct: int = 0
    steps_above: int = 0
    recent: deque = field(default_factory=lambda: deque(maxlen=RECENT_WINDOW))

    @property
    def running_accuracy(self) -> float:
        return self.public_correct / self.steps if self.steps else 0.0

    def record(self, public_correct: bool, threshold: float | None = None) -> None:
        self.steps += 1
        self.public_correct += int(public_correct)
        self.recent.append(bool(public_correct))
        if threshold is not None and self.running_accuracy >= threshold:
            self.steps_above += 1


def compute_reward(
    policy: RewardPolicy, public_correct: bool, private_correct: bool, stats: EpisodeStats
) -> float:
    """Reward for the step just recorded in ``stats``."""
    if isinstance(policy, PublicBased):
        return policy.bonus if public_correct else 0.0
    if isinstance(policy, PublicPrivate):
        return (policy.bonus if public_correct else 0.0) - (policy.penalty if private_correct else 0.0)
    if isinstance(policy, LengthBased):
        return policy.per_step * stats.steps_above
    if isinstance(policy, AccuracyBased):
        return policy.scale * stats.running_accuracy
    raise TypeError(f"unsupported policy {policy!r}")


@dataclass
class EnvConfig:
    public: Classifier
    private: Classifier
    dataset: Dataset
    catalog: ActionCatalog
    policy: RewardPolicy = field(default_factory=PublicBased)
    episode_length: int = 32
    default_shots: int = DEFAULT_SHOTS
    seed: int = 0
    sequential: bool = False  # walk the dataset in order instead of sampling

    def __post_init__(self):
        if self.episode_length < 1:
            raise ValueError("episode_length must be >= 1")
        if len(self.dataset) == 0:
            raise ValueError("environment needs a non-empty dataset")


@dataclass
class StepResult:
    next_state: np.ndarray
    reward: float
    done: bool
    damaged_image: GrayImage
    truth: tuple[int, int]  # (public_label, private_label)
    action: int
    predictions: tuple[int, int] = (0, 0)
    action_label: str = ""

    @property
    def public_correct(self) -> bool:
        return self.predictions[0] == self.truth[0]

    @property
    def private_correct(self) -> bool:
        return self.predictions[1] == self.truth[1]

    def log_line(self, step: int) -> str:
        return json.dumps({
            "step": step,
            "action": self.action,
            "action_set": self.action_label,
            "reward": self.reward,
            "public_label": self.truth[0],
            "private_label": self.truth[1],
            "public_pred": self.predictions[0],
            "private_pred": self.predictions[1],
            "done": self.done,
        })


class QuantumCameraEnv:
    def __init__(self, config: EnvConfig):
        self.config = config
        self.num_actions = config.catalog.num_action_sets
        self.state_dim = (
            config.public.config.hidden + config.public.config.num_classes
            + config.private.config.hidden + config.private.config.num_classes
        )
        self._cursor = 0
        self._episode_seed = config.seed
        self._current: int | None = None
        self._rng = make_rng(config.seed)
        self.stats = EpisodeStats()
        self.total_steps = 0

    def _draw(self) -> int:
        if self.config.sequential:
            i = self._cursor % len(self.config.dataset)
            self._cursor += 1
            return i
        return int(self._rng.integers(len(self.config.dataset)))

    def features(self, img: np.ndarray) -> np.ndarray:
        return np.concatenate([
            extract_features(self.config.public, img),
            extract_features(self.config.private, img),
        ])

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._episode_seed = int(seed)
            if not self.config.sequential:
                self._rng = make_rng(derive_seed(seed, "draw"))
        self.stats = EpisodeStats()
        self._current = self._draw()
        img = GrayImage.from_array(self.config.dataset.images[self._current])
        plain = run_action_set(img, None, None, derive_seed(self._episode_seed, "plain"),
                               self.config.default_shots)
        return self.features(plain.as_array())

    def step(self, action: int) -> StepResult:
        if self._current is None:
            raise RuntimeError("call reset() before step()")
        cfg = self.config
        if not 0 <= action < self.num_actions:
            raise ValueError(f"action {action} out of range [0, {self.num_actions})")
        action_set = decode_action_index(int(action), len(cfg.catalog), cfg.catalog.max_select)
        idx = self._current
        img = GrayImage.from_array(cfg.dataset.images[idx])
        seed = derive_seed(self._episode_seed, "step", self.stats.steps)
        damaged = run_action_set(img, action_set, cfg.catalog, seed, cfg.default_shots)
        arr = damaged.as_array()
        priv_label = int(cfg.dataset.labels[idx])
        truth = (int(priv_label >= 10), priv_label)
        feats_pub = extract_features(cfg.public, arr)
        feats_priv = extract_features(cfg.private, arr)
        pub_pred = int(feats_pub[cfg.public.config.hidden:].argmax())
        priv_pred = int(feats_priv[cfg.private.config.hidden:].argmax())
        threshold = cfg.policy.threshold if isinstance(cfg.policy, LengthBased) else None
        self.stats.record(pub_pred == truth[0], threshold)
        reward = compute_reward(cfg.policy, pub_pred == truth[0], priv_pred == truth[1], self.stats)
        done = self.stats.steps >= cfg.episode_length
        if isinstance(cfg.policy, LengthBased) and len(self.stats.recent) == RECENT_WINDOW:
            if sum(self.stats.recent) / RECENT_WINDOW < cfg.policy.threshold:
                done = True
        self.total_steps += 1
        # after a terminal step the next character is drawn by reset()
        self._current = None if done else self._draw()
        return StepResult(
            next_state=np.concatenate([feats_pub, feats_priv]),
            reward=float(reward),
            done=done,
            damaged_image=damaged,
            truth=truth,
            action=int(action),
            predictions=(pub_pred, priv_pred),
            action_label=cfg.catalog.describe(action_set),
        )
