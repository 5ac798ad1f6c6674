"""Public (digit vs letter) and private (which character) CNN classifiers."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .actions import ActionCatalog
from .data import NUM_PRIVATE, NUM_PUBLIC, AugmentationRecipe, Dataset, apply_recipe
from .nn import (
    Network,
    NetworkSpec,
    OptimizerState,
    adam_step,
    backward,
    forward,
    init_network,
    load_network,
    save_network,
    softmax_cross_entropy,
)
from .rng import derive_seed, make_rng

log = logging.getLogger(__name__)

TASKS = {"public": NUM_PUBLIC, "private": NUM_PRIVATE}
PENULTIMATE = 64


@dataclass(frozen=True)
class ClassifierConfig:
    task: str = "public"
    channels: tuple[int, int] = (16, 32)
    hidden: int = PENULTIMATE
    side: int = 16
    epochs: int = 8
    batch_size: int = 64
    lr: float = 1e-3

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {sorted(TASKS)}, got {self.task!r}")
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def num_classes(self) -> int:
        return TASKS[self.task]

    def network_spec(self) -> NetworkSpec:
        c1, c2 = self.channels
        flat = c2 * (self.side // 4) ** 2
        return NetworkSpec(
            (1, self.side, self.side),
            (
                {"kind": "conv", "in": 1, "out": c1, "k": 3},
                {"kind": "relu"},
                {"kind": "maxpool", "size": 2},
                {"kind": "conv", "in": c1, "out": c2, "k": 3},
                {"kind": "relu"},
                {"kind": "maxpool", "size": 2},
                {"kind": "flatten"},
                {"kind": "dense", "in": flat, "out": self.hidden},
                {"kind": "relu"},
                {"kind": "dense", "in": self.hidden, "out": self.num_classes},
            ),
        )


@dataclass
class Classifier:
    config: ClassifierConfig
    net: Network

    def labels_of(self, ds: Dataset) -> np.ndarray:
        return ds.labels if self.config.task == "private" else ds.public_labels

    def logits(self, images: np.ndarray, batch: int = 512) -> np.ndarray:
        images = np.asarray(images, dtype=np.float64)
        if images.ndim == 2:
            images = images[None]
        out = []
        for s in range(0, images.shape[0], batch):
            y, _ = forward(self.net, images[s:s + batch, None])
            out.append(y)
        return np.concatenate(out)

    def predict(self, images: np.ndarray) -> np.ndarray:
        return self.logits(images).argmax(axis=1)

    def copy(self) -> "Classifier":
        return Classifier(self.config, self.net.copy())

    def save(self, path) -> Path:
        return save_network(path, self.net, extra={"classifier": asdict(self.config)})

    @classmethod
    def load(cls, path) -> "Classifier":
        net = load_network(path)
        raw = json.loads(_read_header(path))["extra"]["classifier"]
        return cls(ClassifierConfig(**raw), net)


def _read_header(path) -> bytes:
    raw = Path(path).read_bytes()
    n = int.from_bytes(raw[8:16], "little")
    return raw[16:16 + n]


@dataclass
class EvalReport:
    accuracy: float
    per_class: dict[int, float]
    n: int
    correct: int = 0

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "n": self.n, "correct": self.correct,
                "per_class": {str(k): v for k, v in self.per_class.items()}}

    def csv_row(self, label: str) -> str:
        return f"{label},{self.accuracy:.6f},{self.correct},{self.n}"


@dataclass
class TrainLog:
    epoch_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["epoch,loss,val_accuracy"]
        for i, loss in enumerate(self.epoch_loss):
            va = self.val_accuracy[i] if i < len(self.val_accuracy) else ""
            lines.append(f"{i + 1},{loss:.8f},{va}")
        return "\n".join(lines) + "\n"


def score(predictions: np.ndarray, labels: np.ndarray) -> EvalReport:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError(f"{predictions.shape[0]} predictions for {labels.shape[0]} labels")
    hits = predictions == labels
    per_class = {int(c): float(hits[labels == c].mean()) for c in np.unique(labels)}
    n = int(labels.shape[0])
    correct = int(hits.sum())
    return EvalReport(correct / n if n else 0.0, per_class, n, correct)


def evaluate(clf: Classifier, ds: Dataset) -> EvalReport:
    if ds.images.shape[1:] != (clf.config.side, clf.config.side):
        raise ValueError(f"images of shape {ds.images.shape[1:]} do not fit a {clf.config.side}px classifier")
    return score(clf.predict(ds.images), clf.labels_of(ds))


def _fit(clf: Classifier, ds: Dataset, epochs: int, lr: float, seed: int,
         val: Dataset | None = None) -> TrainLog:
    labels = clf.labels_of(ds)
    opt = OptimizerState(lr=lr)
    rng = make_rng(seed)
    bs = clf.config.batch_size
    tlog = TrainLog()
    x_all = ds.images[:, None]
    for epoch in range(epochs):
        order = rng.permutation(len(ds))
        total = 0.0
        for s in range(0, len(order), bs):
            idx = order[s:s + bs]
            logits, trace = forward(clf.net, x_all[idx], record=True)
            loss, g = softmax_cross_entropy(logits, labels[idx])
            adam_step(clf.net, backward(clf.net, trace, g), opt)
            total += loss * len(idx)
        tlog.epoch_loss.append(total / len(order))
        if val is not None and len(val):
            tlog.val_accuracy.append(evaluate(clf, val).accuracy)
        log.info("%s epoch %d loss %.4f", clf.config.task, epoch + 1, tlog.epoch_loss[-1])
    return tlog


def train_classifier(
    config: ClassifierConfig,
    dataset: Dataset,
    recipe: AugmentationRecipe | None = None,
    seed: int = 0,
    catalog: ActionCatalog | None = None,
    val: Dataset | None = None,
) -> tuple[Classifier, TrainLog]:
    """Train from scratch; ``recipe`` swaps part of the data for augmented copies."""
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    if recipe is not None:
        dataset = apply_recipe(dataset, recipe, catalog, derive_seed(seed, "augment"))
    clf = Classifier(config, init_network(config.network_spec(), derive_seed(seed, "init")))
    tlog = _fit(clf, dataset, config.epochs, config.lr, derive_seed(seed, "order"), val)
    return clf, tlog


def finetune(
    clf: Classifier, generated: Dataset, epochs: int = 5, seed: int = 0, lr_scale: float = 0.1
) -> Classifier:
    """Retrain every layer of a copy at ``lr_scale`` times the base rate."""
    if len(generated) == 0:
        raise ValueError("cannot finetune on an empty dataset")
    tuned = clf.copy()
    _fit(tuned, generated, epochs, clf.config.lr * lr_scale, derive_seed(seed, "finetune"))
    return tuned


def extract_features(clf: Classifier, images: np.ndarray) -> np.ndarray:
    """Penultimate activations concatenated with logits: 66 (public) or 100 (private) wide."""
    images = np.asarray(images, dtype=np.float64)
    single = images.ndim == 2
    if single:
        images = images[None]
    last = len(clf.net.spec.layers) - 1
    hidden, _ = forward(clf.net, images[:, None], upto=last)
    logits = hidden @ clf.net.params[f"{last}.W"] + clf.net.params[f"{last}.b"]
    feats = np.concatenate([hidden, logits], axis=1)
    return feats[0] if single else feats


def feature_width(config: ClassifierConfig) -> int:
    return config.hidden + config.num_classes


def with_epochs(config: ClassifierConfig, epochs: int) -> ClassifierConfig:
    return replace(config, epochs=epochs)
