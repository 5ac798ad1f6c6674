"""End-to-end orchestration: data, classifiers, DDQN training, policy freezing,
the finetune attack, baselines and the depth benchmark.

Every result row carries the hash of a manifest that pins the configuration,
seeds and the content hashes of every input, so rows can be recomputed and
compared byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import time
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .actions import ActionCatalog, ActionSet, CrxGate, compile_action_set, default_catalog, reduced_catalog
from .agent import AgentConfig, DDQNAgent, StepLog, run_episodes
from .classifiers import Classifier, ClassifierConfig, evaluate, finetune, train_classifier
from .data import (
    NUM_PRIVATE,
    AugmentationRecipe,
    Dataset,
    DatasetSplit,
    balanced_split,
    blur_dataset,
    load_emnist_like,
    noise_dataset,
    quantum_random_dataset,
    read_mapping,
    resize_batch,
)
from .env import EnvConfig, QuantumCameraEnv, make_policy
from .frqi import DEFAULT_SHOTS, FrqiLayout, GrayImage, build_frqi_encoder_circuit, image_to_angles
from .qsim import apply_circuit, circuit_depth, new_zero_state
from .rng import derive_seed, make_rng
from .synth import generate

log = logging.getLogger(__name__)

REWARD_WINDOW = 100
CHANCE = (0.5, 1.0 / NUM_PRIVATE)
BASELINES = ("quantum_random", "blur", "noise")


class ConfigError(ValueError):
    """Invalid run configuration."""


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# -- configuration ---------------------------------------------------------

@dataclass
class RunConfig:
    """One flat document describing a whole run."""

    seed: int = 0
    # data
    idx_images: str = ""
    idx_labels: str = ""
    idx_mapping: str = ""
    synthetic_per_class: int = 250
    n_train: int = 6000
    n_val: int = 500
    n_test: int = 2000
    # classifiers
    cnn_epochs: int = 8
    cnn_batch_size: int = 64
    cnn_lr: float = 1e-3
    aug_quantum_random: float = 0.25
    aug_shot_noise: float = 0.25
    # environment
    catalog: str = "default"
    policy: str = "public"
    episode_length: int = 32
    default_shots: int = DEFAULT_SHOTS
    env_images: int = 0  # training characters for the agent; 0 means the whole train split
    # agent
    train_steps: int = 2000
    gamma: float = 0.99
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 20_000
    batch_size: int = 64
    buffer_capacity: int = 50_000
    target_period: int = 1000
    agent_lr: float = 1e-4
    hidden: tuple = (256, 256)
    log_interval: int = 100
    checkpoint_every: int = 1000
    # attack and baselines
    finetune_epochs: int = 5
    finetune_lr_scale: float = 0.1
    blur_kernel: int = 4
    blur_sigma: float = 1.0
    noise_sigma: float = 0.3
    jobs: int = 1

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.catalog not in ("default", "reduced"):
            raise ConfigError(f"catalog must be 'default' or 'reduced', got {self.catalog!r}")
        for name in ("n_train", "n_test", "train_steps", "log_interval", "checkpoint_every",
                     "episode_length", "default_shots", "jobs", "synthetic_per_class"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.blur_sigma <= 0 or self.noise_sigma <= 0:
            raise ConfigError("blur_sigma and noise_sigma must be positive")
        try:
            make_policy(self.policy)
            self.agent_config()
            self.recipe()
        except ValueError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**raw)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a flat JSON object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    def catalog_obj(self) -> ActionCatalog:
        return default_catalog() if self.catalog == "default" else reduced_catalog()

    def recipe(self) -> AugmentationRecipe:
        return AugmentationRecipe(self.aug_quantum_random, self.aug_shot_noise)

    def classifier_config(self, task: str) -> ClassifierConfig:
        return ClassifierConfig(task=task, epochs=self.cnn_epochs, batch_size=self.cnn_batch_size, lr=self.cnn_lr)

    def agent_config(self) -> AgentConfig:
        return AgentConfig(
            gamma=self.gamma, eps_start=self.eps_start, eps_end=self.eps_end,
            eps_decay_steps=self.eps_decay_steps, batch_size=self.batch_size,
            buffer_capacity=self.buffer_capacity, target_period=self.target_period,
            lr=self.agent_lr, hidden=self.hidden,
        )


# -- manifests and result tables -------------------------------------------

@dataclass
class RunManifest:
    stage: str
    label: str
    config: dict
    seeds: dict
    catalog_hash: str
    dataset_hash: str
    model_hashes: dict
    inputs: dict = field(default_factory=dict)  # role -> path
    training_steps: int | None = None
    created: str = ""

    def hashed_fields(self) -> dict:
        d = asdict(self)
        d.pop("created")
        d.pop("inputs")  # paths may move; content is pinned by the hashes
        return d

    def digest(self) -> str:
        blob = json.dumps(self.hashed_fields(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def to_json(self) -> str:
        d = asdict(self)
        d["hash"] = self.digest()
        return json.dumps(d, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        d = json.loads(text)
        d.pop("hash", None)
        return cls(**d)


@dataclass(frozen=True)
class ResultRow:
    label: str
    public_test: float
    public_finetuned: float
    private_test: float
    private_finetuned: float
    training_steps: int | None = None
    manifest_hash: str = ""

    def __post_init__(self):
        for name in ("public_test", "public_finetuned", "private_test", "private_finetuned"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} is not an accuracy")


COLUMNS = ("label", "public_test", "public_finetuned", "private_test", "private_finetuned",
           "training_steps", "manifest_hash")


def chance_row() -> ResultRow:
    pub, priv = CHANCE
    return ResultRow("chance", pub, pub, priv, priv)


@dataclass
class ResultsTable:
    rows: list[ResultRow] = field(default_factory=list)

    def with_chance(self) -> "ResultsTable":
        if any(r.label == "chance" for r in self.rows):
            return self
        return ResultsTable([chance_row()] + self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([
                r.label, f"{r.public_test:.6f}", f"{r.public_finetuned:.6f}",
                f"{r.private_test:.6f}", f"{r.private_finetuned:.6f}",
                "" if r.training_steps is None else r.training_steps, r.manifest_hash,
            ])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ResultsTable":
        rows = []
        for rec in csv.DictReader(io.StringIO(text)):
            rows.append(ResultRow(
                rec["label"], float(rec["public_test"]), float(rec["public_finetuned"]),
                float(rec["private_test"]), float(rec["private_finetuned"]),
                int(rec["training_steps"]) if rec["training_steps"] else None,
                rec["manifest_hash"],
            ))
        return cls(rows)


def save_row(path, row: ResultRow, manifest: RunManifest) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"row": asdict(row), "manifest": json.loads(manifest.to_json())},
                               indent=1, sort_keys=True))
    return path


def load_row(path) -> tuple[ResultRow, RunManifest]:
    d = json.loads(Path(path).read_text())
    return ResultRow(**d["row"]), RunManifest.from_json(json.dumps(d["manifest"]))


# -- data and classifiers --------------------------------------------------

def prepare_data(cfg: RunConfig, workdir=None) -> DatasetSplit:
    """Load IDX data (or render synthetic glyphs) and split it."""
    if cfg.idx_images:
        mapping = read_mapping(cfg.idx_mapping) if cfg.idx_mapping else None
        ds = load_emnist_like(cfg.idx_images, cfg.idx_labels, mapping)
    else:
        raw, labels = generate(cfg.synthetic_per_class, derive_seed(cfg.seed, "synth"))
        ds = Dataset(resize_batch(raw), labels)
    return balanced_split(ds, cfg.n_train, cfg.n_val, cfg.n_test, derive_seed(cfg.seed, "split"))


def save_split(directory, split: DatasetSplit) -> dict:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {name: getattr(split, name).save(d / f"{name}.npz") for name in ("train", "val", "test")}
    (d / "split.json").write_text(json.dumps(split.manifest(), indent=1))
    return paths


def load_split(directory) -> dict[str, Dataset]:
    d = Path(directory)
    missing = [n for n in ("train", "val", "test") if not (d / f"{n}.npz").exists()]
    if missing:
        raise FileNotFoundError(f"missing split files in {d}: {missing}; run prep-data first")
    return {n: Dataset.load(d / f"{n}.npz") for n in ("train", "val", "test")}


def train_classifiers(cfg: RunConfig, train: Dataset, val: Dataset | None = None) -> dict[str, Classifier]:
    """Public and private CNNs trained on the same augmented training set."""
    out = {}
    catalog = cfg.catalog_obj()
    for task in ("public", "private"):
        clf, tlog = train_classifier(
            cfg.classifier_config(task), train, cfg.recipe(), derive_seed(cfg.seed, "cnn"),
            catalog, val,
        )
        out[task] = clf
        log.info("%s classifier final loss %.4f", task, tlog.epoch_loss[-1])
    return out


def load_classifiers(directory) -> dict[str, Classifier]:
    d = Path(directory)
    out = {}
    for task in ("public", "private"):
        p = d / f"{task}.qnn"
        if not p.exists():
            raise FileNotFoundError(f"missing classifier model {p}; run train-cnn first")
        out[task] = Classifier.load(p)
    return out


# -- DDQN training ---------------------------------------------------------

def make_env(cfg: RunConfig, clfs: dict[str, Classifier], dataset: Dataset, seed: int,
             sequential: bool = False) -> QuantumCameraEnv:
    return QuantumCameraEnv(EnvConfig(
        clfs["public"], clfs["private"], dataset, cfg.catalog_obj(), make_policy(cfg.policy),
        cfg.episode_length, cfg.default_shots, seed, sequential,
    ))


class _TraceTap:
    """Wraps an environment and forwards every step's log line to a sink."""

    def __init__(self, env, sink):
        self.env = env
        self.sink = sink
        self.count = 0

    def reset(self, seed=None):
        return self.env.reset(seed)

    def step(self, action):
        res = self.env.step(action)
        self.count += 1
        if self.sink is not None:
            self.sink.write(res.log_line(self.count) + "\n")
        return res


@dataclass
class CurvePoint:
    step: int
    epsilon: float
    loss: float
    reward_smoothed: float
    q_online: float
    q_target: float


CURVE_COLUMNS = ("step", "epsilon", "loss", "reward_smoothed", "q_online", "q_target")


def curves_from_logs(logs: list[StepLog], interval: int) -> list[CurvePoint]:
    """Mean loss and Q values per interval, and the reward smoothed over the last 100 steps."""
    points = []
    window: deque = deque(maxlen=REWARD_WINDOW)
    chunk: list[StepLog] = []
    for entry in logs:
        window.append(entry.reward)
        chunk.append(entry)
        if entry.step % interval == 0:
            learned = [c for c in chunk if c.loss is not None]
            nan = float("nan")
            points.append(CurvePoint(
                entry.step, entry.epsilon,
                float(np.mean([c.loss for c in learned])) if learned else nan,
                float(np.mean(window)),
                float(np.mean([c.q_online for c in learned])) if learned else nan,
                float(np.mean([c.q_target for c in learned])) if learned else nan,
            ))
            chunk = []
    return points


def write_curves(path, points: list[CurvePoint]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for p in points:
            w.writerow([p.step, f"{p.epsilon:.6f}"] + [
                "" if math.isnan(v) else repr(v) for v in (p.loss, p.reward_smoothed, p.q_online, p.q_target)
            ])
    return path


def read_curves(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as f:
        recs = list(csv.DictReader(f))
    return {c: np.array([float(r[c]) if r[c] else np.nan for r in recs]) for c in CURVE_COLUMNS}


@dataclass
class CurveSummary:
    q_gap_first: float
    q_gap_last: float
    loss_first: float
    loss_last: float
    reward_first: float
    reward_last: float
    loss_finite: bool

    @property
    def q_gap_shrinks(self) -> bool:
        return self.q_gap_last < self.q_gap_first

    @property
    def loss_non_increasing(self) -> bool:
        return self.loss_finite and self.loss_last <= self.loss_first

    @property
    def reward_non_decreasing(self) -> bool:
        return self.reward_last >= self.reward_first


def summarize_training(logs: list[StepLog], fraction: float = 0.1) -> CurveSummary:
    """Compare the first and last ``fraction`` of steps (learning steps for loss and Q)."""
    learned = [e for e in logs if e.loss is not None]
    if not learned:
        raise ValueError("no learning steps recorded")
    k = max(1, int(len(learned) * fraction))
    gap = np.abs(np.array([e.q_online - e.q_target for e in learned]))
    loss = np.array([e.loss for e in learned])
    rewards = np.array([e.reward for e in logs])
    smooth = np.array([rewards[max(0, i - REWARD_WINDOW + 1):i + 1].mean() for i in range(len(rewards))])
    kr = max(1, int(len(smooth) * fraction))
    return CurveSummary(
        float(gap[:k].mean()), float(gap[-k:].mean()),
        float(loss[:k].mean()), float(loss[-k:].mean()),
        float(smooth[:kr].mean()), float(smooth[-kr:].mean()),
        bool(np.all(np.isfinite(loss)) and np.all(loss >= 0)),
    )


@dataclass
class TrainingRun:
    agent: DDQNAgent
    logs: list[StepLog]
    curves: list[CurvePoint]
    out_dir: Path | None = None


def run_training(cfg: RunConfig, clfs: dict[str, Classifier], dataset: Dataset,
                 out_dir=None) -> TrainingRun:
    """Train a DDQN agent; writes curves, a step trace and checkpoints when ``out_dir`` is set."""
    for task in ("public", "private"):
        if task not in clfs:
            raise ValueError(f"missing {task} classifier")
    if cfg.env_images:
        dataset = dataset.subset(np.arange(min(cfg.env_images, len(dataset))))
    env = make_env(cfg, clfs, dataset, derive_seed(cfg.seed, "env"))
    agent = DDQNAgent.create(env.state_dim, env.num_actions, cfg.agent_config(), derive_seed(cfg.seed, "agent"))
    out = Path(out_dir) if out_dir is not None else None
    sink = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        sink = open(out / "steps.jsonl", "w")

    def on_step(entry: StepLog):
        if out is not None and entry.step % cfg.checkpoint_every == 0:
            agent.save(out / "checkpoints" / f"step_{entry.step:07d}")
        if entry.step % cfg.log_interval == 0:
            log.info("step %d eps %.3f", entry.step, entry.epsilon)

    try:
        logs = run_episodes(agent, _TraceTap(env, sink), cfg.train_steps,
                            derive_seed(cfg.seed, "episodes"), on_step)
    finally:
        if sink is not None:
            sink.close()
    curves = curves_from_logs(logs, cfg.log_interval)
    if out is not None:
        write_curves(out / "curves.csv", curves)
        agent.save(out / "checkpoint")
    return TrainingRun(agent, logs, curves, out)


# -- frozen policy ---------------------------------------------------------

@dataclass
class GeneratedSet:
    images: np.ndarray
    labels: np.ndarray  # private labels
    actions: np.ndarray

    def __len__(self) -> int:
        return self.labels.shape[0]

    def dataset(self) -> Dataset:
        return Dataset(self.images, self.labels)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            np.savez(f, images=self.images, labels=self.labels, actions=self.actions)
        return path

    @classmethod
    def load(cls, path) -> "GeneratedSet":
        with np.load(path) as z:
            return cls(z["images"], z["labels"], z["actions"])


def freeze_and_generate(agent: DDQNAgent, cfg: RunConfig, clfs: dict[str, Classifier],
                        test: Dataset, seed: int) -> GeneratedSet:
    """Run the greedy policy once over every test character in order."""
    env = make_env(cfg, clfs, test, derive_seed(seed, "gen-env"), sequential=True)
    images = np.empty_like(test.images)
    labels = np.empty(len(test), dtype=np.int64)
    actions = np.empty(len(test), dtype=np.int64)
    episode = 0
    state = env.reset(derive_seed(seed, "gen", episode))
    for i in range(len(test)):
        a = agent.act(state, greedy=True)
        res = env.step(a)
        images[i] = res.damaged_image.as_array()
        labels[i] = res.truth[1]
        actions[i] = a
        if res.done and i + 1 < len(test):
            episode += 1
            state = env.reset(derive_seed(seed, "gen", episode))
        else:
            state = res.next_state
    return GeneratedSet(images, labels, actions)


def dump_pgms(directory, gen: GeneratedSet, limit: int | None = None) -> list[Path]:
    from .imageio import write_pgm

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    n = len(gen) if limit is None else min(limit, len(gen))
    return [write_pgm(d / f"{i:05d}_label{gen.labels[i]:02d}_a{gen.actions[i]}.pgm",
                      GrayImage.from_array(gen.images[i])) for i in range(n)]


# -- evaluation and attack -------------------------------------------------

def evaluate_policy(generated: Dataset, clfs: dict[str, Classifier]) -> tuple[float, float]:
    """(public, private) accuracy of the unmodified classifiers on generated images."""
    return evaluate(clfs["public"], generated).accuracy, evaluate(clfs["private"], generated).accuracy


def attack_split(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    order = make_rng(derive_seed(seed, "attack-split")).permutation(n)
    half = n // 2
    return np.sort(order[:half]), np.sort(order[half:])


def finetune_attack(generated: Dataset, clfs: dict[str, Classifier], seed: int,
                    epochs: int = 5, lr_scale: float = 0.1) -> tuple[float, float]:
    """Finetune copies on one half of ``generated`` and score them on the other half."""
    tr, te = attack_split(len(generated), seed)
    train, test = generated.subset(tr), generated.subset(te)
    accs = []
    for task in ("public", "private"):
        tuned = finetune(clfs[task], train, epochs, derive_seed(seed, "finetune", task), lr_scale)
        accs.append(evaluate(tuned, test).accuracy)
    return accs[0], accs[1]


def score_generated(label: str, generated: Dataset, clfs, cfg: RunConfig, seed: int,
                    training_steps: int | None = None) -> ResultRow:
    pub, priv = evaluate_policy(generated, clfs)
    pub_ft, priv_ft = finetune_attack(generated, clfs, seed, cfg.finetune_epochs, cfg.finetune_lr_scale)
    return ResultRow(label, pub, pub_ft, priv, priv_ft, training_steps)


def baseline_dataset(kind: str, test: Dataset, cfg: RunConfig) -> Dataset:
    if kind == "quantum_random":
        return quantum_random_dataset(test, cfg.catalog_obj(), derive_seed(cfg.seed, "baseline", kind),
                                      cfg.default_shots)
    if kind == "blur":
        return blur_dataset(test, cfg.blur_kernel, cfg.blur_sigma)
    if kind == "noise":
        return noise_dataset(test, cfg.noise_sigma, derive_seed(cfg.seed, "baseline", kind))
    raise ValueError(f"unknown baseline {kind!r}; choose from {BASELINES}")


def _baseline_job(args) -> ResultRow:
    kind, test, clfs, cfg = args
    degraded = baseline_dataset(kind, test, cfg)
    return score_generated(kind, degraded, clfs, cfg, derive_seed(cfg.seed, "attack", kind))


def model_hashes(model_paths: dict) -> dict:
    return {k: sha256_file(p) for k, p in sorted(model_paths.items())}


def baseline_manifest(kind: str, cfg: RunConfig, test: Dataset, model_paths: dict,
                      test_path=None) -> RunManifest:
    inputs = {k: str(p) for k, p in model_paths.items()}
    if test_path is not None:
        inputs["test"] = str(test_path)
    return RunManifest(
        stage="baseline", label=kind, config=cfg.to_dict(),
        seeds={"run": cfg.seed, "baseline": derive_seed(cfg.seed, "baseline", kind),
               "attack": derive_seed(cfg.seed, "attack", kind)},
        catalog_hash=cfg.catalog_obj().digest(), dataset_hash=test.digest(),
        model_hashes=model_hashes(model_paths), inputs=inputs,
        created=datetime.now(timezone.utc).isoformat(),
    )


def run_baselines(test: Dataset, clfs: dict[str, Classifier], cfg: RunConfig,
                  kinds=BASELINES, model_paths: dict | None = None, test_path=None
                  ) -> list[tuple[ResultRow, RunManifest | None]]:
    """Quantum-random, blur and noise rows; independent rows run in parallel when ``cfg.jobs > 1``."""
    jobs = [(k, test, clfs, cfg) for k in kinds]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(jobs))) as pool:
            rows = list(pool.map(_baseline_job, jobs))
    else:
        rows = [_baseline_job(j) for j in jobs]
    out = []
    for kind, row in zip(kinds, rows):
        man = None
        if model_paths is not None:
            man = baseline_manifest(kind, cfg, test, model_paths, test_path)
            row = ResultRow(**{**asdict(row), "manifest_hash": man.digest()})
        out.append((row, man))
    return out


def policy_manifest(label: str, cfg: RunConfig, gen: GeneratedSet, model_paths: dict,
                    gen_path=None, checkpoint_hash: str = "",
                    training_steps: int | None = None) -> RunManifest:
    inputs = {k: str(p) for k, p in model_paths.items()}
    if gen_path is not None:
        inputs["generated"] = str(gen_path)
    hashes = model_hashes(model_paths)
    if checkpoint_hash:
        hashes["agent"] = checkpoint_hash
    return RunManifest(
        stage="policy", label=label, config=cfg.to_dict(),
        seeds={"run": cfg.seed, "attack": derive_seed(cfg.seed, "attack", label)},
        catalog_hash=cfg.catalog_obj().digest(), dataset_hash=gen.dataset().digest(),
        model_hashes=hashes, inputs=inputs, training_steps=training_steps,
        created=datetime.now(timezone.utc).isoformat(),
    )


def reproduce_row(manifest: RunManifest) -> ResultRow:
    """Recompute a row from the inputs a manifest points at, after checking their hashes."""
    cfg = RunConfig.from_dict(manifest.config)
    paths = {k: manifest.inputs[k] for k in ("public", "private")}
    for role, path in paths.items():
        if sha256_file(path) != manifest.model_hashes[role]:
            raise ValueError(f"{role} model at {path} does not match the manifest")
    clfs = {k: Classifier.load(p) for k, p in paths.items()}
    if manifest.stage == "baseline":
        test = Dataset.load(manifest.inputs["test"])
        if test.digest() != manifest.dataset_hash:
            raise ValueError("test split does not match the manifest")
        row = _baseline_job((manifest.label, test, clfs, cfg))
    elif manifest.stage == "policy":
        gen = GeneratedSet.load(manifest.inputs["generated"]).dataset()
        if gen.digest() != manifest.dataset_hash:
            raise ValueError("generated set does not match the manifest")
        row = score_generated(manifest.label, gen, clfs, cfg, manifest.seeds["attack"],
                              manifest.training_steps)
    else:
        raise ValueError(f"unknown manifest stage {manifest.stage!r}")
    return ResultRow(**{**asdict(row), "manifest_hash": manifest.digest()})


def checkpoint_hash(directory) -> str:
    h = hashlib.sha256()
    for p in sorted(Path(directory).glob("*.qnn")):
        h.update(p.name.encode())
        h.update(sha256_file(p).encode())
    return h.hexdigest()


# -- depth benchmark -------------------------------------------------------

@dataclass(frozen=True)
class DepthPoint:
    gates: int
    depth: int
    seconds: float


def bench_depth(max_gates: int = 4, seed: int = 0, side: int = 16, repeats: int = 3) -> list[DepthPoint]:
    """Encoder depth and simulation time with 0..max_gates random catalog CRX gates appended."""
    layout = FrqiLayout.for_side(side)
    rng = make_rng(derive_seed(seed, "bench"))
    img = GrayImage(side, rng.random(side * side))
    catalog = default_catalog(layout) if layout.n == 4 else ActionCatalog(
        tuple(CrxGate(k, v) for v in (1, 0) for k in range(2 * layout.n)), 4)
    crx = [i for i, a in enumerate(catalog.actions) if isinstance(a, CrxGate)]
    chosen = sorted(rng.choice(crx, size=max_gates, replace=False).tolist())
    out = []
    apply_circuit(new_zero_state(layout.num_qubits), build_frqi_encoder_circuit(image_to_angles(img), layout))
    for k in range(max_gates + 1):
        circuit = build_frqi_encoder_circuit(image_to_angles(img), layout)
        if k:
            circuit.extend(compile_action_set(ActionSet(tuple(chosen[:k])), catalog, 0, layout).gate_suffix)
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            apply_circuit(new_zero_state(layout.num_qubits), circuit)
            times.append(time.perf_counter() - t0)
        out.append(DepthPoint(k, circuit_depth(circuit), float(np.mean(times))))
    return out


def depth_csv(points: list[DepthPoint]) -> str:
    lines = ["gates,depth,seconds"]
    lines += [f"{p.gates},{p.depth},{p.seconds:.6f}" for p in points]
    return "\n".join(lines) + "\n"
