"""Double deep Q-learning over a flat, enumerated action space."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

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
)
from .rng import derive_seed, make_rng


@dataclass(frozen=True)
class AgentConfig:
    gamma: float = 0.99
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 20_000
    batch_size: int = 64
    buffer_capacity: int = 50_000
    target_period: int = 1_000
    lr: float = 1e-4
    hidden: tuple[int, ...] = (256, 256)
    learn_start: int | None = None  # defaults to batch_size

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 <= self.eps_end <= self.eps_start <= 1.0:
            raise ValueError("need 0 <= eps_end <= eps_start <= 1")
        if self.target_period < 1:
            raise ValueError("target_period must be >= 1")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise ValueError("buffer must hold at least one batch")
        object.__setattr__(self, "hidden", tuple(self.hidden))

    def epsilon(self, step: int) -> float:
        if self.eps_decay_steps <= 0:
            return self.eps_end
        if step >= self.eps_decay_steps:
            return self.eps_end
        frac = step / self.eps_decay_steps
        return self.eps_start + frac * (self.eps_end - self.eps_start)


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-capacity ring of transitions with uniform sampling."""

    def __init__(self, capacity: int, state_dim: int):
        self.capacity = int(capacity)
        self.states = np.zeros((capacity, state_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity, dtype=bool)
        self.inserted = 0

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    def add(self, t: Transition) -> None:
        if t.state.shape != (self.states.shape[1],) or t.next_state.shape != t.state.shape:
            raise ValueError(
                f"transition vectors must have length {self.states.shape[1]}"
            )
        i = self.inserted % self.capacity
        self.states[i] = t.state
        self.next_states[i] = t.next_state
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.dones[i] = t.done
        self.inserted += 1

    def sample_indices(self, batch: int, rng: np.random.Generator) -> np.ndarray:
        if batch > len(self):
            raise ValueError(f"buffer holds {len(self)} transitions, batch needs {batch}")
        return rng.choice(len(self), size=batch, replace=False)


@dataclass
class QNetworks:
    online: Network
    target: Network

    def __post_init__(self):
        if self.online.spec != self.target.spec:
            raise ValueError("online and target networks must share a spec")

    @property
    def num_actions(self) -> int:
        return self.online.spec.output_shape[0]

    @property
    def state_dim(self) -> int:
        return self.online.spec.input_shape[0]


def q_network_spec(state_dim: int, num_actions: int, hidden=(256, 256)) -> NetworkSpec:
    layers = []
    width = state_dim
    for h in hidden:
        layers += [{"kind": "dense", "in": width, "out": h}, {"kind": "relu"}]
        width = h
    layers.append({"kind": "dense", "in": width, "out": num_actions})
    return NetworkSpec((state_dim,), tuple(layers))


def make_qnetworks(state_dim: int, num_actions: int, hidden=(256, 256), seed: int = 0) -> QNetworks:
    online = init_network(q_network_spec(state_dim, num_actions, hidden), seed)
    return QNetworks(online, online.copy())


def q_values(net: Network, states: np.ndarray) -> np.ndarray:
    states = np.asarray(states, dtype=np.float64)
    if states.ndim == 1:
        return forward(net, states[None])[0][0]
    return forward(net, states)[0]


def select_action(online: Network, state: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy; greedy ties go to the lowest index."""
    n = online.spec.output_shape[0]
    if rng.random() < epsilon:
        return int(rng.integers(n))
    return int(np.argmax(q_values(online, state)))


def double_q_targets(online: Network, target: Network, rewards, next_states, dones, gamma: float) -> np.ndarray:
    """y = r for terminal transitions, else r + gamma * Q_target(s', argmax_a Q_online(s', a))."""
    rewards = np.asarray(rewards, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    best = q_values(online, next_states).argmax(axis=1)
    q_next = q_values(target, next_states)[np.arange(best.shape[0]), best]
    return rewards + gamma * np.where(dones, 0.0, q_next)


def double_q_target(online: Network, target: Network, t: Transition, gamma: float) -> float:
    y = double_q_targets(online, target, [t.reward], np.asarray(t.next_state)[None], [t.done], gamma)
    return float(y[0])


@dataclass
class TrainStats:
    loss: float
    q_online: float  # mean Q_online(s, a) over the batch
    q_target: float  # mean double-Q target over the batch


def train_step(
    nets: QNetworks,
    buffer: ReplayBuffer,
    config: AgentConfig,
    rng: np.random.Generator,
    opt: OptimizerState,
) -> TrainStats:
    """One MSE regression step of the online net toward double-Q targets."""
    idx = buffer.sample_indices(config.batch_size, rng)
    s = buffer.states[idx]
    a = buffer.actions[idx]
    y = double_q_targets(
        nets.online, nets.target, buffer.rewards[idx], buffer.next_states[idx],
        buffer.dones[idx], config.gamma,
    )
    q_all, trace = forward(nets.online, s, record=True)
    rows = np.arange(len(idx))
    q = q_all[rows, a]
    diff = q - y
    grad = np.zeros_like(q_all)
    grad[rows, a] = 2.0 * diff / len(idx)
    adam_step(nets.online, backward(nets.online, trace, grad), opt)
    return TrainStats(float(np.mean(diff**2)), float(q.mean()), float(y.mean()))


def sync_target(nets: QNetworks) -> None:
    nets.target = nets.online.copy()


class Environment(Protocol):
    def reset(self, seed: int | None = None) -> np.ndarray: ...

    def step(self, action: int): ...  # returns object with next_state, reward, done


@dataclass
class StepLog:
    step: int
    action: int
    reward: float
    epsilon: float
    done: bool
    loss: float | None = None
    q_online: float | None = None
    q_target: float | None = None


@dataclass
class DDQNAgent:
    nets: QNetworks
    config: AgentConfig
    seed: int = 0
    step: int = 0
    opt: OptimizerState = field(default=None)
    buffer: ReplayBuffer = field(default=None)

    def __post_init__(self):
        if self.opt is None:
            self.opt = OptimizerState(lr=self.config.lr)
        if self.buffer is None:
            self.buffer = ReplayBuffer(self.config.buffer_capacity, self.nets.state_dim)
        self._act_rng = make_rng(derive_seed(self.seed, "act"))
        self._replay_rng = make_rng(derive_seed(self.seed, "replay"))

    @classmethod
    def create(cls, state_dim: int, num_actions: int, config: AgentConfig, seed: int = 0) -> "DDQNAgent":
        nets = make_qnetworks(state_dim, num_actions, config.hidden, derive_seed(seed, "qnet"))
        return cls(nets, config, seed)

    @property
    def epsilon(self) -> float:
        return self.config.epsilon(self.step)

    def act(self, state: np.ndarray, greedy: bool = False) -> int:
        eps = 0.0 if greedy else self.epsilon
        return select_action(self.nets.online, state, eps, self._act_rng)

    def observe(self, t: Transition) -> TrainStats | None:
        """Store a transition, learn once the buffer is warm, and sync on schedule."""
        self.buffer.add(t)
        self.step += 1
        stats = None
        warm = self.config.learn_start or self.config.batch_size
        if len(self.buffer) >= max(warm, self.config.batch_size):
            stats = train_step(self.nets, self.buffer, self.config, self._replay_rng, self.opt)
        if self.step % self.config.target_period == 0:
            sync_target(self.nets)
        return stats

    # -- checkpoints -------------------------------------------------------

    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_network(d / "online.qnn", self.nets.online)
        save_network(d / "target.qnn", self.nets.target)
        for name, moments in (("adam_m", self.opt.m), ("adam_v", self.opt.v)):
            if moments:
                save_network(d / f"{name}.qnn", Network(self.nets.online.spec, moments))
        meta = {
            "config": asdict(self.config),
            "seed": self.seed,
            "step": self.step,
            "epsilon": self.epsilon,
            "adam_step": self.opt.step,
        }
        (d / "agent.json").write_text(json.dumps(meta, indent=1))
        return d

    @classmethod
    def load(cls, directory) -> "DDQNAgent":
        d = Path(directory)
        meta = json.loads((d / "agent.json").read_text())
        config = AgentConfig(**meta["config"])
        nets = QNetworks(load_network(d / "online.qnn"), load_network(d / "target.qnn"))
        opt = OptimizerState(lr=config.lr, step=meta["adam_step"])
        if (d / "adam_m.qnn").exists():
            opt.m = load_network(d / "adam_m.qnn").params
            opt.v = load_network(d / "adam_v.qnn").params
        return cls(nets, config, meta["seed"], meta["step"], opt)


def run_episodes(
    agent: DDQNAgent,
    env: Environment,
    steps: int,
    seed: int,
    on_step: Callable[[StepLog], None] | None = None,
) -> list[StepLog]:
    """Interact with ``env`` for ``steps`` steps, learning after every step."""
    logs = []
    episode = 0
    state = env.reset(derive_seed(seed, "episode", episode))
    for _ in range(steps):
        eps = agent.epsilon
        action = agent.act(state)
        res = env.step(action)
        stats = agent.observe(
            Transition(state, action, float(res.reward), res.next_state, bool(res.done))
        )
        entry = StepLog(agent.step, action, float(res.reward), eps, bool(res.done))
        if stats is not None:
            entry.loss, entry.q_online, entry.q_target = stats.loss, stats.q_online, stats.q_target
        logs.append(entry)
        if on_step is not None:
            on_step(entry)
        if res.done:
            episode += 1
            state = env.reset(derive_seed(seed, "episode", episode))
        else:
            state = res.next_state
    return logs
