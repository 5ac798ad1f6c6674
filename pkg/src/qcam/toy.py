"""Five-state deterministic chain used to validate the DDQN machinery.

States 0..4 are one-hot encoded. Action 0 moves left (state 0 stays put),
action 1 moves right. Moving right from state 4 pays 1 and ends the episode;
every other transition pays 0. Episodes start in a uniformly random state and
are only truncated when ``max_steps`` is set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import make_rng

NUM_STATES = 5
NUM_ACTIONS = 2


@dataclass
class ChainStep:
    next_state: np.ndarray
    reward: float
    done: bool


def one_hot(s: int) -> np.ndarray:
    v = np.zeros(NUM_STATES)
    v[s] = 1.0
    return v


class ChainMDP:
    def __init__(self, max_steps: int | None = None):
        self.max_steps = max_steps
        self.s = 0
        self.t = 0

    def transition(self, s: int, a: int) -> tuple[int | None, float]:
        if a == 1:
            if s == NUM_STATES - 1:
                return None, 1.0
            return s + 1, 0.0
        return max(s - 1, 0), 0.0

    def reset(self, seed: int | None = None) -> np.ndarray:
        self.s = int(make_rng(seed or 0).integers(NUM_STATES))
        self.t = 0
        return one_hot(self.s)

    def step(self, action: int) -> ChainStep:
        nxt, r = self.transition(self.s, int(action))
        self.t += 1
        if nxt is None:
            return ChainStep(one_hot(self.s), r, True)
        self.s = nxt
        return ChainStep(one_hot(nxt), r, self.max_steps is not None and self.t >= self.max_steps)


def optimal_q(gamma: float, iters: int = 1000) -> np.ndarray:
    """Q* by value iteration (terminal transitions bootstrap nothing)."""
    mdp = ChainMDP()
    q = np.zeros((NUM_STATES, NUM_ACTIONS))
    for _ in range(iters):
        v = q.max(axis=1)
        new = np.empty_like(q)
        for s in range(NUM_STATES):
            for a in range(NUM_ACTIONS):
                nxt, r = mdp.transition(s, a)
                new[s, a] = r + (0.0 if nxt is None else gamma * v[nxt])
        q = new
    return q
