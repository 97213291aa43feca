"""Fixed-capacity prioritized experience replay.

Sampling probability of tuple k is p_k / sum_j p_j with p = (d + eps)^alpha
built from absolute TD differences; alpha = 0 degrades to uniform and eps > 0
keeps every stored tuple reachable.  New tuples enter at the current maximum
priority so they are replayed at least as eagerly as anything already stored.
No importance-sampling correction weights are applied (deliberate fidelity
choice).  Linear-scan cumulative sampling; at a 2000-tuple capacity a
sum-tree buys nothing.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    done: bool
    # Permitted actions in s_next; the DDQN target argmax ranges over these.
    next_mask: np.ndarray = None


class PrioritizedMemory:
    def __init__(self, capacity: int = 2000, alpha: float = 0.6,
                 eps_per: float = 0.01):
        self.capacity = capacity
        self.alpha = alpha
        self.eps_per = eps_per
        self._data = []
        self._priorities = np.zeros(capacity)
        self._write = 0    # ring cursor

    def __len__(self):
        return len(self._data)

    def compute_priority(self, d: float) -> float:
        """(|TD| + eps)^alpha; strictly positive for every finite d >= 0."""
        return (d + self.eps_per) ** self.alpha

    def push(self, transition: Transition) -> None:
        """Insert at the current max priority (1.0 when empty), FIFO evict."""
        if self._data:
            prio = float(self._priorities[:len(self._data)].max())
        else:
            prio = 1.0
        if len(self._data) < self.capacity:
            self._data.append(transition)
            self._priorities[len(self._data) - 1] = prio
        else:
            self._data[self._write] = transition
            self._priorities[self._write] = prio
        self._write = (self._write + 1) % self.capacity

    def probabilities(self) -> np.ndarray:
        p = self._priorities[:len(self._data)]
        return p / p.sum()

    def sample(self, batch: int, rng: np.random.Generator):
        """Draw ``batch`` indices with replacement according to the priorities."""
        if not self._data:
            raise ValueError("cannot sample from an empty memory")
        idx = rng.choice(len(self._data), size=batch, replace=True,
                         p=self.probabilities())
        return idx, [self._data[i] for i in idx]

    def update_priorities(self, indices, d_values) -> None:
        for i, d in zip(indices, d_values):
            self._priorities[i] = self.compute_priority(float(d))
