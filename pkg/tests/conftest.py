"""Shared fixtures: a toy MDP with a value-iteration oracle."""

from __future__ import annotations

import numpy as np
import pytest


class ToyMdp:
    """Deterministic 3-state / 2-action chain.

    Action 0 stays put and collects a small reward, action 1 moves one state
    to the right (wrapping). The greedy optimal action differs between
    states and no state has tied action values.
    """

    n_states = 3
    n_actions = 2
    next_state = np.array([[0, 1], [1, 2], [2, 0]])
    rewards = np.array([[0.2, 0.0], [0.1, 0.3], [0.5, 1.0]])

    def step(self, s: int, a: int, shift: float = 0.0) -> tuple[float, int]:
        return float(self.rewards[s, a] + shift), int(self.next_state[s, a])

    def q_star(self, discount: float, shift: float = 0.0, tol: float = 1e-14) -> np.ndarray:
        """Value iteration to a fixed point."""
        q = np.zeros((self.n_states, self.n_actions))
        while True:
            new = self.rewards + shift + discount * q.max(axis=1)[self.next_state]
            if np.max(np.abs(new - q)) < tol:
                return new
            q = new


@pytest.fixture
def toy_mdp() -> ToyMdp:
    return ToyMdp()
