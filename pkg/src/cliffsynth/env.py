"""Deterministic tableau-reduction MDP.

State: a symplectic tableau.  Action: one generator, applied by right
multiplication.  Reward: gate costs, a success bonus when the identity is
reached, and dense shaping by the Hamming distance to the identity scaled
by 1/(8 n^2).  An episode ends at the identity (termination) or at the step
cap (truncation).

The fixed action enumeration is: h(0..n-1) -> 0..n-1, s(i) -> n+i, then cz
pairs (i < j) in lexicographic order starting at 2n.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ShapeError, StateError
from .f2linalg import BitMatrix, hamming_to_identity
from .tableau import Gate, Tableau, apply_gate_

_WORD = np.uint64


def action_count(n: int) -> int:
    return n * (n + 3) // 2


def all_gates(n: int) -> list[Gate]:
    """Every distinct generator at qubit count n, in action-index order."""
    gates = [Gate.h(i) for i in range(n)]
    gates += [Gate.s(i) for i in range(n)]
    gates += [Gate.cz(i, j) for i in range(n) for j in range(i + 1, n)]
    return gates


def action_index(g: Gate, n: int) -> int:
    if g.kind == "h":
        if not 0 <= g.a < n:
            raise ArgumentError(f"h({g.a}) out of range for n={n}")
        return g.a
    if g.kind == "s":
        if not 0 <= g.a < n:
            raise ArgumentError(f"s({g.a}) out of range for n={n}")
        return n + g.a
    if not 0 <= g.a < g.b < n:
        raise ArgumentError(f"cz({g.a}, {g.b}) out of range for n={n}")
    # rank of pair (a, b) in lexicographic order over i < j
    pair_rank = g.a * n - g.a * (g.a + 1) // 2 + (g.b - g.a - 1)
    return 2 * n + pair_rank


def index_action(k: int, n: int) -> Gate:
    if not 0 <= k < action_count(n):
        raise ArgumentError(f"action index {k} out of range for n={n}")
    if k < n:
        return Gate.h(k)
    if k < 2 * n:
        return Gate.s(k - n)
    r = k - 2 * n
    for i in range(n):
        row = n - i - 1
        if r < row:
            return Gate.cz(i, i + 1 + r)
        r -= row
    raise ArgumentError(f"action index {k} out of range for n={n}")  # pragma: no cover


@dataclass
class EnvConfig:
    single_qubit_cost: float = 0.01
    two_qubit_cost: float = 1.0
    success_bonus: float = 25.0
    shaping_scale: float = 1.0
    step_cap: int = 512

    def __post_init__(self):
        if self.single_qubit_cost < 0 or self.two_qubit_cost < 0:
            raise ArgumentError("gate costs must be non-negative")
        if self.step_cap < 1:
            raise ArgumentError("step_cap must be >= 1")


def reward(m: Tableau, g: Gate, cfg: EnvConfig) -> float:
    """Reward for applying gate g in state m."""
    after = apply_gate_(m.copy(), g)
    cost = cfg.two_qubit_cost if g.is_two_qubit else cfg.single_qubit_cost
    ham = hamming_to_identity(after.m)
    r = -cost - cfg.shaping_scale * ham / (8.0 * m.n * m.n)
    if ham == 0:
        r += cfg.success_bonus
    return r


@dataclass
class EnvState:
    """One episode: current tableau, step count, done flag and gate history."""

    tableau: Tableau
    steps_taken: int = 0
    done: bool = False
    history: list[Gate] = field(default_factory=list)

    @classmethod
    def start(cls, target: Tableau) -> "EnvState":
        t = target.copy()
        return cls(tableau=t, done=t.is_identity())


def step(state: EnvState, g: Gate, cfg: EnvConfig) -> tuple[float, bool]:
    """Apply one gate, returning (reward, done).  Mutates the state."""
    if state.done:
        raise StateError("cannot step a finished episode")
    r = reward(state.tableau, g, cfg)
    apply_gate_(state.tableau, g)
    state.steps_taken += 1
    state.history.append(g)
    state.done = state.tableau.is_identity() or state.steps_taken >= cfg.step_cap
    return r, state.done


# -- packed batch environment --------------------------------------------------
#
# Each environment's tableau is stored as 2n uint64 words, one word per row
# (requires n <= 32), with column c at bit c.  This matches the BitMatrix row
# packing, so conversion is a single column slice.


def identity_words(n: int) -> np.ndarray:
    return (_WORD(1) << np.arange(2 * n, dtype=_WORD)).astype(_WORD)


def tableau_to_words(t: Tableau) -> np.ndarray:
    if t.n > 32:
        raise ArgumentError("packed representation supports n <= 32")
    return t.m.words[:, 0].copy()


def words_to_tableau(words: np.ndarray, n: int) -> Tableau:
    m = BitMatrix(2 * n, 2 * n)
    m.words[:, 0] = words
    return Tableau(n, m)


def apply_action_packed_(words: np.ndarray, g: Gate, n: int) -> None:
    """Apply one generator to packed rows; words has shape (..., 2n)."""
    if g.kind == "h":
        i, ni = g.a, n + g.a
        d = ((words >> _WORD(i)) ^ (words >> _WORD(ni))) & _WORD(1)
        words ^= (d << _WORD(i)) | (d << _WORD(ni))
    elif g.kind == "s":
        words ^= ((words >> _WORD(g.a)) & _WORD(1)) << _WORD(n + g.a)
    else:
        i, j = g.a, g.b
        words ^= (((words >> _WORD(j)) & _WORD(1)) << _WORD(n + i)) | (
            ((words >> _WORD(i)) & _WORD(1)) << _WORD(n + j)
        )


def words_to_codes(words: np.ndarray, n: int) -> np.ndarray:
    """Block-code grids (..., n, n) uint8 from packed rows (..., 2n)."""
    cols = np.arange(2 * n, dtype=_WORD)
    bits = ((words[..., :, None] >> cols) & _WORD(1)).astype(np.uint8)
    # bits[..., row, col]
    return (
        8 * bits[..., :n, :n]
        + 4 * bits[..., :n, n:]
        + 2 * bits[..., n:, :n]
        + bits[..., n:, n:]
    )


class BatchEnv:
    """E independent reduction episodes with element-wise single-env semantics."""

    def __init__(self, n: int, size: int, cfg: EnvConfig):
        if n < 1 or n > 32:
            raise ArgumentError("BatchEnv supports 1 <= n <= 32")
        self.n = n
        self.size = size
        self.cfg = cfg
        self.words = np.tile(identity_words(n), (size, 1))
        self.steps = np.zeros(size, dtype=np.int64)
        self.done = np.ones(size, dtype=bool)  # identity start counts as done
        self.histories: list[list[int]] = [[] for _ in range(size)]
        self._id = identity_words(n)
        self._gates = all_gates(n)
        costs = [cfg.two_qubit_cost if g.is_two_qubit else cfg.single_qubit_cost
                 for g in self._gates]
        self._costs = np.array(costs, dtype=np.float64)

    def reset_env(self, i: int, target_words: np.ndarray) -> None:
        self.words[i] = target_words
        self.steps[i] = 0
        self.histories[i] = []
        self.done[i] = bool(np.array_equal(target_words, self._id))

    def reset_all(self, target_words: np.ndarray) -> None:
        """Element-wise reset of every environment from an (E, 2n) batch."""
        if target_words.shape != self.words.shape:
            raise ShapeError(f"expected {self.words.shape}, got {target_words.shape}")
        for i in range(self.size):
            self.reset_env(i, target_words[i])

    def codes(self, idx: np.ndarray | None = None) -> np.ndarray:
        w = self.words if idx is None else self.words[idx]
        return words_to_codes(w, self.n)

    def is_identity(self) -> np.ndarray:
        return np.all(self.words == self._id, axis=1)

    def hamming(self) -> np.ndarray:
        return np.bitwise_count(self.words ^ self._id).sum(axis=1)

    def step(self, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Apply one action per env; returns (rewards, terminal, truncated)."""
        actions = np.asarray(actions)
        if actions.shape != (self.size,):
            raise ShapeError(f"expected {self.size} actions, got shape {actions.shape}")
        if self.done.any():
            raise StateError("cannot step finished environments; reset them first")
        for a in np.unique(actions):
            mask = actions == a
            sub = self.words[mask]  # fancy indexing copies; write back below
            apply_action_packed_(sub, self._gates[a], self.n)
            self.words[mask] = sub
        self.steps += 1
        for i, a in enumerate(actions):
            self.histories[i].append(int(a))
        ham = self.hamming()
        terminal = ham == 0
        rewards = -self._costs[actions] - self.cfg.shaping_scale * ham / (8.0 * self.n**2)
        rewards[terminal] += self.cfg.success_bonus
        truncated = ~terminal & (self.steps >= self.cfg.step_cap)
        self.done = terminal | truncated
        return rewards, terminal, truncated
