"""Episode and benchmark target generation.

Two families:

* walk targets: apply L uniformly drawn generators to the identity, where
  L = floor(d) + Bernoulli(d - floor(d)) so that E[L] = d (fractional
  difficulties interpolate between integer walk lengths);
* uniform targets: exact uniform samples from the full symplectic group,
  built one symplectic row pair at a time, each row drawn uniformly among
  the vectors with the required binary inner products against all rows
  fixed so far.

The walk distribution does not converge to uniform for n <= 2 (the
generator walk is 2-periodic there), which is why the uniform family is
sampled directly.
"""

from __future__ import annotations

import numpy as np

from .env import action_count, all_gates, identity_words, index_action
from .errors import ArgumentError
from .f2linalg import BitMatrix
from .tableau import Circuit, Tableau, apply_gate_


def sample_walk_length(d: float, rng: np.random.Generator) -> int:
    """One draw of L = floor(d) + Bernoulli(d - floor(d))."""
    if d < 0:
        raise ArgumentError(f"difficulty must be >= 0, got {d}")
    base = int(np.floor(d))
    frac = d - base
    return base + (1 if frac > 0 and rng.random() < frac else 0)


def sample_walk_lengths(d: float, size: int, rng: np.random.Generator) -> np.ndarray:
    if d < 0:
        raise ArgumentError(f"difficulty must be >= 0, got {d}")
    base = int(np.floor(d))
    frac = d - base
    extra = (rng.random(size) < frac).astype(np.int64) if frac > 0 else 0
    return np.full(size, base, dtype=np.int64) + extra


def random_walk_words(n: int, d: float, rng: np.random.Generator) -> np.ndarray:
    """Packed-row walk endpoint; fast path used by the training loop."""
    from .env import apply_action_packed_

    words = identity_words(n)
    num_actions = action_count(n)
    gates = all_gates(n)
    for _ in range(sample_walk_length(d, rng)):
        apply_action_packed_(words, gates[int(rng.integers(num_actions))], n)
    return words


def random_walk_target(
    n: int, d: float, rng: np.random.Generator
) -> tuple[Tableau, Circuit]:
    """Walk endpoint tableau plus the walk actually taken."""
    if n < 1:
        raise ArgumentError(f"qubit count must be >= 1, got {n}")
    length = sample_walk_length(d, rng)
    num_actions = action_count(n)
    gates = [index_action(int(k), n) for k in rng.integers(0, num_actions, size=length)]
    t = Tableau.identity(n)
    for g in gates:
        apply_gate_(t, g)
    return t, Circuit(n, tuple(gates))


# -- exact uniform sampling over the symplectic group -------------------------


def _swap_halves(v: np.ndarray) -> np.ndarray:
    n = v.size // 2
    return np.concatenate([v[n:], v[:n]])


def _solve_affine_f2_uniform(
    a: np.ndarray, b: np.ndarray, rng: np.random.Generator
) -> np.ndarray | None:
    """Uniform random solution of a x = b over GF(2), or None if infeasible."""
    a = a.copy() % 2
    b = b.copy() % 2
    m, d = a.shape
    pivots: list[tuple[int, int]] = []  # (row, col)
    r = 0
    for c in range(d):
        rows = np.nonzero(a[r:, c])[0]
        if rows.size == 0:
            continue
        p = r + int(rows[0])
        if p != r:
            a[[r, p]] = a[[p, r]]
            b[[r, p]] = b[[p, r]]
        hit = np.nonzero(a[:, c])[0]
        hit = hit[hit != r]
        a[hit] ^= a[r]
        b[hit] ^= b[r]
        pivots.append((r, c))
        r += 1
        if r == m:
            break
    if np.any(b[r:]):
        return None
    x = np.zeros(d, dtype=np.uint8)
    pivot_cols = {c for _, c in pivots}
    free = [c for c in range(d) if c not in pivot_cols]
    if free:
        x[free] = rng.integers(0, 2, size=len(free), dtype=np.uint8)
    for row, col in pivots:
        x[col] = (int(b[row]) + int(a[row] @ x) - int(x[col])) % 2
    return x


def uniform_target(n: int, rng: np.random.Generator) -> Tableau:
    """Exact uniform sample from the group of 2n x 2n symplectic matrices."""
    if n < 1:
        raise ArgumentError(f"qubit count must be >= 1, got {n}")
    dim = 2 * n
    x_rows = np.zeros((n, dim), dtype=np.uint8)
    z_rows = np.zeros((n, dim), dtype=np.uint8)
    constraints: list[np.ndarray] = []  # rows u with required product <u, v>
    for k in range(n):
        a = (
            np.array([_swap_halves(u) for u in constraints], dtype=np.uint8)
            if constraints
            else np.zeros((0, dim), dtype=np.uint8)
        )
        zeros = np.zeros(len(constraints), dtype=np.uint8)
        while True:  # nonzero element of the symplectic complement
            r = _solve_affine_f2_uniform(a, zeros, rng)
            if r is not None and r.any():
                break
        a2 = np.vstack([a, _swap_halves(r)[None, :]])
        b2 = np.concatenate([zeros, np.array([1], dtype=np.uint8)])
        s = _solve_affine_f2_uniform(a2, b2, rng)
        if s is None:  # cannot happen for a valid partial basis
            raise AssertionError("symplectic completion failed")
        x_rows[k] = r
        z_rows[k] = s
        constraints.extend([r, s])
    dense = np.vstack([x_rows, z_rows])
    return Tableau(n, BitMatrix.from_dense(dense))


# -- target files --------------------------------------------------------------


def batch_header(family: str, n: int, d: float | None, seed: int, count: int) -> str:
    drepr = "inf" if d is None else f"{d:g}"
    return f"family={family} n={n} d={drepr} seed={seed} count={count}"


def parse_batch_header(text: str) -> dict[str, str]:
    """Parse the leading '# key=value ...' comment of a target file, if any."""
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            fields = {}
            for tok in line[1:].split():
                if "=" in tok:
                    key, val = tok.split("=", 1)
                    fields[key] = val
            return fields
        break
    return {}
