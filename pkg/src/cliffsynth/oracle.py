"""Exact ground truth at small qubit counts.

Whole tableaus at n <= 4 fit in one 64-bit key (bit r*2n + c holds entry
(r, c)), so breadth-first closures over the generator Cayley graph run as
vectorized passes over uint64 arrays.  Provided here:

* group enumeration by BFS closure, checked against the order formula
  2^(n^2) * prod_i (4^i - 1);
* optimal entangling-gate counts via 0/1-weight layered BFS (single-qubit
  edges cost 0, cz edges cost 1), with witness circuits from parent links;
* walk-parity classes, with an odd-closed-walk certificate when the graph
  is not bipartite;
* the nine-gate odd identity word for n >= 3.

Full-group work at n = 3 touches ~1.45M states and needs a few hundred MB;
it is opt-in via ``allow_large``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import all_gates, identity_words, tableau_to_words
from .errors import ArgumentError, CapacityError, InvariantError
from .tableau import Circuit, Gate, Tableau, apply_circuit

_WORD = np.uint64

GROUP_ORDER_MAX_N = 3

ODD_IDENTITY_WORD = (
    Gate.h(0),
    Gate.cz(0, 1),
    Gate.h(0),
    Gate.cz(0, 2),
    Gate.h(0),
    Gate.cz(1, 2),
    Gate.cz(0, 1),
    Gate.h(0),
    Gate.cz(0, 2),
)


def group_order(n: int) -> int:
    """|Sp(2n, F2)| = 2^(n^2) * prod_{i=1..n} (4^i - 1)."""
    out = 1 << (n * n)
    for i in range(1, n + 1):
        out *= 4**i - 1
    return out


def _check_small(n: int) -> None:
    if n < 1:
        raise ArgumentError(f"qubit count must be >= 1, got {n}")
    if n > GROUP_ORDER_MAX_N:
        raise CapacityError(f"exact oracle is limited to n <= {GROUP_ORDER_MAX_N}")


def _col_mask(n: int, c: int) -> np.uint64:
    m = 0
    for r in range(2 * n):
        m |= 1 << (r * 2 * n + c)
    return _WORD(m)


def pack_words(words: np.ndarray, n: int) -> np.uint64:
    """Whole-tableau key from packed rows; requires n <= 4."""
    shifts = (np.arange(2 * n, dtype=_WORD) * _WORD(2 * n)).astype(_WORD)
    return np.bitwise_or.reduce(words.astype(_WORD) << shifts)


def pack_tableau(t: Tableau) -> np.uint64:
    if t.n > 4:
        raise CapacityError("whole-tableau keys require n <= 4")
    return pack_words(tableau_to_words(t), t.n)


def unpack_key(key: np.uint64, n: int) -> np.ndarray:
    mask = _WORD((1 << (2 * n)) - 1)
    shifts = (np.arange(2 * n, dtype=_WORD) * _WORD(2 * n)).astype(_WORD)
    return (_WORD(key) >> shifts) & mask


def key_to_tableau(key: np.uint64, n: int) -> Tableau:
    from .env import words_to_tableau

    return words_to_tableau(unpack_key(key, n), n)


def apply_gate_keys(keys: np.ndarray, g: Gate, n: int) -> np.ndarray:
    """Right-multiply every packed state by one generator (vectorized)."""
    w = keys.astype(_WORD, copy=True)
    if g.kind == "h":
        mi = _col_mask(n, g.a)
        diff = (w ^ (w >> _WORD(n))) & mi
        w ^= diff | (diff << _WORD(n))
    elif g.kind == "s":
        w ^= (w & _col_mask(n, g.a)) << _WORD(n)
    else:
        i, j = g.a, g.b
        w ^= (w & _col_mask(n, j)) << _WORD(n + i - j)
        w ^= (w & _col_mask(n, i)) << _WORD(n + j - i)
    return w


def _is_member(cand: np.ndarray, sorted_arr: np.ndarray) -> np.ndarray:
    if sorted_arr.size == 0:
        return np.zeros(cand.shape, dtype=bool)
    pos = np.searchsorted(sorted_arr, cand)
    pos_c = np.minimum(pos, sorted_arr.size - 1)
    return sorted_arr[pos_c] == cand


def _expand(
    frontier: np.ndarray, gate_ids: list[int], gates: list[Gate], n: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Candidate (state, parent, action) triples, deduped to first discovery."""
    cands, parents, actions = [], [], []
    for a in gate_ids:
        nxt = apply_gate_keys(frontier, gates[a], n)
        cands.append(nxt)
        parents.append(frontier)
        actions.append(np.full(frontier.size, a, dtype=np.int16))
    cat = np.concatenate(cands)
    par = np.concatenate(parents)
    act = np.concatenate(actions)
    _, first = np.unique(cat, return_index=True)
    first = np.sort(first)
    return cat[first], par[first], act[first]


@dataclass
class CzTable:
    """Sorted full-group distance table: optimal cz count plus parent links."""

    n: int
    states: np.ndarray  # sorted uint64 keys, the whole group
    dist: np.ndarray  # uint8, optimal cz count
    parent: np.ndarray  # uint64 parent key (root points to itself)
    action: np.ndarray  # int16 action from parent (-1 at the root)

    @property
    def size(self) -> int:
        return int(self.states.size)

    def _locate(self, key: np.uint64) -> int:
        pos = int(np.searchsorted(self.states, _WORD(key)))
        if pos >= self.states.size or self.states[pos] != _WORD(key):
            raise InvariantError("state is not in the symplectic group table")
        return pos

    def distance(self, target: Tableau) -> int:
        if target.n != self.n:
            raise ArgumentError(f"table is for n={self.n}, target has n={target.n}")
        return int(self.dist[self._locate(pack_tableau(target))])

    def witness(self, target: Tableau) -> Circuit:
        """A circuit with optimal cz count satisfying apply_circuit(I, c) == target."""
        if target.n != self.n:
            raise ArgumentError(f"table is for n={self.n}, target has n={target.n}")
        gates = all_gates(self.n)
        key = pack_tableau(target)
        rev: list[Gate] = []
        while True:
            pos = self._locate(key)
            a = int(self.action[pos])
            if a < 0:
                break
            rev.append(gates[a])
            key = self.parent[pos]
        return Circuit(self.n, tuple(reversed(rev)))


def build_cz_table(n: int, allow_large: bool = False) -> CzTable:
    """Layered 0/1 BFS from the identity over the generator Cayley graph."""
    _check_small(n)
    if n >= 3 and not allow_large:
        raise CapacityError(
            "building the n=3 table walks ~1.45M states (a few hundred MB); "
            "pass allow_large=True to proceed"
        )
    gates = all_gates(n)
    sq_ids = [a for a, g in enumerate(gates) if not g.is_two_qubit]
    cz_ids = [a for a, g in enumerate(gates) if g.is_two_qubit]

    root = pack_words(identity_words(n), n)
    disc_states = [np.array([root], dtype=_WORD)]
    disc_parent = [np.array([root], dtype=_WORD)]
    disc_action = [np.array([-1], dtype=np.int16)]
    disc_dist = [np.array([0], dtype=np.uint8)]
    visited = np.array([root], dtype=_WORD)

    layer = np.array([root], dtype=_WORD)  # all states at the current cz distance
    level = 0
    while layer.size:
        # close the current layer under weight-0 (single-qubit) edges
        wave = layer
        closed = [layer]
        while wave.size and sq_ids:
            cand, par, act = _expand(wave, sq_ids, gates, n)
            fresh = ~_is_member(cand, visited)
            wave = cand[fresh]
            if wave.size:
                disc_states.append(wave)
                disc_parent.append(par[fresh])
                disc_action.append(act[fresh])
                disc_dist.append(np.full(wave.size, level, dtype=np.uint8))
                closed.append(wave)
                visited = np.sort(np.concatenate([visited, wave]))
        full_layer = np.concatenate(closed)
        if not cz_ids:
            break
        # one weight-1 (cz) step seeds the next layer
        cand, par, act = _expand(full_layer, cz_ids, gates, n)
        fresh = ~_is_member(cand, visited)
        layer = cand[fresh]
        if layer.size:
            level += 1
            disc_states.append(layer)
            disc_parent.append(par[fresh])
            disc_action.append(act[fresh])
            disc_dist.append(np.full(layer.size, level, dtype=np.uint8))
            visited = np.sort(np.concatenate([visited, layer]))

    states = np.concatenate(disc_states)
    order = np.argsort(states)
    table = CzTable(
        n=n,
        states=states[order],
        dist=np.concatenate(disc_dist)[order],
        parent=np.concatenate(disc_parent)[order],
        action=np.concatenate(disc_action)[order],
    )
    expected = group_order(n)
    if table.size != expected:
        raise InvariantError(
            f"BFS closure found {table.size} states, group order is {expected}"
        )
    return table


_TABLE_CACHE: dict[int, CzTable] = {}


def cz_table(n: int, allow_large: bool = False) -> CzTable:
    if n not in _TABLE_CACHE:
        _TABLE_CACHE[n] = build_cz_table(n, allow_large=allow_large)
    return _TABLE_CACHE[n]


def optimal_cz_count(target: Tableau, allow_large: bool = False) -> tuple[int, Circuit]:
    """Minimal cz count over all generator words for the target, with witness."""
    _check_small(target.n)
    if not target.is_symplectic():
        raise InvariantError("target is not symplectic")
    table = cz_table(target.n, allow_large=allow_large)
    return table.distance(target), table.witness(target)


def enumerate_group(n: int, return_states: bool = False):
    """BFS closure from the identity under all generators; count must equal
    the group-order formula."""
    _check_small(n)
    gates = all_gates(n)
    gate_ids = list(range(len(gates)))
    root = pack_words(identity_words(n), n)
    visited = np.array([root], dtype=_WORD)
    frontier = visited
    while frontier.size:
        cand, _, _ = _expand(frontier, gate_ids, gates, n)
        frontier = cand[~_is_member(cand, visited)]
        if frontier.size:
            visited = np.sort(np.concatenate([visited, frontier]))
    count = int(visited.size)
    if count != group_order(n):
        raise InvariantError(f"closure found {count} states, formula says {group_order(n)}")
    return (count, visited) if return_states else count


@dataclass
class ParityClasses:
    """Walk-parity structure of the Cayley graph."""

    bipartite: bool
    even_size: int
    odd_size: int
    even_keys: np.ndarray | None  # populated for n <= 2
    odd_keys: np.ndarray | None
    odd_cycle: Circuit | None  # certificate when not bipartite


def parity_classes(n: int) -> ParityClasses:
    """2-coloring by walk parity; returns class sizes, or an odd closed walk
    certificate if the graph is not bipartite (n >= 3)."""
    _check_small(n)
    gates = all_gates(n)
    gate_ids = list(range(len(gates)))
    root = pack_words(identity_words(n), n)

    states = np.array([root], dtype=_WORD)  # sorted
    dist_by_state = np.array([0], dtype=np.int32)
    parent_by_state = np.array([root], dtype=_WORD)
    action_by_state = np.array([-1], dtype=np.int16)

    def path_from_root(key: np.uint64) -> list[Gate]:
        rev = []
        while True:
            pos = int(np.searchsorted(states, key))
            a = int(action_by_state[pos])
            if a < 0:
                break
            rev.append(gates[a])
            key = parent_by_state[pos]
        return list(reversed(rev))

    frontier = np.array([root], dtype=_WORD)
    depth = 0
    while frontier.size:
        # examine all edges out of the frontier for same-parity violations
        for a in gate_ids:
            nxt = apply_gate_keys(frontier, gates[a], n)
            pos = np.searchsorted(states, nxt)
            pos_c = np.minimum(pos, states.size - 1)
            known = states[pos_c] == nxt
            if known.any():
                bad = known & ((dist_by_state[pos_c] % 2) == (depth % 2))
                if bad.any():
                    i = int(np.nonzero(bad)[0][0])
                    u = frontier[i]
                    v = nxt[i]
                    walk = path_from_root(u) + [gates[a]] + list(reversed(path_from_root(v)))
                    return ParityClasses(False, 0, 0, None, None, Circuit(n, tuple(walk)))
        cand, par, act = _expand(frontier, gate_ids, gates, n)
        fresh = ~_is_member(cand, states)
        cand, par, act = cand[fresh], par[fresh], act[fresh]
        if cand.size == 0:
            break
        depth += 1
        merged = np.concatenate([states, cand])
        order = np.argsort(merged, kind="stable")
        states = merged[order]
        dist_by_state = np.concatenate(
            [dist_by_state, np.full(cand.size, depth, dtype=np.int32)]
        )[order]
        parent_by_state = np.concatenate([parent_by_state, par])[order]
        action_by_state = np.concatenate([action_by_state, act])[order]
        frontier = cand

    even = states[dist_by_state % 2 == 0]
    odd = states[dist_by_state % 2 == 1]
    return ParityClasses(True, int(even.size), int(odd.size), even, odd, None)


def odd_identity_check(n: int) -> bool:
    """True iff the nine-gate odd word reduces the identity back to itself."""
    if n < 3:
        raise ArgumentError("the odd identity word needs n >= 3")
    t = apply_circuit(Tableau.identity(n), Circuit(n, ODD_IDENTITY_WORD))
    return t.is_identity()


def export_distances(table: CzTable, path: str) -> None:
    """CSV of (tableau key in hex, optimal cz count), one row per group element."""
    from .ioutil import atomic_write_text

    lines = ["tableau_hex,cz_distance"]
    lines += [f"{int(k):x},{int(d)}" for k, d in zip(table.states, table.dist)]
    atomic_write_text(path, "\n".join(lines) + "\n")
