"""Inference-time synthesis.

A decode run drives the target tableau (and, with the inverse trick, also
its inverse) toward the identity with policy-chosen generators.  Reducing
the target by g_1..g_k means target = g_k..g_1, so the reversed reduction
is the circuit; reducing the inverse by g_1..g_k means target = g_1..g_k,
so that sequence is kept in forward order.  Sampled rollouts draw actions
from softmax(logits / T) under per-arm temperature schedules and retain the
best verified circuit by (cz count, total gates, discovery order).

The optional no-loop safeguard masks actions that would revisit a tableau
already seen in the current trajectory, unless every action would.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .env import (
    all_gates,
    apply_action_packed_,
    identity_words,
    tableau_to_words,
    words_to_codes,
)
from .errors import ArgumentError, FormatError
from .policy import PolicyWeights, forward_batch
from .tableau import Circuit, Gate, Tableau, apply_circuit, inverse

_WORD = np.uint64

SCHEDULE_MODES = ("fixed", "linear")
_MODE_ALIASES = {"linear-anneal": "linear"}


@dataclass
class DecodeConfig:
    """Search knobs, serializable to plain key=value text."""

    step_budget: int = 512
    num_samples: int = 0  # sampled rollouts per schedule arm; 0 = greedy decode
    schedules: tuple[tuple[float, float, str], ...] = ()
    no_loop: bool = False
    inverse_trick: bool = True

    def __post_init__(self):
        if self.step_budget < 1:
            raise ArgumentError("step budget must be >= 1")
        fixed = []
        for start, end, mode in self.schedules:
            mode = _MODE_ALIASES.get(mode, mode)
            if mode not in SCHEDULE_MODES:
                raise ArgumentError(f"unknown schedule mode {mode!r}")
            if start <= 0 or end <= 0:
                raise ArgumentError("temperatures must be positive")
            fixed.append((float(start), float(end), mode))
        self.schedules = tuple(fixed)
        if self.num_samples and not self.schedules:
            raise ArgumentError("sampled decoding needs at least one schedule arm")


def bench6_preset() -> DecodeConfig:
    """Heavy benchmark search: four temperature arms, 4096 samples each."""
    return DecodeConfig(
        step_budget=512,
        num_samples=4096,
        schedules=(
            (4.0, 4.0, "fixed"),
            (4.0, 0.05, "linear"),
            (4.0, 2.5, "linear"),
            (4.0, 1.2, "linear"),
        ),
        no_loop=False,
        inverse_trick=True,
    )


def sweep_preset(n: int) -> DecodeConfig:
    """Large-sweep setting: greedy with the no-loop safeguard, budget 6n^2."""
    return DecodeConfig(
        step_budget=6 * n * n,
        num_samples=0,
        schedules=(),
        no_loop=True,
        inverse_trick=True,
    )


def dump_decode_config(cfg: DecodeConfig) -> str:
    arms = ";".join(f"{s:g}:{e:g}:{m}" for s, e, m in cfg.schedules)
    return (
        f"step_budget={cfg.step_budget}\n"
        f"num_samples={cfg.num_samples}\n"
        f"schedules={arms}\n"
        f"no_loop={'true' if cfg.no_loop else 'false'}\n"
        f"inverse_trick={'true' if cfg.inverse_trick else 'false'}\n"
    )


def parse_schedules(spec: str) -> tuple[tuple[float, float, str], ...]:
    arms = []
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            continue
        bits = part.split(":")
        if len(bits) != 3:
            raise FormatError(f"bad schedule {part!r}; want start:end:mode")
        try:
            arms.append((float(bits[0]), float(bits[1]), bits[2]))
        except ValueError:
            raise FormatError(f"bad schedule {part!r}") from None
    return tuple(arms)


def parse_decode_config(text: str) -> DecodeConfig:
    kwargs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        try:
            if key in ("step_budget", "num_samples"):
                kwargs[key] = int(val)
            elif key in ("no_loop", "inverse_trick"):
                kwargs[key] = val.lower() in ("true", "1", "yes")
            elif key == "schedules":
                kwargs[key] = parse_schedules(val)
            else:
                raise FormatError(f"line {lineno}: unknown decode key {key!r}")
        except ValueError:
            raise FormatError(f"line {lineno}: bad value {val!r}") from None
    try:
        return DecodeConfig(**kwargs)
    except ArgumentError as exc:
        raise FormatError(str(exc)) from None


@dataclass
class SynthResult:
    solved: bool
    circuit: Circuit
    cz_count: int
    single_count: int
    samples_used: int
    wall_time: float


def verify_circuit(c: Circuit, target: Tableau) -> bool:
    """True iff applying the circuit to the identity reproduces the target."""
    if c.n != target.n:
        raise ArgumentError(f"circuit has n={c.n}, target has n={target.n}")
    return apply_circuit(Tableau.identity(target.n), c) == target


def no_loop_mask(visited: set[bytes], words: np.ndarray, n: int) -> np.ndarray:
    """Allowed-action mask for one state; all-True when every successor is
    visited (the safeguard only applies when an alternative exists)."""
    gates = all_gates(n)
    allowed = np.ones(len(gates), dtype=bool)
    for a, g in enumerate(gates):
        succ = words.copy()
        apply_action_packed_(succ, g, n)
        if succ.tobytes() in visited:
            allowed[a] = False
    if not allowed.any():
        allowed[:] = True
    return allowed


def _temps_for(schedule: tuple[float, float, str], budget: int) -> np.ndarray:
    start, end, mode = schedule
    if mode == "fixed" or budget == 1:
        return np.full(budget, start, dtype=np.float64)
    return np.linspace(start, end, budget)


def _sample_rows(logits: np.ndarray, temp: float, u: np.ndarray) -> np.ndarray:
    z = logits / temp
    z = z - z.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    cum = np.cumsum(p, axis=1)
    acts = (cum < u[:, None]).sum(axis=1)
    return np.minimum(acts, logits.shape[1] - 1)


def _reduce_batch(
    w: PolicyWeights,
    start_words: np.ndarray,
    n: int,
    budget: int,
    temps: np.ndarray | None,
    uniforms: np.ndarray | None,
    no_loop: bool,
) -> tuple[np.ndarray, list[list[int]]]:
    """Drive S start states toward the identity; returns (solved, action lists).

    Greedy when temps is None (argmax, ties to the lowest action index),
    otherwise softmax sampling at temps[step] using uniforms[:, step].
    """
    gates = all_gates(n)
    num_actions = len(gates)
    s_total = start_words.shape[0]
    words = start_words.astype(_WORD, copy=True)
    id_words = identity_words(n)
    solved = np.all(words == id_words, axis=1)
    actions: list[list[int]] = [[] for _ in range(s_total)]
    visited: list[set[bytes]] = [set() for _ in range(s_total)]
    if no_loop:
        for i in range(s_total):
            visited[i].add(words[i].tobytes())
    active = np.nonzero(~solved)[0]

    for step in range(budget):
        if active.size == 0:
            break
        codes = words_to_codes(words[active], n)
        logits, _ = forward_batch(w, codes)
        logits = logits.astype(np.float64)
        if no_loop:
            allowed = np.ones((active.size, num_actions), dtype=bool)
            for a, g in enumerate(gates):
                succ = words[active].copy()
                apply_action_packed_(succ, g, n)
                for row, s in enumerate(active):
                    if succ[row].tobytes() in visited[s]:
                        allowed[row, a] = False
            stuck = ~allowed.any(axis=1)
            allowed[stuck] = True
            logits = np.where(allowed, logits, -np.inf)
        if temps is None:
            acts = np.argmax(logits, axis=1)
        else:
            acts = _sample_rows(logits, float(temps[step]), uniforms[active, step])
        for a in np.unique(acts):
            rows = active[acts == a]
            sub = words[rows]
            apply_action_packed_(sub, gates[int(a)], n)
            words[rows] = sub
        for row, s in enumerate(active):
            actions[s].append(int(acts[row]))
            if no_loop:
                visited[s].add(words[s].tobytes())
        done = np.all(words[active] == id_words, axis=1)
        if done.any():
            solved[active[done]] = True
            active = active[~done]
    return solved, actions


def _orient(actions: list[int], n: int, direction: int) -> Circuit:
    gates = all_gates(n)
    seq = [gates[a] for a in actions]
    if direction == 0:  # reduced the target: reversed sequence rebuilds it
        seq = list(reversed(seq))
    return Circuit(n, tuple(seq))


def _better(key_a, key_b) -> bool:
    return key_a < key_b


def greedy_decode(w: PolicyWeights, target: Tableau, cfg: DecodeConfig) -> SynthResult:
    """Argmax decoding of the target (and its inverse when enabled)."""
    t0 = time.perf_counter()
    n = target.n
    starts = [tableau_to_words(target)]
    if cfg.inverse_trick:
        starts.append(tableau_to_words(inverse(target)))
    words = np.stack(starts)
    solved, actions = _reduce_batch(
        w, words, n, cfg.step_budget, None, None, cfg.no_loop
    )
    best = None
    for direction in range(words.shape[0]):
        if not solved[direction]:
            continue
        c = _orient(actions[direction], n, direction)
        key = (c.cz_count, len(c), direction)
        if best is None or _better(key, best[0]):
            best = (key, c)
    wall = time.perf_counter() - t0
    if best is None:
        return SynthResult(False, Circuit(n), 0, 0, words.shape[0], wall)
    c = best[1]
    assert verify_circuit(c, target)
    return SynthResult(True, c, c.cz_count, c.single_count, words.shape[0], wall)


def rollout_decode(
    w: PolicyWeights, target: Tableau, cfg: DecodeConfig, seed: int
) -> SynthResult:
    """Temperature-scheduled sampled rollouts with best-circuit retention.

    Deterministic given (seed, num_samples, schedules): sample k of arm a and
    direction d always draws from the stream keyed (a, d, k), so growing
    num_samples only adds candidates and can never worsen the result.
    """
    if cfg.num_samples < 1 or not cfg.schedules:
        return greedy_decode(w, target, cfg)
    t0 = time.perf_counter()
    n = target.n
    starts = [tableau_to_words(target)]
    if cfg.inverse_trick:
        starts.append(tableau_to_words(inverse(target)))
    best = None
    samples_used = 0
    for arm_idx, schedule in enumerate(cfg.schedules):
        temps = _temps_for(schedule, cfg.step_budget)
        for direction, start in enumerate(starts):
            uniforms = np.empty((cfg.num_samples, cfg.step_budget))
            for k in range(cfg.num_samples):
                ss = np.random.SeedSequence(entropy=seed, spawn_key=(arm_idx, direction, k))
                uniforms[k] = np.random.Generator(np.random.Philox(ss)).random(
                    cfg.step_budget
                )
            words = np.tile(start, (cfg.num_samples, 1))
            solved, actions = _reduce_batch(
                w, words, n, cfg.step_budget, temps, uniforms, cfg.no_loop
            )
            samples_used += cfg.num_samples
            for k in np.nonzero(solved)[0]:
                c = _orient(actions[int(k)], n, direction)
                key = (c.cz_count, len(c), arm_idx, direction, int(k))
                if best is None or _better(key, best[0]):
                    best = (key, c)
    wall = time.perf_counter() - t0
    if best is None:
        return SynthResult(False, Circuit(n), 0, 0, samples_used, wall)
    c = best[1]
    assert verify_circuit(c, target)
    return SynthResult(True, c, c.cz_count, c.single_count, samples_used, wall)


def greedy_decode_batch(
    w: PolicyWeights, batch: list[Tableau], cfg: DecodeConfig
) -> list[SynthResult]:
    """Greedy decode of many same-size targets in one batched pass.

    Per-target wall time is amortized (total time / number of targets).
    """
    if not batch:
        return []
    n = batch[0].n
    if any(t.n != n for t in batch):
        raise ArgumentError("batched decode needs a uniform qubit count")
    t0 = time.perf_counter()
    dirs = 2 if cfg.inverse_trick else 1
    rows = []
    for t in batch:
        rows.append(tableau_to_words(t))
        if cfg.inverse_trick:
            rows.append(tableau_to_words(inverse(t)))
    solved, actions = _reduce_batch(
        w, np.stack(rows), n, cfg.step_budget, None, None, cfg.no_loop
    )
    wall = (time.perf_counter() - t0) / len(batch)
    out = []
    for i, target in enumerate(batch):
        best = None
        for direction in range(dirs):
            row = i * dirs + direction
            if not solved[row]:
                continue
            c = _orient(actions[row], n, direction)
            key = (c.cz_count, len(c), direction)
            if best is None or _better(key, best[0]):
                best = (key, c)
        if best is None:
            out.append(SynthResult(False, Circuit(n), 0, 0, dirs, wall))
        else:
            c = best[1]
            assert verify_circuit(c, target)
            out.append(SynthResult(True, c, c.cz_count, c.single_count, dirs, wall))
    return out


# -- cz-equivalent cost of imported circuits ------------------------------------

_IMPORT_WEIGHTS = {
    "cz": 1,
    "cx": 1,
    "swap": 3,
    "h": 0,
    "s": 0,
    "sdg": 0,
    "x": 0,
    "y": 0,
    "z": 0,
}
_TWO_QUBIT_TOKENS = ("cz", "cx", "swap")


@dataclass(frozen=True)
class ImportedCircuit:
    """Gate-token sequence accepted only for cost accounting."""

    n: int
    ops: tuple[tuple[str, tuple[int, ...]], ...] = field(default_factory=tuple)


def cz_equivalent_cost(c: Circuit | ImportedCircuit) -> int:
    """Entangling cost: cz and cx count 1, swap counts 3, single-qubit 0."""
    if isinstance(c, Circuit):
        return c.cz_count
    total = 0
    for token, _ in c.ops:
        if token not in _IMPORT_WEIGHTS:
            raise FormatError(f"unknown gate token {token!r}")
        total += _IMPORT_WEIGHTS[token]
    return total


# -- circuit text format ---------------------------------------------------------
#
# Header "CIRCUIT n=<n>", then one gate per line: "h <i>", "s <i>",
# "cz <i> <j>" with i < j.  The import-only tokens cx/swap/x/y/z/sdg are
# accepted solely by parse_imported_circuit for cost accounting.


def dump_circuit(c: Circuit) -> str:
    lines = [f"CIRCUIT n={c.n}"]
    lines += [str(g) for g in c.gates]
    return "\n".join(lines) + "\n"


def _parse_header(lines: list[str]) -> tuple[int, list[str]]:
    body = [ln.strip() for ln in lines if ln.strip() and not ln.strip().startswith("#")]
    if not body or not body[0].startswith("CIRCUIT n="):
        raise FormatError("expected 'CIRCUIT n=<n>' header")
    try:
        n = int(body[0][len("CIRCUIT n=") :])
    except ValueError:
        raise FormatError(f"bad qubit count in {body[0]!r}") from None
    if n < 1:
        raise FormatError(f"bad qubit count {n}")
    return n, body[1:]


def parse_circuit(text: str) -> Circuit:
    n, body = _parse_header(text.splitlines())
    gates = []
    for line in body:
        parts = line.split()
        try:
            if parts[0] == "h" and len(parts) == 2:
                gates.append(Gate.h(int(parts[1])))
            elif parts[0] == "s" and len(parts) == 2:
                gates.append(Gate.s(int(parts[1])))
            elif parts[0] == "cz" and len(parts) == 3:
                i, j = int(parts[1]), int(parts[2])
                if i >= j:
                    raise FormatError(f"cz qubits must satisfy i < j: {line!r}")
                gates.append(Gate.cz(i, j))
            else:
                raise FormatError(f"bad gate line {line!r}")
        except (ValueError, ArgumentError) as exc:
            raise FormatError(f"bad gate line {line!r}: {exc}") from None
    try:
        return Circuit(n, tuple(gates))
    except ArgumentError as exc:
        raise FormatError(str(exc)) from None


def parse_imported_circuit(text: str) -> ImportedCircuit:
    n, body = _parse_header(text.splitlines())
    ops = []
    for line in body:
        parts = line.split()
        token = parts[0]
        if token not in _IMPORT_WEIGHTS:
            raise FormatError(f"unknown gate token {token!r}")
        want = 2 if token in _TWO_QUBIT_TOKENS else 1
        try:
            qubits = tuple(int(x) for x in parts[1:])
        except ValueError:
            raise FormatError(f"bad gate line {line!r}") from None
        if len(qubits) != want or any(not 0 <= q < n for q in qubits):
            raise FormatError(f"bad gate line {line!r}")
        if want == 2 and qubits[0] == qubits[1]:
            raise FormatError(f"two-qubit gate needs distinct qubits: {line!r}")
        ops.append((token, qubits))
    return ImportedCircuit(n, tuple(ops))


def read_circuit(path: str) -> Circuit:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_circuit(fh.read())


def write_circuit(path: str, c: Circuit) -> None:
    from .ioutil import atomic_write_text

    atomic_write_text(path, dump_circuit(c))
