"""Symplectic tableau semantics.

A tableau is a 2n x 2n binary symplectic matrix: columns 0..n-1 record
X-support, columns n..2n-1 record Z-support, and qubit indices are 0-based
everywhere (files included).  Appending a gate acts by right multiplication,
realized as local column operations:

    h(i):     swap column i with column n+i
    s(i):     column n+i ^= column i
    cz(i,j):  column n+i ^= column j,  column n+j ^= column i

Phase bits are not represented; in this phase-free picture every generator
is an involution.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ArgumentError, FormatError, InvariantError
from .f2linalg import BitMatrix, matmul_f2, transpose

_WORD = np.uint64


@dataclass(frozen=True)
class Gate:
    """One indexed generator: h(i), s(i) or cz(i, j) with i < j."""

    kind: str  # "h", "s" or "cz"
    a: int
    b: int = -1

    @classmethod
    def h(cls, i: int) -> "Gate":
        if i < 0:
            raise ArgumentError(f"negative qubit index {i}")
        return cls("h", i)

    @classmethod
    def s(cls, i: int) -> "Gate":
        if i < 0:
            raise ArgumentError(f"negative qubit index {i}")
        return cls("s", i)

    @classmethod
    def cz(cls, i: int, j: int) -> "Gate":
        if i < 0 or j < 0 or i == j:
            raise ArgumentError(f"cz needs two distinct non-negative qubits, got ({i}, {j})")
        if i > j:  # cz is symmetric; store i < j canonically
            i, j = j, i
        return cls("cz", i, j)

    @property
    def is_two_qubit(self) -> bool:
        return self.kind == "cz"

    def qubits(self) -> tuple[int, ...]:
        return (self.a,) if self.b < 0 else (self.a, self.b)

    def relabel(self, sigma: list[int] | np.ndarray) -> "Gate":
        if self.kind == "h":
            return Gate.h(int(sigma[self.a]))
        if self.kind == "s":
            return Gate.s(int(sigma[self.a]))
        return Gate.cz(int(sigma[self.a]), int(sigma[self.b]))

    def __str__(self) -> str:
        if self.kind == "cz":
            return f"cz {self.a} {self.b}"
        return f"{self.kind} {self.a}"


@dataclass(frozen=True)
class Circuit:
    """Ordered gate sequence on n qubits, applied left to right."""

    n: int
    gates: tuple[Gate, ...] = ()

    def __post_init__(self):
        for g in self.gates:
            _check_gate(g, self.n)

    def __len__(self) -> int:
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    @property
    def cz_count(self) -> int:
        return sum(1 for g in self.gates if g.kind == "cz")

    @property
    def single_count(self) -> int:
        return sum(1 for g in self.gates if g.kind != "cz")

    def reversed(self) -> "Circuit":
        return Circuit(self.n, tuple(reversed(self.gates)))

    def __str__(self) -> str:
        return "; ".join(str(g) for g in self.gates) or "(empty)"


def _check_gate(g: Gate, n: int) -> None:
    if g.kind not in ("h", "s", "cz"):
        raise ArgumentError(f"unknown gate kind {g.kind!r}")
    if g.kind == "cz":
        if n < 2:
            raise ArgumentError("cz requires at least 2 qubits")
        if not (0 <= g.a < g.b < n):
            raise ArgumentError(f"cz({g.a}, {g.b}) out of range for n={n}")
    elif not 0 <= g.a < n:
        raise ArgumentError(f"{g.kind}({g.a}) out of range for n={n}")


@lru_cache(maxsize=None)
def _omega_cached(n: int) -> BitMatrix:
    dense = np.zeros((2 * n, 2 * n), dtype=np.uint8)
    dense[:n, n:] = np.eye(n, dtype=np.uint8)
    dense[n:, :n] = np.eye(n, dtype=np.uint8)
    return BitMatrix.from_dense(dense)


@lru_cache(maxsize=None)
def _identity_cached(n: int) -> BitMatrix:
    return BitMatrix.identity(n)


def omega(n: int) -> BitMatrix:
    """The form matrix: block anti-diagonal of two n x n identities."""
    return _omega_cached(n).copy()


class Tableau:
    """Qubit count plus the 2n x 2n symplectic bit matrix."""

    __slots__ = ("n", "m")

    def __init__(self, n: int, m: BitMatrix, validate: bool = False):
        if n < 1:
            raise ArgumentError(f"qubit count must be >= 1, got {n}")
        if m.rows != 2 * n or m.cols != 2 * n:
            raise ArgumentError(f"matrix must be {2*n}x{2*n}, got {m.rows}x{m.cols}")
        self.n = n
        self.m = m
        if validate and not self.is_symplectic():
            raise InvariantError("matrix is not symplectic")

    @classmethod
    def identity(cls, n: int) -> "Tableau":
        return cls(n, BitMatrix.identity(2 * n))

    @classmethod
    def from_dense(cls, dense, validate: bool = False) -> "Tableau":
        arr = np.asarray(dense)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] % 2:
            raise ArgumentError("dense tableau must be square with even size")
        return cls(arr.shape[0] // 2, BitMatrix.from_dense(arr), validate=validate)

    def copy(self) -> "Tableau":
        return Tableau(self.n, self.m.copy())

    def is_symplectic(self) -> bool:
        om = _omega_cached(self.n)
        return matmul_f2(transpose(self.m), matmul_f2(om, self.m)) == om

    def is_identity(self) -> bool:
        return self.m == _identity_cached(2 * self.n)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Tableau):
            return NotImplemented
        return self.n == other.n and self.m == other.m

    def __hash__(self) -> int:
        return hash((self.n, self.m))

    def __repr__(self) -> str:
        return f"Tableau(n={self.n},\n  " + "\n  ".join(self.m.to_strings()) + ")"


# -- gate application --------------------------------------------------------


def _col_bits(words: np.ndarray, c: int) -> np.ndarray:
    wi, sh = divmod(c, 64)
    return (words[:, wi] >> _WORD(sh)) & _WORD(1)


def _xor_col_(words: np.ndarray, c: int, bits: np.ndarray) -> None:
    wi, sh = divmod(c, 64)
    words[:, wi] ^= bits << _WORD(sh)


def apply_gate_(t: Tableau, g: Gate) -> Tableau:
    """In-place right multiplication of the tableau by one generator."""
    _check_gate(g, t.n)
    w, n = t.m.words, t.n
    if g.kind == "h":
        d = _col_bits(w, g.a) ^ _col_bits(w, n + g.a)
        _xor_col_(w, g.a, d)
        _xor_col_(w, n + g.a, d)
    elif g.kind == "s":
        _xor_col_(w, n + g.a, _col_bits(w, g.a))
    else:
        _xor_col_(w, n + g.a, _col_bits(w, g.b))
        _xor_col_(w, n + g.b, _col_bits(w, g.a))
    return t


def apply_gate(t: Tableau, g: Gate) -> Tableau:
    """Right multiplication by one generator, returning a new tableau."""
    return apply_gate_(t.copy(), g)


def apply_circuit(t: Tableau, c: Circuit) -> Tableau:
    """Apply the circuit's gates left to right by right multiplication."""
    if t.n != c.n:
        raise ArgumentError(f"tableau has n={t.n} but circuit has n={c.n}")
    out = t.copy()
    for g in c.gates:
        apply_gate_(out, g)
    return out


def generator_matrix(g: Gate, n: int) -> Tableau:
    """The symplectic matrix of a single generator at qubit count n."""
    return apply_gate_(Tableau.identity(n), g)


def inverse(t: Tableau) -> Tableau:
    """Group inverse: omega * transpose(m) * omega.

    Valid only for symplectic input (checked), a direct consequence of the
    symplectic condition.
    """
    if not t.is_symplectic():
        raise InvariantError("cannot invert a non-symplectic tableau")
    om = omega(t.n)
    return Tableau(t.n, matmul_f2(om, matmul_f2(transpose(t.m), om)))


def permute(t: Tableau, sigma) -> Tableau:
    """Relabel qubits: row and column i of each X/Z half move to sigma(i)."""
    sig = np.asarray(sigma, dtype=np.int64)
    n = t.n
    if sig.shape != (n,) or not np.array_equal(np.sort(sig), np.arange(n)):
        raise ArgumentError(f"sigma must be a permutation of 0..{n-1}")
    inv = np.empty(n, dtype=np.int64)
    inv[sig] = np.arange(n)
    idx = np.concatenate([inv, inv + n])
    dense = t.m.to_dense()
    return Tableau(n, BitMatrix.from_dense(dense[np.ix_(idx, idx)]))


def block_view(t: Tableau) -> np.ndarray:
    """n x n grid of 4-bit block codes, channels ordered (XX, XZ, ZX, ZZ).

    Block (i, j) collects entries (m[i,j], m[i,j+n], m[i+n,j], m[i+n,j+n]).
    """
    n = t.n
    d = t.m.to_dense()
    return np.stack([d[:n, :n], d[:n, n:], d[n:, :n], d[n:, n:]], axis=2)


def block_codes(t: Tableau) -> np.ndarray:
    """n x n grid packing the block view as 8*XX + 4*XZ + 2*ZX + ZZ."""
    v = block_view(t)
    return (8 * v[:, :, 0] + 4 * v[:, :, 1] + 2 * v[:, :, 2] + v[:, :, 3]).astype(np.uint8)


# -- text format --------------------------------------------------------------
#
# One record:   header line "TABLEAU n=<n>" followed by 2n lines of exactly
# 2n characters from {0,1}.  Records are separated by one blank line.  Lines
# starting with '#' are comments and may appear anywhere.


def dump_tableaus(tableaus: list[Tableau], header: str | None = None) -> str:
    parts = []
    if header:
        parts.append(f"# {header}")
    for t in tableaus:
        parts.append(f"TABLEAU n={t.n}")
        parts.extend(t.m.to_strings())
        parts.append("")
    return "\n".join(parts).rstrip("\n") + "\n"


def parse_tableaus(text: str) -> list[Tableau]:
    lines = [ln.rstrip() for ln in text.splitlines() if not ln.lstrip().startswith("#")]
    out: list[Tableau] = []
    i = 0
    while i < len(lines):
        if not lines[i]:
            i += 1
            continue
        head = lines[i]
        if not head.startswith("TABLEAU n="):
            raise FormatError(f"expected 'TABLEAU n=<n>' header, got {head!r}")
        try:
            n = int(head[len("TABLEAU n=") :])
        except ValueError:
            raise FormatError(f"bad qubit count in header {head!r}") from None
        if n < 1:
            raise FormatError(f"bad qubit count {n}")
        rows = lines[i + 1 : i + 1 + 2 * n]
        if len(rows) < 2 * n:
            raise FormatError(f"truncated tableau record at line {i + 1}")
        for r in rows:
            if len(r) != 2 * n or set(r) - {"0", "1"}:
                raise FormatError(f"bad tableau row {r!r}")
        out.append(Tableau(n, BitMatrix.from_strings(rows)))
        i += 1 + 2 * n
    return out


def read_tableaus(path: str) -> list[Tableau]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_tableaus(fh.read())


def write_tableaus(path: str, tableaus: list[Tableau], header: str | None = None) -> None:
    from .ioutil import atomic_write_text

    atomic_write_text(path, dump_tableaus(tableaus, header=header))
