"""Bit-packed dense linear algebra over GF(2).

Matrices are stored row-major, one bit per entry, packed LSB-first into
64-bit words.  Bit ``j`` of row ``i`` lives at ``words[i, j // 64] >> (j % 64)``.
Bits beyond ``cols`` in the last word of each row are kept zero (canonical
padding), so whole-word comparisons and popcounts are valid.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

_WORD = np.uint64


def _nwords(cols: int) -> int:
    return (cols + 63) // 64


def _tail_mask(cols: int) -> int:
    rem = cols % 64
    return (1 << rem) - 1 if rem else (1 << 64) - 1


class BitMatrix:
    """Dense binary matrix with rows packed into uint64 words.

    Values are treated as immutable after construction; operations that
    mutate in place are suffixed with an underscore and require exclusive
    ownership of the value.
    """

    __slots__ = ("rows", "cols", "words")

    def __init__(self, rows: int, cols: int, words: np.ndarray | None = None):
        if rows <= 0 or cols <= 0:
            raise ShapeError(f"matrix dimensions must be positive, got {rows}x{cols}")
        self.rows = rows
        self.cols = cols
        if words is None:
            words = np.zeros((rows, _nwords(cols)), dtype=_WORD)
        else:
            if words.shape != (rows, _nwords(cols)) or words.dtype != _WORD:
                raise ShapeError("backing words array has wrong shape or dtype")
        self.words = words

    # -- construction ------------------------------------------------------

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "BitMatrix":
        return cls(rows, cols)

    @classmethod
    def identity(cls, n: int) -> "BitMatrix":
        m = cls(n, n)
        for i in range(n):
            m.words[i, i // 64] = _WORD(1) << _WORD(i % 64)
        return m

    @classmethod
    def from_dense(cls, dense) -> "BitMatrix":
        arr = np.asarray(dense, dtype=np.uint64) & _WORD(1)
        if arr.ndim != 2:
            raise ShapeError("dense input must be 2-dimensional")
        rows, cols = arr.shape
        m = cls(rows, cols)
        for w in range(_nwords(cols)):
            chunk = arr[:, 64 * w : 64 * (w + 1)]
            shifts = np.arange(chunk.shape[1], dtype=_WORD)
            m.words[:, w] = np.bitwise_or.reduce(chunk << shifts, axis=1)
        return m

    @classmethod
    def from_strings(cls, lines: list[str]) -> "BitMatrix":
        dense = [[int(ch) for ch in line] for line in lines]
        return cls.from_dense(np.array(dense, dtype=np.uint8))

    # -- element access ----------------------------------------------------

    def get(self, i: int, j: int) -> int:
        return int((self.words[i, j // 64] >> _WORD(j % 64)) & _WORD(1))

    def set_(self, i: int, j: int, value: int) -> None:
        bit = _WORD(1) << _WORD(j % 64)
        if value & 1:
            self.words[i, j // 64] |= bit
        else:
            self.words[i, j // 64] &= ~bit

    def to_dense(self) -> np.ndarray:
        cols = np.arange(self.cols)
        return ((self.words[:, cols // 64] >> (cols % 64).astype(_WORD)) & _WORD(1)).astype(
            np.uint8
        )

    def to_strings(self) -> list[str]:
        dense = self.to_dense()
        return ["".join("1" if b else "0" for b in row) for row in dense]

    # -- value semantics ---------------------------------------------------

    def copy(self) -> "BitMatrix":
        return BitMatrix(self.rows, self.cols, self.words.copy())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitMatrix):
            return NotImplemented
        return (
            self.rows == other.rows
            and self.cols == other.cols
            and np.array_equal(self.words, other.words)
        )

    def __hash__(self) -> int:  # content hash; values are treated as immutable
        return hash((self.rows, self.cols, self.words.tobytes()))

    def __repr__(self) -> str:
        return f"BitMatrix({self.rows}x{self.cols},\n  " + "\n  ".join(self.to_strings()) + ")"

    def is_canonical(self) -> bool:
        """True iff the padding bits beyond ``cols`` are all zero."""
        mask = _WORD(_tail_mask(self.cols))
        return bool(np.all(self.words[:, -1] & ~mask == 0))


def matmul_f2(a: BitMatrix, b: BitMatrix) -> BitMatrix:
    """Product over GF(2): result[i,j] = parity of <a row i, b column j>.

    Implemented word-parallel: for every set bit k in a's row i, XOR b's
    row k into result row i.
    """
    if a.cols != b.rows:
        raise ShapeError(f"cannot multiply {a.rows}x{a.cols} by {b.rows}x{b.cols}")
    sel = a.to_dense().astype(bool)  # (a.rows, K)
    picked = np.where(sel[:, :, None], b.words[None, :, :], _WORD(0))
    out = np.bitwise_xor.reduce(picked, axis=1)
    return BitMatrix(a.rows, b.cols, out)


def rank_f2(a: BitMatrix) -> int:
    """Row rank over GF(2) by Gaussian elimination on a working copy."""
    w = a.words.copy()
    r = 0
    for c in range(a.cols):
        wi, sh = divmod(c, 64)
        col = (w[:, wi] >> _WORD(sh)) & _WORD(1)
        pivots = np.nonzero(col[r:])[0]
        if pivots.size == 0:
            continue
        p = r + int(pivots[0])
        if p != r:
            w[[r, p]] = w[[p, r]]
            col[[r, p]] = col[[p, r]]
        elim = np.nonzero(col)[0]
        elim = elim[elim != r]
        if elim.size:
            w[elim] ^= w[r]
        r += 1
        if r == a.rows:
            break
    return r


def hamming_to_identity(a: BitMatrix) -> int:
    """Number of entries where ``a`` differs from the identity of its size."""
    if a.rows != a.cols:
        raise ShapeError(f"matrix must be square, got {a.rows}x{a.cols}")
    diff = a.words ^ BitMatrix.identity(a.rows).words
    return int(np.bitwise_count(diff).sum())


def transpose(a: BitMatrix) -> BitMatrix:
    return BitMatrix.from_dense(a.to_dense().T)
