import numpy as np
import pytest

from cliffsynth.errors import ShapeError
from cliffsynth.f2linalg import (
    BitMatrix,
    hamming_to_identity,
    matmul_f2,
    rank_f2,
    transpose,
)

M_H = BitMatrix.from_dense([[0, 1], [1, 0]])
M_S = BitMatrix.from_dense([[1, 1], [0, 1]])


def all_2x2():
    for bits in range(16):
        yield BitMatrix.from_dense(
            [[(bits >> 3) & 1, (bits >> 2) & 1], [(bits >> 1) & 1, bits & 1]]
        )


def test_matmul_goldens():
    assert matmul_f2(M_H, M_H) == BitMatrix.identity(2)  # generators are involutions
    assert matmul_f2(BitMatrix.identity(2), M_S) == M_S
    assert matmul_f2(M_H, M_S) == BitMatrix.from_dense([[0, 1], [1, 1]])


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        matmul_f2(BitMatrix.identity(2), BitMatrix.identity(3))


def test_matmul_matches_dense_reference(rng):
    for _ in range(50):
        r, k, c = rng.integers(1, 70, size=3)
        a = BitMatrix.from_dense(rng.integers(0, 2, size=(r, k)))
        b = BitMatrix.from_dense(rng.integers(0, 2, size=(k, c)))
        want = (a.to_dense().astype(int) @ b.to_dense().astype(int)) % 2
        got = matmul_f2(a, b)
        assert np.array_equal(got.to_dense(), want)
        assert got.is_canonical()


def test_matmul_associative_exhaustive_2x2():
    mats = list(all_2x2())
    for a in mats:
        for b in mats:
            ab = matmul_f2(a, b)
            for c in mats:
                assert matmul_f2(ab, c) == matmul_f2(a, matmul_f2(b, c))


def test_matmul_associative_random(rng):
    for _ in range(30):
        dims = rng.integers(1, 40, size=4)
        a = BitMatrix.from_dense(rng.integers(0, 2, size=(dims[0], dims[1])))
        b = BitMatrix.from_dense(rng.integers(0, 2, size=(dims[1], dims[2])))
        c = BitMatrix.from_dense(rng.integers(0, 2, size=(dims[2], dims[3])))
        assert matmul_f2(matmul_f2(a, b), c) == matmul_f2(a, matmul_f2(b, c))


def test_rank_goldens():
    assert rank_f2(BitMatrix.identity(2)) == 2
    assert rank_f2(BitMatrix.zeros(2, 2)) == 0
    assert rank_f2(BitMatrix.from_dense([[1, 1], [1, 1]])) == 1


def test_rank_does_not_mutate(rng):
    a = BitMatrix.from_dense(rng.integers(0, 2, size=(9, 9)))
    before = a.words.copy()
    rank_f2(a)
    assert np.array_equal(a.words, before)


def test_rank_equals_rank_of_transpose(rng):
    for _ in range(40):
        r, c = rng.integers(1, 50, size=2)
        a = BitMatrix.from_dense(rng.integers(0, 2, size=(r, c)))
        assert rank_f2(a) == rank_f2(transpose(a))


def test_rank_matches_float_rank(rng):
    # numpy rank over the rationals is a lower bound; check on small matrices
    # against brute-force row reduction done densely
    for _ in range(30):
        r, c = rng.integers(1, 9, size=2)
        dense = rng.integers(0, 2, size=(r, c))
        a = BitMatrix.from_dense(dense)
        # dense gaussian elimination mod 2
        m = dense.copy() % 2
        rank = 0
        for col in range(c):
            piv = [i for i in range(rank, r) if m[i, col]]
            if not piv:
                continue
            m[[rank, piv[0]]] = m[[piv[0], rank]]
            for i in range(r):
                if i != rank and m[i, col]:
                    m[i] ^= m[rank]
            rank += 1
        assert rank_f2(a) == rank


def test_hamming_goldens():
    assert hamming_to_identity(BitMatrix.identity(4)) == 0
    assert hamming_to_identity(M_H) == 4
    assert hamming_to_identity(M_S) == 1


def test_hamming_requires_square():
    with pytest.raises(ShapeError):
        hamming_to_identity(BitMatrix.zeros(2, 3))


def test_hamming_invariant_under_joint_permutation(rng):
    for _ in range(30):
        n = int(rng.integers(2, 30))
        dense = rng.integers(0, 2, size=(n, n))
        sig = rng.permutation(n)
        assert hamming_to_identity(BitMatrix.from_dense(dense)) == hamming_to_identity(
            BitMatrix.from_dense(dense[np.ix_(sig, sig)])
        )


def test_transpose_goldens():
    assert transpose(M_S) == BitMatrix.from_dense([[1, 0], [1, 1]])
    assert transpose(BitMatrix.identity(2)) == BitMatrix.identity(2)
    omega1 = BitMatrix.from_dense([[0, 1], [1, 0]])
    assert transpose(omega1) == omega1


def test_padding_canonical_after_operations(rng):
    for cols in (1, 63, 64, 65, 100):
        a = BitMatrix.from_dense(rng.integers(0, 2, size=(5, cols)))
        assert a.is_canonical()
        assert transpose(a).is_canonical()
        b = BitMatrix.from_dense(rng.integers(0, 2, size=(cols, 7)))
        assert matmul_f2(a, b).is_canonical()


def test_accessors_and_strings(rng):
    dense = rng.integers(0, 2, size=(6, 6))
    a = BitMatrix.from_dense(dense)
    for i in range(6):
        for j in range(6):
            assert a.get(i, j) == dense[i, j]
    assert BitMatrix.from_strings(a.to_strings()) == a
    a2 = a.copy()
    a2.set_(0, 0, 1 - a.get(0, 0))
    assert a2 != a and a2.is_canonical()
