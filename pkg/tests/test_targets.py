import numpy as np
import pytest

from cliffsynth import oracle
from cliffsynth.errors import ArgumentError
from cliffsynth.targets import (
    batch_header,
    parse_batch_header,
    random_walk_target,
    random_walk_words,
    sample_walk_length,
    sample_walk_lengths,
    uniform_target,
)
from cliffsynth.tableau import Tableau, apply_circuit, dump_tableaus


def test_walk_length_zero_and_integer(rng):
    assert sample_walk_length(0.0, rng) == 0
    t, walk = random_walk_target(2, 0.0, rng)
    assert t == Tableau.identity(2) and len(walk) == 0
    lengths = sample_walk_lengths(7.0, 2000, rng)
    assert np.all(lengths == 7)  # integer difficulty is a plain d-step walk


def test_walk_length_fractional_mean(rng):
    # E[L] = d; Bernoulli variance gives the spread for fractional d
    lengths = sample_walk_lengths(2.5, 100_000, rng)
    assert set(np.unique(lengths)) == {2, 3}
    sigma = lengths.std() / np.sqrt(lengths.size)
    assert abs(lengths.mean() - 2.5) < 3 * sigma


def test_walk_length_rejects_negative(rng):
    with pytest.raises(ArgumentError):
        sample_walk_length(-0.5, rng)


def test_walk_reproducible_and_symplectic():
    a1, w1 = random_walk_target(4, 9.5, np.random.default_rng(33))
    a2, w2 = random_walk_target(4, 9.5, np.random.default_rng(33))
    assert a1 == a2 and w1 == w2
    assert a1.is_symplectic()
    assert apply_circuit(Tableau.identity(4), w1) == a1


def test_walk_words_fast_path_matches(rng):
    t, _ = random_walk_target(3, 11, np.random.default_rng(5))
    words = random_walk_words(3, 11, np.random.default_rng(5))
    from cliffsynth.env import tableau_to_words

    assert np.array_equal(words, tableau_to_words(t))


def test_even_walks_stay_in_even_parity_class(rng):
    # the generator walk has period 2 for n <= 2
    pc1 = oracle.parity_classes(1)
    even1 = set(int(k) for k in pc1.even_keys)
    for _ in range(100):
        t, _ = random_walk_target(1, 4.0, rng)
        assert int(oracle.pack_tableau(t)) in even1
    pc2 = oracle.parity_classes(2)
    odd2 = set(int(k) for k in pc2.odd_keys)
    for _ in range(100):
        t, _ = random_walk_target(2, 5.0, rng)
        assert int(oracle.pack_tableau(t)) in odd2


def test_uniform_always_symplectic(rng):
    for n in (1, 2, 3, 5):
        for _ in range(10):
            assert uniform_target(n, rng).is_symplectic()


def test_uniform_chi_square_n1(rng):
    from scipy import stats

    _, states = oracle.enumerate_group(1, return_states=True)
    index = {int(k): i for i, k in enumerate(states)}
    counts = np.zeros(len(states))
    for _ in range(6000):
        counts[index[int(oracle.pack_tableau(uniform_target(1, rng)))]] += 1
    p = stats.chisquare(counts).pvalue
    assert p > 0.001


def test_long_walk_matches_uniform_on_block_statistic(rng):
    # coarse statistic: number of nonzero 2x2 blocks; exact reference from
    # the full n=3 group
    from cliffsynth.env import words_to_codes
    from cliffsynth.oracle import unpack_key

    _, states = oracle.enumerate_group(3, return_states=True)
    rows = np.stack([unpack_key(k, 3) for k in states[rng.choice(states.size, 40_000, replace=False)]])
    ref_counts = (words_to_codes(rows, 3) != 0).sum(axis=(1, 2))
    ref_hist = np.bincount(ref_counts, minlength=10) / ref_counts.size

    d = 10 * 3 * 3
    walk_rows = np.stack([random_walk_words(3, d, rng) for _ in range(4000)])
    walk_counts = (words_to_codes(walk_rows, 3) != 0).sum(axis=(1, 2))
    walk_hist = np.bincount(walk_counts, minlength=10) / walk_counts.size
    tv = 0.5 * np.abs(ref_hist - walk_hist).sum()
    assert tv < 0.05


def test_batch_header_round_trip():
    text = dump_tableaus([Tableau.identity(2)], header=batch_header("walk", 2, 6.5, 9, 1))
    meta = parse_batch_header(text)
    assert meta == {"family": "walk", "n": "2", "d": "6.5", "seed": "9", "count": "1"}
    assert parse_batch_header("TABLEAU n=1\n01\n10\n") == {}
