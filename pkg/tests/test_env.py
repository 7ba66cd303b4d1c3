import numpy as np
import pytest

from cliffsynth.env import (
    BatchEnv,
    EnvConfig,
    EnvState,
    action_count,
    action_index,
    all_gates,
    apply_action_packed_,
    identity_words,
    index_action,
    reward,
    step,
    tableau_to_words,
    words_to_codes,
    words_to_tableau,
)
from cliffsynth.errors import ArgumentError, ShapeError, StateError
from cliffsynth.tableau import (
    Circuit,
    Gate,
    Tableau,
    apply_circuit,
    block_codes,
    generator_matrix,
    permute,
)
from cliffsynth.targets import random_walk_target
from conftest import rand_tableau


def test_action_layout():
    assert action_index(Gate.cz(0, 1), 3) == 6
    assert action_index(Gate.cz(0, 2), 3) == 7
    assert action_index(Gate.cz(1, 2), 3) == 8
    assert action_count(6) == 27
    assert [action_index(Gate.h(i), 4) for i in range(4)] == [0, 1, 2, 3]
    assert [action_index(Gate.s(i), 4) for i in range(4)] == [4, 5, 6, 7]


def test_action_round_trip():
    for n in range(1, 11):
        for k in range(action_count(n)):
            assert action_index(index_action(k, n), n) == k


def test_action_bounds():
    with pytest.raises(ArgumentError):
        index_action(-1, 3)
    with pytest.raises(ArgumentError):
        index_action(action_count(3), 3)
    with pytest.raises(ArgumentError):
        action_index(Gate.h(3), 3)


def test_reward_goldens():
    cfg = EnvConfig()
    mcz = generator_matrix(Gate.cz(0, 1), 2)
    assert reward(mcz, Gate.cz(0, 1), cfg) == pytest.approx(24.0)
    mh = generator_matrix(Gate.h(0), 1)
    assert reward(mh, Gate.h(0), cfg) == pytest.approx(24.99)
    assert reward(mh, Gate.s(0), cfg) == pytest.approx(-0.01 - 3.0 / 8.0)


def test_reward_relabel_invariance(rng):
    cfg = EnvConfig()
    for _ in range(50):
        n = int(rng.integers(2, 7))
        t = rand_tableau(n, rng)
        g = all_gates(n)[int(rng.integers(action_count(n)))]
        sig = rng.permutation(n)
        assert reward(t, g, cfg) == reward(permute(t, sig), g.relabel(sig), cfg)


def test_shaping_bounded(rng):
    cfg = EnvConfig()
    for _ in range(40):
        n = int(rng.integers(1, 7))
        t = rand_tableau(n, rng)
        g = all_gates(n)[int(rng.integers(action_count(n)))]
        r = reward(t, g, cfg)
        cost = cfg.two_qubit_cost if g.is_two_qubit else cfg.single_qubit_cost
        shaping = -(r + cost) if r < 0 else -(r + cost - cfg.success_bonus)
        assert -1e-12 <= shaping <= 0.5 + 1e-12


def test_step_distance_one():
    cfg = EnvConfig()
    state = EnvState.start(generator_matrix(Gate.h(0), 1))
    r, done = step(state, Gate.h(0), cfg)
    assert done and r == pytest.approx(24.99)
    assert state.tableau.is_identity()
    # optimal distance-1 return is exactly bonus - cost
    assert r == pytest.approx(cfg.success_bonus - cfg.single_qubit_cost)
    with pytest.raises(StateError):
        step(state, Gate.h(0), cfg)


def test_step_cap_truncates(rng):
    cfg = EnvConfig(step_cap=3)
    target = rand_tableau(3, rng)
    state = EnvState.start(target)
    done = False
    for _ in range(3):
        assert not done
        r, done = step(state, Gate.s(0), cfg)
    assert done and state.steps_taken == 3
    assert not state.tableau.is_identity()
    assert r < cfg.success_bonus  # no success bonus on truncation


def test_reversed_history_reproduces_target(rng):
    cfg = EnvConfig(step_cap=64)
    for _ in range(20):
        target, walk = random_walk_target(3, 6, rng)
        state = EnvState.start(target)
        if state.done:
            continue
        for g in reversed(walk.gates):  # involutions undo the walk
            _, done = step(state, g, cfg)
            if done:
                break
        assert state.tableau.is_identity()
        rebuilt = apply_circuit(
            Tableau.identity(3), Circuit(3, tuple(reversed(state.history)))
        )
        assert rebuilt == target


def test_identity_start_is_done():
    assert EnvState.start(Tableau.identity(2)).done


def test_batch_matches_single_env(rng):
    cfg = EnvConfig(step_cap=9)
    target = rand_tableau(2, rng, d=7)
    benv = BatchEnv(2, 1, cfg)
    benv.reset_env(0, tableau_to_words(target))
    state = EnvState.start(target)
    acts = rng.integers(0, action_count(2), size=9)
    for a in acts:
        if state.done:
            break
        r_single, done_single = step(state, index_action(int(a), 2), cfg)
        r_batch, term, trunc = benv.step(np.array([a]))
        assert r_batch[0] == pytest.approx(r_single)
        assert bool(term[0] | trunc[0]) == done_single
        assert words_to_tableau(benv.words[0], 2) == state.tableau
    assert benv.histories[0] == [int(a) for a in acts[: state.steps_taken]]


def test_batch_permutation_of_envs(rng):
    cfg = EnvConfig(step_cap=16)
    ta = rand_tableau(2, rng, d=5)
    tb = rand_tableau(2, rng, d=5)
    b1 = BatchEnv(2, 2, cfg)
    b1.reset_env(0, tableau_to_words(ta))
    b1.reset_env(1, tableau_to_words(tb))
    b2 = BatchEnv(2, 2, cfg)
    b2.reset_env(0, tableau_to_words(tb))
    b2.reset_env(1, tableau_to_words(ta))
    acts = np.array([1, 4])
    r1, te1, tr1 = b1.step(acts)
    r2, te2, tr2 = b2.step(acts[::-1])
    assert np.allclose(r1, r2[::-1])
    assert np.array_equal(te1, te2[::-1]) and np.array_equal(tr1, tr2[::-1])


def test_batch_shape_and_state_errors(rng):
    benv = BatchEnv(2, 3, EnvConfig(step_cap=4))
    with pytest.raises(StateError):  # identity start counts as done
        benv.step(np.zeros(3, dtype=int))
    for i in range(3):
        benv.reset_env(i, tableau_to_words(rand_tableau(2, rng)))
    with pytest.raises(ShapeError):
        benv.step(np.zeros(2, dtype=int))


def test_batch_monte_carlo_self_consistency(rng):
    # fraction of done-by-identity episodes under the uniform-random policy
    # agrees between batched and single-env rollouts
    cfg = EnvConfig(step_cap=12)
    n, episodes, d = 2, 1024, 2.0

    def run_single(seed):
        r = np.random.default_rng(seed)
        wins = 0
        for _ in range(episodes):
            t, _ = random_walk_target(n, d, r)
            st = EnvState.start(t)
            while not st.done:
                _, _ = step(st, index_action(int(r.integers(action_count(n))), n), cfg)
            wins += st.tableau.is_identity()
        return wins / episodes

    def run_batch(seed):
        r = np.random.default_rng(seed)
        benv = BatchEnv(n, episodes, cfg)
        for i in range(episodes):
            t, _ = random_walk_target(n, d, r)
            benv.reset_env(i, tableau_to_words(t))
        wins = int(benv.done.sum())  # trivially solved at reset
        active = ~benv.done
        while active.any():
            acts = r.integers(0, action_count(n), size=episodes)
            live = np.nonzero(active)[0]
            sub = BatchEnv(n, live.size, cfg)
            sub.words = benv.words[live]
            sub.steps = benv.steps[live]
            sub.done = benv.done[live]
            rr, term, trunc = sub.step(acts[live])
            benv.words[live] = sub.words
            benv.steps[live] = sub.steps
            benv.done[live] = sub.done
            wins += int(term.sum())
            active[live[term | trunc]] = False
        return wins / episodes

    p1 = run_single(1)
    p2 = run_batch(2)
    se = np.sqrt(p1 * (1 - p1) / episodes + p2 * (1 - p2) / episodes)
    assert abs(p1 - p2) <= 3 * se + 1e-9


def test_words_codes_round_trip(rng):
    t = rand_tableau(3, rng)
    words = tableau_to_words(t)
    assert words_to_tableau(words, 3) == t
    assert np.array_equal(words_to_codes(words[None], 3)[0], block_codes(t))


def test_apply_action_packed_matches_tableau(rng):
    from cliffsynth.tableau import apply_gate

    for _ in range(60):
        n = int(rng.integers(1, 9))
        t = rand_tableau(n, rng)
        g = all_gates(n)[int(rng.integers(action_count(n)))]
        words = tableau_to_words(t)
        apply_action_packed_(words, g, n)
        assert words_to_tableau(words, n) == apply_gate(t, g)


def test_identity_words_matches_tableau():
    for n in (1, 2, 5, 32):
        assert np.array_equal(identity_words(n), tableau_to_words(Tableau.identity(n)))
