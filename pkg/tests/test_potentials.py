import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gibbsfactors.catalog import EXAMPLE_S, example_system, geometric_tower, inverse_square_tower
from gibbsfactors.errors import InputError
from gibbsfactors.potentials import (birkhoff_sum, birkhoff_sums, bowen_constant, classify, constant,
                                     dump_potential, evaluate, from_function, from_tables, geometric_fit,
                                     load_potential, markov, saturating_tower, variation,
                                     variation_birkhoff, walters_alpha)
from gibbsfactors.sft import Sft, words_array

LOG4 = math.log(4)


def test_markov_values():
    sft, _, phi = example_system()
    assert evaluate(phi, (1, 2)) == pytest.approx(math.log(2 / 3), abs=1e-15)
    assert evaluate(phi, (2, 0)) == pytest.approx(math.log(1 / 6), abs=1e-15)
    assert birkhoff_sum(phi, (0, 1, 2, 2), 3) == pytest.approx(math.log(1 / 3 * 2 / 3 * 2 / 3), abs=1e-14)


def test_markov_rejects_wrong_support():
    with pytest.raises(InputError):
        markov(Sft.full(3), EXAMPLE_S)


def test_markov_variations():
    _, _, phi = example_system()
    assert variation(phi, 0) == pytest.approx(LOG4)
    assert variation(phi, 1) == pytest.approx(LOG4)
    assert variation(phi, 2) == 0.0
    b = bowen_constant(phi, 4)
    assert b.K == pytest.approx(LOG4)
    assert b.values == pytest.approx([LOG4] * 4)


def test_tower_envelope_exact():
    sft = Sft.full(3)
    env = [1.0, 1.0, 0.25, 1 / 9, 1 / 16, 1 / 25]
    phi = inverse_square_tower(sft)
    assert [variation(phi, n) for n in range(8)] == pytest.approx(env + [0, 0], abs=1e-15)


def test_tower_walters_alpha_closed_form():
    phi = inverse_square_tower(Sft.full(3))
    for k in range(7):
        assert walters_alpha(phi, k) == pytest.approx(sum(1 / i**2 for i in range(k + 1, 6)), abs=1e-14)


def test_saturating_tower_rejects_increasing():
    with pytest.raises(InputError):
        saturating_tower(Sft.full(2), [0.1, 0.2])


def test_classify_examples():
    _, _, phi = example_system()
    assert classify(phi).regularity == "Holder"
    rep = classify(geometric_tower(Sft.full(3), 0.5))
    assert rep.regularity == "Holder" and rep.theta == pytest.approx(0.5)
    rep = classify(inverse_square_tower(Sft.full(3)))
    assert rep.regularity == "Walters"
    assert rep.classes == ["Walters", "Bowen"]
    assert rep.note


def test_geometric_fit_exact():
    theta, resid, slope = geometric_fit([3 * 0.7**n for n in range(6)])
    assert theta == pytest.approx(0.7) and resid < 1e-12 and slope < 0


def test_load_potential_shapes(tmp_path):
    sft = Sft.full(2)
    assert load_potential(sft, {"constant": 2.0}).values(np.array([[0]]))[0] == 2.0
    phi = load_potential(sft, {"layers": [{"depth": 1, "values": {"0": 1.0, "1": -1.0}}]})
    assert evaluate(phi, (1,)) == -1.0
    assert dump_potential(phi)
    tw = load_potential(sft, {"tower": {"envelope": [1, 0.5], "symbol": 1}})
    assert variation(tw, 1) == pytest.approx(0.5)
    with pytest.raises(InputError):
        load_potential(sft, {"layers": [{"depth": 1, "values": {"0": 1.0}}]})
    with pytest.raises(InputError):
        load_potential(sft, [1, 2])
    with pytest.raises(InputError):
        load_potential(sft, {"tower": {"symbol": 0}})


def test_from_tables_missing_values():
    with pytest.raises(InputError):
        from_tables(Sft.full(2), [(2, {(0, 0): 1.0})])


# ---------------------------------------------------------------- properties


def _brute_variation(phi, n, length):
    words = words_array(phi.sft, length)
    vals = phi.values(words[:, : phi.depth])
    best = 0.0
    for i, j in product(range(len(words)), repeat=2):
        if (words[i, :n] == words[j, :n]).all():
            best = max(best, abs(vals[i] - vals[j]))
    return best


def _brute_birkhoff_variation(phi, n, k, length):
    words = words_array(phi.sft, length)
    s = birkhoff_sums(phi, words, n)
    best = 0.0
    p = n + k
    for i, j in product(range(len(words)), repeat=2):
        if (words[i, :p] == words[j, :p]).all():
            best = max(best, abs(s[i] - s[j]))
    return best


def _random_potential(seed, depth):
    sft = Sft.full(2)
    words = words_array(sft, depth)
    vals = np.random.default_rng(seed).normal(size=len(words))
    return from_tables(sft, [(depth, {tuple(int(s) for s in w): float(v) for w, v in zip(words, vals)})])


potentials = st.builds(_random_potential, st.integers(0, 10_000), st.integers(1, 3))


@settings(max_examples=25, deadline=None)
@given(potentials, st.integers(0, 3))
def test_variation_matches_bruteforce(phi, n):
    assert variation(phi, n) == pytest.approx(_brute_variation(phi, n, phi.depth), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(potentials, st.integers(1, 3), st.integers(0, 2))
def test_birkhoff_variation_matches_bruteforce(phi, n, k):
    length = n + phi.depth - 1 + 1
    assert variation_birkhoff(phi, n, k) == pytest.approx(
        _brute_birkhoff_variation(phi, n, k, max(length, n + k)), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(potentials, st.integers(1, 3), st.integers(1, 3))
def test_birkhoff_cocycle(phi, n, m):
    words = words_array(phi.sft, n + m + phi.depth - 1)
    lhs = birkhoff_sums(phi, words, n + m)
    rhs = birkhoff_sums(phi, words, n) + birkhoff_sums(phi, words[:, n:], m)
    assert np.allclose(lhs, rhs, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(potentials)
def test_variation_nonincreasing(phi):
    v = [variation(phi, n) for n in range(phi.depth + 1)]
    assert all(b <= a + 1e-15 for a, b in zip(v, v[1:]))
    assert v[-1] == 0.0


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3))
def test_constant_is_locally_constant(c):
    phi = constant(Sft.full(3), c)
    assert variation(phi, 0) == 0.0 and bowen_constant(phi, 3).K == 0.0


def test_from_function_depth():
    phi = from_function(Sft.full(2), 2, lambda w: float(w[0] - w[1]))
    assert phi.depth == 2 and evaluate(phi, (1, 0)) == 1.0 and variation(phi, 1) == 1.0
