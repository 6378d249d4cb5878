import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gibbsfactors.catalog import EXAMPLE_S
from gibbsfactors.errors import CapacityError, DomainError, InputError
from gibbsfactors.factor_ops import (FactorSystem, ScaledVector, VectorTable, birkhoff_sum_psi,
                                     block_operator, estimate_psi, f_m, f_sequence, g_function_sums,
                                     image_word_operator, measure_side_block, psi_variation,
                                     pushforward_cylinder, pushforward_liftsum, pushforward_table,
                                     sub_operator, verify_gibbs_equivalence, word_operator,
                                     word_operator_closed_form)
from gibbsfactors.potentials import bowen_constant, from_tables
from gibbsfactors.sft import FactorMap, Sft, enumerate_words, image_words, words_array
from gibbsfactors.transfer import gibbs_constants

R, B = 0, 1


def test_measure_side_blocks_reference_values(example):
    third, sixth = 1 / 3, 1 / 6
    rr = [[third, third, 0], [third, 0, 0], [0, 0, 0]]
    rb = [[0, 0, third], [0, 0, 2 * third], [0, 0, 0]]
    br = [[0, 0, 0], [0, 0, 0], [sixth, sixth, 0]]
    bb = [[0, 0, 0], [0, 0, 0], [0, 0, 2 * third]]
    for (b, b2), want in {(R, R): rr, (R, B): rb, (B, R): br, (B, B): bb}.items():
        assert np.abs(measure_side_block(example, b, b2) - np.array(want)).max() < 1e-15


def test_operator_side_block(example):
    op = block_operator(example, B, R)
    assert (op.source, op.target) == (R, B)
    assert np.allclose(op.matrix, [[0, 0, 0], [0, 0, 0], [1 / 3, 2 / 3, 0]], atol=1e-15)
    assert np.allclose(sum(example.block(b, b2) for b in (R, B) for b2 in (R, B)), EXAMPLE_S.T)


def test_sub_operator(example):
    l00 = sub_operator(example, 0, 0)
    assert l00.admissible
    assert np.allclose(l00.matrix, [[1 / 3, 0, 0], [0, 0, 0], [0, 0, 0]])
    assert not sub_operator(example, 1, 1).admissible
    assert not sub_operator(example, 1, 1).matrix.any()


def test_word_operator_closed_form(example_deep):
    for w in enumerate_words(example_deep.sft, 4):
        assert np.allclose(word_operator(example_deep, w).matrix, word_operator_closed_form(example_deep, w),
                           atol=1e-15)
    assert not word_operator(example_deep, (0, 1, 1)).admissible


def test_image_word_operator_is_sum_of_lifts(example_deep):
    y = (0, 1, 0, 0)
    total = np.zeros_like(example_deep.L)
    for w in enumerate_words(example_deep.sft, 4):
        if tuple(example_deep.factor.symbol_map[s] for s in w) == y:
            total += word_operator(example_deep, w).matrix
    assert np.allclose(image_word_operator(example_deep, y), total, atol=1e-15)


def test_pushforward_frozen_values(example):
    assert pushforward_cylinder(example, (B,), "gibbs").value == pytest.approx(10 / 17, abs=1e-13)
    assert pushforward_cylinder(example, (R, R), "gibbs").value == pytest.approx(11 / 51, abs=1e-13)
    assert pushforward_cylinder(example, (R, R, B, R), "gibbs").value == pytest.approx(5 / 153, abs=1e-13)
    assert pushforward_liftsum(example, (R, R, B, R), "gibbs") == pytest.approx(5 / 153, abs=1e-13)
    assert pushforward_cylinder(example, (B,), "nu").value == pytest.approx(1 / 3, abs=1e-13)


def test_pushforward_inadmissible_flag():
    sft = Sft(((1, 1, 0), (0, 0, 1), (1, 0, 0)))
    phi = from_tables(sft, [(1, {(0,): 0.0, (1,): 0.0, (2,): 0.0})])
    sy = FactorSystem(sft, FactorMap((0, 1, 1)), phi)
    bad = (1, 1, 1)
    p = pushforward_cylinder(sy, bad)
    assert p.value == 0.0 and not p.admissible
    assert pushforward_liftsum(sy, bad) == 0.0


def test_pushforward_table_consistent(example):
    img, vals = pushforward_table(example, 4, "gibbs")
    assert vals.sum() == pytest.approx(1.0, abs=1e-13)
    for y, v in zip(img, vals):
        assert pushforward_cylinder(example, y, "gibbs").value == pytest.approx(v, rel=1e-12)


def test_f1_frozen(example):
    assert f_m(example, (R, R), "gibbs") == pytest.approx(math.log((11 / 51) / (7 / 17)), abs=1e-13)


def test_bernoulli_psi_closed_form(bernoulli):
    for y in image_words(bernoulli.sft, bernoulli.factor, 6):
        fs, errs = f_sequence(bernoulli, y)
        want = math.log(2 / 3) if y[0] == R else math.log(1 / 3)
        assert np.abs(fs - want).max() < 1e-12
        assert errs.max() < 1e-12


def test_estimate_psi_frozen(example, example_schedule):
    est = estimate_psi(example, (R, R, R), 1e-10, example_schedule)
    assert est.value == pytest.approx(-0.6174004636, abs=1e-9)
    assert est.certified_error <= 1e-10
    assert est.m_used == 25


def test_estimate_psi_apriori_capacity(example, example_schedule):
    with pytest.raises(CapacityError):
        estimate_psi(example, (R,), 1e-6, example_schedule, mode="apriori", m_max=100)


def test_estimate_psi_errors(example):
    with pytest.raises(InputError):
        estimate_psi(example, (R, 7))
    with pytest.raises(InputError):
        estimate_psi(example, (R,), mode="other")


def test_psi_tails_ending_in_blue_are_exact(example):
    fs, errs = f_sequence(example, (R, R, B, R, B))
    assert errs[1] == 0.0 and errs[3] == 0.0


def test_birkhoff_sum_psi_two_paths(example):
    r = birkhoff_sum_psi(example, (R, B, R, R, R, B), 3, 30)
    assert abs(r.summed - r.telescoped) <= r.certified_error + 1e-12


def test_psi_variation_decays(example, example_schedule):
    table = VectorTable(example, 12)
    vals = [psi_variation(example, 1, j, 12, example_schedule, table).value for j in range(0, 8)]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
    with pytest.raises(InputError):
        psi_variation(example, 1, 12, 12)


def test_vector_table_lookup(example):
    t = VectorTable(example, 4)
    rows = t.lookup(np.array([[R, B, R, R]]))
    assert tuple(t.levels[3]["words"][rows[0]]) == (R, B, R, R)
    with pytest.raises(DomainError):
        VectorTable(FactorSystem(Sft(((1, 1), (1, 0))), FactorMap((0, 1)), from_tables(
            Sft(((1, 1), (1, 0))), [(1, {(0,): 0.0, (1,): 0.0})])), 2).lookup(np.array([[1, 1]]))


def test_gibbs_equivalence_example(example):
    K = bowen_constant(example.phi, 4).K
    c1, c2 = gibbs_constants(example.eig, example.phi, 8)
    ge = verify_gibbs_equivalence(example, 8, K, c1, c2)
    assert ge.holds
    assert ge.lower_bound <= ge.c_low <= ge.c_high <= ge.upper_bound


def test_g_function_sums_to_one(example):
    tails = np.array([[R, R, B], [B, R, R], [R, B, B]])
    assert np.allclose(g_function_sums(example, tails), 1.0, atol=1e-12)


def test_scaled_vector_long_products(example):
    v = ScaledVector.of(np.ones(3))
    for _ in range(3000):
        v = v.apply(example.block(R, R) * 0.01)
    assert np.isfinite(v.log_scale) and v.log_scale < -1e4
    assert np.max(np.abs(v.vector)) == pytest.approx(1.0)


def test_custom_reference_weights(example):
    w = np.array([1.0, 2.0, 3.0])
    p = pushforward_cylinder(example, (R,), weights=w).value
    assert p == pytest.approx(0.5, abs=1e-14)
    with pytest.raises(InputError):
        pushforward_cylinder(example, (R,), weights=[-1.0, 1.0, 1.0])


# ---------------------------------------------------------------- properties


@st.composite
def random_systems(draw):
    q = draw(st.integers(2, 4))
    seed = draw(st.integers(0, 100_000))
    rng = np.random.default_rng(seed)
    a = (rng.uniform(size=(q, q)) < 0.7).astype(int)
    np.fill_diagonal(a, 1)
    a[0, :] = 1
    a[:, 0] = 1
    sft = Sft(tuple(tuple(int(v) for v in r) for r in a))
    depth = draw(st.integers(1, 2))
    words = words_array(sft, depth)
    phi = from_tables(sft, [(depth, {tuple(int(s) for s in w): float(v)
                                     for w, v in zip(words, rng.normal(size=len(words)))})])
    labels = [int(x) for x in rng.integers(0, 2, size=q)]
    labels[0], labels[-1] = 0, 1
    return FactorSystem(sft, FactorMap(tuple(labels)), phi)


@settings(max_examples=25, deadline=None)
@given(random_systems(), st.integers(1, 5), st.sampled_from(["nu", "gibbs"]))
def test_pushforward_two_paths(sy, n, which):
    for y in image_words(sy.sft, sy.factor, n):
        a = pushforward_cylinder(sy, y, which).value
        b = pushforward_liftsum(sy, y, which)
        assert a == pytest.approx(b, rel=1e-10, abs=1e-300)


@settings(max_examples=25, deadline=None)
@given(random_systems(), st.integers(1, 4))
def test_pushforward_kolmogorov(sy, n):
    for y in image_words(sy.sft, sy.factor, n):
        whole = pushforward_cylinder(sy, y, "gibbs").value
        right = sum(pushforward_cylinder(sy, y + (c,), "gibbs").value for c in range(sy.image_size))
        left = sum(pushforward_cylinder(sy, (c,) + y, "gibbs").value for c in range(sy.image_size))
        assert right == pytest.approx(whole, rel=1e-10)
        assert left == pytest.approx(whole, rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(random_systems(), st.integers(0, 10_000))
def test_f_sequence_brackets_later_values(sy, seed):
    y = image_words(sy.sft, sy.factor, 10)
    y = y[seed % len(y)]
    fs, errs = f_sequence(sy, y)
    for m in range(len(fs)):
        assert np.all(np.abs(fs[m:] - fs[m]) <= errs[m] + 1e-10)
    assert np.all(np.diff(errs) <= 1e-12)
