import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gibbsfactors.catalog import example_full_shift, example_system, golden_mean_collapse
from gibbsfactors.errors import InputError
from gibbsfactors.sft import (FactorMap, Sft, enumerate_words, fiber_condition_bruteforce,
                              fiber_condition_witness, fiber_mixing_exponent, format_word, image_end_set,
                              image_start_set, image_words, is_admissible, is_image_admissible,
                              is_topologically_mixing, lexmin_image_extension, load_system, parse_word,
                              project_word, words_array)


def test_word_counts_golden_mean_are_fibonacci():
    g, _ = golden_mean_collapse()
    assert [len(words_array(g, n)) for n in range(1, 9)] == [2, 3, 5, 8, 13, 21, 34, 55]


def test_words_sorted_and_admissible():
    sft, _, _ = example_system()
    w = words_array(sft, 4)
    assert len(w) == int(np.linalg.matrix_power(sft.matrix, 3).sum())
    assert all(is_admissible(sft, r) for r in w)
    assert [tuple(r) for r in w] == sorted(tuple(r) for r in w)
    assert not any((r[i], r[i + 1]) == (1, 1) for r in w for i in range(3))


def test_inadmissible_word():
    sft, _, _ = example_system()
    assert not is_admissible(sft, (0, 1, 1))
    assert is_admissible(sft, (2, 1, 0))


def test_topological_mixing():
    assert is_topologically_mixing(Sft.full(3)) == (True, 1)
    g, _ = golden_mean_collapse()
    assert is_topologically_mixing(g) == (True, 2)
    assert not is_topologically_mixing(Sft(((0, 1), (1, 0)))).mixing


def test_fiber_mixing_full_shift_example_is_one():
    sft, f = example_full_shift()
    assert fiber_mixing_exponent(sft, f).exponent == 1


def test_fiber_mixing_support_example_is_two():
    sft, f, _ = example_system()
    res = fiber_mixing_exponent(sft, f)
    assert res.exponent == 2
    wit = res.failures[0]
    assert (wit.n, wit.image_word, wit.start, wit.end) == (1, (0, 0), 1, 1)


def test_golden_mean_witness_is_forbidden_lift():
    g, f = golden_mean_collapse()
    res = fiber_mixing_exponent(g, f)
    assert res.exponent == 2
    wit = res.failures[0]
    assert (wit.start, wit.end) == (1, 1)
    assert not is_admissible(g, (wit.start, wit.end))
    assert fiber_condition_bruteforce(g, f, 1) is not None
    assert fiber_condition_bruteforce(g, f, 2) is None


def test_fiber_mixing_not_found_returns_none():
    g, f = golden_mean_collapse()
    res = fiber_mixing_exponent(g, f, n_max=1)
    assert res.exponent is None and len(res.failures) == 1


def test_identity_factor_is_fiber_mixing_at_one():
    sft = Sft(((0, 1), (1, 0)))
    assert fiber_mixing_exponent(sft, FactorMap.identity(2)).exponent == 1


def test_image_words_match_projection():
    sft, f, _ = example_system()
    for n in range(1, 6):
        proj = sorted({project_word(f, w) for w in enumerate_words(sft, n)})
        assert image_words(sft, f, n) == proj


def test_start_end_sets():
    sft, f, _ = example_system()
    y = (0, 0)
    assert image_end_set(sft, f, y).tolist() == [True, True, False]
    assert image_start_set(sft, f, (1,)).tolist() == [False, False, True]
    assert not is_image_admissible(sft, f, (5,))


def test_lexmin_image_extension():
    sft, f, _ = example_system()
    assert lexmin_image_extension(sft, f, (1,), 4) == (1, 0, 0, 0)
    with pytest.raises(InputError):
        lexmin_image_extension(sft, f, (3,), 4)


def test_parse_and_format_words():
    names = ("r", "b")
    assert parse_word("rrb", names) == (0, 0, 1)
    assert parse_word("r, b", names) == (0, 1)
    assert format_word((0, 1), names) == "rb"
    with pytest.raises(InputError):
        parse_word("rx", names)


def test_bad_transition_tables():
    with pytest.raises(InputError):
        Sft(((1, 0), (1,)))
    with pytest.raises(InputError):
        Sft(((1, 2), (1, 1)))
    with pytest.raises(InputError):
        Sft(((1, 0), (1, 0)))


def test_load_system(tmp_path):
    doc = {"alphabet": ["a", "b", "c"], "transitions": [[1, 1, 1]] * 3, "factor": {"a": "x", "b": "x", "c": "y"}}
    p = tmp_path / "s.json"
    p.write_text(json.dumps(doc))
    sft, f = load_system(p)
    assert sft.size == 3 and f.symbol_map == (0, 0, 1) and f.image_names == ("x", "y")
    sft, f = load_system({"alphabet": ["a", "b"], "transitions": [[1, 1], [1, 0]]})
    assert f.symbol_map == (0, 1)
    with pytest.raises(InputError):
        load_system({"alphabet": ["a"], "transitions": [[1]], "factor": {"z": "x"}})
    with pytest.raises(InputError):
        load_system(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{nope")
    with pytest.raises(InputError):
        load_system(tmp_path / "bad.json")


@st.composite
def mixing_systems(draw):
    q = draw(st.integers(2, 4))
    rows = draw(st.lists(st.lists(st.integers(0, 1), min_size=q, max_size=q), min_size=q, max_size=q))
    a = np.array(rows)
    np.fill_diagonal(a, 1)
    a[0, :] = 1
    a[:, 0] = 1
    labels = draw(st.lists(st.integers(0, q - 1), min_size=q, max_size=q))
    used = sorted(set(labels))
    labels = [used.index(x) for x in labels]
    return Sft(tuple(tuple(int(v) for v in r) for r in a)), FactorMap(tuple(labels))


@settings(max_examples=60, deadline=None)
@given(mixing_systems(), st.integers(1, 3))
def test_fiber_witness_agrees_with_bruteforce(system, n):
    sft, f = system
    assert (fiber_condition_witness(sft, f, n) is None) == (fiber_condition_bruteforce(sft, f, n) is None)


@settings(max_examples=40, deadline=None)
@given(mixing_systems(), st.integers(1, 4))
def test_image_words_are_projections(system, n):
    sft, f = system
    assert image_words(sft, f, n) == sorted({project_word(f, w) for w in enumerate_words(sft, n)})
