"""Shifts of finite type, words, and 1-block factor maps.

Matrix convention used throughout this module: ``A[i, j] == 1`` means the
two-letter word ``ij`` is admissible, i.e. symbol ``j`` may follow symbol ``i``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InputError

Word = tuple[int, ...]


@dataclass(frozen=True)
class Sft:
    """One-sided shift of finite type given by a 0/1 transition table."""

    transitions: tuple[tuple[int, ...], ...]
    names: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        rows = tuple(tuple(int(v) for v in row) for row in self.transitions)
        q = len(rows)
        if q == 0:
            raise InputError("alphabet must be nonempty")
        if any(len(r) != q for r in rows):
            raise InputError("transition table must be square")
        if any(v not in (0, 1) for r in rows for v in r):
            raise InputError("transition entries must be 0 or 1")
        a = np.array(rows, dtype=np.int64)
        if (a.sum(axis=1) == 0).any() or (a.sum(axis=0) == 0).any():
            raise InputError("every symbol needs an incoming and an outgoing transition")
        object.__setattr__(self, "transitions", rows)
        if not self.names:
            object.__setattr__(self, "names", tuple(str(i) for i in range(q)))
        elif len(self.names) != q:
            raise InputError("names must match the alphabet size")

    @classmethod
    def full(cls, q: int) -> "Sft":
        return cls(tuple(tuple([1] * q) for _ in range(q)))

    @property
    def size(self) -> int:
        return len(self.transitions)

    @property
    def matrix(self) -> np.ndarray:
        return _matrix(self)

    def __repr__(self):
        return f"Sft(size={self.size}, transitions={self.transitions})"


@lru_cache(maxsize=None)
def _matrix(sft: Sft) -> np.ndarray:
    a = np.array(sft.transitions, dtype=np.int64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FactorMap:
    """Symbol-wise map pi: Sigma -> image alphabet (indices 0..image_size-1)."""

    symbol_map: tuple[int, ...]
    image_names: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        sm = tuple(int(s) for s in self.symbol_map)
        if not sm:
            raise InputError("factor map must be nonempty")
        used = sorted(set(sm))
        if used != list(range(len(used))):
            raise InputError("image labels must be exactly 0..k-1 (all used)")
        object.__setattr__(self, "symbol_map", sm)
        if not self.image_names:
            object.__setattr__(self, "image_names", tuple(str(i) for i in range(len(used))))

    @classmethod
    def from_labels(cls, labels: Sequence[str]) -> "FactorMap":
        """Build from per-symbol labels; image indices follow first appearance."""
        order: dict[str, int] = {}
        for lab in labels:
            order.setdefault(lab, len(order))
        return cls(tuple(order[lab] for lab in labels), tuple(order))

    @classmethod
    def identity(cls, q: int) -> "FactorMap":
        return cls(tuple(range(q)))

    @property
    def image_size(self) -> int:
        return max(self.symbol_map) + 1

    @property
    def array(self) -> np.ndarray:
        return np.array(self.symbol_map, dtype=np.int64)

    def fiber(self, b: int) -> list[int]:
        return [i for i, c in enumerate(self.symbol_map) if c == b]


def _check_symbols(sft: Sft, w: Sequence[int]) -> Word:
    w = tuple(int(s) for s in w)
    if not w:
        raise InputError("word must have length >= 1")
    for s in w:
        if not 0 <= s < sft.size:
            raise InputError(f"symbol {s} out of range for alphabet of size {sft.size}")
    return w


def is_admissible(sft: Sft, w: Sequence[int]) -> bool:
    w = _check_symbols(sft, w)
    a = sft.transitions
    return all(a[x][y] for x, y in zip(w, w[1:]))


@lru_cache(maxsize=256)
def words_array(sft: Sft, n: int) -> np.ndarray:
    """All admissible words of length n as rows of an int array, lexicographically sorted."""
    if n < 1:
        raise InputError("word length must be >= 1")
    a = sft.matrix.astype(bool)
    q = sft.size
    words = np.arange(q, dtype=np.int64)[:, None]
    for _ in range(n - 1):
        rep = np.repeat(words, q, axis=0)
        nxt = np.tile(np.arange(q, dtype=np.int64), len(words))
        keep = a[rep[:, -1], nxt]
        words = np.column_stack([rep[keep], nxt[keep]])
    words.setflags(write=False)
    return words


def enumerate_words(sft: Sft, n: int) -> list[Word]:
    return [tuple(int(s) for s in row) for row in words_array(sft, n)]


def word_codes(words: np.ndarray, q: int) -> np.ndarray:
    """Base-q integer code of each row (lexicographic order preserving)."""
    words = np.asarray(words, dtype=np.int64)
    if words.ndim == 1:
        words = words[None, :]
    powers = q ** np.arange(words.shape[1] - 1, -1, -1, dtype=np.int64)
    return words @ powers


@lru_cache(maxsize=256)
def word_index(sft: Sft, n: int) -> np.ndarray:
    """Lookup table code -> row index in ``words_array(sft, n)`` (-1 if inadmissible)."""
    table = np.full(sft.size ** n, -1, dtype=np.int64)
    table[word_codes(words_array(sft, n), sft.size)] = np.arange(len(words_array(sft, n)))
    table.setflags(write=False)
    return table


def first_successor(sft: Sft) -> np.ndarray:
    """Smallest allowed follower of each symbol."""
    return np.argmax(sft.matrix > 0, axis=1)


def lexmin_extend(sft: Sft, words: np.ndarray, length: int) -> np.ndarray:
    """Extend each row to ``length`` by repeatedly appending the smallest allowed symbol."""
    words = np.asarray(words, dtype=np.int64)
    if words.ndim == 1:
        words = words[None, :]
    succ = first_successor(sft)
    cols = [words]
    last = words[:, -1]
    for _ in range(length - words.shape[1]):
        last = succ[last]
        cols.append(last[:, None])
    return np.concatenate(cols, axis=1)


class MixingResult(NamedTuple):
    mixing: bool
    exponent: int | None


def is_topologically_mixing(sft: Sft) -> MixingResult:
    """Smallest p with A^p > 0, searched up to the Wielandt bound (q-1)^2 + 1."""
    a = sft.matrix.astype(bool)
    q = sft.size
    cap = (q - 1) ** 2 + 1
    power = a.copy()
    for p in range(1, cap + 1):
        if power.all():
            return MixingResult(True, p)
        power = (power.astype(np.int64) @ a.astype(np.int64)) > 0
    return MixingResult(False, None)


def project_word(f: FactorMap, w: Sequence[int]) -> Word:
    return tuple(f.symbol_map[s] for s in w)


def _end_sets(sft: Sft, f: FactorMap):
    """Per image symbol c: boolean mask of domain symbols in pi^{-1}(c)."""
    pi = f.array
    return [pi == c for c in range(f.image_size)]


def image_words(sft: Sft, f: FactorMap, n: int) -> list[Word]:
    """Y-admissible words of length n, sorted, via a subset construction on lift end states."""
    if n < 1:
        raise InputError("word length must be >= 1")
    a = sft.matrix.astype(bool)
    fibers = _end_sets(sft, f)
    frontier = [((c,), fibers[c]) for c in range(f.image_size) if fibers[c].any()]
    for _ in range(n - 1):
        nxt = []
        for w, ends in frontier:
            reach = a[ends].any(axis=0)
            for c in range(f.image_size):
                e = reach & fibers[c]
                if e.any():
                    nxt.append((w + (c,), e))
        frontier = nxt
    return [w for w, _ in frontier]


def image_end_set(sft: Sft, f: FactorMap, y: Sequence[int]) -> np.ndarray:
    """Boolean mask of domain symbols a such that some lift of y ends at a."""
    a = sft.matrix.astype(bool)
    fibers = _end_sets(sft, f)
    ends = fibers[y[0]].copy()
    for c in y[1:]:
        ends = a[ends].any(axis=0) & fibers[c]
    return ends


def image_start_set(sft: Sft, f: FactorMap, y: Sequence[int]) -> np.ndarray:
    """Boolean mask of domain symbols a such that some lift of y starts at a."""
    a = sft.matrix.astype(bool)
    fibers = _end_sets(sft, f)
    starts = fibers[y[-1]].copy()
    for c in reversed(y[:-1]):
        starts = a[:, starts].any(axis=1) & fibers[c]
    return starts


def is_image_admissible(sft: Sft, f: FactorMap, y: Sequence[int]) -> bool:
    if not y or any(not 0 <= c < f.image_size for c in y):
        return False
    return bool(image_end_set(sft, f, y).any())


def lexmin_image_extension(sft: Sft, f: FactorMap, y: Sequence[int], length: int) -> Word:
    """Extend a Y-word to ``length`` by always appending the smallest admissible image symbol."""
    a = sft.matrix.astype(bool)
    fibers = _end_sets(sft, f)
    y = tuple(int(c) for c in y)
    if not is_image_admissible(sft, f, y):
        raise InputError(f"image word {y} is not admissible")
    ends = image_end_set(sft, f, y)
    while len(y) < length:
        reach = a[ends].any(axis=0)
        for c in range(f.image_size):
            if (reach & fibers[c]).any():
                y = y + (c,)
                ends = reach & fibers[c]
                break
    return y


def fiber_matrix(sft: Sft, f: FactorMap, b: Sequence[int]) -> np.ndarray:
    """Product of fiber-restricted transition matrices along the image word b (same convention as A)."""
    a = sft.matrix
    pi = f.array
    m = np.diag((pi == b[0]).astype(np.int64))
    for c, c2 in zip(b, b[1:]):
        block = a * np.outer(pi == c, pi == c2)
        m = np.minimum(m @ block, 1)  # only the zero pattern matters
    return m


class FiberWitness(NamedTuple):
    n: int
    image_word: Word
    start: int
    end: int


class FiberMixingResult(NamedTuple):
    exponent: int | None
    failures: list[FiberWitness]


def fiber_condition_witness(sft: Sft, f: FactorMap, n: int) -> FiberWitness | None:
    """First violation of the fiber mixing condition at N=n (matrix certificate), else None."""
    for b in image_words(sft, f, n + 1):
        m = fiber_matrix(sft, f, b)
        rows = m.any(axis=1)
        cols = m.any(axis=0)
        bad = np.argwhere(np.outer(rows, cols) & (m == 0))
        if len(bad):
            i, j = bad[0]
            return FiberWitness(n, b, int(i), int(j))
    return None


def fiber_condition_bruteforce(sft: Sft, f: FactorMap, n: int) -> FiberWitness | None:
    """Same check as :func:`fiber_condition_witness` by direct search over lift pairs."""
    lifts: dict[Word, list[Word]] = {}
    for w in enumerate_words(sft, n + 1):
        lifts.setdefault(project_word(f, w), []).append(w)
    for b in sorted(lifts):
        group = lifts[b]
        endpoints = {(w[0], w[-1]) for w in group}
        for u, w in product(group, group):
            if (u[0], w[-1]) not in endpoints:
                return FiberWitness(n, b, u[0], w[-1])
    return None


def fiber_mixing_exponent(sft: Sft, f: FactorMap, n_max: int = 12) -> FiberMixingResult:
    """Smallest N <= n_max for which the fiber mixing condition holds.

    Each N is tested independently; monotonicity in N is not assumed.
    Returns ``exponent=None`` when the search is exhausted.
    """
    failures = []
    for n in range(1, n_max + 1):
        wit = fiber_condition_witness(sft, f, n)
        if wit is None:
            return FiberMixingResult(n, failures)
        failures.append(wit)
    return FiberMixingResult(None, failures)


def parse_word(text: str, names: Sequence[str]) -> Word:
    """Parse a word written either as space/comma separated names or, for one-character names, concatenated."""
    lookup = {n: i for i, n in enumerate(names)}
    parts = text.replace(",", " ").split()
    if len(parts) == 1 and parts[0] not in lookup and all(len(n) == 1 for n in names):
        parts = list(parts[0])
    try:
        return tuple(lookup[p] for p in parts)
    except KeyError as exc:
        raise InputError(f"unknown symbol {exc.args[0]!r} in word {text!r}") from None


def format_word(w: Sequence[int], names: Sequence[str]) -> str:
    if all(len(n) == 1 for n in names):
        return "".join(names[s] for s in w)
    return " ".join(names[s] for s in w)


def load_system(source) -> tuple[Sft, FactorMap]:
    """Read an SFT plus factor map from a JSON file path or an already-parsed dict.

    Format: ``{"alphabet": [...], "transitions": [[...]], "factor": {"name": "label"}}``.
    A missing ``factor`` means the identity map.
    """
    if isinstance(source, (str, Path)):
        try:
            doc = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read system file {source}: {exc}") from None
    else:
        doc = source
    try:
        names = tuple(str(s) for s in doc["alphabet"])
        sft = Sft(tuple(tuple(r) for r in doc["transitions"]), names)
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed system document: {exc}") from None
    if len(set(names)) != len(names):
        raise InputError("alphabet names must be distinct")
    factor = doc.get("factor")
    if factor is None:
        return sft, FactorMap(tuple(range(sft.size)), names)
    if set(factor) != set(names):
        raise InputError("factor must map every alphabet symbol exactly once")
    return sft, FactorMap.from_labels([str(factor[n]) for n in names])
