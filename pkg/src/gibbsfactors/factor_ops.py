"""Sub-operators, block operators, pushforward measures and the factor potential psi.

Matrices act on depth-m cylinder functions in the operator convention of
``transfer.ruelle_matrix``: ``L_ij`` has rows on [i] and columns on [j], and
``L_ij f(x) = exp(phi(j x)) f(j x)`` for ``x`` in [i].  For an image word
``y_0 ... y_n`` the product is ``Lb[y_n y_{n-1}] ... Lb[y_1 y_0]``, so the
rightmost factor is applied first.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cones import hilbert_nonneg, hilbert_nonneg_rows
from .errors import CapacityError, DomainError, InputError
from .potentials import Potential, birkhoff_sums
from .sft import (FactorMap, Sft, is_admissible, is_image_admissible,
                  lexmin_image_extension, word_codes, word_index, words_array)
from .transfer import cylinder_masses, eigendata, normalize, ruelle_matrix


class FactorSystem:
    """An SFT, a 1-block factor map and a potential normalised to pressure zero.

    ``phi`` is the normalised potential, ``eig`` its eigendata (rho = 1 up to
    tolerance) and ``L`` its Ruelle matrix at working depth ``depth``.
    """

    def __init__(self, sft: Sft, factor: FactorMap, potential: Potential, depth: int | None = None,
                 tol: float = 1e-12):
        if len(factor.symbol_map) != sft.size:
            raise InputError("factor map size does not match the alphabet")
        if potential.sft != sft:
            raise InputError("potential lives on a different SFT")
        m = potential.working_depth if depth is None else depth
        raw = eigendata(potential, m, tol=tol)
        self.sft = sft
        self.factor = factor
        self.raw_potential = potential
        self.raw_pressure = raw.pressure
        self.phi = normalize(potential, raw)
        self.eig = eigendata(self.phi, m, tol=tol)
        self.depth = m
        self.L = ruelle_matrix(self.phi, m)
        self.words = words_array(sft, m)
        self._fib = factor.array[self.words[:, 0]]
        self._blocks: dict[tuple[int, int], np.ndarray] = {}

    @property
    def image_size(self) -> int:
        return self.factor.image_size

    def fiber_mask(self, b: int) -> np.ndarray:
        """Words of length m whose first symbol projects to b."""
        return self._fib == b

    def symbol_mask(self, a: int) -> np.ndarray:
        return self.words[:, 0] == a

    def block(self, b: int, b2: int) -> np.ndarray:
        key = (b, b2)
        if key not in self._blocks:
            mat = self.L * np.outer(self.fiber_mask(b), self.fiber_mask(b2))
            mat.setflags(write=False)
            self._blocks[key] = mat
        return self._blocks[key]

    def reference(self, mode: str = "nu", weights=None) -> tuple[np.ndarray, np.ndarray]:
        """(g, eta): the pushforward of a word is eta . (Lb_word g)."""
        if weights is not None:
            eta = np.asarray(weights, dtype=float)
            if eta.shape != (len(self.words),) or (eta < 0).any() or eta.sum() <= 0:
                raise InputError("reference weights must be a nonnegative vector over depth-m words")
            return np.ones(len(self.words)), eta / eta.sum()
        if mode == "nu":
            return np.ones(len(self.words)), self.eig.nu
        if mode == "gibbs":
            return self.eig.h, self.eig.nu
        raise InputError("reference mode must be 'nu' or 'gibbs'")


# ---------------------------------------------------------------- operators


@dataclass(frozen=True)
class FlaggedMatrix:
    matrix: np.ndarray
    admissible: bool


@dataclass(frozen=True)
class BlockOperator:
    source: int
    target: int
    matrix: np.ndarray


def sub_operator(system: FactorSystem, i: int, j: int) -> FlaggedMatrix:
    """Matrix of L_ij; the zero matrix with ``admissible=False`` when ji is not allowed."""
    q = system.sft.size
    if not (0 <= i < q and 0 <= j < q):
        raise InputError("symbol out of range")
    if not system.sft.matrix[j, i]:
        return FlaggedMatrix(np.zeros_like(system.L), False)
    mat = system.L * np.outer(system.symbol_mask(i), system.symbol_mask(j))
    return FlaggedMatrix(mat, True)


def block_operator(system: FactorSystem, b: int, b2: int) -> BlockOperator:
    """Lb[b b2] = sum of L_ij over pi(i) = b, pi(j) = b2."""
    k = system.image_size
    if not (0 <= b < k and 0 <= b2 < k):
        raise InputError("image symbol out of range")
    return BlockOperator(b2, b, system.block(b, b2).copy())


def measure_side_block(system: FactorSystem, b: int, b2: int) -> np.ndarray:
    """Block in the forward (hidden Markov) convention: transpose of Lb[b2 b].

    Entry (u, v) is the weight of stepping from u (in fiber b) to v (in fiber b2),
    so row vectors of measures multiply on the left.
    """
    return system.block(b2, b).T.copy()


def word_operator(system: FactorSystem, w: Sequence[int]) -> FlaggedMatrix:
    """L_w = L_{w_n w_{n-1}} ... L_{w_1 w_0}; zero with a flag if w is inadmissible."""
    w = tuple(int(s) for s in w)
    if len(w) < 2:
        raise InputError("word operator needs a word of length at least two")
    if not is_admissible(system.sft, w):
        return FlaggedMatrix(np.zeros_like(system.L), False)
    out = sub_operator(system, w[1], w[0]).matrix
    for t in range(2, len(w)):
        out = sub_operator(system, w[t], w[t - 1]).matrix @ out
    return FlaggedMatrix(out, True)


def word_operator_closed_form(system: FactorSystem, w: Sequence[int]) -> np.ndarray:
    """Direct evaluation of L_w f(x) = exp(S_n phi(w_0..w_{n-1} x)) f(w_0..w_{n-1} x) on [w_n]."""
    w = tuple(int(s) for s in w)
    n = len(w) - 1
    m = system.depth
    words = system.words
    index = word_index(system.sft, m)
    out = np.zeros_like(system.L)
    a = system.sft.matrix
    for r, u in enumerate(words):
        if u[0] != w[n] or not a[w[n - 1], u[0]]:
            continue
        full = np.array([list(w[:n]) + list(u)])
        if not is_admissible(system.sft, full[0]):
            continue
        s = birkhoff_sums(system.phi, full, n)[0]
        col = index[word_codes(full[:, :m], system.sft.size)[0]]
        out[r, col] += math.exp(s)
    return out


def image_word_operator(system: FactorSystem, y: Sequence[int]) -> np.ndarray:
    """Lb_y = Lb[y_n y_{n-1}] ... Lb[y_1 y_0]."""
    y = tuple(int(s) for s in y)
    if len(y) < 2:
        raise InputError("image word operator needs length at least two")
    out = system.block(y[1], y[0]).copy()
    for t in range(2, len(y)):
        out = system.block(y[t], y[t - 1]) @ out
    return out


# ---------------------------------------------------------------- scaled products


@dataclass
class ScaledVector:
    """Represents ``vector * exp(log_scale)``; the vector is kept at max-norm one."""

    vector: np.ndarray
    log_scale: float = 0.0

    @classmethod
    def of(cls, v) -> "ScaledVector":
        return cls(np.asarray(v, dtype=float).copy(), 0.0).rescaled()

    def rescaled(self) -> "ScaledVector":
        top = float(np.max(np.abs(self.vector))) if self.vector.size else 0.0
        if top == 0.0:
            return ScaledVector(self.vector, -math.inf)
        return ScaledVector(self.vector / top, self.log_scale + math.log(top))

    def apply(self, mat: np.ndarray) -> "ScaledVector":
        return ScaledVector(mat @ self.vector, self.log_scale).rescaled()

    def log_pair(self, eta: np.ndarray) -> float:
        s = float(self.vector @ eta)
        if s <= 0:
            return -math.inf
        return math.log(s) + self.log_scale

    def value(self) -> np.ndarray:
        return self.vector * math.exp(self.log_scale)


def _image_check(system: FactorSystem, y: Sequence[int]) -> tuple[int, ...]:
    y = tuple(int(s) for s in y)
    if not y:
        raise InputError("image word must be nonempty")
    k = system.image_size
    if any(s < 0 or s >= k for s in y):
        raise InputError(f"image word {y} has symbols outside 0..{k - 1}")
    return y


def word_vector(system: FactorSystem, y: Sequence[int], g: np.ndarray) -> ScaledVector:
    """V[y] = Lb_y (g restricted to the fiber of y_0), in scaled form."""
    v = ScaledVector.of(g * system.fiber_mask(y[0]))
    for t in range(1, len(y)):
        v = v.apply(system.block(y[t], y[t - 1]))
    return v


# ---------------------------------------------------------------- pushforward


@dataclass(frozen=True)
class Pushforward:
    value: float
    admissible: bool


def pushforward_cylinder(system: FactorSystem, y: Sequence[int], which: str = "nu", weights=None) -> Pushforward:
    """pi_* nu[y] (``which='nu'``) or pi_* mu[y] (``which='gibbs'``) via the operator product.

    Words not admissible in the image shift give value 0 and ``admissible=False``.
    """
    y = _image_check(system, y)
    if not is_image_admissible(system.sft, system.factor, y):
        return Pushforward(0.0, False)
    g, eta = system.reference(which, weights)
    lp = word_vector(system, y, g).log_pair(eta)
    return Pushforward(math.exp(lp) if lp > -math.inf else 0.0, True)


def pushforward_liftsum(system: FactorSystem, y: Sequence[int], which: str = "nu") -> float:
    """Same quantity by summing cylinder masses over every admissible lift of y."""
    y = _image_check(system, y)
    n = len(y)
    words = words_array(system.sft, n)
    masses = cylinder_masses(system.eig, n, which)
    proj = system.factor.array[words]
    hit = (proj == np.asarray(y)).all(axis=1)
    return float(masses[hit].sum())


def pushforward_table(system: FactorSystem, n: int, which: str = "nu") -> tuple[np.ndarray, np.ndarray]:
    """All image words of length n (sorted) with their pushforward masses, lift-sum path."""
    words = words_array(system.sft, n)
    masses = cylinder_masses(system.eig, n, which)
    proj = system.factor.array[words]
    k = system.image_size
    codes = word_codes(proj, k)
    uniq, inv = np.unique(codes, return_inverse=True)
    vals = np.bincount(inv.reshape(-1), weights=masses, minlength=len(uniq))
    img = np.array([[(c // k ** (n - 1 - t)) % k for t in range(n)] for c in uniq], dtype=np.int64)
    return img.reshape(len(uniq), n), vals


class VectorTable:
    """V[y] for every image word y of length 1..max_len, grown breadth first.

    Level ``l`` holds sorted image words of length ``l``, max-normalised vectors
    and their log scales; ``log_mass`` is log(eta . V[y]).
    """

    def __init__(self, system: FactorSystem, max_len: int, which: str = "nu", weights=None):
        if max_len < 1:
            raise InputError("table length must be positive")
        self.system = system
        g, eta = system.reference(which, weights)
        self.eta = eta
        k = system.image_size
        self.levels: list[dict] = []
        vecs = np.array([g * system.fiber_mask(b) for b in range(k)])
        words = np.arange(k).reshape(k, 1)
        self._push(words, vecs, np.zeros(k))
        for _ in range(1, max_len):
            prev = self.levels[-1]
            new_w, new_v, new_s = [], [], []
            for b2 in range(k):
                for b in range(k):
                    sel = prev["words"][:, -1] == b
                    if not sel.any():
                        continue
                    v = prev["vecs"][sel] @ system.block(b2, b).T
                    keep = (v > 0).any(axis=1)
                    if not keep.any():
                        continue
                    w = np.column_stack([prev["words"][sel][keep], np.full(keep.sum(), b2)])
                    new_w.append(w)
                    new_v.append(v[keep])
                    new_s.append(prev["scale"][sel][keep])
            w = np.vstack(new_w)
            order = np.lexsort(w.T[::-1])
            self._push(w[order], np.vstack(new_v)[order], np.concatenate(new_s)[order])

    def _push(self, words, vecs, scale):
        top = vecs.max(axis=1)
        keep = top > 0
        words, vecs, scale, top = words[keep], vecs[keep], scale[keep], top[keep]
        vecs = vecs / top[:, None]
        scale = scale + np.log(top)
        log_mass = np.log(vecs @ self.eta) + scale
        k = self.system.image_size
        self.levels.append({"words": words, "vecs": vecs, "scale": scale, "log_mass": log_mass,
                            "codes": word_codes(words, k)})

    def lookup(self, words: np.ndarray) -> np.ndarray:
        """Row indices (within their level) of the given equal-length image words."""
        words = np.atleast_2d(words)
        lev = self.levels[words.shape[1] - 1]
        codes = word_codes(words, self.system.image_size)
        pos = np.searchsorted(lev["codes"], codes)
        pos = np.minimum(pos, len(lev["codes"]) - 1)
        if (lev["codes"][pos] != codes).any():
            raise DomainError("image word not admissible")
        return pos


# ---------------------------------------------------------------- f_m and psi


def f_m(system: FactorSystem, y: Sequence[int], which: str = "nu", weights=None) -> float:
    """log(pi_* nu[y_0 .. y_m] / pi_* nu[y_1 .. y_m]) for the given word y of length m+1."""
    y = _image_check(system, y)
    if len(y) < 2:
        raise InputError("f_m needs an image word of length at least two")
    g, eta = system.reference(which, weights)
    num = word_vector(system, y, g).log_pair(eta)
    den = word_vector(system, y[1:], g).log_pair(eta)
    if den == -math.inf:
        raise DomainError(f"tail {y[1:]} has zero mass")
    return num - den


def f_sequence(system: FactorSystem, y: Sequence[int], which: str = "nu", weights=None):
    """f_1 .. f_{len(y)-1} along y in one sweep, with the a-posteriori bounds Theta_+(F_m, G_m).

    F_m = Lb_{y_0..y_m} g and G_m = Lb_{y_1..y_m} g.  Since both are then pushed by the
    same nonnegative operators, every later f lies within Theta_+(F_m, G_m) of f_m.
    """
    y = _image_check(system, y)
    g, eta = system.reference(which, weights)
    F = ScaledVector.of(g * system.fiber_mask(y[0]))
    G = None
    fs, errs = [], []
    for t in range(1, len(y)):
        blk = system.block(y[t], y[t - 1])
        F = F.apply(blk)
        G = ScaledVector.of(g * system.fiber_mask(y[t])) if G is None else G.apply(blk)
        num, den = F.log_pair(eta), G.log_pair(eta)
        if den == -math.inf or num == -math.inf:
            raise DomainError(f"image word {y[:t + 1]} is not admissible")
        fs.append(num - den)
        errs.append(hilbert_nonneg(F.vector, G.vector))
    return np.array(fs), np.array(errs)


@dataclass
class PsiEstimate:
    value: float
    certified_error: float
    m_used: int
    f_values: np.ndarray
    apriori_error: float
    aposteriori_error: float
    word: tuple[int, ...]
    mode: str = "certified"


def _extend(system: FactorSystem, y: tuple[int, ...], length: int) -> tuple[int, ...]:
    if len(y) >= length:
        return y
    return tuple(lexmin_image_extension(system.sft, system.factor, y, length))


def estimate_psi(system: FactorSystem, y: Sequence[int], eps: float = 1e-6, schedule=None,
                 mode: str = "certified", which: str = "nu", weights=None, m_max: int = 4096) -> PsiEstimate:
    """psi(y) = lim f_m(y) with an error bound.

    Short words are extended by the lexicographically smallest continuation in the
    image shift.  ``mode='certified'`` stops at the first m where the smaller of
    the a-priori bound (from ``schedule``) and the a-posteriori bound drops below
    ``eps``.  ``mode='apriori'`` insists on the schedule bound alone and raises
    CapacityError when the required length exceeds ``m_max``.
    """
    y = _image_check(system, y)
    if not is_image_admissible(system.sft, system.factor, y):
        raise DomainError(f"image word {y} is not admissible")
    if mode not in ("certified", "apriori"):
        raise InputError("mode must be 'certified' or 'apriori'")
    if mode == "apriori":
        if schedule is None:
            raise InputError("a-priori mode needs a schedule")
        m = schedule.apriori_length(eps, m_max)
        word = _extend(system, y, m + 1)
        fs, errs = f_sequence(system, word[: m + 1], which, weights)
        bound = schedule.apriori_bound(m)
        return PsiEstimate(float(fs[-1]), bound, m, fs, bound, float(errs[-1]), word[: m + 1], mode)
    length = max(len(y), 2)
    while True:
        word = _extend(system, y, length)
        fs, errs = f_sequence(system, word, which, weights)
        best = None
        for m in range(1, len(fs) + 1):
            pri = schedule.apriori_bound(m) if schedule is not None else math.inf
            post = float(errs[m - 1])
            if min(pri, post) <= eps:
                best = (m, pri, post)
                break
        if best is not None:
            m, pri, post = best
            return PsiEstimate(float(fs[m - 1]), min(pri, post), m, fs[:m], pri, post, word[: m + 1])
        if length > m_max:
            raise CapacityError(f"no certified psi within eps={eps} up to m={m_max}")
        length = min(2 * length, m_max + 1)


@dataclass
class BirkhoffPsi:
    summed: float
    telescoped: float
    certified_error: float


def birkhoff_sum_psi(system: FactorSystem, y: Sequence[int], n: int, m: int, which: str = "nu") -> BirkhoffPsi:
    """S_n psi(y) two ways: the sum of f_{m-k}(sigma^k y) and log(P[y_0..y_m] / P[y_n..y_m])."""
    y = _image_check(system, y)
    if n < 1 or m < n:
        raise InputError("need 1 <= n <= m")
    word = _extend(system, y, m + 1)[: m + 1]
    g, eta = system.reference(which)
    terms, err = 0.0, 0.0
    for k in range(n):
        fs, errs = f_sequence(system, word[k:], which)
        terms += fs[-1]
        err += errs[-1]
    tele = word_vector(system, word, g).log_pair(eta) - word_vector(system, word[n:], g).log_pair(eta)
    return BirkhoffPsi(float(terms), float(tele), float(err))


@dataclass
class PsiVariation:
    value: float
    slack: float
    bound: float
    witness: tuple[tuple[int, ...], tuple[int, ...]] | None


def _sn_psi_table(table: VectorTable, length: int, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """S_n psi at every image word of the given length (telescoped) with a-posteriori errors."""
    lev = table.levels[length - 1]
    words = lev["words"]
    tail = table.levels[length - n - 1]
    tail_rows = table.lookup(words[:, n:])
    sn = lev["log_mass"] - tail["log_mass"][tail_rows]
    err = np.zeros(len(words))
    cur_vecs = lev["vecs"]
    for k in range(n):
        nxt = table.levels[length - k - 2]
        rows = table.lookup(words[:, k + 1:])
        err += hilbert_nonneg_rows(cur_vecs, nxt["vecs"][rows])
        cur_vecs = nxt["vecs"][rows]
    return words, sn, err


def psi_variation(system: FactorSystem, n: int, j: int, len_cap: int, schedule=None,
                  table: VectorTable | None = None) -> PsiVariation:
    """var_{n+j} S_n psi over image words of length ``len_cap``.

    S_n psi is taken from the telescoped pushforward ratio at that length; its
    distance to the true value is at most the summed Theta_+ of consecutive
    suffix vectors, so the true variation lies within ``slack`` of ``value``.
    ``bound`` is the schedule's a-priori bound sum_{t=j}^{n+j-1} 2 eps(t).
    """
    if n < 1 or j < 0:
        raise InputError("need n >= 1 and j >= 0")
    if len_cap < n + j + 1:
        raise InputError(f"len_cap {len_cap} too small for n={n}, j={j}")
    if table is None or len(table.levels) < len_cap:
        table = VectorTable(system, len_cap)
    words, sn, err = _sn_psi_table(table, len_cap, n)
    p = n + j
    codes = word_codes(words[:, :p], system.image_size)
    _, grp = np.unique(codes, return_inverse=True)
    grp = grp.reshape(-1)
    ng = grp.max() + 1
    hi = np.full(ng, -np.inf)
    lo = np.full(ng, np.inf)
    np.maximum.at(hi, grp, sn)
    np.minimum.at(lo, grp, sn)
    spread = hi - lo
    g = int(np.argmax(spread))
    members = np.flatnonzero(grp == g)
    a = members[np.argmax(sn[members])]
    b = members[np.argmin(sn[members])]
    # var_p psi <= 2 sup |psi - f_{p-1}|, and S_n psi adds n shifted copies
    bound = sum(2 * schedule.apriori_bound(t) for t in range(j, n + j)) if schedule is not None else math.inf
    return PsiVariation(float(spread[g]), float(2 * err.max()), bound,
                        (tuple(int(s) for s in words[a]), tuple(int(s) for s in words[b])))


@dataclass
class GibbsEquivalence:
    c_low: float
    c_high: float
    lower_bound: float
    upper_bound: float
    K: float
    C1: float
    C2: float
    slack: float
    holds: bool
    witness_low: tuple[int, ...]
    witness_high: tuple[int, ...]


def verify_gibbs_equivalence(system: FactorSystem, n_max: int, K: float, C1: float, C2: float,
                             tail: int = 8) -> GibbsEquivalence:
    """Bracket exp(S_n psi(y)) / pi_* mu[y_0..y_{n-1}] over all image words of length <= n_max.

    Every word is followed by every admissible tail of length ``tail``; S_n psi is
    the telescoped estimate and its a-posteriori error widens the bracket.  The
    check passes when the widened bracket sits inside [e^{-K} C1, C2].
    """
    if n_max < 1 or tail < 1:
        raise InputError("n_max and tail must be positive")
    table = VectorTable(system, n_max + tail)
    mu_table = VectorTable(system, n_max, which="gibbs")
    lo, hi, slack = math.inf, -math.inf, 0.0
    wlo = whi = ()
    for n in range(1, n_max + 1):
        words, sn, err = _sn_psi_table(table, n + tail, n)
        rows = mu_table.lookup(words[:, :n])
        logr = sn - mu_table.levels[n - 1]["log_mass"][rows]
        i, k = int(np.argmin(logr - err)), int(np.argmax(logr + err))
        if logr[i] - err[i] < lo:
            lo, wlo = float(logr[i] - err[i]), tuple(int(s) for s in words[i, :n])
        if logr[k] + err[k] > hi:
            hi, whi = float(logr[k] + err[k]), tuple(int(s) for s in words[k, :n])
        slack = max(slack, float(err.max()))
    c_low, c_high = math.exp(lo), math.exp(hi)
    lower = math.exp(-K) * C1
    holds = c_low >= lower * (1 - 1e-12) and c_high <= C2 * (1 + 1e-12)
    return GibbsEquivalence(c_low, c_high, lower, C2, K, C1, C2, slack, holds, wlo, whi)


def g_function_sums(system: FactorSystem, tails: np.ndarray) -> np.ndarray:
    """sum over y_0 of exp(f(y_0 tail)) in g-measure mode, for each tail word (rows)."""
    g, eta = system.reference("gibbs")
    out = []
    for t in tails:
        t = tuple(int(s) for s in t)
        den = word_vector(system, t, g).log_pair(eta)
        tot = 0.0
        for b in range(system.image_size):
            w = (b,) + t
            if is_image_admissible(system.sft, system.factor, w):
                tot += math.exp(word_vector(system, w, g).log_pair(eta) - den)
        out.append(tot)
    return np.array(out)
