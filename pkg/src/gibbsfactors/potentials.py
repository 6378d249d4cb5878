"""Potentials built as finite towers of locally constant layers.

A potential is ``phi(x) = sum_t table_t[x_0 ... x_{r_t - 1}]``.  Because every
layer is locally constant, all variation quantities below are exact suprema
over finitely many admissible words rather than sampled estimates.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputError
from .sft import (
    Sft,
    format_word,
    is_admissible,
    lexmin_extend,
    parse_word,
    word_codes,
    words_array,
)


@dataclass(frozen=True)
class Layer:
    depth: int
    table: np.ndarray = field(repr=False)  # dense over codes of length-`depth` words, nan off the SFT


@dataclass(frozen=True)
class Potential:
    sft: Sft
    layers: tuple[Layer, ...]

    @property
    def depth(self) -> int:
        """Number of coordinates phi depends on (max layer depth)."""
        return max(layer.depth for layer in self.layers)

    @property
    def working_depth(self) -> int:
        """Cylinder depth on which the transfer operator acts exactly."""
        return max(self.depth - 1, 1)

    def values(self, words: np.ndarray) -> np.ndarray:
        """phi on each row of ``words``; rows must have length >= depth."""
        words = np.asarray(words, dtype=np.int64)
        if words.shape[1] < self.depth:
            raise InputError("words shorter than the potential depth")
        q = self.sft.size
        out = np.zeros(len(words))
        for layer in self.layers:
            out += layer.table[word_codes(words[:, : layer.depth], q)]
        return out

    def shifted(self, c: float) -> "Potential":
        """phi + c, folded into a depth-1 layer."""
        q = self.sft.size
        layers = list(self.layers)
        for t, layer in enumerate(layers):
            if layer.depth == 1:
                layers[t] = Layer(1, layer.table + c)
                break
        else:
            layers.append(Layer(1, np.full(q, float(c))))
        return Potential(self.sft, tuple(layers))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values(words_array(self.sft, self.depth)))))

    def envelope(self, k_max: int | None = None) -> np.ndarray:
        """Declared variation envelope v_k = sum over layers deeper than k of the layer's prefix oscillation."""
        k_max = self.depth if k_max is None else k_max
        v = np.zeros(k_max + 1)
        for layer in self.layers:
            w = words_array(self.sft, layer.depth)
            vals = layer.table[word_codes(w, self.sft.size)]
            for k in range(min(layer.depth, k_max + 1)):
                v[k] += _grouped_oscillation(w, vals, k)
        return v


def _grouped_oscillation(words: np.ndarray, vals: np.ndarray, prefix: int) -> float:
    """max over prefix classes of (max - min); ``words`` must be lexicographically sorted."""
    if len(vals) == 0:
        return 0.0
    if prefix == 0:
        return float(vals.max() - vals.min())
    if prefix >= words.shape[1]:
        return 0.0
    head = words[:, :prefix]
    starts = np.flatnonzero(np.r_[True, (head[1:] != head[:-1]).any(axis=1)])
    hi = np.maximum.reduceat(vals, starts)
    lo = np.minimum.reduceat(vals, starts)
    return float((hi - lo).max())


def from_tables(sft: Sft, tables: Sequence[tuple[int, dict]]) -> Potential:
    """Build from ``[(depth, {word_tuple: value})]``; every admissible word must be present."""
    q = sft.size
    layers = []
    for depth, values in tables:
        if depth < 1:
            raise InputError("layer depth must be >= 1")
        table = np.full(q**depth, np.nan)
        for w, v in values.items():
            w = tuple(w)
            if len(w) != depth:
                raise InputError(f"key {w} has wrong length for a depth-{depth} layer")
            if not is_admissible(sft, w):
                raise InputError(f"key {w} is not an admissible word")
            table[word_codes(np.array([w]), q)[0]] = float(v)
        missing = np.isnan(table[word_codes(words_array(sft, depth), q)])
        if missing.any():
            w = words_array(sft, depth)[np.flatnonzero(missing)[0]]
            raise InputError(f"missing value for admissible word {tuple(int(s) for s in w)}")
        layers.append(Layer(depth, table))
    if not layers:
        raise InputError("potential needs at least one layer")
    return Potential(sft, tuple(layers))


def from_function(sft: Sft, depth: int, fn) -> Potential:
    """Single layer with value ``fn(word_tuple)`` on each admissible word."""
    return from_tables(sft, [(depth, {tuple(int(s) for s in w): fn(tuple(int(s) for s in w))
                                      for w in words_array(sft, depth)})])


def constant(sft: Sft, c: float) -> Potential:
    return from_function(sft, 1, lambda w: c)


def markov(sft: Sft, s) -> Potential:
    """phi(x) = log S[x0, x1]; the SFT must be exactly the support of S."""
    s = np.asarray(s, dtype=float)
    if not np.array_equal(s > 0, sft.matrix > 0):
        raise InputError("support of S must equal the SFT transition table")
    return from_function(sft, 2, lambda w: math.log(s[w[0], w[1]]))


def saturating_tower(sft: Sft, envelope: Sequence[float], symbol: int = 0) -> Potential:
    """Tower whose variations equal ``envelope`` on a full shift.

    Layer k (depth k+1) is ``a_k * [x_k == symbol]`` with ``a_k = v_k - v_{k+1}``
    and the last layer carrying the remaining tail, so var_n phi = v_n for
    n < len(envelope) and 0 beyond.
    """
    v = [float(x) for x in envelope]
    if any(b > a for a, b in zip(v, v[1:])) or v[-1] < 0:
        raise InputError("envelope must be nonnegative and nonincreasing")
    amps = [a - b for a, b in zip(v, v[1:])] + [v[-1]]
    tables = []
    for k, amp in enumerate(amps):
        tables.append((k + 1, {tuple(int(s) for s in w): amp * (w[k] == symbol)
                               for w in words_array(sft, k + 1)}))
    return from_tables(sft, tables)


def load_potential(sft: Sft, source) -> Potential:
    """Read a potential from a JSON path or dict.

    Accepted shapes: ``{"layers": [{"depth": r, "values": {"word": value}}]}``,
    ``{"markov": S}`` for phi = log S[x0, x1], ``{"constant": c}`` and
    ``{"tower": {"envelope": [v0, v1, ...], "symbol": a}}``.
    """
    if isinstance(source, (str, Path)):
        try:
            doc = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read potential file {source}: {exc}") from None
    else:
        doc = source
    if not isinstance(doc, dict):
        raise InputError("potential document must be a JSON object")
    if "markov" in doc:
        return markov(sft, doc["markov"])
    if "constant" in doc:
        return constant(sft, float(doc["constant"]))
    if "tower" in doc:
        tower = doc["tower"]
        try:
            return saturating_tower(sft, tower["envelope"], int(tower.get("symbol", 0)))
        except (KeyError, TypeError, AttributeError) as exc:
            raise InputError(f"malformed tower entry: {exc}") from None
    try:
        tables = [(int(layer["depth"]),
                   {parse_word(k, sft.names): v for k, v in layer["values"].items()})
                  for layer in doc["layers"]]
    except (KeyError, TypeError, AttributeError) as exc:
        raise InputError(f"malformed potential document: {exc}") from None
    return from_tables(sft, tables)


def dump_potential(phi: Potential) -> dict:
    q = phi.sft.size
    layers = []
    for layer in phi.layers:
        w = words_array(phi.sft, layer.depth)
        vals = layer.table[word_codes(w, q)]
        layers.append({"depth": layer.depth,
                       "values": {format_word(row, phi.sft.names): float(v) for row, v in zip(w, vals)}})
    return {"layers": layers}


# ---------------------------------------------------------------- evaluation


def _check_word(phi: Potential, w: Sequence[int]) -> tuple[int, ...]:
    w = tuple(int(s) for s in w)
    if not is_admissible(phi.sft, w):
        raise InputError(f"word {w} is not admissible")
    return w


def evaluate(phi: Potential, w: Sequence[int]) -> float:
    """phi at the lexicographically smallest admissible extension of w."""
    w = _check_word(phi, w)
    ext = lexmin_extend(phi.sft, np.array([w]), max(len(w), phi.depth))
    return float(phi.values(ext)[0])


def birkhoff_sum(phi: Potential, w: Sequence[int], n: int) -> float:
    w = _check_word(phi, w)
    if not 0 <= n <= len(w):
        raise InputError("n must satisfy 0 <= n <= len(w)")
    return float(birkhoff_sums(phi, np.array([w]), n)[0])


def birkhoff_sums(phi: Potential, words: np.ndarray, n: int) -> np.ndarray:
    """S_n phi for each row, evaluated at the lexmin extension when rows are short."""
    words = np.asarray(words, dtype=np.int64)
    need = n + phi.depth - 1
    if words.shape[1] < need:
        words = lexmin_extend(phi.sft, words, need)
    out = np.zeros(len(words))
    for i in range(n):
        out += phi.values(words[:, i:i + phi.depth])
    return out


# ---------------------------------------------------------------- variations


def variation(phi: Potential, n: int) -> float:
    """var_n phi: sup |phi(x) - phi(y)| over x, y sharing their first n symbols (exact)."""
    if n < 0:
        raise InputError("n must be >= 0")
    if n >= phi.depth:
        return 0.0
    w = words_array(phi.sft, phi.depth)
    return _grouped_oscillation(w, phi.values(w), n)


def variation_birkhoff(phi: Potential, n: int, k: int, len_cap: int | None = None) -> float:
    """var_{n+k} S_n phi, exact.

    Terms of S_n phi that only see the shared prefix cancel, so the supremum
    is taken over admissible windows covering the last ``depth - 1`` shared
    symbols and the free tail; the window never exceeds ``2 * depth - 2``.
    """
    if n < 1 or k < 0:
        raise InputError("need n >= 1 and k >= 0")
    r = phi.depth
    if len_cap is not None and n + k + r > len_cap:
        raise InputError(f"len_cap={len_cap} too small for n={n}, k={k}, depth={r}")
    p = n + k
    if p >= n + r - 1:
        return 0.0
    i0 = max(0, p - r + 1)
    window = words_array(phi.sft, n + r - 1 - i0)
    total = np.zeros(len(window))
    for i in range(i0, n):
        total += phi.values(window[:, i - i0:i - i0 + r])
    return _grouped_oscillation(window, total, p - i0)


@dataclass
class BowenEstimate:
    K: float
    values: list[float]  # var_n S_n phi for n = 1..n_max
    last_increase: int  # index n at which the running max last increased


def bowen_constant(phi: Potential, n_max: int) -> BowenEstimate:
    """K = max_{1 <= n <= n_max} var_n S_n phi, with the plateau position."""
    if n_max < 1:
        raise InputError("n_max must be >= 1")
    values = [variation_birkhoff(phi, n, 0) for n in range(1, n_max + 1)]
    best, last = -1.0, 1
    for n, v in enumerate(values, start=1):
        if v > best + 1e-15:
            best, last = v, n
    return BowenEstimate(max(values), values, last)


def walters_alpha(phi: Potential, k: int) -> float:
    """sup_{n >= 1} var_{n+k} S_n phi.

    For a depth-r tower the value is constant once n >= r - 1, so the
    supremum is a finite maximum.
    """
    return max(variation_birkhoff(phi, n, k) for n in range(1, max(phi.depth, 2) + 1))


# ---------------------------------------------------------------- classification


@dataclass
class RegularityReport:
    """Evidence-based regularity verdict (finite evidence, not a proof)."""

    regularity: str  # "Holder" | "Walters" | "Bowen" | "Unclassified"
    theta: float | None = None
    holder_coeff: float | None = None
    bowen_K: float | None = None
    evidence: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    note: str = "verdict from finite measured evidence; not a certificate of class membership"

    @property
    def classes(self) -> list[str]:
        order = ["Holder", "Walters", "Bowen"]
        if self.regularity not in order:
            return []
        return order[order.index(self.regularity):]


def geometric_fit(values: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares fit log v_n = a + n log(theta); returns (theta, rms log residual, slope)."""
    v = np.asarray(values, dtype=float)
    n = np.arange(len(v))
    logv = np.log(v)
    slope, icept = np.polyfit(n, logv, 1)
    resid = logv - (icept + slope * n)
    return float(math.exp(slope)), float(np.sqrt(np.mean(resid**2))), float(slope)


def classify(phi: Potential, n_max: int | None = None, k_max: int | None = None,
             fit_tol: float = 1e-2, walters_tol: float = 1e-3) -> RegularityReport:
    """Classify phi as Holder / Walters / Bowen from exact variation sequences.

    Holder: log var_n is fit linearly over its positive range; accepted when
    the slope is negative and the RMS residual is below ``fit_tol``.  Fewer
    than three positive terms counts as locally constant (Holder for any theta).
    Walters: sup_n var_{n+k} S_n phi is nonincreasing in k and below
    ``walters_tol`` at the largest tested k.  Bowen: var_n S_n phi plateaus.
    """
    r = phi.depth
    n_max = r + 2 if n_max is None else n_max
    k_max = r + 1 if k_max is None else k_max
    var = [variation(phi, n) for n in range(n_max + 1)]
    bowen = bowen_constant(phi, max(n_max, r))
    walters = [walters_alpha(phi, k) for k in range(k_max + 1)]
    thresholds = {"fit_tol": fit_tol, "walters_tol": walters_tol, "n_max": n_max, "k_max": k_max}
    evidence = {"var": var, "var_birkhoff": bowen.values, "walters_alpha": walters}
    report = RegularityReport("Unclassified", bowen_K=bowen.K, evidence=evidence, thresholds=thresholds)

    positive = []
    for v in var:
        if v <= 0:
            break
        positive.append(v)
    if all(v == 0 for v in var[len(positive):]):
        if len(positive) < 3:
            theta = 0.5
            coeff = max((v / theta**n for n, v in enumerate(positive)), default=0.0)
            report.regularity, report.theta, report.holder_coeff = "Holder", theta, coeff
            evidence["holder_basis"] = "locally constant"
            return report
        theta, resid, slope = geometric_fit(positive)
        evidence["fit"] = {"theta": theta, "rms_residual": resid, "slope": slope}
        if slope < 0 and resid < fit_tol:
            coeff = max(v / theta**n for n, v in enumerate(positive))
            report.regularity, report.theta, report.holder_coeff = "Holder", theta, coeff
            evidence["holder_basis"] = "geometric fit"
            return report
    if all(b <= a + 1e-15 for a, b in zip(walters, walters[1:])) and walters[-1] < walters_tol:
        report.regularity = "Walters"
    elif bowen.last_increase < len(bowen.values):
        report.regularity = "Bowen"
    return report
