"""Ruelle transfer operator on depth-m cylinder functions, eigendata and Gibbs measures.

Operator convention: functions are coefficient vectors indexed by the sorted
admissible words of length m, and ``(L f) = M @ f`` with
``M[u, v] = exp(phi(j u))`` where ``v`` is the length-m prefix of ``j u``.
For a Markov potential at depth 1 this makes ``M`` the transpose of the
stochastic matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError, NumericError
from .potentials import Potential, birkhoff_sums
from .sft import is_admissible, word_codes, word_index, words_array


@dataclass(frozen=True)
class CylinderFunction:
    depth: int
    values: np.ndarray


@dataclass(frozen=True)
class CylinderMeasure:
    depth: int
    weights: np.ndarray


def ruelle_matrix(phi: Potential, depth: int | None = None) -> np.ndarray:
    """Dense matrix of L_phi on depth-``depth`` cylinder functions."""
    m = phi.working_depth if depth is None else depth
    if m < phi.depth - 1 or m < 1:
        raise InputError(f"depth {m} too small for a depth-{phi.depth} potential")
    sft = phi.sft
    words = words_array(sft, m)
    index = word_index(sft, m)
    a = sft.matrix
    mat = np.zeros((len(words), len(words)))
    rows = np.arange(len(words))
    for j in range(sft.size):
        ok = a[j, words[:, 0]] > 0
        ext = np.column_stack([np.full(ok.sum(), j), words[ok]])
        cols = index[word_codes(ext[:, :m], sft.size)]
        mat[rows[ok], cols] = np.exp(phi.values(ext))
    return mat


def ruelle_apply(phi: Potential, f: CylinderFunction) -> CylinderFunction:
    if f.depth < phi.depth - 1:
        raise InputError("function depth must be at least the potential depth minus one")
    return CylinderFunction(f.depth, ruelle_matrix(phi, f.depth) @ f.values)


@dataclass
class EigenData:
    """Perron data of L_phi at a working depth.

    ``nu`` is normalised to total mass one first; ``h`` is then scaled so that
    ``<h, nu> = 1``.  ``mu = h * nu`` holds the Gibbs weights of depth-m cylinders.
    """

    potential: Potential
    depth: int
    rho: float
    h: np.ndarray
    nu: np.ndarray
    residual: float
    iterations: int

    @property
    def pressure(self) -> float:
        return math.log(self.rho)

    @property
    def mu(self) -> np.ndarray:
        return self.h * self.nu

    @property
    def words(self) -> np.ndarray:
        return words_array(self.potential.sft, self.depth)


def _power(mat: np.ndarray, tol: float, max_iter: int) -> tuple[float, np.ndarray, int]:
    x = np.ones(mat.shape[0])
    lam_old = math.inf
    for it in range(1, max_iter + 1):
        y = mat @ x
        lam = y.sum() / x.sum()
        y /= y.sum()
        change = np.max(np.abs(y - x / x.sum()))
        x = y
        if abs(lam - lam_old) < tol and change < tol:
            return lam, x, it
        lam_old = lam
    raise NumericError(f"power iteration did not converge in {max_iter} steps",
                       residual=float(np.max(np.abs(mat @ x - lam * x))))


def eigendata(phi: Potential, depth: int | None = None, tol: float = 1e-12,
              max_iter: int = 100_000) -> EigenData:
    """Right eigenfunction h and left eigenmeasure nu by power iteration from all-ones."""
    m = phi.working_depth if depth is None else depth
    mat = ruelle_matrix(phi, m)
    rho_h, h, it1 = _power(mat, tol, max_iter)
    rho_nu, nu, it2 = _power(mat.T, tol, max_iter)
    rho = 0.5 * (rho_h + rho_nu)
    nu = nu / nu.sum()
    h = h / (h @ nu)
    residual = max(np.max(np.abs(mat @ h - rho * h)), np.max(np.abs(mat.T @ nu - rho * nu)))
    return EigenData(phi, m, float(rho), h, nu, float(residual), max(it1, it2))


def normalize(phi: Potential, e: EigenData) -> Potential:
    """phi - P, so the normalised operator has spectral radius one."""
    return phi.shifted(-e.pressure)


# ---------------------------------------------------------------- cylinder masses


def cylinder_masses(e: EigenData, n: int, which: str = "gibbs") -> np.ndarray:
    """nu[w] or mu[w] for every admissible w of length n, ordered as ``words_array(sft, n)``."""
    if which not in ("gibbs", "nu"):
        raise InputError("which must be 'gibbs' or 'nu'")
    sft = e.potential.sft
    m = e.depth
    dens = e.mu if which == "gibbs" else e.nu
    if n <= m:
        words = words_array(sft, m)
        codes = word_codes(words[:, :n], sft.size)
        target = word_index(sft, n)[codes]
        return np.bincount(target, weights=dens, minlength=len(words_array(sft, n)))
    # nu[w] = rho^-(n-1) * sum_{v: v0 = w_{n-1}} exp(S_{n-1} phi(w_{<n-1} v)) nu_v, and
    # h is constant on [w] once n - 1 >= m.
    long = words_array(sft, n - 1 + m)
    weights = np.exp(birkhoff_sums(e.potential, long, n - 1)) * e.rho ** (-(n - 1))
    weights *= e.nu[word_index(sft, m)[word_codes(long[:, n - 1:], sft.size)]]
    if which == "gibbs":
        weights *= e.h[word_index(sft, m)[word_codes(long[:, :m], sft.size)]]
    target = word_index(sft, n)[word_codes(long[:, :n], sft.size)]
    return np.bincount(target, weights=weights, minlength=len(words_array(sft, n)))


def gibbs_cylinder(e: EigenData, phi: Potential, w: Sequence[int], which: str = "gibbs") -> float:
    """mu_phi[w] (or nu[w]) computed at the working depth of ``e``."""
    sft = phi.sft
    w = tuple(int(s) for s in w)
    if not is_admissible(sft, w):
        raise InputError(f"word {w} is not admissible")
    masses = cylinder_masses(e, len(w), which)
    return float(masses[word_index(sft, len(w))[word_codes(np.array([w]), sft.size)[0]]])


def consistency_defect(e: EigenData, n: int) -> dict:
    """Max Kolmogorov (right-extension) and shift-invariance defects of mu at length n."""
    sft = e.potential.sft
    short = cylinder_masses(e, n)
    long = cylinder_masses(e, n + 1)
    words = words_array(sft, n + 1)
    idx = word_index(sft, n)
    right = np.bincount(idx[word_codes(words[:, :n], sft.size)], weights=long, minlength=len(short))
    left = np.bincount(idx[word_codes(words[:, 1:], sft.size)], weights=long, minlength=len(short))
    return {"extension": float(np.max(np.abs(right - short))),
            "shift": float(np.max(np.abs(left - short)))}


@dataclass
class GibbsBounds:
    C: float
    witness: tuple[int, ...]
    ratio_min: float
    ratio_max: float


def gibbs_bounds_check(e: EigenData, phi: Potential, n_max: int) -> GibbsBounds:
    """C = max over words of max(ratio, 1/ratio), ratio = mu[w] / exp(S_n phi(w)).

    S_n phi is taken at the lexicographically smallest extension of w.
    """
    best, witness = 1.0, (0,)
    lo, hi = math.inf, -math.inf
    for n in range(1, n_max + 1):
        words = words_array(phi.sft, n)
        ratio = cylinder_masses(e, n) / np.exp(birkhoff_sums(phi, words, n) - n * e.pressure)
        lo, hi = min(lo, ratio.min()), max(hi, ratio.max())
        c = np.maximum(ratio, 1 / ratio)
        i = int(np.argmax(c))
        if c[i] > best:
            best, witness = float(c[i]), tuple(int(s) for s in words[i])
    return GibbsBounds(best, witness, float(lo), float(hi))


def gibbs_constants(e: EigenData, phi: Potential, n_max: int) -> tuple[float, float]:
    """(C1, C2) with C1 mu[I] <= sup_z exp(S_n phi(Iz)) <= C2 mu[I] for |I| = n <= n_max."""
    sft = phi.sft
    c1, c2 = math.inf, -math.inf
    for n in range(1, n_max + 1):
        long = words_array(sft, n + phi.depth - 1)
        s = birkhoff_sums(phi, long, n) - n * e.pressure
        idx = word_index(sft, n)[word_codes(long[:, :n], sft.size)]
        sup = np.full(len(words_array(sft, n)), -np.inf)
        np.maximum.at(sup, idx, s)
        ratio = np.exp(sup) / cylinder_masses(e, n)
        c1, c2 = min(c1, ratio.min()), max(c2, ratio.max())
    return float(c1), float(c2)


# ---------------------------------------------------------------- Markov pressure identity


@dataclass
class PressureIdentity:
    entropy: float
    integral: float
    total: float
    stationary: np.ndarray


def stationary_vector(s: np.ndarray) -> np.ndarray:
    """Left Perron vector of a row-stochastic matrix, by a direct linear solve."""
    q = s.shape[0]
    system = np.vstack([s.T - np.eye(q), np.ones(q)])
    rhs = np.zeros(q + 1)
    rhs[-1] = 1.0
    return np.linalg.lstsq(system, rhs, rcond=None)[0]


def markov_pressure_identity(s) -> PressureIdentity:
    """h_mu + int phi dmu for phi = log S and mu the stationary Markov measure (should be 0)."""
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1] or (s < 0).any():
        raise InputError("S must be a square nonnegative matrix")
    if not np.allclose(s.sum(axis=1), 1.0, atol=1e-14, rtol=0):
        raise InputError("rows of S must sum to one")
    pi = stationary_vector(s)
    pos = s > 0
    entropy = 0.0
    for i in range(len(s)):
        for j in range(len(s)):
            if pos[i, j]:
                entropy -= pi[i] * s[i, j] * math.log(s[i, j])
    logs = np.where(pos, np.log(np.where(pos, s, 1.0)), 0.0)
    integral = float(np.sum(pi[:, None] * s * logs))
    return PressureIdentity(entropy, integral, entropy + integral, pi)
