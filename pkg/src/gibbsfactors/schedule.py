"""Cone schedules: block lengths n_j, metric tables d_{j,k}, and the constants B, C, D, gamma.

alpha(0, k) is the chosen base sequence and alpha(m, k) = var_{m+k} S_m phi for m >= 1.
Given sigma, n_j is the least n >= 1 with

    alpha(n_i, n_{i+1} + ... + n_{j-1} + n) <= (sigma/2)^{j-i}   for i = 0 .. j-1

(n_0 = 0), raised to at least the fiber-mixing exponent, and

    d_{j,k} = sum_{i=0}^{j} alpha(n_i, n_{i+1} + ... + n_j + k) / sigma^{j-i+1}.

Because alpha is nonincreasing in k, checking n = n_j covers every larger n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cones import (CylinderSpace, MetricCone, MetricTable, cone_membership, hilbert_distance,
                    metric_direct_sum, sample_members)
from .errors import CapacityError, InputError, PreconditionError
from .factor_ops import FactorSystem, image_word_operator, word_operator
from .potentials import Potential, bowen_constant, variation, variation_birkhoff, walters_alpha
from .sft import fiber_condition_witness, image_end_set, image_start_set, is_admissible


class PotentialAlpha:
    """alpha(m, k) for a potential; ``source`` is 'bowen' (var_k phi) or 'walters'."""

    def __init__(self, phi: Potential, source: str = "bowen"):
        if source not in ("bowen", "walters"):
            raise InputError("alpha source must be 'bowen' or 'walters'")
        self.phi = phi
        self.source = source
        self._cache: dict[tuple[int, int], float] = {}

    def __call__(self, m: int, k: int) -> float:
        key = (m, k)
        if key not in self._cache:
            if m == 0:
                v = variation(self.phi, k) if self.source == "bowen" else walters_alpha(self.phi, k)
            else:
                v = variation_birkhoff(self.phi, m, k)
            self._cache[key] = v
        return self._cache[key]


@dataclass(frozen=True)
class GeometricAlpha:
    """Closed-form alpha for a Holder envelope c theta^k.

    alpha(m, k) = sum_{t=k+1}^{k+m} c theta^t for m >= 1 and
    alpha(0, k) = sigma c theta^{k+1} / (sigma - theta), the base sequence that makes
    n_j = 1 and d_{j,k} = c theta^{k+1} / (sigma - theta) an exact solution.
    """

    c: float
    theta: float
    sigma: float
    source: str = "geometric"

    def __call__(self, m: int, k: int) -> float:
        c, th = self.c, self.theta
        if m == 0:
            return self.sigma * c * th ** (k + 1) / (self.sigma - th)
        return c * th ** (k + 1) * (1 - th ** m) / (1 - th)


@dataclass
class ConeSchedule:
    sigma: float
    n_seq: list[int]            # n_1 .. n_{j_max}
    d: np.ndarray               # d[j, k], j = 0 .. j_max, k = 0 .. k_stored - 1
    k_max: int
    B: float
    K: float
    n_fiber: int
    alpha_source: str
    alpha: Callable[[int, int], float] = field(repr=False, default=None)
    stationary: bool = False
    C: float | None = None
    D: float | None = None
    gamma: float | None = None
    raised: list[int] = field(default_factory=list)  # indices j where n_j was lifted to n_fiber

    @property
    def j_max(self) -> int:
        return len(self.n_seq)

    def n_at(self, j: int) -> int:
        """n_j for j >= 1, continuing a stationary schedule past j_max."""
        if j < 1:
            raise InputError("n_j is defined for j >= 1")
        if j <= self.j_max:
            return self.n_seq[j - 1]
        if self.stationary:
            return self.n_seq[-1]
        raise CapacityError(f"schedule covers j <= {self.j_max} only")

    def table(self, j: int) -> MetricTable:
        if j <= self.j_max:
            return MetricTable.of(self.d[j])
        if self.stationary:
            return MetricTable.of(self.d[-1])
        raise CapacityError(f"schedule covers j <= {self.j_max} only")

    def blocks_within(self, m: int) -> int:
        """Largest k with 1 + n_1 + ... + n_k <= m (capped at j_max unless stationary)."""
        total, k = 1, 0
        for n in self.n_seq:
            if total + n > m:
                return k
            total += n
            k += 1
        if self.stationary:
            k += (m - total) // self.n_seq[-1]
        return k

    def apriori_bound(self, m: int) -> float:
        """gamma^{k-1} D for the largest usable k; infinity with no complete block."""
        if self.gamma is None or self.D is None:
            return math.inf
        k = self.blocks_within(m)
        if k < 1:
            return math.inf
        return self.D * self.gamma ** (k - 1)

    def blocks_needed(self, eps: float) -> int:
        if self.gamma is None or self.D is None:
            raise InputError("schedule has no diameter constants")
        if self.D < eps:
            return 1
        if self.gamma <= 0:
            return 1
        return 1 + math.ceil(math.log(eps / self.D) / math.log(self.gamma) + 1e-12)

    def apriori_length(self, eps: float, cap: int) -> int:
        """Least m = 1 + n_1 + ... + n_k with gamma^{k-1} D < eps; CapacityError beyond cap."""
        k = self.blocks_needed(eps)
        if k > self.j_max and not self.stationary:
            raise CapacityError(f"need {k} blocks but the schedule covers {self.j_max}")
        head = sum(self.n_seq[: min(k, self.j_max)])
        m = 1 + head + max(0, k - self.j_max) * self.n_seq[-1]
        if m > cap:
            raise CapacityError(f"a-priori bound needs m={m} > cap={cap} ({k} blocks)")
        return m

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma, "n_seq": list(self.n_seq), "k_max": self.k_max,
            "d": [[float(x) for x in row[: self.k_max + 1]] for row in self.d],
            "B": self.B, "K": self.K, "n_fiber": self.n_fiber, "alpha_source": self.alpha_source,
            "stationary": self.stationary, "C": self.C, "D": self.D, "gamma": self.gamma,
            "raised_to_fiber": list(self.raised),
        }


def _d_row(alpha, sigma: float, ns: Sequence[int], j: int, k_len: int) -> np.ndarray:
    """d_{j,k} for k < k_len; ns = (n_0, n_1, ..., n_j) with n_0 = 0."""
    row = np.zeros(k_len)
    for k in range(k_len):
        tot = 0.0
        for i in range(j + 1):
            tot += alpha(ns[i], sum(ns[i + 1: j + 1]) + k) / sigma ** (j - i + 1)
        row[k] = tot
    return row


def build_schedule(alpha, sigma: float, K: float, n_fiber: int = 1, j_max: int = 8, k_max: int = 32,
                   n_cap: int = 64, source: str | None = None) -> ConeSchedule:
    """Run the inductive construction for j = 1 .. j_max."""
    if not 0 < sigma < 1:
        raise InputError("sigma must lie in (0, 1)")
    if j_max < 1 or k_max < 0 or n_cap < 1 or n_fiber < 1:
        raise InputError("j_max, n_cap, n_fiber must be positive and k_max nonnegative")
    ns = [0]
    raised = []
    for j in range(1, j_max + 1):
        chosen = None
        for n in range(1, n_cap + 1):
            ok = True
            for i in range(j):
                offset = sum(ns[i + 1: j]) + n
                if alpha(ns[i], offset) > (sigma / 2) ** (j - i) + 1e-15:
                    ok = False
                    break
            if ok:
                chosen = n
                break
        if chosen is None:
            bad = [i for i in range(j)
                   if alpha(ns[i], sum(ns[i + 1: j]) + n_cap) > (sigma / 2) ** (j - i) + 1e-15]
            raise CapacityError(f"n_{j} exceeds n_cap={n_cap}; failing row i={bad[0] if bad else '?'}")
        if chosen < n_fiber:
            raised.append(j)
            chosen = n_fiber
        ns.append(chosen)
    k_len = k_max + max(ns) + 1
    d = np.array([_d_row(alpha, sigma, ns, j, k_len) for j in range(j_max + 1)])
    stationary = j_max >= 2 and ns[-1] == ns[-2] and np.allclose(d[-1], d[-2], rtol=0, atol=1e-14)
    return ConeSchedule(sigma, ns[1:], d, k_max, (2 + K) / sigma, K, n_fiber,
                        source or getattr(alpha, "source", "custom"), alpha, bool(stationary), raised=raised)


def schedule_for_potential(phi: Potential, sigma: float, source: str = "bowen", n_fiber: int = 1,
                           j_max: int = 8, k_max: int = 32, n_cap: int = 64,
                           bowen_n: int | None = None) -> ConeSchedule:
    """build_schedule with alpha from the potential and K from its Bowen constant."""
    K = bowen_constant(phi, bowen_n or max(2 * phi.depth, 4)).K
    return build_schedule(PotentialAlpha(phi, source), sigma, K, n_fiber, j_max, k_max, n_cap, source)


def holder_schedule(theta: float, coeff: float, sigma: float, j_max: int = 8, k_max: int = 32,
                    K: float | None = None) -> ConeSchedule:
    """Closed form n_j = 1, d_{j,k} = coeff theta^{k+1} / (sigma - theta)."""
    if not 0 < theta < 1 or not 0 < sigma < 1:
        raise InputError("theta and sigma must lie in (0, 1)")
    if sigma <= theta:
        raise InputError("the closed form needs sigma > theta")
    if coeff < 0:
        raise InputError("coefficient must be nonnegative")
    k_len = k_max + 2
    row = coeff * theta ** (np.arange(k_len) + 1) / (sigma - theta)
    d = np.tile(row, (j_max + 1, 1))
    if K is None:
        K = coeff * theta / (1 - theta)
    alpha = GeometricAlpha(coeff, theta, sigma)
    return ConeSchedule(sigma, [1] * j_max, d, k_max, (2 + K) / sigma, K, 1, "holder-closed-form",
                        alpha, True)


def verify_recurrence(s: ConeSchedule, alpha=None, j_limit: int | None = None, k_limit: int | None = None) -> float:
    """max |sigma d_{j+1,k} - alpha(n_{j+1}, k) - d_{j, n_{j+1}+k}| over stored indices."""
    alpha = alpha or s.alpha
    if alpha is None:
        raise InputError("no alpha provider available")
    jl = s.j_max - 1 if j_limit is None else j_limit
    kl = s.k_max if k_limit is None else k_limit
    if jl > s.j_max - 1 or kl > s.k_max:
        raise InputError("index outside the stored range")
    worst = 0.0
    for j in range(jl + 1):
        n = s.n_seq[j]
        for k in range(kl + 1):
            if n + k >= s.d.shape[1]:
                raise InputError("index outside the stored range")
            r = s.sigma * s.d[j + 1, k] - alpha(n, k) - s.d[j, n + k]
            worst = max(worst, abs(r))
    return worst


@dataclass
class UniformBound:
    max_d: float
    B: float
    passed: bool
    slack: float


def uniform_bound_check(s: ConeSchedule) -> UniformBound:
    top = float(s.d.max()) if s.d.size else 0.0
    return UniformBound(top, s.B, top <= s.B + 1e-12, s.B - top)


@dataclass
class DiameterConstants:
    C: float
    D: float
    gamma: float
    op_norm: float
    sup_norm: float
    n_eff: int


def diameter_constants(system: FactorSystem, s: ConeSchedule, attach: bool = True) -> DiameterConstants:
    """C = N log||L|| + B + N ||phi||_inf, D = 2 log((1+s)/(1-s)) + 2C, gamma = tanh(D/4).

    N is the largest block length in use; the fiber condition is checked at every
    distinct n_j.  ||L|| is the sup-norm operator norm max(L 1) of the normalised operator.
    """
    for n in sorted(set(s.n_seq)):
        if fiber_condition_witness(system.sft, system.factor, n) is not None:
            raise PreconditionError(f"fiber mixing fails at block length {n}")
    n_eff = max(s.n_seq)
    op = float((system.L @ np.ones(len(system.words))).max())
    sup = system.phi.sup_norm()
    C = n_eff * math.log(op) + s.B + n_eff * sup
    D = 2 * math.log((1 + s.sigma) / (1 - s.sigma)) + 2 * C
    gamma = math.tanh(D / 4)
    if attach:
        s.C, s.D, s.gamma = C, D, gamma
    return DiameterConstants(C, D, gamma, op, sup, n_eff)


# ---------------------------------------------------------------- sampled inequality checks


@dataclass
class MappingCheck:
    samples: int
    violations: int
    worst_excess: float
    worst_sample: int | None


def cone_mapping_check(system: FactorSystem, s: ConeSchedule, j: int, w: Sequence[int], samples: int,
                       rng: np.random.Generator) -> MappingCheck:
    """Sample f in C([w_0], d_j) and test L_w f in C([w_n], sigma d_{j+1}), n = n_{j+1}."""
    w = tuple(int(x) for x in w)
    if len(w) != s.n_at(j + 1) + 1:
        raise InputError(f"word length must be n_{j + 1} + 1 = {s.n_at(j + 1) + 1}")
    if not is_admissible(system.sft, w):
        raise InputError(f"word {w} is not admissible")
    space = CylinderSpace(system.sft, system.depth)
    c_in = MetricCone(w[0], s.table(j))
    c_out = MetricCone(w[-1], s.table(j + 1).scaled(s.sigma))
    L = word_operator(system, w).matrix
    viol, worst, where = 0, -math.inf, None
    for t, f in enumerate(sample_members(space, c_in, rng, samples)):
        mem = cone_membership(space, L @ f, c_out, tol=1e-10)
        if mem.excess > worst:
            worst, where = mem.excess, t
        if not mem.member:
            viol += 1
    return MappingCheck(samples, viol, float(worst), where)


@dataclass
class ContractionCheck:
    pairs: int
    violations: int
    bound: float
    max_ratio: float
    ratios: list[float]


def empirical_contraction(system: FactorSystem, s: ConeSchedule, y: Sequence[int], k: int, samples: int,
                          rng: np.random.Generator, j: int = 0) -> ContractionCheck:
    """Compare Theta over k consecutive blocks of y with the gamma^k prediction.

    Blocks start at y_0 and have lengths n_{j+1}, ..., n_{j+k}; between blocks the
    vector is restricted to the start set of the next block.  Inputs are sampled
    from the in-cone of the first block with metric d_j, outputs measured in the
    out-cone of the last block with metric d_{j+k}.
    """
    y = tuple(int(x) for x in y)
    if k < 1:
        raise InputError("k must be >= 1")
    if s.gamma is None:
        raise InputError("schedule has no diameter constants; run diameter_constants first")
    lens = [s.n_at(j + i) for i in range(1, k + 1)]
    if len(y) < 1 + sum(lens):
        raise InputError(f"image word too short: need length {1 + sum(lens)}")
    space = CylinderSpace(system.sft, system.depth)
    cuts = np.cumsum([0] + lens)
    blocks = [y[cuts[i]: cuts[i + 1] + 1] for i in range(k)]
    start = np.flatnonzero(image_start_set(system.sft, system.factor, blocks[0]))
    end = np.flatnonzero(image_end_set(system.sft, system.factor, blocks[-1]))
    c_in = metric_direct_sum(start, s.table(j))
    c_out = metric_direct_sum(end, s.table(j + k))
    mats = [image_word_operator(system, b) for b in blocks]
    restrict = [space.mask(np.flatnonzero(image_start_set(system.sft, system.factor, b))) for b in blocks]
    bound = s.gamma ** k
    fs = sample_members(space, c_in, rng, 2 * samples)
    ratios, viol = [], 0
    for t in range(samples):
        f, g = fs[2 * t], fs[2 * t + 1]
        tin = hilbert_distance(space, f, g, c_in)
        for mat, mask in zip(mats, restrict):
            f = mat @ (f * mask)
            g = mat @ (g * mask)
        tout = hilbert_distance(space, f, g, c_out)
        if tout > bound * tin + 1e-10:
            viol += 1
        if tin > 0:
            ratios.append(tout / tin)
    return ContractionCheck(samples, viol, bound, max(ratios) if ratios else 0.0, ratios)
