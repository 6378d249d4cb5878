"""Hilbert projective metrics on cones of depth-m cylinder functions.

Functions live on ``words_array(sft, m)``.  A metric ``d`` is given by a table
``d_k`` indexed by the first index where two words differ.  Pairs of words that
agree on all ``m`` places carry equal values for locally constant data and so
never constrain anything; only pairs with agreement ``k < m`` are enumerated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import DomainError, InputError
from .sft import Sft, words_array


@dataclass(frozen=True)
class MetricTable:
    """d_k for k = 0, 1, ..., len - 1."""

    values: tuple[float, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or len(v) == 0 or (v < 0).any() or not np.isfinite(v).all():
            raise InputError("metric table must be a nonempty list of finite nonnegative reals")
        if (np.diff(v) > 1e-15 * max(1.0, v.max())).any():
            raise InputError("metric table must be nonincreasing in k")

    @classmethod
    def of(cls, values) -> "MetricTable":
        return cls(tuple(float(x) for x in values))

    def scaled(self, s: float) -> "MetricTable":
        return MetricTable(tuple(s * x for x in self.values))

    def lookup(self, k: np.ndarray) -> np.ndarray:
        k = np.asarray(k)
        if k.size and k.max() >= len(self.values):
            raise InputError(f"metric table has {len(self.values)} entries, agreement {int(k.max())} requested")
        return np.asarray(self.values)[k]


@dataclass(frozen=True)
class NonnegCone:
    """Nonnegative functions vanishing off the cylinders of ``symbols`` (all symbols if None)."""

    symbols: tuple[int, ...] | None = None


@dataclass(frozen=True)
class MetricCone:
    """C([a], d): f >= 0 on [a], zero elsewhere, f(x) <= e^{d(x, x')} f(x')."""

    symbol: int
    table: MetricTable


@dataclass(frozen=True)
class BoundedRatioCone:
    """C([a], +B): f >= 0 on [a], zero elsewhere, f(x) <= e^B f(x')."""

    symbol: int
    B: float


@dataclass(frozen=True)
class DirectSumCone:
    components: tuple

    def __post_init__(self):
        seen: set[int] = set()
        for c in self.components:
            syms = set(_symbols(c, None))
            if seen & syms:
                raise InputError("direct-sum components must have disjoint supports")
            seen |= syms


Cone = Union[NonnegCone, MetricCone, BoundedRatioCone, DirectSumCone]


def _symbols(c: Cone, q: int | None) -> list[int]:
    if isinstance(c, NonnegCone):
        if c.symbols is None:
            if q is None:
                return []
            return list(range(q))
        return list(c.symbols)
    if isinstance(c, (MetricCone, BoundedRatioCone)):
        return [c.symbol]
    out: list[int] = []
    for comp in c.components:
        out += _symbols(comp, q)
    return out


def metric_direct_sum(symbols: Sequence[int], table: MetricTable) -> DirectSumCone:
    """The sum of C([a], d) over ``symbols``; the in/out cones of an image word have this shape."""
    return DirectSumCone(tuple(MetricCone(int(a), table) for a in sorted(set(symbols))))


class CylinderSpace:
    """Index helpers for functions on admissible words of length ``depth``."""

    def __init__(self, sft: Sft, depth: int):
        self.sft = sft
        self.depth = depth
        self.words = words_array(sft, depth)
        self._agree: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def dim(self) -> int:
        return len(self.words)

    def mask(self, symbols: Sequence[int] | None) -> np.ndarray:
        if symbols is None:
            return np.ones(self.dim, dtype=bool)
        return np.isin(self.words[:, 0], list(symbols))

    def cylinder(self, a: int) -> tuple[np.ndarray, np.ndarray]:
        """Indices of words in [a] and their pairwise agreement lengths."""
        if a not in self._agree:
            idx = np.flatnonzero(self.words[:, 0] == a)
            w = self.words[idx]
            diff = w[:, None, :] != w[None, :, :]
            agree = np.where(diff.any(axis=2), diff.argmax(axis=2), self.depth)
            self._agree[a] = (idx, agree)
        return self._agree[a]


# ---------------------------------------------------------------- membership


@dataclass
class Membership:
    member: bool
    worst: tuple[int, int] | None
    excess: float


def _pair_excess(space: CylinderSpace, f: np.ndarray, a: int, dfun) -> tuple[float, tuple[int, int] | None]:
    idx, agree = space.cylinder(a)
    vals = f[idx]
    if len(idx) < 2:
        return -math.inf, None
    pair = agree < space.depth
    d = np.zeros_like(agree, dtype=float)
    d[pair] = dfun(agree[pair])
    with np.errstate(divide="ignore"):
        logv = np.log(vals)
    # log f(x) - log f(x') - d(x, x'); zero-vs-positive pairs count as infinite excess
    lx, ly = logv[:, None], logv[None, :]
    with np.errstate(invalid="ignore"):
        ex = np.where(pair, lx - ly - d, -np.inf)
    ex = np.where(np.isnan(ex), -np.inf, ex)
    i, j = np.unravel_index(int(np.argmax(ex)), ex.shape)
    return float(ex[i, j]), (int(idx[i]), int(idx[j]))


def cone_membership(space: CylinderSpace, f, cone: Cone, tol: float = 1e-12) -> Membership:
    """Decide f in cone; report the worst violating word pair (indices into ``space.words``)."""
    f = np.asarray(f, dtype=float)
    if f.shape != (space.dim,):
        raise InputError(f"expected a vector of length {space.dim}")
    syms = _symbols(cone, space.sft.size)
    support = space.mask(syms)
    scale = max(np.max(np.abs(f)), 1e-300)
    neg = np.flatnonzero(f < -tol * scale)
    if len(neg):
        return Membership(False, (int(neg[0]), int(neg[0])), float(-f[neg[0]]))
    off = np.flatnonzero(~support & (np.abs(f) > tol * scale))
    if len(off):
        return Membership(False, (int(off[0]), int(off[0])), float(abs(f[off[0]])))
    if not (f[support] > 0).any():
        return Membership(False, None, math.inf)
    worst, pair = -math.inf, None
    parts = cone.components if isinstance(cone, DirectSumCone) else (cone,)
    for c in parts:
        if isinstance(c, NonnegCone):
            continue
        if isinstance(c, MetricCone):
            dfun = c.table.lookup
        else:
            B = c.B
            dfun = lambda k, B=B: np.full(k.shape, B)
        ex, p = _pair_excess(space, np.maximum(f, 0.0), c.symbol, dfun)
        if ex > worst:
            worst, pair = ex, p
    return Membership(worst <= tol, pair, worst)


# ---------------------------------------------------------------- distances


def hilbert_nonneg(x, y, support=None) -> float:
    """Theta_+(x, y) = log(max x/y / min x/y); infinity when the supports differ."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if support is not None:
        x, y = x[support], y[support]
    if (x < 0).any() or (y < 0).any():
        raise InputError("hilbert_nonneg needs nonnegative vectors")
    px, py = x > 0, y > 0
    if not np.array_equal(px, py):
        return math.inf
    if not px.any():
        return 0.0
    r = x[px] / y[px]
    return float(math.log(r.max() / r.min()))


def hilbert_nonneg_rows(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row-wise Theta_+ for two stacks of nonnegative vectors."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    px, py = x > 0, y > 0
    same = (px == py).all(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(px, x / np.where(py, y, 1.0), np.nan)
    hi = np.nanmax(np.where(px, r, -np.inf), axis=1)
    lo = np.nanmin(np.where(px, r, np.inf), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(hi / lo)
    out = np.where(px.any(axis=1), out, 0.0)
    return np.where(same, out, np.inf)


def _pair_quotients(space: CylinderSpace, g: np.ndarray, f: np.ndarray, a: int, dfun) -> np.ndarray:
    idx, agree = space.cylinder(a)
    gv, fv = g[idx], f[idx]
    pair = agree < space.depth
    d = np.zeros(agree.shape)
    d[pair] = dfun(agree[pair])
    e = np.exp(d)
    c = e * fv[None, :] - fv[:, None]
    num = e * gv[None, :] - gv[:, None]
    scale = e * fv[None, :] + fv[:, None]
    use = pair & (d > 0) & (c > 1e-13 * scale)
    return num[use] / c[use]


def _metric_constraints(space: CylinderSpace, g: np.ndarray, f: np.ndarray, c: Cone) -> np.ndarray:
    """All quotients whose min is m(g/f) and max is M(g/f) for a single-cylinder cone."""
    idx, _ = space.cylinder(c.symbol)
    if (f[idx] <= 0).any() or (g[idx] <= 0).any():
        raise InputError("m_and_M needs f and g strictly positive on the cylinder")
    ratios = g[idx] / f[idx]
    if isinstance(c, MetricCone):
        dfun = c.table.lookup
    else:
        dfun = lambda k: np.full(k.shape, c.B)
    return np.concatenate([ratios, _pair_quotients(space, g, f, c.symbol, dfun)])


def m_and_M(space: CylinderSpace, g, f, cone: Union[MetricCone, BoundedRatioCone]) -> tuple[float, float]:
    """m(g/f) and M(g/f) for a metric (or bounded-ratio) cone on one cylinder.

    m is the min of g/f and of (e^d g(y) - g(x)) / (e^d f(y) - f(x)) over ordered pairs
    of distinct words with a positive denominator; M is the corresponding max.
    A cylinder holding a single word gives m = M = g/f there.
    """
    g = np.asarray(g, dtype=float)
    f = np.asarray(f, dtype=float)
    q = _metric_constraints(space, g, f, cone)
    return float(q.min()), float(q.max())


def _component_mM(space: CylinderSpace, g: np.ndarray, f: np.ndarray, c: Cone) -> tuple[float, float] | None:
    """(m, M) for one component; None when both vanish there, (0, inf) if only one does."""
    mask = space.mask(_symbols(c, space.sft.size))
    gz, fz = not (g[mask] > 0).any(), not (f[mask] > 0).any()
    if gz and fz:
        return None
    if gz or fz:
        return 0.0, math.inf
    if isinstance(c, NonnegCone):
        if not np.array_equal(g[mask] > 0, f[mask] > 0):
            return 0.0, math.inf
        pos = f[mask] > 0
        r = g[mask][pos] / f[mask][pos]
        return float(r.min()), float(r.max())
    if (g[mask] <= 0).any() or (f[mask] <= 0).any():
        return 0.0, math.inf
    return m_and_M(space, g, f, c)


def direct_sum_distance(space: CylinderSpace, components: Sequence[tuple]) -> float:
    """log(sup_i M_i / inf_j m_j) over components (g_i, f_i, cone_i).

    Components where both functions vanish are skipped; if only one vanishes the
    pair is incomparable and the distance is infinite.
    """
    ms, Ms = [], []
    for g, f, c in components:
        r = _component_mM(space, np.asarray(g, float), np.asarray(f, float), c)
        if r is None:
            continue
        ms.append(r[0])
        Ms.append(r[1])
    if not ms:
        return 0.0
    lo, hi = min(ms), max(Ms)
    if lo <= 0 or not math.isfinite(hi):
        return math.inf
    return float(math.log(hi / lo))


def _monolithic_distance(space: CylinderSpace, g: np.ndarray, f: np.ndarray, cone: DirectSumCone) -> float:
    """Same value as the per-component route, gathering every constraint into one pool."""
    q = space.sft.size
    support = space.mask(_symbols(cone, q))
    if not np.array_equal(g[support] > 0, f[support] > 0):
        return math.inf
    pools = []
    for c in cone.components:
        mask = space.mask(_symbols(c, q))
        if not (f[mask] > 0).any():
            continue
        if isinstance(c, NonnegCone):
            pos = mask & (f > 0)
            pools.append(g[pos] / f[pos])
        else:
            idx, _ = space.cylinder(c.symbol)
            if (f[idx] <= 0).any():
                return math.inf
            pools.append(_metric_constraints(space, g, f, c))
    if not pools:
        return 0.0
    allq = np.concatenate(pools)
    if allq.min() <= 0 or not np.isfinite(allq.max()):
        return math.inf
    return float(math.log(allq.max() / allq.min()))


def hilbert_distance(space: CylinderSpace, g, f, cone: Cone) -> float:
    """Theta_cone(g, f) = log(M/m); infinity for incomparable pairs."""
    g = np.asarray(g, dtype=float)
    f = np.asarray(f, dtype=float)
    if isinstance(cone, NonnegCone):
        return hilbert_nonneg(g, f, space.mask(cone.symbols))
    if isinstance(cone, DirectSumCone):
        return _monolithic_distance(space, g, f, cone)
    return direct_sum_distance(space, [(g, f, cone)])


def dual_pairing_distance(x, y, support=None) -> float:
    """Theta_+ from the dual-cone supremum over point evaluations, as a cross-check."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if support is not None:
        x, y = x[support], y[support]
    best = 1.0
    for i in range(len(x)):
        for j in range(len(x)):
            den = y[i] * x[j]
            if den > 0:
                best = max(best, x[i] * y[j] / den)
            elif x[i] * y[j] > 0:
                return math.inf
    return math.log(best)


# ---------------------------------------------------------------- sampling


EDGE = 0.999


def sample_cone(space: CylinderSpace, cone: Cone, rng: np.random.Generator, extreme: float = 0.5) -> np.ndarray:
    """Random strictly positive member of ``cone`` (positive on its whole support).

    Metric cones use f = exp(sum_l xi_l) where xi_l depends on the first l+1
    symbols and lies in [-delta_l/2, delta_l/2] with delta_l = d_l - d_{l+1}
    (delta_{m-1} = d_{m-1}).  With probability ``extreme`` the increments sit at
    the endpoints shrunk by ``EDGE``, which pushes samples close to the cone
    boundary while keeping them interior (boundary points are at infinite
    projective distance from everything else).
    """
    f = np.zeros(space.dim)
    parts = cone.components if isinstance(cone, DirectSumCone) else (cone,)
    m = space.depth
    for c in parts:
        if isinstance(c, NonnegCone):
            mask = space.mask(c.symbols if c.symbols is not None else None)
            f[mask] = rng.exponential(size=mask.sum()) + 1e-3
            continue
        idx, _ = space.cylinder(c.symbol)
        if isinstance(c, BoundedRatioCone):
            f[idx] = np.exp(rng.uniform(-c.B / 2, c.B / 2, size=len(idx)) * EDGE)
        else:
            d = c.table.lookup(np.arange(1, m)) if m > 1 else np.zeros(0)
            delta = np.append(d[:-1] - d[1:], d[-1:]) if m > 1 else d
            logf = np.zeros(len(idx))
            w = space.words[idx]
            edge = rng.random() < extreme
            for l in range(1, m):
                _, grp = np.unique(w[:, : l + 1], axis=0, return_inverse=True)
                grp = grp.reshape(-1)
                ngrp = grp.max() + 1
                if edge:
                    xi = rng.choice([-0.5, 0.5], size=ngrp) * delta[l - 1] * EDGE
                else:
                    xi = rng.uniform(-0.5, 0.5, size=ngrp) * delta[l - 1]
                logf += xi[grp]
            f[idx] = np.exp(logf)
        f[idx] *= np.exp(rng.normal())
    return f


def sample_members(space: CylinderSpace, cone: Cone, rng: np.random.Generator, n: int,
                   max_tries: int | None = None) -> list[np.ndarray]:
    """n samples that pass ``cone_membership`` (rejection step after sampling)."""
    out: list[np.ndarray] = []
    tries = 0
    cap = max_tries or 20 * n
    while len(out) < n:
        tries += 1
        if tries > cap:
            raise DomainError(f"cone sampler accepted only {len(out)} of {n} draws")
        f = sample_cone(space, cone, rng)
        if cone_membership(space, f, cone).member:
            out.append(f)
    return out


# ---------------------------------------------------------------- Birkhoff checks


def nonneg_image_diameter(mat: np.ndarray, in_support=None, out_support=None) -> float:
    """Exact diam of L(nonneg cone) in the nonneg cone: max Theta_+ over pairs of image columns."""
    mat = np.asarray(mat, dtype=float)
    cols = np.arange(mat.shape[1]) if in_support is None else np.flatnonzero(in_support)
    imgs = [mat[:, j] for j in cols if (mat[:, j] > 0).any()]
    best = 0.0
    for i in range(len(imgs)):
        for j in range(i + 1, len(imgs)):
            best = max(best, hilbert_nonneg(imgs[i], imgs[j], out_support))
    return best


@dataclass
class BirkhoffReport:
    delta: float
    delta_source: str
    bound: float
    pairs: int
    max_ratio: float
    violations: int
    worst_excess: float


def birkhoff_check(mat, space_in: CylinderSpace, c_in: Cone, space_out: CylinderSpace, c_out: Cone,
                   samples: int, rng: np.random.Generator, delta: float | None = None,
                   tol: float = 1e-10) -> BirkhoffReport:
    """Sample pairs in ``c_in`` and test Theta_out(Lf, Lg) <= tanh(delta/4) Theta_in(f, g) + tol.

    ``delta`` defaults to the exact image diameter for nonnegative cones and to
    the sampled maximum (a lower estimate, flagged in ``delta_source``) otherwise.
    """
    mat = np.asarray(mat, dtype=float)
    fs = sample_members(space_in, c_in, rng, 2 * samples)
    imgs = [mat @ f for f in fs]
    for i, v in enumerate(imgs):
        if not cone_membership(space_out, v, c_out).member:
            raise DomainError(f"sample {i} leaves the target cone under L")
    source = "given"
    if delta is None:
        if isinstance(c_in, NonnegCone) and isinstance(c_out, NonnegCone):
            delta = nonneg_image_diameter(mat, space_in.mask(c_in.symbols), space_out.mask(c_out.symbols))
            source = "exact"
        else:
            delta = max(hilbert_distance(space_out, imgs[i], imgs[j], c_out)
                        for i in range(len(imgs)) for j in range(i + 1, min(len(imgs), i + 8)))
            source = "sampled"
    bound = math.tanh(delta / 4) if math.isfinite(delta) else 1.0
    viol, worst, best_ratio = 0, -math.inf, 0.0
    for k in range(samples):
        f, g = fs[2 * k], fs[2 * k + 1]
        t_in = hilbert_distance(space_in, f, g, c_in)
        t_out = hilbert_distance(space_out, imgs[2 * k], imgs[2 * k + 1], c_out)
        ex = t_out - bound * t_in
        worst = max(worst, ex)
        if ex > tol:
            viol += 1
        if t_in > 0:
            best_ratio = max(best_ratio, t_out / t_in)
    return BirkhoffReport(float(delta), source, bound, samples, best_ratio, viol, worst)


@dataclass
class RegularityBound:
    lhs: float
    rhs: float
    slack: float
    holds: bool


def regularity_cone_bound(space: CylinderSpace, g, f, sigma: float, cone: Cone) -> RegularityBound:
    """Check Theta_{C(d)}(f, g) <= 2 log((1+s)/(1-s)) + Theta_+(f, g) for f, g in C(s d).

    ``cone`` is a metric cone or a direct sum of metric cones built from d.
    """
    if not 0 < sigma < 1:
        raise InputError("sigma must lie in (0, 1)")
    small = _scale_cone(cone, sigma)
    for name, v in (("f", f), ("g", g)):
        if not cone_membership(space, v, small).member:
            raise InputError(f"{name} is not in the sigma-scaled cone")
    lhs = hilbert_distance(space, g, f, cone)
    support = space.mask(_symbols(cone, space.sft.size))
    rhs = 2 * math.log((1 + sigma) / (1 - sigma)) + hilbert_nonneg(g, f, support)
    return RegularityBound(lhs, rhs, rhs - lhs, lhs <= rhs + 1e-10)


def _scale_cone(cone: Cone, s: float) -> Cone:
    if isinstance(cone, MetricCone):
        return MetricCone(cone.symbol, cone.table.scaled(s))
    if isinstance(cone, BoundedRatioCone):
        return BoundedRatioCone(cone.symbol, s * cone.B)
    if isinstance(cone, DirectSumCone):
        return DirectSumCone(tuple(_scale_cone(c, s) for c in cone.components))
    return cone
