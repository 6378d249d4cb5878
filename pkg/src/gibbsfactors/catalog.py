"""Small reference systems used by tests, the CLI and the sample data files."""
from __future__ import annotations

import numpy as np

from .potentials import Potential, constant, markov, saturating_tower
from .sft import FactorMap, Sft

EXAMPLE_S = np.array([[1 / 3, 1 / 3, 1 / 3],
                      [1 / 3, 0.0, 2 / 3],
                      [1 / 6, 1 / 6, 2 / 3]])

RED_BLUE = ("r", "r", "b")


def support_sft(s, names=None) -> Sft:
    s = np.asarray(s)
    return Sft(tuple(tuple(int(x > 0) for x in row) for row in s),
               tuple(names) if names else tuple(str(i) for i in range(len(s))))


def example_system() -> tuple[Sft, FactorMap, Potential]:
    """Markov measure of EXAMPLE_S on its support, with 0,1 -> r and 2 -> b."""
    sft = support_sft(EXAMPLE_S)
    return sft, FactorMap.from_labels(RED_BLUE), markov(sft, EXAMPLE_S)


def example_full_shift() -> tuple[Sft, FactorMap]:
    """Full 3-shift with the same red/blue labelling."""
    return Sft.full(3), FactorMap.from_labels(RED_BLUE)


def bernoulli_system() -> tuple[Sft, FactorMap, Potential]:
    """Uniform Bernoulli(1/3) on the full 3-shift, 0,1 -> r and 2 -> b."""
    sft, f = example_full_shift()
    return sft, f, constant(sft, float(np.log(1 / 3)))


def golden_mean_collapse() -> tuple[Sft, FactorMap]:
    """Golden mean shift (11 forbidden) with both symbols sent to one image symbol."""
    return Sft(((1, 1), (1, 0))), FactorMap.from_labels(("a", "a"))


def geometric_tower(sft: Sft, theta: float, coeff: float = 1.0, depth: int = 6) -> Potential:
    """Tower with var_n = coeff theta^n for n < depth on a full shift."""
    return saturating_tower(sft, [coeff * theta**k for k in range(depth)])


def inverse_square_tower(sft: Sft, depth: int = 6) -> Potential:
    """Tower with var_n = 1 / max(n, 1)^2 for n < depth on a full shift."""
    return saturating_tower(sft, [1.0 / max(k, 1) ** 2 for k in range(depth)])
