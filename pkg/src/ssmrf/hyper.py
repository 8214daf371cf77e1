"""Conjugate updates for the edge-inclusion rate p0 and the slab variance.

p0 gets a Beta posterior from the indicator counts; the slab precision
1/sigma0^2 gets a Gamma posterior (shape/rate) from the active edge
values.  Bias parameters have their own fixed prior std and never enter
these updates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HyperPriors:
    a: float = 5.0
    b: float = 5.0
    c: float = 5.0
    d: float = 5.0
    sigma_b: float = 10.0

    def __post_init__(self):
        for name in ("a", "b", "c", "d", "sigma_b"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class HyperState:
    p0: float
    sigma0_sq: float
    fixed_p0: float | None = None

    def __post_init__(self):
        if not 0.0 < self.p0 < 1.0:
            raise ValueError("p0 must lie in (0, 1)")
        if self.sigma0_sq <= 0.0:
            raise ValueError("sigma0_sq must be positive")


def sample_p0(Y, priors: HyperPriors, rng: np.random.Generator, size=None):
    """Beta draw with counts over candidate edges; depends on Y via popcount."""
    Y = np.asarray(Y)
    k1 = int(Y.sum())
    k0 = int(Y.size - k1)
    return rng.beta(priors.a + k1, priors.b + k0, size=size)


def sample_sigma0(Y, A, priors: HyperPriors, rng: np.random.Generator, size=None):
    """Draw the slab precision from its Gamma(shape, rate) posterior and
    return its reciprocal, the slab variance."""
    Y = np.asarray(Y)
    A = np.asarray(A, dtype=np.float64)
    k1 = int(Y.sum())
    ssq = float((A * A * Y).sum())
    shape = priors.c + 0.5 * k1
    rate = priors.d + 0.5 * ssq
    precision = rng.gamma(shape, 1.0 / rate, size=size)
    return 1.0 / precision
