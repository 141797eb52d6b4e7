"""Seeded random family suites shared by the property and acceptance tests."""
from __future__ import annotations

import numpy as np

from monoflow.builtins import random_hermitian, random_monotone_path
from monoflow.family import generator_path

SUITE_SEED = 20240611


def random_suite(n: int = 100, seed: int = SUITE_SEED, max_dim: int = 6, max_degree: int = 3):
    """``(family, interval)`` pairs: polynomial generator paths with random sub-intervals of the domain."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        m = int(rng.integers(1, max_dim + 1))
        deg = int(rng.integers(1, max_degree + 1))
        fam = random_monotone_path(rng, m, deg)
        a = float(rng.uniform(-3.5, 1.0))
        b = float(rng.uniform(a + 0.5, 3.5))
        out.append((fam, (a, b)))
    return out


def clustered_suite(n: int = 20, seed: int = SUITE_SEED + 1, max_dim: int = 5):
    """Families whose branches cross ``2 pi`` close together: ``A(x) = c I + x I + small``."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        m = int(rng.integers(2, max_dim + 1))
        eye = np.eye(m)
        h0 = 5.5 * eye + 0.15 * random_hermitian(rng, m)
        h1 = eye + 0.05 * random_hermitian(rng, m)
        out.append((generator_path([h0, h1], domain=(-2.0, 4.0)), (0.0, 1.6)))
    return out
