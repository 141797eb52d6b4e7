"""Named example families and random monotone families for test suites."""
from __future__ import annotations

import math

import numpy as np

from . import family as fm

# Hermitian encoding of the real rotation generator [[0, -pi], [pi, 0]]:
# exp(i t H0) is rotation by pi*t.
ROTATION_GENERATOR = np.array([[0, 1j * math.pi], [-1j * math.pi, 0]])


def sec4_counterexample(b: float = 0.5) -> fm.GeneratorPath:
    """``A(x) = H0 + x diag(-b, 1)``: monotone near 0 although ``A'(0)`` is indefinite."""
    if not 0 <= b < 1:
        raise ValueError("b must lie in [0, 1)")
    return fm.generator_path([ROTATION_GENERATOR, np.diag([-b, 1.0])])


def sec5_example() -> fm.TwoParamFamily:
    """``A(x, y) = [[3x, y], [y, x]]``; eigenprojections are not jointly analytic at the origin."""
    return fm.two_param({(1, 0): np.diag([3.0, 1.0]), (0, 1): np.array([[0.0, 1.0], [1.0, 0.0]])})


def kato_negative() -> fm.TwoParamFamily:
    """``A(x, y) = [[x, y], [y, -x]]``; fails the x-positivity hypothesis."""
    return fm.two_param({(1, 0): np.diag([1.0, -1.0]), (0, 1): np.array([[0.0, 1.0], [1.0, 0.0]])},
                        require_positive=False)


BUILTINS = {
    "sec4_counterexample": sec4_counterexample,
    "sec5_example": sec5_example,
    "kato_negative": kato_negative,
}


def random_hermitian(rng: np.random.Generator, dim: int, scale: float = 1.0) -> np.ndarray:
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return scale * (z + z.conj().T) / (2 * math.sqrt(2 * dim))


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_positive(rng: np.random.Generator, dim: int, lo: float = 0.5, hi: float = 2.0) -> np.ndarray:
    q = random_unitary(rng, dim)
    w = rng.uniform(lo, hi, dim)
    return fm.hermitize((q * w) @ q.conj().T)


def random_monotone_path(rng: np.random.Generator, dim: int, degree: int = 1,
                         radius: float = 4.0, lo: float = 0.5, hi: float = 2.0) -> fm.GeneratorPath:
    """Polynomial generator with ``A'(x) > 0`` on ``[-radius, radius]`` (monotone by averaging).

    Higher-order terms are scaled so that ``sum_k k |x|^{k-1} ||H_k||`` stays below
    a third of ``lambda_min(H_1)`` on the domain.
    """
    h1 = random_positive(rng, dim, lo, hi)
    budget = np.linalg.eigvalsh(h1)[0] / 3.0
    terms = [random_hermitian(rng, dim, 3.0), h1]
    for k in range(2, degree + 1):
        h = random_hermitian(rng, dim)
        h = h / np.linalg.norm(h, 2) * budget / ((degree - 1) * k * radius ** (k - 1))
        terms.append(h)
    return fm.generator_path(terms, domain=(-radius, radius))
