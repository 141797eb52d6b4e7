"""Analytic unitary families ``x -> U(x)`` and their derivative data.

A family is monotone when ``D(x) = (1/i) U'(x) U(x)^{-1}`` is positive
definite.  Everything downstream (eigenphase tracking, crossing location,
stability certificates) consumes a family through :meth:`UnitaryFamily.derivatives`
and the helpers in this module.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import DomainError, NotMonotone, SpecError, UnitarityError

TOL_UNIT = 1e-10
TOL_HERM = 1e-12


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def hermitize(z: np.ndarray) -> np.ndarray:
    return 0.5 * (z + dagger(z))


def is_hermitian(a: np.ndarray, tol: float = TOL_HERM) -> bool:
    a = np.asarray(a)
    scale = max(1.0, float(np.linalg.norm(a, 2)))
    return float(np.linalg.norm(a - dagger(a), 2)) <= tol * scale


def check_unitarity(matrix, tol: float = TOL_UNIT) -> tuple[bool, float]:
    """Return ``(passes, ||M^H M - I||_2)``."""
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    defect = float(np.linalg.norm(dagger(m) @ m - np.eye(m.shape[0]), 2))
    return defect <= tol, defect


def _reproject(u: np.ndarray, tol: float) -> np.ndarray:
    # polar factor is the nearest unitary
    ok, defect = check_unitarity(u, tol / 10)
    if ok:
        return u
    w, _ = sla.polar(u)
    return w


def expi(h: np.ndarray, t: float = 1.0, tol: float = TOL_UNIT) -> np.ndarray:
    """``exp(i t H)`` for Hermitian ``H`` by scaling and squaring, kept on the unitary group."""
    u = sla.expm(1j * t * np.asarray(h, dtype=complex))
    return _reproject(u, tol)


class UnitaryFamily:
    """Base class.  Subclasses implement :meth:`derivatives`.

    Evaluators are immutable after construction; all methods are pure
    functions of ``x``.
    """

    kind: str = "abstract"
    dim: int
    domain: tuple[float, float]

    def derivatives(self, x: float, order: int = 1) -> tuple[np.ndarray, ...]:
        """Return ``(U, U', ...)`` up to ``order`` (0, 1 or 2)."""
        raise NotImplementedError

    def U(self, x: float) -> np.ndarray:
        return self.derivatives(x, 0)[0]

    def U_batch(self, xs: Sequence[float]) -> np.ndarray:
        return np.stack([self.U(float(x)) for x in xs])

    def _check_domain(self, x: float) -> None:
        a, b = self.domain
        if not (a <= x <= b) or not math.isfinite(x):
            raise DomainError(f"x={x!r} outside the family domain [{a}, {b}]", x=x, domain=[a, b])


@dataclass(frozen=True, eq=False)
class PhaseModel(UnitaryFamily):
    """``U(x) = e^{ix} U0``."""

    U0: np.ndarray
    domain: tuple[float, float] = (-math.inf, math.inf)
    kind = "model_phase"

    @property
    def dim(self) -> int:
        return self.U0.shape[0]

    def derivatives(self, x, order=1):
        self._check_domain(x)
        u = np.exp(1j * x) * self.U0
        return (u, 1j * u, -u)[: order + 1]

    def U_batch(self, xs):
        xs = np.asarray(xs, dtype=float)
        return np.exp(1j * xs)[:, None, None] * self.U0


@dataclass(frozen=True, eq=False)
class LinearModel(UnitaryFamily):
    """``U(x) = e^{ixL} U0`` with ``L`` positive definite."""

    L: np.ndarray
    U0: np.ndarray
    domain: tuple[float, float] = (-math.inf, math.inf)
    kind = "model_linear"

    def __post_init__(self):
        w, v = np.linalg.eigh(self.L)
        object.__setattr__(self, "_eig", (w, v))

    @property
    def dim(self) -> int:
        return self.L.shape[0]

    def derivatives(self, x, order=1):
        self._check_domain(x)
        w, v = self._eig
        u = (v * np.exp(1j * x * w)) @ dagger(v) @ self.U0
        out = [u, 1j * self.L @ u, -self.L @ self.L @ u]
        return tuple(out[: order + 1])

    def U_batch(self, xs):
        w, v = self._eig
        xs = np.asarray(xs, dtype=float)
        ph = np.exp(1j * xs[:, None] * w[None, :])
        return np.einsum("ij,nj,kj->nik", v, ph, v.conj()) @ self.U0


@dataclass(frozen=True, eq=False)
class GeneratorPath(UnitaryFamily):
    """``U(x) = exp(i A(x))`` with ``A(x) = sum_k x^k H_k``.

    Derivatives are exact: ``U'`` and ``U''`` are read off the exponential
    of a block upper-triangular Toeplitz matrix (truncated power series in
    the step), so no finite differences enter.
    """

    terms: tuple[np.ndarray, ...]
    domain: tuple[float, float] = (-math.inf, math.inf)
    kind = "generator_path"

    @property
    def dim(self) -> int:
        return self.terms[0].shape[0]

    def generator(self, x: float, n: int = 0) -> np.ndarray:
        """n-th x-derivative of ``A(x)``."""
        out = np.zeros_like(self.terms[0])
        for k, h in enumerate(self.terms):
            if k < n:
                continue
            out = out + (math.factorial(k) // math.factorial(k - n)) * x ** (k - n) * h
        return out

    def derivatives(self, x, order=1):
        self._check_domain(x)
        m = self.dim
        if order == 0:
            return (expi(self.generator(x)),)
        # Taylor coefficients of iA(x + t): X0 + t X1 + t^2 X2
        coeffs = [1j * self.generator(x), 1j * self.generator(x, 1), 0.5j * self.generator(x, 2)]
        n = order + 1
        big = np.zeros((n * m, n * m), dtype=complex)
        for r in range(n):
            for c in range(r, n):
                big[r * m:(r + 1) * m, c * m:(c + 1) * m] = coeffs[c - r]
        e = sla.expm(big)
        u = _reproject(e[:m, :m], TOL_UNIT)
        out = [u, e[:m, m:2 * m]]
        if order >= 2:
            out.append(2.0 * e[:m, 2 * m:3 * m])
        return tuple(out)

    def U_batch(self, xs):
        xs = np.asarray(xs, dtype=float)
        a = sum(xs[:, None, None] ** k * h for k, h in enumerate(self.terms))
        return sla.expm(1j * a)


@dataclass(frozen=True, eq=False)
class SampledFamily(UnitaryFamily):
    """Family given by an external evaluator; derivatives by 4th-order central differences."""

    func: Callable[[float], np.ndarray]
    dim: int
    domain: tuple[float, float] = (-math.inf, math.inf)
    h: float = 1e-3
    kind = "sampled"

    def derivatives(self, x, order=1):
        self._check_domain(x)
        u = np.asarray(self.func(x), dtype=complex)
        if order == 0:
            return (u,)
        h = self.h
        up1, um1 = self.func(x + h), self.func(x - h)
        up2, um2 = self.func(x + 2 * h), self.func(x - 2 * h)
        d1 = (-up2 + 8 * up1 - 8 * um1 + um2) / (12 * h)
        out = [u, d1]
        if order >= 2:
            out.append((-up2 + 16 * up1 - 30 * u + 16 * um1 - um2) / (12 * h * h))
        return tuple(out)


@dataclass(frozen=True, eq=False)
class TwoParamFamily:
    """``U(x, y) = exp(i A(x, y))`` with ``A(x, y) = sum_{p,q} x^p y^q H_{pq}``."""

    terms: Mapping[tuple[int, int], np.ndarray]
    base: tuple[float, float] = (0.0, 0.0)
    domain: tuple[tuple[float, float], tuple[float, float]] = ((-math.inf, math.inf), (-math.inf, math.inf))
    kind = "generator_two_param"

    @property
    def dim(self) -> int:
        return next(iter(self.terms.values())).shape[0]

    def generator(self, x: float, y: float) -> np.ndarray:
        return sum(x ** p * y ** q * h for (p, q), h in self.terms.items())

    def U(self, x: float, y: float) -> np.ndarray:
        return expi(self.generator(x, y))

    def slice_y(self, y: float) -> GeneratorPath:
        """One-parameter family ``x -> U(x, y)``."""
        deg = max(p for p, _ in self.terms)
        coeffs = [np.zeros((self.dim, self.dim), dtype=complex) for _ in range(deg + 1)]
        for (p, q), h in self.terms.items():
            coeffs[p] = coeffs[p] + y ** q * h
        return GeneratorPath(tuple(coeffs), domain=self.domain[0])

    def slice_x(self, x: float) -> GeneratorPath:
        """One-parameter family ``y -> U(x, y)``."""
        deg = max(q for _, q in self.terms)
        coeffs = [np.zeros((self.dim, self.dim), dtype=complex) for _ in range(deg + 1)]
        for (p, q), h in self.terms.items():
            coeffs[q] = coeffs[q] + x ** p * h
        return GeneratorPath(tuple(coeffs), domain=self.domain[1])


# --------------------------------------------------------------------------- constructors

def _as_matrix(a, name="matrix") -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise SpecError(f"{name} must be a non-empty square matrix", shape=list(m.shape))
    if not np.all(np.isfinite(m)):
        raise SpecError(f"{name} has non-finite entries")
    return m


def _require_hermitian(m, name):
    if not is_hermitian(m):
        raise SpecError(f"{name} is not Hermitian", name=name)
    return hermitize(m)


def _require_unitary(m, name):
    ok, defect = check_unitarity(m)
    if not ok:
        raise SpecError(f"{name} is not unitary (defect {defect:.3e})", name=name, defect=defect)
    return m


def model_phase(U0, domain=(-math.inf, math.inf)) -> PhaseModel:
    return PhaseModel(_require_unitary(_as_matrix(U0, "U0"), "U0"), tuple(domain))


def model_linear(L, U0=None, domain=(-math.inf, math.inf)) -> LinearModel:
    L = _require_hermitian(_as_matrix(L, "L"), "L")
    if np.linalg.eigvalsh(L)[0] <= 0:
        raise SpecError("L must be positive definite for model_linear")
    U0 = np.eye(L.shape[0], dtype=complex) if U0 is None else _require_unitary(_as_matrix(U0, "U0"), "U0")
    return LinearModel(L, U0, tuple(domain))


def generator_path(terms: Sequence, domain=(-math.inf, math.inf)) -> GeneratorPath:
    if len(terms) == 0:
        raise SpecError("generator_path needs at least one term")
    hs = tuple(_require_hermitian(_as_matrix(h, f"H{k}"), f"H{k}") for k, h in enumerate(terms))
    if len({h.shape for h in hs}) != 1:
        raise SpecError("generator terms have inconsistent shapes")
    return GeneratorPath(hs, tuple(domain))


def sampled(func, dim: int, domain=(-math.inf, math.inf), h: float = 1e-3) -> SampledFamily:
    return SampledFamily(func, int(dim), tuple(domain), h)


def two_param(terms: Mapping, base=(0.0, 0.0), domain=None, require_positive: bool = True) -> TwoParamFamily:
    hs = {}
    for key, h in terms.items():
        p, q = (int(k) for k in key)
        hs[(p, q)] = _require_hermitian(_as_matrix(h, f"H_{p}_{q}"), f"H_{p}_{q}")
    if not any(p >= 1 for p, _ in hs):
        raise SpecError("two-parameter generator has no x-dependence")
    if domain is None:
        domain = ((-math.inf, math.inf), (-math.inf, math.inf))
    fam = TwoParamFamily(hs, (float(base[0]), float(base[1])), (tuple(domain[0]), tuple(domain[1])))
    if require_positive:
        lam = float(np.linalg.eigvalsh(compute_D(fam.slice_y(fam.base[1]), fam.base[0]))[0])
        if lam <= 0:
            raise NotMonotone("(1/i) dU/dx U^-1 is not positive definite at the base point",
                              x=fam.base[0], y=fam.base[1], lambda_min=lam)
    return fam


# --------------------------------------------------------------------------- D and bounds

def evaluate_U(family: UnitaryFamily, x: float, tol: float = TOL_UNIT) -> np.ndarray:
    u = family.U(x)
    ok, defect = check_unitarity(u, tol)
    if not ok:
        raise UnitarityError(f"U({x}) is not unitary (defect {defect:.3e})", x=x, defect=defect)
    return u


def compute_D(family: UnitaryFamily, x: float, with_defect: bool = False):
    """Hermitized ``(1/i) U' U^{-1}``; optionally also the anti-Hermitian residue."""
    u, du = family.derivatives(x, 1)
    ok, defect = check_unitarity(u, 1e-6)
    if not ok:
        raise UnitarityError(f"U({x}) is numerically non-unitary", x=x, defect=defect)
    z = -1j * du @ dagger(u)
    d = hermitize(z)
    if with_defect:
        return d, float(np.linalg.norm(z - dagger(z), 2) / 2)
    return d


def compute_D_prime(family: UnitaryFamily, x: float) -> np.ndarray:
    """``D' = (1/i) U'' U^{-1} - i D^2``."""
    u, du, d2u = family.derivatives(x, 2)
    d = hermitize(-1j * du @ dagger(u))
    return hermitize(-1j * d2u @ dagger(u) - 1j * d @ d)


@dataclass(frozen=True)
class BoundEstimates:
    d_min: float
    d_max: float
    d_2: float
    interval: tuple[float, float]
    grid_points: int
    safety_factor: float


def estimate_bounds(family: UnitaryFamily, interval, grid_points: int = 101,
                    safety_factor: float = 1.05) -> BoundEstimates:
    """Grid estimate of ``d_min I <= D <= d_max I`` and ``||U''|| <= d_2``."""
    a, b = map(float, interval)
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    if safety_factor < 1:
        raise ValueError("safety_factor must be >= 1")
    lo, hi, d2 = math.inf, -math.inf, 0.0
    for x in np.linspace(a, b, grid_points):
        u, du, d2u = family.derivatives(float(x), 2)
        w = np.linalg.eigvalsh(hermitize(-1j * du @ dagger(u)))
        if w[0] <= 0:
            raise NotMonotone(f"D(x) is not positive definite at x={x}", x=float(x), lambda_min=float(w[0]))
        lo, hi = min(lo, w[0]), max(hi, w[-1])
        d2 = max(d2, float(np.linalg.norm(d2u, 2)))
    return BoundEstimates(float(lo / safety_factor), float(hi * safety_factor), d2 * safety_factor,
                          (a, b), int(grid_points), float(safety_factor))


# --------------------------------------------------------------------------- JSON specs

def parse_matrix(rows, name="matrix") -> np.ndarray:
    """Rows of entries; each entry is ``[re, im]`` or a real number."""
    try:
        out = [[complex(e[0], e[1]) if isinstance(e, (list, tuple)) else complex(e) for e in row]
               for row in rows]
    except (TypeError, IndexError, ValueError) as exc:
        raise SpecError(f"cannot parse matrix {name}: {exc}", name=name) from None
    return _as_matrix(out, name)


def build_family(spec: Mapping):
    """Build a family from a family-spec document (already decoded JSON)."""
    if not isinstance(spec, Mapping):
        raise SpecError("family spec must be a JSON object")
    kind = spec.get("kind")
    mats = spec.get("matrices", {})
    if not isinstance(mats, Mapping):
        raise SpecError("'matrices' must be an object")
    mats = {k: parse_matrix(v, k) for k, v in mats.items()}
    dim = spec.get("dim")
    if not isinstance(dim, int) or dim < 1:
        raise SpecError("'dim' must be a positive integer")
    for k, m in mats.items():
        if m.shape != (dim, dim):
            raise SpecError(f"matrix {k} has shape {m.shape}, expected ({dim}, {dim})")
    domain = spec.get("domain")

    if kind == "model_phase":
        if "U0" not in mats:
            raise SpecError("model_phase requires matrix 'U0'")
        return model_phase(mats["U0"], domain or (-math.inf, math.inf))
    if kind == "model_linear":
        if "L" not in mats:
            raise SpecError("model_linear requires matrix 'L'")
        return model_linear(mats["L"], mats.get("U0"), domain or (-math.inf, math.inf))
    if kind == "generator_path":
        keys = sorted((k for k in mats if k.startswith("H") and k[1:].isdigit()), key=lambda k: int(k[1:]))
        if not keys:
            raise SpecError("generator_path requires matrices H0, H1, ...")
        deg = int(keys[-1][1:])
        terms = [mats.get(f"H{k}", np.zeros((dim, dim), dtype=complex)) for k in range(deg + 1)]
        return generator_path(terms, domain or (-math.inf, math.inf))
    if kind == "generator_two_param":
        terms = {}
        for k, m in mats.items():
            if k == "A":
                terms[(1, 0)] = m
            elif k == "B":
                terms[(0, 1)] = m
            elif k.startswith("H_"):
                try:
                    p, q = (int(s) for s in k[2:].split("_"))
                except ValueError:
                    raise SpecError(f"bad two-parameter term name {k!r}") from None
                terms[(p, q)] = m
            else:
                raise SpecError(f"unknown two-parameter term {k!r}")
        return two_param(terms, spec.get("base", (0.0, 0.0)), domain)
    raise SpecError(f"unknown family kind {kind!r}")


def load_family(path) -> UnitaryFamily | TwoParamFamily:
    try:
        spec = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpecError(f"invalid JSON in {path}: {exc}") from None
    return build_family(spec)


def matrix_to_json(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m, dtype=complex)]
