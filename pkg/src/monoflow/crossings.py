"""The crossing set ``Z = {x : ker(I - U(x)) != 0}``, the counting bound, and independence checks."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import BracketMissed, QuadratureError, WindowTooLong
from .family import BoundEstimates, UnitaryFamily, compute_D, dagger, estimate_bounds, model_linear
from .flow import TWO_PI, EigenphaseCurve, eigensystem, fix_gauge, step_cap, track

TOL_KERNEL = 1e-9
TOL_X = 1e-11


@dataclass
class Crossing:
    x: float
    multiplicity: int
    kernel_basis: np.ndarray  # (M, multiplicity), orthonormal
    residual: float
    svd_rank: int = 0
    boundary: str | None = None  # "left" / "right" when within tol_x of an endpoint

    def to_dict(self, with_basis: bool = False) -> dict:
        out = {"x": float(self.x), "multiplicity": int(self.multiplicity), "residual": float(self.residual)}
        if self.boundary:
            out["boundary"] = self.boundary
        if with_basis:
            out["kernel_basis"] = [[[float(z.real), float(z.imag)] for z in row] for row in self.kernel_basis]
        return out


@dataclass
class CountingReport:
    interval: tuple[float, float]
    crossing_count: int
    integral: float
    discrepancy: float
    M: int
    closed: str = "right"
    quadrature_error: float = 0.0
    violated: bool = False
    warning: bool = False

    def to_dict(self) -> dict:
        return {"interval": [float(v) for v in self.interval], "crossing_count": int(self.crossing_count),
                "integral": float(self.integral), "discrepancy": float(self.discrepancy), "M": int(self.M),
                "closed": self.closed, "quadrature_error": float(self.quadrature_error),
                "violated": bool(self.violated), "warning": bool(self.warning)}


def kernel(u: np.ndarray, m: int) -> tuple[np.ndarray, float, np.ndarray]:
    """Right singular vectors of ``I - U`` for the ``m`` smallest singular values."""
    b = np.eye(u.shape[0]) - u
    _, s, vh = np.linalg.svd(b)
    basis = fix_gauge(dagger(vh[u.shape[0] - m:])) if m else np.zeros((u.shape[0], 0), complex)
    resid = float(s[-m:].max()) if m else 0.0
    return basis, resid, s


# --------------------------------------------------------------------------- root refinement

def _order_stat(family, x, cut, k):
    """k-th smallest eigenphase measured in [cut, cut + 2pi) and its velocity."""
    u, du = family.derivatives(x, 1)
    phases, z = eigensystem(u)
    psi = cut + np.mod(phases - cut, TWO_PI)
    order = np.argsort(psi)
    i = order[k]
    d = -1j * du @ dagger(u)
    v = z[:, i]
    return psi[i], float(np.real(v.conj() @ d @ v))


def _refine(family, lo, hi, cut, k, target, d_min, tol_x, max_iter=200):
    f_lo = _order_stat(family, lo, cut, k)[0] - target
    f_hi = _order_stat(family, hi, cut, k)[0] - target
    if not (f_lo < 0 <= f_hi):
        raise BracketMissed("sign change lost during refinement", lo=lo, hi=hi, f_lo=f_lo, f_hi=f_hi)
    if f_hi == 0:
        return hi
    x = lo + (hi - lo) * (-f_lo) / (f_hi - f_lo)
    for _ in range(max_iter):
        fx, dfx = _order_stat(family, x, cut, k)
        fx -= target
        if abs(fx) <= d_min * tol_x:
            return x
        if fx < 0:
            lo = x
        else:
            hi = x
        if hi - lo <= tol_x:
            return x
        xn = x - fx / dfx if dfx > 0 else math.nan
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi)
        x = xn
    return x


def _bracket_roots(family, xl, xr, mu_l, mu_r, d_min, tol_x):
    theta = np.sort(np.mod(mu_l, TWO_PI))
    gaps = np.diff(np.concatenate([theta, [theta[0] + TWO_PI]]))
    i = int(np.argmax(gaps))
    cut = theta[i] + gaps[i] / 2
    if gaps[i] / 2 <= np.max(mu_r - mu_l):
        raise BracketMissed("no phase-free cut for bracket", lo=xl, hi=xr)
    target = cut + math.fmod(math.fmod(-cut, TWO_PI) + TWO_PI, TWO_PI)
    s_l = np.sort(cut + np.mod(mu_l - cut, TWO_PI))
    s_r = np.sort(cut + np.mod(mu_r - cut, TWO_PI))
    ks = [k for k in range(len(s_l)) if s_l[k] < target <= s_r[k]]
    return [_refine(family, xl, xr, cut, k, target, d_min, tol_x) for k in ks], len(ks)


def locate_crossings(family: UnitaryFamily, interval, bounds: BoundEstimates, tol_x: float = TOL_X,
                     tol_kernel: float = TOL_KERNEL, cluster_merge_tol: float | None = None,
                     curves: list[EigenphaseCurve] | None = None, pad: float | None = None,
                     ) -> list[Crossing]:
    """All x with ``mu_j(x) in 2 pi Z`` for some branch, merged with multiplicities.

    Brackets come from the tracked branches; each bracket is refined on the
    ordered eigenphases measured from a phase-free cut, which are continuous
    and strictly increasing inside the bracket.  Crossings within ``tol_x``
    of an endpoint carry a ``boundary`` flag.
    """
    a, b = map(float, interval)
    merge = tol_x if cluster_merge_tol is None else cluster_merge_tol
    lo_dom, hi_dom = family.domain
    if pad is None:
        pad = 0.25 * step_cap(bounds, family.dim)
    ta, tb = max(a - pad, lo_dom), min(b + pad, hi_dom)
    if curves is None:
        curves = track(family, (ta, tb), bounds)
    xs = curves[0].x
    mu = np.stack([c.mu for c in curves], axis=1)
    roots = []
    for i in range(len(xs) - 1):
        kl = np.floor(mu[i] / TWO_PI)
        kr = np.floor(mu[i + 1] / TWO_PI)
        n = int(np.sum(kr - kl))
        if n == 0:
            continue
        found, count = _bracket_roots(family, xs[i], xs[i + 1], mu[i], mu[i + 1], bounds.d_min, tol_x)
        if count != n:
            raise BracketMissed(f"bracket [{xs[i]}, {xs[i + 1]}] expected {n} crossings, ordered phases show {count}",
                                lo=float(xs[i]), hi=float(xs[i + 1]))
        roots.extend(found)
    roots.sort()
    clusters: list[list[float]] = []
    for r in roots:
        if clusters and r - clusters[-1][-1] <= merge:
            clusters[-1].append(r)
        else:
            clusters.append([r])
    out = []
    for cl in clusters:
        x = float(np.mean(cl))
        if x < a - tol_x or x > b + tol_x:
            continue
        m = len(cl)
        basis, resid, s = kernel(family.U(x), m)
        flag = "left" if abs(x - a) <= tol_x else "right" if abs(x - b) <= tol_x else None
        out.append(Crossing(x, m, basis, resid, int(np.sum(s < tol_kernel)), flag))
    return out


def count_crossings(crossings: list[Crossing], interval, closed: str = "right", tol_x: float = TOL_X) -> int:
    """Sum of multiplicities over ``(A, B]`` (``closed='right'``) or ``(A, B)`` (``closed='open'``)."""
    a, b = interval
    total = 0
    for c in crossings:
        if c.x <= a + tol_x:
            continue
        if c.x > b + tol_x or (closed == "open" and c.x >= b - tol_x):
            continue
        total += c.multiplicity
    return total


def trace_integral(family: UnitaryFamily, interval, order: int = 8, tol: float = 1e-10,
                   max_panels: int = 4096) -> tuple[float, float]:
    """``(1/2pi) int tr D dx`` by composite Gauss-Legendre with panel doubling."""
    a, b = map(float, interval)
    t, w = leggauss(order)

    def composite(n):
        edges = np.linspace(a, b, n + 1)
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            xm, hw = 0.5 * (lo + hi), 0.5 * (hi - lo)
            total += hw * sum(wi * np.real(np.trace(compute_D(family, xm + hw * ti))) for ti, wi in zip(t, w))
        return total / TWO_PI

    n = max(1, math.ceil(b - a))
    prev = composite(n)
    while True:
        n *= 2
        cur = composite(n)
        err = abs(cur - prev)
        if err < tol:
            return cur, err
        if n >= max_panels:
            if err < 0.01:
                return cur, err
            raise QuadratureError("trace integral did not converge", error=err)
        prev = cur


def count_vs_integral(family: UnitaryFamily, interval, bounds: BoundEstimates, quad_order: int = 8,
                      closed: str = "right", crossings: list[Crossing] | None = None,
                      tol_x: float = TOL_X) -> CountingReport:
    """Compare the crossing count with ``(1/2pi) int_A^B tr D``; the bound is ``< M``.

    The default half-open interval ``(A, B]`` keeps the inequality strict even
    when crossings sit on both endpoints; ``closed='open'`` counts ``(A, B)``.
    """
    a, b = map(float, interval)
    if crossings is None:
        crossings = locate_crossings(family, (a, b), bounds, tol_x=tol_x)
    count = count_crossings(crossings, (a, b), closed, tol_x)
    integral, qerr = trace_integral(family, (a, b), quad_order)
    m = family.dim
    disc = abs(count - integral)
    return CountingReport((a, b), count, integral, disc, m, closed, qerr,
                          violated=disc >= m, warning=disc > m - 0.05)


def weyl_demo(L, B_max: float, U0=None, n_points: int = 10) -> list[tuple[float, int, float]]:
    """Crossing counts on ``(0, B]`` for ``U(x) = e^{ixL} U0`` against ``tr L * B / 2pi``."""
    fam = model_linear(L, U0)
    bounds = estimate_bounds(fam, (0.0, B_max), grid_points=4)
    crossings = locate_crossings(fam, (0.0, B_max), bounds)
    tr = float(np.real(np.trace(fam.L)))
    out = []
    for B in np.linspace(B_max / n_points, B_max, n_points):
        out.append((float(B), count_crossings(crossings, (0.0, B)), tr * B / TWO_PI))
    return out


@dataclass
class IndependenceCertificate:
    rank: int
    expected: int
    sigma_min: float
    window_length: float
    max_window: float
    independent: bool


def max_independence_window(bounds: BoundEstimates, dim: int) -> float:
    return 2 * bounds.d_min / (bounds.d_2 * dim)


def independence_check(crossings: list[Crossing], bounds: BoundEstimates, dim: int | None = None,
                       window=None, rank_tol: float = 1e-8) -> IndependenceCertificate:
    """Stack all kernel bases of crossings in a short window and certify full column rank."""
    if not crossings:
        raise ValueError("no crossings given")
    dim = dim or crossings[0].kernel_basis.shape[0]
    xs = [c.x for c in crossings]
    length = (window[1] - window[0]) if window is not None else max(xs) - min(xs)
    limit = max_independence_window(bounds, dim)
    if length > limit * (1 + 1e-12):
        raise WindowTooLong(f"window length {length} exceeds 2 d_min/(d_2 M) = {limit}",
                            length=length, limit=limit)
    stacked = np.concatenate([c.kernel_basis for c in crossings], axis=1)
    s = np.linalg.svd(stacked, compute_uv=False)
    expected = stacked.shape[1]
    smin = float(s[-1]) if expected <= dim else 0.0
    rank = int(np.sum(s > rank_tol))
    return IndependenceCertificate(rank, expected, smin, float(length), float(limit),
                                   rank == expected and smin > rank_tol)


def independence_windows(crossings: list[Crossing], bounds: BoundEstimates, dim: int) -> list[IndependenceCertificate]:
    """Certificates for every maximal window ``[x_i, x_i + 2 d_min/(d_2 M)]`` starting at a crossing."""
    limit = max_independence_window(bounds, dim)
    xs = sorted(crossings, key=lambda c: c.x)
    out = []
    for i, c in enumerate(xs):
        group = [d for d in xs[i:] if d.x <= c.x + limit]
        out.append(independence_check(group, bounds, dim, window=(c.x, c.x + limit)))
    return out


@dataclass
class AlmostOrthogonalPair:
    x: float
    y: float
    lhs: float
    rhs: float

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs


def almost_orthogonality(family: UnitaryFamily, crossings: list[Crossing], bounds: BoundEstimates,
                         tol_kernel: float = TOL_KERNEL, max_distance: float = math.inf,
                         ) -> list[AlmostOrthogonalPair]:
    """``sup |<D(x) phi, psi>| <= (d_2/2)|x - y| + tol_kernel (1 + d_max)`` over unit kernel vectors.

    D is taken at the first crossing of each pair.
    """
    out = []
    for i, cx in enumerate(crossings):
        d = compute_D(family, cx.x)
        for cy in crossings[i + 1:]:
            if abs(cy.x - cx.x) > max_distance:
                continue
            lhs = float(np.linalg.norm(dagger(cy.kernel_basis) @ d @ cx.kernel_basis, 2))
            rhs = 0.5 * bounds.d_2 * abs(cx.x - cy.x) + tol_kernel * (1 + bounds.d_max)
            out.append(AlmostOrthogonalPair(cx.x, cy.x, lhs, rhs))
    return out
