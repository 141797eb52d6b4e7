"""Crossing curves ``x = x_j(y)`` of a two-parameter family monotone in ``x``.

Curves are traced y-outer / x-inner: for each y-sample the one-parameter
family ``x -> U(x, y)`` goes through :func:`monoflow.crossings.locate_crossings`
and the crossings are threaded across y by predicted position.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment

from .crossings import TOL_KERNEL, locate_crossings
from .errors import CurveMatchingAmbiguous, ExtrapolationUnstable, SchurSingular
from .family import TwoParamFamily, compute_D, dagger, estimate_bounds, hermitize


def positivity(family: TwoParamFamily, point=None) -> float:
    """``lambda_min`` of ``(1/i)(dU/dx) U^{-1}`` at ``point`` (default: base point)."""
    x, y = family.base if point is None else point
    return float(np.linalg.eigvalsh(compute_D(family.slice_y(y), x))[0])


check_positivity = positivity


def _dy_generator(family: TwoParamFamily, x, y):
    return compute_D(family.slice_x(x), y)


@dataclass
class SchurReduction:
    base: tuple[float, float]
    V0: np.ndarray  # (M, m) orthonormal basis of ker(U - I) at the base point
    V1: np.ndarray  # (M, M - m) complement
    point: tuple[float, float]
    blocks: dict
    W_reduced: np.ndarray
    U_reduced: np.ndarray
    recovery: np.ndarray  # v1 = recovery @ v0
    cond_W11: float


def base_kernel(family: TwoParamFamily, base=None, tol_kernel: float = TOL_KERNEL):
    x0, y0 = family.base if base is None else base
    w = family.U(x0, y0) - np.eye(family.dim)
    _, s, vh = np.linalg.svd(w)
    m = int(np.sum(s < tol_kernel))
    v = dagger(vh)
    return v[:, family.dim - m:], v[:, :family.dim - m]


def schur_reduce(family: TwoParamFamily, point, base=None, cond_max: float = 1e8,
                 tol_kernel: float = TOL_KERNEL) -> SchurReduction:
    """Reduce eigenvalue-one detection to ``V0 = ker(U(base) - I)``.

    ``W' = W00 - W01 W11^{-1} W10`` and ``U' = W' + I`` on ``V0``.
    """
    base = family.base if base is None else tuple(base)
    v0, v1 = base_kernel(family, base, tol_kernel)
    w = family.U(*point) - np.eye(family.dim)
    w00, w01 = dagger(v0) @ w @ v0, dagger(v0) @ w @ v1
    w10, w11 = dagger(v1) @ w @ v0, dagger(v1) @ w @ v1
    if v1.shape[1]:
        cond = float(np.linalg.cond(w11))
        if not cond < cond_max:
            raise SchurSingular(f"W11 is numerically singular at {point}", cond=cond)
        rec = -np.linalg.solve(w11, w10)
        wr = w00 + w01 @ rec
    else:
        cond, rec, wr = 1.0, np.zeros((0, v0.shape[1]), complex), w00
    return SchurReduction(base, v0, v1, tuple(point), {"W00": w00, "W01": w01, "W10": w10, "W11": w11},
                          wr, wr + np.eye(v0.shape[1]), rec, cond)


def kernel_agreement(family: TwoParamFamily, points, base=None, tol_kernel: float = TOL_KERNEL) -> list[dict]:
    """Compare eigenvalue-one detection on U and on the Schur-reduced U'."""
    out = []
    for p in points:
        red = schur_reduce(family, p, base)
        s_full = float(np.linalg.svd(np.eye(family.dim) - family.U(*p), compute_uv=False)[-1])
        s_red = (float(np.linalg.svd(red.W_reduced, compute_uv=False)[-1]) if red.W_reduced.size else math.inf)
        out.append({"point": [float(p[0]), float(p[1])], "sigma_full": s_full, "sigma_reduced": s_red,
                    "agree": (s_full < tol_kernel) == (s_red < tol_kernel)})
    return out


def linearization_slopes(family: TwoParamFamily, base=None, tol_kernel: float = TOL_KERNEL) -> np.ndarray:
    """Tangent slopes ``dx/dy = -theta_j`` with ``B~ v = theta A~ v`` on ``V0``.

    ``A~`` and ``B~`` are the x- and y-generators compressed to the kernel at
    the base point; ``det(x A~ + y B~) = prod_j a_j (x + theta_j y)``.
    """
    x0, y0 = family.base if base is None else base
    v0, _ = base_kernel(family, (x0, y0), tol_kernel)
    if v0.shape[1] == 0:
        return np.zeros(0)
    at = hermitize(dagger(v0) @ compute_D(family.slice_y(y0), x0) @ v0)
    bt = hermitize(dagger(v0) @ _dy_generator(family, x0, y0) @ v0)
    theta = sla.eigh(bt, at, eigvals_only=True)
    return np.sort(-theta)


@dataclass
class CrossingCurve:
    branch: int
    y: list = field(default_factory=list)
    x: list = field(default_factory=list)
    multiplicity: list = field(default_factory=list)
    sigma_min: list = field(default_factory=list)
    kernels: list = field(default_factory=list)
    local_slope: list = field(default_factory=list)  # dx/dy from the kernel vector, None if multiple
    through_base: bool = False
    slope: float | None = None
    linear_slope: float | None = None

    def projections(self) -> list[np.ndarray]:
        return [hermitize(k @ dagger(k)) for k in self.kernels]


@dataclass
class TraceResult:
    curves: list[CrossingCurve]
    linear_slopes: np.ndarray
    ambiguities: list[dict]

    def to_csv(self) -> str:
        lines = ["y,branch,x,sigma_min"]
        rows = sorted((y, c.branch, x, s) for c in self.curves for y, x, s in zip(c.y, c.x, c.sigma_min))
        lines += [f"{y!r},{b},{x!r},{s!r}" for y, b, x, s in rows]
        return "\n".join(lines) + "\n"


def _crossings_at(family, y, xr, grid_points=41):
    sl = family.slice_y(y)
    bounds = estimate_bounds(sl, xr, grid_points=grid_points)
    return [c for c in locate_crossings(sl, xr, bounds) if c.boundary != "left" or c.x > xr[0]]


def solve_on_curve(family: TwoParamFamily, y: float, x_guess: float, half_width: float):
    """Crossing of ``x -> U(x, y)`` nearest ``x_guess`` within ``half_width``."""
    xr = (x_guess - half_width, x_guess + half_width)
    cs = _crossings_at(family, y, xr, grid_points=9)
    if not cs:
        raise ExtrapolationUnstable(f"no crossing near x={x_guess} at y={y}", y=y, x=x_guess)
    return min(cs, key=lambda c: abs(c.x - x_guess))


def _slope_bound(family, rect, n=5):
    xs = np.linspace(rect[0], rect[1], n)
    ys = np.linspace(rect[2], rect[3], n)
    dmin, dy = math.inf, 0.0
    for y in ys:
        for x in xs:
            dmin = min(dmin, float(np.linalg.eigvalsh(compute_D(family.slice_y(y), x))[0]))
            dy = max(dy, float(np.linalg.norm(_dy_generator(family, x, y), 2)))
    return dy / dmin


def _implicit_slope(family, crossing, y):
    if crossing.multiplicity != 1:
        return None
    phi = crossing.kernel_basis[:, 0]
    dx = np.real(np.vdot(phi, compute_D(family.slice_y(y), crossing.x) @ phi))
    dy = np.real(np.vdot(phi, _dy_generator(family, crossing.x, y) @ phi))
    return float(-dy / dx)


def trace_curves(family: TwoParamFamily, rect, n_y: int = 41, base=None, tol_x: float = 1e-9,
                 tangent_h: float | None = None) -> TraceResult:
    """Trace all crossing curves in ``rect = (x_lo, x_hi, y_lo, y_hi)``."""
    x_lo, x_hi, y_lo, y_hi = map(float, rect)
    x0, y0 = family.base if base is None else base
    ys = np.linspace(y_lo, y_hi, n_y)
    if y_lo <= y0 <= y_hi and not np.any(np.isclose(ys, y0, rtol=0, atol=1e-14)):
        ys = np.sort(np.append(ys, y0))
    dy_max = float(np.max(np.diff(ys))) if len(ys) > 1 else 1.0
    sb = _slope_bound(family, (x_lo, x_hi, y_lo, y_hi))
    match_tol = 1.5 * sb * dy_max + 10 * tol_x

    curves: list[CrossingCurve] = []
    active: list[CrossingCurve] = []
    ambiguities = []
    for y in ys:
        cs = _crossings_at(family, float(y), (x_lo, x_hi))
        slots = [c for c in cs for _ in range(c.multiplicity)]
        preds = []
        for cur in active:
            slope = cur.local_slope[-1]
            if slope is None:
                slope = (cur.x[-1] - cur.x[-2]) / (cur.y[-1] - cur.y[-2]) if len(cur.y) > 1 else 0.0
            preds.append(cur.x[-1] + slope * (y - cur.y[-1]))
        matched_curves, used = set(), set()
        if active and slots:
            xs_slot = np.array([c.x for c in slots])
            cost = np.abs(np.array(preds)[:, None] - xs_slot[None, :])
            rows, cols = linear_sum_assignment(cost)
            pairs = [(r, c) for r, c in zip(rows, cols) if cost[r, c] <= match_tol]
            bad = set()
            for i, (r1, c1) in enumerate(pairs):
                for r2, c2 in pairs[i + 1:]:
                    if abs(xs_slot[c1] - xs_slot[c2]) <= 10 * tol_x:
                        continue  # one multiple crossing: either assignment is the same
                    kept = cost[r1, c1] + cost[r2, c2]
                    swapped = cost[r1, c2] + cost[r2, c1]
                    if swapped <= 2 * kept + 10 * tol_x:
                        bad.update({(r1, c1), (r2, c2)})
            for r, c in pairs:
                if (r, c) in bad:
                    continue
                matched_curves.add(r)
                used.add(c)
                cur = active[r]
                cur.y.append(float(y))
                cur.x.append(slots[c].x)
                cur.multiplicity.append(slots[c].multiplicity)
                cur.sigma_min.append(slots[c].residual)
                cur.kernels.append(slots[c].kernel_basis)
                cur.local_slope.append(_implicit_slope(family, slots[c], float(y)))
            if bad:
                ambiguities.append(CurveMatchingAmbiguous(
                    f"curves meet tangentially near y={float(y)}", y=float(y),
                    x=sorted(float(xs_slot[c]) for _, c in bad)).to_dict())
        active = [cur for i, cur in enumerate(active) if i in matched_curves]
        for c_idx, c in enumerate(slots):
            if c_idx in used:
                continue
            cur = CrossingCurve(len(curves), [float(y)], [c.x], [c.multiplicity], [c.residual], [c.kernel_basis],
                                local_slope=[_implicit_slope(family, c, float(y))])
            curves.append(cur)
            active.append(cur)

    lin = linearization_slopes(family, (x0, y0)) if y_lo <= y0 <= y_hi else np.zeros(0)
    h = tangent_h if tangent_h is not None else min(0.25 * dy_max, 1e-2)
    for cur in curves:
        ys_c = np.array(cur.y)
        k = np.flatnonzero(np.isclose(ys_c, y0, rtol=0, atol=1e-14))
        if k.size == 0 or abs(cur.x[k[0]] - x0) > 1e-7:
            continue
        cur.through_base = True
        # raw slope from neighbours, refined by Richardson on symmetric quotients
        i = k[0]
        nb = [j for j in (i - 1, i + 1) if 0 <= j < len(ys_c)]
        raw = np.mean([(cur.x[j] - x0) / (ys_c[j] - y0) for j in nb]) if nb else 0.0

        def sym(hh):
            w = 0.25 * abs(raw * hh) + 4 * sb * hh + tol_x
            xp = solve_on_curve(family, y0 + hh, x0 + raw * hh, w).x
            xm = solve_on_curve(family, y0 - hh, x0 - raw * hh, w).x
            return 0.5 * ((xp - x0) / hh + (xm - x0) / (-hh))

        try:
            cur.slope = (4 * sym(h / 2) - sym(h)) / 3
        except ExtrapolationUnstable:
            cur.slope = float(raw)
        if lin.size:
            cur.linear_slope = float(lin[np.argmin(np.abs(lin - cur.slope))])
    return TraceResult(curves, lin, ambiguities)


@dataclass
class CurveProjectionResult:
    samples: list[np.ndarray]
    limit: np.ndarray
    extrapolants: list[np.ndarray]
    stable: bool


def curve_projections(curve: CrossingCurve, family: TwoParamFamily, base=None, h: float = 1e-2,
                      levels: int = 3, gate: float = 1e-4) -> CurveProjectionResult:
    """Eigenprojections ``P_j(y)`` along a curve through the base point and their limit at ``y0``.

    The limit is entrywise Richardson extrapolation of the symmetric means
    ``(P(y0 + h) + P(y0 - h)) / 2`` over ``h, h/2, ...``.
    """
    x0, y0 = family.base if base is None else base
    if not curve.through_base or curve.slope is None:
        raise ValueError("curve does not pass through the base point")
    width = 0.25 * abs(curve.slope) + 1.0

    def p_at(y):
        c = solve_on_curve(family, y, x0 + curve.slope * (y - y0), width * abs(y - y0) + 1e-9)
        k = c.kernel_basis
        return hermitize(k @ dagger(k))

    syms = [0.5 * (p_at(y0 + h / 2 ** k) + p_at(y0 - h / 2 ** k)) for k in range(levels)]
    ext = [(4 * s1 - s0) / 3 for s0, s1 in zip(syms[:-1], syms[1:])]
    diffs = [float(np.linalg.norm(e1 - e0, 2)) for e0, e1 in zip(ext[:-1], ext[1:])]
    if any(d > gate for d in diffs):
        raise ExtrapolationUnstable("successive extrapolants differ", diffs=diffs)
    return CurveProjectionResult(curve.projections(), hermitize(ext[-1]), ext, True)


def _range_basis(p, tol=0.5):
    w, v = np.linalg.eigh(hermitize(p))
    return v[:, w > tol]


def projection_sum_check(limits: list[np.ndarray], family: TwoParamFamily, base=None) -> dict:
    """Compare ``sum_j P_j(y0)`` with the projection onto ``ker(I - U(x0, y0))``.

    ``defect`` uses the orthogonal projections as given.  ``weighted_defect``
    replaces each ``P_j(y0)`` by the projection onto the same range that is
    orthogonal in the inner product of ``D0 = (1/i)(dU/dx)U^{-1}`` at the base
    point, and compares with the ``D0``-orthogonal projection onto the kernel.
    The kernel vectors of distinct curves are ``D0``-orthogonal, not orthogonal,
    so only the weighted sum reproduces the kernel projection in general.
    """
    x0, y0 = family.base if base is None else base
    v0, _ = base_kernel(family, (x0, y0))
    target = v0 @ dagger(v0)
    total = sum(limits) if limits else np.zeros_like(target)
    d0 = compute_D(family.slice_y(y0), x0)

    def weighted(k):
        return k @ np.linalg.solve(dagger(k) @ d0 @ k, dagger(k) @ d0)

    w_total = sum(weighted(_range_basis(p)) for p in limits) if limits else np.zeros_like(target)
    w_target = weighted(v0) if v0.shape[1] else np.zeros_like(target)
    return {"defect": float(np.linalg.norm(total - target, 2)),
            "weighted_defect": float(np.linalg.norm(w_total - w_target, 2)),
            "kernel_dim": int(v0.shape[1]),
            "rank_sum": int(sum(_range_basis(p).shape[1] for p in limits))}


def eigenprojections_along_ray(family: TwoParamFamily, direction, radii) -> list[np.ndarray]:
    """Eigenprojections of ``U(base + r * direction)`` sorted by eigenphase, for each radius."""
    from .flow import eigensystem

    x0, y0 = family.base
    dx, dy = direction
    out = []
    for r in radii:
        phases, z = eigensystem(family.U(x0 + r * dx, y0 + r * dy))
        ph = np.angle(np.exp(1j * phases))
        order = np.argsort(ph)
        out.append(np.array([np.outer(z[:, i], z[:, i].conj()) for i in order]))
    return out
