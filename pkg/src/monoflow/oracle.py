"""Brute-force reference computations.

Everything here is deliberately naive: uniform grids, golden-section search,
finite differences and SVD.  Nothing is shared with the tracker or the crossing
locator, so agreement between the two is evidence for both.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .family import BoundEstimates, UnitaryFamily

INV_PHI = (math.sqrt(5) - 1) / 2


@dataclass
class ScanCrossing:
    x: float
    multiplicity: int
    sigma: np.ndarray  # the smallest singular values of I - U(x)
    basis: np.ndarray  # right singular vectors with sigma < tol


@dataclass
class DenseScanResult:
    grid: np.ndarray
    sigma_min: np.ndarray
    crossings: list[ScanCrossing] = field(default_factory=list)
    finest_spacing: float = math.inf

    def positions(self) -> np.ndarray:
        return np.array([c.x for c in self.crossings])

    def multiplicities(self) -> list[int]:
        return [c.multiplicity for c in self.crossings]


def _sigmas(family, xs):
    us = family.U_batch(np.asarray(xs, dtype=float))
    eye = np.eye(us.shape[-1])
    return np.linalg.svd(eye[None] - us, compute_uv=False)[:, ::-1]


def _sigma_min(family, x):
    return float(_sigmas(family, [x])[0, 0])


def golden_section(f, lo: float, hi: float, tol: float = 1e-13, max_iter: int = 200) -> float:
    """Minimizer of a unimodal ``f`` on ``[lo, hi]`` to absolute tolerance ``tol``."""
    a, b = lo, hi
    c, d = b - INV_PHI * (b - a), a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    cands = [(f(a), a), (fc, c), (fd, d), (f(b), b)]
    return min(cands)[1]


def _flag(sig, h, d_max):
    # a zero within one step of x forces sigma_min(x) <= 2 sin(d_max h / 2)
    reach = 2 * math.sin(min(math.pi / 2, 0.5 * d_max * h)) * 1.01 + 1e-13
    return sig <= reach


def _runs(mask):
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return []
    cuts = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate([[idx[0]], idx[cuts + 1]])
    ends = np.concatenate([idx[cuts], [idx[-1]]])
    return list(zip(starts, ends))


def dense_scan_crossings(family: UnitaryFamily, interval, bounds: BoundEstimates, n: int = 10_000,
                         tol_kernel: float = 1e-8, sub_points: int = 33) -> DenseScanResult:
    """All ``x`` in ``[a, b]`` where ``U(x)`` has eigenvalue one.

    A uniform scan flags points whose ``sigma_min(I - U)`` is small enough for a
    zero to lie within one step (eigenphases move at speed at most ``d_max``).
    Flagged windows are resampled recursively until the spacing is below
    ``pi * tol_kernel / (2 d_max)``; each remaining run of flagged points is
    refined by golden-section search on ``sigma_min``.
    """
    a, b = map(float, interval)
    d_max = bounds.d_max
    grid = np.linspace(a, b, n)
    sig = _sigmas(family, grid)[:, 0]
    h_target = math.pi * tol_kernel / (2 * d_max)
    found: list[tuple[float, float]] = []
    finest = [grid[1] - grid[0]]

    def windows(xs, s):
        h = xs[1] - xs[0]
        for i, j in _runs(_flag(s, h, d_max)):
            yield max(a, xs[i] - h), min(b, xs[j] + h)

    def descend(lo, hi):
        xs = np.linspace(lo, hi, sub_points)
        h = xs[1] - xs[0]
        s = _sigmas(family, xs)[:, 0]
        if h <= h_target:
            finest[0] = min(finest[0], h)
            for i, j in _runs(_flag(s, h, d_max)):
                found.append((max(a, xs[i] - h), min(b, xs[j] + h)))
            return
        for w in windows(xs, s):
            descend(*w)

    for w in windows(grid, sig):
        descend(*w)

    # merge overlapping brackets, then refine
    found.sort()
    merged: list[list[float]] = []
    for lo, hi in found:
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    out = []
    for lo, hi in merged:
        x = golden_section(lambda t: _sigma_min(family, t), lo, hi)
        w = np.eye(family.dim) - family.U(x)
        _, s, vh = np.linalg.svd(w)
        small = s < tol_kernel
        if not small.any():
            continue
        basis = vh[small].conj().T
        out.append(ScanCrossing(float(x), int(small.sum()), s[::-1], basis))
    return DenseScanResult(grid, sig, out, float(finest[0]))


@dataclass
class FDResult:
    order: int
    second_order: np.ndarray
    fourth_order: np.ndarray
    extrapolated: np.ndarray
    error_estimate: float


def fd_derivative(family: UnitaryFamily, x: float, order: int = 1, h: float = 1e-2) -> FDResult:
    """Central differences of ``U`` (orders 2 and 4) with one Richardson step.

    The error estimate is the distance between the extrapolated value and
    the fourth-order value at ``h / 2``.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")

    def u(t):
        return family.U(x + t)

    def c2(s):
        if order == 1:
            return (u(s) - u(-s)) / (2 * s)
        return (u(s) - 2 * u(0.0) + u(-s)) / (s * s)

    def c4(s):
        if order == 1:
            return (-u(2 * s) + 8 * u(s) - 8 * u(-s) + u(-2 * s)) / (12 * s)
        return (-u(2 * s) + 16 * u(s) - 30 * u(0.0) + 16 * u(-s) - u(-2 * s)) / (12 * s * s)

    f_h, f_h2 = c4(h), c4(h / 2)
    # both stencils have error h^4 + O(h^6)
    ext = (16 * f_h2 - f_h) / 15
    err = float(np.linalg.norm(ext - f_h2, 2))
    return FDResult(order, c2(h / 2), f_h2, ext, err)


def brute_projection(family: UnitaryFamily, window, bounds: BoundEstimates, n: int = 2000,
                     tol_kernel: float = 1e-8, rank_tol: float = 1e-8) -> np.ndarray:
    """Orthogonal projection onto the span of all kernels ``ker(I - U(x))`` with ``x`` in ``window``."""
    scan = dense_scan_crossings(family, window, bounds, n=n, tol_kernel=tol_kernel)
    if not scan.crossings:
        return np.zeros((family.dim, family.dim), dtype=complex)
    stack = np.hstack([c.basis for c in scan.crossings])
    q, r = np.linalg.qr(stack)
    keep = np.abs(np.diag(r)) > rank_tol
    q = q[:, keep]
    return q @ q.conj().T
