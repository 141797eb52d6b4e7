"""Eigenphases and eigenvectors of ``U(x)``, and continuation of the analytic branches."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment

from .errors import MatchingAmbiguous, MonoflowError
from .family import BoundEstimates, UnitaryFamily, compute_D, dagger, estimate_bounds

TWO_PI = 2 * math.pi
TOL_EIG = 1e-10
DEGEN_TOL = 1e-11


@dataclass
class SpectrumSnapshot:
    x: float
    phases: np.ndarray  # (M,) in [0, 2pi)
    vectors: np.ndarray  # (M, M), column j is phi_j
    residuals: np.ndarray
    velocities: np.ndarray | None = None
    groups: list | None = None  # index arrays of phase-degenerate clusters


@dataclass
class EigenphaseCurve:
    j: int
    x: np.ndarray
    mu: np.ndarray
    vectors: np.ndarray  # (N, M)
    velocity: np.ndarray


def fix_gauge(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    v = np.array(vectors, dtype=complex)
    idx = np.argmax(np.abs(v), axis=0)
    c = v[idx, np.arange(v.shape[1])]
    return v * (np.conj(c) / np.abs(c))


def _circular_groups(phases: np.ndarray, tol: float) -> list[np.ndarray]:
    order = np.argsort(phases)
    groups = [[order[0]]]
    for a, b in zip(order[:-1], order[1:]):
        if phases[b] - phases[a] < tol:
            groups[-1].append(b)
        else:
            groups.append([b])
    if len(groups) > 1 and phases[order[0]] + TWO_PI - phases[order[-1]] < tol:
        groups[0] = groups.pop() + groups[0]
    return [np.array(g) for g in groups]


def eigensystem(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Phases in ``[0, 2pi)`` and orthonormal eigenvectors of a unitary matrix (complex Schur)."""
    t, z = sla.schur(u, output="complex")
    phases = np.mod(np.angle(np.diag(t)), TWO_PI)
    phases[phases >= TWO_PI] -= TWO_PI
    return phases, z


def spectrum(u: np.ndarray, d: np.ndarray | None = None, degen_tol: float = DEGEN_TOL, x: float = math.nan
             ) -> SpectrumSnapshot:
    """Snapshot of a unitary matrix; ``d`` (the matrix D) fixes bases inside degenerate clusters."""
    phases, z = eigensystem(u)
    groups = _circular_groups(phases, degen_tol)
    vel = None
    if d is not None:
        vel = np.empty(len(phases))
        for g in groups:
            block = z[:, g]
            w, r = np.linalg.eigh(dagger(block) @ d @ block)
            z[:, g] = block @ r
            vel[g] = w
            if len(g) > 1:
                # one representative phase for the whole cluster
                ref = phases[g[0]]
                phases[g] = ref
    z = fix_gauge(z)
    # sort by phase, then velocity
    key = (phases, vel) if vel is not None else (phases,)
    order = np.lexsort(tuple(reversed(key)))
    phases, z = phases[order], z[:, order]
    if vel is not None:
        vel = vel[order]
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    groups = [np.sort(inv[g]) for g in groups]
    res = np.linalg.norm(u @ z - z * np.exp(1j * phases), axis=0)
    return SpectrumSnapshot(x, phases, z, res, vel, groups)


def snapshot(family: UnitaryFamily, x: float, fix_degenerate: bool = True) -> SpectrumSnapshot:
    u, du = family.derivatives(x, 1)
    d = 0.5 * (-1j * du @ dagger(u) + (-1j * du @ dagger(u)).conj().T)
    snap = spectrum(u, d if fix_degenerate else None, x=x)
    if np.any(snap.residuals > TOL_EIG):
        raise MonoflowError(f"eigensolver residual too large at x={x}", x=x,
                            residual=float(snap.residuals.max()),
                            cond=float(np.linalg.cond(u)))
    if snap.velocities is None:
        snap.velocities = phase_velocity(family, snap)
    return snap


def phase_velocity(family: UnitaryFamily, snap: SpectrumSnapshot) -> np.ndarray:
    """``<D phi_j, phi_j>``; inside degenerate clusters, the eigenvalues of the compressed D."""
    d = compute_D(family, snap.x)
    v = snap.vectors
    out = np.real(np.einsum("ij,ik,kj->j", v.conj(), d, v))
    for g in snap.groups or []:
        if len(g) > 1:
            block = v[:, g]
            out[g] = np.linalg.eigvalsh(dagger(block) @ d @ block)
    return out


def _unwrap(theta: np.ndarray, predicted: np.ndarray) -> np.ndarray:
    return theta + TWO_PI * np.round((predicted - theta) / TWO_PI)


def step_cap(bounds: BoundEstimates, dim: int) -> float:
    """Largest step keeping every branch's phase sweep below ``min(pi/4, pi/(2M))``."""
    return min(math.pi / 4, math.pi / (2 * dim)) / bounds.d_max


def _match(prev_vecs, snap: SpectrumSnapshot):
    s = np.abs(dagger(prev_vecs) @ snap.vectors) ** 2
    _, perm = linear_sum_assignment(-s)
    gid = np.empty(s.shape[1], dtype=int)
    for i, g in enumerate(snap.groups):
        gid[g] = i
    overlaps = np.empty(len(perm))
    margins = np.empty(len(perm))
    for j, k in enumerate(perm):
        same = gid == gid[k]
        overlaps[j] = math.sqrt(s[j, same].sum())
        margins[j] = s[j, k] - (s[j, ~same].max() if (~same).any() else 0.0)
    return perm, overlaps, margins


def _align_degenerate(prev_vecs, new_vecs, snap, perm):
    # clusters degenerate in phase and velocity carry no preferred basis: align to previous
    vel = snap.velocities
    out = new_vecs.copy()
    for g in snap.groups:
        if len(g) < 2 or np.ptp(vel[g]) > 1e-9:
            continue
        js = [j for j, k in enumerate(perm) if k in set(g.tolist())]
        ks = [perm[j] for j in js]
        y = snap.vectors[:, ks]
        w, _ = sla.polar(dagger(y) @ prev_vecs[:, js])
        out[:, js] = y @ w
    return out


def track(family: UnitaryFamily, interval, bounds: BoundEstimates | None = None,
          h_init: float | None = None, h_min: float = 1e-9, overlap_min: float = 0.75,
          ) -> list[EigenphaseCurve]:
    """Follow the M analytic eigenphase branches across ``interval``.

    Samples include a uniform nominal grid of spacing ``<= h_init`` plus any
    refinement points inserted when eigenvector overlaps drop below
    ``overlap_min``.  Phases are unwrapped against the prediction
    ``mu + velocity * h``.
    """
    a, b = map(float, interval)
    m = family.dim
    if bounds is None:
        bounds = estimate_bounds(family, (a, b), grid_points=max(16, int(8 * (b - a)) + 2))
    cap = step_cap(bounds, m)
    h_nom = cap if h_init is None else min(h_init, cap)
    n = max(1, math.ceil((b - a) / h_nom - 1e-12))
    grid = np.linspace(a, b, n + 1)

    snap = snapshot(family, a)
    xs, mus, vels, vecs = [a], [snap.phases.copy()], [snap.velocities.copy()], [snap.vectors.copy()]
    x = a
    for target in grid[1:]:
        while x < target:
            h = target - x
            while True:
                xn = target if h == target - x else x + h
                sn = snapshot(family, xn)
                perm, overlaps, margins = _match(vecs[-1], sn)
                new_mu = _unwrap(sn.phases[perm], mus[-1] + vels[-1] * h)
                jumps = new_mu - mus[-1]
                good = overlaps.min() >= overlap_min and jumps.min() > 0 and jumps.max() <= math.pi / 4
                if good:
                    break
                if h / 2 < h_min:
                    if margins.min() < 1e-6:
                        raise MatchingAmbiguous(f"branch matching ambiguous at x={xn}", x=xn,
                                                margin=float(margins.min()))
                    break
                h /= 2
            new_vecs = _align_degenerate(vecs[-1], sn.vectors[:, perm], sn, perm)
            x = xn
            xs.append(xn)
            mus.append(new_mu)
            vels.append(sn.velocities[perm])
            vecs.append(new_vecs)
    xs = np.array(xs)
    mus, vels, vecs = np.array(mus), np.array(vels), np.array(vecs)
    return [EigenphaseCurve(j, xs, mus[:, j], vecs[:, :, j], vels[:, j]) for j in range(m)]


def curves_to_csv(curves: list[EigenphaseCurve]) -> str:
    lines = ["x,j,mu,velocity"]
    for k in range(len(curves[0].x)):
        for c in curves:
            lines.append(f"{c.x[k]!r},{c.j},{c.mu[k]!r},{c.velocity[k]!r}")
    return "\n".join(lines) + "\n"
