"""Generators ``A(x)`` with ``U(x) = exp(iA(x))`` and the Duhamel average of ``A'``."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import StepFailure
from .family import GeneratorPath, UnitaryFamily, compute_D, dagger, expi, hermitize
from .flow import TWO_PI, _circular_groups, eigensystem


def _duhamel_fixed(w, v, ap_tilde, n):
    t, wt = leggauss(n)
    tau, wt = 0.5 * (t + 1), 0.5 * wt
    diff = w[:, None] - w[None, :]
    kernel = np.tensordot(wt, np.exp(1j * tau[:, None, None] * diff[None]), axes=1)
    return v @ (ap_tilde * kernel) @ dagger(v)


def duhamel_average(A, A_prime, order: int | None = None, tol: float = 1e-12, max_order: int = 512,
                    return_order: bool = False):
    """``int_0^1 exp(i tau A) A' exp(-i tau A) d tau`` by Gauss-Legendre quadrature.

    Without ``order``, the order doubles from 16 until successive results
    differ by less than ``tol * max(1, ||A'||)`` (capped at ``max_order``).
    """
    A = hermitize(np.asarray(A, dtype=complex))
    Ap = hermitize(np.asarray(A_prime, dtype=complex))
    w, v = np.linalg.eigh(A)
    apt = dagger(v) @ Ap @ v
    if order is not None:
        out = hermitize(_duhamel_fixed(w, v, apt, order))
        return (out, order) if return_order else out
    scale = max(1.0, float(np.linalg.norm(Ap, 2)))
    n = 16
    prev = _duhamel_fixed(w, v, apt, n)
    while n < max_order:
        n *= 2
        cur = _duhamel_fixed(w, v, apt, n)
        if np.linalg.norm(cur - prev, 2) < tol * scale:
            prev = cur
            break
        prev = cur
    return (hermitize(prev), n) if return_order else hermitize(prev)


def duhamel_vs_exact_derivative(family: GeneratorPath, x: float, order: int | None = None) -> float:
    """``||compute_D(x) - duhamel_average(A(x), A'(x))||_2``."""
    d = compute_D(family, x)
    g = duhamel_average(family.generator(x), family.generator(x, 1), order)
    return float(np.linalg.norm(d - g, 2))


@dataclass
class LogLift:
    x_base: float
    base_generator: np.ndarray
    x: np.ndarray
    generators: np.ndarray  # (N, M, M)
    defects: np.ndarray  # ||A(x_{k+1}) - A(x_k)||, length N-1

    def at(self, x: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.x - x)))
        return self.generators[i]


def _next_generator(u, a_pred, cluster_tol=1e-10):
    phases, z = eigensystem(u)
    out = np.zeros_like(u)
    jump = 0.0
    for g in _circular_groups(phases, cluster_tol):
        q = z[:, g]
        theta = phases[g[0]]
        comp = hermitize(dagger(q) @ a_pred @ q)
        w, r = np.linalg.eigh(comp)
        reps = theta + TWO_PI * np.round((w - theta) / TWO_PI)
        jump = max(jump, float(np.max(np.abs(reps - w))))
        qr = q @ r
        out += (qr * reps) @ dagger(qr)
    return hermitize(out), jump


def lift_log(family: UnitaryFamily, interval, base_generator, x_base: float | None = None,
             h_init: float = 0.05, h_min: float = 1e-8, max_jump: float = math.pi / 4,
             tol_unit: float = 1e-10) -> LogLift:
    """Continue ``A`` with ``exp(iA(x)) = U(x)`` from a prescribed ``A(x_base)``.

    Each eigenphase representative is chosen nearest to the linear
    extrapolation of the previous generators, compressed to the eigenspace.
    """
    a, b = map(float, interval)
    xb = a if x_base is None else float(x_base)
    a0 = hermitize(np.asarray(base_generator, dtype=complex))
    defect = float(np.linalg.norm(expi(a0) - family.U(xb), 2))
    if defect > 1e-8:
        raise ValueError(f"exp(i A_base) does not match U(x_base) (defect {defect:.2e})")

    def sweep(direction, end):
        xs, gens = [xb], [a0]
        x, h = xb, h_init
        while (end - x) * direction > 1e-15:
            h = min(h, abs(end - x))
            while True:
                xn = x + direction * h
                if len(gens) > 1:
                    slope = (gens[-1] - gens[-2]) / (xs[-1] - xs[-2])
                    pred = gens[-1] + slope * (xn - x)
                else:
                    pred = gens[-1]
                gen, jump = _next_generator(family.U(xn), pred)
                if np.max(np.abs(np.linalg.eigvalsh(gen - gens[-1]))) < max_jump and jump < max_jump:
                    break
                h /= 2
                if h < h_min:
                    raise StepFailure(f"cannot continue the logarithm past x={x}", x=x)
            xs.append(xn)
            gens.append(gen)
            x = xn
            h = min(2 * h, h_init)
        return xs, gens

    fx, fg = sweep(+1, b)
    bx, bg = sweep(-1, a)
    xs = np.array(bx[::-1] + fx[1:])
    gens = np.array(bg[::-1] + fg[1:])
    defects = np.array([np.linalg.norm(g1 - g0, 2) for g0, g1 in zip(gens[:-1], gens[1:])])
    for x, g in zip(xs, gens):
        defect = float(np.linalg.norm(expi(g) - family.U(float(x)), 2))
        if defect > tol_unit * 10:
            raise StepFailure(f"lift lost consistency at x={x}", x=float(x), defect=defect)
    return LogLift(xb, a0, xs, gens, defects)


def generator_monotone_check(family: GeneratorPath, interval, grid: int = 21) -> dict:
    """Grid minima of ``lambda_min(A')`` and ``lambda_min(D)``; A' > 0 everywhere must give D > 0."""
    xs = np.linspace(*map(float, interval), grid)
    amin = np.array([np.linalg.eigvalsh(family.generator(x, 1))[0] for x in xs])
    dmin = np.array([np.linalg.eigvalsh(compute_D(family, x))[0] for x in xs])
    a_pos, d_pos = bool(np.all(amin > 0)), bool(np.all(dmin > 0))
    return {"x": xs.tolist(), "lambda_min_A_prime": amin.tolist(), "lambda_min_D": dmin.tolist(),
            "A_prime_positive": a_pos, "D_positive": d_pos, "implication_holds": (not a_pos) or d_pos}
