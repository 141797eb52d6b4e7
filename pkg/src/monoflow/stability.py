"""Cluster projections of ``B(x) = I - U(x)`` and stability certificates for near-kernel vectors.

Every step of the estimate chain (gap ladder, projection derivative bound,
weighted Gram bounds, final constant) is exposed as a separate, checkable
function; :func:`stability_certificate` strings them together.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .crossings import TOL_KERNEL, Crossing, locate_crossings
from .errors import (DegenerateAcrossCircle, EigenvalueOnCircle, HypothesisViolated, LadderInfeasible,
                     PrecheckFailed)
from .family import BoundEstimates, UnitaryFamily, compute_D, dagger, hermitize
from .flow import eigensystem

GAP_GUARD = 1e-12


@dataclass
class ResidualOperator:
    x: float
    B: np.ndarray
    lambdas: np.ndarray  # 1 - e^{i mu_j}
    vectors: np.ndarray


def residual_operator(family: UnitaryFamily, x: float) -> ResidualOperator:
    u = family.U(x)
    phases, z = eigensystem(u)
    return ResidualOperator(x, np.eye(family.dim) - u, 1 - np.exp(1j * phases), z)


def residual_ratio(family: UnitaryFamily, x0: float, phi) -> float:
    phi = np.asarray(phi, dtype=complex)
    norm = np.linalg.norm(phi)
    if norm == 0:
        raise ValueError("phi must be nonzero")
    return float(np.linalg.norm(phi - family.U(x0) @ phi) / norm)


@dataclass
class ClusterProjection:
    x: float
    delta: float
    P: np.ndarray
    included: np.ndarray


def _check_circle(absl, delta, gap_guard):
    near = np.abs(absl - delta) <= gap_guard * max(delta, 1e-300)
    if near.any():
        raise EigenvalueOnCircle(f"|lambda| within {gap_guard} (relative) of delta={delta}",
                                 delta=delta, values=absl[near].tolist())


def spectral_projection(family: UnitaryFamily, x: float, delta: float,
                        gap_guard: float = GAP_GUARD) -> ClusterProjection:
    """Orthogonal projection onto eigenvectors of ``B(x)`` with ``|lambda_j| <= delta``."""
    r = residual_operator(family, x)
    absl = np.abs(r.lambdas)
    _check_circle(absl, delta, gap_guard)
    inc = np.flatnonzero(absl <= delta)
    v = r.vectors[:, inc]
    return ClusterProjection(x, delta, hermitize(v @ dagger(v)), inc)


def projection_derivative(family: UnitaryFamily, x: float, delta: float,
                          gap_guard: float = GAP_GUARD) -> np.ndarray:
    """Kato's formula: ``P' = sum_{in j, out k} (P_j B' P_k + P_k B' P_j) / (lambda_j - lambda_k)``."""
    u, du = family.derivatives(x, 1)
    phases, z = eigensystem(u)
    lam = 1 - np.exp(1j * phases)
    absl = np.abs(lam)
    _check_circle(absl, delta, gap_guard)
    inside, outside = absl < delta, absl > delta
    diff = lam[:, None] - lam[None, :]
    straddle = np.abs(diff[np.ix_(inside, outside)])
    if straddle.size and straddle.min() <= gap_guard:
        raise DegenerateAcrossCircle("degenerate eigenvalue straddles the circle", delta=delta)
    bp = dagger(z) @ (-du) @ z  # B' = -U' in the eigenbasis
    out = np.zeros_like(bp)
    mask = np.outer(inside, outside)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[mask] = (bp / diff)[mask]  # P_j B' P_k / (lambda_j - lambda_k)
        out[mask.T] = (bp / diff.T)[mask.T]  # P_k B' P_j / (lambda_j - lambda_k)
    return z @ out @ dagger(z)


def projection_derivative_bound(family: UnitaryFamily, x: float, delta: float, bounds: BoundEstimates) -> float:
    """``d_max M / min_{in j, out k} |lambda_j - lambda_k|``."""
    r = residual_operator(family, x)
    absl = np.abs(r.lambdas)
    inside, outside = absl < delta, absl > delta
    if not inside.any() or not outside.any():
        return 0.0
    gap = np.abs(r.lambdas[inside][:, None] - r.lambdas[outside][None, :]).min()
    return bounds.d_max * family.dim / gap


@dataclass
class DeltaLadder:
    eps: float
    eps_prime: float
    s: float
    k: int
    delta: float
    gap: tuple[float, float]
    delta_prime: float | None = None
    delta_tilde: float | None = None
    tilde_interval: tuple[float, float] | None = None

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def choose_delta(abs_lambdas, eps: float, eps_prime: float, M: int,
                 d_min: float | None = None, d_max: float | None = None) -> DeltaLadder:
    """Pick the first empty rung ``[eps s^k, eps s^{k+1})``, ``s = (eps'/eps)^{1/(M+1)}``, k = 1..M."""
    absl = np.asarray(abs_lambdas, dtype=float)
    if not 0 < eps < eps_prime:
        raise HypothesisViolated("need 0 < eps < eps'", eps=eps, eps_prime=eps_prime)
    # min |lambda_j| <= eps holds exactly for normal operators; allow rounding
    if not (absl <= eps * (1 + 1e-9) + 1e-15).any():
        raise HypothesisViolated("no |lambda_j| <= eps", eps=eps)
    s = (eps_prime / eps) ** (1.0 / (M + 1))
    ratio = None if d_min is None or d_max is None else d_max / d_min
    if ratio is not None and s <= 1 + 4 * ratio:
        raise LadderInfeasible(f"s = {s:.6g} <= 1 + 4 d_max/d_min = {1 + 4 * ratio:.6g}", s=s,
                               threshold=1 + 4 * ratio)
    for k in range(1, M + 1):
        lo, hi = eps * s ** k, eps * s ** (k + 1)
        if not ((absl >= lo) & (absl < hi)).any():
            break
    else:  # pigeonhole makes this unreachable for len(absl) <= M
        raise HypothesisViolated("every rung occupied; more eigenvalues than M?", M=M)
    ladder = DeltaLadder(eps, eps_prime, s, k, lo, (lo, hi))
    if d_min is not None:
        ladder.delta_prime = 2 * lo / d_min
    if ratio is not None:
        t_lo, t_hi = lo + 2 * lo * ratio, lo * s - 2 * lo * ratio
        ladder.tilde_interval = (t_lo, t_hi)
        ladder.delta_tilde = 0.5 * (t_lo + t_hi)
    return ladder


def stability_constant(M: int, d_min: float, d_max: float) -> float:
    r = d_max / d_min
    return 1 + 4 * M * r * math.sqrt(2 * M * r)


def delta_double_prime(delta_prime: float, bounds: BoundEstimates, reading: str = "printed") -> float:
    """``delta' (2 d_2 + d_max^2)`` as printed; ``reading='short'`` gives ``delta' (d_2 + d_max^2)``."""
    if reading == "printed":
        return delta_prime * (2 * bounds.d_2 + bounds.d_max ** 2)
    if reading == "short":
        return delta_prime * (bounds.d_2 + bounds.d_max ** 2)
    raise ValueError(f"unknown reading {reading!r}")


@dataclass
class WeightedGramCertificate:
    cluster_size: int
    pairwise_max: float
    pairwise_bound: float
    factor: float
    min_ratio: float
    sum_norm_ratio: float
    sum_norm_bound: float
    factor_at_least_half: bool

    @property
    def ok(self) -> bool:
        return (self.pairwise_max <= self.pairwise_bound + 1e-9 and self.min_ratio >= self.factor - 1e-9
                and self.sum_norm_ratio <= self.sum_norm_bound + 1e-9)


def _d_orthonormal(basis, d0):
    g = dagger(basis) @ d0 @ basis
    w, v = np.linalg.eigh(g)
    return basis @ (v / np.sqrt(w)) @ dagger(v)


def weighted_gram_bound(kernel_groups: list[np.ndarray], d0: np.ndarray, d_min: float, d_max: float,
                        delta_pp: float, M: int, tol: float = 1e-9) -> WeightedGramCertificate:
    """Almost-orthogonality in the ``<D0 ., .>`` inner product and its sum-norm consequences.

    ``min_ratio`` is the exact infimum of ``||sum psi_x||^2_D0 / sum ||psi_x||^2_D0``;
    ``sum_norm_ratio`` is an upper bound for ``sum ||psi_x|| / ||sum psi_x||``.
    """
    n = len(kernel_groups)
    qs = [_d_orthonormal(k, d0) for k in kernel_groups]
    pair = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            pair = max(pair, float(np.linalg.norm(dagger(qs[i]) @ d0 @ qs[j], 2)))
    bound = delta_pp / d_min
    if pair > bound + tol:
        raise PrecheckFailed("pairwise D0-almost-orthogonality fails", pairwise=pair, bound=bound)
    factor = 1 - bound * (n - 1)
    q = np.concatenate(qs, axis=1)
    min_ratio = float(np.linalg.eigvalsh(hermitize(dagger(q) @ d0 @ q))[0])
    e = np.concatenate([np.linalg.qr(k)[0] for k in kernel_groups], axis=1)
    smin = float(np.linalg.svd(e, compute_uv=False)[-1])
    ratio = math.sqrt(n) / smin if smin > 0 else math.inf
    return WeightedGramCertificate(n, pair, bound, factor, min_ratio, ratio,
                                   math.sqrt(2 * M * d_max / d_min), factor >= 0.5)


def projection_onto(bases: list[np.ndarray], dim: int, rank_tol: float = 1e-8) -> np.ndarray:
    """Orthogonal projection onto the sum of the column spans (pivoted QR)."""
    if not bases:
        return np.zeros((dim, dim), dtype=complex)
    stacked = np.concatenate(bases, axis=1)
    q, r, _ = sla.qr(stacked, mode="economic", pivoting=True)
    rank = int(np.sum(np.abs(np.diag(r)) > rank_tol))
    q = q[:, :rank]
    return hermitize(q @ dagger(q))


@dataclass
class StabilityReport:
    x0: float
    eps: float
    eps_prime: float
    M: int
    d_min: float
    d_max: float
    d_2: float
    C: float
    hypotheses_hold: bool
    dist_bound: float
    dist_achieved: float
    projection_defect: float
    defect_bound: float
    window_crossings: list[tuple[float, int]]
    P_W: np.ndarray
    ladder: DeltaLadder | None = None
    ladder_status: str = "skipped"
    eps1: float | None = None
    eps2: float | None = None
    cluster_size: int | None = None
    statement_a: dict | None = None
    chain: dict = field(default_factory=dict)
    weighted_gram: WeightedGramCertificate | None = None
    model_case: dict | None = None

    @property
    def dist_ok(self) -> bool:
        return self.dist_achieved <= self.dist_bound + 1e-12

    @property
    def defect_ok(self) -> bool:
        return self.projection_defect <= self.defect_bound + 1e-10

    @property
    def certified(self) -> bool:
        return (self.dist_ok and self.defect_ok and self.hypotheses_hold and self.ladder_status == "ok"
                and all(v["ok"] for v in self.chain.values()))

    def to_dict(self, with_projection: bool = False) -> dict:
        out = {
            "x0": self.x0, "eps": self.eps, "eps_prime": self.eps_prime, "M": self.M,
            "d_min": self.d_min, "d_max": self.d_max, "d_2": self.d_2, "C": self.C,
            "hypotheses_hold": self.hypotheses_hold,
            "dist_bound": self.dist_bound, "dist_achieved": self.dist_achieved, "dist_ok": self.dist_ok,
            "projection_defect": self.projection_defect, "defect_bound": self.defect_bound,
            "defect_ok": self.defect_ok,
            "window_crossings": [{"x": x, "multiplicity": m} for x, m in self.window_crossings],
            "ladder_status": self.ladder_status,
            "ladder": self.ladder.to_dict() if self.ladder else None,
            "eps1": self.eps1, "eps2": self.eps2, "cluster_size": self.cluster_size,
            "statement_a": self.statement_a, "chain": self.chain,
            "weighted_gram": None if self.weighted_gram is None else {
                **self.weighted_gram.__dict__, "ok": self.weighted_gram.ok},
            "model_case": self.model_case, "certified": self.certified,
        }
        if with_projection:
            out["P_W"] = [[[float(z.real), float(z.imag)] for z in row] for row in self.P_W]
        return out


def stability_certificate(family: UnitaryFamily, x0: float, phi, eps_prime: float, bounds: BoundEstimates,
                          tol_kernel: float = TOL_KERNEL, strict: bool = False,
                          reading: str = "printed", crossings: list[Crossing] | None = None,
                          ) -> StabilityReport:
    """Distance of ``x0`` to the crossing set and distance of ``phi`` to ``sum_{|x-x0|<=eps'} W(x)``.

    With ``strict=True`` the certificate is refused (raises) when the
    hypotheses on ``eps, eps'`` or the gap-ladder feasibility fail; otherwise
    the inequalities are still evaluated and the failures are reported.
    """
    phi = np.asarray(phi, dtype=complex)
    m = family.dim
    eps = residual_ratio(family, x0, phi)
    dmin, dmax = bounds.d_min, bounds.d_max
    C = stability_constant(m, dmin, dmax)
    hyp = eps < eps_prime < 1 / C and eps / eps_prime < 1 / C
    if strict and not hyp:
        raise HypothesisViolated("need eps < eps' < 1/C and eps/eps' < 1/C", eps=eps, eps_prime=eps_prime, C=C)

    ro = residual_operator(family, x0)
    absl = np.abs(ro.lambdas)
    ladder, status = None, "skipped"
    if eps > 0 and eps < eps_prime:
        try:
            ladder = choose_delta(absl, eps, eps_prime, m, dmin, dmax)
            status = "ok"
        except LadderInfeasible:
            if strict:
                raise
            status = "infeasible"

    dist_bound = 0.5 * math.pi * eps / dmin
    chord = 2 * math.asin(min(1.0, eps_prime / 2))
    reach = max(eps_prime, chord, dist_bound, ladder.delta_prime if ladder else 0.0)
    half = reach * (1 + 1e-6) + 1e-9
    if crossings is None:
        crossings = locate_crossings(family, (x0 - half, x0 + half), bounds, tol_kernel=tol_kernel)
    dist = min((abs(c.x - x0) for c in crossings), default=math.inf)

    in_w = [c for c in crossings if abs(c.x - x0) <= eps_prime]
    pw = projection_onto([c.kernel_basis for c in in_w], m)
    nphi = np.linalg.norm(phi)
    defect = float(np.linalg.norm(phi - pw @ phi) / nphi)
    bound = C * (eps / eps_prime) ** (1.0 / (m + 1))

    rep = StabilityReport(x0, eps, eps_prime, m, dmin, dmax, bounds.d_2, C, hyp, dist_bound, dist, defect,
                          bound, [(c.x, c.multiplicity) for c in in_w], pw, ladder, status)

    if family.kind == "model_phase":
        near = [c for c in crossings if 2 * abs(math.sin((c.x - x0) / 2)) < eps_prime]
        pm = projection_onto([c.kernel_basis for c in near], m)
        d_model = float(np.linalg.norm(phi - pm @ phi) / nphi)
        rep.model_case = {"defect": d_model, "bound": eps / eps_prime, "ok": d_model <= eps / eps_prime + 1e-10}

    if ladder is None or status != "ok":
        return rep

    r = dmax / dmin
    s, delta, dp = ladder.s, ladder.delta, ladder.delta_prime
    eps1 = 4 / s * r * m
    eps2 = eps1 * math.sqrt(2 * m * r)
    rep.eps1, rep.eps2 = eps1, eps2
    near = [c for c in crossings if abs(c.x - x0) <= dp]
    n_eig = int(np.sum(absl <= delta))
    n_cross = sum(c.multiplicity for c in near)
    rep.statement_a = {"eigenvalues_within_delta": n_eig, "crossings_within_delta_prime": n_cross,
                       "ok": n_eig == n_cross}
    rep.cluster_size = len(near)

    p_delta = spectral_projection(family, x0, delta).P
    lhs = float(np.linalg.norm(phi - p_delta @ phi) / nphi)
    rep.chain["phi_vs_P_delta"] = {"lhs": lhs, "rhs": eps / delta, "ok": lhs <= eps / delta + 1e-10}
    worst = max((float(np.linalg.norm(c.kernel_basis - p_delta @ c.kernel_basis, 2)) for c in near), default=0.0)
    rep.chain["kernels_vs_P_delta"] = {"lhs": worst, "rhs": eps1, "ok": worst <= eps1 + 1e-10}
    pwp = projection_onto([c.kernel_basis for c in near], m)
    lhs = float(np.linalg.norm((np.eye(m) - pwp) @ p_delta, 2))
    rep.chain["P_delta_vs_W_prime"] = {"lhs": lhs, "rhs": eps2, "ok": lhs <= eps2 + 1e-10}
    lhs = float(np.linalg.norm(phi - pwp @ phi) / nphi)
    rep.chain["phi_vs_W_prime"] = {"lhs": lhs, "rhs": eps2 + eps / delta, "ok": lhs <= eps2 + eps / delta + 1e-10}
    if near:
        d0 = compute_D(family, x0)
        dpp = delta_double_prime(dp, bounds, reading)
        try:
            rep.weighted_gram = weighted_gram_bound([c.kernel_basis for c in near], d0, dmin, dmax, dpp, m)
            rep.chain["weighted_gram"] = {"lhs": rep.weighted_gram.min_ratio, "rhs": rep.weighted_gram.factor,
                                          "ok": rep.weighted_gram.ok}
        except PrecheckFailed as exc:
            rep.chain["weighted_gram"] = {"lhs": exc.details["pairwise"], "rhs": exc.details["bound"], "ok": False}
    return rep
