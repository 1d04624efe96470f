"""Solvers for the partially-sparse recovery program.

The central problem is ``min ||u||_1 s.t. ||z - u - Psi_a @ a||_2 <= eta``
over the sparse inputs u and the dense dynamics vector a. Because the input
block of the sensing matrix is the identity, eliminating a with the
range-complement projector P is exact: u solves
``min ||u||_1 s.t. ||P(u - z)||_2 <= eta`` and a follows by least squares
from ``Psi_a @ a = z - u``.

Both the projected problem and the general basis-pursuit-denoising form are
solved by Douglas-Rachford splitting: one proximal step is the l1
soft-threshold, the other the exact projection onto the residual l2-ball
(which degenerates to a hard affine projection when eta = 0). The method is
deterministic, warm-started from zero, and uses fixed step parameters
(``gamma``, ``relax``) recorded in :class:`SolverOptions`.

An exhaustive-support l0 oracle is provided for desk-scale verification.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, IdentifiabilityError
from .sensing import (
    Projector,
    SensingSystem,
    complement_projector,
    numerical_rank,
    robust_svd,
)

__all__ = [
    "SolverOptions",
    "Solution",
    "BpdnResult",
    "L0Result",
    "solve_blind_id",
    "solve_bpdn",
    "solve_l0_oracle",
    "recover_dense_part",
    "soft_threshold",
]

_CHECK_EVERY = 10  # iterations between convergence checks


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances and fixed step parameters for the splitting solver.

    ``eta=None`` means "take the noise bound from the sensing system"
    (zero for bare matrix problems). ``gamma`` and ``relax`` are the
    Douglas-Rachford proximal scale and over-relaxation factor, tuned once
    on unit-scale synthetic instances. ``sparsify_a`` switches the joint
    problem to a fully sparse objective ``||u||_1 + lambda_a * ||a||_1``,
    which drops the full-column-rank requirement on the regressor block.
    The solver has no randomized component: ``deterministic`` is always
    true and exists only to document the contract.
    """

    eta: float | None = None
    feas_tol: float = 1e-8
    obj_tol: float = 1e-6
    max_iters: int = 50_000
    sparsify_a: bool = False
    lambda_a: float = 1.0
    gamma: float = 1.0
    relax: float = 1.8
    deterministic: bool = True

    def __post_init__(self):
        if self.eta is not None and (not np.isfinite(self.eta) or self.eta < 0):
            raise ValueError(f"eta must be nonnegative, got {self.eta}")
        for name in ("feas_tol", "obj_tol", "gamma"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.relax < 2:
            raise ValueError("relax must lie in (0, 2)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.lambda_a < 0:
            raise ValueError("lambda_a must be nonnegative")
        if not self.deterministic:
            raise ValueError("the solver is deterministic by contract")


@dataclass(frozen=True)
class Solution:
    """Recovered inputs and dynamics with solve metadata."""

    u_star: np.ndarray
    a_star: np.ndarray
    residual_norm: float
    objective: float
    status: str  # optimal | max_iters | infeasible
    iterations: int
    kkt_residual: float


@dataclass(frozen=True)
class BpdnResult:
    """Solution of a bare basis-pursuit-denoising problem."""

    x: np.ndarray
    residual_norm: float
    objective: float
    status: str
    iterations: int
    kkt_residual: float


@dataclass(frozen=True)
class L0Result:
    """Minimizer found by exhaustive support enumeration."""

    x: np.ndarray
    support: tuple[int, ...]
    residual_norm: float
    unique: bool
    n_checked: int

    @property
    def support_size(self) -> int:
        return len(self.support)


def soft_threshold(v: np.ndarray, t) -> np.ndarray:
    """Componentwise prox of the (weighted) l1 norm."""
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _kkt_residual_boundary(g: np.ndarray, d: np.ndarray) -> float:
    # stationarity: -g must lie in the normal cone spanned by d (d != 0)
    dd = float(d @ d)
    if dd == 0.0:
        return float(np.max(np.abs(g))) if g.size else 0.0
    t = max(0.0, -float(g @ d) / dd)
    return float(np.max(np.abs(g + t * d)))


def _solve_projected(projector: Projector, z: np.ndarray, eta: float,
                     opts: SolverOptions) -> BpdnResult:
    """DR iteration for ``min ||u||_1 s.t. ||P(u - z)||_2 <= eta``."""
    m = z.shape[0]
    pz = projector.apply(z)
    if float(np.linalg.norm(pz)) <= eta:
        # zero is feasible, hence the unique minimizer
        return BpdnResult(np.zeros(m), float(np.linalg.norm(pz)), 0.0, "optimal", 0, 0.0)

    gamma, relax = opts.gamma, opts.relax
    s = np.zeros(m)
    x = np.zeros(m)
    status = "max_iters"
    kkt = np.inf
    it = 0
    for it in range(1, opts.max_iters + 1):
        x = soft_threshold(s, gamma)
        v = 2.0 * x - s
        pv = projector.apply(v - z)
        nv = float(np.linalg.norm(pv))
        if nv <= eta:
            y = v
        else:
            y = v - (1.0 - eta / nv) * pv
        if it % _CHECK_EVERY == 0 or it == opts.max_iters:
            g = (s - x) / gamma  # in the l1 subdifferential at x by construction
            pxz = projector.apply(x - z)
            feas = float(np.linalg.norm(pxz))
            if eta == 0.0:
                kkt = float(np.max(np.abs(g - projector.apply(g)))) if m else 0.0
            elif feas < eta - opts.feas_tol:
                kkt = float(np.max(np.abs(g))) if m else 0.0
            else:
                kkt = _kkt_residual_boundary(g, pxz)
            if feas <= eta + opts.feas_tol and kkt <= opts.obj_tol:
                status = "optimal"
                break
        s = s + relax * (y - x)
    residual = float(np.linalg.norm(projector.apply(x - z)))
    return BpdnResult(x, residual, float(np.sum(np.abs(x))), status, it, float(kkt))


def _ball_multiplier(resid: np.ndarray, sig_sq: np.ndarray, radius: float) -> float:
    """Root of ``sum(resid_i^2 / (1 + lam*sig_i^2)^2) = radius^2`` for lam > 0.

    The left side is convex and strictly decreasing in lam, so Newton from
    zero converges monotonically from below.
    """
    lam = 0.0
    target = radius * radius
    for _ in range(100):
        denom = 1.0 + lam * sig_sq
        terms = (resid / denom) ** 2
        phi = float(np.sum(terms)) - target
        if phi <= target * 1e-14 + 1e-300:
            break
        dphi = -2.0 * float(np.sum(terms * sig_sq / denom))
        lam -= phi / dphi
    return lam


def _solve_general(m_mat: np.ndarray, b: np.ndarray, eta: float, opts: SolverOptions,
                   weights: np.ndarray | None = None) -> BpdnResult:
    """DR iteration for ``min ||w . x||_1 s.t. ||M x - b||_2 <= eta``."""
    m, d_cols = m_mat.shape
    w = np.ones(d_cols) if weights is None else np.asarray(weights, dtype=float)

    u_svd, sig, vt = robust_svd(m_mat)
    rank = numerical_rank(m_mat, singular_values=sig)
    u_r, sig_r, v_r = u_svd[:, :rank], sig[:rank], vt[:rank].T
    sig_sq = sig_r * sig_r

    c = u_r.T @ b
    b_perp_sq = float(np.sum((b - u_r @ c) ** 2))
    min_resid = math.sqrt(b_perp_sq)
    if min_resid > eta + opts.feas_tol:
        # the ball never meets the range of M: report the least-squares point
        x_ls = v_r @ (c / sig_r) if rank else np.zeros(d_cols)
        return BpdnResult(x_ls, float(np.linalg.norm(m_mat @ x_ls - b)),
                          float(np.sum(w * np.abs(x_ls))), "infeasible", 0, np.inf)
    if float(np.linalg.norm(b)) <= eta:
        return BpdnResult(np.zeros(d_cols), float(np.linalg.norm(b)), 0.0, "optimal", 0, 0.0)
    eta_eff = math.sqrt(max(eta * eta - b_perp_sq, 0.0))

    def project(point):
        y = v_r.T @ point
        resid = sig_r * y - c
        if float(np.linalg.norm(resid)) <= eta_eff:
            return point
        if eta_eff == 0.0:
            y_new = c / sig_r
        else:
            lam = _ball_multiplier(resid, sig_sq, eta_eff)
            y_new = (y + lam * sig_r * c) / (1.0 + lam * sig_sq)
        return point + v_r @ (y_new - y)

    gamma, relax = opts.gamma, opts.relax
    thresh = gamma * w
    s = np.zeros(d_cols)
    x = np.zeros(d_cols)
    status = "max_iters"
    kkt = np.inf
    it = 0
    for it in range(1, opts.max_iters + 1):
        x = soft_threshold(s, thresh)
        y = project(2.0 * x - s)
        if it % _CHECK_EVERY == 0 or it == opts.max_iters:
            g = (s - x) / gamma  # in the weighted-l1 subdifferential at x
            rx = m_mat @ x - b
            feas = float(np.linalg.norm(rx))
            if eta_eff == 0.0:
                kkt = float(np.max(np.abs(g - v_r @ (v_r.T @ g)))) if d_cols else 0.0
            elif feas < eta - opts.feas_tol:
                kkt = float(np.max(np.abs(g))) if d_cols else 0.0
            else:
                kkt = _kkt_residual_boundary(g, m_mat.T @ rx)
            if feas <= eta + opts.feas_tol and kkt <= opts.obj_tol:
                status = "optimal"
                break
        s = s + relax * (y - x)
    residual = float(np.linalg.norm(m_mat @ x - b))
    return BpdnResult(x, residual, float(np.sum(w * np.abs(x))), status, it, float(kkt))


def solve_bpdn(m_mat: np.ndarray, b: np.ndarray, opts: SolverOptions | None = None) -> BpdnResult:
    """Basis pursuit denoising: ``min ||x||_1 s.t. ||b - m_mat @ x||_2 <= eta``.

    ``eta`` comes from the options (zero when unset, giving the equality-
    constrained basis pursuit path). Returns the best iterate with status
    ``max_iters`` if the iteration cap is reached, and ``infeasible`` with
    the least-squares point when no x can meet the bound.
    """
    opts = opts or SolverOptions()
    m_mat = np.atleast_2d(np.asarray(m_mat, dtype=float))
    b = np.asarray(b, dtype=float)
    if b.shape != (m_mat.shape[0],):
        raise ValueError(f"b must have length {m_mat.shape[0]}, got {b.shape}")
    eta = 0.0 if opts.eta is None else float(opts.eta)
    return _solve_general(m_mat, b, eta, opts)


def recover_dense_part(psi_a: np.ndarray, z: np.ndarray, u: np.ndarray,
                       allow_rank_deficient: bool = False) -> np.ndarray:
    """Dynamics vector from ``Psi_a @ a = z - u`` by least squares.

    With full column rank the solution is unique; otherwise the data do not
    pin the dynamics down and an identifiability error is raised (pass
    ``allow_rank_deficient`` to get the minimum-norm solution anyway).
    """
    psi_a = np.asarray(psi_a, dtype=float)
    if psi_a.shape[1] and not allow_rank_deficient:
        if numerical_rank(psi_a) < psi_a.shape[1]:
            raise IdentifiabilityError(
                "regressor matrix is rank deficient; the dynamics vector is not "
                "uniquely determined by the data (rank conditions on the stacked "
                "output matrices Z_k fail)"
            )
    a, *_ = np.linalg.lstsq(psi_a, z - u, rcond=None)
    return a


def solve_blind_id(sys: SensingSystem, opts: SolverOptions | None = None,
                   allow_rank_deficient: bool = False,
                   projector: Projector | None = None) -> Solution:
    """Recover (u, a) from an assembled sensing system.

    Default path: eliminate a with the range-complement projector, solve the
    projected l1 problem in u, then recover a by least squares. With
    ``opts.sparsify_a`` the joint problem is solved directly over (u, a)
    with the weighted objective ``||u||_1 + lambda_a * ||a||_1`` and no rank
    precondition on the regressor block. A precomputed ``projector`` skips
    the internal factorization.
    """
    opts = opts or SolverOptions()
    eta = sys.eta if opts.eta is None else float(opts.eta)
    m, cols = sys.psi_a.shape

    if opts.sparsify_a:
        full = np.hstack([np.eye(m), sys.psi_a])
        weights = np.concatenate([np.ones(m), np.full(cols, opts.lambda_a)])
        res = _solve_general(full, sys.z, eta, opts, weights=weights)
        u, a = res.x[:m], res.x[m:]
        return Solution(u, a, res.residual_norm, res.objective, res.status,
                        res.iterations, res.kkt_residual)

    if projector is None:
        projector = complement_projector(sys, allow_rank_deficient=allow_rank_deficient)
    elif not allow_rank_deficient and projector.rank_removed < cols:
        raise IdentifiabilityError(
            "supplied projector comes from a rank-deficient regressor matrix"
        )
    res = _solve_projected(projector, sys.z, eta, opts)
    a = recover_dense_part(sys.psi_a, sys.z, res.x, allow_rank_deficient=allow_rank_deficient)
    residual = float(np.linalg.norm(sys.z - res.x - sys.psi_a @ a))
    return Solution(res.x, a, residual, res.objective, res.status,
                    res.iterations, res.kkt_residual)


def solve_l0_oracle(m_mat: np.ndarray, b: np.ndarray, eta: float, s_max: int,
                    budget: int = 10 ** 6) -> L0Result:
    """Sparsest solution of ``||b - m_mat @ x|| <= eta`` by support enumeration.

    Enumerates supports of size 0, 1, ... up to ``s_max`` in lexicographic
    order, solving a least-squares problem on each; stops at the first size
    admitting a feasible residual. Ties at that size are broken by smaller
    residual, then lexicographically. ``unique`` is true when every feasible
    same-size solution coincides with the returned vector, which is the
    desk-scale check for unique l0 retrieval.
    """
    m_mat = np.atleast_2d(np.asarray(m_mat, dtype=float))
    b = np.asarray(b, dtype=float)
    m, d_cols = m_mat.shape
    if b.shape != (m,):
        raise ValueError(f"b must have length {m}, got {b.shape}")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    s_max = min(int(s_max), d_cols)
    total = sum(math.comb(d_cols, s) for s in range(s_max + 1))
    if total > budget:
        raise BudgetError(
            f"enumerating supports up to size {s_max} of {d_cols} columns takes "
            f"{total} subsets, over the budget of {budget}"
        )

    n_checked = 0
    for size in range(s_max + 1):
        candidates = []
        for support in itertools.combinations(range(d_cols), size):
            n_checked += 1
            if size == 0:
                resid = float(np.linalg.norm(b))
                coef = np.zeros(0)
            else:
                sub = m_mat[:, support]
                coef, *_ = np.linalg.lstsq(sub, b, rcond=None)
                resid = float(np.linalg.norm(sub @ coef - b))
            if resid <= eta:
                x = np.zeros(d_cols)
                x[list(support)] = coef
                candidates.append((resid, support, x))
        if candidates:
            candidates.sort(key=lambda c: (c[0], c[1]))
            best_resid, best_support, best_x = candidates[0]
            unique = all(np.allclose(best_x, x, atol=1e-9 * max(1.0, float(np.max(np.abs(best_x)))))
                         for _, _, x in candidates[1:])
            return L0Result(best_x, tuple(best_support), best_resid, unique, n_checked)
    raise ValueError(f"no support of size <= {s_max} reaches residual {eta}")
