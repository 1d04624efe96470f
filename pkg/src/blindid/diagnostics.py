"""Executable certificates for sparse-recovery and identifiability conditions.

Each checker turns one recovery condition into a decision procedure:
column-rank of the regressor block and the per-step output-matrix rank
conditions it is equivalent to, the input-sparsity fraction bound, mutual
coherence and its spark lower bound, exact spark by subset enumeration,
restricted-isometry constants, the null space property (via sign-pattern
linear programs), their "partial" variants on the projected identity block,
and the stability bounds for compressible signals.

Brute-force checkers take an explicit subset-evaluation budget and raise
rather than silently approximate; they are meant for desk-scale matrices.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import BudgetError
from .model import Dataset
from .sensing import SensingSystem, assemble, complement_projector, numerical_rank

__all__ = [
    "RankCheck",
    "SparkResult",
    "RipResult",
    "NspResult",
    "DiagnosticsReport",
    "StabilityInputs",
    "mutual_coherence",
    "mcc_bound",
    "spark_bruteforce",
    "check_rank_conditions",
    "rip_constant_bruteforce",
    "nsp_check",
    "partial_rip_constant",
    "partial_nsp_check",
    "stability_bounds",
    "theorem1_check",
]

RIP_RECOVERY_LIMIT = math.sqrt(2.0) - 1.0


@dataclass(frozen=True)
class RankCheck:
    """One rank condition on the measured data."""

    name: str
    time_step: int | None
    rank: int | None
    required: int
    passed: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "time_step": self.time_step, "rank": self.rank,
                "required": self.required, "passed": self.passed}


@dataclass(frozen=True)
class SparkResult:
    """Smallest number of linearly dependent columns, or a verified lower bound."""

    value: int
    exact: bool
    n_checked: int

    def to_dict(self) -> dict:
        return {"value": self.value, "exact": self.exact, "n_checked": self.n_checked}


@dataclass(frozen=True)
class RipResult:
    """Restricted isometry constant of a given order with the recovery verdict."""

    delta: float
    order: int
    lemma_pass: bool  # delta < sqrt(2) - 1, the unique-recovery threshold at order 2s
    worst_support: tuple[int, ...]


@dataclass(frozen=True)
class NspResult:
    """Null space property verdict with the worst mass ratio and a witness on failure."""

    holds: bool
    worst_ratio: float
    witness: np.ndarray | None
    worst_support: tuple[int, ...] | None


@dataclass(frozen=True)
class DiagnosticsReport:
    """Identifiability certificate for one dataset/mode pair."""

    mode: str
    s_u: int | None
    rho_u: float | None
    psi_a_full_rank: bool
    per_step_ranks: list = field(default_factory=list)
    lti_stacked_rank: RankCheck | None = None
    count_check: RankCheck | None = None
    mu: float | None = None
    mcc_bound: float | None = None
    spark: SparkResult | None = None
    theorem1_pass: bool | None = None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "s_u": self.s_u,
            "rho_u": self.rho_u,
            "psi_a_full_rank": self.psi_a_full_rank,
            "per_step_ranks": [c.to_dict() for c in self.per_step_ranks],
            "lti_stacked_rank": self.lti_stacked_rank.to_dict() if self.lti_stacked_rank else None,
            "count_check": self.count_check.to_dict() if self.count_check else None,
            "mu": self.mu,
            "mcc_bound": self.mcc_bound,
            "spark": self.spark.to_dict() if self.spark else None,
            "theorem1_pass": self.theorem1_pass,
        }

    @property
    def rank_conditions_pass(self) -> bool:
        checks = list(self.per_step_ranks)
        if self.lti_stacked_rank is not None:
            checks.append(self.lti_stacked_rank)
        if self.count_check is not None:
            checks.append(self.count_check)
        return all(c.passed for c in checks)

    def failing_checks(self) -> list[RankCheck]:
        checks = list(self.per_step_ranks)
        if self.lti_stacked_rank is not None:
            checks.append(self.lti_stacked_rank)
        if self.count_check is not None:
            checks.append(self.count_check)
        return [c for c in checks if not c.passed]


@dataclass(frozen=True)
class StabilityInputs:
    """Constants for the recovery-error bounds of the projected problem.

    ``beta1``/``beta2`` depend on the restricted isometry constant of the
    projected identity block and must be supplied by the caller; no closed
    form is hard-coded. ``sigma_s`` is the best (s-r)-sparse l1
    approximation error of the true sparse part, ``c1`` the spectral norm of
    the input block and ``c2`` that of the regressor pseudoinverse.
    """

    beta1: float
    beta2: float
    eta: float
    sigma_s: float
    s: int
    r: int
    c1: float
    c2: float

    def __post_init__(self):
        for name in ("beta1", "beta2", "eta", "sigma_s", "c1", "c2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.r > self.s:
            raise ValueError("the dense dimension r cannot exceed the total sparsity s")


def mutual_coherence(m_mat: np.ndarray) -> float:
    """Largest absolute normalized inner product between distinct columns."""
    m_mat = np.atleast_2d(np.asarray(m_mat, dtype=float))
    if m_mat.shape[1] < 2:
        raise ValueError("mutual coherence needs at least two columns")
    norms = np.linalg.norm(m_mat, axis=0)
    if np.any(norms == 0):
        raise ValueError("matrix has a zero column; coherence is undefined")
    gram = np.abs((m_mat / norms).T @ (m_mat / norms))
    np.fill_diagonal(gram, 0.0)
    return float(min(gram.max(), 1.0))


def mcc_bound(mu: float) -> float:
    """Sparsity level below which l0/l1 solutions coincide: (1 + 1/mu) / 2."""
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"mutual coherence must lie in [0, 1], got {mu}")
    if mu == 0.0:
        return math.inf
    return 0.5 * (1.0 + 1.0 / mu)


def spark_bruteforce(m_mat: np.ndarray, budget: int = 10 ** 6) -> SparkResult:
    """Smallest dependent column-subset size by enumeration.

    With numerical rank r every subset of r+1 columns is dependent, so only
    sizes up to r need enumeration; a full-column-rank matrix has no
    dependent subset and returns ncols+1 by convention. If the budget runs
    out before size s starts, all smaller sizes were verified independent
    and (s, exact=False) is returned as a certified lower bound.
    """
    m_mat = np.atleast_2d(np.asarray(m_mat, dtype=float))
    _, d_cols = m_mat.shape
    rank = numerical_rank(m_mat)
    if rank == d_cols:
        return SparkResult(d_cols + 1, True, 0)

    n_checked = 0
    # size 1: a dependent single column is a zero column
    norms = np.linalg.norm(m_mat, axis=0)
    n_checked += d_cols
    if np.any(norms == 0):
        return SparkResult(1, True, n_checked)

    for size in range(2, rank + 1):
        n_subsets = math.comb(d_cols, size)
        if n_checked + n_subsets > budget:
            return SparkResult(size, False, n_checked)
        if size == 2:
            # dependent pair == parallel columns; vectorized via the coherence Gram
            gram = np.abs((m_mat / norms).T @ (m_mat / norms))
            np.fill_diagonal(gram, 0.0)
            n_checked += n_subsets
            if gram.max() >= 1.0 - d_cols * np.finfo(float).eps:
                return SparkResult(2, True, n_checked)
            continue
        for support in itertools.combinations(range(d_cols), size):
            n_checked += 1
            if numerical_rank(m_mat[:, support]) < size:
                return SparkResult(size, True, n_checked)
    # every subset of size <= rank independent; any rank+1 columns are dependent
    return SparkResult(rank + 1, True, n_checked)


def check_rank_conditions(ds: Dataset, mode: str) -> list[RankCheck]:
    """Persistency-of-excitation rank conditions on the output matrices.

    LTV: each regressor-step matrix Z_k (n x q), k = 0..k_f-1, must be full
    row rank, which needs q >= n experiments. LTI: the horizontally stacked
    [Z_0 ... Z_{k_f-1}] must be full row rank, which needs k_f*q >= n.
    """
    n, k_f, q = ds.dims.n, ds.dims.k_f, ds.dims.q
    checks = []
    if mode == "ltv":
        checks.append(RankCheck("experiment count q >= n", None, q, n, q >= n))
        for k in range(k_f):
            rank = numerical_rank(ds.z_mat(k))
            checks.append(RankCheck(f"Z_{k} full row rank", k, rank, n, rank == n))
    elif mode == "lti":
        checks.append(RankCheck("sample count k_f*q >= n", None, k_f * q, n, k_f * q >= n))
        stacked = np.hstack([ds.z_mat(k) for k in range(k_f)])
        rank = numerical_rank(stacked)
        checks.append(RankCheck("[Z_0 ... Z_{k_f-1}] full row rank", None, rank, n, rank == n))
    else:
        raise ValueError(f"mode must be 'ltv' or 'lti', got {mode!r}")
    return checks


def rip_constant_bruteforce(m_mat: np.ndarray, s: int, budget: int = 10 ** 6) -> RipResult:
    """Restricted isometry constant of order s by exhausting column subsets.

    For each size-s subset the Gram spectrum gives the local isometry
    defect max(lam_max - 1, 1 - lam_min); eigenvalue interlacing makes
    size-exactly-s subsets sufficient. The ``lemma_pass`` flag compares the
    constant against sqrt(2) - 1, the threshold that certifies unique
    l1 recovery when the constant is of order 2s.
    """
    m_mat = np.atleast_2d(np.asarray(m_mat, dtype=float))
    _, d_cols = m_mat.shape
    if not 1 <= s <= d_cols:
        raise ValueError(f"order s must lie in 1..{d_cols}, got {s}")
    n_subsets = math.comb(d_cols, s)
    if n_subsets > budget:
        raise BudgetError(f"RIP order {s} on {d_cols} columns takes {n_subsets} subsets, "
                          f"over the budget of {budget}")
    if s == 1:
        sq_norms = np.sum(m_mat * m_mat, axis=0)
        worst = int(np.argmax(np.abs(sq_norms - 1.0)))
        delta = float(np.abs(sq_norms - 1.0)[worst])
        return RipResult(delta, s, delta < RIP_RECOVERY_LIMIT, (worst,))

    delta = 0.0
    worst: tuple[int, ...] = ()
    for support in itertools.combinations(range(d_cols), s):
        sub = m_mat[:, support]
        eigs = np.linalg.eigvalsh(sub.T @ sub)
        local = max(float(eigs[-1] - 1.0), float(1.0 - eigs[0]))
        if local > delta:
            delta, worst = local, support
    return RipResult(delta, s, delta < RIP_RECOVERY_LIMIT, worst)


def _max_masked_mass(null_basis: np.ndarray, support: tuple[int, ...]) -> tuple[float, np.ndarray]:
    """max of ||x_S||_1 over null-space vectors with ||x||_1 <= 1.

    One linear program per sign pattern of the support entries: variables
    are the null-space coordinates c and per-entry bounds t with
    |N c| <= t, sum t <= 1, maximizing the signed mass on S.
    """
    d_cols, nullity = null_basis.shape
    best_val, best_x = 0.0, np.zeros(d_cols)
    ident = np.eye(d_cols)
    for signs in itertools.product((1.0, -1.0), repeat=len(support)):
        obj = np.zeros(nullity + d_cols)
        obj[:nullity] = -(np.asarray(signs) @ null_basis[list(support), :])
        # constraints: N c - t <= 0, -N c - t <= 0, sum t <= 1
        a_ub = np.block([
            [null_basis, -ident],
            [-null_basis, -ident],
            [np.zeros((1, nullity)), np.ones((1, d_cols))],
        ])
        b_ub = np.zeros(2 * d_cols + 1)
        b_ub[-1] = 1.0
        bounds = [(None, None)] * nullity + [(0, None)] * d_cols
        res = linprog(obj, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
        if res.status != 0:
            raise RuntimeError(f"sign-pattern LP failed: {res.message}")
        if -res.fun > best_val:
            best_val = -res.fun
            best_x = null_basis @ res.x[:nullity]
    return best_val, best_x


def nsp_check(m_mat: np.ndarray, s: int, budget: int = 10 ** 6) -> NspResult:
    """Null space property of order s: every null vector keeps under half its
    l1 mass on every size-s support (strictly).

    Maximizes the masked-mass ratio per support over the null space via
    sign-pattern linear programs (2^s per support). A trivial null space
    makes the property hold vacuously. On failure the witness is a null
    vector (normalized to unit l1 norm) with at least half its mass on the
    reported support.
    """
    m_mat = np.atleast_2d(np.asarray(m_mat, dtype=float))
    _, d_cols = m_mat.shape
    if not 1 <= s <= d_cols:
        raise ValueError(f"order s must lie in 1..{d_cols}, got {s}")
    n_lps = math.comb(d_cols, s) * (2 ** s)
    if n_lps > budget:
        raise BudgetError(f"NSP order {s} on {d_cols} columns takes {n_lps} linear programs, "
                          f"over the budget of {budget}")

    _, sig, vt = np.linalg.svd(m_mat)
    rank = numerical_rank(m_mat, singular_values=sig)
    if rank == d_cols:
        return NspResult(True, 0.0, None, None)
    null_basis = vt[rank:].T  # d_cols x nullity, orthonormal columns

    strict_margin = 64 * np.finfo(float).eps
    worst_ratio, worst_support, witness = 0.0, None, None
    for support in itertools.combinations(range(d_cols), s):
        val, x = _max_masked_mass(null_basis, support)
        if val > worst_ratio:
            worst_ratio, worst_support, witness = val, support, x
    holds = worst_ratio < 0.5 - strict_margin
    if holds:
        witness = None
        worst_support = None
    elif witness is not None:
        mass = float(np.sum(np.abs(witness)))
        if mass > 0:
            witness = witness / mass
    return NspResult(holds, worst_ratio, witness, worst_support)


def partial_rip_constant(sys: SensingSystem, s_minus_r: int, budget: int = 10 ** 6) -> RipResult:
    """Restricted isometry constant of the projected identity block.

    Eliminating the dense dynamics block leaves the matrix P (the
    range-complement projector applied to the identity input block); its RIP
    constant of order s-r governs partially sparse recovery.
    """
    projector = complement_projector(sys)
    return rip_constant_bruteforce(projector.p, s_minus_r, budget)


def partial_nsp_check(sys: SensingSystem, s_minus_r: int, budget: int = 10 ** 6) -> NspResult:
    """Null space property of order s-r for partially sparse recovery.

    Input directions whose image lies in the regressor range are exactly the
    null space of the projected identity block P, so the partial property is
    the plain property of P.
    """
    projector = complement_projector(sys)
    return nsp_check(projector.p, s_minus_r, budget)


def stability_bounds(inp: StabilityInputs) -> tuple[float, float]:
    """Recovery-error bounds for the sparse and dense solution parts.

    bound_u = beta1*eta + beta2*sigma_s/sqrt(s-r) on the sparse part;
    bound_a = c2*(2*eta + c1*bound_u) on the dense part recovered by least
    squares from the residual.
    """
    order = inp.s - inp.r
    if order == 0:
        if inp.sigma_s > 0:
            raise ValueError("s == r with a nonzero sparse approximation error is undefined")
        bound_u = inp.beta1 * inp.eta
    else:
        bound_u = inp.beta1 * inp.eta + inp.beta2 * inp.sigma_s / math.sqrt(order)
    bound_a = inp.c2 * (2.0 * inp.eta + inp.c1 * bound_u)
    return bound_u, bound_a


def theorem1_check(ds: Dataset, u_true_sparsity: int | None, mode: str,
                   with_coherence: bool = False,
                   spark_budget: int | None = None) -> DiagnosticsReport:
    """Certificate for unique partially-sparse recovery on this dataset.

    Passes iff the nonzero-input fraction is at most one half and the
    regressor block has full column rank; the per-step output rank
    conditions (the data-level reading of that rank requirement) are always
    reported. Coherence/spark of the full sensing matrix [I | Psi_a] are
    optional extras, spark within an explicit enumeration budget.
    """
    sys = assemble(ds, mode)
    checks = check_rank_conditions(ds, mode)  # count check first, rank checks after
    cols = sys.psi_a.shape[1]
    full_rank = numerical_rank(sys.psi_a) == cols

    count_check = checks[0]
    per_step = checks[1:] if mode == "ltv" else []
    stacked = checks[1] if mode == "lti" else None

    rho_u = None
    theorem1_pass = None
    if u_true_sparsity is not None:
        if not 0 <= u_true_sparsity <= ds.dims.n_measurements:
            raise ValueError("input sparsity out of range")
        rho_u = u_true_sparsity / ds.dims.n_measurements
        theorem1_pass = bool(rho_u <= 0.5 and full_rank)

    mu = mcc = None
    spark = None
    if with_coherence or spark_budget is not None:
        full_mat = np.hstack([np.eye(ds.dims.n_measurements), sys.psi_a])
        if with_coherence:
            mu = mutual_coherence(full_mat)
            mcc = mcc_bound(mu)
        if spark_budget is not None:
            spark = spark_bruteforce(full_mat, budget=spark_budget)

    return DiagnosticsReport(
        mode=mode,
        s_u=u_true_sparsity,
        rho_u=rho_u,
        psi_a_full_rank=full_rank,
        per_step_ranks=per_step,
        lti_stacked_rank=stacked,
        count_check=count_check,
        mu=mu,
        mcc_bound=mcc,
        spark=spark,
        theorem1_pass=theorem1_pass,
    )
