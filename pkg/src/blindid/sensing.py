"""Assembly of the structured sensing matrix and the range-complement projector.

The flat measurement vector satisfies ``z = u + Psi_a @ a + w``: the input
block of the sensing matrix is the identity (never materialized), and
``Psi_a`` collects the regressor rows ``I_n (x) z[j][k]^T``. Eliminating the
dense dynamics vector with the orthogonal projector onto ``range(Psi_a)``'s
complement reduces recovery to a standard l1 problem in the inputs alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IdentifiabilityError
from .model import Dataset, Dims, stack_measurements

__all__ = [
    "SensingSystem",
    "Projector",
    "assemble_psi_a_ltv",
    "assemble_psi_a_lti",
    "assemble",
    "complement_projector",
    "numerical_rank",
    "rank_threshold",
    "dump_sensing",
]


def rank_threshold(sigma_max: float, shape: tuple[int, int]) -> float:
    """Singular-value cutoff for numerical rank: max(m, D) * eps * sigma_max.

    Shared by every rank decision in the package (assembly, projector,
    diagnostics) so verdicts cannot disagree across modules.
    """
    return max(shape) * np.finfo(float).eps * sigma_max


def robust_svd(mat: np.ndarray, compute_uv: bool = True):
    """SVD with a gesvd fallback for the occasional gesdd non-convergence."""
    try:
        return np.linalg.svd(mat, full_matrices=False, compute_uv=compute_uv)
    except np.linalg.LinAlgError:
        from scipy.linalg import svd as scipy_svd
        if compute_uv:
            return scipy_svd(mat, full_matrices=False, lapack_driver="gesvd")
        return scipy_svd(mat, compute_uv=False, lapack_driver="gesvd")


def numerical_rank(mat: np.ndarray, singular_values: np.ndarray | None = None) -> int:
    """Numerical rank of ``mat`` under the shared singular-value threshold."""
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    if mat.size == 0:
        return 0
    if singular_values is None:
        singular_values = robust_svd(mat, compute_uv=False)
    if singular_values.size == 0:
        return 0
    return int(np.sum(singular_values > rank_threshold(singular_values[0], mat.shape)))


@dataclass(frozen=True)
class SensingSystem:
    """Assembled sensing problem: dense regressor block, measurements, noise bound.

    The input block is the identity of size ``n*k_f*q`` and is kept implicit;
    ``psi_a`` has ``n^2*k_f`` columns in LTV mode and ``n^2`` in LTI mode.
    """

    dims: Dims
    psi_a: np.ndarray
    z: np.ndarray
    eta: float
    mode: str = "ltv"

    def __post_init__(self):
        m = self.dims.n_measurements
        cols = self.dims.n * self.dims.n * (1 if self.mode == "lti" else self.dims.k_f)
        if self.mode not in ("ltv", "lti"):
            raise ValueError(f"mode must be 'ltv' or 'lti', got {self.mode!r}")
        if self.psi_a.shape != (m, cols):
            raise ValueError(f"psi_a must have shape {(m, cols)}, got {self.psi_a.shape}")
        if self.z.shape != (m,):
            raise ValueError(f"z must have length {m}, got {self.z.shape}")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")


@dataclass(frozen=True)
class Projector:
    """Orthogonal projector onto the complement of ``range(Psi_a)``.

    ``p`` is symmetric and idempotent with ``p @ psi_a = 0``; ``range_basis``
    holds an orthonormal basis of ``range(Psi_a)`` so products with ``p`` can
    be applied as ``v - basis @ (basis.T @ v)`` without forming ``p``.
    """

    p: np.ndarray
    range_basis: np.ndarray

    def apply(self, v: np.ndarray) -> np.ndarray:
        """``p @ v`` via the range basis (exact idempotency, fewer flops)."""
        if self.range_basis.shape[1] == 0:
            return np.array(v, dtype=float, copy=True)
        return v - self.range_basis @ (self.range_basis.T @ v)

    @property
    def rank_removed(self) -> int:
        """Dimension of the projected-away subspace, rank(Psi_a)."""
        return self.range_basis.shape[1]


def assemble_psi_a_ltv(ds: Dataset) -> SensingSystem:
    """Regressor block for the time-varying case.

    Experiment j contributes the block-diagonal stack of
    ``I_n (x) z[j][k]^T`` over transitions k; experiments are stacked
    vertically. Every row has at most n nonzeros, and the n^2-column blocks
    of different transitions touch disjoint row sets.
    """
    dims = ds.dims
    n, k_f, q = dims.n, dims.k_f, dims.q
    psi_a = np.zeros((dims.n_measurements, n * n * k_f))
    eye = np.eye(n)
    for j in range(q):
        for k in range(k_f):
            row0 = j * n * k_f + k * n
            col0 = k * n * n
            psi_a[row0:row0 + n, col0:col0 + n * n] = np.kron(eye, ds.z(j, k))
    return SensingSystem(dims, psi_a, stack_measurements(ds), ds.eta, mode="ltv")


def assemble_psi_a_lti(ds: Dataset) -> SensingSystem:
    """Regressor block for the time-invariant case.

    The per-transition block diagonal collapses: every (j, k) row block is
    ``I_n (x) z[j][k]^T`` over the same n^2 columns.
    """
    dims = ds.dims
    n, k_f, q = dims.n, dims.k_f, dims.q
    psi_a = np.zeros((dims.n_measurements, n * n))
    eye = np.eye(n)
    for j in range(q):
        for k in range(k_f):
            row0 = j * n * k_f + k * n
            psi_a[row0:row0 + n, :] = np.kron(eye, ds.z(j, k))
    return SensingSystem(dims, psi_a, stack_measurements(ds), ds.eta, mode="lti")


def assemble(ds: Dataset, mode: str) -> SensingSystem:
    """Dispatch to the LTV or LTI assembly."""
    if mode == "ltv":
        return assemble_psi_a_ltv(ds)
    if mode == "lti":
        return assemble_psi_a_lti(ds)
    raise ValueError(f"mode must be 'ltv' or 'lti', got {mode!r}")


def complement_projector(sys: SensingSystem, allow_rank_deficient: bool = False) -> Projector:
    """Orthogonal projector onto ``range(psi_a)``'s complement.

    Computed from a singular value decomposition of ``psi_a`` (numerically
    rank-revealing); ``P = I - Q Q^T`` with Q an orthonormal range basis.
    Rank deficiency of ``psi_a`` means the dynamics are not identifiable from
    this data and raises unless ``allow_rank_deficient`` (the projector onto
    the complement of the actual range is still well defined and returned).
    """
    m, cols = sys.psi_a.shape
    if cols == 0:
        return Projector(p=np.eye(m), range_basis=np.zeros((m, 0)))
    u, s, _ = robust_svd(sys.psi_a)
    rank = numerical_rank(sys.psi_a, singular_values=s)
    if rank < cols and not allow_rank_deficient:
        raise IdentifiabilityError(
            f"regressor matrix is rank deficient (rank {rank} < {cols} columns); "
            "the rank conditions on the stacked output matrices Z_k fail -- "
            "run the rank diagnostics and collect more (or richer) experiments"
        )
    basis = u[:, :rank]
    p = np.eye(m) - basis @ basis.T
    return Projector(p=p, range_basis=basis)


def dump_sensing(sys: SensingSystem, directory: str | Path) -> None:
    """Write psi_a and z as CSV for external verification."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.savetxt(directory / "psi_a.csv", sys.psi_a, fmt="%.17g", delimiter=",",
               header=f"psi_a ({sys.mode} mode): {sys.psi_a.shape[0]} rows x {sys.psi_a.shape[1]} cols")
    np.savetxt(directory / "z.csv", sys.z, fmt="%.17g", delimiter=",",
               header="stacked measurement vector z (slot order j-major, then k, then i)")
