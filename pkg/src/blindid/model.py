"""State-space data model for repeated experiments on a discrete-time LTV system.

An experiment j evolves as ``z[k+1] = A[k] @ z[k] + u[k] + w[k]`` with the
state fully measured at every step. This module holds the dynamics model,
the measured snapshots, the sparse input plan, forward simulation, and the
stacking that turns an experiment set into one flat measurement vector.

Index conventions (used identically by every module)
-----------------------------------------------------
Experiments ``j = 0..q-1``, transitions ``k = 0..k_f-1``, states
``i = 0..n-1``, all zero-based.

* Measurement/input/noise vectors have length ``n * k_f * q`` and are the
  column-major vectorization of the stacked experiment matrices: column j of
  the stack is experiment j's trajectory, so the flat slot for entry
  ``(j, k, i)`` is ``j*n*k_f + k*n + i``. Slot ``(j, k, i)`` of the
  measurement vector holds ``z[j][k+1][i]`` (successor states only; the
  initial states ``z[j][0]`` are regressors and never measurements), while
  the same slot of the input and noise vectors holds ``u[j][k][i]`` and
  ``w[j][k][i]``. Sharing slots is what makes the input sensing map the
  identity.
* The dynamics vector concatenates one block of ``n*n`` values per
  transition (a single block in LTI mode), in row-major order within each
  block: slot ``k*n*n + i*n + l`` holds ``A[k][i, l]``. Row-major is the
  order the regressor rows ``I_n (x) z[k]^T`` contract against, and is
  numpy's natural C-order reshape.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

__all__ = [
    "Dims",
    "LtvModel",
    "Dataset",
    "InputPlan",
    "flat_index",
    "simulate_step",
    "simulate_dataset",
    "stack_measurements",
    "save_dataset",
    "load_dataset",
]


@dataclass(frozen=True)
class Dims:
    """Problem dimensions: states n, transitions k_f, experiments q."""

    n: int
    k_f: int
    q: int
    lti: bool = False

    def __post_init__(self):
        for name in ("n", "k_f", "q"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")

    @property
    def n_measurements(self) -> int:
        """Length of the stacked measurement/input/noise vectors."""
        return self.n * self.k_f * self.q

    @property
    def n_dynamics(self) -> int:
        """Length of the flat dynamics vector (n^2 per transition, or n^2 once in LTI mode)."""
        return self.n * self.n if self.lti else self.n * self.n * self.k_f


def flat_index(dims: Dims, j: int, k: int, i: int) -> int:
    """Flat slot of entry (experiment j, transition k, state i).

    Valid for the measurement vector (where it addresses ``z[j][k+1][i]``)
    and for the input and noise vectors (where it addresses the step-k value).
    """
    if not (0 <= j < dims.q and 0 <= k < dims.k_f and 0 <= i < dims.n):
        raise IndexError(f"index (j={j}, k={k}, i={i}) out of range for {dims}")
    return j * dims.n * dims.k_f + k * dims.n + i


@dataclass(frozen=True)
class LtvModel:
    """The sequence of n-by-n dynamics matrices shared by all experiments.

    ``a_mats`` has shape ``(k_f, n, n)`` in LTV mode and ``(1, n, n)`` in LTI
    mode (the single matrix is logically repeated at every transition).
    """

    dims: Dims
    a_mats: np.ndarray

    def __post_init__(self):
        mats = np.asarray(self.a_mats, dtype=float)
        n, k_f = self.dims.n, self.dims.k_f
        if mats.ndim == 2:
            mats = mats[None, :, :]
        if mats.shape[1:] != (n, n):
            raise ValueError(f"dynamics matrices must be {n}x{n}, got {mats.shape[1:]}")
        if self.dims.lti:
            if mats.shape[0] not in (1, k_f):
                raise ValueError("LTI model takes one matrix (or k_f identical copies)")
            if mats.shape[0] == k_f and not np.all(mats == mats[0]):
                raise ValueError("LTI model requires identical matrices at every step")
            mats = mats[:1]
        elif mats.shape[0] != k_f:
            raise ValueError(f"expected {k_f} dynamics matrices, got {mats.shape[0]}")
        if not np.all(np.isfinite(mats)):
            raise ValueError("dynamics matrices must be finite")
        object.__setattr__(self, "a_mats", mats)

    def a(self, k: int) -> np.ndarray:
        """Dynamics matrix for transition k."""
        if not 0 <= k < self.dims.k_f:
            raise IndexError(f"transition {k} out of range")
        return self.a_mats[0] if self.dims.lti else self.a_mats[k]

    def to_vector(self) -> np.ndarray:
        """Flat dynamics vector in the global block/row-major order."""
        return self.a_mats.reshape(-1).copy()

    @classmethod
    def from_vector(cls, dims: Dims, vec: np.ndarray) -> "LtvModel":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (dims.n_dynamics,):
            raise ValueError(f"dynamics vector must have length {dims.n_dynamics}, got {vec.shape}")
        n_blocks = 1 if dims.lti else dims.k_f
        return cls(dims, vec.reshape(n_blocks, dims.n, dims.n))


@dataclass(frozen=True)
class Dataset:
    """All measured snapshots of an experiment set plus the noise bound.

    ``snapshots[j, k]`` is the state of experiment j at time k, for
    ``k = 0..k_f`` (one more snapshot per experiment than transitions).
    ``eta`` bounds the l2 norm of the stacked noise vector.
    """

    dims: Dims
    snapshots: np.ndarray
    eta: float = 0.0

    def __post_init__(self):
        snaps = np.asarray(self.snapshots, dtype=float)
        expected = (self.dims.q, self.dims.k_f + 1, self.dims.n)
        if snaps.shape != expected:
            raise ValueError(f"snapshots must have shape {expected}, got {snaps.shape}")
        if not np.all(np.isfinite(snaps)):
            raise ValueError("snapshots must be finite")
        if not np.isfinite(self.eta) or self.eta < 0:
            raise ValueError(f"eta must be a nonnegative scalar, got {self.eta}")
        object.__setattr__(self, "snapshots", snaps)
        object.__setattr__(self, "eta", float(self.eta))

    def z(self, j: int, k: int) -> np.ndarray:
        """State of experiment j at time k."""
        return self.snapshots[j, k]

    def z_mat(self, k: int) -> np.ndarray:
        """The n-by-q matrix Z_k of all experiment states at time k."""
        return self.snapshots[:, k, :].T


@dataclass(frozen=True)
class InputPlan:
    """Sparse unknown-input schedule: (experiment, step, state) -> value.

    The entry count is the input sparsity s_u; zero values are rejected so
    that s_u always equals the l0 norm of the flat input vector.
    """

    dims: Dims
    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        checked = {}
        for (j, k, i), value in self.entries.items():
            if not (0 <= j < self.dims.q and 0 <= k < self.dims.k_f and 0 <= i < self.dims.n):
                raise ValueError(f"input index (j={j}, k={k}, i={i}) out of range")
            value = float(value)
            if not np.isfinite(value):
                raise ValueError(f"input value at (j={j}, k={k}, i={i}) must be finite")
            if value == 0.0:
                raise ValueError(f"input entry at (j={j}, k={k}, i={i}) must be nonzero")
            checked[(int(j), int(k), int(i))] = value
        object.__setattr__(self, "entries", checked)

    @property
    def s_u(self) -> int:
        """Number of nonzero input values."""
        return len(self.entries)

    def to_vector(self) -> np.ndarray:
        """Flat input vector of length n*k_f*q."""
        u = np.zeros(self.dims.n_measurements)
        for (j, k, i), value in self.entries.items():
            u[flat_index(self.dims, j, k, i)] = value
        return u

    def to_array(self) -> np.ndarray:
        """Inputs as a (q, k_f, n) array."""
        return self.to_vector().reshape(self.dims.q, self.dims.k_f, self.dims.n)

    @classmethod
    def from_vector(cls, dims: Dims, vec: np.ndarray) -> "InputPlan":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (dims.n_measurements,):
            raise ValueError(f"input vector must have length {dims.n_measurements}")
        arr = vec.reshape(dims.q, dims.k_f, dims.n)
        entries = {
            (j, k, i): arr[j, k, i]
            for j, k, i in zip(*np.nonzero(arr))
        }
        return cls(dims, entries)


def simulate_step(a_k: np.ndarray, z_k: np.ndarray, u_k: np.ndarray, w_k: np.ndarray) -> np.ndarray:
    """One transition: ``A[k] @ z + u + w``."""
    a_k = np.asarray(a_k, dtype=float)
    z_k, u_k, w_k = (np.asarray(v, dtype=float) for v in (z_k, u_k, w_k))
    if z_k.ndim != 1 or a_k.shape != (z_k.shape[0],) * 2 or u_k.shape != z_k.shape \
            or w_k.shape != z_k.shape:
        raise ValueError(
            f"shape mismatch: A {a_k.shape}, z {z_k.shape}, u {u_k.shape}, w {w_k.shape}"
        )
    return a_k @ z_k + u_k + w_k


def simulate_dataset(
    model: LtvModel,
    inputs: InputPlan,
    noise: np.ndarray | None,
    z0: np.ndarray,
    eta: float | None = None,
) -> Dataset:
    """Forward-simulate all experiments and collect every snapshot.

    ``noise`` is a (q, k_f, n) array of per-step noise vectors (None for
    noiseless), ``z0`` the (q, n) initial states. The dataset's eta is the
    exact l2 norm of the stacked noise, the tightest bound consistent with
    the realized noise; pass ``eta`` to record a looser bound instead.
    """
    dims = model.dims
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (dims.q, dims.n):
        raise ValueError(f"z0 must have shape {(dims.q, dims.n)}, got {z0.shape}")
    if not np.all(np.isfinite(z0)):
        raise ValueError("initial states must be finite")
    if noise is None:
        noise = np.zeros((dims.q, dims.k_f, dims.n))
    noise = np.asarray(noise, dtype=float)
    if noise.shape != (dims.q, dims.k_f, dims.n):
        raise ValueError(f"noise must have shape {(dims.q, dims.k_f, dims.n)}")
    u_arr = inputs.to_array()

    snaps = np.empty((dims.q, dims.k_f + 1, dims.n))
    snaps[:, 0, :] = z0
    with np.errstate(over="ignore", invalid="ignore"):  # finiteness checked below
        for k in range(dims.k_f):
            snaps[:, k + 1, :] = snaps[:, k, :] @ model.a(k).T + u_arr[:, k, :] + noise[:, k, :]
    if not np.all(np.isfinite(snaps)):
        raise OverflowError("simulation produced non-finite state values")

    realized = float(np.linalg.norm(noise.reshape(-1)))
    if eta is None:
        eta = realized
    elif eta < realized:
        raise ValueError(f"eta override {eta} is below the realized noise norm {realized}")
    return Dataset(dims, snaps, eta)


def stack_measurements(ds: Dataset) -> np.ndarray:
    """Flat measurement vector: successor states only, in the global slot order."""
    return ds.snapshots[:, 1:, :].reshape(-1).copy()


_SNAPSHOT_HEADER = (
    "snapshots: one row per measured state vector; rows ordered by experiment j=0..q-1 "
    "(outer) then time k=0..k_f (inner); columns are the state entries z_i, i=0..n-1"
)


def save_dataset(ds: Dataset, directory: str | Path) -> None:
    """Write a dataset bundle: dataset.json (dims, eta) + snapshots.csv."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header = {
        "n": ds.dims.n,
        "k_f": ds.dims.k_f,
        "q": ds.dims.q,
        "lti": ds.dims.lti,
        "eta": ds.eta,
    }
    (directory / "dataset.json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    rows = ds.snapshots.reshape(-1, ds.dims.n)
    np.savetxt(directory / "snapshots.csv", rows, fmt="%.17g", delimiter=",",
               header=_SNAPSHOT_HEADER)


def load_dataset(directory: str | Path) -> Dataset:
    """Read a dataset bundle written by :func:`save_dataset`."""
    directory = Path(directory)
    header = json.loads((directory / "dataset.json").read_text())
    dims = Dims(n=header["n"], k_f=header["k_f"], q=header["q"], lti=header["lti"])
    rows = np.loadtxt(directory / "snapshots.csv", delimiter=",", ndmin=2)
    return Dataset(dims, rows.reshape(dims.q, dims.k_f + 1, dims.n), eta=header["eta"])
