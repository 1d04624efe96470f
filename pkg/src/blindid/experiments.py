"""Synthetic experiment generation, Monte Carlo harness, and error metrics.

The generation protocol draws dynamics entries from a scaled standard
normal, perturbs a fixed number of randomly cycled states per experiment
and step with scaled-normal input values, and adds bounded noise (truncated
normal or uniform) scaled by a noise factor. Two complementary metrics
score recovery: the cardinality error rate (false positives plus false
negatives over all input slots) and the RMS magnitude error restricted to
the true nonzero inputs; the dense dynamics part is tracked with a plain
per-entry RMS error.

Reproducibility: every trial uses its own Philox counter-based stream keyed
by ``seed XOR trial`` (normal variates via numpy's ziggurat transform), so
results are bit-identical whether trials run sequentially or in parallel.
The unit noise is drawn before scaling, so sweep cells that share (seed, q)
see identical model/input/noise realizations and differ only in the noise
amplitude -- noise curves are paired comparisons.
"""

from __future__ import annotations

import json
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .model import Dataset, Dims, InputPlan, LtvModel, simulate_dataset
from .sensing import assemble, complement_projector
from .solver import SolverOptions, solve_blind_id

__all__ = [
    "SyntheticConfig",
    "GroundTruth",
    "TrialRecord",
    "MetricsSummary",
    "SweepCell",
    "SweepResult",
    "generate_synthetic",
    "mape_card",
    "armse_nz",
    "run_monte_carlo",
    "sweep",
    "write_sweep_plots",
]

NOISE_DISTRIBUTIONS = ("truncated_normal", "uniform")


@dataclass(frozen=True)
class SyntheticConfig:
    """Protocol knobs for synthetic data generation and Monte Carlo runs.

    ``alpha_a``, ``alpha_u``, ``alpha_w`` scale the dynamics entries, input
    values and noise; ``inputs_per_step`` nonzero inputs hit each experiment
    at each step, targets cycled uniformly over states. ``card_threshold``
    is the detection threshold used by the cardinality metric and is echoed
    in every summary. ``normal_truncation`` records where the truncated
    normal is cut (resampled beyond +-3 by default). ``eta_inflation``
    loosens the noise bound handed to the solver relative to the realized
    noise norm.
    """

    dims: Dims
    alpha_a: float = 1.0
    alpha_u: float = 1.0
    alpha_w: float = 0.0
    noise_dist: str = "truncated_normal"
    inputs_per_step: int = 1
    trials: int = 1
    seed: int = 0
    card_threshold: float = 0.1
    normal_truncation: float = 3.0
    eta_inflation: float = 1.0

    def __post_init__(self):
        for name in ("alpha_a", "alpha_u", "alpha_w"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.noise_dist not in NOISE_DISTRIBUTIONS:
            raise ConfigError(f"noise_dist must be one of {NOISE_DISTRIBUTIONS}")
        if not 1 <= self.inputs_per_step <= self.dims.n:
            raise ConfigError(f"inputs_per_step must lie in 1..{self.dims.n}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.card_threshold <= 0:
            raise ConfigError("card_threshold must be positive")
        if self.normal_truncation <= 0:
            raise ConfigError("normal_truncation must be positive")
        if self.eta_inflation < 1.0:
            raise ConfigError("eta_inflation must be at least 1")

    @property
    def s_u(self) -> int:
        """Planned nonzero input count per trial."""
        return self.inputs_per_step * self.dims.k_f * self.dims.q

    def to_dict(self) -> dict:
        return {
            "n": self.dims.n, "k_f": self.dims.k_f, "q": self.dims.q, "lti": self.dims.lti,
            "alpha_a": self.alpha_a, "alpha_u": self.alpha_u, "alpha_w": self.alpha_w,
            "noise_dist": self.noise_dist, "inputs_per_step": self.inputs_per_step,
            "trials": self.trials, "seed": self.seed, "card_threshold": self.card_threshold,
            "normal_truncation": self.normal_truncation, "eta_inflation": self.eta_inflation,
        }


@dataclass(frozen=True)
class GroundTruth:
    """Flat generating vectors, in the global slot order."""

    u: np.ndarray
    a: np.ndarray


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    # Philox is counter-based and platform-stable; substream key = seed XOR trial
    return np.random.Generator(np.random.Philox(key=np.uint64(seed) ^ np.uint64(trial)))


def _truncated_normal(rng: np.random.Generator, shape, bound: float) -> np.ndarray:
    vals = rng.standard_normal(shape)
    mask = np.abs(vals) > bound
    while mask.any():
        vals[mask] = rng.standard_normal(int(mask.sum()))
        mask = np.abs(vals) > bound
    return vals


def _cycling_targets(rng: np.random.Generator, n: int, n_groups: int, per_group: int) -> np.ndarray:
    """Distinct target states per group, cycling shuffled permutations.

    Consuming whole permutations before reshuffling keeps the target counts
    across all groups balanced to within one.
    """
    pool: deque[int] = deque()
    out = np.empty((n_groups, per_group), dtype=int)
    for g in range(n_groups):
        picked: list[int] = []
        skipped: list[int] = []
        while len(picked) < per_group:
            if not pool:
                pool.extend(int(v) for v in rng.permutation(n))
            candidate = pool.popleft()
            (skipped if candidate in picked else picked).append(candidate)
        pool.extendleft(reversed(skipped))
        out[g] = picked
    return out


def generate_synthetic(cfg: SyntheticConfig, trial: int):
    """One synthetic instance: (model, inputs, dataset, ground truth).

    Deterministic in (cfg.seed, trial). Draw order is fixed -- dynamics,
    initial states, input targets, input values, unit noise -- and the noise
    scale is applied after drawing, so configs differing only in
    ``alpha_w`` share all underlying realizations.
    """
    dims = cfg.dims
    rng = _trial_rng(cfg.seed, trial)
    n_blocks = 1 if dims.lti else dims.k_f

    a_mats = cfg.alpha_a * rng.standard_normal((n_blocks, dims.n, dims.n))
    model = LtvModel(dims, a_mats)
    z0 = rng.standard_normal((dims.q, dims.n))

    n_groups = dims.q * dims.k_f  # group order: experiment-major, then step
    targets = _cycling_targets(rng, dims.n, n_groups, cfg.inputs_per_step)
    values = rng.standard_normal(targets.shape)
    while np.any(values == 0.0):
        values[values == 0.0] = rng.standard_normal(int(np.sum(values == 0.0)))
    values = cfg.alpha_u * values

    entries = {}
    if cfg.alpha_u > 0:
        for g in range(n_groups):
            j, k = divmod(g, dims.k_f)
            for i, value in zip(targets[g], values[g]):
                entries[(j, k, int(i))] = float(value)
    plan = InputPlan(dims, entries)

    if cfg.noise_dist == "truncated_normal":
        unit_noise = _truncated_normal(rng, (dims.q, dims.k_f, dims.n), cfg.normal_truncation)
    else:
        unit_noise = rng.uniform(-1.0, 1.0, (dims.q, dims.k_f, dims.n))
    noise = cfg.alpha_w * unit_noise

    ds = simulate_dataset(model, plan, noise, z0)
    return model, plan, ds, GroundTruth(u=plan.to_vector(), a=model.to_vector())


def mape_card(u_true: np.ndarray, u_hat: np.ndarray, tau: float) -> tuple[float, int, int]:
    """Cardinality error rate of one trial: (FP + FN) / (n*k_f*q).

    A false positive is a recovered magnitude above ``tau`` on a true zero;
    a false negative is a true nonzero recovered at or below ``tau``.
    """
    u_true = np.asarray(u_true, dtype=float)
    u_hat = np.asarray(u_hat, dtype=float)
    if u_true.shape != u_hat.shape:
        raise ValueError(f"length mismatch: {u_true.shape} vs {u_hat.shape}")
    detected = np.abs(u_hat) > tau
    truth = u_true != 0
    fp = int(np.sum(detected & ~truth))
    fn = int(np.sum(~detected & truth))
    return (fp + fn) / u_true.size, fp, fn


def armse_nz(u_pairs, q: int, per_entry: bool = False) -> float:
    """RMS error over the true-nonzero input entries, across trials.

    ``u_pairs`` is a sequence of (u_true, u_hat) pairs, one per trial, all
    with the same nonzero count s. The headline normalization divides the
    summed squared error by T*s*q as the metric is defined; ``per_entry``
    divides by T*s instead (plain per-entry RMS), which removes the extra
    experiment-count factor. Both are reported by the Monte Carlo summary.
    """
    sq_total = 0.0
    s = None
    n_trials = 0
    for u_true, u_hat in u_pairs:
        u_true = np.asarray(u_true, dtype=float)
        u_hat = np.asarray(u_hat, dtype=float)
        nz = u_true != 0
        s_trial = int(np.sum(nz))
        if s is None:
            s = s_trial
        elif s_trial != s:
            raise ValueError("all trials must share the same nonzero count")
        sq_total += float(np.sum((u_true[nz] - u_hat[nz]) ** 2))
        n_trials += 1
    if not n_trials or not s:
        raise ValueError("need at least one trial with a nonzero true input")
    denom = n_trials * s if per_entry else n_trials * s * q
    return float(np.sqrt(sq_total / denom))


@dataclass(frozen=True)
class TrialRecord:
    """Per-trial scores and solve metadata."""

    trial: int
    s_u: int
    mape: float
    fp: int
    fn: int
    sq_err_nz: float
    sq_err_a: float
    solver_status: str
    iterations: int
    rank_conditions_pass: bool
    theorem1_pass: bool
    eta_solver: float

    def to_dict(self) -> dict:
        return {
            "trial": self.trial, "s_u": self.s_u, "mape": self.mape, "fp": self.fp,
            "fn": self.fn, "sq_err_nz": self.sq_err_nz, "sq_err_a": self.sq_err_a,
            "solver_status": self.solver_status, "iterations": self.iterations,
            "rank_conditions_pass": self.rank_conditions_pass,
            "theorem1_pass": self.theorem1_pass, "eta_solver": self.eta_solver,
        }


@dataclass(frozen=True)
class MetricsSummary:
    """Aggregated Monte Carlo metrics with per-trial records."""

    mode: str
    mape_card: float
    armse_nz: float | None
    armse_nz_per_entry: float | None
    armse_a: float
    fp_count: int
    fn_count: int
    failure_fraction: float
    card_threshold: float
    trials: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "mape_card": self.mape_card,
            "armse_nz": self.armse_nz,
            "armse_nz_per_entry": self.armse_nz_per_entry,
            "armse_a": self.armse_a,
            "fp_count": self.fp_count,
            "fn_count": self.fn_count,
            "failure_fraction": self.failure_fraction,
            "card_threshold": self.card_threshold,
            "config": self.config,
            "trials": [t.to_dict() for t in self.trials],
        }

    def metric_values(self) -> dict:
        """Headline scalars, as written to the long-format sweep CSV."""
        return {
            "mape_card": self.mape_card,
            "armse_nz": self.armse_nz,
            "armse_nz_per_entry": self.armse_nz_per_entry,
            "armse_a": self.armse_a,
            "failure_fraction": self.failure_fraction,
        }


def _resolve_mode(cfg: SyntheticConfig, mode: str | None) -> str:
    derived = "lti" if cfg.dims.lti else "ltv"
    if mode is None:
        return derived
    if mode not in ("ltv", "lti"):
        raise ConfigError(f"mode must be 'ltv' or 'lti', got {mode!r}")
    if mode != derived:
        raise ConfigError(f"mode {mode!r} conflicts with dims.lti={cfg.dims.lti}")
    return mode


def _run_trial(cfg: SyntheticConfig, mode: str, trial: int, base_opts: SolverOptions) -> TrialRecord:
    from .diagnostics import check_rank_conditions  # local import to avoid a cycle

    model, plan, ds, truth = generate_synthetic(cfg, trial)
    sys = assemble(ds, mode)
    projector = complement_projector(sys, allow_rank_deficient=True)
    full_rank = projector.rank_removed == sys.psi_a.shape[1]
    checks = check_rank_conditions(ds, mode)
    rank_pass = all(c.passed for c in checks)
    rho_u = plan.s_u / ds.dims.n_measurements
    theorem1_pass = bool(rho_u <= 0.5 and full_rank)

    eta_solver = ds.eta * cfg.eta_inflation
    opts = replace(base_opts, eta=eta_solver)
    sol = solve_blind_id(sys, opts, allow_rank_deficient=True, projector=projector)

    nz = truth.u != 0
    mape, fp, fn = mape_card(truth.u, sol.u_star, cfg.card_threshold)
    sq_nz = float(np.sum((truth.u[nz] - sol.u_star[nz]) ** 2))
    sq_a = float(np.sum((truth.a - sol.a_star) ** 2))
    return TrialRecord(
        trial=trial, s_u=plan.s_u, mape=mape, fp=fp, fn=fn,
        sq_err_nz=sq_nz, sq_err_a=sq_a, solver_status=sol.status,
        iterations=sol.iterations, rank_conditions_pass=rank_pass,
        theorem1_pass=theorem1_pass, eta_solver=eta_solver,
    )


def run_monte_carlo(cfg: SyntheticConfig, mode: str | None = None,
                    solver_options: SolverOptions | None = None,
                    workers: int = 1) -> MetricsSummary:
    """Generate, diagnose, solve, and score ``cfg.trials`` independent trials.

    Trials may run in parallel (``workers``); per-trial seeding makes the
    aggregate identical to a sequential run. Solver non-convergence is
    recorded per trial, never fatal.
    """
    mode = _resolve_mode(cfg, mode)
    base_opts = solver_options or SolverOptions()
    trials = list(range(cfg.trials))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda t: _run_trial(cfg, mode, t, base_opts), trials))
    else:
        records = [_run_trial(cfg, mode, t, base_opts) for t in trials]

    t_count = len(records)
    s = records[0].s_u
    q = cfg.dims.q
    dim_a = cfg.dims.n_dynamics
    sq_nz_total = sum(r.sq_err_nz for r in records)
    sq_a_total = sum(r.sq_err_a for r in records)
    return MetricsSummary(
        mode=mode,
        mape_card=float(np.mean([r.mape for r in records])),
        armse_nz=float(np.sqrt(sq_nz_total / (t_count * s * q))) if s else None,
        armse_nz_per_entry=float(np.sqrt(sq_nz_total / (t_count * s))) if s else None,
        armse_a=float(np.sqrt(sq_a_total / (t_count * dim_a))),
        fp_count=sum(r.fp for r in records),
        fn_count=sum(r.fn for r in records),
        failure_fraction=sum(r.solver_status != "optimal" for r in records) / t_count,
        card_threshold=cfg.card_threshold,
        trials=records,
        config=cfg.to_dict(),
    )


@dataclass(frozen=True)
class SweepCell:
    q: int
    alpha_w: float
    summary: MetricsSummary


@dataclass(frozen=True)
class SweepResult:
    cells: list

    def to_long_rows(self) -> list[tuple]:
        """Long-format rows (q, alpha_w, metric, value), one per cell and metric."""
        rows = []
        for cell in self.cells:
            for metric, value in cell.summary.metric_values().items():
                rows.append((cell.q, cell.alpha_w, metric, value))
        return rows

    def write_csv(self, path: str | Path) -> None:
        lines = ["q,alpha_w,metric,value"]
        for q, alpha_w, metric, value in self.to_long_rows():
            lines.append(f"{q},{alpha_w!r},{metric},{'' if value is None else repr(float(value))}")
        Path(path).write_text("\n".join(lines) + "\n")

    def to_dict(self) -> dict:
        return {"cells": [
            {"q": c.q, "alpha_w": c.alpha_w, "summary": c.summary.to_dict()} for c in self.cells
        ]}

    def cell(self, q: int, alpha_w: float) -> SweepCell:
        for c in self.cells:
            if c.q == q and c.alpha_w == alpha_w:
                return c
        raise KeyError(f"no sweep cell at q={q}, alpha_w={alpha_w}")


def sweep(cfg: SyntheticConfig, q_values, alpha_w_values, mode: str | None = None,
          solver_options: SolverOptions | None = None, workers: int = 1) -> SweepResult:
    """Monte Carlo summaries over a (q, alpha_w) grid.

    Every cell reuses ``cfg`` with dims.q and alpha_w replaced; the shared
    seed pairs realizations across noise levels at fixed q.
    """
    q_values = list(q_values)
    alpha_w_values = list(alpha_w_values)
    if not q_values or not alpha_w_values:
        raise ConfigError("sweep grid must be nonempty")
    cells = []
    for q in q_values:
        dims = Dims(n=cfg.dims.n, k_f=cfg.dims.k_f, q=int(q), lti=cfg.dims.lti)
        for alpha_w in alpha_w_values:
            cell_cfg = replace(cfg, dims=dims, alpha_w=float(alpha_w))
            summary = run_monte_carlo(cell_cfg, mode=mode, solver_options=solver_options,
                                      workers=workers)
            cells.append(SweepCell(q=int(q), alpha_w=float(alpha_w), summary=summary))
    return SweepResult(cells)


def write_sweep_plots(result: SweepResult, directory: str | Path) -> list[Path]:
    """Self-contained SVG line charts: each metric vs q (one line per noise
    level) and vs noise (one line per q)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    q_values = sorted({c.q for c in result.cells})
    w_values = sorted({c.alpha_w for c in result.cells})
    written = []
    for metric in ("mape_card", "armse_nz", "armse_a"):
        for x_axis in ("q", "alpha_w"):
            fig, ax = plt.subplots(figsize=(5, 3.5))
            series = w_values if x_axis == "q" else q_values
            for level in series:
                if x_axis == "q":
                    pts = [(c.q, c.summary.metric_values()[metric]) for c in result.cells
                           if c.alpha_w == level]
                    label = f"alpha_w={level}"
                else:
                    pts = [(c.alpha_w, c.summary.metric_values()[metric]) for c in result.cells
                           if c.q == level]
                    label = f"q={level}"
                pts = [(x, y) for x, y in sorted(pts) if y is not None]
                if pts:
                    ax.plot(*zip(*pts), marker="o", label=label)
            ax.set_xlabel("number of experiments q" if x_axis == "q" else "noise scale alpha_w")
            ax.set_ylabel(metric)
            ax.legend(fontsize=7)
            fig.tight_layout()
            path = directory / f"{metric}_vs_{'q' if x_axis == 'q' else 'noise'}.svg"
            fig.savefig(path, format="svg")
            plt.close(fig)
            written.append(path)
    return written
