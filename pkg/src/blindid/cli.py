"""Command-line entry point: simulate, identify, diagnose, montecarlo, sweep.

One JSON config document drives every command; a handful of flags override
config fields. Every run writes a ``manifest.json`` holding the fully
resolved config and sha256 checksums of all artifacts, and contains no
timestamps, so rerunning from a manifest reproduces artifacts bit for bit.

Exit codes: 0 success, 1 validation/config error, 2 identifiability failure
(rank conditions on the output matrices), 3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys as _sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diagnostics import DiagnosticsReport, theorem1_check
from .errors import BlindIdError, ConfigError, IdentifiabilityError
from .experiments import (
    SyntheticConfig,
    generate_synthetic,
    run_monte_carlo,
    sweep,
    write_sweep_plots,
)
from .model import Dims, load_dataset, save_dataset
from .sensing import assemble, dump_sensing
from .solver import SolverOptions, solve_blind_id

__all__ = ["RunConfig", "run", "main"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IDENTIFIABILITY = 2
EXIT_SOLVER = 3

COMMANDS = ("simulate", "identify", "diagnose", "montecarlo", "sweep")


@dataclass
class RunConfig:
    """Fully resolved invocation: command, paths, and typed subsections."""

    command: str
    mode: str = "ltv"
    out_dir: Path = Path("out")
    dataset_dir: Path | None = None
    synthetic: SyntheticConfig | None = None
    solver: SolverOptions = field(default_factory=SolverOptions)
    sweep_q: list = field(default_factory=list)
    sweep_alpha_w: list = field(default_factory=list)
    workers: int = 1
    trial: int = 0
    u_sparsity: int | None = None
    dump_sensing_dir: Path | None = None
    plots: bool = False
    coherence: bool = False
    spark_budget: int | None = None

    def resolved_dict(self) -> dict:
        """The config as one JSON-ready document (what the manifest records)."""
        doc = {
            "command": self.command,
            "mode": self.mode,
            "out": str(self.out_dir),
            "workers": self.workers,
            "trial": self.trial,
            "solver": {k: v for k, v in dataclasses.asdict(self.solver).items()},
            "plots": self.plots,
        }
        if self.dataset_dir is not None:
            doc["dataset"] = str(self.dataset_dir)
        if self.synthetic is not None:
            doc["synthetic"] = self.synthetic.to_dict()
        if self.sweep_q or self.sweep_alpha_w:
            doc["sweep"] = {"q_values": list(self.sweep_q),
                            "alpha_w_values": list(self.sweep_alpha_w)}
        if self.u_sparsity is not None:
            doc["u_sparsity"] = self.u_sparsity
        if self.dump_sensing_dir is not None:
            doc["dump_sensing"] = str(self.dump_sensing_dir)
        if self.coherence:
            doc["diagnostics"] = {"coherence": self.coherence, "spark_budget": self.spark_budget}
        return doc


def _build_synthetic(section: dict) -> SyntheticConfig:
    known = {f.name for f in dataclasses.fields(SyntheticConfig)} - {"dims"}
    dims_keys = {"n", "k_f", "q", "lti"}
    unknown = set(section) - known - dims_keys
    if unknown:
        raise ConfigError(f"unknown synthetic config keys: {sorted(unknown)}")
    missing = {"n", "k_f", "q"} - set(section)
    if missing:
        raise ConfigError(f"synthetic config needs dimensions {sorted(missing)}")
    dims = Dims(n=int(section["n"]), k_f=int(section["k_f"]), q=int(section["q"]),
                lti=bool(section.get("lti", False)))
    rest = {k: v for k, v in section.items() if k in known}
    return SyntheticConfig(dims=dims, **rest)


def _build_solver(section: dict) -> SolverOptions:
    known = {f.name for f in dataclasses.fields(SolverOptions)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown solver config keys: {sorted(unknown)}")
    return SolverOptions(**section)


def load_config(args: argparse.Namespace) -> RunConfig:
    """Merge the JSON config (or a manifest) with command-line overrides."""
    doc: dict = {}
    if args.config is not None:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if "config" in doc and "artifacts" in doc:  # replaying a manifest
            doc = doc["config"]

    mode = args.mode or doc.get("mode", "ltv")
    if mode not in ("ltv", "lti"):
        raise ConfigError(f"mode must be 'ltv' or 'lti', got {mode!r}")

    synthetic = None
    if "synthetic" in doc:
        section = dict(doc["synthetic"])
        if args.seed is not None:
            section["seed"] = args.seed
        section.setdefault("lti", mode == "lti")
        if bool(section["lti"]) != (mode == "lti"):
            raise ConfigError("synthetic.lti conflicts with the requested mode")
        synthetic = _build_synthetic(section)
    elif args.command in ("simulate", "montecarlo", "sweep"):
        raise ConfigError(f"command {args.command!r} needs a 'synthetic' config section")

    solver = _build_solver(dict(doc.get("solver", {})))

    sweep_section = doc.get("sweep", {})
    dataset = args.dataset or doc.get("dataset")
    out = args.out or doc.get("out", "out")

    cfg = RunConfig(
        command=args.command,
        mode=mode,
        out_dir=Path(out),
        dataset_dir=Path(dataset) if dataset else None,
        synthetic=synthetic,
        solver=solver,
        sweep_q=[int(v) for v in sweep_section.get("q_values", [])],
        sweep_alpha_w=[float(v) for v in sweep_section.get("alpha_w_values", [])],
        workers=int(doc.get("workers", 1)),
        trial=int(doc.get("trial", 0)),
        u_sparsity=doc.get("u_sparsity"),
        dump_sensing_dir=Path(args.dump_sensing) if args.dump_sensing else None,
        plots=bool(args.plots or doc.get("plots", False)),
        coherence=bool(doc.get("diagnostics", {}).get("coherence", False)),
        spark_budget=doc.get("diagnostics", {}).get("spark_budget"),
    )
    if cfg.command in ("identify", "diagnose") and cfg.dataset_dir is None:
        raise ConfigError(f"command {cfg.command!r} needs a dataset path "
                          "(--dataset or config 'dataset')")
    if cfg.command == "sweep" and (not cfg.sweep_q or not cfg.sweep_alpha_w):
        raise ConfigError("command 'sweep' needs sweep.q_values and sweep.alpha_w_values")
    return cfg


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_manifest(cfg: RunConfig, artifacts: list[Path]) -> Path:
    checksums = {}
    for path in sorted(artifacts):
        rel = path.relative_to(cfg.out_dir).as_posix()
        checksums[rel] = hashlib.sha256(path.read_bytes()).hexdigest()
    manifest = {"command": cfg.command, "config": cfg.resolved_dict(), "artifacts": checksums}
    path = cfg.out_dir / "manifest.json"
    path.write_text(_json_text(manifest))
    return path


def _save_vector_csv(path: Path, vec: np.ndarray, header: str) -> None:
    np.savetxt(path, np.asarray(vec).reshape(-1, 1), fmt="%.17g", delimiter=",", header=header)


def _cmd_simulate(cfg: RunConfig) -> int:
    model, plan, ds, truth = generate_synthetic(cfg.synthetic, cfg.trial)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, out)
    truth_dir = out / "truth"
    truth_dir.mkdir(exist_ok=True)
    _save_vector_csv(truth_dir / "u_true.csv", truth.u,
                     "generating input vector, flat slot order (j-major, then k, then i)")
    _save_vector_csv(truth_dir / "a_true.csv", truth.a,
                     "generating dynamics vector, one n*n row-major block per transition")
    rows = [[j, k, i, v] for (j, k, i), v in sorted(plan.entries.items())]
    with open(truth_dir / "inputs.csv", "w") as fh:
        fh.write("# sparse input entries\nj,k,i,value\n")
        for j, k, i, v in rows:
            fh.write(f"{j},{k},{i},{v!r}\n")
    artifacts = [out / "dataset.json", out / "snapshots.csv",
                 truth_dir / "u_true.csv", truth_dir / "a_true.csv", truth_dir / "inputs.csv"]
    _write_manifest(cfg, artifacts)
    print(f"simulated dataset bundle written to {out} "
          f"(n={ds.dims.n}, k_f={ds.dims.k_f}, q={ds.dims.q}, eta={ds.eta:.6g})")
    return EXIT_OK


def _cmd_identify(cfg: RunConfig) -> int:
    ds = load_dataset(cfg.dataset_dir)
    sys_ = assemble(ds, cfg.mode)
    if cfg.dump_sensing_dir is not None:
        dump_sensing(sys_, cfg.dump_sensing_dir)
    sol = solve_blind_id(sys_, cfg.solver)

    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    eta_used = sys_.eta if cfg.solver.eta is None else cfg.solver.eta
    doc = {
        "status": sol.status,
        "objective": sol.objective,
        "residual_norm": sol.residual_norm,
        "kkt_residual": sol.kkt_residual,
        "iterations": sol.iterations,
        "eta": eta_used,
        "mode": cfg.mode,
        "u_star": [float(v) for v in sol.u_star],
        "a_star": [float(v) for v in sol.a_star],
    }
    (out / "solution.json").write_text(_json_text(doc))
    n = ds.dims.n
    blocks = sol.a_star.reshape(-1, n, n)
    np.savetxt(out / "dynamics_hat.csv", blocks.reshape(-1, n), fmt="%.17g", delimiter=",",
               header=(f"recovered dynamics matrices: {blocks.shape[0]} blocks of {n} rows "
                       "stacked by transition k; each block is one n-by-n matrix"))
    _write_manifest(cfg, [out / "solution.json", out / "dynamics_hat.csv"])
    print(f"identify: status={sol.status} objective={sol.objective:.6g} "
          f"residual={sol.residual_norm:.3e} iterations={sol.iterations}")
    if sol.status != "optimal":
        return EXIT_SOLVER
    return EXIT_OK


def _render_report(report: DiagnosticsReport) -> str:
    lines = [f"diagnostics ({report.mode} mode)"]
    width = 44
    def row(label, value, passed=None):
        mark = "" if passed is None else ("  [pass]" if passed else "  [FAIL]")
        lines.append(f"  {label:<{width}} {value}{mark}")
    for check in [report.count_check, *report.per_step_ranks,
                  *( [report.lti_stacked_rank] if report.lti_stacked_rank else [] )]:
        if check is not None:
            row(check.name, f"{check.rank} (need {check.required})", check.passed)
    row("regressor block full column rank", report.psi_a_full_rank, report.psi_a_full_rank)
    if report.rho_u is not None:
        row("nonzero-input fraction rho_u", f"{report.rho_u:.4g} (need <= 0.5)",
            report.rho_u <= 0.5)
        row("unique-recovery certificate", report.theorem1_pass, report.theorem1_pass)
    if report.mu is not None:
        row("mutual coherence of [I | Psi_a]", f"{report.mu:.6g}")
        row("coherence sparsity bound (1+1/mu)/2", f"{report.mcc_bound:.6g}")
    if report.spark is not None:
        kind = "exact" if report.spark.exact else "lower bound"
        row(f"spark of [I | Psi_a] ({kind})", report.spark.value)
    return "\n".join(lines)


def _cmd_diagnose(cfg: RunConfig) -> int:
    ds = load_dataset(cfg.dataset_dir)
    s_u = cfg.u_sparsity
    truth_file = cfg.dataset_dir / "truth" / "u_true.csv"
    if s_u is None and truth_file.exists():
        u_true = np.loadtxt(truth_file, delimiter=",")
        s_u = int(np.sum(u_true != 0))
    report = theorem1_check(ds, s_u, cfg.mode, with_coherence=cfg.coherence,
                            spark_budget=cfg.spark_budget)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(_json_text(report.to_dict()))
    _write_manifest(cfg, [out / "report.json"])
    print(_render_report(report))
    if not report.psi_a_full_rank or not report.rank_conditions_pass:
        failing = ", ".join(
            f"{c.name}: rank {c.rank} < {c.required}" for c in report.failing_checks()
        ) or "regressor block rank deficient"
        print(f"identifiability failure -- rank conditions on the output matrices: {failing}")
        return EXIT_IDENTIFIABILITY
    return EXIT_OK


def _cmd_montecarlo(cfg: RunConfig) -> int:
    summary = run_monte_carlo(cfg.synthetic, mode=cfg.mode, solver_options=cfg.solver,
                              workers=cfg.workers)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(_json_text(summary.to_dict()))
    trial_lines = ["trial,s_u,mape,fp,fn,sq_err_nz,sq_err_a,solver_status,iterations,"
                   "rank_conditions_pass,theorem1_pass,eta_solver"]
    for r in summary.trials:
        trial_lines.append(
            f"{r.trial},{r.s_u},{r.mape!r},{r.fp},{r.fn},{r.sq_err_nz!r},{r.sq_err_a!r},"
            f"{r.solver_status},{r.iterations},{r.rank_conditions_pass},{r.theorem1_pass},"
            f"{r.eta_solver!r}")
    (out / "trials.csv").write_text("\n".join(trial_lines) + "\n")
    _write_manifest(cfg, [out / "metrics.json", out / "trials.csv"])
    print(f"montecarlo: T={cfg.synthetic.trials} mape_card={summary.mape_card:.4g} "
          f"armse_nz={summary.armse_nz} armse_a={summary.armse_a:.4g} "
          f"failures={summary.failure_fraction:.2g}")
    return EXIT_OK


def _cmd_sweep(cfg: RunConfig) -> int:
    result = sweep(cfg.synthetic, cfg.sweep_q, cfg.sweep_alpha_w, mode=cfg.mode,
                   solver_options=cfg.solver, workers=cfg.workers)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    result.write_csv(out / "sweep.csv")
    (out / "summary.json").write_text(_json_text(result.to_dict()))
    artifacts = [out / "sweep.csv", out / "summary.json"]
    if cfg.plots:
        artifacts.extend(write_sweep_plots(result, out))
    _write_manifest(cfg, artifacts)
    print(f"sweep: {len(result.cells)} cells "
          f"({len(cfg.sweep_q)} q-values x {len(cfg.sweep_alpha_w)} noise levels) -> {out}")
    return EXIT_OK


def run(cfg: RunConfig) -> int:
    """Execute one resolved command, returning the process exit code."""
    handler = {
        "simulate": _cmd_simulate,
        "identify": _cmd_identify,
        "diagnose": _cmd_diagnose,
        "montecarlo": _cmd_montecarlo,
        "sweep": _cmd_sweep,
    }[cfg.command]
    return handler(cfg)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blindid",
        description="identify time-varying dynamics and sparse unknown inputs "
                    "from repeated-experiment output data",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON config document (or a manifest to replay)")
    parser.add_argument("--seed", type=int, help="override synthetic.seed")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--mode", choices=("ltv", "lti"), help="dynamics mode")
    parser.add_argument("--dataset", help="dataset bundle directory (identify/diagnose)")
    parser.add_argument("--dump-sensing", dest="dump_sensing",
                        help="also write the assembled sensing matrix and z as CSV")
    parser.add_argument("--plots", action="store_true", help="write SVG charts (sweep)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        return run(cfg)
    except IdentifiabilityError as exc:
        print(f"identifiability failure: {exc}", file=_sys.stderr)
        return EXIT_IDENTIFIABILITY
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=_sys.stderr)
        return EXIT_CONFIG
    except BlindIdError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
