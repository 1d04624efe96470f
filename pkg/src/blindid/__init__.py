"""Blind identification of fully observed discrete-time LTV systems.

Recovers the time-varying dynamics matrices and the sparse unknown inputs
of a fully observed linear system from repeated-experiment output data, by
assembling a structured sensing problem, solving its partially sparse l1
relaxation, and certifying recoverability through rank, spark, coherence,
null-space and restricted-isometry checks.
"""

from .diagnostics import (
    DiagnosticsReport,
    NspResult,
    RankCheck,
    RipResult,
    SparkResult,
    StabilityInputs,
    check_rank_conditions,
    mcc_bound,
    mutual_coherence,
    nsp_check,
    partial_nsp_check,
    partial_rip_constant,
    rip_constant_bruteforce,
    spark_bruteforce,
    stability_bounds,
    theorem1_check,
)
from .errors import BlindIdError, BudgetError, ConfigError, IdentifiabilityError
from .experiments import (
    GroundTruth,
    MetricsSummary,
    SweepResult,
    SyntheticConfig,
    TrialRecord,
    armse_nz,
    generate_synthetic,
    mape_card,
    run_monte_carlo,
    sweep,
)
from .model import (
    Dataset,
    Dims,
    InputPlan,
    LtvModel,
    flat_index,
    load_dataset,
    save_dataset,
    simulate_dataset,
    simulate_step,
    stack_measurements,
)
from .sensing import (
    Projector,
    SensingSystem,
    assemble,
    assemble_psi_a_lti,
    assemble_psi_a_ltv,
    complement_projector,
    dump_sensing,
    numerical_rank,
)
from .solver import (
    BpdnResult,
    L0Result,
    Solution,
    SolverOptions,
    recover_dense_part,
    solve_blind_id,
    solve_bpdn,
    solve_l0_oracle,
)

__version__ = "0.1.0"
