"""Monte Carlo solution of degenerate-elliptic boundary value problems.

The package simulates the diffusion attached to a second-order operator
L = b . grad + (1/2) trace(sigma sigma^T grad^2) and turns path functionals
into estimates of boundary-value-problem solutions, exit-time transforms,
Green's operators, boundary regularity evidence, and invariant measures.
Polynomial coefficients are handled exactly (Lie brackets, generators,
certificates); everything stochastic is reproducible from (seed, path index).
"""

from .polyfield import (
    MultiPoly,
    PolyVectorField,
    lie_bracket,
    sigma_columns,
    diffusion_matrix,
    apply_generator,
    to_hormander_form,
    BracketEntry,
    BracketReport,
    check_hormander_fields,
    check_parabolic_hormander,
)
from .model import (
    INTERIOR,
    BOUNDARY,
    EXTERIOR,
    MODEL_SCHEMA,
    Domain,
    DiffusionModel,
    Exhaustion,
    model_from_dict,
    load_model,
    model_file_sha256,
    boundary_sample,
)
from .simulate import (
    SimConfig,
    HistGrid,
    ExitRecord,
    TrajectoryBatch,
    KIND_NAMES,
    step_em,
    simulate_stopped,
    simulate_stopped_reference,
    exit_time_triple,
    dump_exits_csv,
    dump_paths_csv,
    apply_thread_count,
)
from .estimate import (
    MCEstimate,
    estimate_u_stoc,
    estimate_exit_moment,
    estimate_exp_moment,
    estimate_survival,
    survival_curve,
    EscapeReport,
    estimate_escape_prob,
    PhiFunctional,
    PhiReport,
    estimate_phi_functional,
    GreenEstimate,
    estimate_green,
    dynkin_residual,
    PDEResidualReport,
    pde_residual_grid,
)
from .boundary import (
    RegularityProbe,
    probe_regularity,
    GaussianWitness,
    construct_sphere_witness,
    NicenessCertificate,
    certify_nice_point,
    TailReport,
    diagnose_uid,
    diagnose_uip,
    EscapeBeforeExitReport,
    diagnose_ce,
)
from .ergodic import (
    LyapunovCertificate,
    certify_nonexplosive,
    CycleConfig,
    CycleSample,
    run_cycles,
    ChainMeasure,
    embedded_chain_stationary,
    InvariantMeasureEstimate,
    estimate_invariant_measure,
    RecurrenceReport,
    classify_recurrence,
    ExpExitReport,
    estimate_exp_exit_bound,
)

__version__ = "0.1.0"
