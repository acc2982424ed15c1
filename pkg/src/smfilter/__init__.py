"""Set-membership nonlinear filtering with ellipsoidal bounds.

Core pieces: validated ellipsoids and ball/sphere samplers, an SDP model
with a Clarabel interior-point backend, sampled-SDP bounding of
linearization remainders (boundary-only for range-bearing tracking), the
SDP prediction/update filter loop, bootstrap particle-filter baselines, and
a reproducible benchmark harness.
"""

__version__ = "0.1.0"

from .conic import (
    ClarabelBackend,
    ConicProgram,
    LmiBlock,
    MatrixVar,
    ScalarVar,
    SolveReport,
    SolverOptions,
)
from .dynamics import (
    DynamicsModel,
    RangeBearingMap,
    RemainderEval,
    make_cv_tracking_model,
    make_linear_model,
    make_offset_range_bearing,
    measurement_remainder,
    process_remainder,
    reduced_measurement_remainder,
    remainder,
    wrap_angle,
)
from .ellipsoids import (
    CholeskyFactor,
    Ellipsoid,
    affine_image,
    cholesky,
    contains,
    make_ellipsoid,
    point_ellipsoid,
    sample_in_ellipsoid,
    sample_unit_ball,
    sample_unit_sphere,
)
from .errors import (
    BoundaryNotApplicable,
    ConfigError,
    DimensionMismatch,
    InfeasiblePrediction,
    InfeasibleUpdate,
    IntervalBlowup,
    NotPositiveDefinite,
    OnSensorRadial,
    OutOfBall,
    RejectionStall,
    SingularTransform,
    SmFilterError,
    SolverFailure,
    UnknownVariable,
    WeightCollapse,
)
from .filtering import (
    FilterState,
    LmiAssembly,
    StepDiagnostics,
    assemble_prediction,
    assemble_update,
    predict_step,
    run_filter,
    solve_assembled,
    update_step,
)
from .particles import (
    NoiseHypothesis,
    ParticleCloud,
    confidence_band,
    pf_estimate,
    pf_init,
    pf_reweight,
    pf_step,
    systematic_resample,
    truncated_gaussian_hypothesis,
    uniform_hypothesis,
)
from .remainder import (
    BoundaryApplicability,
    Interval,
    SamplePlan,
    bound_remainder,
    bound_remainder_interval,
    box_trace_ellipsoid,
    check_boundary_applicable,
    min_trace_ellipsoid,
    radial_line_constants,
)
from .scenario import (
    NoiseLawConfig,
    ScenarioConfig,
    TrialRecord,
    cv_q_matrix,
    error_curves,
    load_scenario,
    simulate_trial,
    trial_rng,
    with_overrides,
)
