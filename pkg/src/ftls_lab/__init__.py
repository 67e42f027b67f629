"""Numerical laboratory for nonlocal follow-the-leaders traffic.

Simulation of the particle system across a speed-limit jump, construction of
the stationary wave profiles by backward method of steps, subcase
classification, and the two limit profiles (continuum and local) with their
convergence studies.
"""

from .analysis import (
    RegionD,
    StabilityTrace,
    best_fit_profile,
    closest_profile,
    exponential_tail_fit,
    follower,
    generate_distribution,
    ordering_check,
    period_check,
    region_D,
    region_D_membership,
    stability_trace,
)
from .errors import (
    AnchorError,
    BlowUpError,
    CoverageError,
    DomainError,
    FtlsError,
    GridMismatchError,
    IncompatibleAsymptotesError,
    NoProfileError,
    NonConvergenceError,
    NoRootError,
    OutOfRangeError,
    StepSizeError,
    ValidationError,
    WindowTooSmallError,
)
from .experiments import (
    REPRODUCE_TARGETS,
    ExperimentSpec,
    load_schema,
    parse_spec,
    reproduce,
    run,
)
from .limits import (
    LimitProfileQ,
    LimitProfileU,
    averaging_A,
    convergence_study_micro_macro,
    convergence_study_nonlocal_local,
    solve_Q,
    solve_U,
)
from .model import (
    CriticalDensities,
    Kernel,
    ModelParams,
    RoadCondition,
    Stability,
    Subcase,
    SubcaseReport,
    VelocityLaw,
    Verdict,
    asymptotic_roots,
    classify,
    classify_from_fbar,
    critical_density,
    flux,
)
from .profiles import (
    CarChain,
    Profile,
    build_profile,
    equation_residual,
    leader,
    make_grid,
    profile_rhs,
    profile_v_star,
    sample_chain,
    uniform_profile_W,
    z_flat,
)
from .simulate import (
    ParticleState,
    StepDensity,
    Trajectory,
    average_velocity,
    default_dt,
    discrete_density,
    integrate,
    piecewise_density,
    rhs_alternative,
    rhs_main,
    riemann_init,
)
from .tables import ResultTable

__version__ = "0.1.0"
