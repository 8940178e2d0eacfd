"""Adiabaticity criteria, rigorous bounds and exact evolution for N-level Hamiltonians."""
from .bounds import (
    BoundReport,
    BWResult,
    bauer_fike,
    bauer_fike_matrix,
    bound_report,
    brillouin_wigner,
    brillouin_wigner_matrix,
    bw_series,
    dense_series,
    jrs_bound,
    key_bound,
    perturbative_second_order,
    zeno_bound,
    zeno_time,
)
from .errors import (
    AdiabaticityError,
    ConfigError,
    ContinuityError,
    ConvergenceError,
    DegeneracyError,
    DomainError,
    HermiticityError,
    SingularBlockError,
    StepUnderflowError,
    UndefinedArgError,
)
from .frame import (
    AdiabaticFrame,
    CriteriaSeries,
    build_frame,
    condition13,
    condition14,
    count_monotonicity_changes,
    criteria_series,
    generalized_criterion,
    monotonicity_counts,
    standard_criterion,
    two_level_conditions,
)
from .hamiltonian import (
    FAMILIES,
    CyclingLZParams,
    HamiltonianModel,
    InterpolatingParams,
    SchwingerParams,
    TwoLevelParams,
    constant,
    cycling_lz,
    interpolating,
    load_tabulated,
    random_smooth,
    save_tabulated,
    schwinger,
    tabulated,
    two_level,
)
from .propagator import (
    EvolutionResult,
    StueckelbergPrediction,
    evolve,
    landau_zener_p1,
    lz_multipassage,
    propagate,
    rescaled_evolution,
    schwinger_analytic,
    stueckelberg_phase,
    stueckelberg_prediction,
)
from .spectral import (
    BERRY_DYNAMICAL,
    PARALLEL_TRANSPORT,
    EigenCurve,
    GaugeChoice,
    eigencurves,
    gaps,
    pancharatnam,
)

__version__ = "0.1.0"
