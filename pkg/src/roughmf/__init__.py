"""Rough-path driven McKean-Vlasov simulation and cocycle verification."""

from .controlled import (
    ControlledPath,
    Func2,
    compose,
    controlled_distance,
    sewing_constant,
)
from .grids import TimeGrid
from .measures import (
    EmpiricalMeasure,
    ScalarFunc,
    TestFunctionFamily,
    default_test_family,
    dp_bracket,
    flat_metric_bound,
    moment,
    topology_equivalence_probe,
    wasserstein_p,
)
from .meanfield import (
    FrozenLawConfig,
    MeasureCurve,
    feynman_kac_duality,
    semigroup_check,
    simulate_frozen_law,
    stability_check,
    weak_solution_residual,
)
from .models import (
    MeanFieldModel,
    build_model,
    covariance,
    eks_coefficients,
    eks_gaussian_model,
    landau_coefficients,
    landau_model,
    psd_sqrt,
)
from .cocycle import (
    FlowRun,
    JointState,
    cocycle_defect,
    continuity_probe,
    joint_flow,
    wong_zakai_run,
)
from .rde import (
    CoefficientField,
    RdeSolution,
    doss_sussmann_solve,
    flow_jacobian,
    linear_coefficients,
    solve_backward,
    solve_driftless,
    solve_linear_sigma,
    stability_probe,
)
from .roughpath import (
    ITO,
    STRAT,
    NoisePath,
    RoughPath,
    brownian_lift,
    dyadic_approximation,
    load_rough_path,
    rough_distance,
    save_rough_path,
    shift,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
