"""Dimension-reduced mean field games: solvers, reductions, verifiers."""

from .core import (
    FeatureMap,
    MomentSet,
    ParticleCloud,
    ReductionMap,
    box_moments,
    half_line_moments,
    moments,
    power_feature,
    quadratic_feature,
    quadratic_slice_moments,
    reduce_and_lift,
    wasserstein,
)
from .checks import (
    CheckReport,
    check_abc,
    check_complete_reduce,
    check_control_reduction,
    check_fiber_reduce,
    check_h_monotone,
    check_jacobian_consistency,
    check_monotone,
    check_pair_reduction,
    check_phi_homogeneity,
    check_quadratic_chain,
    check_strong_monotonicity,
)
from .models import (
    ControlsModel,
    FiniteStateModel,
    NoiseModel,
    PowerControlsModel,
    PowerMasterModel,
    QuadraticMasterModel,
    ReducedFiniteModel,
    build_demo_models,
    lookup,
    make_noise_model,
    make_power_controls,
    make_power_master,
)
from .odes import (
    IntegratorSpec,
    ShootingSpec,
    TrajectoryBundle,
    integrate,
    newton_invert,
    newton_invert_batch,
    sample_path,
    secant_root,
    shoot_forward_backward,
)

__version__ = "0.1.0"
