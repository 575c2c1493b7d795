"""mrplift: hybrid path-lifting of rotation matrices to modified Rodrigues parameters."""

from .attitude import (
    AngularVelocity,
    InertiaTensor,
    Mrp,
    MRP_INFINITY,
    NORTH_POLE,
    RotationMatrix,
    SOUTH_POLE,
    UnitQuaternion,
    geodesic_quat_distance,
    mrp_from_quat,
    mrp_kinematics_matrix,
    mrp_to_rotation,
    quat_to_rotation,
    rotation_to_quats,
    shadow,
    shadow_mrp_from_quat,
    skew,
    stereo,
    stereo_inv,
)
from .closed_loop import (
    ControllerSpec,
    EquivalenceReport,
    PlantParams,
    StabilityTarget,
    X1State,
    X2State,
    check_equivalence,
    controller_torque,
    default_controller,
    evaluate_arc_stability,
    h1_origin_target,
    h2_origin_target,
    make_h1,
    make_h2,
    stability_evidence,
    step_halving_error,
    x1_initial,
    x2_from_x1,
    zero_controller,
)
from .errors import (
    ConfigError,
    ContractViolationError,
    InvalidInitialStateError,
    InvalidStateError,
    OutOfDomainError,
    SimulationBlowupError,
    SingularMrpError,
    StructuralMismatchError,
)
from .hybrid import (
    HybridArc,
    HybridSystem,
    HybridTime,
    HybridTimeDomain,
    SolverConfig,
    is_complete,
    simulate,
    time_projection,
)
from .lifting import (
    LiftOutput,
    LiftParams,
    LiftState,
    LiftStreamFilter,
    in_flow_set,
    in_jump_Dl,
    in_jump_Dm,
    init_lift_state,
    lift_jump,
    lift_output,
    make_lift_system,
    phi_select,
    quat_set_distance,
    verify_lift_arc,
)
from .trajectories import (
    ConstantRotation,
    PiecewiseConstantOmega,
    PrincipalRamp,
    SampledRotation,
    rotation_about,
)

__version__ = "0.1.0"
