"""CBF-QP collision avoidance for planar robot teams, with deadlock
prediction, detection, contact-graph enumeration and provably-safe
resolution."""

from .core import (
    RobotState,
    SafetyParams,
    Scenario,
    constraint_coefficients,
    nominal_control,
    pairwise_safety,
    unit_vector,
    vec2,
)
from .qp import (
    ConstraintRow,
    ConstraintSet,
    KKTCertificate,
    QPSolution,
    active_single_multiplier,
    build_constraints,
    solve_cbf_qp,
    verify_kkt,
)
from .simulate import Event, SimConfig, SimTrace, export_trace, load_trace, run, step
from .predict import (
    PhaseTimeline,
    ThreeRobotCanonical,
    TwoRobotCanonical,
    beta_plus_static,
    beta_plus_timed,
    find_t1,
    find_t2,
    nominal_distance_two,
    phase2_distance,
    phase3_closed_form,
    three_robot_beta_plus_static,
    three_robot_find_t1,
    three_robot_nominal_distance,
    three_robot_phase2_closed_form,
    three_robot_timeline,
    two_robot_timeline,
)
from .deadlock import (
    Category,
    DeadlockCertificate,
    DeadlockMonitor,
    DeadlockThresholds,
    classify_three_robot,
    construct_three_robot_witness,
    construct_two_robot_witness,
    deadlock_multipliers,
    detect_deadlock,
    membership,
    system_deadlock,
    zero_measure_residual,
)
from .contact_graphs import (
    ContactGraph,
    EmbeddingResult,
    EnumerationReport,
    check_realizability,
    count_admissible,
    enumerate_candidates,
    lower_bound,
    upper_bound,
)
from .resolve import (
    ResolutionPhase,
    ResolutionReport,
    SupervisorState,
    phase2_three_robot,
    phase2_two_robot,
    run_resolution,
    supervise_step,
)
from .scenario import (
    ScenarioBundle,
    builtin_canonical,
    default_s1,
    default_s2,
    generate_canonical,
    load_scenario_file,
    parse_scenario,
    save_scenario_file,
)

__version__ = "0.1.0"
