"""MFS solvers for Laplace and Stokes particle suspensions."""

from .errors import (
    DegenerateGeometryError,
    DomainError,
    InvalidArgumentError,
    MfsolveError,
    NumericalError,
    OverlapError,
    PlacementError,
    PointSetFormatError,
    SingularPairError,
)
from .evaluator import EvaluatorConfig, eval_field, eval_with_self_correction
from .geometry import (
    Cluster,
    Ellipsoid,
    NodeSet,
    Particle,
    Shape,
    Sphere,
    ellipsoid_grid,
    fibonacci_sphere_nodes,
    grow_cluster,
    load_point_set,
    make_particle,
    pair_distance,
    transform_particle,
)
from .solvers import (
    BlockSystemContext,
    NetLoad,
    ProblemKind,
    RigidMotion,
    Solution,
    SolveReport,
    build_context,
    evaluate_solution,
    solve,
    solve_capacitance,
    solve_elastance,
    solve_mobility,
    solve_resistance,
)
from .analysis import (
    ConvergenceRecord,
    convergence_sweep,
    extract_matrix,
    r_acc,
    surface_residual,
    two_way_error,
)

__version__ = "0.1.0"
