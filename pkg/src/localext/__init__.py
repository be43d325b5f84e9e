"""Whitney-type extension operators and local-approximation functionals on
regular subsets of R^n, with a verification harness that measures the
comparison constants of the underlying inequalities at desk scale."""

from .grid import (
    CellSet,
    Cube,
    Grid,
    GridFunction,
    cube_cells,
    load_cellset,
    load_gridfunction,
    lu_norm,
    measure,
    save_cellset,
    save_gridfunction,
)
from .regular_set import RegularSet, SetSpec, estimate_regularity, generate_set, nearest_point
from .whitney import (
    PartitionOfUnity,
    WhitneyDecomposition,
    distance_field,
    neighbors,
    partition_of_unity,
    whitney_decompose,
)
from .quasicube import QuasiCubeFamily, auto_epsilon, build_quasicubes, default_epsilon
from .approx import (
    Polynomial,
    ProjectorMap,
    assign_PQ,
    local_best_approx,
    multi_indices,
    normalized_local_approx,
    projector,
)
from .extension import ExtensionOperator, build_extension_operator, extend, extend_norm_check
from .functionals import (
    RadiusLadder,
    SpaceParams,
    generalized_sharp,
    hl_maximal,
    kp_modulus,
    modulus_continuity,
    sharp_maximal,
    trace_seminorms,
    wholespace_norms,
    zero_extend,
)

__version__ = "0.1.0"
