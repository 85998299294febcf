"""fpmfrac: 2D fragile-points solver with interface debonding.

Meshfree Galerkin engine over polygonal partitions with discontinuous,
point-based linear trial functions. Interior faces are glued by an
incomplete interior penalty flux; a continuum-damage debonding law on the
flux drives crack initiation and growth without remeshing or new DOFs.

Typical use::

    from fpmfrac import load_mesh, Material, InterfaceMaterial
    from fpmfrac.assembly import Discretization, DirichletBC
    from fpmfrac import solver

    part = load_mesh("plate.fpmmesh")
    disc = Discretization(part, Material(E=10.0, nu=0.0),
                          InterfaceMaterial(t_c=1.0, G_c=0.2, lam=1.0),
                          dirichlet=[...])
    states = solver.run_schedule(disc, solver.SolverConfig(schedule=[...]))

or drive everything from a config file through :mod:`fpmfrac.cli`.
"""

from .model import (
    BoundaryFace,
    InteriorFace,
    InterfaceMaterial,
    Material,
    MeshError,
    Partition,
    Subdomain,
    characteristic_length,
    elasticity_matrix,
    load_mesh,
    parse_mesh,
)
from .interface import (
    BrittlenessError,
    InterfaceState,
    SofteningConstants,
    accumulate_dissipation,
    conjugate_delta,
    damage_tangent,
    damaged_flux,
    energy_norm,
    jump_and_average,
    penalty_tensor,
    softening_constants,
    undamaged_flux,
    update_damage,
)
from .shapefun import (
    IsolatedPointError,
    ShapeTables,
    SupportGraph,
    gradient_operator,
    rebuild_support,
    shape_matrix,
    strain_matrix,
)
from .assembly import Discretization, DirichletBC, TractionBC
from .solver import (
    CrackGrowthReport,
    NonConvergenceError,
    PeakResult,
    SolverConfig,
    SolverError,
    StepState,
    crack_growth_simulation,
    find_peak_load,
    initial_state,
    insert_crack,
    nr_iterate,
    run_schedule,
)

__version__ = "0.1.0"
