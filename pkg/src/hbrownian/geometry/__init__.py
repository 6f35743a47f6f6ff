from .catalog import CATALOG_EXAMPLES, CatalogError, make_manifold, make_potential, make_system
from .manifolds import (
    ChartQuadrature,
    Cylinder,
    Ellipsoid,
    EmbeddedManifold,
    Flat,
    ImplicitSurface,
    Paraboloid,
    Sphere,
    TorusConstraint,
)
from .ops import (
    gauss_ricci_residual,
    gradient_diffusion_fields,
    h_gradient_and_hessian,
    invariant_report,
    nabla_X,
    second_fundamental_norms,
)
from .potentials import Combination, Height, Potential, QuadraticRadial, Rotation, Zero
from .systems import FlatFieldSystem, LineSinCos, SDESystem
