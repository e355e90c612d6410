"""Conservative integrators for polynomial Hamiltonian PDEs u_t = D dH/du.

Densities are declared symbolically (or via a small text DSL), variational
derivatives are derived mechanically, and both fully implicit AVF
discrete-gradient schemes and linearly implicit polarised-AVF multistep
schemes run on uniform periodic 1-D grids with conservation monitors.
"""

from .density import (
    DensityPoly,
    Indeterminate,
    Monomial,
    VarDerivExpr,
    euler_operator,
    eval_density,
    eval_var_deriv,
    gkdv_density,
    hamiltonian_d,
    indet,
    kdv_density,
    parse_density,
    partial,
)
from .grid import (
    DiffOp,
    Grid1D,
    GridFunction,
    QuadratureWeights,
    default_realisation,
    inner,
    integral,
    make_standard_ops,
)
from .integrators import (
    FullyImplicitStepper,
    MidpointStepper,
    NaiveLIStepper,
    NewtonConfig,
    NewtonDivergenceError,
    PavfStepper,
    SchemeRun,
    SingularSystemError,
    SkewOp,
    bootstrap,
    integrate,
    solve_linear,
    step_fully_implicit,
    step_midpoint,
    step_naive_li,
    step_pavf,
)
from .polarisation import (
    PolarisedDensity,
    PolarisedMonomial,
    collapse,
    eval_polarised,
    polarisation_json,
    polarise,
    polarise_gkdv,
)
from .variational import (
    AffineOperator,
    avf_dvd,
    furihata_dvd_type1,
    furihata_dvd_type2,
    pavf_affine_split,
    pavf_dvd,
)

__version__ = "0.1.0"
