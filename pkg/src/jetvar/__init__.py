"""jetvar: exact symbolic variational calculus on jet bundles.

The package mechanizes the variational bicomplex in coordinates: Euler
expressions, Lepage equivalents, null-Lagrangian certificates, Noether
invariance analysis, conserved currents, and general-covariance conditions,
all over exact rational differential polynomials, cross-checked by numeric
oracles.
"""

from .algebra import (
    BaseCoord,
    ContextError,
    Expr,
    FuncAtom,
    FunctionSymbol,
    JetContext,
    JetCoord,
    JetError,
    MultiIndex,
    ONE,
    OrderError,
    SubstitutionError,
    ZERO,
    as_expr,
    normalize,
    partial,
    substitute,
    total_derivative,
    total_derivative_multi,
    x_,
    y_,
    z_,
)
from .forms import (
    DegreeError,
    DiffForm,
    JetField,
    PolySection,
    contact_form,
    contact_form_jet,
    contract,
    ext_d,
    lie_derivative,
    omega0,
    pullback_by_section,
    wedge,
    wedge_all,
)
from .fields import (
    DimensionError,
    ProjectableField,
    SigmaConstants,
    TensorType,
    bracket,
    jet_bracket,
    prolong,
    tensor_lift,
    vertical_part,
)
from .variational import (
    CanonicalSplit,
    ConsistencyError,
    EulerSystem,
    HorizontalityError,
    Lagrangian,
    StructureError,
    VariationSplit,
    canonical_split,
    characteristic,
    euler,
    extremal_residual,
    first_variation,
    h_tilde,
    horizontalize,
    is_lepagean,
    lepage_delta,
    lepage_theta,
    lie_density,
    null_certificate,
    null_from_form,
    null_test,
    pseudovertical,
)
from .symmetry import (
    ConservedCurrent,
    CovarianceTable,
    SymmetryVerdict,
    conserved_current,
    covariance_system,
    general_covariance_check,
    generalized_invariance_check,
    lie_lagrangian,
    noether_check,
    symmetric_system,
    weak_critical_system,
)
from .numeric import (
    GradCheckReport,
    GridSpec,
    PointAssignment,
    UngroundedAtomError,
    ZeroCheckVerdict,
    convergence_study,
    discrete_action_gradient_check,
    eval_expr,
    flow_prolong_oracle,
    prolong_vs_flow,
    randomized_zero_check,
)

__version__ = "0.1.0"
