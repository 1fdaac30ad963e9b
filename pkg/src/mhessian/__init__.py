"""m-positivity cones, the F_m eigenvalue-sum operator, and smoothing pipelines."""

from .hermitian import (
    HermitianMatrix,
    MetricMatrix,
    RelativeSpectrum,
    complex_hessian_point,
    relative_eigenvalues,
)
from .cones import ConeVerdict, cone_Pmk_membership, cone_PmnB_membership, \
    is_m_semipositive, strong_positivity_oracle
from .fm import (
    DerivationMatrix,
    FmValue,
    concavity_probe,
    derivation_matrix,
    fm_gradient_diagonal,
    fm_plus,
    fm_product_bound,
    fm_value,
    fm_via_determinant,
)
from .curvature import BidegreeForm, apply_curvature_operator, l2_constant, \
    verify_bound_regime

__version__ = "0.1.0"

__all__ = [
    "HermitianMatrix",
    "MetricMatrix",
    "RelativeSpectrum",
    "complex_hessian_point",
    "relative_eigenvalues",
    "ConeVerdict",
    "cone_Pmk_membership",
    "cone_PmnB_membership",
    "is_m_semipositive",
    "strong_positivity_oracle",
    "DerivationMatrix",
    "FmValue",
    "concavity_probe",
    "derivation_matrix",
    "fm_gradient_diagonal",
    "fm_plus",
    "fm_product_bound",
    "fm_value",
    "fm_via_determinant",
    "BidegreeForm",
    "apply_curvature_operator",
    "l2_constant",
    "verify_bound_regime",
    "__version__",
]
