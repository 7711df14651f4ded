"""Finite-dimensional Wiener chaos, Malliavin calculus and Gaussian decoupling."""

from .chaos import (
    SCALAR,
    BanachSpaceModel,
    ChaosExpansion,
    MonomialFunctional,
    evaluate,
    exact_inner,
    l2_norm_exact,
    lp_norm_mc,
    lp_norms_mc,
    phi_m,
    project_Jm,
    random_chaos,
    to_chaos,
    to_monomial,
)
from .decoupling import (
    DecouplingInstance,
    build_coupled,
    coupled_lp,
    decoupled_lp,
    decoupling_ratio,
    exact_second_moments,
    meyer_chain,
    random_instance,
    survival_curve,
)
from .errors import (
    AccuracyError,
    ChaosLabError,
    DimensionError,
    MeanZeroError,
    SymmetryError,
    TetrahedralityError,
    UnsupportedNormError,
)
from .gaussian import FiniteGaussianModel, RngSpec, sample, wiener
from .hermite import hermite_coeffs, hermite_eval, psi_eval
from .integral import MeasureSpaceModel, TetraSimpleFunction, integrate_Im, ito_isometry_check
from .malliavin import OperatorValuedExpansion, derivative, derivative_n, divergence
from .montecarlo import EstimateResult, McConfig
from .ou import (
    MultiplierSpec,
    SubordinatorQuad,
    apply_C,
    apply_L,
    apply_Linv,
    apply_P,
    apply_Q,
    multiplier,
    represent,
    resolvent,
)
from .tensor import ElementaryOperator, gamma_norm_exact_hilbert, gamma_norm_mc, symmetrize
