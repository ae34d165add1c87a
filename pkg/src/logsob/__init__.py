"""Numerical checks of functional inequalities for diffusion semigroups.

The package covers Gaussian and log-concave reference measures, the
Ornstein-Uhlenbeck semigroup and its generator, the carré du champ and
Γ₂ operators, Poincaré / log-Sobolev / Talagrand verdicts and 1-D optimal
transport.
"""

__version__ = "0.1.0"

from .fields import FieldError, PositivityError, ScalarField, builtin_field, field_from_config
from .functionals import (
    InequalityReport,
    dirichlet,
    entropy,
    entropy_derivative_check,
    fisher,
    fit_decay_rate,
    variance,
    verify_decay,
    verify_lsi,
    verify_poincare,
)
from .gamma import CurvatureReport, check_cd, gamma1, gamma2
from .potentials import (
    EmpiricalMeasure,
    IntegrationError,
    Potential,
    PotentialError,
    QuadratureGrid,
    SamplingError,
    gauss_hermite_grid,
    integrate,
    make_builtin_potential,
    min_curvature,
    mu_grid,
    sample_measure,
)
from .semigroup import EvolutionTrace, evolve_trace, generator_apply, mehler_apply, sde_evolve
from .transport import (
    BrenierMap1D,
    TransportError,
    TransportResult,
    brenier_map_1d,
    monge_ampere_residual_1d,
    otto_villani_check,
    verify_talagrand,
    w2_assignment,
    w2_sorted_1d,
)
