"""Numerical toolkit for Laplacians and the Cahn-Hilliard flow on conic manifolds."""
__version__ = "0.1.0"

from .asymptotics_fit import FitWindow, fit_expansion, fit_exponent
from .ch_solver import (InitialData, InitialTerm, Scheme, SignConvention, SolverConfig, apply_linearization,
                        linearization, nonlinearity, solve)
from .cone_operators import (AugmentedField, ConeGeometry, Cutoff, DiscreteOperator, OuterBC, assemble_interpolant,
                             assemble_laplacian, operator_norm, perturbation_norm)
from .config import ConfigError, RunConfig, parse_config
from .conormal import (bilaplacian_domain_asymptotics, domain_spec, indicial_roots, laplacian_asymptotics,
                       weight_window)
from .cross_section import CircleTransform, CrossSectionSpec, WarpProfile
from .errors import ConekitError, DomainError, StepError, UnsupportedError, ValidationError
from .functional_calculus import (SectorProbeConfig, bip_envelope, imaginary_power, resolvent_survey,
                                  square_factorization_check)
from .mellin import Field, NormRequest, RadialGrid, hs_norm

__all__ = [
    "AugmentedField", "CircleTransform", "ConeGeometry", "ConekitError", "ConfigError", "CrossSectionSpec",
    "Cutoff", "DiscreteOperator", "DomainError", "Field", "FitWindow", "InitialData", "InitialTerm", "NormRequest",
    "OuterBC", "RadialGrid", "RunConfig", "Scheme", "SectorProbeConfig", "SignConvention", "SolverConfig",
    "StepError", "UnsupportedError", "ValidationError", "WarpProfile", "apply_linearization",
    "assemble_interpolant", "assemble_laplacian",
    "bilaplacian_domain_asymptotics", "bip_envelope", "domain_spec", "fit_expansion", "fit_exponent", "hs_norm",
    "imaginary_power", "indicial_roots", "laplacian_asymptotics", "linearization", "nonlinearity", "operator_norm",
    "parse_config", "perturbation_norm", "resolvent_survey", "solve", "square_factorization_check", "weight_window",
]
