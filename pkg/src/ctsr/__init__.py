"""Cartesian tensor sparse regression for invariant equation discovery."""

from ctsr.terms import (
    CandidateTerm,
    FactorShape,
    TensorFactor,
    Validity,
    assign_suffixes,
    canonicalize,
    check_validity,
    equivalent,
    factor_shape,
    suffix_name,
)

__version__ = "0.1.0"

__all__ = [
    "CandidateTerm",
    "FactorShape",
    "TensorFactor",
    "Validity",
    "assign_suffixes",
    "canonicalize",
    "check_validity",
    "equivalent",
    "factor_shape",
    "suffix_name",
    "__version__",
]
