"""Block-triangular structural analysis of DAEs and the LC/ES conversion methods."""

from .btf import BlockStructure, coarse_btf, fine_btf, jacobian_pattern, sigma_pattern
from .convert import (
    ConditionFailure,
    NoApplicableConversion,
    convert_block,
    fix_dae,
    plan_es,
    plan_lc,
    apply_es,
    apply_lc,
)
from .modelfile import format_model, load_model, parse_model
from .structure import DaeSystem, Equation, StructurallyIllPosed, analyze, signature_matrix

__version__ = "0.1.0"

__all__ = [
    "BlockStructure",
    "ConditionFailure",
    "DaeSystem",
    "Equation",
    "NoApplicableConversion",
    "StructurallyIllPosed",
    "analyze",
    "apply_es",
    "apply_lc",
    "coarse_btf",
    "convert_block",
    "fine_btf",
    "fix_dae",
    "format_model",
    "jacobian_pattern",
    "load_model",
    "parse_model",
    "plan_es",
    "plan_lc",
    "sigma_pattern",
    "signature_matrix",
]
