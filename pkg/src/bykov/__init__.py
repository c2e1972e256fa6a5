"""Numerical toolkit for a symmetry-breaking unfolding of a Bykov heteroclinic network."""

from .config import parse_config
from .params import DerivedConstants, Model, SaddleParams, SectionGeometry, build_unfolding, validate_params

__all__ = ["DerivedConstants", "Model", "SaddleParams", "SectionGeometry", "build_unfolding",
           "parse_config", "validate_params"]
__version__ = "0.1.0"
