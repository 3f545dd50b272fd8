"""Exact formal normal forms: splitting, resonances, toric degree, Williamson type."""

from .field import FieldError, NumberField, Scalar
from .linear import FieldTooSmall, LinearPart, split_linear
from .normalize import NilpotentObstruction, NormalFormError, NormalizeResult, pd_normalize, replay
from .resonance import ResonanceData, ToricData, resonance_lattice, toric_degree
from .series import FormalSeries
from .williamson import DegenerateQuadraticPart, UnresolvedMultiplicity, WilliamsonType, real_toric_degree, williamson_classify

NumberFieldScalar = Scalar

__all__ = [
    "DegenerateQuadraticPart",
    "FieldError",
    "FieldTooSmall",
    "FormalSeries",
    "LinearPart",
    "NilpotentObstruction",
    "NormalFormError",
    "NormalizeResult",
    "NumberField",
    "NumberFieldScalar",
    "ResonanceData",
    "Scalar",
    "ToricData",
    "UnresolvedMultiplicity",
    "WilliamsonType",
    "pd_normalize",
    "real_toric_degree",
    "replay",
    "resonance_lattice",
    "split_linear",
    "toric_degree",
    "williamson_classify",
]
