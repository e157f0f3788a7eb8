"""berezin: a desk-scale numerical workbench for Berezin-Toeplitz
quantization and the Hitchin connection on the flat torus family and the
round sphere."""

__version__ = "0.1.0"

from .geometry import (KahlerModel, TangentDirection, build_model,
                       complex_structure, ricci_data, rigidity_residual, variation)
from .quantization import (OperatorMatrix, Section, SectionBasis, holomorphic_basis,
                           operator_norm, prequantum, project, toeplitz)

__all__ = [
    "__version__",
    "KahlerModel", "TangentDirection", "build_model", "complex_structure",
    "ricci_data", "rigidity_residual", "variation",
    "OperatorMatrix", "Section", "SectionBasis", "holomorphic_basis",
    "operator_norm", "prequantum", "project", "toeplitz",
]
