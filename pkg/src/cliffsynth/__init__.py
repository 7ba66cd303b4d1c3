"""Clifford circuit synthesis by learned reduction of binary symplectic tableaus."""

import os as _os

# Optional thread-count override; must land before numpy initializes its BLAS.
_threads = _os.environ.get("CLIFFSYNTH_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .errors import (
    ArgumentError,
    CapacityError,
    FormatError,
    InvariantError,
    ShapeError,
    StateError,
)
from .f2linalg import BitMatrix, hamming_to_identity, matmul_f2, rank_f2, transpose
from .tableau import Circuit, Gate, Tableau, apply_circuit, apply_gate, generator_matrix

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "BitMatrix",
    "CapacityError",
    "Circuit",
    "FormatError",
    "Gate",
    "InvariantError",
    "ShapeError",
    "StateError",
    "Tableau",
    "apply_circuit",
    "apply_gate",
    "generator_matrix",
    "hamming_to_identity",
    "matmul_f2",
    "rank_f2",
    "transpose",
]
