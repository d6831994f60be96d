from __future__ import annotations

from collections.abc import Callable
from typing import TypeAlias

import numpy as np
import numpy.typing as npt

FloatArray: TypeAlias = npt.NDArray[np.float64]
IntArray: TypeAlias = npt.NDArray[np.int64]

# Values on grid nodes, in node order.
GridFunction: TypeAlias = FloatArray

# Coefficient callbacks take points of shape (..., d) and broadcast over the leading axes.
ScalarField: TypeAlias = Callable[[FloatArray], FloatArray]
VectorField: TypeAlias = Callable[[FloatArray], FloatArray]  # (..., d) -> (..., d)
MatrixField: TypeAlias = Callable[[FloatArray], FloatArray]  # (..., d) -> (..., d, d)
# Kernel density factor k(x, y); x and y broadcast against each other.
KernelFactor: TypeAlias = Callable[[FloatArray, FloatArray], FloatArray]
