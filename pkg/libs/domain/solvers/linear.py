from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from domain.errors import SingularPolicySystemError
from domain.types import FloatArray

LinearMethod = Literal["auto", "direct", "gmres"]

DIRECT_NODE_LIMIT = 2500


@dataclass(frozen=True)
class AnchoredSolve:
    """Solution of ``A w + b = 0`` as ``w = relative + anchor``, ``relative[origin] = 0``."""

    relative: FloatArray
    anchor: float
    method: str
    info: int


def _bordered(
    A: sparse.csr_matrix, row_sums: FloatArray, origin: int
) -> tuple[sparse.csc_matrix, float]:
    n = A.shape[0]
    scale = float(np.max(np.abs(row_sums))) if row_sums.size else 1.0
    scale = scale if scale > 0.0 else 1.0
    col = sparse.csr_matrix(np.asarray(row_sums, dtype=np.float64).reshape(n, 1) / scale)
    pin = sparse.csr_matrix(([1.0], ([0], [origin])), shape=(1, n))
    K = sparse.bmat([[A, col], [pin, None]], format="csc")
    return K, scale


def solve_anchored(
    A: sparse.csr_matrix,
    b: FloatArray,
    row_sums: FloatArray,
    origin: int,
    *,
    tol: float,
    method: LinearMethod = "auto",
    x0: tuple[FloatArray, float] | None = None,
) -> AnchoredSolve:
    """Solve the frozen-policy system for (w - w(origin), w(origin)) jointly.

    ``row_sums`` is ``A 1`` computed analytically, so the constant mode is carried by a single
    unknown and never has to be recovered from a difference of large numbers.
    """
    n = A.shape[0]
    K, scale = _bordered(A, row_sums, origin)
    rhs = np.concatenate([-np.asarray(b, dtype=np.float64), [0.0]])

    chosen = method
    if method == "auto":
        chosen = "direct" if n <= DIRECT_NODE_LIMIT else "gmres"

    info = 0
    if chosen == "direct":
        z = np.asarray(spla.spsolve(K, rhs), dtype=np.float64)
    elif chosen == "gmres":
        diag = np.abs(A.diagonal())
        inv = np.concatenate([1.0 / np.where(diag > 0.0, diag, 1.0), [1.0]])
        M = spla.LinearOperator(K.shape, matvec=lambda v: inv * v, dtype=np.float64)
        guess = None
        if x0 is not None:
            guess = np.concatenate([x0[0], [x0[1] * scale]])
        z, info = spla.gmres(K, rhs, x0=guess, rtol=tol, atol=0.0, restart=60, maxiter=400, M=M)
        z = np.asarray(z, dtype=np.float64)
    else:
        raise ValueError(f"unknown linear method {method!r}")

    if not np.all(np.isfinite(z)):
        raise SingularPolicySystemError(
            "frozen-policy system is singular; the zeroth-order term must be strictly negative"
        )
    relative = z[:n].copy()
    relative[origin] = 0.0
    anchor = float(z[n] / scale)
    return AnchoredSolve(relative=relative, anchor=anchor, method=chosen, info=int(info))
