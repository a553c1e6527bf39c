"""Dense symmetric linear algebra kernels.

Matrices are square numpy arrays of float64.  Nothing in this module knows
about lattices; it provides the commutator, the trace inner product
tr(X Y^T), matrix powers, a small-norm matrix exponential, and a cyclic
Jacobi eigensolver for symmetric input.  All functions are pure and never
mutate their arguments, so values can be shared freely between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConvergenceError",
    "DimensionMismatchError",
    "EigenDecomposition",
    "NotSymmetricError",
    "commutator",
    "dense_matrix",
    "expm_small",
    "frobenius_inner",
    "symmetric_eigen",
    "trace_power",
]

# Off-diagonal Frobenius target of the Jacobi iteration, relative to the
# Frobenius norm of the input, and the hard cap on full sweeps.
JACOBI_TARGET = 1e-14
JACOBI_MAX_SWEEPS = 100

# How asymmetric an input may be before symmetric_eigen refuses it.
SYMMETRY_RTOL = 1e-12


class DimensionMismatchError(ValueError):
    """Operands do not have compatible square shapes (a caller bug)."""


class NotSymmetricError(ValueError):
    """Input of symmetric_eigen is not symmetric to working tolerance."""


class ConvergenceError(RuntimeError):
    """The Jacobi sweep cap was reached before the off-diagonal target.

    The remaining off-diagonal Frobenius norm is available as ``residual``.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def dense_matrix(entries) -> np.ndarray:
    """Validate and copy a square matrix of finite float64 entries.

    The returned array is marked read-only; treat matrices as values.
    """
    m = np.array(entries, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise DimensionMismatchError(f"expected a square matrix, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError("matrix entries must be finite")
    m.flags.writeable = False
    return m


def _as_square(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != x.shape[1] or x.shape[0] < 1:
        raise DimensionMismatchError(f"{name} must be square, got shape {x.shape}")
    return x


def _as_same_square(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = _as_square(x, "first operand")
    y = _as_square(y, "second operand")
    if x.shape != y.shape:
        raise DimensionMismatchError(
            f"operands must share one dimension, got {x.shape} and {y.shape}"
        )
    return x, y


def commutator(x, y) -> np.ndarray:
    """Return [X, Y] = XY - YX for square matrices of equal dimension."""
    x, y = _as_same_square(x, y)
    return x @ y - y @ x


def frobenius_inner(x, y) -> float:
    """Trace inner product <X, Y> = tr(X Y^T), the entrywise dot product."""
    x, y = _as_same_square(x, y)
    return float(np.sum(x * y))


def trace_power(x, k: int) -> float:
    """Return tr(X^k) for integer k >= 1 by repeated multiplication."""
    x = _as_square(x, "operand")
    if not isinstance(k, (int, np.integer)) or isinstance(k, bool) or k < 1:
        raise ValueError(f"power must be an integer >= 1, got {k!r}")
    p = x
    for _ in range(k - 1):
        p = p @ x
    return float(np.trace(p))


def expm_small(m) -> np.ndarray:
    """Exponential of a small-norm matrix by its Taylor series.

    Intended for curve generators with Frobenius norm well below one, where
    the series converges to machine precision in a handful of terms.  Larger
    input is refused rather than computed badly.
    """
    m = _as_square(m, "generator")
    norm = float(np.linalg.norm(m))
    if norm > 0.5:
        raise ValueError(f"expm_small needs a small generator, got norm {norm:.3g}")
    acc = np.eye(m.shape[0])
    term = np.eye(m.shape[0])
    for j in range(1, 60):
        term = term @ m / j
        acc = acc + term
        if np.abs(term).max() <= 1e-18 * max(1.0, np.abs(acc).max()):
            break
    return acc


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues in ascending order with the matching orthonormal basis.

    Column i of ``basis`` is the eigenvector of ``eigenvalues[i]``.  Ties in
    the sort keep the order in which the Jacobi iteration produced them, so
    equal input always yields identical output.
    """

    eigenvalues: np.ndarray
    basis: np.ndarray


def _offdiag_norm(a: np.ndarray) -> float:
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.linalg.norm(off))


def symmetric_eigen(s, max_sweeps: int = JACOBI_MAX_SWEEPS) -> EigenDecomposition:
    """Diagonalize a symmetric matrix with cyclic Jacobi rotations.

    Sweeps annihilate every strict upper-triangle entry in row-major order
    until the off-diagonal Frobenius norm falls below JACOBI_TARGET times
    the Frobenius norm of the input.  Rotation angles follow the stable
    half-angle formulas, so accumulated basis columns stay orthonormal to
    machine precision.

    Raises NotSymmetricError for asymmetric input and ConvergenceError if
    ``max_sweeps`` full sweeps do not reach the target.
    """
    s = _as_square(s, "matrix")
    if not np.isfinite(s).all():
        raise ValueError("matrix entries must be finite")
    norm = float(np.linalg.norm(s))
    if float(np.linalg.norm(s - s.T)) > SYMMETRY_RTOL * norm:
        raise NotSymmetricError(
            f"matrix is not symmetric: ||S - S^T|| = {float(np.linalg.norm(s - s.T)):.3g}"
        )

    n = s.shape[0]
    a = 0.5 * (s + s.T)
    v = np.eye(n)
    target = JACOBI_TARGET * norm

    for sweep in range(max_sweeps + 1):
        off = _offdiag_norm(a)
        if off <= target:
            break
        if sweep == max_sweeps:
            raise ConvergenceError(
                f"no convergence in {max_sweeps} sweeps, off-diagonal norm {off:.3g}",
                residual=off,
            )
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = 0.5 * (a[q, q] - a[p, p]) / apq
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(1.0, theta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                sn = t * c
                col_p = c * a[:, p] - sn * a[:, q]
                col_q = sn * a[:, p] + c * a[:, q]
                a[:, p] = col_p
                a[:, q] = col_q
                row_p = c * a[p, :] - sn * a[q, :]
                row_q = sn * a[p, :] + c * a[q, :]
                a[p, :] = row_p
                a[q, :] = row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                vec_p = c * v[:, p] - sn * v[:, q]
                vec_q = sn * v[:, p] + c * v[:, q]
                v[:, p] = vec_p
                v[:, q] = vec_q

    d = np.diag(a).copy()
    order = np.argsort(d, kind="stable")
    eigenvalues = d[order]
    basis = v[:, order].copy()
    eigenvalues.flags.writeable = False
    basis.flags.writeable = False
    return EigenDecomposition(eigenvalues=eigenvalues, basis=basis)
