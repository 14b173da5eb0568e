"""Dense matrix kernels shared by every other module.

All operators live on the full many-body Hilbert space as dense numpy
arrays (real float64 where the physics allows it, complex128 otherwise).
Matrix exponentials go through the Hermitian eigendecomposition, so the
same factorization can be reused for quasienergy extraction and for
applying scalar functions spectrally.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

#: relative Frobenius tolerance for Hermiticity precondition checks
HERMITICITY_RTOL = 1e-8


class DimensionMismatchError(ValueError):
    """Operands act on Hilbert spaces of different dimension."""


class NotHermitianError(ValueError):
    """Input violates the Hermiticity precondition beyond tolerance."""


class EigenDecomposition(NamedTuple):
    """Eigenvalues (ascending) and the unitary matrix of column eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _check_square(m: np.ndarray) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {m.shape}")


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """[a, b] = ab - ba."""
    _check_square(a)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a @ b - b @ a


def frobenius_norm(m: np.ndarray) -> float:
    """sqrt(Tr M^dag M)."""
    return float(np.linalg.norm(m))


def hermiticity_defect(m: np.ndarray) -> float:
    """Relative Frobenius distance from m to its Hermitian part."""
    scale = frobenius_norm(m)
    if scale == 0.0:
        return 0.0
    return frobenius_norm(m - m.conj().T) / scale


def eigh(m: np.ndarray, rtol: float = HERMITICITY_RTOL) -> EigenDecomposition:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending.

    Raises NotHermitianError when the input deviates from Hermiticity by
    more than `rtol` in relative Frobenius norm.  The matrix is
    symmetrized before the solve so the decomposition is exactly that of
    the Hermitian part.
    """
    _check_square(m)
    defect = hermiticity_defect(m)
    if defect > rtol:
        raise NotHermitianError(f"relative Hermiticity defect {defect:.3e} exceeds {rtol:.1e}")
    sym = 0.5 * (m + m.conj().T)
    w, v = np.linalg.eigh(sym)
    return EigenDecomposition(w, v)


def expm_hermitian(m: np.ndarray, scale: complex = 1.0) -> np.ndarray:
    """exp(scale * m) for Hermitian m, via the spectral decomposition.

    Unitary to machine precision when `scale` is purely imaginary.
    """
    w, v = eigh(m)
    return (v * np.exp(scale * w)) @ v.conj().T
