"""Spin-1/2 operators and the driven chain Hamiltonian on the 2^L basis.

Conventions (fixed for reproducibility of serialized matrices):
  * spin operators are S^{x,y,z} = sigma^{x,y,z} / 2,
  * the computational basis is the sigma^z product basis,
  * site 0 is the most significant bit of the basis index,
  * bit value 0 corresponds to S^z eigenvalue +1/2.

The static chain H0(0) = sum_i [-J Sz_i Sz_{i+1} - J2 Sz_i Sz_{i+2} + Bx Sx_i]
is diagonal for Bx = 0; the drive is H1(0) = A sum_i Sx_i.  Everything here
is real, which lets the flow integrator stay in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import reduce

import numpy as np

SX = np.array([[0.0, 0.5], [0.5, 0.0]])
SY = np.array([[0.0, -0.5j], [0.5j, 0.0]])
SZ = np.array([[0.5, 0.0], [0.0, -0.5]])
_PAULI_HALF = {"x": SX, "y": SY, "z": SZ}

BOUNDARIES = ("periodic", "open")


class ChainParamsError(ValueError):
    """Invalid SpinChainParams."""


@dataclass(frozen=True)
class SpinChainParams:
    """Couplings of the cosine-driven Ising chain (energies in units of J)."""

    L: int
    J: float = 1.0
    J2: float = 0.0
    Bx: float = 0.0
    A: float = 0.0
    Omega: float = 10.0
    boundary: str = "periodic"

    def __post_init__(self):
        if self.L < 2:
            raise ChainParamsError(f"L must be >= 2, got {self.L}")
        if self.Omega <= 0:
            raise ChainParamsError(f"Omega must be > 0, got {self.Omega}")
        if self.boundary not in BOUNDARIES:
            raise ChainParamsError(f"boundary must be one of {BOUNDARIES}")
        if self.J2 != 0.0 and self.boundary == "periodic" and self.L < 5:
            raise ChainParamsError("J2 != 0 with periodic boundary requires L >= 5")

    @property
    def dim(self) -> int:
        return 2**self.L

    def with_ratio(self, ratio: float) -> "SpinChainParams":
        """Copy with the drive amplitude set from A/Omega = ratio."""
        return replace(self, A=ratio * self.Omega)


def site_operator(axis: str, i: int, L: int) -> np.ndarray:
    """S^axis acting on site i, embedded in the 2^L space."""
    op = _PAULI_HALF[axis]
    factors = [np.eye(2, dtype=op.dtype)] * L
    factors[i] = op
    return reduce(np.kron, factors)


def sz_diagonals(L: int) -> np.ndarray:
    """Array of shape (L, 2^L): diagonal of S^z_i in the product basis."""
    idx = np.arange(2**L)
    bits = (idx[:, None] >> (L - 1 - np.arange(L))[None, :]) & 1
    return np.where(bits.T == 0, 0.5, -0.5)


def sx_sum(L: int) -> np.ndarray:
    """sum_i S^x_i as a dense real matrix."""
    total = np.zeros((2**L, 2**L))
    for i in range(L):
        total += site_operator("x", i, L).real
    return total


def coupling_sum(axis_a: str, axis_b: str, L: int, d: int, boundary: str) -> np.ndarray:
    """sum_i S^a_i S^b_{i+d}, wrapping around for periodic chains."""
    sites = range(L) if boundary == "periodic" else range(L - d)
    dtype = np.result_type(_PAULI_HALF[axis_a], _PAULI_HALF[axis_b])
    total = np.zeros((2**L, 2**L), dtype=dtype)
    for i in sites:
        total += site_operator(axis_a, i, L) @ site_operator(axis_b, (i + d) % L, L)
    return total if np.iscomplexobj(total) else total.real


def zz_diagonal(L: int, d: int, boundary: str) -> np.ndarray:
    """Diagonal of sum_i Sz_i Sz_{i+d} (the couplings are classical)."""
    sz = sz_diagonals(L)
    sites = range(L) if boundary == "periodic" else range(L - d)
    diag = np.zeros(2**L)
    for i in sites:
        diag += sz[i] * sz[(i + d) % L]
    return diag


def build_static(params: SpinChainParams) -> np.ndarray:
    """H0(0) = sum_i [-J Sz_i Sz_{i+1} - J2 Sz_i Sz_{i+2} + Bx Sx_i]."""
    diag = np.zeros(params.dim)
    if params.J != 0.0:
        diag -= params.J * zz_diagonal(params.L, 1, params.boundary)
    if params.J2 != 0.0:
        diag -= params.J2 * zz_diagonal(params.L, 2, params.boundary)
    h = np.diag(diag)
    if params.Bx != 0.0:
        h = h + params.Bx * sx_sum(params.L)
    return h


def build_drive(params: SpinChainParams) -> np.ndarray:
    """H1(0) = A sum_i Sx_i."""
    if params.A == 0.0:
        return np.zeros((params.dim, params.dim))
    return params.A * sx_sum(params.L)


def build_charge(L: int) -> np.ndarray:
    """The emergent-symmetry charge, sum_i Sx_i."""
    if L < 1:
        raise ChainParamsError(f"L must be >= 1, got {L}")
    return sx_sum(L)


def polarized_state(L: int) -> np.ndarray:
    """|x;+>^{otimes L}: all 2^L amplitudes equal 2^{-L/2}."""
    if L < 1:
        raise ChainParamsError(f"L must be >= 1, got {L}")
    return np.full(2**L, 2.0 ** (-L / 2))


def cyclic_shift_permutation(L: int) -> np.ndarray:
    """Index permutation of the one-site cyclic shift (site i -> i+1).

    For a translation-invariant periodic H, H[perm][:, perm] == H.
    """
    idx = np.arange(2**L)
    return (idx >> 1) | ((idx & 1) << (L - 1))
