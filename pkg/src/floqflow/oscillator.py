"""Closed five-variable flow for the driven harmonic oscillator.

The Hamiltonian components reduce to the coefficients
(A0, A1, B0, B1, C1) with

    dA0/dl = 0
    dA1/dl = -Omega A1
    dB0/dl = 2 A1 (C1 - B1)
    dB1/dl = -Omega B1 - A0 B1 + A1 B0
    dC1/dl = -Omega C1 + A0 C1 - A1 B0

and initial data A0 = omega0, A1 = A/2, B0 = omega1, B1 = C1 = 0.
Freezing corresponds to B0(l -> inf) = 0; for omega0 = 0 the end point is
omega1 * J0(A/Omega), so the freezing points sit at the zeros of J0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import j0, j1, y0, y1

from .flow import FlowConfig

#: e^{-20} ~ 2e-9 residual drive: good enough for every stated tolerance
LAMBDA_END_OMEGA = 20.0


class DegenerateScanError(ValueError):
    """The freezing residual vanishes identically (omega1 = 0)."""


@dataclass(frozen=True)
class OscillatorParams:
    """Driven oscillator couplings; Omega is the drive frequency."""

    omega0: float
    omega1: float
    A: float
    Omega: float

    def __post_init__(self):
        if self.Omega <= 0:
            raise ValueError(f"Omega must be > 0, got {self.Omega}")
        if self.omega0 < 0:
            raise ValueError(f"omega0 must be >= 0, got {self.omega0}")


@dataclass
class OscillatorTrajectory:
    lambdas: np.ndarray
    A0: np.ndarray
    A1: np.ndarray
    B0: np.ndarray
    B1: np.ndarray
    C1: np.ndarray


def oscillator_rhs(y: np.ndarray, p: OscillatorParams) -> np.ndarray:
    """Derivative of the coefficient vector y = (A0, A1, B0, B1, C1)."""
    a0, a1, b0, b1, c1 = y
    return np.array(
        [
            0.0,
            -p.Omega * a1,
            2.0 * a1 * (c1 - b1),
            -p.Omega * b1 - a0 * b1 + a1 * b0,
            -p.Omega * c1 + a0 * c1 - a1 * b0,
        ],
        dtype=y.dtype,
    )


def initial_coefficients(p: OscillatorParams) -> np.ndarray:
    return np.array([p.omega0, p.A / 2.0, p.omega1, 0.0, 0.0], dtype=complex)


def run_oscillator(p: OscillatorParams, cfg: FlowConfig) -> OscillatorTrajectory:
    """Fixed-step RK4 trajectory of the reduced flow."""
    h = cfg.step
    y = initial_coefficients(p)
    n_steps = int(round(cfg.lambda_max / h))
    lams = [0.0]
    ys = [y.copy()]
    for k in range(1, n_steps + 1):
        k1 = oscillator_rhs(y, p)
        k2 = oscillator_rhs(y + 0.5 * h * k1, p)
        k3 = oscillator_rhs(y + 0.5 * h * k2, p)
        k4 = oscillator_rhs(y + h * k3, p)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if k % cfg.record_stride == 0 or k == n_steps:
            lams.append(k * h)
            ys.append(y.copy())
    arr = np.asarray(ys)
    return OscillatorTrajectory(
        lambdas=np.asarray(lams),
        A0=arr[:, 0].real,
        A1=arr[:, 1].real,
        B0=arr[:, 2],
        B1=arr[:, 3],
        C1=arr[:, 4],
    )


def analytic_B0(p: OscillatorParams, lam: float) -> complex:
    """Closed-form B0(lambda), exact for omega0 = 0.

    B0(l) = (pi A w1 / 2 Omega) e^{-Omega l}
            [J1(u) Y0(z) - J0(z) Y1(u)],   u = z e^{-Omega l}, z = A/Omega.

    The A = 0 limit is omega1 by continuity (Bessel Wronskian
    J1(z)Y0(z) - Y1(z)J0(z) = 2/(pi z)).
    """
    if p.A == 0.0:
        return complex(p.omega1)
    z = p.A / p.Omega
    u = z * np.exp(-p.Omega * lam)
    pref = np.pi * p.A * p.omega1 / (2.0 * p.Omega) * np.exp(-p.Omega * lam)
    return complex(pref * (j1(u) * y0(z) - j0(z) * y1(u)))


def freezing_residual(p: OscillatorParams, step_scale: float = 0.02) -> float:
    """|B0| at Omega*lambda = 20, the practical lambda -> infinity limit."""
    cfg = FlowConfig(
        omega=p.Omega,
        lambda_max=LAMBDA_END_OMEGA / p.Omega,
        step=step_scale / p.Omega,
        record_stride=10**9,
    )
    traj = run_oscillator(p, cfg)
    return float(abs(traj.B0[-1]))


def find_freezing_points(
    template: OscillatorParams, ratio_grid, refine_xtol: float = 1e-4
) -> list[tuple[float, float]]:
    """Locate minima of |B0(infinity)| over the A/Omega grid.

    Grid-local minima are refined by golden-section search to refine_xtol
    in the ratio.  Returns (ratio, residual) pairs in grid order.
    """
    ratios = np.asarray(ratio_grid, dtype=float)
    if ratios.size == 0:
        raise ValueError("empty ratio grid")
    if np.any(np.diff(ratios) <= 0):
        raise ValueError("ratio grid must be sorted and strictly increasing")

    def residual(r: float) -> float:
        return freezing_residual(
            OscillatorParams(template.omega0, template.omega1, r * template.Omega, template.Omega)
        )

    values = np.array([residual(r) for r in ratios])
    if np.max(values) < 1e-15:
        raise DegenerateScanError("freezing residual vanishes identically (omega1 = 0?)")

    minima = []
    for i in range(1, len(ratios) - 1):
        if values[i] < values[i - 1] and values[i] < values[i + 1]:
            res = minimize_scalar(
                residual,
                bracket=(ratios[i - 1], ratios[i], ratios[i + 1]),
                method="golden",
                options={"xtol": refine_xtol},
            )
            minima.append((float(res.x), float(res.fun)))
    return minima


def trajectory_to_csv(traj: OscillatorTrajectory, path) -> None:
    header = "lambda,A0,A1,ReB0,ImB0,ReB1,ImB1,ReC1,ImC1"
    data = np.column_stack(
        [
            traj.lambdas,
            traj.A0,
            traj.A1,
            traj.B0.real,
            traj.B0.imag,
            traj.B1.real,
            traj.B1.imag,
            traj.C1.real,
            traj.C1.imag,
        ]
    )
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")
