"""Fixed-step RK4 integration of the operator flow equations.

The flow removes the oscillatory Hamiltonian component while preserving
the stroboscopic spectrum:

    dH0/dl = 2 [H1, H1^dag]
    dH1/dl = -Omega H1 - [H0, H1]

H0 stays Hermitian along the flow; H1 does not (the anti-Hermitian part
of [H0, H1] is nonzero), so H1 is carried as a general matrix from the
first step onward.  When both initial matrices are real the entire flow
stays real, which roughly quadruples integration speed; the integrator is
dtype-agnostic to exploit this.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .opkernel import frobenius_norm, hermiticity_defect

#: relative floor on ||H1|| below which the flow is dominated by round-off
FLOAT_FLOOR = 1e-13

#: ratio between a local minimum of ||H1|| and the subsequent maximum for
#: the minimum to count as the end of the prethermal regime
MINIMUM_PROMINENCE = 1e3


class FlowIntegrationError(RuntimeError):
    """The integrator produced non-finite entries."""

    def __init__(self, message: str, last_lambda: float):
        super().__init__(message)
        self.last_lambda = last_lambda


class FlowMinimumNotFound(RuntimeError):
    """||H1(lambda)|| has no qualifying interior minimum (flow still
    prethermal, or integrable decay)."""


class UndefinedDiagnosticError(ZeroDivisionError):
    """Diagnostic ratio with a vanishing denominator."""


@dataclass(frozen=True)
class FlowConfig:
    """Integration controls.  step is in fRG time (units 1/J)."""

    omega: float
    lambda_max: float
    step: float = 1e-3
    record_stride: int = 1
    store_matrices: bool = False
    store_spectra: bool = False
    #: abort integration once ||H1|| < floor_guard * ||H1(0)||
    floor_guard: float = FLOAT_FLOOR
    #: optional early stop once ||H1|| has rebounded by this factor from
    #: its running minimum (saves time in lambda_min scans)
    stop_rise_factor: Optional[float] = None

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError(f"step must be > 0, got {self.step}")
        if self.omega <= 0:
            raise ValueError(f"omega must be > 0, got {self.omega}")
        if self.step * self.omega > 0.1 + 1e-12:
            raise ValueError(
                f"step*omega = {self.step * self.omega:.3g} exceeds the 0.1 stability guard"
            )
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


@dataclass
class FlowState:
    """The pair (H0, H1) at fRG time lambda."""

    lam: float
    h0: np.ndarray
    h1: np.ndarray


@dataclass
class FlowTrajectory:
    """Sampled flow records; lambdas strictly increasing."""

    lambdas: np.ndarray
    norm_h0: np.ndarray
    norm_h1: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    omega: float
    step: float
    spectra: Optional[np.ndarray] = None
    h0_samples: Optional[list] = None
    h1_samples: Optional[list] = None
    final_state: Optional[FlowState] = None
    floor_aborted: bool = False
    rise_stopped: bool = False

    def __len__(self) -> int:
        return len(self.lambdas)


def flow_rhs(h0: np.ndarray, h1: np.ndarray, omega: float):
    """Right-hand sides (dH0, dH1) of the flow equations."""
    if h0.shape != h1.shape:
        raise ValueError(f"dimension mismatch: {h0.shape} vs {h1.shape}")
    h1d = h1.conj().T
    a = h1 @ h1d
    b = h1d @ h1
    dh0 = 2.0 * (a - b)
    dh1 = -omega * h1 - (h0 @ h1 - h1 @ h0)
    return dh0, dh1


def rk4_step(state: FlowState, step: float, omega: float) -> FlowState:
    """One classical RK4 update of (H0, H1) simultaneously."""
    h0, h1 = state.h0, state.h1
    k1_0, k1_1 = flow_rhs(h0, h1, omega)
    k2_0, k2_1 = flow_rhs(h0 + 0.5 * step * k1_0, h1 + 0.5 * step * k1_1, omega)
    k3_0, k3_1 = flow_rhs(h0 + 0.5 * step * k2_0, h1 + 0.5 * step * k2_1, omega)
    k4_0, k4_1 = flow_rhs(h0 + step * k3_0, h1 + step * k3_1, omega)
    h0_new = h0 + (step / 6.0) * (k1_0 + 2.0 * k2_0 + 2.0 * k3_0 + k4_0)
    h1_new = h1 + (step / 6.0) * (k1_1 + 2.0 * k2_1 + 2.0 * k3_1 + k4_1)
    if not np.isfinite(h1_new).all() or not np.isfinite(h0_new).all():
        raise FlowIntegrationError(
            f"non-finite entries at lambda = {state.lam + step:.6g}", state.lam
        )
    return FlowState(state.lam + step, h0_new, h1_new)


def diag_P(h0: np.ndarray, charge: np.ndarray) -> float:
    """||[H0, O]|| / ||H0||: distance from the emergent symmetry."""
    n0 = frobenius_norm(h0)
    if n0 == 0.0:
        raise UndefinedDiagnosticError("P undefined for ||H0|| = 0")
    return frobenius_norm(h0 @ charge - charge @ h0) / n0


def diag_Q(h0: np.ndarray, h1: np.ndarray) -> float:
    """||H1|| / ||H0||: residual weight of the oscillatory component."""
    n0 = frobenius_norm(h0)
    if n0 == 0.0:
        raise UndefinedDiagnosticError("Q undefined for ||H0|| = 0")
    return frobenius_norm(h1) / n0


def t_eff(h1: np.ndarray) -> float:
    """Validity time of the effective evolution, ||1|| / ||H1||."""
    n1 = frobenius_norm(h1)
    if n1 == 0.0:
        return np.inf
    return np.sqrt(h1.shape[0]) / n1


def run_flow(
    h0_init: np.ndarray,
    h1_init: np.ndarray,
    cfg: FlowConfig,
    charge: Optional[np.ndarray] = None,
) -> FlowTrajectory:
    """Integrate the flow from Hermitian initial data, sampling every
    record_stride steps up to lambda_max.

    The charge operator used for P defaults to sum_i Sx_i on the chain of
    the matching dimension.
    """
    # h1 may carry an arbitrary overall phase, so only h0 must be Hermitian
    if hermiticity_defect(h0_init) > 1e-8:
        raise ValueError("h0_init must be Hermitian initial data")
    if h0_init.shape != h1_init.shape:
        raise ValueError(f"dimension mismatch: {h0_init.shape} vs {h1_init.shape}")
    if charge is None:
        from .hilbert import build_charge

        L = int(round(np.log2(h0_init.shape[0])))
        if 2**L != h0_init.shape[0]:
            raise ValueError("cannot infer chain length: dimension is not a power of two")
        charge = build_charge(L)

    dtype = np.result_type(h0_init, h1_init, np.float64)
    state = FlowState(0.0, h0_init.astype(dtype), h1_init.astype(dtype))

    n_steps = int(round(cfg.lambda_max / cfg.step))
    norm_h1_init = frobenius_norm(h1_init)

    lams, n0s, n1s, ps, qs = [], [], [], [], []
    spectra = [] if cfg.store_spectra else None
    h0_samples = [] if cfg.store_matrices else None
    h1_samples = [] if cfg.store_matrices else None

    def record(s: FlowState):
        lams.append(s.lam)
        n0s.append(frobenius_norm(s.h0))
        n1s.append(frobenius_norm(s.h1))
        ps.append(diag_P(s.h0, charge))
        qs.append(n1s[-1] / n0s[-1])
        if spectra is not None:
            spectra.append(np.linalg.eigvalsh(0.5 * (s.h0 + s.h0.conj().T)))
        if h0_samples is not None:
            h0_samples.append(s.h0.copy())
            h1_samples.append(s.h1.copy())

    record(state)
    floor_aborted = False
    rise_stopped = False
    running_min = norm_h1_init
    for k in range(1, n_steps + 1):
        state = rk4_step(state, cfg.step, cfg.omega)
        if k % cfg.record_stride == 0 or k == n_steps:
            record(state)
            n1 = n1s[-1]
            running_min = min(running_min, n1)
            if norm_h1_init > 0 and n1 < cfg.floor_guard * norm_h1_init:
                floor_aborted = True
                break
            if (
                cfg.stop_rise_factor is not None
                and running_min > 0
                and n1 > cfg.stop_rise_factor * running_min
            ):
                rise_stopped = True
                break

    return FlowTrajectory(
        lambdas=np.asarray(lams),
        norm_h0=np.asarray(n0s),
        norm_h1=np.asarray(n1s),
        P=np.asarray(ps),
        Q=np.asarray(qs),
        omega=cfg.omega,
        step=cfg.step,
        spectra=np.asarray(spectra) if spectra is not None else None,
        h0_samples=h0_samples,
        h1_samples=h1_samples,
        final_state=state,
        floor_aborted=floor_aborted,
        rise_stopped=rise_stopped,
    )


def detect_lambda_min(
    traj: FlowTrajectory, prominence: float = MINIMUM_PROMINENCE
) -> tuple[float, float]:
    """First strict local minimum of ||H1(lambda)|| after the initial decay.

    A minimum qualifies only if ||H1|| subsequently rebounds by the
    prominence factor (the physical minima span many decades; integrator
    wiggles do not).  Raises FlowMinimumNotFound for monotone decay.
    """
    n1 = traj.norm_h1
    if len(n1) < 3:
        raise FlowMinimumNotFound("trajectory too short")
    floor = FLOAT_FLOOR * n1[0]
    interior = (n1[1:-1] < n1[:-2]) & (n1[1:-1] < n1[2:])
    for i in np.nonzero(interior)[0] + 1:
        if n1[i] <= floor:
            continue
        if np.max(n1[i:]) >= prominence * n1[i]:
            return float(traj.lambdas[i]), float(n1[i])
    raise FlowMinimumNotFound("no interior minimum with sufficient prominence")


def count_p_dips(traj: FlowTrajectory, prominence_decades: float = 0.5) -> int:
    """Number of isolated dips in P(lambda) before the plateau.

    A dip is a local minimum of log10 P with at least the given prominence
    in decades; at the n-th freezing point there are n - 1 of them.
    """
    from scipy.signal import find_peaks

    idx, _ = find_peaks(-np.log10(np.maximum(traj.P, 1e-300)), prominence=prominence_decades)
    return int(len(idx))


def norm_balance_residual(traj: FlowTrajectory) -> float:
    """Exact-identity check: d/dl (||H0||^2 + 2||H1||^2) = -4 Omega ||H1||^2.

    Uses centered differences of the sampled norms against a
    Simpson-weighted average of the right-hand side (which cancels the
    O(dl^2) stencil error).  Returns the maximum residual relative to the
    right-hand-side scale.
    """
    if len(traj) < 3:
        raise ValueError("need at least 3 samples")
    lam = traj.lambdas
    if not np.allclose(np.diff(lam), lam[1] - lam[0], rtol=1e-9, atol=1e-15):
        raise ValueError("samples must be uniformly strided")
    big_n = traj.norm_h0**2 + 2.0 * traj.norm_h1**2
    g = traj.norm_h1**2
    dlam = lam[2:] - lam[:-2]
    lhs = (big_n[2:] - big_n[:-2]) / dlam
    rhs = -4.0 * traj.omega * (g[:-2] + 4.0 * g[1:-1] + g[2:]) / 6.0
    scale = 4.0 * traj.omega * np.max(g)
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(lhs - rhs)) / scale)


def trajectory_to_csv(traj: FlowTrajectory, path) -> None:
    """CSV with full double precision (17 significant digits)."""
    header = "lambda,normH0,normH1,P,Q"
    data = np.column_stack([traj.lambdas, traj.norm_h0, traj.norm_h1, traj.P, traj.Q])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


def trajectory_to_json(traj: FlowTrajectory, path, config_echo: Optional[dict] = None) -> None:
    """JSON document with the sampled scalars plus provenance metadata."""
    from . import __version__, git_revision

    doc = {
        "provenance": {
            "tool": "floqflow",
            "version": __version__,
            "git_hash": git_revision(),
            "omega": traj.omega,
            "step": traj.step,
        },
        "config": config_echo or {},
        "floor_aborted": traj.floor_aborted,
        "samples": {
            "lambda": traj.lambdas.tolist(),
            "normH0": traj.norm_h0.tolist(),
            "normH1": traj.norm_h1.tolist(),
            "P": traj.P.tolist(),
            "Q": traj.Q.tolist(),
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
