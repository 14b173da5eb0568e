"""Analytic references and post-processing for the operator flow.

Contents:
  * the early-time Bessel kernel f(z, lambda) and its spectral application
    to H0(0) in the eigenbasis of H1(0),
  * the leading Floquet-Magnus Hamiltonian of the driven chain and its
    Fourier components h_m (Bessel-weighted YY/ZZ/YZ couplings),
  * the gauge-dependent first Magnus correction,
  * the reduced single-instanton flow, its closed form, and sech fitting
    of ||H1(lambda)|| peaks,
  * order-of-magnitude prethermal / thermalization timescale estimates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit
from scipy.signal import find_peaks
from scipy.special import j0, j1, jv, y0, y1

from .flow import FlowTrajectory
from .hilbert import SpinChainParams, coupling_sum
from .opkernel import EigenDecomposition, eigh

#: below this |z| the kernel is 1 up to O(z^2 ln z) < 1e-11
Z_CUT = 1e-6


class UnsupportedConfigurationError(ValueError):
    """Operation outside its analytic domain of validity (e.g. Bx != 0)."""


class PeakError(RuntimeError):
    """No usable ||H1|| peak in the requested window."""


@dataclass(frozen=True)
class AdjointSpectralBasis:
    """Eigenbasis of H1(0) with the scaled adjoint eigenvalue grid
    z_mn = 2 (e_m - e_n) / Omega (antisymmetric)."""

    basis: EigenDecomposition
    zgrid: np.ndarray


@dataclass(frozen=True)
class InstantonFit:
    """Fitted sech parameters of a single instanton event."""

    omega_tilde: float
    lambda_tilde: float
    rss: float
    window: tuple[float, float]
    rel_rms: float
    concurrent_h0_step: float


@dataclass(frozen=True)
class TimescaleEstimate:
    lambda_min_est: float
    lambda_th: dict[int, float]
    Jeff: float


def flow_kernel_f(z, lam: float, omega: float):
    """Scalar early-time flow kernel.

    f(z, l) = (pi/2) e^{-Omega l} z [J1(z e^{-Omega l}) Y0(z)
                                     - Y1(z e^{-Omega l}) J0(z)]

    with f(z, 0) = 1 (Bessel Wronskian) and f(z, inf) = J0(z).  Even in z;
    vectorized over z; the |z| <= Z_CUT limit is 1.
    """
    z = np.abs(np.asarray(z, dtype=float))
    out = np.ones_like(z)
    big = z > Z_CUT
    if np.any(big):
        zb = z[big]
        u = zb * np.exp(-omega * lam)
        out[big] = (
            0.5 * np.pi * np.exp(-omega * lam) * zb * (j1(u) * y0(zb) - y1(u) * j0(zb))
        )
    return out if out.ndim else float(out)


def adjoint_spectral_basis(h1_init: np.ndarray, omega: float) -> AdjointSpectralBasis:
    """Diagonalize H1(0) and tabulate z_mn = 2(e_m - e_n)/Omega."""
    basis = eigh(h1_init)
    e = basis.eigenvalues
    return AdjointSpectralBasis(basis, 2.0 * (e[:, None] - e[None, :]) / omega)


def early_time_h0(
    h0_init: np.ndarray, h1_init: np.ndarray, omega: float, lam: float
) -> np.ndarray:
    """Leading-order analytic H0(lambda).

    The Bessel functions of the adjoint operator act exactly in the
    eigenbasis of H1(0): matrix element (m, n) of H0(0) is multiplied by
    f(z_mn, lambda).
    """
    sb = adjoint_spectral_basis(h1_init, omega)
    v = sb.basis.eigenvectors
    m = v.conj().T @ h0_init @ v
    m = m * flow_kernel_f(sb.zgrid, lam, omega)
    return v @ m @ v.conj().T


def _magnus_couplings(params: SpinChainParams):
    yy = {}
    zz = {}
    yz = {}
    for d, coupling in ((1, params.J), (2, params.J2)):
        if coupling == 0.0:
            continue
        yy[d] = coupling_sum("y", "y", params.L, d, params.boundary)
        zz[d] = coupling_sum("z", "z", params.L, d, params.boundary)
        yz[d] = coupling_sum("y", "z", params.L, d, params.boundary) + coupling_sum(
            "z", "y", params.L, d, params.boundary
        )
    return yy, zz, yz


def magnus_fourier_h(m: int, params: SpinChainParams) -> np.ndarray:
    """Fourier component h_m of the co-moving Hamiltonian.

    Even m carry (YY, ZZ) couplings with weights -/+ J_m(alpha), odd m the
    mixed (YZ + ZY) coupling; alpha = 4A/Omega.  h_{-m} = h_m^dag.
    """
    if params.Bx != 0.0:
        raise UnsupportedConfigurationError("co-moving decomposition assumes Bx = 0")
    alpha = 4.0 * params.A / params.Omega
    yy, zz, yz = _magnus_couplings(params)
    dim = params.dim
    jm = jv(m, alpha)
    even = (1 + (-1) ** m) / 2
    odd_over_i = (1 - (-1) ** m) / 2j
    total = np.zeros((dim, dim), dtype=complex)
    for d, coupling in ((1, params.J), (2, params.J2)):
        if coupling == 0.0:
            continue
        c_yy = (1.0 if m == 0 else 0.0) - even * jm
        c_zz = (1.0 if m == 0 else 0.0) + even * jm
        total += -0.5 * coupling * (c_yy * yy[d] + c_zz * zz[d])
        if m % 2:
            total += -0.5 * coupling * (odd_over_i * jm) * yz[d]
    # even components are real in the Sz product basis
    return total.real.copy() if m % 2 == 0 else total


def magnus_leading(params: SpinChainParams) -> np.ndarray:
    """h_0: the leading Floquet-Magnus Hamiltonian of the driven chain.

    At alpha = 4A/Omega equal to a zero of J0 this is a pure XX-symmetric
    (YY + ZZ) chain and commutes with the charge.
    """
    if params.Bx != 0.0:
        raise UnsupportedConfigurationError("Magnus reference assumes Bx = 0")
    return magnus_fourier_h(0, params)


def magnus_first_order(params: SpinChainParams, m_max: int) -> np.ndarray:
    """H_F^(1) = -sum_{0<|m|<=m_max} (1/(m Omega)) [h_m, h_0].

    The m <-> -m pairs cancel the anti-Hermitian parts, so the result is
    Hermitian; its norm scales as 1/Omega at fixed alpha (the
    gauge-dependent Magnus order the flow does not reproduce).
    """
    if m_max < 1:
        raise ValueError(f"m_max must be >= 1, got {m_max}")
    h0 = magnus_leading(params)
    total = np.zeros((params.dim, params.dim), dtype=complex)
    for m in range(1, m_max + 1):
        for sign in (1, -1):
            hm = magnus_fourier_h(sign * m, params)
            total += (-1.0 / (sign * m * params.Omega)) * (hm @ h0 - h0 @ hm)
    return total


def instanton_rhs(em: float, en: float, t: complex, omega: float):
    """Reduced single-instanton flow: one matrix element, two levels."""
    growth = 2.0 * abs(t) ** 2
    return growth, -growth, (-omega - em + en) * t


def instanton_reduced_step(
    em: float, en: float, t: complex, omega: float, step: float
) -> tuple[float, float, complex]:
    """One RK4 update of (E_m, E_n, <m|H1|n>)."""
    if step <= 0:
        raise ValueError(f"step must be > 0, got {step}")

    def rhs(y):
        d = instanton_rhs(y[0].real, y[1].real, y[2], omega)
        return np.array(d, dtype=complex)

    y = np.array([em, en, t], dtype=complex)
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * step * k1)
    k3 = rhs(y + 0.5 * step * k2)
    k4 = rhs(y + step * k3)
    y = y + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return float(y[0].real), float(y[1].real), complex(y[2])


def instanton_closed_form(
    omega: float, omega_tilde: float, lambda_tilde: float, lam
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form instanton solution.

    gap(l) = E_n - E_m = Omega - Omega~ tanh(Omega~ (l - l~))
    amp(l) = |<m|H1|n>| = Omega~ / (2 cosh(Omega~ (l - l~)))
    """
    if omega_tilde <= 0:
        raise ValueError(f"omega_tilde must be > 0, got {omega_tilde}")
    x = omega_tilde * (np.asarray(lam, dtype=float) - lambda_tilde)
    gap = omega - omega_tilde * np.tanh(x)
    amp = omega_tilde / (2.0 * np.cosh(x))
    return gap, amp


def _sech_model(lam, a, b):
    return 0.5 * a / np.cosh(a * (lam - b))


def find_instanton_peaks(traj: FlowTrajectory, min_decades: float = 2.0) -> list[int]:
    """Indices of isolated ||H1|| peaks (prominence in decades)."""
    logn = np.log10(np.maximum(traj.norm_h1, 1e-300))
    idx, _ = find_peaks(logn, prominence=min_decades)
    return [int(i) for i in idx]


def peak_window(traj: FlowTrajectory, peak_index: int, halfwidths: float = 5.0):
    """Fit window +- halfwidths/a_init around a detected peak."""
    a_init = 2.0 * traj.norm_h1[peak_index]
    half = halfwidths / a_init
    center = traj.lambdas[peak_index]
    return (center - half, center + half)


def fit_instanton(traj: FlowTrajectory, window: tuple[float, float]) -> InstantonFit:
    """Least-squares fit of (a/2) sech(a (l - b)) to ||H1|| in the window.

    Initialization a = 2 * peak height, b = peak location.  Also reports
    the concurrent ||H0|| change across the window relative to its drift
    in the two equal-length neighboring windows.
    """
    lo, hi = window
    mask = (traj.lambdas >= lo) & (traj.lambdas <= hi)
    if np.count_nonzero(mask) < 5:
        raise PeakError("window contains too few samples")
    lam = traj.lambdas[mask]
    n1 = traj.norm_h1[mask]
    ipk = int(np.argmax(n1))
    if ipk == 0 or ipk == len(n1) - 1:
        raise PeakError("no interior peak in window")
    a0 = 2.0 * n1[ipk]
    b0 = lam[ipk]
    try:
        popt, _ = curve_fit(_sech_model, lam, n1, p0=(a0, b0), maxfev=10000)
    except RuntimeError as err:
        raise PeakError(f"sech fit did not converge: {err}") from None
    a, b = float(abs(popt[0])), float(popt[1])
    resid = n1 - _sech_model(lam, a, b)
    rss = float(np.sum(resid**2))
    rel_rms = float(np.sqrt(np.mean(resid**2)) / np.max(n1))

    dn0 = abs(traj.norm_h0[mask][-1] - traj.norm_h0[mask][0])
    width = hi - lo
    drift = []
    for wlo, whi in ((lo - width, lo), (hi, hi + width)):
        m = (traj.lambdas >= wlo) & (traj.lambdas <= whi)
        if np.count_nonzero(m) >= 2:
            drift.append(abs(traj.norm_h0[m][-1] - traj.norm_h0[m][0]))
    step_ratio = dn0 / max(max(drift), 1e-300) if drift else np.inf
    return InstantonFit(
        omega_tilde=a,
        lambda_tilde=b,
        rss=rss,
        window=(float(lo), float(hi)),
        rel_rms=rel_rms,
        concurrent_h0_step=float(step_ratio),
    )


def fit_to_json(fit: InstantonFit, path) -> None:
    doc = {
        "omega_tilde": fit.omega_tilde,
        "lambda_tilde": fit.lambda_tilde,
        "rss": fit.rss,
        "window": list(fit.window),
        "rel_rms": fit.rel_rms,
        "concurrent_h0_step": fit.concurrent_h0_step,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


def estimate_timescales(omega: float, jeff: float, lrange) -> TimescaleEstimate:
    """Order-of-magnitude prethermal and thermalization fRG times.

    lambda_min ~ (1/Jeff) ln(Omega/Jeff); the l-spin-flip channel
    thermalizes at (f(l) + l ln(Omega/Jeff)) / (l Jeff - Omega), finite
    only for l Jeff > Omega, with the default model f(l) = l ln l.
    """
    if not omega > jeff > 0:
        raise ValueError(f"need Omega > Jeff > 0, got Omega={omega}, Jeff={jeff}")
    lam_min = np.log(omega / jeff) / jeff
    lam_th = {}
    for l in lrange:
        if l * jeff > omega:
            fl = l * np.log(l) if l > 1 else 0.0
            lam_th[int(l)] = float((fl + l * np.log(omega / jeff)) / (l * jeff - omega))
        else:
            lam_th[int(l)] = np.inf
    return TimescaleEstimate(lambda_min_est=float(lam_min), lambda_th=lam_th, Jeff=jeff)
