import numpy as np
import pytest
from scipy.special import j0

from floqflow.analytics import (
    InstantonFit,
    PeakError,
    UnsupportedConfigurationError,
    adjoint_spectral_basis,
    early_time_h0,
    estimate_timescales,
    find_instanton_peaks,
    fit_instanton,
    flow_kernel_f,
    instanton_closed_form,
    instanton_reduced_step,
    magnus_first_order,
    magnus_fourier_h,
    magnus_leading,
    peak_window,
)
from floqflow.flow import FlowConfig, FlowTrajectory, run_flow
from floqflow.hilbert import SpinChainParams, build_charge, build_drive, build_static
from floqflow.opkernel import commutator, frobenius_norm, hermiticity_defect

ALPHA_ZERO_1 = 2.404826  # first zero of J0
FP1 = ALPHA_ZERO_1 / 4


def test_kernel_initial_value():
    for z in (0.5, 2.0, 7.3):
        assert abs(flow_kernel_f(z, 0.0, 3.0) - 1.0) <= 1e-10


def test_kernel_asymptotic_bessel():
    z = 2.4048
    assert abs(flow_kernel_f(z, 30.0 / 5.0, 5.0) - j0(z)) <= 1e-8


def test_kernel_z_zero_and_evenness():
    assert flow_kernel_f(0.0, 4.2, 1.0) == 1.0
    z = np.array([-3.3, 3.3])
    vals = flow_kernel_f(z, 0.7, 2.0)
    assert vals[0] == vals[1]


def test_adjoint_zgrid_antisymmetric():
    p = SpinChainParams(L=3, A=2.0, Omega=5.0)
    sb = adjoint_spectral_basis(build_drive(p).astype(complex), 5.0)
    assert np.allclose(sb.zgrid, -sb.zgrid.T)


def test_early_time_identity_cases():
    p = SpinChainParams(L=4, J=1.0, A=3.0, Omega=10.0)
    h0 = build_static(p).astype(complex)
    h1 = build_drive(p).astype(complex)
    assert frobenius_norm(early_time_h0(h0, h1, 10.0, 0.0) - h0) <= 1e-10 * frobenius_norm(h0)
    # commuting data never moves
    hc = build_drive(SpinChainParams(L=4, A=1.7)).astype(complex)
    out = early_time_h0(hc, h1, 10.0, 2.0)
    assert frobenius_norm(out - hc) <= 1e-10 * frobenius_norm(hc)
    assert hermiticity_defect(early_time_h0(h0, h1, 10.0, 0.3)) <= 1e-10


def test_early_time_deviation_scales_inverse_omega_squared():
    devs = {}
    for omega in (10.0, 20.0):
        p = SpinChainParams(L=4, J=1.0, Omega=omega).with_ratio(FP1)
        h0 = build_static(p)
        h1 = build_drive(p)
        cfg = FlowConfig(omega=omega, lambda_max=1.0, step=1e-3, record_stride=100)
        traj = run_flow(h0, h1, cfg)
        dev = 0.0
        for lam, h0_flow in [(1.0, traj.final_state.h0)]:
            approx = early_time_h0(h0.astype(complex), h1.astype(complex), omega, lam)
            dev = max(dev, frobenius_norm(h0_flow - approx) / frobenius_norm(h0))
        devs[omega] = dev
    ratio = devs[10.0] / devs[20.0]
    assert 2.0 <= ratio <= 8.0  # ~4x per frequency doubling


def test_magnus_leading_structure():
    from scipy.special import jn_zeros

    p = SpinChainParams(L=6, J=1.0, J2=0.2, Omega=10.0).with_ratio(jn_zeros(0, 1)[0] / 4)
    h0m = magnus_leading(p)
    assert frobenius_norm(commutator(h0m, build_charge(6))) <= 1e-12 * frobenius_norm(h0m)
    # A=0: J0(0)=1 recovers the bare static part
    p0 = SpinChainParams(L=6, J=1.0, J2=0.2, Omega=10.0, A=0.0)
    assert np.allclose(magnus_leading(p0), build_static(p0), atol=1e-12)
    with pytest.raises(UnsupportedConfigurationError):
        magnus_leading(SpinChainParams(L=4, Bx=0.1))


def test_magnus_fourier_components():
    p = SpinChainParams(L=4, J=1.0, A=4.0, Omega=10.0)
    assert np.allclose(magnus_fourier_h(0, p), magnus_leading(p))
    for m in (1, 2):
        hm = magnus_fourier_h(m, p)
        hmm = magnus_fourier_h(-m, p)
        assert np.allclose(hmm, hm.conj().T, atol=1e-12)
        assert frobenius_norm(commutator(hm, hmm)) <= 1e-10


def test_magnus_fourier_completeness():
    # sum_m h_m at t=0 reproduces the bare static Hamiltonian
    p = SpinChainParams(L=4, J=1.0, A=4.0, Omega=10.0)
    total = magnus_fourier_h(0, p).astype(complex)
    for m in range(1, 13):
        total += magnus_fourier_h(m, p) + magnus_fourier_h(-m, p)
    h0 = build_static(p)
    assert frobenius_norm(total - h0) <= 1e-8 * frobenius_norm(h0)


def test_magnus_first_order():
    p0 = SpinChainParams(L=4, J=1.0, A=0.0, Omega=10.0)
    assert np.allclose(magnus_first_order(p0, 8), 0.0)
    p = SpinChainParams(L=4, J=1.0, Omega=10.0).with_ratio(FP1)
    hf1 = magnus_first_order(p, 8)
    assert hermiticity_defect(hf1) <= 1e-10
    p2 = SpinChainParams(L=4, J=1.0, Omega=20.0).with_ratio(FP1)
    assert frobenius_norm(magnus_first_order(p2, 8)) == pytest.approx(
        frobenius_norm(hf1) / 2.0, rel=1e-10
    )
    with pytest.raises(ValueError):
        magnus_first_order(p, 0)


def test_instanton_step_conservation_and_fixed_point():
    em, en, t = 0.3, -0.2, 0.0 + 0.0j
    assert instanton_reduced_step(em, en, t, 2.0, 0.01) == (em, en, t)
    em, en, t = 0.3, -0.2, 0.05 + 0.02j
    total0 = em + en
    for _ in range(1000):
        em, en, t = instanton_reduced_step(em, en, t, 2.0, 0.01)
    assert abs((em + en) - total0) <= 1e-10


def test_instanton_closed_form_values():
    gap, amp = instanton_closed_form(2.0, 1.7, 5.0, 5.0)
    assert gap == pytest.approx(2.0) and amp == pytest.approx(0.85)
    lam = np.array([-100.0, 110.0])
    gap, amp = instanton_closed_form(2.0, 1.7, 5.0, lam)
    assert np.allclose(amp, 0.0, atol=1e-12)
    assert gap[0] == pytest.approx(2.0 + 1.7)
    assert gap[1] == pytest.approx(2.0 - 1.7)
    with pytest.raises(ValueError):
        instanton_closed_form(2.0, -1.0, 0.0, 0.0)


def test_instanton_step_matches_closed_form():
    omega, a, b = 2.0, 0.9, 6.0
    lam0 = b - 10.0 / a
    lam1 = b + 10.0 / a
    gap0, amp0 = instanton_closed_form(omega, a, b, lam0)
    # split the gap symmetrically; only differences matter
    em, en, t = -gap0 / 2, gap0 / 2, complex(amp0)
    step = 1e-3
    n = int(round((lam1 - lam0) / step))
    lam = lam0
    worst = 0.0
    for k in range(n):
        em, en, t = instanton_reduced_step(em, en, t, omega, step)
        lam += step
        if k % 500 == 0 or k == n - 1:
            gap_ref, amp_ref = instanton_closed_form(omega, a, b, lam)
            worst = max(worst, abs((en - em) - gap_ref), abs(abs(t) - amp_ref))
    assert worst <= 1e-6


def synthetic_trajectory(a=1.7, b=120.0, noise=1e-4, seed=7):
    lam = np.arange(b - 8.0 / a, b + 8.0 / a, 0.02 / a)
    _, amp = instanton_closed_form(5.0, a, b, lam)
    rng = np.random.default_rng(seed)
    n1 = amp * (1.0 + noise * rng.standard_normal(lam.size))
    # H0 norm takes a tanh step across the event
    n0 = 10.0 + 0.5 * np.tanh(a * (lam - b))
    return FlowTrajectory(
        lambdas=lam, norm_h0=n0, norm_h1=n1, P=np.ones_like(lam),
        Q=n1 / n0, omega=5.0, step=lam[1] - lam[0],
    )


def test_fit_instanton_recovers_synthetic_parameters():
    traj = synthetic_trajectory()
    peaks = find_instanton_peaks(traj, min_decades=1.0)
    assert len(peaks) == 1
    fit = fit_instanton(traj, peak_window(traj, peaks[0]))
    assert abs(fit.omega_tilde - 1.7) / 1.7 <= 0.01
    assert abs(fit.lambda_tilde - 120.0) / 120.0 <= 0.01
    assert fit.window[0] <= fit.lambda_tilde <= fit.window[1]
    assert fit.concurrent_h0_step > 10.0


def test_fit_instanton_scale_covariance():
    t1 = synthetic_trajectory(a=1.7, b=120.0, noise=0.0)
    s = 3.0
    # rescaled instanton: lambda stretches by s, amplitude shrinks by 1/s
    t2 = FlowTrajectory(
        lambdas=s * t1.lambdas, norm_h0=t1.norm_h0, norm_h1=t1.norm_h1 / s,
        P=t1.P, Q=t1.Q, omega=t1.omega, step=s * t1.step,
    )
    f1 = fit_instanton(t1, peak_window(t1, find_instanton_peaks(t1, 1.0)[0]))
    f2 = fit_instanton(t2, peak_window(t2, find_instanton_peaks(t2, 1.0)[0]))
    assert f2.omega_tilde == pytest.approx(f1.omega_tilde / s, rel=1e-6)
    assert f2.lambda_tilde == pytest.approx(f1.lambda_tilde * s, rel=1e-6)


def test_fit_instanton_requires_peak():
    lam = np.linspace(0.0, 10.0, 200)
    traj = FlowTrajectory(
        lambdas=lam, norm_h0=np.ones_like(lam), norm_h1=np.exp(-lam),
        P=np.ones_like(lam), Q=np.exp(-lam), omega=1.0, step=lam[1] - lam[0],
    )
    with pytest.raises(PeakError):
        fit_instanton(traj, (2.0, 8.0))


def test_estimate_timescales():
    est = estimate_timescales(np.e, 1.0, range(1, 8))
    assert est.lambda_min_est == pytest.approx(1.0)
    est = estimate_timescales(2.0, 0.47, range(1, 30))
    assert est.lambda_min_est == pytest.approx(np.log(2.0 / 0.47) / 0.47, rel=1e-12)
    for l, val in est.lambda_th.items():
        if l * 0.47 <= 2.0:
            assert val == np.inf
        else:
            assert np.isfinite(val) and val > 0
    with pytest.raises(ValueError):
        estimate_timescales(1.0, 2.0, [3])
