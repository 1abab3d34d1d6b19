import math

import numpy as np
import pytest

from crtune.calibration import (
    CalibrationError,
    CalibrationResult,
    SweepRecord,
    calibrate_zx90,
    calibration_from_dict,
    cancellation_amplitude_sweep,
    coherence_limit,
    echoed_gate_unitary,
    echoed_target,
    find_phi0,
    find_phi1,
    phase_sweep,
    sinusoid_fit,
    target_rate,
    theory_amplitude,
    toy_echo_unitary,
    tune_pi_pulse,
    zx90,
)
from crtune.device import CoherenceParams, DeviceParams
from crtune.pulses import envelope_area, flat_top
from crtune.quantum import average_gate_fidelity
from crtune.tomography import CRCoefficients

PHASES = np.linspace(0, 2 * np.pi, 16, endpoint=False)


def synthetic_records(phi0, a=2.0, phi1=0.0, b=1.0, zz=0.1, phases=PHASES):
    recs = []
    for ph in phases:
        c = CRCoefficients(IX=b * math.cos(ph - phi1), IY=b * math.sin(ph - phi1), IZ=0.01,
                           ZX=a * math.cos(ph - phi0), ZY=a * math.sin(ph - phi0), ZZ=zz)
        recs.append(SweepRecord("phase", float(ph), c))
    return recs


def test_find_phi0_synthetic():
    assert find_phi0(synthetic_records(0.7)) == pytest.approx(0.7, abs=0.01)


def test_find_phi0_equivariant():
    delta = 0.9
    shifted = synthetic_records(0.7, phases=PHASES + delta)
    assert find_phi0(shifted) - find_phi0(synthetic_records(0.7)) == pytest.approx(0.0, abs=1e-12)
    # rotating the coefficient curves by delta moves phi0 by delta
    assert find_phi0(synthetic_records(0.7 + delta)) - find_phi0(synthetic_records(0.7)) == pytest.approx(delta)


def test_find_phi0_without_conditional_drive():
    with pytest.raises(CalibrationError, match="no conditional drive"):
        find_phi0(synthetic_records(0.0, a=0.0))


def test_find_phi0_ignores_failed_points():
    recs = synthetic_records(1.1)
    recs[3] = SweepRecord("phase", recs[3].value, None, error="fit failed")
    assert find_phi0(recs) == pytest.approx(1.1, abs=1e-9)


def test_sinusoid_fit_quality():
    _, _, r2 = sinusoid_fit(synthetic_records(0.3), "ZX", "ZY")
    assert r2 > 0.999


def test_find_phi1_and_cancel_phase():
    res = find_phi1(synthetic_records(0.7, phi1=0.7 - math.pi / 4))
    assert not res.flagged
    assert 0.7 - res.phi1 == pytest.approx(math.pi / 4, abs=1e-9)
    assert res.amplitude == pytest.approx(1.0)


def test_find_phi1_flags_negligible_single_qubit_drive():
    res = find_phi1(synthetic_records(0.7, b=0.0))
    assert res.flagged and res.amplitude == 0.0


def test_find_phi1_equivariant():
    a = find_phi1(synthetic_records(0.2, phi1=-0.5)).phi1
    b = find_phi1(synthetic_records(0.2, phi1=-0.5 + 0.4)).phi1
    assert b - a == pytest.approx(0.4)


def test_toy_echo_commuting_subsets_are_exact():
    half = 60.0
    zx = 1 / (8 * half * 1e-3)
    pure = toy_echo_unitary({"ZX": zx}, half)
    assert average_gate_fidelity(zx90(), pure) > 1 - 1e-12
    for extra in ({"IX": 0.8 * zx, "ZI": -0.3 * zx}, {"ZI": 0.5}):
        u = toy_echo_unitary({"ZX": zx, **extra}, half)
        assert np.max(np.abs(u - pure)) < 1e-9
    # ZZ commutes with ZI and is refocused on its own
    zz_only = toy_echo_unitary({"ZZ": 0.4, "ZI": 0.2}, half)
    assert np.allclose(zz_only, toy_echo_unitary({}, half), atol=1e-9)


def test_toy_echo_iy_not_refocused():
    half = 60.0
    zx = 1 / (8 * half * 1e-3)
    u = toy_echo_unitary({"ZX": zx, "IY": 0.1 * zx}, half)
    assert 1 - average_gate_fidelity(zx90(), u) > 1e-4
    worse = toy_echo_unitary({"ZX": zx, "IY": 0.2 * zx}, half)
    assert average_gate_fidelity(zx90(), worse) < average_gate_fidelity(zx90(), u)


def test_target_rate_gives_45_degrees():
    w = 60.0
    assert target_rate(w) * envelope_area(flat_top(1.0, w)) * 1e-3 == pytest.approx(1 / 8)


def test_theory_amplitude(device):
    from crtune.effective import cr_drive, effective_cr_coefficients

    a = theory_amplitude(device, 2.0)
    c = effective_cr_coefficients(device, cr_drive(a, 0.0, device))
    assert math.hypot(c["ZX"], c["ZY"]) == pytest.approx(2.0, abs=1e-6)
    with pytest.raises(CalibrationError, match="unreachable"):
        theory_amplitude(device, 50.0, max_amp=60.0)


def test_calibration_dict_roundtrip():
    cal = CalibrationResult(0.1, -0.2, 0.3, 4.0, 60.0, 60.0, 2.9, {"IX": 0.01}, 0.98, 160.0,
                            pi_pulse=None)
    back = calibration_from_dict(cal.to_dict())
    assert back.to_dict() == cal.to_dict()
    with pytest.raises(CalibrationError):
        calibration_from_dict({**cal.to_dict(), "schema_version": 5})


def test_zx90_is_cnot_generator():
    u = zx90()
    assert np.allclose(u @ u, -1j * np.kron(np.diag([1, -1]), [[0, 1], [1, 0]]), atol=1e-12)


def test_coherence_limit_two_level():
    f = coherence_limit(CoherenceParams(), 160.0)
    assert f == pytest.approx(0.996, abs=0.002)
    assert coherence_limit(CoherenceParams(math.inf, math.inf, math.inf, math.inf)) == pytest.approx(1.0, abs=1e-9)


def test_phase_sweep_validation(device):
    with pytest.raises(CalibrationError, match="8 points"):
        phase_sweep(device, 40.0, np.linspace(0, 2 * np.pi, 4))
    with pytest.raises(CalibrationError, match="2\\*pi"):
        phase_sweep(device, 40.0, np.linspace(0, 1.0, 10))


def test_cancellation_sweep_errors(device):
    with pytest.raises(CalibrationError, match="degenerate"):
        cancellation_amplitude_sweep(device, 0.0, 0.0, 0.0, [1, 2, 3])
    with pytest.raises(CalibrationError, match="3 amplitudes"):
        cancellation_amplitude_sweep(device, 40.0, 0.0, 0.0, [1, 2])


@pytest.fixture(scope="module")
def device_sweep(device_xt):
    recs = phase_sweep(device_xt, 50.0)
    return recs, find_phi0(recs), find_phi1(recs)


@pytest.mark.slow
def test_device_phase_sweep_properties(device_sweep):
    recs, _, _ = device_sweep
    mag = np.array([math.hypot(r.coefficients.ZX, r.coefficients.ZY) for r in recs])
    assert np.ptp(mag) / mag.mean() < 0.02
    assert sinusoid_fit(recs, "ZX", "ZY")[2] > 0.99
    zz = np.abs([r.coefficients.ZZ for r in recs])
    assert zz.std() / zz.mean() < 0.2


@pytest.mark.slow
def test_device_cancellation_sweep(device_xt, device_sweep):
    _, phi0, ph1 = device_sweep
    cancel = phi0 - ph1.phi1
    amps = np.linspace(0.5, 1.5, 5) * ph1.amplitude
    good = cancellation_amplitude_sweep(device_xt, 50.0, phi0, cancel, amps)
    assert not good.phase_error
    assert abs(good.a_ix - good.a_iy) / good.optimum < 0.05
    with pytest.warns(UserWarning, match="cancellation phase is incorrect"):
        bad = cancellation_amplitude_sweep(device_xt, 50.0, phi0, cancel + 0.3, amps)
    assert bad.phase_error


@pytest.mark.slow
def test_device_cancellation_nulls_single_qubit_terms(device_xt, device_sweep):
    from crtune.tomography import CRParams, measure_cr_hamiltonian

    _, phi0, ph1 = device_sweep
    cancel = phi0 - ph1.phi1
    amps = np.linspace(0.5, 1.5, 5) * ph1.amplitude
    opt = cancellation_amplitude_sweep(device_xt, 50.0, phi0, cancel, amps).optimum
    c = measure_cr_hamiltonian(device_xt, CRParams(50.0, phi0, opt, cancel + math.pi)).coefficients
    assert abs(c.IX) < 0.02 and abs(c.IY) < 0.02


@pytest.mark.slow
def test_pi_pulse_tuning(device):
    from crtune.device import Channel
    from crtune.propagation import evolve_unitary, to_qubit_frame
    from crtune.pulses import PulseSchedule, Segment
    from crtune.quantum import I2, X, kron

    env = tune_pi_pulse(device)
    sched = PulseSchedule((Segment(0.0, Channel.CONTROL, env, 0.0, Channel.CONTROL),))
    u = to_qubit_frame(device, evolve_unitary(device, sched, 0.1, check=False), env.duration)
    assert average_gate_fidelity(kron(X, I2), u) > 0.999


@pytest.mark.slow
def test_calibration_cancel_phase_invariant_and_ordering():
    p = DeviceParams(crosstalk=0.1 * np.exp(1j * np.pi / 4))
    on = calibrate_zx90(p, 160.0, n_phases=8, n_amps=5)
    assert on.cancel_phase == on.phi0 - on.phi1
    off = calibrate_zx90(p, 160.0, cancellation=False, pi_pulse=on.pi_pulse, n_phases=8)
    assert off.cancel_amp == 0.0
    assert on.gate_fidelity_estimate > off.gate_fidelity_estimate
    u = echoed_gate_unitary(p, on)
    assert average_gate_fidelity(echoed_target(), u) == pytest.approx(on.gate_fidelity_estimate)


def test_gate_time_too_short(device):
    with pytest.raises(CalibrationError, match="no room"):
        calibrate_zx90(device, 40.0)
