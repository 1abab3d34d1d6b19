import math

import numpy as np
import pytest

from crtune.device import Channel, CoherenceParams, DeviceParams, static_zz
from crtune.propagation import (
    ConvergenceError,
    batched_hamiltonians,
    evolve_lindblad,
    evolve_unitary,
    lindblad_superoperator,
    prepare_dressed,
    schedule_hamiltonian,
    to_qubit_frame,
    unitary_trajectory,
)
from crtune.pulses import (
    PulseSchedule,
    Segment,
    build_cr_schedule,
    envelope_area,
    flat_top,
)
from crtune.quantum import I2, X, average_gate_fidelity, is_unitary, kron, unvec, vec

UNCOUPLED = DeviceParams(levels=2, J=1e-9)
NO_DECAY = CoherenceParams(math.inf, math.inf, math.inf, math.inf)


def test_empty_schedule_is_identity_in_qubit_frame():
    u = evolve_unitary(UNCOUPLED, PulseSchedule(()), duration=250.0)
    assert np.allclose(to_qubit_frame(UNCOUPLED, u, 250.0), np.eye(4), atol=1e-9)


def test_idle_phase_matches_static_zz(device):
    tau = 1000.0
    u = to_qubit_frame(device, evolve_unitary(device, PulseSchedule(()), duration=tau), tau)
    d = np.diag(u)
    assert np.allclose(np.abs(d), 1)
    zz_phase = np.angle(d[3] * d[0] / (d[1] * d[2]))
    expected = math.remainder(-2 * math.pi * static_zz(device) * 1e-3 * tau, 2 * math.pi)
    assert zz_phase == pytest.approx(expected, abs=1e-8)


def test_resonant_area_half_cycle_is_x_gate():
    width = 80.0
    amp = 0.5 / (envelope_area(flat_top(1.0, width)) * 1e-3)
    sched = PulseSchedule((Segment(0.0, Channel.TARGET, flat_top(amp, width), 0.0, Channel.TARGET),))
    u = to_qubit_frame(UNCOUPLED, evolve_unitary(UNCOUPLED, sched, 0.05), width)
    assert average_gate_fidelity(kron(I2, X), u) > 1 - 1e-6


def test_cr_propagator_unitary(device_xt):
    u = evolve_unitary(device_xt, build_cr_schedule(60, 0.3, 4, 1.0, width=120), 0.1)
    assert is_unitary(u, 1e-8)


def test_batched_matches_pointwise(device_xt):
    sched = build_cr_schedule(60, 0.3, 4, 1.0, width=120)
    times = np.array([0.3, 7.7, 60.0, 119.9])
    hfn = schedule_hamiltonian(device_xt, sched)
    assert np.allclose(batched_hamiltonians(device_xt, sched, times), [hfn(t) for t in times], atol=1e-12)


def test_second_order_convergence(device):
    sched = build_cr_schedule(50, 0.0, width=60)
    ref = evolve_unitary(device, sched, 0.01, check=False)
    dts = np.array([1.0, 0.5, 0.25])
    errs = [np.max(np.abs(evolve_unitary(device, sched, dt, check=False) - ref)) for dt in dts]
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert 1.8 < slope < 2.2


def test_richardson_check_default_schedule(device):
    sched = build_cr_schedule(50, 0.0, width=60)
    evolve_unitary(device, sched, 0.1, tolerance=1e-4)


def test_convergence_error_for_coarse_step(device):
    with pytest.raises(ConvergenceError, match="smaller dt"):
        evolve_unitary(device, build_cr_schedule(150, 0.0, width=60), 5.0)
    with pytest.raises(ValueError):
        evolve_unitary(device, build_cr_schedule(150, 0.0, width=60), 0.0)


def test_trajectory_ends_at_full_propagator(device):
    sched = build_cr_schedule(40, 0.2, width=60)
    times, units = unitary_trajectory(device, sched, 0.1)
    assert times[-1] == pytest.approx(60.0)
    assert np.allclose(units[-1], evolve_unitary(device, sched, 0.1, check=False), atol=1e-12)


def test_t1_decay():
    coh = CoherenceParams(T1_control=30.0, T1_target=5.0, T2_control=30.0, T2_target=10.0)
    rho0 = np.zeros((4, 4), complex)
    rho0[1, 1] = 1  # target excited
    tr = evolve_lindblad(UNCOUPLED, coh, PulseSchedule(()), rho0, duration=4000.0)
    assert tr.final[1, 1].real == pytest.approx(math.exp(-4000 / 5000), abs=1e-4)


def test_t2_decay():
    coh = CoherenceParams(T1_control=30.0, T1_target=20.0, T2_control=30.0, T2_target=15.0)
    plus = np.array([1, 1, 0, 0], complex) / math.sqrt(2)
    tau = 3000.0
    rho = to_frame_free(evolve_lindblad(UNCOUPLED, coh, PulseSchedule(()), plus, duration=tau).final, tau)
    assert abs(rho[0, 1]) == pytest.approx(0.5 * math.exp(-tau / 15000), abs=1e-4)


def to_frame_free(rho, tau):
    u = to_qubit_frame(UNCOUPLED, np.eye(4), tau)
    return u @ rho @ u.conj().T


def test_lindblad_trace_and_positivity(device):
    rho0 = np.outer(prepare_dressed(device, 1, 0), prepare_dressed(device, 1, 0).conj())
    tr = evolve_lindblad(device, CoherenceParams(), build_cr_schedule(60, 0.0, width=60), rho0, dt=0.5)
    for rho in tr.states:
        assert abs(np.trace(rho) - 1) < 1e-8
        assert np.linalg.eigvalsh(rho).min() > -1e-8


def test_lindblad_without_decay_matches_unitary(device):
    sched = build_cr_schedule(60, 0.4, width=60)
    psi = prepare_dressed(device, 1, 0)
    u = evolve_unitary(device, sched, 0.1, check=False)
    rho = evolve_lindblad(device, NO_DECAY, sched, psi, 0.1).final
    assert np.max(np.abs(rho - np.outer(u @ psi, (u @ psi).conj()))) < 1e-6


def test_superoperator_consistent_with_trajectory(device):
    sched = build_cr_schedule(30, 0.0, width=40)
    rho0 = np.outer(prepare_dressed(device, 0, 0), prepare_dressed(device, 0, 0).conj())
    s = lindblad_superoperator(device, CoherenceParams(), sched, 0.5)
    final = evolve_lindblad(device, CoherenceParams(), sched, rho0, 0.5).final
    assert np.allclose(unvec(s @ vec(rho0)), final, atol=1e-12)
