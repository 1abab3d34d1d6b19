import math

import numpy as np
import pytest

from crtune.pulses import DEFAULT_RISE
from crtune.quantum import MHZ, pauli2
from crtune.tomography import (
    BlochGenerator,
    CRCoefficients,
    CRParams,
    InsufficientSampling,
    TomographyDataset,
    TomographyError,
    bloch_model,
    estimate_entangling_time,
    extract_cr_coefficients,
    fit_bloch_generator,
    fit_dataset,
    plan_tomography,
    r_vector_trace,
    simulate_rabi_dataset,
    synthetic_rabi_dataset,
)

GRID = np.linspace(0.0, 1000.0, 64)


def cr_hamiltonian(**rates):
    """2*pi * sum(rate * P) / 2 with rates in MHz."""
    return sum(MHZ * r * pauli2(k) / 2 for k, r in rates.items())


def target_hamiltonian(ox, oy, delta):
    # control idle, target driven with the generator's rates
    return cr_hamiltonian(IX=ox, IY=oy, IZ=-delta)


def test_bloch_model_matches_schrodinger_evolution():
    ds = synthetic_rabi_dataset(target_hamiltonian(1.3, -0.4, 0.7), GRID)
    assert np.allclose(bloch_model((1.3, -0.4, 0.7), np.array([0, 0, 1.0]), GRID), ds.bloch(0), atol=1e-10)


def test_recovers_pure_x_rotation():
    ds = synthetic_rabi_dataset(target_hamiltonian(2.0, 0.0, 0.0), GRID)
    g = fit_bloch_generator(GRID, *ds.bloch(0).T)
    assert np.allclose(g.vector, [2.0, 0.0, 0.0], atol=1e-6)
    assert g.residual < 1e-9


def test_constant_trace_gives_zero_generator():
    n = GRID.size
    g = fit_bloch_generator(GRID, np.zeros(n), np.zeros(n), np.ones(n))
    assert np.all(g.vector == 0) and g.residual == 0.0


def test_shot_noise_within_bootstrap_uncertainty():
    truth = np.array([1.0, 0.5, 0.3])
    h = target_hamiltonian(*truth)
    fit = fit_bloch_generator(GRID, *synthetic_rabi_dataset(h, GRID, shots=1024, seed=7).bloch(0).T)
    # parametric bootstrap around the fitted model
    model = synthetic_rabi_dataset(target_hamiltonian(*fit.vector), GRID)
    rng = np.random.default_rng(11)
    boots = []
    for _ in range(30):
        p = np.clip((1 + model.bloch(0)) / 2, 0, 1)
        r = 2 * rng.binomial(1024, p) / 1024 - 1
        boots.append(fit_bloch_generator(GRID, *r.T).vector)
    sigma = np.std(boots, axis=0, ddof=1)
    assert np.all(np.abs(fit.vector - truth) < 3 * sigma + 1e-12)
    assert np.all(sigma < 0.01)


def test_insufficient_sampling():
    t = np.linspace(0, 100, 8)
    with pytest.raises(InsufficientSampling, match="insufficient sampling"):
        fit_bloch_generator(t, np.zeros(8), np.zeros(8), np.ones(8))
    # 0.5 MHz over 1 us is half a period
    t = np.linspace(0, 1000, 40)
    r = bloch_model((0.5, 0, 0), np.array([0, 0, 1.0]), t)
    with pytest.raises(InsufficientSampling, match="periods"):
        fit_bloch_generator(t, *r.T)


def test_aliasing_warning():
    t = np.linspace(0, 200, 41)  # Nyquist 100 MHz
    r = bloch_model((90.0, 0, 0), np.array([0, 0, 1.0]), t)
    with pytest.warns(UserWarning, match="Nyquist"):
        fit_bloch_generator(t, *r.T)


def test_fit_r0_absorbs_preparation_error():
    r0 = np.array([0.3, 0.0, math.sqrt(1 - 0.09)])
    r = bloch_model((1.5, 0.2, -0.4), r0, GRID)
    g = fit_bloch_generator(GRID, *r.T, fit_r0=True)
    assert np.allclose(g.vector, [1.5, 0.2, -0.4], atol=1e-6)
    assert np.allclose(g.r0, r0, atol=1e-6)


def test_model_preserves_norm(rng):
    for _ in range(20):
        params = rng.uniform(-10, 10, 3)
        r0 = rng.normal(size=3)
        r = bloch_model(params, r0, GRID)
        assert np.max(np.abs(np.linalg.norm(r, axis=1) - np.linalg.norm(r0))) < 1e-9


def test_generator_matrix_antisymmetric():
    a = BlochGenerator(1.0, -2.0, 0.5).matrix()
    assert np.array_equal(a, -a.T)


def test_extract_examples():
    g = BlochGenerator(1.0, 0.2, -0.3)
    c = extract_cr_coefficients(g, g)
    assert c.ZX == 0 and c.ZY == 0 and c.ZZ == 0
    c = extract_cr_coefficients(BlochGenerator(3.0, 0, 0), BlochGenerator(-3.0, 0, 0))
    assert c.ZX == 3.0 and c.IX == 0.0
    assert math.isnan(c.ZI)


def test_extract_is_linear(rng):
    v0, v1 = rng.normal(size=3), rng.normal(size=3)
    s = 2.7
    a = extract_cr_coefficients(BlochGenerator(*v0), BlochGenerator(*v1)).as_dict()
    b = extract_cr_coefficients(BlochGenerator(*(s * v0)), BlochGenerator(*(s * v1))).as_dict()
    for k in ("IX", "IY", "IZ", "ZX", "ZY", "ZZ"):
        assert b[k] == pytest.approx(s * a[k])


def test_end_to_end_synthetic_hamiltonian():
    h = cr_hamiltonian(ZX=1.5, IX=0.8, IY=0.2)
    res = fit_dataset(synthetic_rabi_dataset(h, GRID), fit_r0=False)
    want = {"ZX": 1.5, "IX": 0.8, "IY": 0.2, "IZ": 0, "ZY": 0, "ZZ": 0}
    for k, v in want.items():
        assert getattr(res.coefficients, k) == pytest.approx(v, abs=1e-3)


def test_pure_zx_mirror_symmetry():
    ds = synthetic_rabi_dataset(cr_hamiltonian(ZX=2.0), GRID)
    assert np.allclose(ds.traces[(0, "y")], -ds.traces[(1, "y")], atol=1e-12)
    assert np.allclose(ds.traces[(0, "z")], ds.traces[(1, "z")], atol=1e-12)


def test_r_vector_examples():
    same = synthetic_rabi_dataset(cr_hamiltonian(IX=1.0), GRID)
    assert np.allclose(r_vector_trace(same), 1.0)
    # conditional +-90 degree rotations cancel at t = 1/(4 f)
    f = 3.01
    t = np.array([1e3 / (4 * f)])
    ds = synthetic_rabi_dataset(cr_hamiltonian(ZX=f), t)
    assert r_vector_trace(ds)[0] < 1e-12


def test_entangling_time_synthetic():
    f = 3.01
    t = np.linspace(0, 200, 201)
    ds = synthetic_rabi_dataset(cr_hamiltonian(ZX=f), t)
    assert abs(estimate_entangling_time(t, r_vector_trace(ds)) - 1e3 / (4 * f)) <= t[1] - t[0]


def test_entangling_time_error_without_drive():
    t = np.linspace(0, 500, 50)
    with pytest.raises(TomographyError, match="no entangling point"):
        estimate_entangling_time(t, np.ones_like(t))


def test_planner_six_traces_per_pair():
    for n in (2, 3, 5):
        specs = plan_tomography(n)
        assert len(specs) == 6 * n * (n - 1) // 2
        assert len({(s.control, s.target) for s in specs}) == n * (n - 1) // 2


def test_dataset_roundtrips():
    ds = synthetic_rabi_dataset(cr_hamiltonian(ZX=1.0, IX=0.3), GRID, shots=256, seed=3)
    back = TomographyDataset.from_csv(ds.to_csv(), shots=256)
    for k in ds.traces:
        assert np.array_equal(back.traces[k], ds.traces[k])
    again = TomographyDataset.from_dict(ds.to_dict())
    assert again.shots == 256 and np.array_equal(again.durations, ds.durations)
    assert ds.to_csv().splitlines()[0] == "duration_ns,c0_x,c0_y,c0_z,c1_x,c1_y,c1_z"


def test_dataset_validation():
    with pytest.raises(TomographyError, match="missing"):
        TomographyDataset([0, 1], {})
    with pytest.raises(TomographyError, match="schema_version"):
        TomographyDataset.from_dict({"schema_version": 2})


def test_simulated_zero_drive(device):
    t = np.linspace(2 * DEFAULT_RISE, 600, 20)
    ds = simulate_rabi_dataset(device, CRParams(0.0), t)
    for c in (0, 1):
        assert np.allclose(ds.traces[(c, "z")], 1, atol=1e-9)
        assert np.allclose(ds.traces[(c, "x")], 0, atol=1e-9)


def test_simulated_control_states_differ(device):
    t = np.linspace(2 * DEFAULT_RISE, 1000, 64)
    res = fit_dataset(simulate_rabi_dataset(device, CRParams(40.0), t))
    f0, f1 = (np.linalg.norm(g.vector) for g in res.generators)
    assert abs(f0 - f1) > 0.1


def test_simulation_rejects_bad_grid(device):
    with pytest.raises(TomographyError):
        simulate_rabi_dataset(device, CRParams(10.0), [100, 50])
    with pytest.raises(TomographyError, match="rise"):
        simulate_rabi_dataset(device, CRParams(10.0), [5, 100])


def test_coefficients_scaled_and_dict():
    c = CRCoefficients(1, 2, 3, 4, 5, 6)
    assert c.scaled(2).ZZ == 12
    assert set(c.as_dict()) == set(CRCoefficients.LABELS)


def test_shot_sampling_is_seeded():
    h = cr_hamiltonian(ZX=1.0)
    a = synthetic_rabi_dataset(h, GRID, shots=100, seed=5)
    b = synthetic_rabi_dataset(h, GRID, shots=100, seed=5)
    assert all(np.array_equal(a.traces[k], b.traces[k]) for k in a.traces)
