"""Simulation, Hamiltonian tomography and calibration of echoed cross-resonance gates."""

__version__ = "0.1.0"

from .benchmarking import (
    CliffordError,
    CliffordGroup,
    CompiledChannels,
    DepolarizingChannels,
    IdealChannels,
    RBFitError,
    clifford_group_2q,
    interleaved_rb,
    rb_experiment,
)
from .calibration import (
    CalibrationError,
    CalibrationResult,
    calibrate_zx90,
    cancellation_amplitude_sweep,
    coherence_limit,
    echoed_gate_unitary,
    gate_channel,
    phase_sweep,
)
from .device import (
    REFERENCE_COHERENCE,
    REFERENCE_DEVICE,
    Channel,
    CoherenceParams,
    DeviceError,
    DeviceParams,
    DriveConfig,
    dressed_frequencies,
    static_zz,
)
from .effective import (
    BlockAssignmentError,
    effective_cr_coefficients,
    effective_hamiltonian,
    least_action_blockdiag,
)
from .io import ConfigError, load_config
from .propagation import ConvergenceError, evolve_lindblad, evolve_unitary
from .pulses import (
    PulseError,
    PulseSchedule,
    build_cr_schedule,
    build_echoed_cr_schedule,
    drag,
    flat_top,
)
from .quantum import MHZ, QuantumError, average_gate_fidelity, pauli_decompose
from .tomography import (
    CRCoefficients,
    CRParams,
    TomographyDataset,
    TomographyError,
    fit_bloch_generator,
    fit_dataset,
    measure_cr_hamiltonian,
)

__all__ = [name for name in dir() if not name.startswith("_")]
