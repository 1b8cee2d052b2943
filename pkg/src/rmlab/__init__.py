"""Randomized-measurement laboratory for an interacting Rydberg chain.

Conventions used everywhere: site 1 is the most significant bit of a basis
index, bit 1 means spin up, rotation labels are ordered
1: exp(-i pi/4 X), 2: exp(-i pi/4 Y), 3: identity, and all Hamiltonian
rates are angular (rad/us) with times in us.
"""

from .pauli import (
    LABELS,
    ROTATION_ORDER,
    PAULI_MATRICES,
    ROTATION_MATRICES,
    TWO_PI,
    PauliString,
    PauliStringSum,
    pauli_mul,
    conjugate_by_labels,
    square_observable,
    build_ssh,
    build_staggered_xy,
    hamiltonian_to_json,
    hamiltonian_from_json,
)
from .statevector import (
    StateVector,
    ReducedDensityMatrix,
    NumericalContractError,
    ConvergenceError,
    DegenerateGroundStateError,
    product_state,
    all_down,
    random_state,
    expectation,
    apply_local_unitaries,
    evolve_blend,
    evolve_static,
    ground_state,
    sample_basis_indices,
    sample_bitstrings,
    reduced_density,
    exact_purity,
    state_fidelity,
)
from .pulses import (
    AMP_CAP,
    SLEW_CAP,
    TARGET_AXES,
    ConstraintError,
    CalibrationError,
    Waveform,
    PulseSchedule,
    FluctuationModel,
    RealisticParams,
    ideal_schedule,
    realistic_schedule,
    default_realistic_params,
    perturb,
    single_qubit_propagator,
    propagator_batch,
    measured_axis,
    axis_fidelity,
    figure_of_merit,
    figure_of_merit_antisymmetric,
    mc_rotation_stats,
    calibrate,
    schedule_to_json,
    schedule_from_json,
    golden_schedule,
)
from .protocol import (
    EXACT_SHOTS,
    BIT_CONVENTION,
    UnitarySample,
    ReadoutErrorModel,
    default_readout,
    UnitaryMeasurement,
    MeasurementRecord,
    sample_unitaries,
    all_label_settings,
    apply_readout_errors,
    apply_readout_to_probs,
    run_ideal,
    run_pulsed,
    save_record,
    load_record,
)
from .estimators import (
    EstimatorResult,
    NormalizationError,
    purity_estimate,
    purity_pairwise,
    pauli_expectation,
    observable_expectation,
    hamiltonian_variance,
    repeat_and_aggregate,
    bootstrap_over_unitaries,
    RESULT_COLUMNS,
    results_to_csv,
)

__version__ = "0.1.0"
