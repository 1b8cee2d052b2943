"""Pulse schedules, propagators, and the rotation figure of merit."""

import numpy as np
import pytest
from scipy import sparse

from rmlab.pauli import ROTATION_MATRICES, TWO_PI, PauliString
from rmlab.pulses import (
    AMP_CAP,
    CalibrationError,
    ConstraintError,
    FluctuationModel,
    RealisticParams,
    TARGET_AXES,
    Waveform,
    axis_fidelity,
    calibrate,
    default_realistic_params,
    draw_gains,
    figure_of_merit,
    figure_of_merit_antisymmetric,
    ideal_schedule,
    mc_rotation_stats,
    measured_axis,
    perturb,
    propagator_batch,
    realistic_schedule,
    schedule_from_json,
    schedule_to_json,
    single_qubit_propagator,
)
from rmlab.statevector import evolve_blend, random_state


def ideal_rset():
    return [ROTATION_MATRICES[1], ROTATION_MATRICES[2], ROTATION_MATRICES[3]]


# ---------------------------------------------------------------------------
# Waveforms and schedule constraints
# ---------------------------------------------------------------------------


def test_trapezoid_shape():
    w = Waveform.trapezoid(0.15, 0.01, 0.05, 0.01, 4.0)
    assert w.value(0.005) == 0.0
    assert abs(w.value(0.015) - 2.0) < 1e-12  # halfway up the ramp
    assert w.value(0.03) == 4.0
    assert w.value(0.1) == 0.0
    assert abs(w.max_slew() - 400.0) < 1e-9


def test_zero_ramp_rejected():
    with pytest.raises(ConstraintError):
        Waveform.trapezoid(0.15, 0.01, 0.05, 0.0, 4.0)


def test_jump_waveform_slew_is_inf():
    w = Waveform(np.array([0.0, 0.05, 0.05, 0.1]), np.array([0.0, 0.0, 2.0, 2.0]))
    assert w.max_slew() == np.inf
    # interpolation inside segments is unaffected by the jump
    assert w.value(0.02) == 0.0
    assert w.value(0.08) == 2.0


def test_amplitude_cap_enforced():
    p = RealisticParams(omega_amp=AMP_CAP * 1.2)
    with pytest.raises(ConstraintError):
        realistic_schedule(p)


def test_default_realistic_is_feasible():
    s = realistic_schedule(default_realistic_params())
    assert s.T == 0.15
    assert s.omega.max_abs() <= AMP_CAP
    s.validate_realistic()


# ---------------------------------------------------------------------------
# Ideal schedule and propagators
# ---------------------------------------------------------------------------


def test_ideal_schedule_structure():
    s = ideal_schedule(0.15, 30)
    assert abs(s.omega.value(0.04) - np.pi / 0.15) < 1e-12
    assert s.f.value(0.1) == 1.0
    assert s.delta.value(0.03) == 0.0
    plateau = s.delta.value(0.12)
    assert plateau < 0
    # phase area pi/2 mod 2pi, magnitude near ratio * omega
    area = abs(plateau) * 0.075
    assert abs((area - np.pi / 2) % (2 * np.pi)) < 1e-9
    assert abs(plateau) > 20 * np.pi / 0.15
    assert s.delta_amps[0] == 0.0
    assert s.delta_amps[1] == plateau


def test_zero_schedule_is_identity():
    from rmlab.pulses import PulseSchedule

    s = PulseSchedule(
        T=0.1,
        omega=Waveform.constant(0.0, 0.1),
        delta=Waveform.constant(0.0, 0.1),
        f=Waveform.constant(0.0, 0.1),
        delta_amps=(0.0, 0.0, 0.0),
    )
    for a in (1, 2, 3):
        assert np.allclose(single_qubit_propagator(s, a), np.eye(2))


@pytest.mark.parametrize("ratio", [10, 30, 100])
def test_ideal_label1_fidelity_bound(ratio):
    s = ideal_schedule(0.15, ratio)
    u = single_qubit_propagator(s, 1)
    assert axis_fidelity(u, 1) >= 1.0 - 10.0 / ratio**2


@pytest.mark.parametrize("ratio", [10, 30, 100])
def test_ideal_label3_leakage_bound(ratio):
    s = ideal_schedule(0.15, ratio)
    u = single_qubit_propagator(s, 3)
    # up-population starting from |down>
    assert abs(u[1, 0]) ** 2 <= 10.0 / ratio**2


def test_ideal_label2_axis_angle():
    s = ideal_schedule(0.15, 100)
    u = single_qubit_propagator(s, 2)
    cosang = measured_axis(u) @ TARGET_AXES[2]
    assert np.degrees(np.arccos(np.clip(cosang, -1, 1))) <= 2.0


def test_ratio_squared_convergence():
    errs = []
    for ratio in (10, 30, 100):
        s = ideal_schedule(0.15, ratio)
        errs.append(1.0 - axis_fidelity(single_qubit_propagator(s, 1), 1))
    # error drops by ~(ratio ratio)^2 each step
    assert errs[0] / errs[1] > 4.0
    assert errs[1] / errs[2] > 4.0


def test_propagator_unitarity():
    s = realistic_schedule(default_realistic_params())
    for a in (1, 2, 3):
        u = single_qubit_propagator(s, a)
        assert np.linalg.norm(u @ u.conj().T - np.eye(2)) < 1e-10


def test_batch_matches_scalar_under_gains():
    s = realistic_schedule(default_realistic_params())
    rng = np.random.default_rng(11)
    gains = draw_gains(FluctuationModel(eps_percent=3.0), rng, 3)
    for a in (1, 2, 3):
        batched = propagator_batch(s, a, gains, budget=0.005)
        for i in range(3):
            pert = perturb_from_gains(s, gains[i])
            ref = single_qubit_propagator(pert, a, tol=1e-11)
            assert np.linalg.norm(batched[i] - ref) < 1e-5


def perturb_from_gains(s, g):
    from dataclasses import replace

    d = s.delta_amps
    return replace(
        s,
        omega=s.omega.scaled(1 + g[0]),
        delta=s.delta.scaled(1 + g[1]),
        delta_amps=(d[0] * (1 + g[2]), d[1] * (1 + g[3]), d[2] * (1 + g[4])),
    )


def test_multisite_evolution_factorizes():
    # the many-body integrator with no interactions must reproduce the
    # kron of single-site propagators (independent code paths)
    s = ideal_schedule(0.15, 30)
    labels = (1, 2)
    L = 2
    rng = np.random.default_rng(5)
    psi = random_state(L, rng)
    xt = sum(PauliString.from_ops({m: "X"}, L).to_matrix() for m in (1, 2))
    bits = np.array(
        [[(i >> (L - 1 - m)) & 1 for i in range(2**L)] for m in range(L)], float
    )
    nt = np.diag(bits.sum(axis=0))
    nw = np.diag(sum(s.delta_amps[labels[m] - 1] * bits[m] for m in range(L)))
    parts = [
        (lambda t: s.omega.value(t) / 2, sparse.csr_matrix(xt)),
        (lambda t: -s.delta.value(t), sparse.csr_matrix(nt)),
        (lambda t: s.f.value(t), sparse.csr_matrix(nw)),
    ]
    out = psi
    bps = s.breakpoints()
    for t0, t1 in zip(bps[:-1], bps[1:]):
        out = evolve_blend(out, parts, float(t0), float(t1), tol=1e-10)
    ref = np.kron(
        single_qubit_propagator(s, 1), single_qubit_propagator(s, 2)
    ) @ psi.amp
    assert np.max(np.abs(out.amp - ref)) < 1e-8


# ---------------------------------------------------------------------------
# Figure of merit
# ---------------------------------------------------------------------------


def test_fom_ideal_set_exactly_one():
    a = figure_of_merit(ideal_rset())
    assert np.allclose(a, (1.0, 1.0, 1.0), atol=1e-12)


def test_fom_coinciding_rotations():
    a1 = figure_of_merit([ROTATION_MATRICES[1], np.eye(2), np.eye(2)])[0]
    assert abs(a1 - 2.0) < 1e-12


def test_fom_global_phase_invariance():
    rset = ideal_rset()
    shifted = [np.exp(1j * 0.37) * rset[0], rset[1], np.exp(-1j * 1.1) * rset[2]]
    assert np.allclose(figure_of_merit(rset), figure_of_merit(shifted), atol=1e-12)


def test_fom_rejects_non_unitary():
    bad = [np.eye(2) * 1.1, np.eye(2), np.eye(2)]
    with pytest.raises(ValueError):
        figure_of_merit(bad)


def test_antisymmetric_reading_on_ideal_set():
    # conjugate-pair cancellation kills the real parts; the (1,2) overlap
    # <up|R1 R2^dag|up> = (1+i)/2 is complex, leaving exactly i for alpha=3
    lit = figure_of_merit_antisymmetric(ideal_rset())
    assert abs(lit[0]) < 1e-12
    assert abs(lit[1]) < 1e-12
    assert abs(lit[2] - 1j) < 1e-12


def test_mc_rotation_stats_deterministic():
    s = realistic_schedule(default_realistic_params())
    a = mc_rotation_stats(s, 3.0, 200, np.random.default_rng(9))
    b = mc_rotation_stats(s, 3.0, 200, np.random.default_rng(9))
    assert a.half_means == b.half_means
    assert a.half_stds == b.half_stds


# ---------------------------------------------------------------------------
# Fluctuations
# ---------------------------------------------------------------------------


def test_perturb_zero_noise_identical():
    s = realistic_schedule(default_realistic_params())
    p = perturb(s, FluctuationModel(eps_percent=0.0), np.random.default_rng(1))
    assert np.array_equal(p.omega.values, s.omega.values)
    assert p.delta_amps == s.delta_amps


def test_perturb_std_three_percent():
    s = realistic_schedule(default_realistic_params())
    rng = np.random.default_rng(2)
    model = FluctuationModel(eps_percent=3.0)
    peaks = [
        perturb(s, model, rng).omega.max_abs() for _ in range(10_000)
    ]
    rel = np.std(peaks) / s.omega.max_abs()
    assert 0.028 <= rel <= 0.032


def test_perturb_seeded_identical():
    s = realistic_schedule(default_realistic_params())
    a = perturb(s, FluctuationModel(eps_percent=3.0), np.random.default_rng(5))
    b = perturb(s, FluctuationModel(eps_percent=3.0), np.random.default_rng(5))
    assert np.array_equal(a.omega.values, b.omega.values)
    assert a.delta_amps == b.delta_amps


def test_fluctuation_model_validation():
    with pytest.raises(ValueError):
        FluctuationModel(eps_percent=-1.0)
    with pytest.raises(ValueError):
        FluctuationModel(scope="per_run")


# ---------------------------------------------------------------------------
# JSON round trip and calibration entry points
# ---------------------------------------------------------------------------


def test_schedule_json_round_trip():
    s = realistic_schedule(default_realistic_params())
    back = schedule_from_json(schedule_to_json(s))
    assert back.T == s.T
    assert back.delta_amps == s.delta_amps
    t = np.linspace(0, s.T, 37)
    # trapezoids whose corners are off-grid pick up one-cell smearing at most
    assert np.max(np.abs(back.omega.value(t) - s.omega.value(t))) < 0.25


def test_schedule_json_rejects_bad_units():
    import json

    doc = json.loads(schedule_to_json(realistic_schedule(default_realistic_params())))
    doc["units"] = "MHz"
    with pytest.raises(ValueError):
        schedule_from_json(json.dumps(doc))


def test_calibrate_infeasible_start():
    with pytest.raises(CalibrationError):
        calibrate(RealisticParams(omega_amp=AMP_CAP * 2))


def test_calibrate_deterministic_short():
    a = calibrate(maxiter=30, fidelity_floor=0.0)
    b = calibrate(maxiter=30, fidelity_floor=0.0)
    assert np.array_equal(a.params.to_vector(), b.params.to_vector())
    assert a.fidelities == b.fidelities


@pytest.mark.slow
def test_calibrate_reaches_floor_from_default_start():
    res = calibrate(fidelity_floor=0.995, maxiter=4000)
    assert min(res.fidelities) >= 0.995
