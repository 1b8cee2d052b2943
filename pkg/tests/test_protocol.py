"""Experiment orchestration: sampling, readout errors, records, NDJSON."""

import math

import numpy as np
import pytest

from rmlab.pauli import build_ssh
from rmlab.protocol import (
    EXACT_SHOTS,
    MeasurementRecord,
    ReadoutErrorModel,
    UnitaryMeasurement,
    UnitarySample,
    apply_readout_errors,
    apply_readout_to_probs,
    default_readout,
    load_record,
    run_ideal,
    run_pulsed,
    sample_unitaries,
    save_record,
)
from rmlab.pulses import FluctuationModel, golden_schedule
from rmlab.statevector import ground_state, random_state


# ---------------------------------------------------------------------------
# Unitary sampling
# ---------------------------------------------------------------------------


def test_label_frequencies_uniform():
    # 4 sigma binomial window around 1/3 at 3e4 draws
    samples = sample_unitaries(1, 30_000, np.random.default_rng(0))
    labels = np.array([s.labels[0] for s in samples])
    for lab in (1, 2, 3):
        freq = np.mean(labels == lab)
        assert 0.323 <= freq <= 0.343


def test_sampling_reproducible():
    a = sample_unitaries(4, 2, np.random.default_rng(99))
    b = sample_unitaries(4, 2, np.random.default_rng(99))
    assert [s.labels for s in a] == [s.labels for s in b]
    assert [s.realization for s in a] == [0, 1]


def test_bad_labels_rejected():
    with pytest.raises(ValueError):
        UnitarySample(labels=(0, 1), realization=0)
    with pytest.raises(ValueError):
        sample_unitaries(3, 0, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# Readout errors
# ---------------------------------------------------------------------------


def test_zero_model_is_identity():
    rng = np.random.default_rng(1)
    bits = rng.integers(0, 2, size=(50, 6))
    out = apply_readout_errors(bits, ReadoutErrorModel(), rng)
    assert np.array_equal(out, bits)


def test_flip_rates_within_binomial_windows():
    rng = np.random.default_rng(2)
    model = default_readout()
    ones = np.ones((10_000, 10), dtype=int)
    rate_down = 1.0 - apply_readout_errors(ones, model, rng).mean()
    assert 0.028 <= rate_down <= 0.032
    zeros = np.zeros((10_000, 10), dtype=int)
    rate_up = apply_readout_errors(zeros, model, rng).mean()
    assert 0.0088 <= rate_up <= 0.0112


def test_model_validation():
    with pytest.raises(ValueError):
        ReadoutErrorModel(p_up_given_down=1.0)
    with pytest.raises(ValueError):
        ReadoutErrorModel(p_down_given_up=-0.1)


def test_probability_transform_matches_sampling_channel():
    # push-through of a delta distribution reproduces the flip matrix rows
    model = ReadoutErrorModel(0.2, 0.4)
    p = np.array([1.0, 0.0])
    assert np.allclose(apply_readout_to_probs(p, model, 1), [0.8, 0.2])
    p = np.array([0.0, 1.0])
    assert np.allclose(apply_readout_to_probs(p, model, 1), [0.4, 0.6])


def test_readout_commutes_with_marginalization():
    # flip channel is a product channel, so tracing out site 2 first or
    # last gives the same site-1 marginal
    rng = np.random.default_rng(3)
    p = rng.random(4)
    p /= p.sum()
    model = ReadoutErrorModel(0.07, 0.13)
    flipped = apply_readout_to_probs(p, model, 2)
    lhs = flipped.reshape(2, 2).sum(axis=1)
    rhs = apply_readout_to_probs(p.reshape(2, 2).sum(axis=1), model, 1)
    assert np.allclose(lhs, rhs, atol=1e-15)


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------


def _toy_record() -> MeasurementRecord:
    entries = (
        UnitaryMeasurement(labels=(1, 2), counts={"00": 3, "11": 2}, seed=0),
        UnitaryMeasurement(labels=(3, 3), counts={"01": 5}, seed=1),
    )
    return MeasurementRecord(num_sites=2, mode="ideal", n_meas=5, entries=entries)


def test_record_validates_count_sums():
    with pytest.raises(ValueError, match="sum to n_meas"):
        MeasurementRecord(
            num_sites=2,
            mode="ideal",
            n_meas=4,
            entries=(UnitaryMeasurement(labels=(1, 2), counts={"00": 3}),),
        )


def test_record_rejects_malformed_bitstrings():
    with pytest.raises(ValueError, match="bitstring"):
        MeasurementRecord(
            num_sites=2,
            mode="ideal",
            n_meas=1,
            entries=(UnitaryMeasurement(labels=(1, 2), counts={"0x": 1}),),
        )


def test_record_rejects_unnormalized_probs():
    with pytest.raises(ValueError, match="sum to one"):
        MeasurementRecord(
            num_sites=1,
            mode="ideal",
            n_meas=EXACT_SHOTS,
            entries=(UnitaryMeasurement(labels=(1,), probs=np.array([0.5, 0.6])),),
        )


def test_entry_requires_exactly_one_payload():
    with pytest.raises(ValueError):
        UnitaryMeasurement(labels=(1,))
    with pytest.raises(ValueError):
        UnitaryMeasurement(labels=(1,), counts={"0": 1}, probs=np.array([1.0, 0.0]))


def test_subset_picks_entries():
    rec = _toy_record()
    sub = rec.subset([1])
    assert sub.n_unitaries == 1
    assert sub.entries[0].labels == (3, 3)
    assert sub.n_meas == rec.n_meas


# ---------------------------------------------------------------------------
# Ideal runs
# ---------------------------------------------------------------------------


def test_exact_mode_distributions_are_normalized():
    rng = np.random.default_rng(4)
    psi = random_state(3, rng)
    samples = sample_unitaries(3, 5, rng)
    rec = run_ideal(psi, samples, EXACT_SHOTS)
    for e in rec.entries:
        assert abs(e.probs.sum() - 1.0) < 1e-12
        assert e.probs.min() >= -1e-15


def test_exact_mode_marginalization_consistency():
    rng = np.random.default_rng(5)
    psi = random_state(4, rng)
    rec = run_ideal(psi, sample_unitaries(4, 3, rng), EXACT_SHOTS)
    for e in rec.entries:
        joint = e.probs.reshape(4, 4)
        # site-(1,2) marginal from the full distribution
        assert np.allclose(joint.sum(axis=1).sum(), 1.0, atol=1e-12)
        assert np.allclose(
            joint.sum(axis=1), e.probs.reshape(2, 2, 2, 2).sum(axis=(2, 3)).reshape(-1)
        )


def test_run_ideal_seed_determinism():
    rng = np.random.default_rng(6)
    psi = random_state(3, rng)
    samples = sample_unitaries(3, 4, rng)
    a = run_ideal(psi, samples, 50, readout=default_readout(), seed=17)
    b = run_ideal(psi, samples, 50, readout=default_readout(), seed=17)
    c = run_ideal(psi, samples, 50, readout=default_readout(), seed=18)
    assert all(x.counts == y.counts for x, y in zip(a.entries, b.entries))
    assert any(x.counts != y.counts for x, y in zip(a.entries, c.entries))


def test_run_ideal_counts_shape():
    rng = np.random.default_rng(7)
    psi = random_state(2, rng)
    rec = run_ideal(psi, sample_unitaries(2, 3, rng), 25, seed=0)
    assert rec.n_meas == 25
    for e in rec.entries:
        assert sum(e.counts.values()) == 25


def test_invalid_n_meas_rejected():
    rng = np.random.default_rng(8)
    psi = random_state(2, rng)
    samples = sample_unitaries(2, 1, rng)
    with pytest.raises(ValueError):
        run_ideal(psi, samples, 0)
    with pytest.raises(ValueError):
        run_ideal(psi, samples, 12.5)


# ---------------------------------------------------------------------------
# Pulsed runs
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def golden():
    return golden_schedule()


def test_pulsed_noise_free_approximates_ideal(golden):
    # calibrated rotations are within ~0.005 axis infidelity of ideal, so
    # each outcome distribution sits close to the ideal one
    rng = np.random.default_rng(9)
    psi = random_state(2, rng)
    samples = sample_unitaries(2, 4, rng)
    pulsed = run_pulsed(psi, samples, golden, n_meas=EXACT_SHOTS)
    ideal = run_ideal(psi, samples, EXACT_SHOTS)
    for a, b in zip(pulsed.entries, ideal.entries):
        assert 0.5 * np.abs(a.probs - b.probs).sum() < 0.2


def test_pulsed_determinism_with_noise(golden):
    rng = np.random.default_rng(10)
    psi = random_state(2, rng)
    samples = sample_unitaries(2, 2, rng)
    kwargs = dict(
        fluct=FluctuationModel(3.0),
        n_meas=30,
        readout=default_readout(),
        seed=5,
    )
    a = run_pulsed(psi, samples, golden, **kwargs)
    b = run_pulsed(psi, samples, golden, **kwargs)
    assert all(x.counts == y.counts for x, y in zip(a.entries, b.entries))
    assert a.meta["steps"] == b.meta["steps"]


def test_pulsed_keeps_nominal_labels(golden):
    rng = np.random.default_rng(11)
    psi = random_state(2, rng)
    samples = sample_unitaries(2, 3, rng)
    rec = run_pulsed(psi, samples, golden, fluct=FluctuationModel(5.0), n_meas=10)
    assert [e.labels for e in rec.entries] == [s.labels for s in samples]


def test_per_shot_scope_rejected_in_exact_mode(golden):
    rng = np.random.default_rng(12)
    psi = random_state(2, rng)
    samples = sample_unitaries(2, 1, rng)
    with pytest.raises(ValueError, match="per_shot"):
        run_pulsed(
            psi, samples, golden,
            fluct=FluctuationModel(3.0, scope="per_shot"),
            n_meas=EXACT_SHOTS,
        )


def test_per_shot_scope_runs_sampled(golden):
    rng = np.random.default_rng(13)
    psi = random_state(2, rng)
    samples = sample_unitaries(2, 1, rng)
    rec = run_pulsed(
        psi, samples, golden,
        fluct=FluctuationModel(3.0, scope="per_shot"),
        n_meas=4,
        seed=1,
    )
    assert sum(rec.entries[0].counts.values()) == 4


def test_pulsed_with_interactions_runs(golden):
    h = build_ssh(4, 0.484 * 2 * np.pi, -0.18 * 2 * np.pi, 0.04 * 2 * np.pi)
    _, gs = ground_state(h)
    samples = sample_unitaries(4, 2, np.random.default_rng(14))
    rec = run_pulsed(gs, samples, golden, h_mod=h, n_meas=EXACT_SHOTS)
    assert rec.mode == "pulsed"
    for e in rec.entries:
        assert abs(e.probs.sum() - 1.0) < 1e-12


# ---------------------------------------------------------------------------
# NDJSON persistence
# ---------------------------------------------------------------------------


def test_roundtrip_counts(tmp_path):
    rec = _toy_record()
    path = tmp_path / "rec.ndjson"
    save_record(rec, path)
    back = load_record(path)
    assert back.num_sites == rec.num_sites
    assert back.mode == rec.mode
    assert back.n_meas == rec.n_meas
    assert [e.counts for e in back.entries] == [e.counts for e in rec.entries]
    assert [e.labels for e in back.entries] == [e.labels for e in rec.entries]


def test_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(15)
    psi = random_state(2, rng)
    rec = run_ideal(psi, sample_unitaries(2, 2, rng), EXACT_SHOTS)
    path = tmp_path / "rec.ndjson"
    save_record(rec, path)
    back = load_record(path)
    assert back.n_meas == EXACT_SHOTS
    for a, b in zip(back.entries, rec.entries):
        assert np.allclose(a.probs, b.probs, atol=0)


def test_header_checked(tmp_path):
    path = tmp_path / "bad.ndjson"
    path.write_text('{"format": "something-else"}\n')
    with pytest.raises(ValueError, match="not a measurement record"):
        load_record(path)
    path.write_text("")
    with pytest.raises(ValueError, match="empty"):
        load_record(path)


def test_save_is_deterministic(tmp_path):
    rec = _toy_record()
    p1, p2 = tmp_path / "a.ndjson", tmp_path / "b.ndjson"
    save_record(rec, p1)
    save_record(rec, p2)
    assert p1.read_bytes() == p2.read_bytes()
