"""Config parsing, cross-field validation, and serialization round-trips."""

import json

import pytest

from rmlab.config import (
    SHOT_BUDGET,
    ConfigError,
    EstimatorTargets,
    ExperimentConfig,
    ProtocolConfig,
    config_hash,
    config_to_dict,
    load_config,
    parse_config,
    shipped_config_names,
    validate,
)
from rmlab.pauli import TWO_PI
from rmlab.protocol import EXACT_SHOTS, ReadoutErrorModel
from rmlab.scenarios import ScenarioConfig

MINIMAL = {
    "scenario": {"kind": "af", "num_sites": 4},
    "estimators": {"subsystems": [[1, 2]]},
}


def doc(**over):
    d = json.loads(json.dumps(MINIMAL))
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(d.get(key), dict):
            d[key].update(value)
        else:
            d[key] = value
    return json.dumps(d)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def test_minimal_document_parses_with_defaults():
    cfg = parse_config(doc())
    assert cfg.scenario == ScenarioConfig(kind="af", num_sites=4)
    assert cfg.protocol == ProtocolConfig()
    assert cfg.protocol.n_meas == EXACT_SHOTS
    assert cfg.targets == EstimatorTargets(subsystems=((1, 2),))
    assert cfg.seed == 0 and cfg.out == "results"


def test_full_document_parses():
    cfg = parse_config(doc(
        scenario={"kind": "quench", "num_sites": 8, "quench_time": 1.0, "j_quench_mhz": 0.18},
        protocol={
            "mode": "pulsed", "n_unitaries": 50, "n_meas": 800, "n_ave": 10,
            "eps_percent": 3, "fluctuation_scope": "per_shot",
            "readout": {"p_up_given_down": 0.01, "p_down_given_up": 0.03},
            "tol": 1e-5,
        },
        estimators={"subsystems": [[1], [1, 2]], "variance": True},
        seed=7,
        out="elsewhere",
    ))
    assert cfg.scenario.j_quench == pytest.approx(TWO_PI * 0.18)
    assert cfg.protocol.readout == ReadoutErrorModel(0.01, 0.03)
    assert cfg.protocol.eps_percent == 3.0
    assert cfg.targets.variance and not cfg.targets.energy
    assert cfg.seed == 7 and cfg.out == "elsewhere"


def test_invalid_json_is_a_config_error():
    with pytest.raises(ConfigError, match="not valid JSON"):
        parse_config("{nope")
    with pytest.raises(ConfigError, match="top level"):
        parse_config("[1, 2]")


def test_missing_scenario_section():
    with pytest.raises(ConfigError, match="missing required section 'scenario'"):
        parse_config(json.dumps({"estimators": {"variance": True}}))


def test_unknown_keys_rejected_everywhere():
    bad = doc(
        scenario={"flavor": "up"},
        protocol={"shots": 3},
        estimators={"purity": True},
        extra=1,
    )
    with pytest.raises(ConfigError) as err:
        parse_config(bad)
    text = str(err.value)
    assert "scenario: unknown key 'flavor'" in text
    assert "protocol: unknown key 'shots'" in text
    assert "estimators: unknown key 'purity'" in text
    assert "top level: unknown key 'extra'" in text


def test_violations_are_collected_not_first_only():
    with pytest.raises(ConfigError) as err:
        parse_config(doc(scenario={"num_sites": "eight"}, seed="zero"))
    assert len(err.value.violations) >= 2


def test_bool_does_not_pass_as_int():
    with pytest.raises(ConfigError, match="protocol.n_unitaries"):
        parse_config(doc(protocol={"n_unitaries": True}))


def test_n_meas_exact_sentinel():
    cfg = parse_config(doc(protocol={"n_meas": "exact"}))
    assert cfg.protocol.n_meas == EXACT_SHOTS
    with pytest.raises(ConfigError, match="n_meas"):
        parse_config(doc(protocol={"n_meas": "lots"}))


def test_bad_readout_probability():
    with pytest.raises(ConfigError, match="readout"):
        parse_config(doc(protocol={"readout": {"p_up_given_down": 1.5}}))


def test_scenario_rules_surface_as_config_errors():
    with pytest.raises(ConfigError, match="scenario"):
        parse_config(doc(scenario={"kind": "ssh_gs", "num_sites": 7}))
    with pytest.raises(ConfigError, match="t_prep"):
        parse_config(doc(scenario={"kind": "adiabatic", "num_sites": 6}))


def test_subsystem_entries_must_be_int_lists():
    with pytest.raises(ConfigError, match="subsystems"):
        parse_config(doc(estimators={"subsystems": [["one"]]}))


# ---------------------------------------------------------------------------
# Cross-field validation
# ---------------------------------------------------------------------------


def test_eps_requires_pulsed_mode():
    with pytest.raises(ConfigError, match="requires pulsed"):
        parse_config(doc(protocol={"eps_percent": 3, "n_meas": 100}))


def test_per_shot_requires_sampled_readout():
    with pytest.raises(ConfigError, match="per_shot requires sampled"):
        parse_config(doc(protocol={"fluctuation_scope": "per_shot"}))


def test_sites_outside_chain_rejected():
    with pytest.raises(ConfigError, match="outside 1..4"):
        parse_config(doc(estimators={"subsystems": [[1, 5]]}))


def test_sites_must_be_sorted_and_distinct():
    with pytest.raises(ConfigError, match="sorted and distinct"):
        parse_config(doc(estimators={"subsystems": [[2, 1]]}))
    with pytest.raises(ConfigError, match="sorted and distinct"):
        parse_config(doc(estimators={"subsystems": [[1, 1]]}))


def test_nothing_to_estimate_rejected():
    with pytest.raises(ConfigError, match="nothing to estimate"):
        parse_config(doc(estimators={"subsystems": []}))


def test_budget_only_enforced_by_validate():
    # parsing accepts a large run; the runner gates it behind --allow-large
    cfg = parse_config(doc(protocol={"n_unitaries": 300, "n_meas": 400}))
    assert cfg.protocol.n_unitaries * cfg.protocol.n_meas > SHOT_BUDGET
    errs, _ = validate(cfg)
    assert any("shot budget" in e for e in errs)
    errs, _ = validate(cfg, allow_large=True)
    assert errs == []


def test_exact_readout_is_not_a_budget_violation():
    cfg = parse_config(doc(protocol={"n_unitaries": 10_000_000}))
    errs, _ = validate(cfg)
    assert errs == []


def test_pulsed_warning_on_strong_coupling():
    cfg = parse_config(doc(
        scenario={"kind": "quench", "num_sites": 4, "j_quench_mhz": 2.0},
        protocol={"mode": "pulsed", "n_meas": 100},
    ))
    _, warns = validate(cfg)
    assert any("interaction phase" in w for w in warns)
    calm = parse_config(doc(
        scenario={"kind": "quench", "num_sites": 4, "j_quench_mhz": 0.18},
        protocol={"mode": "pulsed", "n_meas": 100},
    ))
    assert validate(calm)[1] == []


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def test_config_dict_round_trip_preserves_hash():
    cfg = load_config("noisy_pipeline_L8")
    again = parse_config(json.dumps(config_to_dict(cfg)))
    assert again == cfg
    assert config_hash(again) == config_hash(cfg)


def test_hash_ignores_document_key_order():
    a = parse_config(doc())
    shuffled = json.dumps(json.loads(doc()), sort_keys=True)
    b = parse_config(shuffled)
    assert config_hash(a) == config_hash(b)


def test_hash_sensitive_to_physics_fields():
    a = parse_config(doc())
    b = parse_config(doc(protocol={"n_unitaries": 99}))
    assert config_hash(a) != config_hash(b)


# ---------------------------------------------------------------------------
# Shipped configs
# ---------------------------------------------------------------------------


def test_shipped_configs_all_load_and_validate():
    names = shipped_config_names()
    assert "dimer_purity_L8" in names and "quench_profile_L8" in names
    for name in names:
        cfg = load_config(name)
        errs, warns = validate(cfg)
        assert errs == [], f"{name}: {errs}"
        assert warns == [], f"{name}: {warns}"


def test_shipped_configs_fit_the_shot_budget():
    for name in shipped_config_names():
        prot = load_config(name).protocol
        if prot.n_meas != EXACT_SHOTS:
            assert prot.n_unitaries * prot.n_meas <= SHOT_BUDGET


def test_load_config_from_path(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(doc())
    assert load_config(str(p)) == parse_config(doc())


def test_load_config_unknown_name():
    with pytest.raises(ConfigError, match="not a readable file or shipped config"):
        load_config("no_such_config")
