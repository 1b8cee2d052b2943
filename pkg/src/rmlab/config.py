"""Experiment configuration: strict JSON in, validated dataclasses out.

Unknown keys are rejected everywhere. A typo in a physics parameter must
fail loudly, not fall back to a default. Validation collects every
violation before reporting so a config can be fixed in one pass.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Any, Mapping

from .pauli import TWO_PI
from .protocol import EXACT_SHOTS, ReadoutErrorModel, default_readout
from .scenarios import J_E, J_NNN, J_O, J_QUENCH, MU_EDGE, ScenarioConfig
from .statevector import MAX_SUBSYSTEM

__all__ = [
    "SHOT_BUDGET",
    "ConfigError",
    "ProtocolConfig",
    "EstimatorTargets",
    "ExperimentConfig",
    "parse_config",
    "config_to_dict",
    "config_hash",
    "validate",
    "load_config",
    "shipped_config_names",
]

# experimental shot ceiling: N_U * N_meas below 1e5 per repetition
SHOT_BUDGET = 100_000

MODES = ("ideal", "pulsed")


class ConfigError(ValueError):
    """Carries every violation found, one message per line."""

    def __init__(self, violations: list[str]) -> None:
        super().__init__("\n".join(violations))
        self.violations = list(violations)


@dataclass(frozen=True)
class ProtocolConfig:
    mode: str = "ideal"
    n_unitaries: int = 100
    n_meas: float = EXACT_SHOTS
    n_ave: int = 1
    eps_percent: float = 0.0
    fluctuation_scope: str = "per_unitary"
    readout: ReadoutErrorModel | None = None
    tol: float = 1e-6


@dataclass(frozen=True)
class EstimatorTargets:
    subsystems: tuple[tuple[int, ...], ...] = ()
    variance: bool = False
    energy: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    targets: EstimatorTargets = field(default_factory=EstimatorTargets)
    seed: int = 0
    out: str = "results"


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _take(section: Mapping[str, Any], allowed: Mapping[str, Any], where: str, errs: list[str]) -> dict:
    out = {}
    for key, value in section.items():
        if key not in allowed:
            errs.append(f"{where}: unknown key {key!r} (allowed: {', '.join(sorted(allowed))})")
            continue
        out[key] = value
    return out


_SCENARIO_KEYS = {
    "kind": str,
    "num_sites": int,
    "phase": str,
    "t_prep": (int, float),
    "ramp": str,
    "quench_time": (int, float),
    "j_quench_mhz": (int, float),
}
_PROTOCOL_KEYS = {
    "mode": str,
    "n_unitaries": int,
    "n_meas": (int, str),
    "n_ave": int,
    "eps_percent": (int, float),
    "fluctuation_scope": str,
    "readout": (dict, type(None)),
    "tol": (int, float),
}
_ESTIMATOR_KEYS = {"subsystems": list, "variance": bool, "energy": bool}
_READOUT_KEYS = {"p_up_given_down": (int, float), "p_down_given_up": (int, float)}
_TOP_KEYS = {"scenario": dict, "protocol": dict, "estimators": dict, "seed": int, "out": str}


def _typecheck(raw: dict, types: Mapping[str, Any], where: str, errs: list[str]) -> dict:
    out = {}
    for key, value in raw.items():
        want = types[key]
        if isinstance(value, bool) and want is not bool and bool not in (
            want if isinstance(want, tuple) else (want,)
        ):
            errs.append(f"{where}.{key}: expected {want}, got bool")
        elif not isinstance(value, want):
            errs.append(f"{where}.{key}: expected {want}, got {type(value).__name__}")
        else:
            out[key] = value
    return out


def parse_config(text: str) -> ExperimentConfig:
    """Parse a JSON document, raising ConfigError with every problem found."""
    errs: list[str] = []
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError([f"not valid JSON: {e}"]) from e
    if not isinstance(doc, dict):
        raise ConfigError(["top level must be an object"])

    top = _typecheck(_take(doc, _TOP_KEYS, "top level", errs), _TOP_KEYS, "top level", errs)
    if "scenario" not in doc:
        errs.append("top level: missing required section 'scenario'")

    scen_raw = _typecheck(
        _take(top.get("scenario", {}), _SCENARIO_KEYS, "scenario", errs),
        _SCENARIO_KEYS, "scenario", errs,
    )
    prot_raw = _typecheck(
        _take(top.get("protocol", {}), _PROTOCOL_KEYS, "protocol", errs),
        _PROTOCOL_KEYS, "protocol", errs,
    )
    est_raw = _typecheck(
        _take(top.get("estimators", {}), _ESTIMATOR_KEYS, "estimators", errs),
        _ESTIMATOR_KEYS, "estimators", errs,
    )
    if errs:
        raise ConfigError(errs)

    if "j_quench_mhz" in scen_raw:
        scen_raw["j_quench"] = TWO_PI * float(scen_raw.pop("j_quench_mhz"))
    if "t_prep" in scen_raw:
        scen_raw["t_prep"] = float(scen_raw["t_prep"])
    if "quench_time" in scen_raw:
        scen_raw["quench_time"] = float(scen_raw["quench_time"])
    try:
        scenario = ScenarioConfig(**scen_raw)
    except (TypeError, ValueError) as e:
        raise ConfigError([f"scenario: {e}"]) from e

    if "n_meas" in prot_raw:
        if prot_raw["n_meas"] == "exact":
            prot_raw["n_meas"] = EXACT_SHOTS
        elif isinstance(prot_raw["n_meas"], str):
            errs.append("protocol.n_meas: must be a positive integer or \"exact\"")
    readout_raw = prot_raw.pop("readout", None)
    readout = None
    if readout_raw is not None:
        fields = _typecheck(
            _take(readout_raw, _READOUT_KEYS, "protocol.readout", errs),
            _READOUT_KEYS, "protocol.readout", errs,
        )
        if not errs:
            try:
                readout = ReadoutErrorModel(**fields)
            except (TypeError, ValueError) as e:
                errs.append(f"protocol.readout: {e}")
    if "eps_percent" in prot_raw:
        prot_raw["eps_percent"] = float(prot_raw["eps_percent"])
    if "tol" in prot_raw:
        prot_raw["tol"] = float(prot_raw["tol"])
    if errs:
        raise ConfigError(errs)
    protocol = ProtocolConfig(readout=readout, **prot_raw)

    subsystems = []
    for i, sites in enumerate(est_raw.get("subsystems", [])):
        if not isinstance(sites, list) or not all(isinstance(s, int) and not isinstance(s, bool) for s in sites):
            errs.append(f"estimators.subsystems[{i}]: must be a list of site indices")
        else:
            subsystems.append(tuple(sites))
    if errs:
        raise ConfigError(errs)
    targets = EstimatorTargets(
        subsystems=tuple(subsystems),
        variance=est_raw.get("variance", False),
        energy=est_raw.get("energy", False),
    )

    cfg = ExperimentConfig(
        scenario=scenario,
        protocol=protocol,
        targets=targets,
        seed=top.get("seed", 0),
        out=top.get("out", "results"),
    )
    # structural validation only; the shot budget is the runner's gate
    # because only it knows about --allow-large
    problems = validate(cfg, allow_large=True)[0]
    if problems:
        raise ConfigError(problems)
    return cfg


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate(cfg: ExperimentConfig, allow_large: bool = False) -> tuple[list[str], list[str]]:
    """All violations and advisory warnings for a parsed config.

    The scenario and readout dataclasses validate themselves on
    construction; this covers the cross-field rules.
    """
    errs: list[str] = []
    warns: list[str] = []
    scen, prot = cfg.scenario, cfg.protocol

    if prot.mode not in MODES:
        errs.append(f"protocol.mode: must be one of {MODES}")
    if prot.n_unitaries < 1:
        errs.append("protocol.n_unitaries: must be at least 1")
    if prot.n_meas != EXACT_SHOTS and (
        not isinstance(prot.n_meas, int) or prot.n_meas < 1
    ):
        errs.append("protocol.n_meas: must be a positive integer or \"exact\"")
    if prot.n_ave < 1:
        errs.append("protocol.n_ave: must be at least 1")
    if not 0.0 <= prot.eps_percent < 100.0:
        errs.append("protocol.eps_percent: must be in [0, 100)")
    if prot.eps_percent > 0 and prot.mode != "pulsed":
        errs.append("protocol.eps_percent: amplitude noise requires pulsed mode")
    if prot.fluctuation_scope not in ("per_unitary", "per_shot"):
        errs.append("protocol.fluctuation_scope: must be per_unitary or per_shot")
    if prot.fluctuation_scope == "per_shot" and prot.n_meas == EXACT_SHOTS:
        errs.append("protocol.fluctuation_scope: per_shot requires sampled n_meas")
    if prot.tol <= 0:
        errs.append("protocol.tol: must be positive")

    if prot.n_meas != EXACT_SHOTS and isinstance(prot.n_meas, int) and prot.n_meas >= 1:
        total = prot.n_unitaries * prot.n_meas
        if total > SHOT_BUDGET and not allow_large:
            errs.append(
                f"protocol: N_U * N_meas = {total} exceeds the shot budget "
                f"{SHOT_BUDGET}; pass allow_large to override"
            )

    for i, sites in enumerate(cfg.targets.subsystems):
        bad = [s for s in sites if not 1 <= s <= scen.num_sites]
        if bad:
            errs.append(
                f"estimators.subsystems[{i}]: sites {bad} outside 1..{scen.num_sites}"
            )
        elif len(set(sites)) != len(sites) or list(sites) != sorted(sites):
            errs.append(f"estimators.subsystems[{i}]: sites must be sorted and distinct")
        elif len(sites) > MAX_SUBSYSTEM:
            errs.append(
                f"estimators.subsystems[{i}]: larger than {MAX_SUBSYSTEM} sites"
            )
    if not cfg.targets.subsystems and not cfg.targets.variance and not cfg.targets.energy:
        errs.append("estimators: nothing to estimate (no subsystems, variance, or energy)")

    if prot.mode == "pulsed":
        if scen.kind == "quench":
            max_j = abs(scen.j_quench)
        else:
            max_j = max(abs(J_E), abs(J_O), abs(J_NNN), abs(MU_EDGE))
        # rotation window times strongest coupling: spurious interaction
        # phase accrued while the rotations run
        phase = 0.15 * max_j
        if phase > 1.0:
            warns.append(
                f"rotation window accrues {phase:.2f} rad of interaction phase; "
                "estimates will be visibly biased"
            )
    return errs, warns


# ---------------------------------------------------------------------------
# Serialization and shipped configs
# ---------------------------------------------------------------------------


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Normalized plain-dict form, inverse of parse_config."""
    scen = asdict(cfg.scenario)
    scen.pop("tol")
    scen["j_quench_mhz"] = scen.pop("j_quench") / TWO_PI
    if scen["t_prep"] is None:
        scen.pop("t_prep")
    prot = {
        "mode": cfg.protocol.mode,
        "n_unitaries": cfg.protocol.n_unitaries,
        "n_meas": "exact" if cfg.protocol.n_meas == EXACT_SHOTS else cfg.protocol.n_meas,
        "n_ave": cfg.protocol.n_ave,
        "eps_percent": cfg.protocol.eps_percent,
        "fluctuation_scope": cfg.protocol.fluctuation_scope,
        "readout": None
        if cfg.protocol.readout is None
        else {
            "p_up_given_down": cfg.protocol.readout.p_up_given_down,
            "p_down_given_up": cfg.protocol.readout.p_down_given_up,
        },
        "tol": cfg.protocol.tol,
    }
    return {
        "scenario": scen,
        "protocol": prot,
        "estimators": {
            "subsystems": [list(s) for s in cfg.targets.subsystems],
            "variance": cfg.targets.variance,
            "energy": cfg.targets.energy,
        },
        "seed": cfg.seed,
        "out": cfg.out,
    }


def config_hash(cfg: ExperimentConfig) -> str:
    """Experiment identity: everything but the output directory."""
    payload = config_to_dict(cfg)
    payload.pop("out")
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def shipped_config_names() -> list[str]:
    root = resources.files("rmlab").joinpath("data/configs")
    return sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))


def load_config(path_or_name: str) -> ExperimentConfig:
    """Load a config from a filesystem path or a shipped config name."""
    if path_or_name in shipped_config_names():
        text = (
            resources.files("rmlab")
            .joinpath(f"data/configs/{path_or_name}.json")
            .read_text()
        )
    else:
        try:
            with open(path_or_name) as f:
                text = f.read()
        except OSError as e:
            raise ConfigError(
                [f"{path_or_name}: not a readable file or shipped config "
                 f"(shipped: {', '.join(shipped_config_names())})"]
            ) from e
    return parse_config(text)
