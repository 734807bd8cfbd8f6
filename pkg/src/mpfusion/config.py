"""Run configuration: strict JSON in, dataclasses out.

Unknown keys are rejected with the offending path (e.g. "$.detector.iters")
rather than silently ignored — a typo in a config file should fail loudly,
not run a subtly different experiment.  `to_dict`/`from_dict` round-trip.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

from .scenario import ScenarioConfig

FORMAT_VERSION = "1.0"


class ConfigError(ValueError):
    """Malformed run configuration; message carries the JSON path."""


def _require_mapping(obj, path: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path} must be an object")
    return obj


def _check_keys(d: dict, allowed, path: str) -> None:
    for key in d:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} at {path}")


@dataclass(frozen=True)
class DetectorBlock:
    """Engine-side knobs shared by all presets in a run."""

    iterations: int | None = None        # None -> node_count - 1
    convention: str = "paper"            # quadratic-relaxation flavour
    coupling_convention: str = "merged"
    training_labels: str = "local"       # or "genie"
    majority_rounds: int = 3

    def __post_init__(self) -> None:
        if self.iterations is not None and self.iterations < 1:
            raise ConfigError("$.detector.iterations must be >= 1")
        if self.convention not in ("paper", "exact"):
            raise ConfigError("$.detector.convention must be 'paper' or 'exact'")
        if self.coupling_convention not in ("merged", "raw"):
            raise ConfigError(
                "$.detector.coupling_convention must be 'merged' or 'raw'")
        if self.training_labels not in ("local", "genie"):
            raise ConfigError(
                "$.detector.training_labels must be 'local' or 'genie'")
        if self.majority_rounds < 0:
            raise ConfigError("$.detector.majority_rounds must be >= 0")


@dataclass(frozen=True)
class EvaluationBlock:
    """What to run and how much data to spend on it."""

    methods: tuple = ("local",)
    trials: int = 20000
    training_slots: int = 2500
    calibration_slots: int = 20000
    rho_grid: tuple | None = None
    delta_rule: str = "fixed"
    proportional_factor: float = 0.1
    threads: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.methods:
            raise ConfigError("$.evaluation.methods must not be empty")
        for t, name in ((self.trials, "trials"),
                        (self.training_slots, "training_slots"),
                        (self.calibration_slots, "calibration_slots")):
            if t < 1:
                raise ConfigError(f"$.evaluation.{name} must be >= 1")
        if self.rho_grid is not None:
            object.__setattr__(self, "rho_grid",
                               tuple(float(r) for r in self.rho_grid))
        if self.delta_rule not in ("fixed", "proportional"):
            raise ConfigError(
                "$.evaluation.delta_rule must be 'fixed' or 'proportional'")
        if self.threads < 1:
            raise ConfigError("$.evaluation.threads must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    detector: DetectorBlock = field(default_factory=DetectorBlock)
    evaluation: EvaluationBlock = field(default_factory=EvaluationBlock)
    seed: int = 12345


_SCENARIO_KEYS = {f.name for f in fields(ScenarioConfig)}
_DETECTOR_KEYS = {f.name for f in fields(DetectorBlock)}
_EVALUATION_KEYS = {f.name for f in fields(EvaluationBlock)}
_TOP_KEYS = {"scenario", "detector", "evaluation", "seed"}


def _scenario_from_dict(d: dict) -> ScenarioConfig:
    d = _require_mapping(d, "$.scenario")
    _check_keys(d, _SCENARIO_KEYS, "$.scenario")
    kwargs = dict(d)
    if "coverage" in kwargs:
        cov = _require_mapping(kwargs["coverage"], "$.scenario.coverage")
        try:
            kwargs["coverage"] = {int(k): tuple(v) for k, v in cov.items()}
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"$.scenario.coverage: {exc}") from None
    if "edges" in kwargs and kwargs["edges"] is not None:
        kwargs["edges"] = tuple(tuple(e) for e in kwargs["edges"])
    if "on_prob" in kwargs and isinstance(kwargs["on_prob"], list):
        kwargs["on_prob"] = tuple(kwargs["on_prob"])
    if "initial_activity" in kwargs and kwargs["initial_activity"] is not None:
        kwargs["initial_activity"] = tuple(kwargs["initial_activity"])
    try:
        return ScenarioConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"$.scenario: {exc}") from None


def from_dict(d: dict) -> RunConfig:
    d = _require_mapping(d, "$")
    _check_keys(d, _TOP_KEYS, "$")
    scenario_cfg = _scenario_from_dict(d.get("scenario", {}))
    det = _require_mapping(d.get("detector", {}), "$.detector")
    _check_keys(det, _DETECTOR_KEYS, "$.detector")
    ev = _require_mapping(d.get("evaluation", {}), "$.evaluation")
    _check_keys(ev, _EVALUATION_KEYS, "$.evaluation")
    if "methods" in ev:
        if not isinstance(ev["methods"], list):
            raise ConfigError("$.evaluation.methods must be a list of labels")
    seed = d.get("seed", RunConfig.seed)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("$.seed must be an integer")
    try:
        detector = DetectorBlock(**det)
        evaluation = EvaluationBlock(**{k: (tuple(v) if k == "methods" else v)
                                        for k, v in ev.items()})
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(scenario_cfg, detector, evaluation, seed)


def to_dict(cfg: RunConfig) -> dict:
    s = cfg.scenario
    return {
        "scenario": {
            "node_count": s.node_count,
            "edges": None if s.edges is None else [list(e) for e in s.edges],
            "coverage": {str(p): list(nodes) for p, nodes in s.coverage.items()},
            "rho_db": s.rho_db,
            "delta_rho_db": s.delta_rho_db,
            "sample_count": s.sample_count,
            "noise_var": s.noise_var,
            "far": s.far,
            "on_prob": list(s.on_prob),
            "flip": s.flip,
            "coupling": s.coupling,
            "sensing_mode": s.sensing_mode,
            "initial_activity": (None if s.initial_activity is None
                                 else list(s.initial_activity)),
        },
        "detector": {
            "iterations": cfg.detector.iterations,
            "convention": cfg.detector.convention,
            "coupling_convention": cfg.detector.coupling_convention,
            "training_labels": cfg.detector.training_labels,
            "majority_rounds": cfg.detector.majority_rounds,
        },
        "evaluation": {
            "methods": list(cfg.evaluation.methods),
            "trials": cfg.evaluation.trials,
            "training_slots": cfg.evaluation.training_slots,
            "calibration_slots": cfg.evaluation.calibration_slots,
            "rho_grid": (None if cfg.evaluation.rho_grid is None
                         else list(cfg.evaluation.rho_grid)),
            "delta_rule": cfg.evaluation.delta_rule,
            "proportional_factor": cfg.evaluation.proportional_factor,
            "threads": cfg.evaluation.threads,
        },
        "seed": cfg.seed,
    }


def load(path) -> RunConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    return from_dict(raw)


def save(cfg: RunConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_dict(cfg), fh, indent=2)
        fh.write("\n")
