"""Run configuration: one JSON document drives the whole pipeline.

Every knob lives in a dataclass below. ``RunConfig.from_dict`` validates
strictly (unknown keys are rejected) so a config file is the single source
of truth for an experiment. Two presets are provided: ``desk`` is the
reduced profile that trains in minutes on a laptop, ``paper`` pins the
full-scale training hyperparameters.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass
class FactorStat:
    mean: float
    std: float


@dataclass
class CohortConfig:
    """Cohort sampling spec plus the factor-to-driver-parameter mapping."""

    n_subjects: int = 27
    urgency: FactorStat = field(default_factory=lambda: FactorStat(2.2, 0.6))
    fun_seeking: FactorStat = field(default_factory=lambda: FactorStat(2.9, 0.5))
    go_rt: FactorStat = field(default_factory=lambda: FactorStat(450.0, 90.0))  # ms
    violations: FactorStat = field(default_factory=lambda: FactorStat(2.0, 0.7))
    # desired_speed = base + speed_per_fun_z * z(fun) + speed_per_violations_z * z(viol)
    #               + speed_per_go_rt_z * z(go_rt); the go_rt loading is negative
    # (slower reaction times go with slower driving)
    base_speed: float = 15.0
    speed_per_fun_z: float = 1.2
    speed_per_violations_z: float = 1.0
    speed_per_go_rt_z: float = -0.8
    min_desired_speed: float = 5.0
    max_accel: float = 2.5
    max_decel: float = 4.0
    noise_std: float = 0.12


@dataclass
class ScenarioConfig:
    lap_length: float = 2000.0
    light_positions: tuple[float, ...] = (450.0, 1100.0, 1750.0)
    # green->yellow fires when the vehicle is this far from the light,
    # drawn uniformly from the band once per light per lap
    yellow_onset_band: tuple[float, float] = (45.0, 100.0)
    yellow_duration: float = 4.0
    red_duration: float = 3.0
    intersection_width: float = 15.0
    sample_rate: float = 5.0
    proximity_trigger_m: float = 185.0
    speed_gain: float = 0.5  # proportional speed controller, 1/s
    stop_margin_m: float = 6.0  # stopping drivers aim this far before the line
    max_lap_seconds: float = 600.0


@dataclass
class HmiEffectConfig:
    """Yellow-light response: go-probability logistic and the HMI modifier.

    The intercept sits high enough that above-median drivers saturate
    (their HMI-induced go-rate increase is capped by the clamp at 1), so
    deploying the interface to everyone still lowers the cohort mean.
    """

    go_intercept: float = 1.0
    go_composite_gain: float = 1.3
    go_urgency_gain: float = 0.7  # urgency pushes through yellows beyond its composite share
    go_kinematic_gain: float = 2.0
    go_kinematic_ref: float = 0.45
    hmi_gain: float = 3.5  # slope of rho(composite)
    composite_median: float = 0.0
    circle_rho_offset: float = -0.02  # YellowCircle shifts rho slightly
    go_speed_boost: float = 1.12  # go-committed drivers push through the light
    go_boost_urgency: float = 0.06  # extra push per urgency z-score


@dataclass
class DatasetConfig:
    """Snippet extraction knobs for the two corpora."""

    encoder_hop: int = 1
    encoder_span: int | None = None  # None -> context length
    decision_hop: int = 6
    decision_span: int | None = None
    min_exposure_s: float = 1.0


@dataclass
class Hyperparams:
    batch_size: int = 2048
    epochs: int = 600
    epsilon_contrastive: float = 2.0
    lr: float = 1e-2
    alpha1: float = 1e4
    alpha2: float = 1e4
    alpha3: float = 1e-8
    context_seconds: float = 6.0
    hidden: int = 128
    latent_dim: int = 2
    include_prev_action: bool = True
    sample_latent_in_training: bool = True

    def context_len(self, sample_rate: float) -> int:
        return int(round(self.context_seconds * sample_rate))


@dataclass
class SvrConfig:
    C: float = 1.0
    epsilon: float = 0.5
    degree: int = 3
    gamma: float | None = None  # None -> 1 / latent_dim
    coef0: float = 1.0
    tol: float = 1e-4
    max_iter: int = 200_000


@dataclass
class EvalConfig:
    seeds: tuple[int, ...] = (0, 1, 2)
    jobs: int = 1
    streaming: bool = False
    smoothing_window_s: float = 6.0
    # which latent mode feeds the normalized-KL embedding metric
    kl_latent_mode: str = "windowed"


#: hyperparameter profiles; only the keys listed here are pinned by a preset
PRESETS: dict[str, dict[str, Any]] = {
    "paper": {"batch_size": 2048, "epochs": 600, "hidden": 128},
    "desk": {"batch_size": 256, "epochs": 100, "hidden": 32},
}


@dataclass
class RunConfig:
    seed: int = 0
    preset: str = "desk"
    cohort: CohortConfig = field(default_factory=CohortConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    hmi_effect: HmiEffectConfig = field(default_factory=HmiEffectConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    hyper: Hyperparams = field(default_factory=Hyperparams)
    svr: SvrConfig = field(default_factory=SvrConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self) -> None:
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "RunConfig":
        cfg = _build(cls, raw, path="")
        # the preset supplies profile keys the document does not set itself
        explicit = set(raw.get("hyper", {}) or {})
        for k, v in PRESETS[cfg.preset].items():
            if k not in explicit:
                setattr(cfg.hyper, k, v)
        cfg.validate()
        return cfg

    @classmethod
    def from_preset(cls, preset: str, **overrides: Any) -> "RunConfig":
        cfg = cls(preset=preset, **overrides)
        for k, v in PRESETS[preset].items():
            setattr(cfg.hyper, k, v)
        cfg.validate()
        return cfg

    def apply_preset(self) -> "RunConfig":
        for k, v in PRESETS[self.preset].items():
            setattr(self.hyper, k, v)
        return self

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def content_hash(self) -> str:
        payload = self.to_dict()
        payload["eval"].pop("jobs")  # execution detail, never changes results
        digest = hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode()
        ).hexdigest()
        return digest[:16]

    def validate(self) -> None:
        c, s, h = self.cohort, self.scenario, self.hyper
        if c.n_subjects < 2:
            raise ConfigError("cohort.n_subjects must be >= 2")
        for name in ("urgency", "fun_seeking", "go_rt", "violations"):
            st: FactorStat = getattr(c, name)
            if not (_finite(st.mean) and _finite(st.std)):
                raise ConfigError(f"cohort.{name} mean/std must be finite")
            if st.std < 0:
                raise ConfigError(f"cohort.{name}.std must be >= 0")
        if c.go_rt.mean <= 0:
            raise ConfigError("cohort.go_rt.mean must be positive (milliseconds)")
        if c.max_accel <= 0 or c.max_decel <= 0 or c.noise_std < 0:
            raise ConfigError("cohort accel/decel must be > 0 and noise_std >= 0")
        if s.sample_rate <= 0 or s.lap_length <= 0:
            raise ConfigError("scenario sample_rate and lap_length must be positive")
        if list(s.light_positions) != sorted(s.light_positions) or len(
            set(s.light_positions)
        ) != len(s.light_positions):
            raise ConfigError("scenario.light_positions must be strictly increasing")
        if any(p <= 0 or p >= s.lap_length for p in s.light_positions):
            raise ConfigError("light positions must lie inside the lap")
        lo, hi = s.yellow_onset_band
        if not (0 < lo <= hi <= s.lap_length):
            raise ConfigError("yellow_onset_band must satisfy 0 < lo <= hi <= lap_length")
        if h.batch_size < 2 or h.hidden < 1 or h.latent_dim < 1:
            raise ConfigError("hyper batch_size >= 2, hidden >= 1, latent_dim >= 1")
        if h.epochs < 0 or h.lr <= 0 or h.epsilon_contrastive <= 0:
            raise ConfigError("hyper epochs >= 0, lr > 0, epsilon_contrastive > 0")
        if h.alpha1 < 0 or h.alpha2 <= 0 or h.alpha3 < 0:
            # alpha1 = 0 is the reconstruction-off ablation
            raise ConfigError("loss coefficients must be nonnegative (alpha2 > 0)")
        if self.svr.C <= 0 or self.svr.epsilon < 0:
            raise ConfigError("svr.C must be > 0 and svr.epsilon >= 0")
        if self.dataset.encoder_hop < 1 or self.dataset.decision_hop < 1:
            raise ConfigError("snippet hops must be >= 1")
        if len(self.eval.seeds) < 1:
            raise ConfigError("eval.seeds must be non-empty")
        if self.eval.kl_latent_mode not in ("windowed", "instantaneous"):
            raise ConfigError("eval.kl_latent_mode must be 'windowed' or 'instantaneous'")


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return RunConfig.from_dict(raw)


def _finite(x: float) -> bool:
    return isinstance(x, (int, float)) and x == x and abs(x) != float("inf")


def _build(cls: type, raw: Any, path: str) -> Any:
    """Recursively build a dataclass from a dict, rejecting unknown keys."""
    if not dataclasses.is_dataclass(cls):
        raise TypeError(f"{cls} is not a dataclass")
    if not isinstance(raw, dict):
        raise ConfigError(f"expected object at {path or 'root'}, got {type(raw).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(raw) - set(fields)
    if unknown:
        loc = path or "root"
        raise ConfigError(f"unknown config key(s) at {loc}: {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for name, value in raw.items():
        f = fields[name]
        sub = _DATACLASS_FIELDS.get((cls, name))
        if sub is not None:
            kwargs[name] = _build(sub, value, f"{path}{name}.")
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad config value under {path or 'root'}: {exc}") from exc


# nested dataclass fields, resolved statically so _build stays simple
_DATACLASS_FIELDS: dict[tuple[type, str], type] = {
    (RunConfig, "cohort"): CohortConfig,
    (RunConfig, "scenario"): ScenarioConfig,
    (RunConfig, "hmi_effect"): HmiEffectConfig,
    (RunConfig, "dataset"): DatasetConfig,
    (RunConfig, "hyper"): Hyperparams,
    (RunConfig, "svr"): SvrConfig,
    (RunConfig, "eval"): EvalConfig,
    (CohortConfig, "urgency"): FactorStat,
    (CohortConfig, "fun_seeking"): FactorStat,
    (CohortConfig, "go_rt"): FactorStat,
    (CohortConfig, "violations"): FactorStat,
}
