"""Synthetic driver cohort and closed-loop lap simulator.

A driver is parameterized by four latent behavioral factors (urgency,
fun seeking, go reaction time, self-reported violations). Laps run on a
loop with traffic lights that switch green to yellow at a randomized
approach distance; after a reaction delay the driver commits to stopping
or proceeding with a single Bernoulli draw whose probability is a
logistic function of an impulsivity composite, the required braking
effort, and (when a warning interface is active) a multiplicative
modifier that slows low-impulsivity drivers down and speeds
high-impulsivity drivers up.

Everything is a pure function of its inputs and an integer seed.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

from .config import CohortConfig, HmiEffectConfig, ScenarioConfig

log = logging.getLogger(__name__)


class LightState(IntEnum):
    GREEN = 0
    YELLOW = 1
    RED = 2


class HmiType(str, Enum):
    TRANSVERSE_MARKINGS = "TransverseMarkings"
    YELLOW_CIRCLE = "YellowCircle"
    NONE = "None"


class HmiTrigger(str, Enum):
    PROXIMITY = "Proximity185m"
    LIGHT_CHANGE = "LightChange"


@dataclass(frozen=True)
class HmiConfig:
    hmi_type: HmiType = HmiType.NONE
    trigger: HmiTrigger = HmiTrigger.LIGHT_CHANGE

    @property
    def active_condition(self) -> bool:
        return self.hmi_type is not HmiType.NONE


#: 1 baseline lap plus the 2x2 interface/trigger grid
DEFAULT_LAP_PLAN: tuple[HmiConfig, ...] = (
    HmiConfig(HmiType.NONE),
    HmiConfig(HmiType.TRANSVERSE_MARKINGS, HmiTrigger.PROXIMITY),
    HmiConfig(HmiType.TRANSVERSE_MARKINGS, HmiTrigger.LIGHT_CHANGE),
    HmiConfig(HmiType.YELLOW_CIRCLE, HmiTrigger.PROXIMITY),
    HmiConfig(HmiType.YELLOW_CIRCLE, HmiTrigger.LIGHT_CHANGE),
)

FACTOR_NAMES = ("urgency", "fun_seeking", "go_rt", "violations")


@dataclass(frozen=True)
class FactorVector:
    """Per-subject ground-truth factor values (go_rt in milliseconds)."""

    urgency: float
    fun_seeking: float
    go_rt: float
    violations: float

    def __post_init__(self) -> None:
        vals = (self.urgency, self.fun_seeking, self.go_rt, self.violations)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("factor values must be finite")
        if self.go_rt <= 0:
            raise ValueError("go_rt must be positive")

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.urgency, self.fun_seeking, self.go_rt, self.violations], dtype=float
        )


@dataclass(frozen=True)
class DriverParams:
    subject_id: int
    factors: FactorVector
    desired_speed: float  # m/s
    max_accel: float  # m/s^2
    max_decel: float  # m/s^2, positive magnitude
    reaction_delay: float  # s, = go_rt / 1000
    noise_std: float  # m/s^2
    composite: float  # impulsivity composite (z-space)
    urgency_z: float = 0.0


@dataclass(frozen=True)
class Scenario:
    """Concrete lap layout; onset distances are already drawn."""

    lap_length: float
    light_positions: tuple[float, ...]
    yellow_onset_distances: tuple[float, ...]
    yellow_duration: float
    sample_rate: float
    red_duration: float = 3.0
    intersection_width: float = 15.0
    proximity_trigger_m: float = 185.0
    speed_gain: float = 0.5
    stop_margin_m: float = 6.0
    max_lap_seconds: float = 600.0

    def __post_init__(self) -> None:
        if len(self.yellow_onset_distances) != len(self.light_positions):
            raise ValueError("need one onset distance per light")
        if any(d <= 0 or d > self.lap_length for d in self.yellow_onset_distances):
            raise ValueError("onset distances must lie in (0, lap_length]")


@dataclass(frozen=True)
class StateSample:
    t: float
    speed: float
    dist_entry: float
    dist_exit: float
    light_state: LightState
    hmi_active: int


@dataclass
class Trajectory:
    """One lap of one subject, on a uniform grid of 1/sample_rate."""

    subject_id: int
    lap_id: int
    hmi_condition: HmiConfig
    t: np.ndarray
    speed: np.ndarray
    dist_entry: np.ndarray
    dist_exit: np.ndarray
    light_state: np.ndarray  # int8, LightState values
    hmi_active: np.ndarray  # int8
    actions: np.ndarray  # m/s^2
    sample_rate: float = 5.0

    def __len__(self) -> int:
        return len(self.t)

    def sample(self, k: int) -> StateSample:
        return StateSample(
            t=float(self.t[k]),
            speed=float(self.speed[k]),
            dist_entry=float(self.dist_entry[k]),
            dist_exit=float(self.dist_exit[k]),
            light_state=LightState(int(self.light_state[k])),
            hmi_active=int(self.hmi_active[k]),
        )


def _zscore(value: float, stat) -> float:
    # zero-spread factors contribute nothing to derived params
    return 0.0 if stat.std == 0 else (value - stat.mean) / stat.std


def impulsivity_composite(factors: FactorVector, cohort: CohortConfig) -> float:
    """Mean of z-scored (urgency, fun_seeking, violations) minus z-scored go_rt."""
    zu = _zscore(factors.urgency, cohort.urgency)
    zf = _zscore(factors.fun_seeking, cohort.fun_seeking)
    zv = _zscore(factors.violations, cohort.violations)
    zg = _zscore(factors.go_rt, cohort.go_rt)
    return (zu + zf + zv) / 3.0 - zg


def derive_driver(subject_id: int, factors: FactorVector, cohort: CohortConfig) -> DriverParams:
    """Fixed mapping from factor values to simulator parameters."""
    zf = _zscore(factors.fun_seeking, cohort.fun_seeking)
    zv = _zscore(factors.violations, cohort.violations)
    zg = _zscore(factors.go_rt, cohort.go_rt)
    desired = (
        cohort.base_speed
        + cohort.speed_per_fun_z * zf
        + cohort.speed_per_violations_z * zv
        + cohort.speed_per_go_rt_z * zg
    )
    desired = max(desired, cohort.min_desired_speed)
    return DriverParams(
        subject_id=subject_id,
        factors=factors,
        desired_speed=desired,
        max_accel=cohort.max_accel,
        max_decel=cohort.max_decel,
        reaction_delay=factors.go_rt / 1000.0,
        noise_std=cohort.noise_std,
        composite=impulsivity_composite(factors, cohort),
        urgency_z=_zscore(factors.urgency, cohort.urgency),
    )


def sample_cohort(cohort: CohortConfig, seed: int) -> list[DriverParams]:
    """Draw a cohort of drivers, independently per factor, deterministically per seed."""
    if cohort.n_subjects < 2:
        raise ValueError("need at least 2 subjects")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 101]))
    drivers = []
    for sid in range(cohort.n_subjects):
        draws = {}
        for name in FACTOR_NAMES:
            stat = getattr(cohort, name)
            draws[name] = float(stat.mean + stat.std * rng.standard_normal())
        # reaction times below 80 ms are not human; floor keeps go_rt valid
        draws["go_rt"] = max(draws["go_rt"], 80.0)
        drivers.append(derive_driver(sid, FactorVector(**draws), cohort))
    return drivers


def go_probability(
    driver: DriverParams,
    hmi_active: int,
    dist_entry: float,
    speed: float,
    effect: HmiEffectConfig,
    hmi_type: HmiType = HmiType.NONE,
) -> float:
    """Probability that the driver proceeds through the yellow light.

    Monotone nondecreasing in the impulsivity composite (hence in urgency,
    fun seeking, and violations, and nonincreasing in go_rt). The kinematic
    term raises p when stopping would require harsh braking. With an active
    interface, p is multiplied by rho = 2*sigmoid(hmi_gain*(c - median)),
    which is < 1 below the median composite and > 1 above it, then clamped.
    """
    if dist_entry < 0 or speed < 0:
        raise ValueError("dist_entry and speed must be nonnegative")
    if dist_entry > 1e-9:
        a_req = speed * speed / (2.0 * dist_entry)
    else:
        a_req = math.inf if speed > 0 else 0.0
    ratio = min(a_req / driver.max_decel, 10.0)
    logit = (
        effect.go_intercept
        + effect.go_composite_gain * driver.composite
        + effect.go_urgency_gain * driver.urgency_z
        + effect.go_kinematic_gain * (ratio - effect.go_kinematic_ref)
    )
    p = _sigmoid(logit)
    if hmi_active:
        rho = 2.0 * _sigmoid(effect.hmi_gain * (driver.composite - effect.composite_median))
        if hmi_type is HmiType.YELLOW_CIRCLE:
            rho += effect.circle_rho_offset
        p = p * max(rho, 0.0)
    return min(max(p, 0.0), 1.0)


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def randomize_onsets(scenario: ScenarioConfig, rng: np.random.Generator) -> Scenario:
    """Draw a per-lap onset distance for every light from the configured band."""
    lo, hi = scenario.yellow_onset_band
    onsets = tuple(float(d) for d in rng.uniform(lo, hi, size=len(scenario.light_positions)))
    return Scenario(
        lap_length=scenario.lap_length,
        light_positions=tuple(scenario.light_positions),
        yellow_onset_distances=onsets,
        yellow_duration=scenario.yellow_duration,
        sample_rate=scenario.sample_rate,
        red_duration=scenario.red_duration,
        intersection_width=scenario.intersection_width,
        proximity_trigger_m=scenario.proximity_trigger_m,
        speed_gain=scenario.speed_gain,
        stop_margin_m=scenario.stop_margin_m,
        max_lap_seconds=scenario.max_lap_seconds,
    )


class _Light:
    __slots__ = ("pos", "onset_dist", "fired_t", "decided", "go")

    def __init__(self, pos: float, onset_dist: float) -> None:
        self.pos = pos
        self.onset_dist = onset_dist
        self.fired_t: float | None = None
        self.decided = False
        self.go = True

    def state(self, t: float, yellow_s: float, red_s: float) -> LightState:
        if self.fired_t is None:
            return LightState.GREEN
        dt = t - self.fired_t
        if dt < yellow_s:
            return LightState.YELLOW
        if dt < yellow_s + red_s:
            return LightState.RED
        return LightState.GREEN  # cycled back


def simulate_lap(
    driver: DriverParams,
    scenario: Scenario,
    hmi: HmiConfig,
    seed: int,
    effect: HmiEffectConfig | None = None,
    lap_id: int = 0,
    duration_s: float | None = None,
) -> Trajectory:
    """Integrate one lap at scenario.sample_rate.

    The driver tracks desired speed with a proportional controller clipped
    to [-max_decel, max_accel] plus truncated Gaussian action noise. At a
    green-to-yellow transition the stop/go commitment is made once, after
    reaction_delay, by a Bernoulli(go_probability) draw. A stop that would
    exceed max_decel is abandoned (the driver proceeds; logged). If
    ``duration_s`` is given the lap runs exactly that long, otherwise it
    ends when the vehicle passes lap_length.
    """
    if effect is None:
        effect = HmiEffectConfig()
    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    dt = 1.0 / scenario.sample_rate
    n_fixed = None if duration_s is None else int(round(duration_s * scenario.sample_rate))

    lights = [
        _Light(p, d)
        for p, d in zip(scenario.light_positions, scenario.yellow_onset_distances)
    ]
    nlights = len(lights)
    upcoming = 0

    x = 0.0
    v = driver.desired_speed
    t = 0.0
    cols: dict[str, list[float]] = {k: [] for k in ("t", "v", "de", "dx", "ls", "hmi", "a")}

    step = 0
    while True:
        if n_fixed is not None:
            if step >= n_fixed:
                break
        elif x >= scenario.lap_length or t > scenario.max_lap_seconds:
            break

        if upcoming < nlights:
            light = lights[upcoming]
            d_entry = light.pos - x
            d_exit = d_entry + scenario.intersection_width
            if light.fired_t is None and d_entry <= light.onset_dist:
                light.fired_t = t
            state = light.state(t, scenario.yellow_duration, scenario.red_duration)
        else:
            # closed loop: the next light is the first one of the next lap
            light = None
            d_entry = scenario.lap_length - x + scenario.light_positions[0]
            d_exit = d_entry + scenario.intersection_width
            state = LightState.GREEN

        if hmi.active_condition and light is not None:
            if hmi.trigger is HmiTrigger.PROXIMITY:
                hmi_on = d_entry <= scenario.proximity_trigger_m
            else:
                hmi_on = state is not LightState.GREEN
        else:
            hmi_on = False

        # one-shot stop/go commitment, reaction_delay after the transition
        if (
            light is not None
            and light.fired_t is not None
            and not light.decided
            and t >= light.fired_t + driver.reaction_delay
        ):
            light.decided = True
            a_req = v * v / (2.0 * d_entry) if d_entry > 1e-9 else math.inf
            if a_req > driver.max_decel:
                light.go = True
                log.debug(
                    "subject %d lap %d: stop infeasible at light %.0f m (a_req=%.2f), proceeding",
                    driver.subject_id, lap_id, light.pos, a_req,
                )
            else:
                p = go_probability(driver, int(hmi_on), d_entry, v, effect, hmi.hmi_type)
                light.go = bool(rng.random() < p)

        cols["t"].append(t)
        cols["v"].append(v)
        cols["de"].append(d_entry)
        cols["dx"].append(d_exit)
        cols["ls"].append(int(state))
        cols["hmi"].append(int(hmi_on))

        stopping = (
            light is not None
            and light.decided
            and not light.go
            and state is not LightState.GREEN
        )
        if stopping:
            if v < 0.05:
                a_cmd = 0.0  # holding at the line until the light cycles back
            else:
                a_cmd = -v * v / (2.0 * max(d_entry - scenario.stop_margin_m, 0.5))
        elif light is not None and light.decided and light.go and state is not LightState.GREEN:
            boost = max(effect.go_speed_boost + effect.go_boost_urgency * driver.urgency_z, 1.0)
            a_cmd = scenario.speed_gain * (max(driver.desired_speed * boost, v) - v)
        else:
            a_cmd = scenario.speed_gain * (driver.desired_speed - v)

        a = float(np.clip(a_cmd, -driver.max_decel, driver.max_accel))
        if driver.noise_std > 0:
            noise = float(rng.standard_normal()) * driver.noise_std
            a += float(np.clip(noise, -5.0 * driver.noise_std, 5.0 * driver.noise_std))
        if v + a * dt < 0:
            a = -v / dt
        cols["a"].append(a)

        x += v * dt + 0.5 * a * dt * dt
        v = max(v + a * dt, 0.0)
        t += dt
        step += 1

        if upcoming < nlights and x >= lights[upcoming].pos:
            upcoming += 1

    return Trajectory(
        subject_id=driver.subject_id,
        lap_id=lap_id,
        hmi_condition=hmi,
        t=np.asarray(cols["t"]),
        speed=np.asarray(cols["v"]),
        dist_entry=np.asarray(cols["de"]),
        dist_exit=np.asarray(cols["dx"]),
        light_state=np.asarray(cols["ls"], dtype=np.int8),
        hmi_active=np.asarray(cols["hmi"], dtype=np.int8),
        actions=np.asarray(cols["a"]),
        sample_rate=scenario.sample_rate,
    )


def lap_seed(seed: int, subject_id: int, lap_id: int) -> int:
    """Stable per-lap seed so laps are independent of execution order."""
    ss = np.random.SeedSequence([int(seed), int(subject_id), int(lap_id)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generate_dataset(
    cohort: list[DriverParams],
    scenario: ScenarioConfig,
    lap_plan: tuple[HmiConfig, ...] = DEFAULT_LAP_PLAN,
    seed: int = 0,
    effect: HmiEffectConfig | None = None,
) -> list[Trajectory]:
    """One trajectory per (subject, lap); onsets redrawn per lap."""
    if not lap_plan:
        raise ValueError("lap_plan must be non-empty")
    trajectories = []
    for driver in cohort:
        for lap_id, hmi in enumerate(lap_plan):
            s = lap_seed(seed, driver.subject_id, lap_id)
            onset_rng = np.random.default_rng(np.random.SeedSequence([s, 1]))
            concrete = randomize_onsets(scenario, onset_rng)
            trajectories.append(
                simulate_lap(driver, concrete, hmi, seed=s, effect=effect, lap_id=lap_id)
            )
    return trajectories


# ---------------------------------------------------------------------------
# serialization


def cohort_to_json(cohort: list[DriverParams]) -> str:
    records = [
        {
            "subject_id": d.subject_id,
            "urgency": d.factors.urgency,
            "fun_seeking": d.factors.fun_seeking,
            "go_rt_ms": d.factors.go_rt,
            "violations": d.factors.violations,
            "desired_speed_mps": d.desired_speed,
            "max_accel_mps2": d.max_accel,
            "max_decel_mps2": d.max_decel,
            "reaction_delay_s": d.reaction_delay,
            "noise_std_mps2": d.noise_std,
            "composite": d.composite,
            "urgency_z": d.urgency_z,
        }
        for d in cohort
    ]
    return json.dumps(records, indent=2)


def cohort_from_json(text: str) -> list[DriverParams]:
    out = []
    for rec in json.loads(text):
        factors = FactorVector(
            urgency=rec["urgency"],
            fun_seeking=rec["fun_seeking"],
            go_rt=rec["go_rt_ms"],
            violations=rec["violations"],
        )
        out.append(
            DriverParams(
                subject_id=rec["subject_id"],
                factors=factors,
                desired_speed=rec["desired_speed_mps"],
                max_accel=rec["max_accel_mps2"],
                max_decel=rec["max_decel_mps2"],
                reaction_delay=rec["reaction_delay_s"],
                noise_std=rec["noise_std_mps2"],
                composite=rec["composite"],
                urgency_z=rec.get("urgency_z", 0.0),
            )
        )
    return out


def trajectories_to_jsonl(trajectories: list[Trajectory]) -> str:
    """One JSON record per sample, fields exactly as documented."""
    lines = []
    for traj in trajectories:
        head = (
            traj.subject_id,
            traj.lap_id,
            traj.hmi_condition.hmi_type.value,
            traj.hmi_condition.trigger.value,
        )
        for k in range(len(traj)):
            rec = {
                "subject_id": head[0],
                "lap_id": head[1],
                "hmi_type": head[2],
                "trigger": head[3],
                "t": round(float(traj.t[k]), 6),
                "speed_mps": float(traj.speed[k]),
                "dist_entry_m": float(traj.dist_entry[k]),
                "dist_exit_m": float(traj.dist_exit[k]),
                "light_state": int(traj.light_state[k]),
                "hmi_active": int(traj.hmi_active[k]),
                "accel_mps2": float(traj.actions[k]),
            }
            lines.append(json.dumps(rec))
    return "\n".join(lines) + ("\n" if lines else "")


def trajectories_from_jsonl(text: str, sample_rate: float = 5.0) -> list[Trajectory]:
    groups: dict[tuple[int, int], list[dict]] = {}
    order: list[tuple[int, int]] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        key = (rec["subject_id"], rec["lap_id"])
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(rec)
    out = []
    for key in order:
        recs = sorted(groups[key], key=lambda r: r["t"])
        hmi = HmiConfig(HmiType(recs[0]["hmi_type"]), HmiTrigger(recs[0]["trigger"]))
        out.append(
            Trajectory(
                subject_id=key[0],
                lap_id=key[1],
                hmi_condition=hmi,
                t=np.array([r["t"] for r in recs]),
                speed=np.array([r["speed_mps"] for r in recs]),
                dist_entry=np.array([r["dist_entry_m"] for r in recs]),
                dist_exit=np.array([r["dist_exit_m"] for r in recs]),
                light_state=np.array([r["light_state"] for r in recs], dtype=np.int8),
                hmi_active=np.array([r["hmi_active"] for r in recs], dtype=np.int8),
                actions=np.array([r["accel_mps2"] for r in recs]),
                sample_rate=sample_rate,
            )
        )
    return out
