"""Training-corpus construction from lap trajectories.

Snippets are fixed-length windows anchored to green-to-yellow transitions.
For a transition at index k, windows of length ``context_len`` are emitted
with last index k, k+hop, ... up to k+span (exclusive); windows that would
cross a trajectory boundary are discarded. The 1 s exposure filter keeps
only windows that actually contain the yellow phase.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .simulator import HmiConfig, HmiTrigger, HmiType, LightState, Trajectory


class EmptySupportError(ValueError):
    """A statistic was requested over an empty sample set."""


class CoverageError(ValueError):
    """A subject is missing laps in a required condition."""


class NormalizationError(ValueError):
    """A factor column cannot be normalized."""


@dataclass
class Snippet:
    subject_id: int
    lap_id: int
    hmi_condition: HmiConfig
    transition_index: int
    last_index: int  # index (within the source trajectory) of the window's last sample
    speed: np.ndarray
    dist_entry: np.ndarray
    dist_exit: np.ndarray
    light_state: np.ndarray
    hmi_active: np.ndarray
    actions: np.ndarray
    prev_action0: float  # action preceding the window (0 at lap start)
    yellow_exposure: float  # seconds of this transition's yellow phase inside the window
    sample_rate: float

    def __len__(self) -> int:
        return len(self.speed)


@dataclass(frozen=True)
class BehaviorStats:
    mean_speed_yellow: float
    max_speed_yellow: float
    min_speed_yellow: float
    std_speed_yellow: float


@dataclass(frozen=True)
class DecisionTarget:
    subject_id: int
    delta_speed: float  # non-HMI minus HMI mean yellow speed; positive = HMI helps

    @property
    def deploy(self) -> bool:
        return self.delta_speed > 0.0


def find_transitions(traj: Trajectory) -> list[int]:
    """Indices where the upcoming light switches green to yellow."""
    ls = traj.light_state
    if len(ls) < 2:
        return []
    hits = np.flatnonzero(
        (ls[1:] == int(LightState.YELLOW)) & (ls[:-1] == int(LightState.GREEN))
    )
    return [int(k) + 1 for k in hits]


def _yellow_run_length(traj: Trajectory, k: int) -> int:
    """Length of the contiguous yellow run starting at transition index k."""
    ls = traj.light_state
    n = len(ls)
    m = 0
    while k + m < n and ls[k + m] == int(LightState.YELLOW):
        m += 1
    return m


def extract_snippets(
    traj: Trajectory,
    context_len: int,
    hop: int,
    span: int | None = None,
) -> list[Snippet]:
    """Windows around every green-to-yellow transition of one trajectory."""
    if context_len < 1 or hop < 1:
        raise ValueError("context_len and hop must be >= 1")
    if span is None:
        span = context_len
    n = len(traj)
    if n < context_len:
        return []
    out = []
    for k in find_transitions(traj):
        run = _yellow_run_length(traj, k)
        for last in range(k, k + span, hop):
            start = last - context_len + 1
            if start < 0 or last >= n:
                continue
            # overlap of [start, last] with the yellow run [k, k+run)
            overlap = min(last, k + run - 1) - max(start, k) + 1
            exposure = max(overlap, 0) / traj.sample_rate
            sl = slice(start, last + 1)
            out.append(
                Snippet(
                    subject_id=traj.subject_id,
                    lap_id=traj.lap_id,
                    hmi_condition=traj.hmi_condition,
                    transition_index=k,
                    last_index=last,
                    speed=traj.speed[sl].copy(),
                    dist_entry=traj.dist_entry[sl].copy(),
                    dist_exit=traj.dist_exit[sl].copy(),
                    light_state=traj.light_state[sl].copy(),
                    hmi_active=traj.hmi_active[sl].copy(),
                    actions=traj.actions[sl].copy(),
                    prev_action0=float(traj.actions[start - 1]) if start > 0 else 0.0,
                    yellow_exposure=exposure,
                    sample_rate=traj.sample_rate,
                )
            )
    return out


def extract_corpus(
    trajectories: list[Trajectory],
    context_len: int,
    hop: int,
    span: int | None = None,
) -> list[Snippet]:
    corpus: list[Snippet] = []
    for traj in trajectories:
        corpus.extend(extract_snippets(traj, context_len, hop, span))
    return corpus


def filter_min_exposure(snippets: list[Snippet], min_exposure: float) -> list[Snippet]:
    if min_exposure < 0:
        raise ValueError("min_exposure must be >= 0")
    return [s for s in snippets if s.yellow_exposure >= min_exposure]


def batch_normalize_factors(
    y: np.ndarray, names: tuple[str, ...] | None = None
) -> np.ndarray:
    """Z-score each column over the batch using the population std."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or y.shape[0] < 2:
        raise NormalizationError("need a 2-D matrix with at least 2 rows")
    mean = y.mean(axis=0)
    std = y.std(axis=0)  # population convention
    bad = np.flatnonzero(std < 1e-12)
    if bad.size:
        j = int(bad[0])
        label = names[j] if names is not None else f"column {j}"
        raise NormalizationError(f"zero variance in factor {label}")
    return (y - mean) / std


def yellow_speed_stats(traj: Trajectory) -> BehaviorStats:
    mask = traj.light_state == int(LightState.YELLOW)
    if not mask.any():
        raise EmptySupportError(
            f"no yellow samples in subject {traj.subject_id} lap {traj.lap_id}"
        )
    v = traj.speed[mask]
    return BehaviorStats(
        mean_speed_yellow=float(v.mean()),
        max_speed_yellow=float(v.max()),
        min_speed_yellow=float(v.min()),
        std_speed_yellow=float(v.std()),
    )


def decision_targets(dataset: list[Trajectory]) -> list[DecisionTarget]:
    """Per-subject HMI benefit: mean yellow speed without HMI minus with HMI."""
    by_subject: dict[int, dict[bool, list[float]]] = {}
    for traj in dataset:
        is_hmi = traj.hmi_condition.active_condition
        by_subject.setdefault(traj.subject_id, {True: [], False: []})[is_hmi].append(
            yellow_speed_stats(traj).mean_speed_yellow
        )
    out = []
    for sid in sorted(by_subject):
        runs = by_subject[sid]
        if not runs[True] or not runs[False]:
            missing = "HMI" if not runs[True] else "non-HMI"
            raise CoverageError(f"subject {sid} has no {missing} laps")
        out.append(
            DecisionTarget(
                subject_id=sid,
                delta_speed=float(np.mean(runs[False]) - np.mean(runs[True])),
            )
        )
    return out


def subject_behavior_table(dataset: list[Trajectory]) -> dict[int, BehaviorStats]:
    """Per-subject behavior statistics averaged over all laps."""
    rows: dict[int, list[BehaviorStats]] = {}
    for traj in dataset:
        rows.setdefault(traj.subject_id, []).append(yellow_speed_stats(traj))
    return {
        sid: BehaviorStats(
            mean_speed_yellow=float(np.mean([r.mean_speed_yellow for r in stats])),
            max_speed_yellow=float(np.mean([r.max_speed_yellow for r in stats])),
            min_speed_yellow=float(np.mean([r.min_speed_yellow for r in stats])),
            std_speed_yellow=float(np.mean([r.std_speed_yellow for r in stats])),
        )
        for sid, stats in rows.items()
    }


# ---------------------------------------------------------------------------
# corpus persistence


def corpus_to_jsonl(snippets: list[Snippet]) -> str:
    lines = []
    for s in snippets:
        rec = {
            "subject_id": s.subject_id,
            "lap_id": s.lap_id,
            "hmi_type": s.hmi_condition.hmi_type.value,
            "trigger": s.hmi_condition.trigger.value,
            "transition_index": s.transition_index,
            "last_index": s.last_index,
            "prev_action0": s.prev_action0,
            "yellow_exposure": s.yellow_exposure,
            "sample_rate": s.sample_rate,
            "speed": s.speed.tolist(),
            "dist_entry": s.dist_entry.tolist(),
            "dist_exit": s.dist_exit.tolist(),
            "light_state": s.light_state.tolist(),
            "hmi_active": s.hmi_active.tolist(),
            "actions": s.actions.tolist(),
        }
        lines.append(json.dumps(rec))
    return "\n".join(lines) + ("\n" if lines else "")


def corpus_from_jsonl(text: str) -> list[Snippet]:
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        r = json.loads(line)
        out.append(
            Snippet(
                subject_id=r["subject_id"],
                lap_id=r["lap_id"],
                hmi_condition=HmiConfig(HmiType(r["hmi_type"]), HmiTrigger(r["trigger"])),
                transition_index=r["transition_index"],
                last_index=r["last_index"],
                speed=np.array(r["speed"], dtype=float),
                dist_entry=np.array(r["dist_entry"], dtype=float),
                dist_exit=np.array(r["dist_exit"], dtype=float),
                light_state=np.array(r["light_state"], dtype=np.int8),
                hmi_active=np.array(r["hmi_active"], dtype=np.int8),
                actions=np.array(r["actions"], dtype=float),
                prev_action0=r["prev_action0"],
                yellow_exposure=r["yellow_exposure"],
                sample_rate=r["sample_rate"],
            )
        )
    return out


def corpus_manifest(
    context_len: int, hop: int, min_exposure: float, source_jsonl: str
) -> dict:
    return {
        "context_len": context_len,
        "hop": hop,
        "min_exposure_s": min_exposure,
        "source_dataset_sha256": hashlib.sha256(source_jsonl.encode()).hexdigest(),
    }
