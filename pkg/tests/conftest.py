import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from driverlatent.config import RunConfig, ScenarioConfig
from driverlatent import simulator as sim


def small_run_config(n_subjects: int = 6, epochs: int = 4) -> RunConfig:
    """A config small enough for unit tests (seconds, not minutes)."""
    cfg = RunConfig.from_preset("desk")
    cfg.cohort.n_subjects = n_subjects
    cfg.hyper.epochs = epochs
    cfg.hyper.hidden = 8
    cfg.hyper.batch_size = 128
    cfg.dataset.encoder_hop = 10
    cfg.dataset.decision_hop = 15
    cfg.eval.seeds = (0,)
    return cfg


@pytest.fixture(scope="session")
def small_cfg() -> RunConfig:
    return small_run_config()


@pytest.fixture(scope="session")
def small_dataset(small_cfg):
    cohort = sim.sample_cohort(small_cfg.cohort, seed=3)
    dataset = sim.generate_dataset(
        cohort, small_cfg.scenario, seed=3, effect=small_cfg.hmi_effect
    )
    return cohort, dataset


def make_trajectory(
    light_state: np.ndarray,
    speed: np.ndarray | None = None,
    subject_id: int = 0,
    lap_id: int = 0,
    hmi: sim.HmiConfig | None = None,
    sample_rate: float = 5.0,
) -> sim.Trajectory:
    """Hand-built trajectory for exact snippet/stat tests."""
    n = len(light_state)
    if speed is None:
        speed = np.full(n, 10.0)
    dt = 1.0 / sample_rate
    return sim.Trajectory(
        subject_id=subject_id,
        lap_id=lap_id,
        hmi_condition=hmi or sim.HmiConfig(),
        t=np.arange(n) * dt,
        speed=np.asarray(speed, dtype=float),
        dist_entry=np.linspace(500.0, 10.0, n),
        dist_exit=np.linspace(515.0, 25.0, n),
        light_state=np.asarray(light_state, dtype=np.int8),
        hmi_active=np.zeros(n, dtype=np.int8),
        actions=np.zeros(n),
        sample_rate=sample_rate,
    )
