import dataclasses
import json

import numpy as np
import pytest

from driverlatent.config import CohortConfig, FactorStat, HmiEffectConfig, ScenarioConfig
from driverlatent import simulator as sim


def concrete_scenario(seed=0, **overrides):
    scen = ScenarioConfig(**overrides) if overrides else ScenarioConfig()
    return sim.randomize_onsets(scen, np.random.default_rng(seed))


def test_zero_variance_cohort_is_identical():
    cohort_cfg = CohortConfig(
        n_subjects=2,
        urgency=FactorStat(2.0, 0.0),
        fun_seeking=FactorStat(3.0, 0.0),
        go_rt=FactorStat(400.0, 0.0),
        violations=FactorStat(1.5, 0.0),
    )
    a, b = sim.sample_cohort(cohort_cfg, seed=7)
    assert a.factors == dataclasses.replace(b.factors)
    assert a.desired_speed == b.desired_speed
    assert a.factors.urgency == 2.0 and a.factors.go_rt == 400.0


def test_cohort_deterministic_and_sized():
    cfg = CohortConfig(n_subjects=27)
    c1 = sim.sample_cohort(cfg, seed=1)
    c2 = sim.sample_cohort(cfg, seed=1)
    assert len(c1) == 27
    for d1, d2 in zip(c1, c2):
        assert d1.factors.as_array().tolist() == d2.factors.as_array().tolist()
    assert sim.sample_cohort(cfg, seed=2)[0].factors != c1[0].factors


def test_cohort_sample_means_near_spec():
    cfg = CohortConfig(n_subjects=27)
    cohort = sim.sample_cohort(cfg, seed=1)
    for name in sim.FACTOR_NAMES:
        stat = getattr(cfg, name)
        values = np.array([getattr(d.factors, name) for d in cohort])
        assert abs(values.mean() - stat.mean) <= 3.0 * stat.std / np.sqrt(27)


def test_factor_vector_invariants():
    with pytest.raises(ValueError):
        sim.FactorVector(urgency=np.nan, fun_seeking=1, go_rt=400, violations=1)
    with pytest.raises(ValueError):
        sim.FactorVector(urgency=1, fun_seeking=1, go_rt=0.0, violations=1)


def driver_with_composite(c: float, cohort_cfg=None) -> sim.DriverParams:
    cohort_cfg = cohort_cfg or CohortConfig()
    # urgency, fun, violations at +c sd; go_rt at -... composite mean(z3) - zg
    f = sim.FactorVector(
        urgency=cohort_cfg.urgency.mean + c * cohort_cfg.urgency.std,
        fun_seeking=cohort_cfg.fun_seeking.mean + c * cohort_cfg.fun_seeking.std,
        go_rt=cohort_cfg.go_rt.mean,
        violations=cohort_cfg.violations.mean + c * cohort_cfg.violations.std,
    )
    d = sim.derive_driver(0, f, cohort_cfg)
    assert abs(d.composite - c) < 1e-9
    return d


class TestGoProbability:
    effect = HmiEffectConfig()

    def test_range_and_monotonicity_in_urgency(self):
        cfg = CohortConfig()
        base = sim.FactorVector(2.2, 2.9, 450.0, 2.0)
        hi = sim.FactorVector(2.2 + 2 * 0.6, 2.9, 450.0, 2.0)
        d_lo = sim.derive_driver(0, base, cfg)
        d_hi = sim.derive_driver(1, hi, cfg)
        p_lo = sim.go_probability(d_lo, 0, 60.0, 15.0, self.effect)
        p_hi = sim.go_probability(d_hi, 0, 60.0, 15.0, self.effect)
        assert 0.0 <= p_lo <= 1.0 and 0.0 <= p_hi <= 1.0
        assert p_hi > p_lo

    def test_extreme_low_composite_never_goes(self):
        d = driver_with_composite(-30.0)
        for hmi in (0, 1):
            assert sim.go_probability(d, hmi, 80.0, 15.0, self.effect) < 1e-6

    def test_hmi_neutral_at_median_composite(self):
        d = driver_with_composite(0.0)
        # offset-free interface type so rho(median) is exactly 1
        p0 = sim.go_probability(d, 0, 70.0, 15.0, self.effect, sim.HmiType.TRANSVERSE_MARKINGS)
        p1 = sim.go_probability(d, 1, 70.0, 15.0, self.effect, sim.HmiType.TRANSVERSE_MARKINGS)
        assert p1 == pytest.approx(p0, abs=1e-12)

    def test_monotone_in_each_impulsivity_factor(self):
        cfg = CohortConfig()
        base = sim.FactorVector(2.2, 2.9, 450.0, 2.0)
        p_base = sim.go_probability(sim.derive_driver(0, base, cfg), 0, 70.0, 15.0, self.effect)
        for field, delta in (("urgency", 0.6), ("fun_seeking", 0.5), ("violations", 0.7)):
            bumped = dataclasses.replace(base, **{field: getattr(base, field) + delta})
            p = sim.go_probability(sim.derive_driver(0, bumped, cfg), 0, 70.0, 15.0, self.effect)
            assert p >= p_base
        slower = dataclasses.replace(base, go_rt=base.go_rt + 90.0)
        p = sim.go_probability(sim.derive_driver(0, slower, cfg), 0, 70.0, 15.0, self.effect)
        assert p <= p_base

    def test_invalid_kinematics_rejected(self):
        d = driver_with_composite(0.0)
        with pytest.raises(ValueError):
            sim.go_probability(d, 0, -1.0, 10.0, self.effect)


class TestSimulateLap:
    def test_fixed_duration_grid_arithmetic(self):
        d = driver_with_composite(0.0)
        traj = sim.simulate_lap(d, concrete_scenario(), sim.HmiConfig(), seed=5, duration_s=120.0)
        assert len(traj) == 600
        assert len(traj.actions) == 600
        dt = np.diff(traj.t)
        assert np.allclose(dt, 0.2)

    def test_no_hmi_never_active(self):
        d = driver_with_composite(0.5)
        traj = sim.simulate_lap(d, concrete_scenario(), sim.HmiConfig(sim.HmiType.NONE), seed=5)
        assert not traj.hmi_active.any()

    def test_forced_stop_driver_halts_at_lights(self):
        # go probability pinned to ~0: the driver stops whenever stopping is
        # feasible (long red phase so the halt completes before the light cycles)
        effect = HmiEffectConfig(go_intercept=-50.0)
        d = driver_with_composite(0.0)
        scen = concrete_scenario(seed=2, red_duration=30.0)
        traj = sim.simulate_lap(d, scen, sim.HmiConfig(), seed=9, effect=effect)
        yellow = traj.light_state == int(sim.LightState.YELLOW)
        assert yellow.any()
        # after each transition the vehicle reaches near standstill before the line
        ls = traj.light_state
        transitions = np.flatnonzero((ls[1:] == 1) & (ls[:-1] == 0)) + 1
        for k in transitions:
            v0, d0 = traj.speed[k], traj.dist_entry[k]
            if v0 * v0 / (2.0 * max(d0, 1e-6)) > d.max_decel:
                continue  # stop infeasible, driver legitimately proceeds
            window = slice(k, min(k + 80, len(traj)))
            assert traj.speed[window].min() < 0.5

    def test_physical_sanity(self, small_dataset):
        cohort, dataset = small_dataset
        by_id = {d.subject_id: d for d in cohort}
        for traj in dataset:
            d = by_id[traj.subject_id]
            assert (traj.speed >= 0).all()
            bound = max(d.max_accel, d.max_decel) + 5 * d.noise_std
            assert np.max(np.abs(traj.actions)) <= bound + 1e-9
            dv = np.abs(np.diff(traj.speed))
            assert dv.max() <= bound / traj.sample_rate + 1e-9

    def test_seed_determinism(self):
        d = driver_with_composite(0.3)
        scen = concrete_scenario(seed=4)
        t1 = sim.simulate_lap(d, scen, sim.HmiConfig(), seed=11)
        t2 = sim.simulate_lap(d, scen, sim.HmiConfig(), seed=11)
        assert np.array_equal(t1.speed, t2.speed)
        assert np.array_equal(t1.actions, t2.actions)


def test_hmi_interaction_crossover_sign():
    # zero action noise; the lowest-composite driver slows down under the
    # interface while the highest-composite driver speeds up
    cohort_cfg = CohortConfig(noise_std=0.0)
    effect = HmiEffectConfig()
    scen_cfg = ScenarioConfig()
    lo = driver_with_composite(-1.2, cohort_cfg)
    hi = driver_with_composite(+1.2, cohort_cfg)

    def mean_yellow(driver, hmi, seeds):
        speeds = []
        for s in seeds:
            scen = sim.randomize_onsets(scen_cfg, np.random.default_rng(1000 + s))
            traj = sim.simulate_lap(driver, scen, hmi, seed=s, effect=effect)
            mask = traj.light_state == int(sim.LightState.YELLOW)
            speeds.extend(traj.speed[mask].tolist())
        return float(np.mean(speeds))

    seeds = range(30)
    hmi_on = sim.HmiConfig(sim.HmiType.TRANSVERSE_MARKINGS, sim.HmiTrigger.LIGHT_CHANGE)
    hmi_off = sim.HmiConfig()
    assert mean_yellow(lo, hmi_on, seeds) < mean_yellow(lo, hmi_off, seeds)
    assert mean_yellow(hi, hmi_on, seeds) > mean_yellow(hi, hmi_off, seeds)


class TestGenerateDataset:
    def test_paper_count_parity(self):
        cohort = sim.sample_cohort(CohortConfig(n_subjects=27), seed=1)
        dataset = sim.generate_dataset(cohort, ScenarioConfig(), seed=1)
        assert len(dataset) == 135  # 27 subjects x 5 laps

    def test_empty_cohort(self):
        assert sim.generate_dataset([], ScenarioConfig(), seed=1) == []

    def test_default_plan_covers_grid(self):
        types = [(p.hmi_type, p.trigger) for p in sim.DEFAULT_LAP_PLAN]
        assert types[0][0] is sim.HmiType.NONE
        assert len(set(types[1:])) == 4

    def test_determinism(self, small_cfg):
        cohort = sim.sample_cohort(small_cfg.cohort, seed=3)[:2]
        d1 = sim.generate_dataset(cohort, small_cfg.scenario, seed=9)
        d2 = sim.generate_dataset(cohort, small_cfg.scenario, seed=9)
        for a, b in zip(d1, d2):
            assert np.array_equal(a.speed, b.speed)
            assert np.array_equal(a.light_state, b.light_state)

    def test_empty_lap_plan_rejected(self, small_cfg):
        cohort = sim.sample_cohort(small_cfg.cohort, seed=3)[:2]
        with pytest.raises(ValueError):
            sim.generate_dataset(cohort, small_cfg.scenario, lap_plan=(), seed=1)


class TestSerialization:
    def test_cohort_roundtrip(self):
        cohort = sim.sample_cohort(CohortConfig(n_subjects=4), seed=2)
        text = sim.cohort_to_json(cohort)
        back = sim.cohort_from_json(text)
        assert back == cohort
        rec = json.loads(text)[0]
        assert set(rec) >= {
            "subject_id", "urgency", "fun_seeking", "go_rt_ms", "violations",
            "desired_speed_mps", "reaction_delay_s",
        }

    def test_trajectory_jsonl_roundtrip_and_fields(self, small_dataset):
        _, dataset = small_dataset
        subset = dataset[:3]
        text = sim.trajectories_to_jsonl(subset)
        rec = json.loads(text.splitlines()[0])
        assert list(rec) == [
            "subject_id", "lap_id", "hmi_type", "trigger", "t", "speed_mps",
            "dist_entry_m", "dist_exit_m", "light_state", "hmi_active", "accel_mps2",
        ]
        back = sim.trajectories_from_jsonl(text, sample_rate=subset[0].sample_rate)
        assert len(back) == 3
        for a, b in zip(subset, back):
            assert a.subject_id == b.subject_id
            assert a.hmi_condition == b.hmi_condition
            assert np.allclose(a.speed, b.speed)
            assert np.array_equal(a.light_state, b.light_state)

    def test_jsonl_record_order_is_irrelevant(self, small_dataset):
        _, dataset = small_dataset
        text = sim.trajectories_to_jsonl(dataset[:2])
        lines = text.strip().splitlines()
        rng = np.random.default_rng(0)
        shuffled = "\n".join(np.array(lines)[rng.permutation(len(lines))].tolist())
        a = sim.trajectories_from_jsonl(text)
        b = sim.trajectories_from_jsonl(shuffled)
        key = lambda t: (t.subject_id, t.lap_id)
        for ta, tb in zip(sorted(a, key=key), sorted(b, key=key)):
            assert np.allclose(ta.speed, tb.speed)
            assert np.allclose(ta.t, tb.t)
