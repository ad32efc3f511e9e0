import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_trajectory, small_run_config
from oracles import diag_gaussian_symmetric_kl_reference
from driverlatent import evaluate as ev
from driverlatent import simulator as sim
from driverlatent import snippets as sn
from driverlatent.simulator import HmiConfig, HmiType


class TestKappa:
    def test_perfect_agreement(self):
        assert ev.cohens_kappa([True, False, True], [True, False, True]) == pytest.approx(1.0)

    def test_all_true_vs_balanced_is_chance(self):
        pred = [True] * 10
        actual = [True] * 5 + [False] * 5
        assert ev.cohens_kappa(pred, actual) == pytest.approx(0.0)

    def test_hand_confusion_matrix(self):
        # TP=4 FP=1 FN=1 TN=4 -> p_o=0.8, p_e=0.5, kappa=0.6
        pred = [True] * 4 + [True] + [False] + [False] * 4
        actual = [True] * 4 + [False] + [True] + [False] * 4
        assert ev.cohens_kappa(pred, actual) == pytest.approx(0.6)

    def test_degenerate_marginals_return_zero(self):
        assert ev.cohens_kappa([True, True], [True, True]) == 0.0

    @given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=60))
    @settings(max_examples=200, deadline=None)
    def test_bounds(self, pairs):
        pred = [p for p, _ in pairs]
        actual = [a for _, a in pairs]
        k = ev.cohens_kappa(pred, actual)
        assert -1.0 - 1e-12 <= k <= 1.0 + 1e-12


class TestBalancedAccuracy:
    def test_perfect(self):
        assert ev.balanced_accuracy([True, False], [True, False]) == 1.0

    def test_always_true_is_half(self):
        assert ev.balanced_accuracy([True] * 6, [True, False] * 3) == 0.5

    def test_hand_rates(self):
        # TPR = 0.8 (4/5), TNR = 0.4 (2/5) -> 0.6
        actual = [True] * 5 + [False] * 5
        pred = [True] * 4 + [False] + [True] * 3 + [False] * 2
        assert ev.balanced_accuracy(pred, actual) == pytest.approx(0.6)

    def test_single_class_rejected(self):
        with pytest.raises(ev.UndefinedClassError):
            ev.balanced_accuracy([True, False], [True, True])

    @given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=2, max_size=60))
    @settings(max_examples=200, deadline=None)
    def test_bounds(self, pairs):
        actual = [a for _, a in pairs]
        if all(actual) or not any(actual):
            return
        pred = [p for p, _ in pairs]
        assert 0.0 <= ev.balanced_accuracy(pred, actual) <= 1.0


class TestNormalizedKl:
    def test_identical_groups_are_zero(self):
        rng = np.random.default_rng(0)
        base = rng.normal(size=(200, 2))
        latents = np.vstack([base, base])
        subjects = np.array([0] * 200 + [1] * 200 + [2] * 200 + [3] * 200)[:400]
        subjects = np.concatenate([np.repeat([0, 1], 100), np.repeat([2, 3], 100)])
        vals = {0: 0.0, 1: 0.1, 2: 5.0, 3: 5.1}
        assert ev.normalized_kl(latents, subjects, vals) == pytest.approx(0.0, abs=1e-9)

    @staticmethod
    def unit_separated_score(seed, n=500):
        rng = np.random.default_rng(seed)
        z_low = rng.normal(size=(n, 2))
        z_high = rng.normal(size=(n, 2)) + np.array([1.0, 0.0])
        latents = np.vstack([z_low, z_high])
        subjects = np.concatenate([np.repeat([0, 1], n // 2), np.repeat([2, 3], n // 2)])
        vals = {0: -1.0, 1: -0.5, 2: 0.5, 3: 1.0}
        return ev.normalized_kl(latents, subjects, vals)

    def test_unit_separated_gaussians_score_one(self):
        assert abs(self.unit_separated_score(seed=8) - 1.0) <= 0.15

    def test_unit_separated_score_is_calibrated(self):
        # the finite-sample estimator is unbiased to within a few percent
        scores = [self.unit_separated_score(seed) for seed in range(60)]
        assert abs(float(np.mean(scores)) - 1.0) <= 0.1

    def test_matches_reference_formula(self):
        rng = np.random.default_rng(2)
        za = rng.normal(size=(60, 2)) * 1.4
        zb = rng.normal(size=(80, 2)) + 2.0
        latents = np.vstack([za, zb])
        subjects = np.concatenate([np.repeat([0, 1], 30), np.repeat([2, 3], 40)])
        vals = {0: 0.0, 1: 0.2, 2: 3.0, 3: 3.3}
        got = ev.normalized_kl(latents, subjects, vals)
        assert got == pytest.approx(diag_gaussian_symmetric_kl_reference(za, zb), rel=1e-12)

    def test_insufficient_support(self):
        latents = np.zeros((4, 2))
        subjects = np.array([0, 0, 1, 2])
        with pytest.raises(ev.InsufficientSupportError):
            ev.normalized_kl(latents, subjects, {0: 0.0, 1: 1.0, 2: 2.0})


class TestRules:
    def test_fixed_rules(self):
        rules = ev.baseline_rules([1, 2, 3, 4, 5], seed=0)
        assert all(v is False for v in rules[ev.RULE_NO_HMI].values())
        assert all(v is True for v in rules[ev.RULE_ALWAYS_HMI].values())
        assert len(rules[ev.RULE_NO_HMI]) == 5

    def test_random_rule_deterministic(self):
        a = ev.baseline_rules(list(range(50)), seed=7)[ev.RULE_RANDOM]
        b = ev.baseline_rules(list(range(50)), seed=7)[ev.RULE_RANDOM]
        assert a == b
        c = ev.baseline_rules(list(range(50)), seed=8)[ev.RULE_RANDOM]
        assert a != c

    def test_random_rule_is_fair(self):
        n = 10_000
        decisions = ev.baseline_rules(list(range(n)), seed=1)[ev.RULE_RANDOM]
        frac = np.mean(list(decisions.values()))
        assert abs(frac - 0.5) <= 3 * 0.5 / math.sqrt(n)

    def test_random_rule_kappa_near_zero_at_scale(self):
        n = 10_000
        pred = ev.baseline_rules(list(range(n)), seed=2)[ev.RULE_RANDOM]
        rng = np.random.default_rng(3)
        actual = {s: bool(rng.random() < 0.5) for s in range(n)}
        k = ev.cohens_kappa([pred[s] for s in range(n)], [actual[s] for s in range(n)])
        assert abs(k) < 0.05


class TestPolicySpeed:
    def two_condition_dataset(self):
        ds = []
        for sid, (v_base, v_hmi) in enumerate([(17.0, 15.0), (12.0, 13.0), (16.0, 16.5)]):
            ls = np.array([0, 1, 1, 0], dtype=np.int8)
            ds.append(make_trajectory(ls, speed=np.full(4, v_base), subject_id=sid, lap_id=0))
            ds.append(
                make_trajectory(
                    ls, speed=np.full(4, v_hmi), subject_id=sid, lap_id=1,
                    hmi=HmiConfig(HmiType.YELLOW_CIRCLE),
                )
            )
        return ds

    def test_no_hmi_rule_equals_baseline_mean(self):
        ds = self.two_condition_dataset()
        mean, se = ev.policy_speed(ds, {0: False, 1: False, 2: False})
        assert mean == pytest.approx(np.mean([17.0, 12.0, 16.0]))

    def test_always_rule_equals_hmi_mean(self):
        ds = self.two_condition_dataset()
        mean, _ = ev.policy_speed(ds, {0: True, 1: True, 2: True})
        assert mean == pytest.approx(np.mean([15.0, 13.0, 16.5]))

    def test_mixed_decisions(self):
        ds = self.two_condition_dataset()
        mean, se = ev.policy_speed(ds, {0: True, 1: False, 2: True})
        vals = [15.0, 12.0, 16.5]
        assert mean == pytest.approx(np.mean(vals))
        assert se == pytest.approx(np.std(vals, ddof=1) / math.sqrt(3))

    def test_missing_subject_coverage_error(self):
        ds = self.two_condition_dataset()
        with pytest.raises(sn.CoverageError):
            ev.policy_speed(ds, {0: True, 99: False})


class TestCorrelations:
    def test_pearson_identity_and_independence(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=1000)
        assert ev.pearson_r(x, x) == pytest.approx(1.0)
        y = rng.normal(size=1000)
        assert abs(ev.pearson_r(x, y)) < 0.1
        assert math.isnan(ev.pearson_r(np.ones(10), y[:10]))

    def test_report_shape(self, small_dataset):
        cohort, dataset = small_dataset
        factors = {d.subject_id: d.factors for d in cohort}
        rep = ev.correlation_report(dataset, factors)
        assert len(rep) == 4 * 4
        assert ("fun_seeking", "mean_speed_yellow") in rep

    def test_requires_three_subjects(self, small_dataset):
        cohort, dataset = small_dataset
        factors = {0: cohort[0].factors}
        with pytest.raises(ValueError):
            ev.correlation_report(dataset, factors)


def fake_fold(sid, seed, win, inst, actual, speed_base, speed_hmi):
    return ev.FoldResult(
        held_out_subject=sid,
        seed=seed,
        normalized_kl={k: 1.0 for k in sim.FACTOR_NAMES},
        kappa=math.nan,
        balanced_accuracy=math.nan,
        policy_speeds={},
        decision_windowed=win,
        decision_instantaneous=inst,
        score_windowed=1.0 if win else -1.0,
        score_instantaneous=1.0 if inst else -1.0,
        actual_deploy=actual,
        delta_speed=1.0 if actual else -1.0,
        train_loss_trace=[1.0],
        held_latents_windowed=[[0.0, 0.0]],
    )


class TestAggregate:
    def build(self):
        ds = []
        payload = [(17.0, 15.0), (12.0, 13.0), (16.0, 16.5), (14.0, 12.0)]
        for sid, (vb, vh) in enumerate(payload):
            ls = np.array([0, 1, 1, 0], dtype=np.int8)
            ds.append(make_trajectory(ls, speed=np.full(4, vb), subject_id=sid, lap_id=0))
            ds.append(
                make_trajectory(ls, speed=np.full(4, vh), subject_id=sid, lap_id=1,
                                hmi=HmiConfig(HmiType.YELLOW_CIRCLE))
            )
        actual = {0: True, 1: False, 2: False, 3: True}
        folds = [
            fake_fold(sid, seed, win=actual[sid], inst=not actual[sid],
                      actual=actual[sid], speed_base=0, speed_hmi=0)
            for seed in (0, 1) for sid in range(4)
        ]
        cfg = small_run_config(n_subjects=4)
        cfg.eval.seeds = (0, 1)
        return ds, folds, cfg

    def test_rule_rows_complete_and_correct(self):
        ds, folds, cfg = self.build()
        rep = ev.aggregate_report(ds, folds, cfg)
        assert [r.rule for r in rep.rows] == list(ev.ALL_RULES)
        win = rep.row(ev.RULE_WINDOWED)
        assert win.kappa == pytest.approx(1.0)
        assert win.balanced_accuracy == pytest.approx(1.0)
        inst = rep.row(ev.RULE_INSTANT)
        assert inst.balanced_accuracy == pytest.approx(0.0)
        none_row = rep.row(ev.RULE_NO_HMI)
        assert none_row.kappa == 0.0 and none_row.balanced_accuracy == 0.5
        # perfect decisions pick the slower condition for every subject
        assert win.mean_speed == pytest.approx(np.mean([15.0, 12.0, 16.0, 12.0]))

    def test_fold_order_invariance(self):
        ds, folds, cfg = self.build()
        rep1 = ev.aggregate_report(ds, folds, cfg)
        rep2 = ev.aggregate_report(ds, list(reversed(folds)), cfg)
        for a, b in zip(rep1.rows, rep2.rows):
            assert a == b

    def test_json_and_csv_emission(self):
        ds, folds, cfg = self.build()
        rep = ev.aggregate_report(ds, folds, cfg)
        csv = ev.report_to_csv(rep.rows)
        assert csv.splitlines()[0] == "rule,mean_yellow_speed,standard_error,kappa,balanced_accuracy"
        assert len(csv.strip().splitlines()) == 6
        blob = ev.report_to_json(rep, folds)
        assert '"fold_count": 8' in blob

    def test_latent_scatter_csv(self):
        ds, folds, cfg = self.build()
        factors = {
            sid: sim.FactorVector(2.0, 3.0, 450.0, 2.0) for sid in range(4)
        }
        text = ev.latent_scatter_csv(folds, factors)
        lines = text.strip().splitlines()
        assert lines[0].startswith("subject_id,z0,z1")
        # only the first seed's folds are exported, one row per latent
        assert len(lines) == 1 + 4


class TestStreamingMachinery:
    def test_constant_input_smoothed_and_raw_agree_after_window(self, small_cfg):
        from driverlatent import encoder as enc

        hyper = small_cfg.hyper
        stats = enc.FeatureStats(mean=np.zeros(6), std=np.ones(6))
        model = enc.init_model(hyper, stats, 5.0, seed=1)
        X = np.tile(np.array([10.0, 100.0, 115.0, 0.0, 0.0, 0.0]), (80, 1))
        mu = enc.encode_streaming(model, X)
        smoothed = enc.moving_average(mu, 6.0, 5.0)
        # the recurrent state settles; late smoothed and raw values coincide
        assert np.allclose(mu[-1], smoothed[-1], atol=1e-3)
        drift_early = np.linalg.norm(mu[5] - mu[4])
        drift_late = np.linalg.norm(mu[-1] - mu[-2])
        assert drift_late < drift_early or drift_late < 1e-9
