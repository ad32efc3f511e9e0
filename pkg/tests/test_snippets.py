import numpy as np
import pytest

from conftest import make_trajectory
from oracles import enumerate_window_ends
from driverlatent import snippets as sn
from driverlatent.simulator import HmiConfig, HmiType, LightState


def lights_with_transition(n=600, k=100, yellow_run=20):
    ls = np.zeros(n, dtype=np.int8)
    ls[k : k + yellow_run] = int(LightState.YELLOW)
    return ls


class TestExtract:
    def test_no_transitions_empty(self):
        traj = make_trajectory(np.zeros(200, dtype=np.int8))
        assert sn.extract_snippets(traj, context_len=30, hop=1) == []

    def test_enumerated_window_positions(self):
        traj = make_trajectory(lights_with_transition())
        snips = sn.extract_snippets(traj, context_len=30, hop=1, span=30)
        assert len(snips) == 30
        assert [s.last_index for s in snips] == list(range(100, 130))
        expected = enumerate_window_ends(600, [100], 30, 1, 30)
        assert [s.last_index for s in snips] == expected

    def test_hop_equal_to_span_yields_one(self):
        traj = make_trajectory(lights_with_transition())
        snips = sn.extract_snippets(traj, context_len=30, hop=30, span=30)
        assert len(snips) == 1
        assert snips[0].last_index == 100

    def test_boundary_truncation_discarded(self):
        # transition too close to the start for a full window
        traj = make_trajectory(lights_with_transition(n=200, k=10))
        snips = sn.extract_snippets(traj, context_len=30, hop=1, span=30)
        assert [s.last_index for s in snips] == list(range(29, 40))
        # and too close to the end
        traj2 = make_trajectory(lights_with_transition(n=110, k=100, yellow_run=10))
        snips2 = sn.extract_snippets(traj2, context_len=30, hop=1, span=30)
        assert [s.last_index for s in snips2] == list(range(100, 110))

    def test_short_trajectory_empty(self):
        traj = make_trajectory(lights_with_transition(n=20, k=5, yellow_run=5))
        assert sn.extract_snippets(traj, context_len=30, hop=1) == []

    def test_window_contents_match_source(self):
        traj = make_trajectory(lights_with_transition(), speed=np.arange(600.0))
        s = sn.extract_snippets(traj, context_len=30, hop=30, span=30)[0]
        assert np.array_equal(s.speed, np.arange(71.0, 101.0))
        assert s.transition_index == 100
        assert len(s) == 30

    def test_matches_oracle_on_random_layouts(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = int(rng.integers(60, 300))
            k = int(rng.integers(1, n - 1))
            run = int(rng.integers(1, 30))
            ctx = int(rng.integers(2, 40))
            hop = int(rng.integers(1, 10))
            span = int(rng.integers(1, 40))
            ls = np.zeros(n, dtype=np.int8)
            ls[k : min(k + run, n)] = 1
            traj = make_trajectory(ls)
            got = [s.last_index for s in sn.extract_snippets(traj, ctx, hop, span)]
            assert got == enumerate_window_ends(n, [k], ctx, hop, span)


class TestExposureFilter:
    def make_snips(self, yellow_run):
        traj = make_trajectory(lights_with_transition(k=100, yellow_run=yellow_run))
        return sn.extract_snippets(traj, context_len=30, hop=30, span=30)

    def test_identity_at_zero(self):
        snips = self.make_snips(yellow_run=4)
        assert sn.filter_min_exposure(snips, 0.0) == snips

    def test_sub_second_exposure_dropped(self):
        # window ends at the transition: one yellow sample = 0.2 s
        snips = self.make_snips(yellow_run=10)
        assert snips[0].yellow_exposure == pytest.approx(0.2)
        assert sn.filter_min_exposure(snips, 1.0) == []

    def test_exact_second_retained(self):
        traj = make_trajectory(lights_with_transition(k=100, yellow_run=20))
        snips = sn.extract_snippets(traj, context_len=30, hop=1, span=30)
        by_exposure = {round(s.yellow_exposure, 1): s for s in snips}
        assert 0.8 in by_exposure and 1.0 in by_exposure
        kept = sn.filter_min_exposure(list(by_exposure.values()), 1.0)
        assert by_exposure[0.8] not in kept  # 4 yellow samples = 0.8 s
        assert by_exposure[1.0] in kept  # 5 samples = 1.0 s, boundary inclusive

    def test_exposure_counts_only_this_transitions_run(self):
        # a second, later yellow run inside the window must not count
        ls = np.zeros(300, dtype=np.int8)
        ls[100:103] = 1
        ls[110:120] = 1
        traj = make_trajectory(ls)
        s = [x for x in sn.extract_snippets(traj, 30, 1, span=30) if x.last_index == 115][0]
        assert s.transition_index == 100
        assert s.yellow_exposure == pytest.approx(3 / 5.0)

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            sn.filter_min_exposure([], -0.1)


class TestBatchNormalize:
    def test_two_point_column(self):
        out = sn.batch_normalize_factors(np.array([[1.0], [3.0]]))
        assert np.allclose(out, [[-1.0], [1.0]])

    def test_idempotent_on_zscores(self):
        rng = np.random.default_rng(0)
        y = rng.normal(size=(40, 4))
        z = sn.batch_normalize_factors(y)
        z2 = sn.batch_normalize_factors(z)
        assert np.max(np.abs(z2 - z)) < 1e-12

    def test_output_moments(self):
        rng = np.random.default_rng(1)
        z = sn.batch_normalize_factors(rng.normal(2.0, 5.0, size=(33, 4)))
        assert np.max(np.abs(z.mean(axis=0))) < 1e-10
        assert np.max(np.abs(z.std(axis=0) - 1.0)) < 1e-10

    def test_constant_column_error_names_column(self):
        y = np.ones((5, 2))
        y[:, 0] = np.arange(5)
        with pytest.raises(sn.NormalizationError, match="fun_seeking"):
            sn.batch_normalize_factors(y, names=("urgency", "fun_seeking"))


class TestYellowStats:
    def test_two_sample_stats(self):
        ls = np.array([0, 1, 1, 0], dtype=np.int8)
        traj = make_trajectory(ls, speed=np.array([5.0, 10.0, 20.0, 5.0]))
        stats = sn.yellow_speed_stats(traj)
        assert stats.mean_speed_yellow == 15.0
        assert stats.max_speed_yellow == 20.0
        assert stats.min_speed_yellow == 10.0

    def test_all_green_errors(self):
        traj = make_trajectory(np.zeros(10, dtype=np.int8))
        with pytest.raises(sn.EmptySupportError):
            sn.yellow_speed_stats(traj)

    def test_constant_speed(self):
        ls = np.array([0, 1, 1, 1], dtype=np.int8)
        traj = make_trajectory(ls, speed=np.full(4, 7.0))
        stats = sn.yellow_speed_stats(traj)
        assert stats.std_speed_yellow == 0.0
        assert stats.mean_speed_yellow == stats.max_speed_yellow == 7.0


class TestDecisionTargets:
    def lap(self, sid, lap_id, speed, hmi):
        ls = np.array([0, 1, 1, 0], dtype=np.int8)
        cond = HmiConfig(HmiType.TRANSVERSE_MARKINGS) if hmi else HmiConfig()
        return make_trajectory(ls, speed=np.full(4, speed), subject_id=sid, lap_id=lap_id, hmi=cond)

    def test_positive_delta_means_deploy(self):
        ds = [self.lap(0, 0, 17.0, hmi=False), self.lap(0, 1, 15.0, hmi=True)]
        (t,) = sn.decision_targets(ds)
        assert t.delta_speed == pytest.approx(2.0)
        assert t.deploy is True

    def test_tie_is_do_not_deploy(self):
        ds = [self.lap(0, 0, 15.0, hmi=False), self.lap(0, 1, 15.0, hmi=True)]
        (t,) = sn.decision_targets(ds)
        assert t.delta_speed == 0.0
        assert t.deploy is False

    def test_missing_condition_errors_with_subject(self):
        ds = [self.lap(3, 0, 15.0, hmi=True)]
        with pytest.raises(sn.CoverageError, match="subject 3"):
            sn.decision_targets(ds)


def test_corpus_jsonl_roundtrip(small_dataset):
    _, dataset = small_dataset
    snips = sn.extract_corpus(dataset[:4], context_len=30, hop=10)
    text = sn.corpus_to_jsonl(snips)
    back = sn.corpus_from_jsonl(text)
    assert len(back) == len(snips)
    for a, b in zip(snips, back):
        assert a.subject_id == b.subject_id
        assert a.transition_index == b.transition_index
        assert a.yellow_exposure == b.yellow_exposure
        assert np.allclose(a.speed, b.speed)
        assert np.allclose(a.actions, b.actions)


def test_corpus_manifest_hash_changes_with_source():
    m1 = sn.corpus_manifest(30, 1, 1.0, "source-a")
    m2 = sn.corpus_manifest(30, 1, 1.0, "source-b")
    assert m1["context_len"] == 30
    assert m1["source_dataset_sha256"] != m2["source_dataset_sha256"]
