"""Shrinkage arithmetic, fallback chain, and the group-isolation dichotomy."""

import numpy as np
import pytest

from banditlab.core import Group, ImpressionRecord, Outcomes, TaskKind
from banditlab.model import ALL_GROUPS_SLICE, LogSlice, fit, group_slice

PLAY = TaskKind.PLAY


def rec(user, topic, play, group=Group.TEST, day=0):
    return ImpressionRecord(
        day=day, user=user, topic=topic, group=group, phase=1,
        outcomes=Outcomes(play=play), score=0.0,
    )


def fit_small(records, data_slice=ALL_GROUPS_SLICE, lam=1.0, k=3, u=6, version=1):
    return fit(records, data_slice, lam, k_topics=k, n_users=u, version=version)


class TestFit:
    def test_empty_slice_cold_start(self):
        model = fit_small([])
        assert model.trained_on == "prior"
        for topic in range(3):
            for task in TaskKind:
                assert model.predict(0, topic, task) == pytest.approx(0.5)

    def test_topic_shrinkage_arithmetic(self):
        # one topic, lambda=1, play outcomes {1,1,0}: global = 2/3,
        # topic mean = (3*(2/3) + 1*(2/3)) / (3+1) = 2/3
        records = [rec(u, 0, play) for u, play in enumerate([True, True, False])]
        model = fit_small(records, lam=1.0, k=1)
        assert model.global_mean[0] == pytest.approx(2 / 3)
        assert model.topic_mean[0, 0] == pytest.approx(2 / 3)

    def test_unseen_topic_falls_back_to_global(self):
        records = [rec(0, 0, True), rec(1, 0, False)]
        model = fit_small(records, lam=2.0)
        # topic 2 has no data: its mean is exactly the global mean
        assert model.topic_mean[2, 0] == pytest.approx(model.global_mean[0])
        assert model.predict(5, 2, PLAY) == pytest.approx(model.global_mean[0])

    def test_slice_filter_never_touches_other_groups(self):
        test_recs = [rec(0, 0, True, Group.TEST)]
        control_recs = [rec(1, 0, False, Group.CONTROL)]
        model = fit_small(test_recs + control_recs,
                          data_slice=group_slice(Group.TEST))
        # only the test record is seen: global mean is exactly 1.0 for play
        assert model.global_mean[0] == pytest.approx(1.0)
        assert model.ut_n[1, 0] == 0

    def test_day_range_filter(self):
        records = [rec(0, 0, True, day=0), rec(0, 0, False, day=5)]
        model = fit_small(records, data_slice=LogSlice(
            groups=frozenset(Group), day_hi=5))
        assert model.ut_n[0, 0] == 1
        assert model.global_mean[0] == pytest.approx(1.0)

    def test_version_tracking(self):
        model = fit_small([rec(0, 0, True)], version=7)
        assert model.version == 7


class TestPredict:
    def test_no_history_returns_topic_mean(self):
        records = [rec(0, 1, True), rec(1, 1, True), rec(2, 1, False)]
        model = fit_small(records, lam=5.0)
        assert model.predict(5, 1, PLAY) == pytest.approx(model.topic_mean[1, 0])

    def test_shrinkage_hand_value(self):
        # n_ut=2 all successes, topic mean 0.2, lambda=2 -> (2*1 + 2*0.2)/4 = 0.6
        model = fit_small([rec(0, 0, True)], lam=2.0)
        model.topic_mean[0, 0] = 0.2
        model.ut_n[0, 0] = 2
        model.ut_sum[0, 0, 0] = 2.0
        assert model.predict(0, 0, PLAY) == pytest.approx(0.6)

    def test_prediction_monotone_to_one(self):
        # anchor the topic mean below 1 with another user's failures, then
        # grow this user's own all-success history
        anchor = [rec(1, 0, False) for _ in range(50)]
        prev = 0.0
        for n in (1, 5, 25, 125, 625, 3125):
            records = anchor + [rec(0, 0, True) for _ in range(n)]
            model = fit_small(records, lam=10.0, k=1, u=2)
            value = model.predict(0, 0, PLAY)
            assert value > prev
            prev = value
        assert prev > 0.98

    def test_convexity_between_user_and_topic_mean(self):
        rng = np.random.default_rng(11)
        records = []
        for user in range(5):
            for _ in range(int(rng.integers(1, 30))):
                records.append(rec(user, 0, bool(rng.random() < 0.3 + 0.1 * user)))
        model = fit_small(records, lam=7.0, k=1, u=5)
        for user in range(5):
            n_ut = model.ut_n[user, 0]
            raw = model.ut_sum[user, 0, 0] / n_ut
            tm = model.topic_mean[0, 0]
            lo, hi = min(raw, tm), max(raw, tm)
            assert lo - 1e-12 <= model.predict(user, 0, PLAY) <= hi + 1e-12

    def test_predictions_in_unit_interval(self):
        rng = np.random.default_rng(3)
        records = [rec(int(rng.integers(0, 6)), int(rng.integers(0, 3)),
                       bool(rng.random() < 0.5)) for _ in range(200)]
        model = fit_small(records, lam=0.5)
        for user in range(6):
            for topic in range(3):
                for task in TaskKind:
                    assert 0.0 <= model.predict(user, topic, task) <= 1.0

    def test_generalization_to_fresh_user(self):
        # a fresh user's prediction sits at the topic mean, closer to the
        # population's rate than the 0.5 cold-start prior
        records = [rec(u, 0, False) for u in range(5)]
        model = fit_small(records, lam=2.0, k=1)
        fresh = model.predict(5, 0, PLAY)
        population_rate = 0.0
        assert abs(fresh - population_rate) < abs(0.5 - population_rate)


class TestLeakageDichotomy:
    def _logs(self, flip_test: bool):
        control = [rec(u, 0, True, Group.CONTROL) for u in range(2)]
        test = [rec(2 + u, 0, not flip_test, Group.TEST) for u in range(2)]
        return control + test

    def test_shared_fit_couples_groups(self):
        shared_a = fit_small(self._logs(False), data_slice=ALL_GROUPS_SLICE, lam=2.0)
        shared_b = fit_small(self._logs(True), data_slice=ALL_GROUPS_SLICE, lam=2.0)
        control_user = 0
        assert shared_a.predict(control_user, 0, PLAY) != \
            shared_b.predict(control_user, 0, PLAY)

    def test_control_only_fit_is_isolated(self):
        iso_a = fit_small(self._logs(False), data_slice=group_slice(Group.CONTROL), lam=2.0)
        iso_b = fit_small(self._logs(True), data_slice=group_slice(Group.CONTROL), lam=2.0)
        for user in range(6):
            for topic in range(3):
                for task in TaskKind:
                    assert iso_a.predict(user, topic, task) == \
                        iso_b.predict(user, topic, task)


class TestVectorizedPredict:
    def test_matches_scalar_predict(self):
        rng = np.random.default_rng(9)
        records = []
        for _ in range(300):
            records.append(ImpressionRecord(
                day=int(rng.integers(0, 4)), user=int(rng.integers(0, 6)),
                topic=int(rng.integers(0, 3)),
                group=list(Group)[rng.integers(0, 3)], phase=1,
                outcomes=Outcomes(play=bool(rng.random() < 0.4),
                                  comment=bool(rng.random() < 0.1),
                                  share=bool(rng.random() < 0.1),
                                  like=bool(rng.random() < 0.2)),
                score=0.0))
        model = fit_small(records, lam=3.0)
        alpha = {TaskKind.PLAY: 1.0, TaskKind.COMMENT: 0.2,
                 TaskKind.SHARE: 0.2, TaskKind.LIKE: 0.4}
        est = model.predict_weighted(alpha)
        for user in range(6):
            for topic in range(3):
                scalar = sum(alpha[t] * model.predict(user, topic, t) for t in TaskKind)
                assert est[user, topic] == scalar
