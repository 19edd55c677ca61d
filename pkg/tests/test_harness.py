"""Group assignment, the two-phase protocol, effects, and run bookkeeping."""

import numpy as np
import pytest

from banditlab.core import ExperimentConfig, Group, RecordBatch
from banditlab.harness import (
    PhasePlan,
    assign_groups,
    build_effect_series,
    compute_effect,
    new_state,
    refit_models,
    run_day,
    run_experiment,
)
from banditlab.model import fit, group_slice


def cfg_small(**kw):
    defaults = dict(n_users=240, k_topics=8, phase1_days=4, phase2_days=3,
                    mc_samples=40, seed=5, activity_median=0.6)
    defaults.update(kw)
    return ExperimentConfig(**defaults)


class TestAssignGroups:
    def test_exact_sizes(self):
        got = assign_groups(10_000, (0.8, 0.1, 0.1), seed=3)
        sizes = got.sizes()
        assert sizes[Group.PRODUCTION] == 8000
        assert sizes[Group.CONTROL] == 1000
        assert sizes[Group.TEST] == 1000

    def test_deterministic(self):
        a = assign_groups(500, (0.5, 0.25, 0.25), seed=9)
        b = assign_groups(500, (0.5, 0.25, 0.25), seed=9)
        assert np.array_equal(a.codes, b.codes)

    def test_unequal_control_test_rejected(self):
        with pytest.raises(ValueError, match="equal"):
            assign_groups(100, (0.8, 0.05, 0.15), seed=0)

    def test_partition_exhaustive_and_disjoint(self):
        got = assign_groups(777, (0.6, 0.2, 0.2), seed=1)
        union = np.concatenate([got.users_of(g) for g in Group])
        assert sorted(union.tolist()) == list(range(777))


class TestPhasePlan:
    def test_phase_boundaries(self):
        plan = PhasePlan(21, 14)
        assert plan.phase_of(0) == 1
        assert plan.phase_of(20) == 1
        assert plan.phase_of(21) == 2
        assert plan.phase_of(34) == 2

    def test_phase1_slices_shared(self):
        plan = PhasePlan(5, 5)
        slices = plan.model_slices(3)
        assert len({id(s) for s in slices.values()}) == 1
        assert slices[Group.TEST].groups == frozenset(Group)

    def test_phase2_slices_isolated(self):
        plan = PhasePlan(5, 5)
        slices = plan.model_slices(7)
        for group in Group:
            assert slices[group].groups == frozenset({group})
        assert slices[Group.TEST].day_hi == 7


class TestComputeEffect:
    def test_basic_delta(self):
        got = compute_effect({0: 101.0}, {0: 100.0})
        assert got[0] == pytest.approx(0.01)

    def test_equal_series_zero(self):
        series = {d: 5.0 + d for d in range(4)}
        got = compute_effect(series, dict(series))
        assert all(v == pytest.approx(0.0) for v in got.values())

    def test_zero_control_absent(self):
        got = compute_effect({0: 1.0, 1: 2.0}, {0: 0.0, 1: 4.0})
        assert 0 not in got
        assert got[1] == pytest.approx(-0.5)


class TestRunDay:
    def test_single_user_single_slot(self):
        cfg = cfg_small(n_users=1, slots_per_active_day=1, group_fractions=(1.0, 0.0, 0.0))
        state = new_state(cfg)
        total = 0
        for day in range(30):
            batch = run_day(state, day)
            assert len(batch) in (0, 1)
            total += len(batch)
        assert total == state.totals[0]

    def test_record_count_identity(self):
        cfg = cfg_small()
        result = run_experiment(cfg)
        slots = cfg.slots_per_active_day
        assert len(result.records) % slots == 0
        # every record's day/user pair accounts for exactly `slots` records
        pairs = set(zip(result.records.day.tolist(), result.records.user.tolist()))
        assert len(result.records) == slots * len(pairs)
        assert result.records.user.max() < cfg.n_users

    def test_counts_match_log(self):
        cfg = cfg_small()
        state = new_state(cfg)
        for day in range(cfg.total_days):
            if day > 0:
                refit_models(state, day)
            run_day(state, day)
        records = state.records
        for user in range(0, cfg.n_users, 17):
            assert state.totals[user] == (records.user == user).sum()

    def test_conservation_across_groups(self):
        result = run_experiment(cfg_small())
        by_group = [(result.records.group == i).sum() for i in range(3)]
        assert sum(by_group) == len(result.records)

    def test_phase_column_matches_day(self):
        cfg = cfg_small()
        result = run_experiment(cfg)
        d = result.records.day
        p = result.records.phase
        assert (p[d < cfg.phase1_days] == 1).all()
        assert (p[d >= cfg.phase1_days] == 2).all()


class TestTwoPhaseProtocol:
    def test_phase2_isolation(self):
        # refitting control's phase-2 model after deleting all test records
        # changes nothing
        cfg = cfg_small()
        result = run_experiment(cfg)
        records = result.records
        keep = records.group != 2  # drop test group
        pruned = RecordBatch(records.day[keep], records.user[keep],
                             records.topic[keep], records.group[keep],
                             records.phase[keep], records.flags[keep],
                             records.score[keep])
        full_fit = fit(records, group_slice(Group.CONTROL, day_hi=cfg.total_days),
                       cfg.shrinkage_lambda, cfg.k_topics, cfg.n_users)
        pruned_fit = fit(pruned, group_slice(Group.CONTROL, day_hi=cfg.total_days),
                         cfg.shrinkage_lambda, cfg.k_topics, cfg.n_users)
        assert np.array_equal(full_fit.topic_mean, pruned_fit.topic_mean)
        assert np.array_equal(full_fit.ut_sum, pruned_fit.ut_sum)

    def test_phase1_coupling(self):
        # perturbing test records moves the shared model's control predictions
        cfg = cfg_small()
        result = run_experiment(cfg)
        records = result.records
        flipped_flags = records.flags.copy()
        test_rows = records.group == 2
        flipped_flags[test_rows, 0] ^= 1  # flip play outcomes in test group
        flipped = RecordBatch(records.day, records.user, records.topic,
                              records.group, records.phase, flipped_flags,
                              records.score)
        from banditlab.model import ALL_GROUPS_SLICE

        shared_a = fit(records, ALL_GROUPS_SLICE, cfg.shrinkage_lambda,
                       cfg.k_topics, cfg.n_users)
        shared_b = fit(flipped, ALL_GROUPS_SLICE, cfg.shrinkage_lambda,
                       cfg.k_topics, cfg.n_users)
        control_user = int(result.assignment.users_of(Group.CONTROL)[0])
        from banditlab.core import TaskKind

        before = [shared_a.predict(control_user, t, TaskKind.PLAY) for t in range(cfg.k_topics)]
        after = [shared_b.predict(control_user, t, TaskKind.PLAY) for t in range(cfg.k_topics)]
        assert before != after

    def test_phase2_models_trained_per_group(self):
        cfg = cfg_small()
        state = new_state(cfg)
        for day in range(cfg.phase1_days + 1):
            if day > 0:
                refit_models(state, day)
            run_day(state, day)
        trained = {g: state.models[g].trained_on for g in Group}
        assert "production+control+test" not in trained[Group.TEST]
        assert "groups=test" in trained[Group.TEST]
        assert "groups=control" in trained[Group.CONTROL]

    def test_phase2_zero_days_pure_phase1(self):
        cfg = cfg_small(phase2_days=0)
        result = run_experiment(cfg)
        assert (result.records.phase == 1).all()

    def test_phase1_zero_days_pure_phase2(self):
        cfg = cfg_small(phase1_days=0, phase2_days=3)
        result = run_experiment(cfg)
        assert (result.records.phase == 2).all()


class TestDeterminismAndEffects:
    def test_identical_runs_byte_identical(self):
        cfg = cfg_small()
        a = run_experiment(cfg)
        b = run_experiment(cfg)
        assert list(a.records.iter_lines()) == list(b.records.iter_lines())
        assert a.group_rows == b.group_rows
        assert a.effect_rows == b.effect_rows

    def test_workers_do_not_change_output(self):
        cfg = cfg_small()
        a = run_experiment(cfg, workers=1)
        b = run_experiment(cfg, workers=2)
        assert list(a.records.iter_lines()) == list(b.records.iter_lines())
        assert a.group_rows == b.group_rows

    def test_aa_run_groups_statistically_close(self):
        # gamma = 0 in both groups: effects are pure membership noise
        effects = []
        for seed in range(6):
            cfg = cfg_small(gamma=0.0, seed=100 + seed)
            result = run_experiment(cfg)
            series = result.effects.metrics.get("plays", {})
            if series:
                effects.append(np.mean(list(series.values())))
        assert len(effects) >= 4
        assert abs(np.mean(effects)) < 0.25

    def test_effect_series_construction(self):
        group_rows = [
            (0, Group.TEST, 1, "plays", 110.0),
            (0, Group.CONTROL, 1, "plays", 100.0),
            (1, Group.TEST, 1, "plays", 90.0),
            (1, Group.CONTROL, 1, "plays", 0.0),
        ]
        series = build_effect_series(group_rows)
        assert series.metrics["plays"] == {0: pytest.approx(0.1)}
