"""Record encoding, outcome invariants, config loading, and batch storage."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from banditlab.core import (
    GROUPS,
    ConfigError,
    ExperimentConfig,
    Group,
    ImpressionRecord,
    LogFormatError,
    Outcomes,
    RecordBatch,
    TaskKind,
    config_from_dict,
    decode_impression,
    encode_impression,
    load_config,
)


def make_record(**kw):
    defaults = dict(
        day=3, user=17, topic=5, group=Group.TEST, phase=1,
        outcomes=Outcomes(play=True, loop=True, completed=True), score=1.25,
    )
    defaults.update(kw)
    return ImpressionRecord(**defaults)


class TestOutcomes:
    def test_loop_requires_play(self):
        with pytest.raises(ValueError, match="loop"):
            Outcomes(loop=True)

    def test_completed_requires_play(self):
        with pytest.raises(ValueError, match="completed"):
            Outcomes(completed=True)

    def test_skip_excludes_completed(self):
        with pytest.raises(ValueError, match="skip"):
            Outcomes(play=True, skip=True, completed=True)

    def test_valid_combinations(self):
        Outcomes(play=True, loop=True, completed=True)
        Outcomes(play=True, skip=True)
        Outcomes()


class TestRoundTrip:
    def test_identity(self):
        rec = make_record()
        assert decode_impression(encode_impression(rec)) == rec

    def test_all_false_flags_explicit(self):
        line = encode_impression(make_record(outcomes=Outcomes()))
        for flag in ("play", "loop", "skip", "comment", "share", "like", "completed"):
            assert f'"{flag}":false' in line

    def test_infinite_score(self):
        rec = make_record(score=math.inf)
        line = encode_impression(rec)
        assert decode_impression(line) == rec

    def test_truncated_line_fails(self):
        line = encode_impression(make_record())
        with pytest.raises(LogFormatError):
            decode_impression(line[: len(line) // 2])

    def test_topic_bound_check(self):
        line = encode_impression(make_record(topic=40))
        with pytest.raises(LogFormatError, match="topic"):
            decode_impression(line, k_topics=30)

    def test_missing_field_named(self):
        with pytest.raises(LogFormatError, match="user"):
            decode_impression('{"day":1}')

    def test_bad_group_named(self):
        line = encode_impression(make_record()).replace('"test"', '"banana"')
        with pytest.raises(LogFormatError, match="group"):
            decode_impression(line)

    @given(
        day=st.integers(0, 1000),
        user=st.integers(0, 10**6),
        topic=st.integers(0, 500),
        group=st.sampled_from(list(Group)),
        phase=st.sampled_from([1, 2]),
        play=st.booleans(), loop=st.booleans(), skip=st.booleans(),
        comment=st.booleans(), share=st.booleans(), like=st.booleans(),
        completed=st.booleans(),
        score=st.floats(allow_nan=False, width=64),
    )
    @settings(max_examples=300, deadline=None)
    def test_fuzz_round_trip(self, day, user, topic, group, phase, play, loop,
                             skip, comment, share, like, completed, score):
        loop &= play
        completed &= play
        skip &= not completed
        rec = ImpressionRecord(
            day=day, user=user, topic=topic, group=group, phase=phase,
            outcomes=Outcomes(play=play, loop=loop, skip=skip, comment=comment,
                              share=share, like=like, completed=completed),
            score=score,
        )
        assert decode_impression(encode_impression(rec)) == rec

    def test_many_records_distinct_lines(self):
        rng = np.random.default_rng(0)
        lines = set()
        for i in range(1000):
            rec = make_record(day=int(rng.integers(0, 50)), user=i,
                              topic=int(rng.integers(0, 30)),
                              score=float(rng.normal()))
            lines.add(encode_impression(rec))
        assert len(lines) == 1000


class TestConfig:
    def test_empty_file_defaults(self, tmp_path):
        path = tmp_path / "empty.toml"
        path.write_text("")
        cfg = load_config(path)
        assert cfg.k_topics == 30
        assert cfg.gamma == 2.0
        assert cfg.phase1_days == 21
        assert cfg.phase2_days == 14
        assert cfg.group_fractions == (0.8, 0.1, 0.1)
        assert cfg.slots_per_active_day == 10
        assert cfg.shrinkage_lambda == 25.0
        assert cfg.prior_strength == 2.0

    def test_paper_phase_lengths_accepted(self):
        cfg = ExperimentConfig(phase1_days=21, phase2_days=14)
        assert cfg.total_days == 35

    def test_fractions_must_sum_to_one(self):
        with pytest.raises(ConfigError, match="group_fractions"):
            ExperimentConfig(group_fractions=(0.7, 0.1, 0.1))

    def test_control_test_must_match(self):
        with pytest.raises(ConfigError, match="group_fractions"):
            ExperimentConfig(group_fractions=(0.8, 0.05, 0.15))

    def test_negative_gamma_named(self):
        with pytest.raises(ConfigError, match="gamma"):
            ExperimentConfig(gamma=-1.0)

    def test_epsilon_positive(self):
        with pytest.raises(ConfigError, match="imputation_epsilon"):
            ExperimentConfig(imputation_epsilon=0.0)

    def test_availability_range(self):
        with pytest.raises(ConfigError, match="availability_fraction"):
            ExperimentConfig(availability_fraction=0.0)
        with pytest.raises(ConfigError, match="availability_fraction"):
            ExperimentConfig(availability_fraction=1.5)

    def test_unknown_field(self):
        with pytest.raises(ConfigError, match="unknown"):
            config_from_dict({"bananas": 3})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.toml")

    def test_toml_parsing(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text(
            "k_topics = 8\ngamma = 0.5\ngroup_fractions = [0.5, 0.25, 0.25]\n"
            "[alpha]\nplay = 1.0\ncomment = 0.0\nshare = 0.0\nlike = 0.5\n"
        )
        cfg = load_config(path)
        assert cfg.k_topics == 8
        assert cfg.gamma == 0.5
        assert cfg.alpha[TaskKind.LIKE] == 0.5
        assert cfg.alpha[TaskKind.COMMENT] == 0.0

    def test_alpha_all_zero_rejected(self):
        with pytest.raises(ConfigError, match="alpha"):
            ExperimentConfig(alpha={t: 0.0 for t in TaskKind})


class TestRecordBatch:
    def _batch(self, n=50, seed=1):
        rng = np.random.default_rng(seed)
        records = []
        for i in range(n):
            play = bool(rng.random() < 0.5)
            records.append(ImpressionRecord(
                day=int(rng.integers(0, 5)), user=int(rng.integers(0, 9)),
                topic=int(rng.integers(0, 7)), group=GROUPS[rng.integers(0, 3)],
                phase=1, outcomes=Outcomes(play=play, loop=play and bool(rng.random() < 0.5)),
                score=float(rng.normal()),
            ))
        return records

    def test_from_to_records(self):
        records = self._batch()
        batch = RecordBatch.from_records(records)
        assert list(batch.to_records()) == records

    def test_iter_lines_matches_encode(self):
        records = self._batch()
        records.append(make_record(score=math.inf))
        batch = RecordBatch.from_records(records)
        for line, rec in zip(batch.iter_lines(), records):
            assert line == encode_impression(rec)

    def test_jsonl_round_trip(self, tmp_path):
        records = self._batch()
        batch = RecordBatch.from_records(records)
        path = tmp_path / "log.jsonl"
        batch.write_jsonl(path)
        again = RecordBatch.read_jsonl(path)
        assert list(again.to_records()) == records

    def test_sort_is_stable_within_user_day(self):
        records = [make_record(day=1, user=2, topic=t, score=float(t)) for t in range(5)]
        records = [make_record(day=2, user=0, topic=9)] + records
        batch = RecordBatch.from_records(records).sorted_by_day_user()
        topics = batch.topic[(batch.day == 1) & (batch.user == 2)]
        assert list(topics) == [0, 1, 2, 3, 4]
