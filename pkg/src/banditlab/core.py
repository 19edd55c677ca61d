"""Shared identifiers, the impression log record, configuration, and file I/O.

Topics and users are plain integer indices (0..K-1 and 0..U-1). The impression
log is one JSON object per line; metric tables are flat CSV so downstream
tooling can consume them without this package.
"""

from __future__ import annotations

import dataclasses
import json
import math
import sys
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class TaskKind(Enum):
    """The four engagement tasks the ranking model is fitted on."""

    PLAY = "play"
    COMMENT = "comment"
    SHARE = "share"
    LIKE = "like"


TASKS = tuple(TaskKind)


class Group(Enum):
    """Experiment population a user belongs to for the whole run."""

    PRODUCTION = "production"
    CONTROL = "control"
    TEST = "test"


GROUPS = tuple(Group)


class ConfigError(ValueError):
    """Raised when a config file is missing, malformed, or out of bounds."""


class LogFormatError(ValueError):
    """Raised when an impression log line cannot be parsed or validated."""


_FLAG_FIELDS = ("play", "loop", "skip", "comment", "share", "like", "completed")


@dataclass(frozen=True, slots=True)
class Outcomes:
    """Realized per-impression feedback flags.

    Invariants: loop and completed imply play; skip implies not completed.
    """

    play: bool = False
    loop: bool = False
    skip: bool = False
    comment: bool = False
    share: bool = False
    like: bool = False
    completed: bool = False

    def __post_init__(self) -> None:
        if self.loop and not self.play:
            raise ValueError("outcome invariant violated: loop requires play")
        if self.completed and not self.play:
            raise ValueError("outcome invariant violated: completed requires play")
        if self.skip and self.completed:
            raise ValueError("outcome invariant violated: skip excludes completed")

    def task_flag(self, task: TaskKind) -> bool:
        return getattr(self, task.value)


@dataclass(frozen=True, slots=True)
class ImpressionRecord:
    """One recommendation event: who, which topic, which group, which day.

    ``score`` is the selection-time policy score of the chosen topic; it is
    +inf for a forced first trial of an untried topic.
    """

    day: int
    user: int
    topic: int
    group: Group
    phase: int
    outcomes: Outcomes
    score: float

    def __post_init__(self) -> None:
        if self.day < 0:
            raise ValueError("day must be >= 0")
        if self.user < 0:
            raise ValueError("user must be >= 0")
        if self.topic < 0:
            raise ValueError("topic must be >= 0")
        if self.phase not in (1, 2):
            raise ValueError("phase must be 1 or 2")


def encode_impression(rec: ImpressionRecord) -> str:
    """Serialize a record to one log line (JSON object, fixed key order).

    All six flags plus ``completed`` are always written explicitly, so lines
    are diffable field by field. +inf scores serialize as ``Infinity``.
    """
    obj = {
        "day": rec.day,
        "user": rec.user,
        "topic": rec.topic,
        "group": rec.group.value,
        "phase": rec.phase,
        "outcomes": {f: getattr(rec.outcomes, f) for f in _FLAG_FIELDS},
        "score": rec.score,
    }
    return json.dumps(obj, separators=(",", ":"))


def decode_impression(line: str, k_topics: int | None = None) -> ImpressionRecord:
    """Parse one log line back into a record.

    Raises LogFormatError naming the offending field on any malformed input.
    When ``k_topics`` is given, topic indices are bound-checked against it.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise LogFormatError(f"unparseable log line: {exc}") from exc
    if not isinstance(obj, dict):
        raise LogFormatError("log line is not a JSON object")

    def field(container, name, kind):
        if name not in container:
            raise LogFormatError(f"missing field: {name}")
        value = container[name]
        if kind is float:
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise LogFormatError(f"field {name} must be a number")
            return float(value)
        if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
            raise LogFormatError(f"field {name} has wrong type")
        return value

    day = field(obj, "day", int)
    user = field(obj, "user", int)
    topic = field(obj, "topic", int)
    if k_topics is not None and topic >= k_topics:
        raise LogFormatError(f"field topic out of range: {topic} >= {k_topics}")
    group_name = field(obj, "group", str)
    try:
        group = Group(group_name)
    except ValueError:
        raise LogFormatError(f"field group has unknown value: {group_name!r}") from None
    phase = field(obj, "phase", int)
    raw_outcomes = field(obj, "outcomes", dict)
    flags = {f: field(raw_outcomes, f, bool) for f in _FLAG_FIELDS}
    score = field(obj, "score", float)
    try:
        return ImpressionRecord(
            day=day,
            user=user,
            topic=topic,
            group=group,
            phase=phase,
            outcomes=Outcomes(**flags),
            score=score,
        )
    except ValueError as exc:
        raise LogFormatError(str(exc)) from exc


DEFAULT_ALPHA = {
    TaskKind.PLAY: 1.0,
    TaskKind.COMMENT: 0.2,
    TaskKind.SHARE: 0.2,
    TaskKind.LIKE: 0.4,
}


@dataclass(frozen=True, slots=True)
class ExperimentConfig:
    """Full experiment definition; every run is a pure function of (config, seed).

    Defaults reproduce the documented desk-scale setup: 30 topics, two phases
    of 21 and 14 days with daily retraining, and a 0.8/0.1/0.1 split into
    production/control/test.
    """

    k_topics: int = 30
    n_users: int = 10000
    group_fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    slots_per_active_day: int = 10
    phase1_days: int = 21
    phase2_days: int = 14
    gamma: float = 2.0
    alpha: dict[TaskKind, float] = dataclasses.field(
        default_factory=lambda: dict(DEFAULT_ALPHA)
    )
    prior_strength: float = 2.0
    mc_samples: int = 200
    imputation_epsilon: float = 1e-4
    availability_fraction: float = 0.5
    retrain_every_days: int = 1
    seed: int = 1
    # estimator and environment shape knobs (documented simulator choices)
    shrinkage_lambda: float = 25.0
    novelty_lift: float = 0.0
    hot_topics_mean: float = 3.0
    activity_median: float = 0.35
    activity_sigma: float = 0.9

    def __post_init__(self) -> None:
        def bad(field_name: str, why: str):
            return ConfigError(f"invalid config field {field_name}: {why}")

        if self.k_topics < 1:
            raise bad("k_topics", "must be >= 1")
        if self.n_users < 1:
            raise bad("n_users", "must be >= 1")
        fr = self.group_fractions
        if len(fr) != 3 or any(f < 0 for f in fr):
            raise bad("group_fractions", "must be 3 nonnegative reals")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise bad("group_fractions", f"must sum to 1, got {sum(fr)}")
        if abs(fr[1] - fr[2]) > 1e-9:
            raise bad("group_fractions", "control and test fractions must be equal")
        if self.slots_per_active_day < 1:
            raise bad("slots_per_active_day", "must be >= 1")
        if self.phase1_days < 0 or self.phase2_days < 0:
            raise bad("phase1_days/phase2_days", "must be >= 0")
        if self.phase1_days + self.phase2_days < 1:
            raise bad("phase1_days/phase2_days", "experiment must last >= 1 day")
        if self.gamma < 0:
            raise bad("gamma", "must be >= 0")
        if set(self.alpha) != set(TASKS):
            raise bad("alpha", "must give a weight for each of play/comment/share/like")
        if any(v < 0 for v in self.alpha.values()):
            raise bad("alpha", "weights must be >= 0")
        if all(v == 0 for v in self.alpha.values()):
            raise bad("alpha", "at least one task weight must be > 0")
        if self.prior_strength < 0:
            raise bad("prior_strength", "must be >= 0")
        if self.mc_samples < 1:
            raise bad("mc_samples", "must be >= 1")
        if self.imputation_epsilon <= 0:
            raise bad("imputation_epsilon", "must be > 0")
        if not (0 < self.availability_fraction <= 1):
            raise bad("availability_fraction", "must be in (0, 1]")
        if self.retrain_every_days < 1:
            raise bad("retrain_every_days", "must be >= 1")
        if not (0 <= self.seed < 2**64):
            raise bad("seed", "must fit in 64 bits")
        if self.shrinkage_lambda <= 0:
            raise bad("shrinkage_lambda", "must be > 0")
        if self.novelty_lift < 0:
            raise bad("novelty_lift", "must be >= 0")
        if self.hot_topics_mean < 1:
            raise bad("hot_topics_mean", "must be >= 1")
        if self.activity_median <= 0 or self.activity_median > 1:
            raise bad("activity_median", "must be in (0, 1]")
        if self.activity_sigma < 0:
            raise bad("activity_sigma", "must be >= 0")

    @property
    def total_days(self) -> int:
        return self.phase1_days + self.phase2_days

    def phase_of(self, day: int) -> int:
        return 1 if day < self.phase1_days else 2

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["alpha"] = {task.value: w for task, w in self.alpha.items()}
        d["group_fractions"] = list(self.group_fractions)
        return d


_CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a config from a plain key/value mapping, applying defaults."""
    kwargs = {}
    for key, value in data.items():
        if key not in _CONFIG_FIELDS:
            raise ConfigError(f"unknown config field: {key}")
        if key == "alpha":
            if not isinstance(value, dict):
                raise ConfigError("invalid config field alpha: must be a table")
            try:
                kwargs["alpha"] = {TaskKind(t): float(w) for t, w in value.items()}
            except ValueError:
                raise ConfigError(
                    f"invalid config field alpha: unknown task in {sorted(value)}"
                ) from None
        elif key == "group_fractions":
            if not isinstance(value, (list, tuple)) or len(value) != 3:
                raise ConfigError(
                    "invalid config field group_fractions: need 3 values"
                )
            kwargs["group_fractions"] = tuple(float(v) for v in value)
        elif key in ("gamma", "prior_strength", "imputation_epsilon",
                     "availability_fraction", "shrinkage_lambda", "novelty_lift",
                     "hot_topics_mean", "activity_median", "activity_sigma"):
            kwargs[key] = float(value)
        else:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"invalid config field {key}: must be an integer")
            kwargs[key] = value
    return ExperimentConfig(**kwargs)


def load_config(path: str | Path) -> ExperimentConfig:
    """Load a TOML config file; unspecified fields take the documented defaults."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        with open(p, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {p}: {exc}") from exc
    return config_from_dict(data)


# ---------------------------------------------------------------------------
# Columnar log storage. The simulator works on whole runs at once, so the log
# lives in numpy columns; ImpressionRecord objects are the per-record view.

GROUP_CODE = {g: i for i, g in enumerate(GROUPS)}


class RecordBatch:
    """The impression log as parallel numpy columns.

    ``flags`` columns follow the Outcomes field order:
    play, loop, skip, comment, share, like, completed.
    """

    __slots__ = ("day", "user", "topic", "group", "phase", "flags", "score")

    def __init__(self, day, user, topic, group, phase, flags, score):
        self.day = np.asarray(day, dtype=np.int32)
        self.user = np.asarray(user, dtype=np.int32)
        self.topic = np.asarray(topic, dtype=np.int32)
        self.group = np.asarray(group, dtype=np.int8)
        self.phase = np.asarray(phase, dtype=np.int8)
        self.flags = np.asarray(flags, dtype=np.uint8).reshape(-1, len(_FLAG_FIELDS))
        self.score = np.asarray(score, dtype=np.float64)
        n = len(self.day)
        if not all(len(a) == n for a in
                   (self.user, self.topic, self.group, self.phase, self.flags, self.score)):
            raise ValueError("record columns must have equal length")

    def __len__(self) -> int:
        return len(self.day)

    @classmethod
    def empty(cls) -> "RecordBatch":
        z = np.zeros(0)
        return cls(z, z, z, z, z, np.zeros((0, len(_FLAG_FIELDS))), z)

    @classmethod
    def concat(cls, batches: "Iterable[RecordBatch]") -> "RecordBatch":
        batches = list(batches)
        if not batches:
            return cls.empty()
        return cls(
            np.concatenate([b.day for b in batches]),
            np.concatenate([b.user for b in batches]),
            np.concatenate([b.topic for b in batches]),
            np.concatenate([b.group for b in batches]),
            np.concatenate([b.phase for b in batches]),
            np.concatenate([b.flags for b in batches]),
            np.concatenate([b.score for b in batches]),
        )

    @classmethod
    def from_records(cls, records: "Iterable[ImpressionRecord]") -> "RecordBatch":
        records = list(records)
        return cls(
            [r.day for r in records],
            [r.user for r in records],
            [r.topic for r in records],
            [GROUP_CODE[r.group] for r in records],
            [r.phase for r in records],
            [[getattr(r.outcomes, f) for f in _FLAG_FIELDS] for r in records],
            [r.score for r in records],
        )

    def record(self, i: int) -> ImpressionRecord:
        flags = {f: bool(self.flags[i, j]) for j, f in enumerate(_FLAG_FIELDS)}
        return ImpressionRecord(
            day=int(self.day[i]),
            user=int(self.user[i]),
            topic=int(self.topic[i]),
            group=GROUPS[self.group[i]],
            phase=int(self.phase[i]),
            outcomes=Outcomes(**flags),
            score=float(self.score[i]),
        )

    def to_records(self) -> Iterator[ImpressionRecord]:
        for i in range(len(self)):
            yield self.record(i)

    def sorted_by_day_user(self) -> "RecordBatch":
        # stable, so slot order within a (day, user) pair survives
        order = np.lexsort((self.user, self.day))
        return RecordBatch(self.day[order], self.user[order], self.topic[order],
                           self.group[order], self.phase[order],
                           self.flags[order], self.score[order])

    def iter_lines(self) -> Iterator[str]:
        """Fast path emitting exactly what encode_impression would."""
        group_names = [g.value for g in GROUPS]
        tf = ("false", "true")
        for i in range(len(self)):
            f = self.flags[i]
            s = self.score[i]
            score = "Infinity" if math.isinf(s) else repr(float(s))
            yield (
                f'{{"day":{self.day[i]},"user":{self.user[i]},'
                f'"topic":{self.topic[i]},"group":"{group_names[self.group[i]]}",'
                f'"phase":{self.phase[i]},"outcomes":{{"play":{tf[f[0]]},'
                f'"loop":{tf[f[1]]},"skip":{tf[f[2]]},"comment":{tf[f[3]]},'
                f'"share":{tf[f[4]]},"like":{tf[f[5]]},"completed":{tf[f[6]]}}},'
                f'"score":{score}}}'
            )

    def write_jsonl(self, path: "str | Path") -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line in self.iter_lines():
                fh.write(line + "\n")

    @classmethod
    def read_jsonl(cls, path: "str | Path", k_topics: "int | None" = None) -> "RecordBatch":
        return cls.from_records(read_impressions(path, k_topics=k_topics))


# ---------------------------------------------------------------------------
# File output. Reals are printed with 9 significant digits.


def fmt_real(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.9g}"


METRICS_HEADER = "day,group,phase,metric,value"
EFFECTS_HEADER = "day,phase,metric,value"
BUCKETS_HEADER = "bucket,metric,value,users"


def write_metrics_csv(path: str | Path, rows: Iterable[tuple]) -> None:
    """rows: (day, group, phase, metric_name, value)"""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(METRICS_HEADER + "\n")
        for day, group, phase, metric, value in rows:
            fh.write(f"{day},{group.value},{phase},{metric},{fmt_real(value)}\n")


def write_effects_csv(path: str | Path, rows: Iterable[tuple]) -> None:
    """rows: (day, phase, metric_name, value)"""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(EFFECTS_HEADER + "\n")
        for day, phase, metric, value in rows:
            fh.write(f"{day},{phase},{metric},{fmt_real(value)}\n")


def write_buckets_csv(path: str | Path, rows: Iterable[tuple]) -> None:
    """rows: (bucket, metric_name, value, users)"""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(BUCKETS_HEADER + "\n")
        for bucket, metric, value, users in rows:
            fh.write(f"{bucket},{metric},{fmt_real(value)},{users}\n")


def write_impressions(path: str | Path, records: Iterable[ImpressionRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(encode_impression(rec) + "\n")


def read_impressions(
    path: str | Path, k_topics: int | None = None
) -> Iterator[ImpressionRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield decode_impression(line, k_topics=k_topics)
            except LogFormatError as exc:
                raise LogFormatError(f"{path}:{lineno}: {exc}") from None
