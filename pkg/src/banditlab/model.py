"""Reward estimation: a two-level shrinkage table over the impression log.

Per task, a user-topic prediction is the user's own empirical mean shrunk
toward the topic mean, which is itself shrunk toward the global mean:

    predict(u, a, t) = (sum_ut + lambda * topic_mean) / (n_ut + lambda)
    topic_mean       = (sum_a  + lambda * global)     / (n_a  + lambda)

Because the topic level pools data across users, anything one group of users
does to the training slice moves predictions for every other user; fitting on
a single group's slice isolates it completely. That cross-user coupling is
the property the two-phase test protocol is built around.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .core import GROUPS, TASKS, Group, ImpressionRecord, RecordBatch, TaskKind

# column of each fitted task inside RecordBatch.flags
TASK_FLAG_COL = {
    TaskKind.PLAY: 0,
    TaskKind.COMMENT: 3,
    TaskKind.SHARE: 4,
    TaskKind.LIKE: 5,
}

COLD_START_MEAN = 0.5


@dataclass(frozen=True, slots=True)
class LogSlice:
    """Which part of the log a model may be trained on."""

    groups: frozenset[Group]
    day_lo: int = 0
    day_hi: int | None = None  # exclusive; None = unbounded

    def describe(self) -> str:
        names = "+".join(g.value for g in GROUPS if g in self.groups)
        hi = "end" if self.day_hi is None else str(self.day_hi)
        return f"groups={names} days=[{self.day_lo},{hi})"

    def mask(self, batch: RecordBatch) -> np.ndarray:
        codes = [i for i, g in enumerate(GROUPS) if g in self.groups]
        m = np.isin(batch.group, codes)
        m &= batch.day >= self.day_lo
        if self.day_hi is not None:
            m &= batch.day < self.day_hi
        return m


ALL_GROUPS_SLICE = LogSlice(groups=frozenset(GROUPS))


def group_slice(group: Group, day_hi: int | None = None) -> LogSlice:
    return LogSlice(groups=frozenset({group}), day_hi=day_hi)


@dataclass(frozen=True)
class RewardModel:
    """Immutable fitted estimator; predictions always land in [0, 1]."""

    k_topics: int
    n_users: int
    shrinkage_lambda: float
    global_mean: np.ndarray  # (T,)
    topic_mean: np.ndarray   # (K, T)
    ut_sum: np.ndarray       # (U, K, T) per-user-topic success sums
    ut_n: np.ndarray         # (U, K) per-user-topic record counts
    trained_on: str
    version: int

    def predict(self, user: int, topic: int, task: TaskKind) -> float:
        """Shrinkage prediction for one (user, topic, task)."""
        t = TASKS.index(task)
        lam = self.shrinkage_lambda
        tm = self.topic_mean[topic, t]
        return (self.ut_sum[user, topic, t] + lam * tm) / (self.ut_n[user, topic] + lam)

    def predict_weighted(self, alpha: Mapping[TaskKind, float]) -> np.ndarray:
        """Task-weighted prediction matrix of shape (U, K).

        Accumulates tasks in canonical order so the result is bit-identical
        to summing scalar predict() calls.
        """
        lam = self.shrinkage_lambda
        denom = self.ut_n + lam  # (U, K)
        est = np.zeros((self.n_users, self.k_topics), dtype=np.float64)
        for t_idx, task in enumerate(TASKS):
            w = alpha.get(task, 0.0)
            per_task = (self.ut_sum[:, :, t_idx] + lam * self.topic_mean[None, :, t_idx]) / denom
            est += w * per_task
        return est


def fit(records: RecordBatch | Iterable[ImpressionRecord], data_slice: LogSlice,
        shrinkage_lambda: float, k_topics: int, n_users: int,
        version: int = 1) -> RewardModel:
    """Fit the shrinkage table on the selected slice of the log.

    An empty slice yields the documented cold-start prior: 0.5 for every
    task everywhere, tagged "prior".
    """
    if shrinkage_lambda <= 0:
        raise ValueError("shrinkage_lambda must be > 0")
    batch = records if isinstance(records, RecordBatch) else RecordBatch.from_records(records)
    if batch.topic.size and int(batch.topic.max()) >= k_topics:
        raise ValueError("record topic index out of range for k_topics")
    if batch.user.size and int(batch.user.max()) >= n_users:
        raise ValueError("record user index out of range for n_users")
    mask = data_slice.mask(batch)
    n = int(mask.sum())
    n_tasks = len(TASKS)
    if n == 0:
        return RewardModel(
            k_topics=k_topics,
            n_users=n_users,
            shrinkage_lambda=shrinkage_lambda,
            global_mean=np.full(n_tasks, COLD_START_MEAN),
            topic_mean=np.full((k_topics, n_tasks), COLD_START_MEAN),
            ut_sum=np.zeros((n_users, k_topics, n_tasks)),
            ut_n=np.zeros((n_users, k_topics), dtype=np.int64),
            trained_on="prior",
            version=version,
        )

    topics = batch.topic[mask].astype(np.int64)
    users = batch.user[mask].astype(np.int64)
    task_flags = np.stack(
        [batch.flags[mask, TASK_FLAG_COL[t]].astype(np.float64) for t in TASKS],
        axis=1,
    )  # (n, T)

    global_mean = task_flags.mean(axis=0)
    n_a = np.bincount(topics, minlength=k_topics).astype(np.float64)
    lam = shrinkage_lambda
    topic_mean = np.empty((k_topics, n_tasks))
    for t_idx in range(n_tasks):
        sum_a = np.bincount(topics, weights=task_flags[:, t_idx], minlength=k_topics)
        topic_mean[:, t_idx] = (sum_a + lam * global_mean[t_idx]) / (n_a + lam)

    flat = users * k_topics + topics
    ut_n = np.bincount(flat, minlength=n_users * k_topics).astype(np.int64)
    ut_sum = np.empty((n_users * k_topics, n_tasks))
    for t_idx in range(n_tasks):
        ut_sum[:, t_idx] = np.bincount(flat, weights=task_flags[:, t_idx],
                                       minlength=n_users * k_topics)
    return RewardModel(
        k_topics=k_topics,
        n_users=n_users,
        shrinkage_lambda=shrinkage_lambda,
        global_mean=global_mean,
        topic_mean=topic_mean,
        ut_sum=ut_sum.reshape(n_users, k_topics, n_tasks),
        ut_n=ut_n.reshape(n_users, k_topics),
        trained_on=data_slice.describe(),
        version=version,
    )


def dump_csv(model: RewardModel, path: str | Path) -> None:
    """Debug dump of the fitted tables: level,key,task,mean,n."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("level,key,task,mean,n\n")
        for t_idx, task in enumerate(TASKS):
            fh.write(f"global,,{task.value},{model.global_mean[t_idx]:.9g},\n")
        for k in range(model.k_topics):
            for t_idx, task in enumerate(TASKS):
                fh.write(f"topic,{k},{task.value},{model.topic_mean[k, t_idx]:.9g},\n")
        users, topics = np.nonzero(model.ut_n)
        for u, k in zip(users.tolist(), topics.tolist()):
            n_ut = int(model.ut_n[u, k])
            for t_idx, task in enumerate(TASKS):
                mean = model.ut_sum[u, k, t_idx] / n_ut
                fh.write(f"user_topic,{u}:{k},{task.value},{mean:.9g},{n_ut}\n")
