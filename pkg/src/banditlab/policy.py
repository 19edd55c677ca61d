"""Topic selection policies: UCB scoring and the greedy (exploit-only) ranker.

The score of a topic is the task-weighted reward estimate plus an exploration
bonus gamma * sqrt(ln(N_total) / N_topic), where N_total counts all
impressions served to the user and N_topic those of the candidate topic.
An untried topic gets an infinite bonus (forced first trial) whenever
gamma > 0; ln(N_total) is clamped at 0 for N_total <= 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .core import TASKS, TaskKind


@dataclass(frozen=True, slots=True)
class ScoreParams:
    """Exploration aggressiveness and per-task importance weights."""

    gamma: float
    alpha: Mapping[TaskKind, float]

    def __post_init__(self) -> None:
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if not any(self.alpha.get(t, 0.0) > 0 for t in TASKS):
            raise ValueError("at least one task weight must be > 0")


@dataclass
class CountStore:
    """Per-user interaction counters backing the exploration bonus.

    Invariant: total[u] == sum of per_topic[(u, a)] over topics a.
    """

    total: dict[int, int] = field(default_factory=dict)
    per_topic: dict[tuple[int, int], int] = field(default_factory=dict)

    def n_total(self, user: int) -> int:
        return self.total.get(user, 0)

    def n_topic(self, user: int, topic: int) -> int:
        return self.per_topic.get((user, topic), 0)


def ucb_score(estimates: Mapping[TaskKind, float],
              n_total: int, n_topic: int, params: ScoreParams) -> float:
    """Score one candidate topic; returns +inf for an untried topic when
    exploration is on."""
    if n_topic < 0 or n_total < 0:
        raise ValueError("counts must be >= 0")
    if n_topic > n_total:
        raise ValueError("per-topic count cannot exceed the total count")
    base = sum(params.alpha.get(t, 0.0) * estimates.get(t, 0.0) for t in TASKS)
    if params.gamma == 0.0:
        return base
    if n_topic == 0:
        return math.inf
    ln_n = math.log(n_total) if n_total >= 2 else 0.0
    return base + params.gamma * math.sqrt(ln_n / n_topic)


def _pick(user: int, candidates: Iterable[int], model, counts: CountStore,
          params: ScoreParams) -> int:
    cand = sorted(set(candidates))
    if not cand:
        raise ValueError("candidate set must be non-empty")
    n_total = counts.n_total(user)
    best = None
    for topic in cand:
        estimates = {t: model.predict(user, topic, t) for t in TASKS}
        n_topic = counts.n_topic(user, topic)
        score = ucb_score(estimates, n_total, n_topic, params)
        key = (score, -n_topic)
        if best is None or key > best[0]:
            best = (key, topic)
    return best[1]


def select_action(user: int, candidates: Iterable[int], model,
                  counts: CountStore, params: ScoreParams) -> int:
    """Argmax of the UCB score over candidates.

    Ties break to the lower per-topic count, then the lower topic id, so
    selection is reproducible across runs and platforms.
    """
    return _pick(user, candidates, model, counts, params)


def greedy_select(user: int, candidates: Iterable[int], model,
                  params: ScoreParams) -> int:
    """Exploit-only ranking: select_action with the bonus forced off."""
    greedy = ScoreParams(gamma=0.0, alpha=params.alpha)
    return _pick(user, candidates, model, CountStore(), greedy)


def record_selection(counts: CountStore, user: int, topic: int) -> CountStore:
    """Count one served impression; preserves total == sum(per_topic)."""
    counts.total[user] = counts.total.get(user, 0) + 1
    counts.per_topic[(user, topic)] = counts.per_topic.get((user, topic), 0) + 1
    return counts
