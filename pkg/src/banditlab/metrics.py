"""Exploration-efficiency metrics.

For each user and day, two distributions over topics are compared:

* ``P`` — belief: the probability each topic is the user's most relevant one,
  estimated by sampling per-topic beta posteriors of completion probability
  (built from history strictly before the day, never-seen topics included)
  and counting argmax winners;
* ``Q`` — behavior: the empirical distribution of topics served that day.

From these, exploration inefficiency is KL(P || Q) with zero-Q topics imputed
and Q renormalized, topic diversity is the number of distinct topics served,
interest uncertainty is the entropy of P, and topic excellence is the dot
product of P and Q. All logarithms are natural (values in nats).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from ._rng import STREAM_METRICS, bit_generator
from .core import (
    GROUPS,
    ExperimentConfig,
    Group,
    ImpressionRecord,
    RecordBatch,
)

# flags columns: play, loop, skip, comment, share, like, completed
_PLAY, _LOOP, _SKIP, _COMPLETED = 0, 1, 2, 6

GROUP_METRIC_ORDER = ("plays", "impressions", "loop_rate", "skip_rate",
                      "ei", "td", "iu", "te")
BUCKET_METRIC_ORDER = ("ei", "td", "iu", "te")


@dataclass(frozen=True, slots=True)
class BetaPosterior:
    """Beta(a, b) belief over one <user, topic> completion probability."""

    a: float
    b: float

    def __post_init__(self) -> None:
        if not (self.a > 0 and self.b > 0 and math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError("beta parameters must be finite and positive")


@dataclass(frozen=True)
class TopicDistribution:
    """Normalized weights over the topic index space."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-d array")
        if (w < 0).any():
            raise ValueError("weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights)


@dataclass(frozen=True, slots=True)
class MetricsRow:
    """Per-user-per-day metric values plus the user's play tally."""

    user: int
    day: int
    group: Group
    ei: float
    td: int
    iu: float
    te: float
    plays: int


def _as_weights(dist) -> np.ndarray:
    if isinstance(dist, TopicDistribution):
        return dist.weights
    return np.asarray(dist, dtype=np.float64)


# ---------------------------------------------------------------------------
# record-level reference operations


def _to_batch(records) -> RecordBatch:
    if isinstance(records, RecordBatch):
        return records
    return RecordBatch.from_records(records)


def build_posteriors(history, user: int, prior_strength: float,
                     k_topics: int) -> list[BetaPosterior]:
    """Beta posteriors over completion probability for every topic of a user.

    The prior blends the topic's completion rate across users with the user's
    own rate: a = 1 + s*m + completions, b = 1 + s*(1-m) + failures, where
    m is the half/half blend and either component defaults to 0.5 when there
    is no history to estimate it from.
    """
    if prior_strength < 0:
        raise ValueError("prior_strength must be >= 0")
    batch = _to_batch(history)
    completed = batch.flags[:, _COMPLETED].astype(np.float64)

    topic_impr = np.bincount(batch.topic, minlength=k_topics).astype(np.float64)
    topic_compl = np.bincount(batch.topic, weights=completed, minlength=k_topics)
    user_mask = batch.user == user
    user_impr = float(user_mask.sum())
    user_compl = float(completed[user_mask].sum())

    user_rate = user_compl / user_impr if user_impr > 0 else 0.5
    ut_impr = np.bincount(batch.topic[user_mask], minlength=k_topics)
    ut_compl = np.bincount(batch.topic[user_mask],
                           weights=completed[user_mask], minlength=k_topics)

    out = []
    s = prior_strength
    for topic in range(k_topics):
        topic_rate = topic_compl[topic] / topic_impr[topic] if topic_impr[topic] > 0 else 0.5
        m = 0.5 * (topic_rate + user_rate)
        a = 1.0 + s * m + float(ut_compl[topic])
        b = 1.0 + s * (1.0 - m) + float(ut_impr[topic] - ut_compl[topic])
        out.append(BetaPosterior(a, b))
    return out


def estimate_P(posteriors: Sequence[BetaPosterior], mc_samples: int,
               rng: np.random.Generator) -> TopicDistribution:
    """Monte Carlo argmax distribution over the posteriors (ties to the
    lowest topic index)."""
    if mc_samples < 1:
        raise ValueError("mc_samples must be >= 1")
    if not posteriors:
        raise ValueError("need at least one posterior")
    a = np.array([p.a for p in posteriors], dtype=np.float64)
    b = np.array([p.b for p in posteriors], dtype=np.float64)
    counts = kernels.beta_argmax_counts(rng.bit_generator, a, b, mc_samples)
    return TopicDistribution(counts / float(mc_samples))


def observed_Q(today_records, user: int, k_topics: int) -> TopicDistribution | None:
    """Empirical served-topic distribution for the user today; None when the
    user had no impressions (the user is then skipped for the day)."""
    batch = _to_batch(today_records)
    topics = batch.topic[batch.user == user]
    if topics.size == 0:
        return None
    counts = np.bincount(topics, minlength=k_topics)
    return TopicDistribution(counts / counts.sum())


def exploration_inefficiency(p, q, epsilon: float) -> float:
    """KL(P || Q) in nats after imputing epsilon into zero-Q topics that P
    cares about and renormalizing Q."""
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    pw = _as_weights(p)
    qw = _as_weights(q).copy()
    if pw.shape != qw.shape:
        raise ValueError("P and Q must cover the same topic index space")
    qw[(pw > 0) & (qw == 0)] = epsilon
    qw /= qw.sum()
    mask = pw > 0
    return float(np.sum(pw[mask] * np.log(pw[mask] / qw[mask])))


def topic_diversity(q) -> int:
    """Number of topics with positive served weight."""
    return int(np.count_nonzero(_as_weights(q) > 0))


def interest_uncertainty(p) -> float:
    """Shannon entropy of P in nats, with 0*ln(0) = 0."""
    pw = _as_weights(p)
    mask = pw > 0
    return float(-np.sum(pw[mask] * np.log(pw[mask])))


def topic_excellence(p, q) -> float:
    """Probability that a served recommendation lands on the most relevant
    topic: the dot product of P and Q."""
    pw = _as_weights(p)
    qw = _as_weights(q)
    if pw.shape != qw.shape:
        raise ValueError("P and Q must cover the same topic index space")
    return float(np.sum(pw * qw))


def aggregate(rows: Iterable[MetricsRow], group: Group, day: int) -> dict | None:
    """Group/day means: ei, td, iu unweighted; te weighted by plays.

    Returns None when no row matches; omits 'te' when the group played
    nothing that day.
    """
    sel = [r for r in rows if r.group == group and r.day == day]
    if not sel:
        return None
    out = {
        "ei": sum(r.ei for r in sel) / len(sel),
        "td": sum(r.td for r in sel) / len(sel),
        "iu": sum(r.iu for r in sel) / len(sel),
    }
    total_plays = sum(r.plays for r in sel)
    if total_plays > 0:
        out["te"] = sum(r.te * r.plays for r in sel) / total_plays
    return out


def engagement_rates(records, group: Group, day: int) -> tuple[float | None, float | None]:
    """(loop_rate, skip_rate) for the group/day; a rate is None when its
    denominator is zero."""
    batch = _to_batch(records)
    code = GROUPS.index(group)
    mask = (batch.group == code) & (batch.day == day)
    impressions = int(mask.sum())
    plays = int(batch.flags[mask, _PLAY].sum())
    loops = int(batch.flags[mask, _LOOP].sum())
    skips = int(batch.flags[mask, _SKIP].sum())
    loop_rate = loops / plays if plays > 0 else None
    skip_rate = skips / impressions if impressions > 0 else None
    return loop_rate, skip_rate


# ---------------------------------------------------------------------------
# activity bucketing


@dataclass(frozen=True)
class BucketTable:
    """Per-bucket means of the four metrics plus the user-count histogram."""

    n_buckets: int
    log_edges: np.ndarray   # (n_buckets + 1,) edges in ln(total plays)
    means: dict             # metric name -> (n_buckets,) array (nan = empty)
    users: np.ndarray       # (n_buckets,) int

    def rows(self):
        for b in range(self.n_buckets):
            for name in BUCKET_METRIC_ORDER:
                yield (b, name, float(self.means[name][b]), int(self.users[b]))


def bucket_by_activity(rows, n_buckets: int = 10) -> BucketTable:
    """Bin users by total plays on a log scale; average per-user metric means
    within each bucket.

    Users with zero total plays have no position on a log axis and are
    excluded. ``rows`` is an iterable of MetricsRow or a UserDayMetrics.
    """
    if n_buckets < 2:
        raise ValueError("n_buckets must be >= 2")
    if isinstance(rows, UserDayMetrics):
        user = rows.user
        vals = {"ei": rows.ei, "td": rows.td.astype(np.float64),
                "iu": rows.iu, "te": rows.te}
        plays = rows.plays
    else:
        rows = list(rows)
        user = np.array([r.user for r in rows], dtype=np.int64)
        vals = {
            "ei": np.array([r.ei for r in rows], dtype=np.float64),
            "td": np.array([float(r.td) for r in rows]),
            "iu": np.array([r.iu for r in rows], dtype=np.float64),
            "te": np.array([r.te for r in rows], dtype=np.float64),
        }
        plays = np.array([r.plays for r in rows], dtype=np.int64)

    uniq, local = np.unique(user, return_inverse=True)
    n_rows_per_user = np.bincount(local)
    total_plays = np.bincount(local, weights=plays.astype(np.float64))
    user_means = {
        name: np.bincount(local, weights=v.astype(np.float64)) / n_rows_per_user
        for name, v in vals.items()
    }

    keep = total_plays > 0
    log_plays = np.log(total_plays[keep])
    means = {name: np.full(n_buckets, np.nan) for name in BUCKET_METRIC_ORDER}
    users_hist = np.zeros(n_buckets, dtype=np.int64)
    if log_plays.size == 0:
        edges = np.linspace(0.0, 1.0, n_buckets + 1)
        return BucketTable(n_buckets, edges, means, users_hist)

    lo, hi = float(log_plays.min()), float(log_plays.max())
    edges = np.linspace(lo, hi, n_buckets + 1)
    if hi == lo:
        idx = np.zeros(log_plays.size, dtype=np.int64)
    else:
        idx = np.clip(((log_plays - lo) / (hi - lo) * n_buckets).astype(np.int64),
                      0, n_buckets - 1)
    users_hist = np.bincount(idx, minlength=n_buckets)
    for name in BUCKET_METRIC_ORDER:
        sums = np.bincount(idx, weights=user_means[name][keep], minlength=n_buckets)
        with np.errstate(invalid="ignore"):
            means[name] = np.where(users_hist > 0, sums / users_hist, np.nan)
    return BucketTable(n_buckets, edges, means, users_hist)


# ---------------------------------------------------------------------------
# vectorized whole-run pipeline (same semantics as the reference operations)


@dataclass
class UserDayMetrics:
    """Columnar per-user-per-day metric rows for a whole run."""

    user: np.ndarray
    day: np.ndarray
    group: np.ndarray  # group codes
    ei: np.ndarray
    td: np.ndarray
    iu: np.ndarray
    te: np.ndarray
    plays: np.ndarray

    def __len__(self) -> int:
        return len(self.user)

    def select(self, mask) -> "UserDayMetrics":
        return UserDayMetrics(*(getattr(self, f)[mask] for f in
                                ("user", "day", "group", "ei", "td", "iu", "te", "plays")))

    def to_rows(self) -> Iterable[MetricsRow]:
        for i in range(len(self)):
            yield MetricsRow(
                user=int(self.user[i]), day=int(self.day[i]),
                group=GROUPS[self.group[i]], ei=float(self.ei[i]),
                td=int(self.td[i]), iu=float(self.iu[i]),
                te=float(self.te[i]), plays=int(self.plays[i]),
            )


def _p_matrix(seed: int, day: int, active_users: np.ndarray,
              a: np.ndarray, b: np.ndarray, mc_samples: int,
              workers: int) -> np.ndarray:
    """Monte Carlo argmax counts for a day's active users, worker-chunked.

    Every user-day has its own keyed stream, so the result is independent of
    the chunking.
    """
    n, k = a.shape
    counts = np.zeros((n, k), dtype=np.int64)
    bitgens = [bit_generator(seed, STREAM_METRICS, int(u), day) for u in active_users]
    if workers <= 1 or n < 2:
        kernels.beta_argmax_batch(bitgens, a, b, mc_samples, counts)
    else:
        bounds = np.linspace(0, n, workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = []
            for w in range(workers):
                lo, hi = bounds[w], bounds[w + 1]
                if lo == hi:
                    continue
                futures.append(pool.submit(
                    kernels.beta_argmax_batch, bitgens[lo:hi],
                    np.ascontiguousarray(a[lo:hi]), np.ascontiguousarray(b[lo:hi]),
                    mc_samples, counts[lo:hi]))
            for f in futures:
                f.result()
    return counts / float(mc_samples)


def compute_run_metrics(batch: RecordBatch, cfg: ExperimentConfig,
                        workers: int = 1) -> tuple[UserDayMetrics, list]:
    """Walk the log day by day and produce per-user rows plus group series.

    Returns (user_rows, group_rows) where group_rows is a list of
    (day, Group, phase, metric_name, value) in canonical order. A pure
    function of (log, config): recomputation is bit-identical.

    Posterior priors are blended within each user's own group (a group's
    metrics never read another group's history), matching build_posteriors
    called on the group-sliced log.
    """
    u_count, k = cfg.n_users, cfg.k_topics
    if len(batch) and int(batch.topic.max()) >= k:
        raise ValueError(f"log contains topic index >= k_topics ({k})")
    if len(batch) and int(batch.user.max()) >= u_count:
        raise ValueError(f"log contains user index >= n_users ({u_count})")
    batch = batch.sorted_by_day_user()
    eps = cfg.imputation_epsilon
    s = cfg.prior_strength

    cum_impr_ut = np.zeros((u_count, k), dtype=np.int64)
    cum_compl_ut = np.zeros((u_count, k), dtype=np.int64)
    cum_topic_impr = np.zeros((len(GROUPS), k), dtype=np.int64)
    cum_topic_compl = np.zeros((len(GROUPS), k), dtype=np.int64)
    cum_user_impr = np.zeros(u_count, dtype=np.int64)
    cum_user_compl = np.zeros(u_count, dtype=np.int64)

    out_cols: dict[str, list] = {f: [] for f in
                                 ("user", "day", "group", "ei", "td", "iu", "te", "plays")}
    group_rows: list = []

    days = np.unique(batch.day)
    starts = np.searchsorted(batch.day, days, side="left")
    stops = np.searchsorted(batch.day, days, side="right")
    for day, lo, hi in zip(days.tolist(), starts.tolist(), stops.tolist()):
        users_d = batch.user[lo:hi].astype(np.int64)
        topics_d = batch.topic[lo:hi].astype(np.int64)
        groups_d = batch.group[lo:hi].astype(np.int64)
        flags_d = batch.flags[lo:hi]
        phase = int(batch.phase[lo])

        active, local = np.unique(users_d, return_inverse=True)
        n = active.size
        q_counts = np.bincount(local * k + topics_d, minlength=n * k).reshape(n, k)
        compl_flag = flags_d[:, _COMPLETED].astype(np.float64)
        play_flag = flags_d[:, _PLAY].astype(np.float64)
        compl_counts = np.bincount(local * k + topics_d, weights=compl_flag,
                                   minlength=n * k).reshape(n, k)
        plays_u = np.bincount(local, weights=play_flag, minlength=n)
        n_today = q_counts.sum(axis=1)
        group_of_active = groups_d[np.searchsorted(users_d, active)]

        # posterior parameters from history strictly before this day
        with np.errstate(invalid="ignore"):
            topic_rate = np.where(cum_topic_impr > 0,
                                  cum_topic_compl / np.maximum(cum_topic_impr, 1), 0.5)
            user_rate = np.where(cum_user_impr[active] > 0,
                                 cum_user_compl[active] / np.maximum(cum_user_impr[active], 1), 0.5)
        m = 0.5 * (topic_rate[group_of_active] + user_rate[:, None])
        a_par = 1.0 + s * m + cum_compl_ut[active]
        b_par = 1.0 + s * (1.0 - m) + (cum_impr_ut[active] - cum_compl_ut[active])

        p_mat = _p_matrix(cfg.seed, day, active, a_par, b_par, cfg.mc_samples, workers)
        q_mat = q_counts / n_today[:, None]

        p_pos = p_mat > 0
        q_imp = q_mat + eps * (p_pos & (q_mat == 0))
        q_imp /= q_imp.sum(axis=1, keepdims=True)
        log_ratio = np.zeros_like(p_mat)
        log_ratio[p_pos] = np.log(p_mat[p_pos] / q_imp[p_pos])
        ei = (p_mat * log_ratio).sum(axis=1)
        plogp = np.zeros_like(p_mat)
        plogp[p_pos] = p_mat[p_pos] * np.log(p_mat[p_pos])
        iu = -plogp.sum(axis=1)
        td = (q_counts > 0).sum(axis=1)
        te = (p_mat * q_mat).sum(axis=1)

        out_cols["user"].append(active.astype(np.int32))
        out_cols["day"].append(np.full(n, day, dtype=np.int32))
        out_cols["group"].append(group_of_active.astype(np.int8))
        out_cols["ei"].append(ei)
        out_cols["td"].append(td.astype(np.int32))
        out_cols["iu"].append(iu)
        out_cols["te"].append(te)
        out_cols["plays"].append(plays_u.astype(np.int32))

        impressions_g = np.bincount(groups_d, minlength=len(GROUPS))
        plays_g = np.bincount(groups_d, weights=play_flag, minlength=len(GROUPS))
        loops_g = np.bincount(groups_d, weights=flags_d[:, _LOOP].astype(np.float64),
                              minlength=len(GROUPS))
        skips_g = np.bincount(groups_d, weights=flags_d[:, _SKIP].astype(np.float64),
                              minlength=len(GROUPS))
        for g_idx, group in enumerate(GROUPS):
            sel = group_of_active == g_idx
            if not sel.any():
                continue
            plays_total = float(plays_g[g_idx])
            impressions = float(impressions_g[g_idx])
            values = {
                "plays": plays_total,
                "impressions": impressions,
                "ei": float(ei[sel].mean()),
                "td": float(td[sel].astype(np.float64).mean()),
                "iu": float(iu[sel].mean()),
            }
            if plays_total > 0:
                values["loop_rate"] = float(loops_g[g_idx]) / plays_total
                values["te"] = float((te[sel] * plays_u[sel]).sum() / plays_u[sel].sum())
            values["skip_rate"] = float(skips_g[g_idx]) / impressions
            for name in GROUP_METRIC_ORDER:
                if name in values:
                    group_rows.append((day, group, phase, name, values[name]))

        # fold today into the cumulative history
        cum_impr_ut[active] += q_counts
        cum_compl_ut[active] += compl_counts.astype(np.int64)
        for g_idx in range(len(GROUPS)):
            g_mask = groups_d == g_idx
            if g_mask.any():
                cum_topic_impr[g_idx] += np.bincount(topics_d[g_mask], minlength=k)
                cum_topic_compl[g_idx] += np.bincount(
                    topics_d[g_mask], weights=compl_flag[g_mask], minlength=k
                ).astype(np.int64)
        cum_user_impr[active] += n_today
        cum_user_compl[active] += np.bincount(local, weights=compl_flag,
                                              minlength=n).astype(np.int64)

    if out_cols["user"]:
        user_rows = UserDayMetrics(*(np.concatenate(out_cols[f]) for f in
                                     ("user", "day", "group", "ei", "td", "iu", "te", "plays")))
    else:
        user_rows = UserDayMetrics(*(np.zeros(0, dtype=np.int32) for _ in range(3)),
                                   np.zeros(0), np.zeros(0, dtype=np.int32),
                                   np.zeros(0), np.zeros(0), np.zeros(0, dtype=np.int32))
    return user_rows, group_rows
