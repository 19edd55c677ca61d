"""Experiment orchestration: group assignment, the daily impression loop,
daily retraining, and the two-phase protocol.

Phase 1 serves every group from one model fitted on all groups' data, so
information gathered in the test group leaks into everyone's predictions.
Phase 2 fits one model per group on that group's own records only (still
cumulative from day 0), which removes the leak. The test group ranks topics
with the exploration bonus; control and production rank greedily.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import kernels, model as model_mod
from ._rng import STREAM_GROUPS, STREAM_SIM, bit_generator, generator
from .core import (
    GROUPS,
    ExperimentConfig,
    Group,
    RecordBatch,
)
from .env import Population, generate_population
from .metrics import (
    GROUP_METRIC_ORDER,
    BucketTable,
    UserDayMetrics,
    bucket_by_activity,
    compute_run_metrics,
)
from .model import LogSlice, RewardModel, fit

_TEST_CODE = GROUPS.index(Group.TEST)

N_ACTIVITY_BUCKETS = 10


@dataclass(frozen=True)
class GroupAssignment:
    """Deterministic partition of users into production/control/test."""

    codes: np.ndarray  # (U,) int8, indexes into GROUPS
    fractions: tuple[float, float, float]
    seed: int

    def group_of(self, user: int) -> Group:
        return GROUPS[self.codes[user]]

    def users_of(self, group: Group) -> np.ndarray:
        return np.flatnonzero(self.codes == GROUPS.index(group))

    def sizes(self) -> dict[Group, int]:
        return {g: int((self.codes == i).sum()) for i, g in enumerate(GROUPS)}


def assign_groups(n_users: int, fractions: tuple[float, float, float],
                  seed: int) -> GroupAssignment:
    """Randomly partition users; control and test get exactly equal sizes
    (round(fraction * U) each), production takes the remainder."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("group fractions must sum to 1")
    if abs(fractions[1] - fractions[2]) > 1e-9:
        raise ValueError("control and test fractions must be equal")
    n_ct = round(fractions[1] * n_users)
    if 2 * n_ct > n_users:
        raise ValueError("control+test cannot exceed the population")
    order = generator(seed, STREAM_GROUPS).permutation(n_users)
    codes = np.zeros(n_users, dtype=np.int8)
    codes[order[:n_ct]] = GROUPS.index(Group.CONTROL)
    codes[order[n_ct:2 * n_ct]] = GROUPS.index(Group.TEST)
    return GroupAssignment(codes=codes, fractions=tuple(fractions), seed=seed)


@dataclass(frozen=True)
class PhasePlan:
    """Which log slice each group's model may be fitted on, per phase.

    Phase 1: one shared fit over all groups. Phase 2: per-group fits on the
    group's own records only; never a cross-group slice.
    """

    phase1_days: int
    phase2_days: int

    @property
    def total_days(self) -> int:
        return self.phase1_days + self.phase2_days

    def phase_of(self, day: int) -> int:
        return 1 if day < self.phase1_days else 2

    def model_slices(self, day: int) -> dict[Group, LogSlice]:
        if self.phase_of(day) == 1:
            shared = LogSlice(groups=frozenset(GROUPS), day_hi=day)
            return {g: shared for g in GROUPS}
        return {g: LogSlice(groups=frozenset({g}), day_hi=day) for g in GROUPS}


@dataclass
class EffectSeries:
    """Per-day test/control - 1 for each reported metric; days where the
    control value is 0 or either side is missing are absent."""

    metrics: dict[str, dict[int, float]] = field(default_factory=dict)

    def rows(self, phase_of) -> list[tuple[int, int, str, float]]:
        out = []
        days = sorted({d for series in self.metrics.values() for d in series})
        for day in days:
            for name in GROUP_METRIC_ORDER:
                series = self.metrics.get(name, {})
                if day in series:
                    out.append((day, phase_of(day), name, series[day]))
        return out


def compute_effect(series_test: Mapping[int, float],
                   series_control: Mapping[int, float]) -> dict[int, float]:
    """Per-day relative delta test/control - 1; zero-control days are absent."""
    out: dict[int, float] = {}
    for day in sorted(series_control):
        control = series_control[day]
        if day in series_test and control != 0:
            out[day] = series_test[day] / control - 1.0
    return out


def build_effect_series(group_rows) -> EffectSeries:
    test: dict[str, dict[int, float]] = {}
    control: dict[str, dict[int, float]] = {}
    for day, group, _phase, name, value in group_rows:
        if group is Group.TEST:
            test.setdefault(name, {})[day] = value
        elif group is Group.CONTROL:
            control.setdefault(name, {})[day] = value
    series = EffectSeries()
    for name in GROUP_METRIC_ORDER:
        if name in test and name in control:
            effect = compute_effect(test[name], control[name])
            if effect:
                series.metrics[name] = effect
    return series


@dataclass
class SimulationState:
    """Everything the daily loop mutates, plus the immutable environment."""

    cfg: ExperimentConfig
    seed: int
    population: Population
    assignment: GroupAssignment
    plan: PhasePlan
    counts: np.ndarray      # (U, K) per-user per-topic lifetime impressions
    totals: np.ndarray      # (U,) per-user lifetime impressions
    models: dict[Group, RewardModel]
    day_batches: list[RecordBatch] = field(default_factory=list)
    model_version: int = 0
    workers: int = 1

    @property
    def records(self) -> RecordBatch:
        return RecordBatch.concat(self.day_batches)


def new_state(cfg: ExperimentConfig, seed: int | None = None,
              workers: int = 1) -> SimulationState:
    if seed is None:
        seed = cfg.seed
    population = generate_population(cfg, seed)
    assignment = assign_groups(cfg.n_users, cfg.group_fractions, seed)
    prior = fit(RecordBatch.empty(), model_mod.ALL_GROUPS_SLICE,
                cfg.shrinkage_lambda, cfg.k_topics, cfg.n_users, version=0)
    return SimulationState(
        cfg=cfg,
        seed=seed,
        population=population,
        assignment=assignment,
        plan=PhasePlan(cfg.phase1_days, cfg.phase2_days),
        counts=np.zeros((cfg.n_users, cfg.k_topics), dtype=np.int64),
        totals=np.zeros(cfg.n_users, dtype=np.int64),
        models={g: prior for g in GROUPS},
        workers=workers,
    )


def refit_models(state: SimulationState, day: int) -> None:
    """Refit per the phase plan on all records from day 0 through day - 1."""
    history = state.records
    slices = state.plan.model_slices(day)
    cfg = state.cfg
    fitted: dict[int, RewardModel] = {}
    for group in GROUPS:
        sl = slices[group]
        key = id(sl)
        if key not in fitted:
            state.model_version += 1
            fitted[key] = fit(history, sl, cfg.shrinkage_lambda,
                              cfg.k_topics, cfg.n_users,
                              version=state.model_version)
        state.models[group] = fitted[key]


def _estimates(state: SimulationState) -> np.ndarray:
    """Task-weighted prediction matrix (U, K), each user served by their
    group's model."""
    cfg = state.cfg
    est = np.zeros((cfg.n_users, cfg.k_topics), dtype=np.float64)
    weighted: dict[int, np.ndarray] = {}
    for group in GROUPS:
        m = state.models[group]
        if id(m) not in weighted:
            weighted[id(m)] = m.predict_weighted(cfg.alpha)
        rows = state.assignment.users_of(group)
        est[rows] = weighted[id(m)][rows]
    return est


def run_day(state: SimulationState, day: int) -> RecordBatch:
    """Simulate one day for every user and append the impressions.

    Per active user and slot: draw the available-topic subset, rank with the
    group's policy (test: exploration bonus gamma; control/production:
    greedy), realize feedback, and update that user's counters.
    """
    cfg = state.cfg
    u_count, k = cfg.n_users, cfg.k_topics
    slots = cfg.slots_per_active_day
    m_avail = math.ceil(cfg.availability_fraction * k)
    phase = state.plan.phase_of(day)

    est = _estimates(state)
    gammas = np.where(state.assignment.codes == _TEST_CODE, cfg.gamma, 0.0)
    pop = state.population

    out_topics = np.zeros((u_count, slots), dtype=np.int32)
    out_scores = np.zeros((u_count, slots), dtype=np.float64)
    out_flags = np.zeros((u_count, slots, 7), dtype=np.uint8)
    out_nrec = np.zeros(u_count, dtype=np.int32)
    users = np.arange(u_count, dtype=np.int32)
    bitgens = [bit_generator(state.seed, STREAM_SIM, u, day) for u in range(u_count)]

    def run_chunk(lo: int, hi: int) -> None:
        kernels.simulate_day_batch(
            bitgens[lo:hi], users[lo:hi], est, state.counts, state.totals,
            gammas, pop.activity_rate, pop.novelty_lift,
            pop.play_aff, pop.loop_given_play, pop.completed_given_play,
            pop.skip_given_not_completed, pop.comment_aff, pop.share_aff,
            pop.like_aff, slots, m_avail,
            out_topics[lo:hi], out_scores[lo:hi], out_flags[lo:hi],
            out_nrec[lo:hi])

    if state.workers <= 1:
        run_chunk(0, u_count)
    else:
        bounds = np.linspace(0, u_count, state.workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=state.workers) as pool:
            futures = [pool.submit(run_chunk, int(lo), int(hi))
                       for lo, hi in zip(bounds[:-1], bounds[1:]) if lo != hi]
            for f in futures:
                f.result()

    active = out_nrec > 0
    act_users = users[active]
    n_act = int(act_users.size)
    user_col = np.repeat(act_users, slots)
    batch = RecordBatch(
        day=np.full(n_act * slots, day, dtype=np.int32),
        user=user_col,
        topic=out_topics[active].ravel(),
        group=state.assignment.codes[user_col],
        phase=np.full(n_act * slots, phase, dtype=np.int8),
        flags=out_flags[active].reshape(-1, 7),
        score=out_scores[active].ravel(),
    )
    state.day_batches.append(batch)
    return batch


@dataclass
class ExperimentResult:
    """Everything a run emits, before any file is written."""

    cfg: ExperimentConfig
    seed: int
    records: RecordBatch
    user_metrics: UserDayMetrics
    group_rows: list
    effects: EffectSeries
    effect_rows: list
    buckets: BucketTable
    bucket_rows: list
    backend: str
    population: Population
    assignment: GroupAssignment


def derive_outputs(records: RecordBatch, cfg: ExperimentConfig,
                   workers: int = 1):
    """Metric, effect, and bucket tables from a log; pure in (log, config)."""
    user_metrics, group_rows = compute_run_metrics(records, cfg, workers=workers)
    effects = build_effect_series(group_rows)
    phase_of = PhasePlan(cfg.phase1_days, cfg.phase2_days).phase_of
    effect_rows = effects.rows(phase_of)
    control_rows = user_metrics.select(
        user_metrics.group == GROUPS.index(Group.CONTROL))
    buckets = bucket_by_activity(control_rows, n_buckets=N_ACTIVITY_BUCKETS)
    bucket_rows = list(buckets.rows())
    return user_metrics, group_rows, effects, effect_rows, buckets, bucket_rows


def run_experiment(cfg: ExperimentConfig, seed: int | None = None,
                   workers: int = 1) -> ExperimentResult:
    """Run both phases and derive all outputs; fully reproducible from
    (config, seed) at any worker count."""
    state = new_state(cfg, seed, workers=workers)
    for day in range(cfg.total_days):
        if day > 0 and (day % cfg.retrain_every_days == 0 or day == cfg.phase1_days):
            refit_models(state, day)
        run_day(state, day)
    records = state.records
    user_metrics, group_rows, effects, effect_rows, buckets, bucket_rows = \
        derive_outputs(records, cfg, workers=workers)
    return ExperimentResult(
        cfg=cfg,
        seed=state.seed,
        records=records,
        user_metrics=user_metrics,
        group_rows=group_rows,
        effects=effects,
        effect_rows=effect_rows,
        buckets=buckets,
        bucket_rows=bucket_rows,
        backend=kernels.BACKEND,
        population=state.population,
        assignment=state.assignment,
    )
