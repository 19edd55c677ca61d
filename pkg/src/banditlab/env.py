"""Synthetic user population and per-impression feedback sampling.

There is no ground-truth user model to copy, so every shape here is a
simulator choice, kept simple and documented:

* each user has a handful of "true interest" topics with high play affinity
  and a long low-affinity tail whose base level varies by topic, so both
  personal taste and population-level topic quality are learnable;
* comment/share/like affinities are scaled-down transforms of play affinity;
* loop, completion, and skip propensities are affine transforms of play
  affinity, so completion feedback separates liked from disliked topics;
* daily activity is log-normal across users, which makes total plays per
  user roughly bell-shaped on a log axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._rng import STREAM_POPULATION, generator
from .core import ExperimentConfig, Outcomes

# population shape constants (simulator choices, see module docstring)
TOPIC_BASE_LO, TOPIC_BASE_HI = 0.02, 0.12
COLD_NOISE_SIGMA = 0.4
COLD_MIN, COLD_MAX = 0.005, 0.25
HOT_LO, HOT_SPAN = 0.60, 0.30
COMMENT_SCALE, SHARE_SCALE, LIKE_SCALE = 0.10, 0.06, 0.20
LOOP_COEF = 0.6
COMPLETED_BASE, COMPLETED_COEF = 0.30, 0.50
SKIP_BASE, SKIP_COEF = 0.25, 0.50
ACTIVITY_MIN = 0.02


@dataclass(frozen=True)
class UserProfile:
    """Latent ground truth for one user."""

    user: int
    affinity: np.ndarray  # (K, 4): play, comment, share, like in [0, 1]
    activity_rate: float
    novelty_lift: float
    loop_given_play: np.ndarray           # (K,)
    completed_given_play: np.ndarray      # (K,)
    skip_given_not_completed: np.ndarray  # (K,)


@dataclass(frozen=True)
class Population:
    """All user profiles as parallel arrays; immutable after generation."""

    seed: int
    k_topics: int
    n_users: int
    play_aff: np.ndarray      # (U, K)
    comment_aff: np.ndarray   # (U, K)
    share_aff: np.ndarray     # (U, K)
    like_aff: np.ndarray      # (U, K)
    loop_given_play: np.ndarray
    completed_given_play: np.ndarray
    skip_given_not_completed: np.ndarray
    activity_rate: np.ndarray  # (U,)
    novelty_lift: np.ndarray   # (U,)
    hot_count: np.ndarray      # (U,)

    def profile(self, user: int) -> UserProfile:
        affinity = np.stack(
            [self.play_aff[user], self.comment_aff[user],
             self.share_aff[user], self.like_aff[user]],
            axis=1,
        )
        return UserProfile(
            user=user,
            affinity=affinity,
            activity_rate=float(self.activity_rate[user]),
            novelty_lift=float(self.novelty_lift[user]),
            loop_given_play=self.loop_given_play[user],
            completed_given_play=self.completed_given_play[user],
            skip_given_not_completed=self.skip_given_not_completed[user],
        )


def generate_population(cfg: ExperimentConfig, seed: int | None = None) -> Population:
    """Synthesize the population; bit-identical for identical (cfg, seed)."""
    if seed is None:
        seed = cfg.seed
    u, k = cfg.n_users, cfg.k_topics
    gen = generator(seed, STREAM_POPULATION)

    topic_base = gen.uniform(TOPIC_BASE_LO, TOPIC_BASE_HI, size=k)
    hot_count = np.minimum(1 + gen.poisson(cfg.hot_topics_mean - 1.0, size=u), k)
    hot_order = gen.random((u, k)).argsort(axis=1)
    take_first = np.arange(k)[None, :] < hot_count[:, None]
    hot_mask = np.zeros((u, k), dtype=bool)
    hot_mask[np.arange(u)[:, None], hot_order] = take_first

    cold = topic_base[None, :] * np.exp(gen.normal(0.0, COLD_NOISE_SIGMA, size=(u, k)))
    play_aff = np.clip(cold, COLD_MIN, COLD_MAX)
    hot_values = HOT_LO + HOT_SPAN * gen.beta(2.0, 2.0, size=(u, k))
    play_aff[hot_mask] = hot_values[hot_mask]

    activity = np.clip(
        np.exp(math.log(cfg.activity_median) + cfg.activity_sigma * gen.normal(0.0, 1.0, size=u)),
        ACTIVITY_MIN, 1.0,
    )

    return Population(
        seed=seed,
        k_topics=k,
        n_users=u,
        play_aff=play_aff,
        comment_aff=COMMENT_SCALE * play_aff,
        share_aff=SHARE_SCALE * play_aff,
        like_aff=LIKE_SCALE * play_aff,
        loop_given_play=LOOP_COEF * play_aff,
        completed_given_play=COMPLETED_BASE + COMPLETED_COEF * play_aff,
        skip_given_not_completed=SKIP_BASE + SKIP_COEF * (1.0 - play_aff),
        activity_rate=activity,
        novelty_lift=np.full(u, cfg.novelty_lift),
        hot_count=hot_count,
    )


def available_topics(k_topics: int, fraction: float,
                     rng: np.random.Generator) -> np.ndarray:
    """Uniformly sampled candidate subset of ceil(fraction * K) topics.

    Consumes exactly ceil(fraction * K) uniforms via a partial Fisher-Yates
    shuffle, matching the simulation kernels draw for draw.
    """
    if not (0 < fraction <= 1):
        raise ValueError("fraction must be in (0, 1]")
    m = math.ceil(fraction * k_topics)
    draws = rng.random(m)
    perm = np.arange(k_topics)
    for i in range(m):
        j = i + int(draws[i] * (k_topics - i))
        perm[i], perm[j] = perm[j], perm[i]
    return np.sort(perm[:m])


def sample_outcomes(profile: UserProfile, topic: int, prior_exposures: int,
                    rng: np.random.Generator) -> Outcomes:
    """Draw one impression's feedback flags.

    Consumes exactly 7 uniforms in the order play, loop, completed, skip,
    comment, share, like (the kernels' draw-order contract). The novelty
    lift applies only on a first exposure and is clamped into [0, 1].
    """
    d = rng.random(7)
    pp = float(profile.affinity[topic, 0])
    if prior_exposures == 0:
        pp = min(pp * (1.0 + profile.novelty_lift), 1.0)
    play = bool(d[0] < pp)
    loop = play and bool(d[1] < profile.loop_given_play[topic])
    completed = play and bool(d[2] < profile.completed_given_play[topic])
    skip = (not completed) and bool(d[3] < profile.skip_given_not_completed[topic])
    return Outcomes(
        play=play,
        loop=loop,
        skip=skip,
        comment=bool(d[4] < profile.affinity[topic, 1]),
        share=bool(d[5] < profile.affinity[topic, 2]),
        like=bool(d[6] < profile.affinity[topic, 3]),
        completed=completed,
    )


def dump_population(pop: Population, path) -> None:
    """Line-delimited inspection dump: one JSON object per user."""
    import json

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u in range(pop.n_users):
            obj = {
                "user": u,
                "activity_rate": round(float(pop.activity_rate[u]), 9),
                "novelty_lift": round(float(pop.novelty_lift[u]), 9),
                "hot_count": int(pop.hot_count[u]),
                "play_affinity": [round(float(x), 9) for x in pop.play_aff[u]],
            }
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")
