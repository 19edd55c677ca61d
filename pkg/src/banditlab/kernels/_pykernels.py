"""Pure-numpy fallback for the compiled kernels.

Consumes the same positions of each bit-generator stream as the compiled
versions (see the package docstring for the draw-order contract), so outputs
are bit-identical between backends.
"""

from __future__ import annotations

import math

import numpy as np

# out_flags column order: play, loop, skip, comment, share, like, completed


def simulate_user_day(bit_generator, activity_rate, slots, m_avail, gamma,
                      novelty_lift, est, counts, total,
                      p_play, p_loop, p_compl, p_skip,
                      p_comment, p_share, p_like):
    """Simulate one user-day; mutates ``counts`` in place.

    Returns (n_records, new_total, topics, scores, flags).
    """
    gen = np.random.Generator(bit_generator)
    K = est.shape[0]
    topics = np.zeros(slots, dtype=np.int32)
    scores = np.zeros(slots, dtype=np.float64)
    flags = np.zeros((slots, 7), dtype=np.uint8)
    # One vectorized draw covers the whole day; the unused tail of an
    # inactive day is harmless because the stream is private to (user, day).
    draws = gen.random(1 + slots * (m_avail + 7))
    if draws[0] >= activity_rate:
        return 0, total, topics, scores, flags

    identity = np.arange(K, dtype=np.int64)
    perm = np.empty(K, dtype=np.int64)
    pos = 1
    for s in range(slots):
        perm[:] = identity
        for i in range(m_avail):
            j = i + int(draws[pos] * (K - i))
            pos += 1
            perm[i], perm[j] = perm[j], perm[i]
        cand = np.sort(perm[:m_avail])

        lnN = math.log(total) if total >= 2 else 0.0
        nk = counts[cand]
        cand_scores = est[cand].astype(np.float64, copy=True)
        if gamma > 0.0:
            tried = nk > 0
            cand_scores[tried] = est[cand][tried] + gamma * np.sqrt(lnN / nk[tried])
            cand_scores[~tried] = np.inf
        best_score = cand_scores.max()
        tie = cand_scores == best_score
        if gamma > 0.0:
            min_n = nk[tie].min()
            pick = int(np.flatnonzero(tie & (nk == min_n))[0])
        else:
            pick = int(np.flatnonzero(tie)[0])
        best = int(cand[pick])
        best_score = float(cand_scores[pick])

        pp = float(p_play[best])
        if counts[best] == 0:
            pp = min(pp * (1.0 + novelty_lift), 1.0)
        d_play, d_loop, d_compl, d_skip, d_comment, d_share, d_like = \
            draws[pos:pos + 7]
        pos += 7
        play = bool(d_play < pp)
        loop = play and bool(d_loop < p_loop[best])
        completed = play and bool(d_compl < p_compl[best])
        skip = (not completed) and bool(d_skip < p_skip[best])
        comment = bool(d_comment < p_comment[best])
        share = bool(d_share < p_share[best])
        like = bool(d_like < p_like[best])

        counts[best] += 1
        total += 1
        topics[s] = best
        scores[s] = best_score
        flags[s] = (play, loop, skip, comment, share, like, completed)
    return slots, total, topics, scores, flags


def simulate_day_batch(bitgens, users, est, counts, totals, gammas, activity,
                       novelty, p_play, p_loop, p_compl, p_skip,
                       p_comment, p_share, p_like, slots, m_avail,
                       out_topics, out_scores, out_flags, out_nrec):
    """Simulate one day for a block of users (one bit generator per user)."""
    for i, u in enumerate(users):
        u = int(u)
        n_rec, new_total, topics, scores, flags = simulate_user_day(
            bitgens[i], float(activity[u]), slots, m_avail, float(gammas[u]),
            float(novelty[u]), est[u], counts[u], int(totals[u]),
            p_play[u], p_loop[u], p_compl[u], p_skip[u],
            p_comment[u], p_share[u], p_like[u])
        totals[u] = new_total
        out_nrec[i] = n_rec
        if n_rec:
            out_topics[i] = topics
            out_scores[i] = scores
            out_flags[i] = flags


def beta_argmax_counts(bit_generator, a, b, mc_samples):
    """Count, over mc_samples rounds, which topic's beta draw is the maximum.

    Ties go to the lowest topic index. Returns int64 counts of shape (K,).
    """
    gen = np.random.Generator(bit_generator)
    vals = gen.beta(a, b, size=(mc_samples, a.shape[0]))
    return np.bincount(vals.argmax(axis=1), minlength=a.shape[0]).astype(np.int64)


def beta_argmax_batch(bitgens, a, b, mc_samples, out):
    """Batched beta_argmax_counts over rows; one bit generator per row."""
    for i in range(a.shape[0]):
        out[i] += beta_argmax_counts(bitgens[i], a[i], b[i], mc_samples)
