# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: per-impression policy simulation and beta-argmax sampling.

Each function consumes randomness from a caller-supplied numpy BitGenerator in
exactly the draw order documented in banditlab.kernels, so the pure-numpy
fallback produces bit-identical output.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport INFINITY, log, sqrt
from libc.stdlib cimport free, malloc
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_beta

cnp.import_array()

cdef const char *CAPSULE = "BitGenerator"


cdef bitgen_t *_bitgen(object bit_generator) except NULL:
    capsule = bit_generator.capsule
    if not PyCapsule_IsValid(capsule, CAPSULE):
        raise ValueError("expected a numpy BitGenerator")
    return <bitgen_t *> PyCapsule_GetPointer(capsule, CAPSULE)


# Flag storage order in out_flags rows.
# play, loop, skip, comment, share, like, completed.


cdef void _simulate_one(bitgen_t *rng, double activity_rate, int slots,
                        int m_avail, double gamma, double novelty_lift,
                        const double *est, cnp.int64_t *counts,
                        cnp.int64_t *total_io,
                        const double *p_play, const double *p_loop,
                        const double *p_compl, const double *p_skip,
                        const double *p_comment, const double *p_share,
                        const double *p_like,
                        int K, int *perm, unsigned char *avail,
                        cnp.int32_t *out_topics, double *out_scores,
                        cnp.uint8_t *out_flags, cnp.int32_t *n_out) noexcept nogil:
    cdef int s, i, j, k, t, best
    cdef cnp.int64_t total, nk, best_n
    cdef double d, lnN, score, best_score, pp
    cdef double d_play, d_loop, d_compl, d_skip, d_comment, d_share, d_like
    cdef bint play, loop, completed, skip, comment, share, like

    d = rng.next_double(rng.state)
    if d >= activity_rate:
        n_out[0] = 0
        return
    total = total_io[0]
    for s in range(slots):
        # available actions: partial Fisher-Yates over the identity permutation
        for k in range(K):
            perm[k] = k
        for i in range(m_avail):
            j = i + <int> (rng.next_double(rng.state) * (K - i))
            t = perm[i]
            perm[i] = perm[j]
            perm[j] = t
        for k in range(K):
            avail[k] = 0
        for i in range(m_avail):
            avail[perm[i]] = 1

        # argmax of the UCB score, ties to lower count then lower topic id;
        # with gamma == 0 (greedy) ties go straight to the lower topic id
        lnN = log(<double> total) if total >= 2 else 0.0
        best = -1
        best_score = 0.0
        best_n = 0
        for k in range(K):
            if not avail[k]:
                continue
            nk = counts[k]
            if nk == 0:
                score = INFINITY if gamma > 0.0 else est[k]
            else:
                score = est[k] + gamma * sqrt(lnN / <double> nk)
            if best < 0 or score > best_score or \
                    (score == best_score and gamma > 0.0 and nk < best_n):
                best = k
                best_score = score
                best_n = nk

        # realized feedback; all 7 draws happen unconditionally, in the fixed
        # order play, loop, completed, skip, comment, share, like, so stream
        # consumption never depends on the outcomes themselves
        pp = p_play[best]
        if counts[best] == 0:
            pp = pp * (1.0 + novelty_lift)
            if pp > 1.0:
                pp = 1.0
        d_play = rng.next_double(rng.state)
        d_loop = rng.next_double(rng.state)
        d_compl = rng.next_double(rng.state)
        d_skip = rng.next_double(rng.state)
        d_comment = rng.next_double(rng.state)
        d_share = rng.next_double(rng.state)
        d_like = rng.next_double(rng.state)
        play = d_play < pp
        loop = play and d_loop < p_loop[best]
        completed = play and d_compl < p_compl[best]
        skip = (not completed) and d_skip < p_skip[best]
        comment = d_comment < p_comment[best]
        share = d_share < p_share[best]
        like = d_like < p_like[best]

        counts[best] += 1
        total += 1
        out_topics[s] = best
        out_scores[s] = best_score
        out_flags[s * 7 + 0] = play
        out_flags[s * 7 + 1] = loop
        out_flags[s * 7 + 2] = skip
        out_flags[s * 7 + 3] = comment
        out_flags[s * 7 + 4] = share
        out_flags[s * 7 + 5] = like
        out_flags[s * 7 + 6] = completed
    total_io[0] = total
    n_out[0] = slots


def simulate_user_day(object bit_generator, double activity_rate, int slots,
                      int m_avail, double gamma, double novelty_lift,
                      double[::1] est, cnp.int64_t[::1] counts, total,
                      double[::1] p_play, double[::1] p_loop,
                      double[::1] p_compl, double[::1] p_skip,
                      double[::1] p_comment, double[::1] p_share,
                      double[::1] p_like):
    """Simulate one user-day; mutates ``counts`` in place.

    Returns (n_records, new_total, topics, scores, flags).
    """
    cdef int K = est.shape[0]
    cdef bitgen_t *rng = _bitgen(bit_generator)
    cdef cnp.int64_t total_c = total
    cdef cnp.int32_t n_rec = 0
    topics = np.zeros(slots, dtype=np.int32)
    scores = np.zeros(slots, dtype=np.float64)
    flags = np.zeros((slots, 7), dtype=np.uint8)
    cdef cnp.int32_t[::1] topics_v = topics
    cdef double[::1] scores_v = scores
    cdef cnp.uint8_t[:, ::1] flags_v = flags
    cdef int *perm = <int *> malloc(K * sizeof(int))
    cdef unsigned char *avail = <unsigned char *> malloc(K)
    if perm == NULL or avail == NULL:
        free(perm)
        free(avail)
        raise MemoryError()
    try:
        _simulate_one(rng, activity_rate, slots, m_avail, gamma, novelty_lift,
                      &est[0], &counts[0], &total_c,
                      &p_play[0], &p_loop[0], &p_compl[0], &p_skip[0],
                      &p_comment[0], &p_share[0], &p_like[0],
                      K, perm, avail, &topics_v[0], &scores_v[0],
                      &flags_v[0, 0], &n_rec)
    finally:
        free(perm)
        free(avail)
    return int(n_rec), int(total_c), topics, scores, flags


def simulate_day_batch(list bitgens, cnp.int32_t[::1] users,
                       double[:, ::1] est, cnp.int64_t[:, ::1] counts,
                       cnp.int64_t[::1] totals, double[::1] gammas,
                       double[::1] activity, double[::1] novelty,
                       double[:, ::1] p_play, double[:, ::1] p_loop,
                       double[:, ::1] p_compl, double[:, ::1] p_skip,
                       double[:, ::1] p_comment, double[:, ::1] p_share,
                       double[:, ::1] p_like,
                       int slots, int m_avail,
                       cnp.int32_t[:, ::1] out_topics, double[:, ::1] out_scores,
                       cnp.uint8_t[:, :, ::1] out_flags, cnp.int32_t[::1] out_nrec):
    """Simulate one day for a block of users (one bit generator per user).

    Safe to call concurrently on disjoint user blocks: all mutated state is
    per-user rows.
    """
    cdef Py_ssize_t n = users.shape[0]
    cdef int K = est.shape[1]
    cdef Py_ssize_t i
    cdef int u
    if n == 0:
        return
    cdef bitgen_t **rngs = <bitgen_t **> malloc(n * sizeof(bitgen_t *))
    cdef int *perm = <int *> malloc(K * sizeof(int))
    cdef unsigned char *avail = <unsigned char *> malloc(K)
    if rngs == NULL or perm == NULL or avail == NULL:
        free(rngs)
        free(perm)
        free(avail)
        raise MemoryError()
    try:
        for i in range(n):
            rngs[i] = _bitgen(bitgens[i])
        with nogil:
            for i in range(n):
                u = users[i]
                _simulate_one(rngs[i], activity[u], slots, m_avail, gammas[u],
                              novelty[u], &est[u, 0], &counts[u, 0], &totals[u],
                              &p_play[u, 0], &p_loop[u, 0], &p_compl[u, 0],
                              &p_skip[u, 0], &p_comment[u, 0], &p_share[u, 0],
                              &p_like[u, 0], K, perm, avail,
                              &out_topics[i, 0], &out_scores[i, 0],
                              &out_flags[i, 0, 0], &out_nrec[i])
    finally:
        free(rngs)
        free(perm)
        free(avail)


def beta_argmax_counts(object bit_generator, double[::1] a, double[::1] b,
                       int mc_samples):
    """Count, over mc_samples rounds, which topic's beta draw is the maximum.

    Ties go to the lowest topic index. Returns int64 counts of shape (K,).
    """
    cdef int K = a.shape[0]
    cdef bitgen_t *rng = _bitgen(bit_generator)
    out = np.zeros(K, dtype=np.int64)
    cdef cnp.int64_t[::1] out_v = out
    cdef int s, k, best
    cdef double v, bestv
    with nogil:
        for s in range(mc_samples):
            best = 0
            bestv = random_beta(rng, a[0], b[0])
            for k in range(1, K):
                v = random_beta(rng, a[k], b[k])
                if v > bestv:
                    bestv = v
                    best = k
            out_v[best] += 1
    return out


def beta_argmax_batch(list bitgens, double[:, ::1] a, double[:, ::1] b,
                      int mc_samples, cnp.int64_t[:, ::1] out):
    """Batched beta_argmax_counts over rows; one bit generator per row."""
    cdef Py_ssize_t n = a.shape[0]
    cdef int K = a.shape[1]
    cdef Py_ssize_t i
    cdef int s, k, best
    cdef double v, bestv
    if n == 0:
        return
    cdef bitgen_t **rngs = <bitgen_t **> malloc(n * sizeof(bitgen_t *))
    if rngs == NULL:
        raise MemoryError()
    try:
        for i in range(n):
            rngs[i] = _bitgen(bitgens[i])
        with nogil:
            for i in range(n):
                for s in range(mc_samples):
                    best = 0
                    bestv = random_beta(rngs[i], a[i, 0], b[i, 0])
                    for k in range(1, K):
                        v = random_beta(rngs[i], a[i, k], b[i, k])
                        if v > bestv:
                            bestv = v
                            best = k
                    out[i, best] += 1
    finally:
        free(rngs)
    return
