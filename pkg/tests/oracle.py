"""From-scratch reference evaluators used as test oracles.

Nothing here shares code with the package: weights are recomputed from the
full event prefix for every query.
"""

from __future__ import annotations

import math

import numpy as np


def dyad_weight(times, t, halflife, eps):
    """Thresholded decayed weight of one dyad at ``t`` from its event times (all <= t).

    The value is carried from event to event; whenever the decayed value has
    fallen below ``eps`` it is zero, so the next event restarts at 1.
    """
    value, last = 0.0, None
    for s in times:
        if last is not None:
            value = value * 2.0 ** ((last - s) / halflife)
            if value < eps:
                value = 0.0
        value += 1.0
        last = s
    if last is None:
        return 0.0
    value = value * 2.0 ** ((last - t) / halflife)
    return value if value >= eps else 0.0


def weight_matrix(events, t, n_users, n_articles, halflife, eps):
    """Dense matrix of thresholded weights from all ``(u, a, time)`` with time <= t."""
    per_dyad: dict[tuple[int, int], list] = {}
    for u, a, s in events:
        if s <= t:
            per_dyad.setdefault((u, a), []).append(s)
    W = np.zeros((n_users, n_articles))
    for (u, a), times in per_dyad.items():
        W[u, a] = dyad_weight(times, t, halflife, eps)
    return W


def four_cycle_loops(W, u, a):
    """Raw four-cycle sum by an explicit double loop over (u', a')."""
    total = 0.0
    n_u, n_a = W.shape
    for u2 in range(n_u):
        if u2 == u:
            continue
        for a2 in range(n_a):
            if a2 == a:
                continue
            total += min(W[u, a2], W[u2, a2], W[u2, a])
    return total


def four_cycle_dense(W, u, a):
    """Same sum as :func:`four_cycle_loops`, vectorized over all pairs."""
    m = np.minimum(np.minimum(W[u, :][None, :], W), W[:, a][:, None])
    m[u, :] = 0.0
    m[:, a] = 0.0
    return float(m.sum())


def statistics(W, u, a):
    rep = math.log1p(W[u, a])
    pop = math.log1p(W[:, a].sum())
    act = math.log1p(W[u, :].sum())
    cyc = math.log1p(four_cycle_dense(W, u, a))
    return np.array([rep, pop, act, cyc, pop * act])


def stratum_loglik(X, case, theta):
    """Log-likelihood of one stratum by direct summation."""
    eta = [sum(t * x for t, x in zip(theta, np.atleast_1d(row))) for row in X]
    top = max(eta)
    return eta[case] - top - math.log(sum(math.exp(e - top) for e in eta))


def golden_section(f, lo, hi, tol=1e-12):
    """Maximize a unimodal scalar function on [lo, hi]."""
    g = (math.sqrt(5) - 1) / 2
    c, d = hi - g * (hi - lo), lo + g * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc > fd:
            hi, d, fd = d, c, fc
            c = hi - g * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + g * (hi - lo)
            fd = f(d)
    return (lo + hi) / 2


def random_stream(rng, n_events, n_users, n_articles, mean_gap=1.0, reuse=0.5):
    """Integer-indexed events with clustered dyads and exponential gaps.

    With probability ``reuse`` an event repeats a node of a recent event, so
    repetition and four-cycles are common.
    """
    events = []
    t = 0.0
    for _ in range(n_events):
        t += rng.exponential(mean_gap)
        if events and rng.random() < reuse:
            pu, pa, _ = events[-1 - rng.integers(min(len(events), 30))]
            kind = rng.integers(3)
            u = pu if kind != 1 else int(rng.integers(n_users))
            a = pa if kind != 0 else int(rng.integers(n_articles))
        else:
            u, a = int(rng.integers(n_users)), int(rng.integers(n_articles))
        events.append((u, a, t))
    return events
