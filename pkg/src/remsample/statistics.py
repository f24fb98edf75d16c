"""The five dyadic statistics evaluated on the network of past events.

All values are log(1 + x) transforms of the raw decayed quantities, except
assortativity, which is the product of the transformed popularity and
activity.
"""

from __future__ import annotations

import math
from typing import NamedTuple

from remsample.network import PastEventNetwork

STAT_NAMES = ("repetition", "popularity", "activity", "four_cycle", "assortativity")
SHORT_NAMES = {"repetition": "rep", "popularity": "pop", "activity": "act",
               "four_cycle": "4cy", "assortativity": "asr"}

DEFAULT_FOUR_CYCLE_CUTOFF = 10**6


class StatVector(NamedTuple):
    repetition: float
    popularity: float
    activity: float
    four_cycle: float
    assortativity: float


def repetition(net: PastEventNetwork, u, a, t=None) -> float:
    return math.log1p(net.weight(u, a, t))


def popularity(net: PastEventNetwork, u, a, t=None) -> float:
    return math.log1p(net.weighted_in(a, t))


def activity(net: PastEventNetwork, u, a, t=None) -> float:
    return math.log1p(net.weighted_out(u, t))


def assortativity(net: PastEventNetwork, u, a, t=None) -> float:
    return popularity(net, u, a, t) * activity(net, u, a, t)


def _cycle_via_dyad(net, u, a):
    # iterate a' in N(u) and u' in N(a), look up w(u', a')
    col_a = net.in_weights(a)
    users = col_a.keys()
    cols = net._col_cache
    total = 0.0
    for a2, x in net.out_weights(u).items():
        if a2 == a:
            continue
        col = cols.get(a2) or net.in_weights(a2)
        for u2 in col.keys() & users:
            if u2 != u:
                y, z = col_a[u2], col[u2]
                total += x if x <= y and x <= z else (y if y <= z else z)
    return total


def _cycle_via_user(net, u, a):
    # iterate a' in N(u), then u' in N(a'), keep u' adjacent to a
    col_a = net.in_weights(a)
    total = 0.0
    for a2, x in net.out_weights(u).items():
        if a2 == a:
            continue
        for u2, z in net.in_weights(a2).items():
            if u2 == u:
                continue
            y = col_a.get(u2)
            if y is not None:
                total += min(x, z, y)
    return total


def _cycle_via_article(net, u, a):
    # iterate u' in N(a), then a' in N(u'), keep a' adjacent to u
    row_u = net.out_weights(u)
    total = 0.0
    for u2, y in net.in_weights(a).items():
        if u2 == u:
            continue
        for a2, z in net.out_weights(u2).items():
            if a2 == a:
                continue
            x = row_u.get(a2)
            if x is not None:
                total += min(x, z, y)
    return total


def four_cycle_strategy(net: PastEventNetwork, u, a,
                        cutoff: int = DEFAULT_FOUR_CYCLE_CUTOFF) -> str:
    """Name of the enumeration used for ``(u, a)``: 'dyad', 'user' or 'article'.

    The cost of 'dyad' is d(u)*d(a); 'user' costs the summed degrees of the
    articles adjacent to u and 'article' the summed degrees of the users
    adjacent to a. Below ``cutoff`` the dyad enumeration is used outright.
    """
    du, da = net.out_degree(u), net.in_degree(a)
    direct = du * da
    if direct <= cutoff:
        return "dyad"
    via_user = sum(net.in_degree(a2) for a2 in net._out[u])
    via_article = sum(net.out_degree(u2) for u2 in net._in[a])
    return min((direct, "dyad"), (via_user, "user"), (via_article, "article"))[1]


_STRATEGIES = {"dyad": _cycle_via_dyad, "user": _cycle_via_user, "article": _cycle_via_article}


def four_cycle_raw(net: PastEventNetwork, u, a, t=None,
                   cutoff: int = DEFAULT_FOUR_CYCLE_CUTOFF, strategy: str | None = None) -> float:
    """Sum over u' != u, a' != a of min(w(u,a'), w(u',a'), w(u',a))."""
    net._at(t)
    if u not in net._out or a not in net._in:
        return 0.0
    if strategy is None:
        strategy = four_cycle_strategy(net, u, a, cutoff)
    return _STRATEGIES[strategy](net, u, a)


def four_cycle(net: PastEventNetwork, u, a, t=None,
               cutoff: int = DEFAULT_FOUR_CYCLE_CUTOFF) -> float:
    return math.log1p(four_cycle_raw(net, u, a, t, cutoff))


def stat_vector(net: PastEventNetwork, u, a, t=None,
                cutoff: int = DEFAULT_FOUR_CYCLE_CUTOFF) -> StatVector:
    t = net._at(t)
    rep = math.log1p(net.weight(u, a))
    pop = math.log1p(net.weighted_in(a))
    act = math.log1p(net.weighted_out(u))
    cyc = math.log1p(four_cycle_raw(net, u, a, t, cutoff))
    return StatVector(rep, pop, act, cyc, pop * act)
