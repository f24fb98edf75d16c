"""Decayed two-mode network of past events with exact lazy pruning.

Each edge stores its weight at the last event on the dyad together with the
time of that event; the weight at a later time ``t`` is obtained by applying
the exponential decay on read. An edge is considered absent at ``t`` as soon
as its decayed weight is below ``prune_epsilon``. Removal is driven by a heap
of predicted threshold crossing times, so the edge set after ``advance(t)``
does not depend on which queries were issued before.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import IO, Hashable, Iterator

THIRTY_DAYS = 30 * 24 * 3600


@dataclass(frozen=True)
class DecayConfig:
    halflife: float = THIRTY_DAYS
    prune_epsilon: float = 0.01

    def __post_init__(self):
        if not self.halflife > 0:
            raise ValueError(f"halflife must be positive, got {self.halflife}")
        if not 0 < self.prune_epsilon < 1:
            raise ValueError(f"prune_epsilon must lie in (0, 1), got {self.prune_epsilon}")


def decay_to(value: float, start: float, end: float, cfg: DecayConfig | float) -> float:
    """Decay ``value`` stored at time ``start`` forward to time ``end``."""
    halflife = cfg.halflife if isinstance(cfg, DecayConfig) else cfg
    if end < start:
        raise ValueError(f"cannot decay backwards in time ({start} -> {end})")
    return value * 2.0 ** ((start - end) / halflife)


class _Lazy:
    __slots__ = ("value", "last", "gen")

    def __init__(self, value: float, last: float, gen: int = -1):
        self.value = value
        self.last = last
        self.gen = gen


class PastEventNetwork:
    """Weighted user-article network ``G[E; t]`` maintained incrementally.

    Nodes are arbitrary hashable keys (normally the dense indices handed out
    by :class:`~remsample.events.NodeUniverse`). Reading methods accept an
    optional time; passing one first advances the clock to it.
    """

    def __init__(self, decay: DecayConfig | None = None):
        self.decay = decay or DecayConfig()
        self.clock = -math.inf
        self._out: dict[Hashable, dict[Hashable, _Lazy]] = {}
        self._in: dict[Hashable, dict[Hashable, _Lazy]] = {}
        self._out_sum: dict[Hashable, _Lazy] = {}
        self._in_sum: dict[Hashable, _Lazy] = {}
        self._heap: list[tuple[float, int, Hashable, Hashable]] = []
        self._gen = 0
        self.n_edges = 0
        self.n_pruned = 0
        self._row_cache: dict[Hashable, dict] = {}
        self._col_cache: dict[Hashable, dict] = {}

    # -- maintenance ---------------------------------------------------------

    def _due(self, edge: _Lazy) -> float:
        h, eps = self.decay.halflife, self.decay.prune_epsilon
        value, last = edge.value, edge.last

        def below(t):
            return value * 2.0 ** ((last - t) / h) < eps

        # first float time at which the decayed weight, evaluated exactly as on
        # read, drops below eps; the closed form is off by a few ulps at most
        t = last + h * math.log2(value / eps)
        if below(t):
            while below(prev := math.nextafter(t, -math.inf)):
                t = prev
        else:
            while not below(t):
                t = math.nextafter(t, math.inf)
        return t

    def _push(self, u, a, edge: _Lazy, due: float) -> None:
        self._gen += 1
        edge.gen = self._gen
        heapq.heappush(self._heap, (due, self._gen, u, a))

    def advance(self, t: float) -> None:
        """Move the clock to ``t`` and drop every edge whose weight fell below epsilon."""
        if t < self.clock:
            raise ValueError(f"time {t} precedes network clock {self.clock}")
        if t != self.clock:
            self._row_cache.clear()
            self._col_cache.clear()
        self.clock = t
        heap = self._heap
        h, eps = self.decay.halflife, self.decay.prune_epsilon
        while heap and heap[0][0] <= t:
            _, gen, u, a = heapq.heappop(heap)
            edge = self._out.get(u, {}).get(a)
            if edge is None or edge.gen != gen:
                continue
            residual = edge.value * 2.0 ** ((edge.last - t) / h)
            if residual >= eps:
                self._push(u, a, edge, math.nextafter(t, math.inf))
                continue
            self._remove(u, a, edge)
        if len(heap) > 2 * self.n_edges + 1024:
            self._compact()

    def _remove(self, u, a, edge: _Lazy) -> None:
        h = self.decay.halflife
        self._row_cache.pop(u, None)
        self._col_cache.pop(a, None)
        row = self._out[u]
        del row[a]
        col = self._in[a]
        del col[u]
        self.n_edges -= 1
        self.n_pruned += 1
        for adj, sums, node in ((row, self._out_sum, u), (col, self._in_sum, a)):
            if not adj:
                del sums[node]
                if adj is row:
                    del self._out[u]
                else:
                    del self._in[a]
                continue
            # subtract at the node's own last touch so the stored sum does not
            # depend on when advance() happened to be called
            agg = sums[node]
            agg.value = max(agg.value - edge.value * 2.0 ** ((edge.last - agg.last) / h), 0.0)

    def _compact(self) -> None:
        live = [(due, gen, u, a) for due, gen, u, a in self._heap
                if (e := self._out.get(u, {}).get(a)) is not None and e.gen == gen]
        heapq.heapify(live)
        self._heap = live

    def apply_event(self, u, a, t: float) -> None:
        """Add one unit of weight on ``(u, a)`` at time ``t``."""
        self.advance(t)
        h = self.decay.halflife
        self._row_cache.pop(u, None)
        self._col_cache.pop(a, None)
        row = self._out.setdefault(u, {})
        edge = row.get(a)
        if edge is None:
            edge = _Lazy(1.0, t)
            row[a] = edge
            self._in.setdefault(a, {})[u] = edge
            self.n_edges += 1
        else:
            edge.value = edge.value * 2.0 ** ((edge.last - t) / h) + 1.0
            edge.last = t
        self._push(u, a, edge, self._due(edge))
        for sums, node in ((self._out_sum, u), (self._in_sum, a)):
            agg = sums.get(node)
            if agg is None:
                sums[node] = _Lazy(1.0, t)
            else:
                agg.value = agg.value * 2.0 ** ((agg.last - t) / h) + 1.0
                agg.last = t

    # -- queries -------------------------------------------------------------

    def _at(self, t: float | None) -> float:
        if t is not None and t != self.clock:
            self.advance(t)
        return self.clock

    def weight(self, u, a, t: float | None = None) -> float:
        t = self._at(t)
        edge = self._out.get(u, {}).get(a)
        if edge is None:
            return 0.0
        return edge.value * 2.0 ** ((edge.last - t) / self.decay.halflife)

    def weighted_out(self, u, t: float | None = None) -> float:
        t = self._at(t)
        agg = self._out_sum.get(u)
        if agg is None:
            return 0.0
        return agg.value * 2.0 ** ((agg.last - t) / self.decay.halflife)

    def weighted_in(self, a, t: float | None = None) -> float:
        t = self._at(t)
        agg = self._in_sum.get(a)
        if agg is None:
            return 0.0
        return agg.value * 2.0 ** ((agg.last - t) / self.decay.halflife)

    def out_weights(self, u) -> dict:
        """``{article: weight}`` for user ``u`` at the current clock (shared; do not mutate)."""
        cached = self._row_cache.get(u)
        if cached is None:
            t, h = self.clock, self.decay.halflife
            cached = {a: e.value * 2.0 ** ((e.last - t) / h) for a, e in self._out.get(u, {}).items()}
            self._row_cache[u] = cached
        return cached

    def in_weights(self, a) -> dict:
        """``{user: weight}`` for article ``a`` at the current clock (shared; do not mutate)."""
        cached = self._col_cache.get(a)
        if cached is None:
            t, h = self.clock, self.decay.halflife
            cached = {u: e.value * 2.0 ** ((e.last - t) / h) for u, e in self._in.get(a, {}).items()}
            self._col_cache[a] = cached
        return cached

    def out_neighbors(self, u, t: float | None = None) -> Iterator[tuple[Hashable, float]]:
        """Articles edited by ``u`` with their current weights."""
        t = self._at(t)
        h = self.decay.halflife
        for a, edge in self._out.get(u, {}).items():
            yield a, edge.value * 2.0 ** ((edge.last - t) / h)

    def in_neighbors(self, a, t: float | None = None) -> Iterator[tuple[Hashable, float]]:
        """Users who edited ``a`` with their current weights."""
        t = self._at(t)
        h = self.decay.halflife
        for u, edge in self._in.get(a, {}).items():
            yield u, edge.value * 2.0 ** ((edge.last - t) / h)

    def neighbors(self, node, t: float | None = None, side: str = "user"):
        if side == "user":
            return self.out_neighbors(node, t)
        if side == "article":
            return self.in_neighbors(node, t)
        raise ValueError(f"side must be 'user' or 'article', got {side!r}")

    def out_degree(self, u) -> int:
        return len(self._out.get(u, ()))

    def in_degree(self, a) -> int:
        return len(self._in.get(a, ()))

    def edges(self, t: float | None = None) -> Iterator[tuple[Hashable, Hashable, float]]:
        t = self._at(t)
        h = self.decay.halflife
        for u, row in self._out.items():
            for a, edge in row.items():
                yield u, a, edge.value * 2.0 ** ((edge.last - t) / h)

    def dump(self, fh: IO[str], delimiter: str = ",") -> None:
        """Write raw edge state (value at last touch, last touch) for debugging."""
        fh.write(f"user{delimiter}article{delimiter}value{delimiter}last_touch\n")
        for u, row in self._out.items():
            for a, edge in row.items():
                fh.write(f"{u}{delimiter}{a}{delimiter}{edge.value!r}{delimiter}{edge.last!r}\n")
