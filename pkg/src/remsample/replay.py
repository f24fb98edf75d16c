"""Single-pass replay producing case-control observation tables.

Every event updates the network of past events. Events selected by a
sample configuration additionally emit one stratum: the event dyad (the
case) plus ``m`` control dyads from the current risk set, with statistics
evaluated on the network just before the event is applied.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from remsample.events import Event, NodeUniverse
from remsample.network import DecayConfig, PastEventNetwork
from remsample.sampling import CLAMPED, DEGENERATE, EventSampler, SampleConfig, draw_stratum
from remsample.statistics import DEFAULT_FOUR_CYCLE_CUTOFF, STAT_NAMES, stat_vector

log = logging.getLogger(__name__)

COLUMNS = ("stratum", "is_case", "user", "article") + STAT_NAMES + ("time",)


def fmt(x) -> str:
    """Shortest text that round-trips to 17 significant digits."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


@dataclass
class ObservationTable:
    """Columnar observation rows; strata occupy contiguous row ranges.

    ``user`` and ``article`` hold indices into ``user_ids`` and
    ``article_ids``. ``meta`` echoes the sampling and decay configuration.
    """

    stratum: np.ndarray
    is_case: np.ndarray
    user: np.ndarray
    article: np.ndarray
    stats: np.ndarray
    time: np.ndarray
    user_ids: Sequence[str] = ()
    article_ids: Sequence[str] = ()
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.stratum)

    @property
    def n_strata(self) -> int:
        if len(self.stratum) == 0:
            return 0
        return int(np.count_nonzero(np.diff(self.stratum)) + 1)

    def column(self, name: str) -> np.ndarray:
        return self.stats[:, STAT_NAMES.index(name)]

    def design(self, columns: Sequence[str] = STAT_NAMES):
        from remsample.estimator import StrataDesign

        idx = [STAT_NAMES.index(c) for c in columns]
        return StrataDesign.from_rows(self.stratum, self.is_case, self.stats[:, idx], names=tuple(columns))

    def header_lines(self) -> list[str]:
        return [f"{k}={v}" for k, v in self.meta.items()]

    def write(self, dest: str | Path | IO[str], comments: Iterable[str] = ()) -> None:
        if isinstance(dest, (str, Path)):
            with open(dest, "w", encoding="utf-8", newline="") as fh:
                self.write(fh, comments)
            return
        for c in list(comments) + self.header_lines():
            dest.write(f"# {c}\n")
        dest.write(",".join(COLUMNS) + "\n")
        users, articles = self.user_ids, self.article_ids
        for i in range(len(self)):
            s = self.stats[i]
            dest.write(",".join((
                str(int(self.stratum[i])), "1" if self.is_case[i] else "0",
                users[self.user[i]], articles[self.article[i]],
                *(f"{v:.17g}" for v in s), fmt(self.time[i]))) + "\n")

    @classmethod
    def read(cls, source: str | Path | IO[str]) -> "ObservationTable":
        if isinstance(source, (str, Path)):
            with open(source, encoding="utf-8") as fh:
                return cls.read(fh)
        meta: dict = {}
        uni = NodeUniverse()
        rows = []
        header_seen = False
        for lineno, line in enumerate(source, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            if line.startswith("#"):
                key, sep, value = line[1:].strip().partition("=")
                if sep:
                    meta[key] = value
                continue
            fields = line.split(",")
            if not header_seen:
                if tuple(fields) != COLUMNS:
                    raise ValueError(f"line {lineno}: unexpected header {line!r}")
                header_seen = True
                continue
            if len(fields) != len(COLUMNS):
                raise ValueError(f"line {lineno}: expected {len(COLUMNS)} fields")
            rows.append((int(fields[0]), fields[1] == "1", uni.add_user(fields[2], -1),
                         uni.add_article(fields[3], -1), *map(float, fields[4:9]), float(fields[9])))
        arr = np.array(rows, dtype=float).reshape(-1, len(COLUMNS))
        return cls(arr[:, 0].astype(np.int64), arr[:, 1].astype(bool), arr[:, 2].astype(np.int64),
                   arr[:, 3].astype(np.int64), np.ascontiguousarray(arr[:, 4:9]),
                   arr[:, 9].astype(np.int64), uni.users, uni.articles, meta)


class _Builder:
    def __init__(self, cfg: SampleConfig):
        self.cfg = cfg
        self.rows: list[tuple] = []
        self.stats: list[tuple] = []
        self.n_degenerate = 0
        self.n_clamped = 0
        self.n_strata = 0

    def finish(self, universe: NodeUniverse, decay: DecayConfig) -> ObservationTable:
        rows = np.array(self.rows, dtype=np.int64).reshape(-1, 5)
        stats = np.array(self.stats, dtype=float).reshape(-1, len(STAT_NAMES))
        meta = dict(self.cfg.echo(), halflife=decay.halflife, epsilon=decay.prune_epsilon,
                    n_strata=self.n_strata, n_degenerate=self.n_degenerate, n_clamped=self.n_clamped)
        return ObservationTable(rows[:, 0], rows[:, 1].astype(bool), rows[:, 2], rows[:, 3],
                                stats, rows[:, 4], list(universe.users), list(universe.articles), meta)


def replay(events: Iterable[Event], configs: SampleConfig | Sequence[SampleConfig],
           decay: DecayConfig | None = None, population: NodeUniverse | None = None,
           four_cycle_cutoff: int = DEFAULT_FOUR_CYCLE_CUTOFF):
    """Replay ``events`` once and return one observation table per config.

    The risk set at an event is every user seen at or before it times every
    article seen at or before it. Nodes registered in ``population`` belong
    to the risk set from the start (closed population). With a single
    :class:`SampleConfig` a single table is returned.
    """
    single = isinstance(configs, SampleConfig)
    cfgs = [configs] if single else list(configs)
    decay = decay or DecayConfig()
    net = PastEventNetwork(decay)
    universe = NodeUniverse.closed(population.users, population.articles) if population else NodeUniverse()
    samplers = [EventSampler(c) if c.p < 1 else None for c in cfgs]
    builders = [_Builder(c) for c in cfgs]

    for e in events:
        t = e.time
        net.advance(t)
        u, a = universe.observe(e)
        nu, na = universe.n_users, universe.n_articles
        cache: dict[tuple[int, int], tuple] = {}
        for cfg, sampler, b in zip(cfgs, samplers, builders):
            if sampler is not None and not sampler.next():
                continue
            st = draw_stratum(e.seq, (u, a), nu, na, cfg)
            if st.status == DEGENERATE:
                b.n_degenerate += 1
                continue
            if st.status == CLAMPED:
                b.n_clamped += 1
            b.n_strata += 1
            for dyad, case in [((u, a), 1)] + [(c, 0) for c in st.controls]:
                sv = cache.get(dyad)
                if sv is None:
                    sv = cache[dyad] = stat_vector(net, dyad[0], dyad[1], None, four_cycle_cutoff)
                b.rows.append((e.seq, case, dyad[0], dyad[1], t))
                b.stats.append(sv)
        net.apply_event(u, a, t)

    tables = [b.finish(universe, decay) for b in builders]
    for tab in tables:
        if tab.meta["n_degenerate"]:
            log.warning("dropped %d degenerate strata (seed=%s p=%s m=%s)", tab.meta["n_degenerate"],
                        tab.meta["seed"], tab.meta["p"], tab.meta["m"])
    return tables[0] if single else tables
