"""Reading and writing dyadic event files.

An event file is UTF-8 delimited text with columns ``source,target,time``.
Lines starting with ``#`` are comments. Times are integer epoch seconds or
ISO-8601 strings; fractional seconds are truncated.
"""

from __future__ import annotations

import datetime as _dt
import math
from pathlib import Path
from typing import IO, Iterable, Iterator, NamedTuple


class EventFormatError(ValueError):
    """Raised for malformed or out-of-order event files."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Event(NamedTuple):
    source: str
    target: str
    time: int
    seq: int


class NodeUniverse:
    """Append-only interning of user and article ids to dense indices.

    ``users`` and ``articles`` list the ids in order of first appearance, so
    ``users[i]`` is the id with index ``i``. The index of a node never changes.
    """

    def __init__(self):
        self.users: list[str] = []
        self.articles: list[str] = []
        self._user_index: dict[str, int] = {}
        self._article_index: dict[str, int] = {}
        self.user_first_seq: list[int] = []
        self.article_first_seq: list[int] = []

    @classmethod
    def closed(cls, users: Iterable[str], articles: Iterable[str]) -> "NodeUniverse":
        """Universe with every node registered up front (first seq -1)."""
        uni = cls()
        for u in users:
            uni.add_user(u, -1)
        for a in articles:
            uni.add_article(a, -1)
        return uni

    def add_user(self, uid: str, seq: int) -> int:
        idx = self._user_index.get(uid)
        if idx is None:
            idx = len(self.users)
            self._user_index[uid] = idx
            self.users.append(uid)
            self.user_first_seq.append(seq)
        return idx

    def add_article(self, aid: str, seq: int) -> int:
        idx = self._article_index.get(aid)
        if idx is None:
            idx = len(self.articles)
            self._article_index[aid] = idx
            self.articles.append(aid)
            self.article_first_seq.append(seq)
        return idx

    def observe(self, event: Event) -> tuple[int, int]:
        """Register both endpoints of ``event`` and return their indices."""
        return self.add_user(event.source, event.seq), self.add_article(event.target, event.seq)

    def user_index(self, uid: str) -> int | None:
        return self._user_index.get(uid)

    def article_index(self, aid: str) -> int | None:
        return self._article_index.get(aid)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_articles(self) -> int:
        return len(self.articles)

    @property
    def risk_set_size(self) -> int:
        return len(self.users) * len(self.articles)

    def __repr__(self):
        return f"NodeUniverse(n_users={self.n_users}, n_articles={self.n_articles})"


def parse_time(token: str) -> int:
    """Integer epoch seconds from an integer, decimal or ISO-8601 token."""
    token = token.strip()
    try:
        return int(token)
    except ValueError:
        pass
    try:
        value = float(token)
    except ValueError:
        value = None
    if value is not None:
        if not math.isfinite(value):
            raise ValueError(f"non-finite time {token!r}")
        return math.floor(value)
    iso = token[:-1] + "+00:00" if token.endswith(("Z", "z")) else token
    try:
        stamp = _dt.datetime.fromisoformat(iso)
    except ValueError:
        raise ValueError(f"cannot parse time {token!r}") from None
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=_dt.timezone.utc)
    return math.floor(stamp.timestamp())


def _read_lines(source: str | Path | IO[str], delimiter: str, header: bool,
                columns: tuple[int, int, int]) -> Iterator[tuple[int, str, str, int]]:
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8", newline="") as fh:
            yield from _read_lines(fh, delimiter, header, columns)
        return
    skip_header = header
    src_col, tgt_col, time_col = columns
    need = max(columns) + 1
    for lineno, raw in enumerate(source, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if skip_header:
            skip_header = False
            continue
        fields = line.split(delimiter)
        if len(fields) < need:
            raise EventFormatError(f"expected at least {need} fields, got {len(fields)}", lineno)
        try:
            t = parse_time(fields[time_col])
        except ValueError as exc:
            raise EventFormatError(str(exc), lineno) from None
        yield lineno, fields[src_col].strip(), fields[tgt_col].strip(), t


def iter_events(source: str | Path | IO[str], delimiter: str = ",", header: bool = False,
                columns: tuple[int, int, int] = (0, 1, 2)) -> Iterator[Event]:
    """Stream events from an already time-ordered file.

    Memory use is independent of the file length. A decreasing timestamp
    raises :class:`EventFormatError`; use :func:`parse_events` with
    ``sort=True`` for unordered input.
    """
    last = None
    for seq, (lineno, src, tgt, t) in enumerate(_read_lines(source, delimiter, header, columns)):
        if last is not None and t < last:
            raise EventFormatError(f"time {t} precedes previous time {last} (use sort=True)", lineno)
        last = t
        yield Event(src, tgt, t, seq)


def parse_events(source: str | Path | IO[str], delimiter: str = ",", header: bool = False,
                 sort: bool = False,
                 columns: tuple[int, int, int] = (0, 1, 2)) -> tuple[list[Event], NodeUniverse]:
    """Read an event file into a strictly ordered list plus its node universe.

    Events are ordered by ``(time, seq)`` where ``seq`` is the position in
    the file, so simultaneous events keep file order. With ``sort=True``
    out-of-order input is stably re-sorted instead of rejected.
    """
    if sort:
        events = [Event(src, tgt, t, seq) for seq, (_, src, tgt, t)
                  in enumerate(_read_lines(source, delimiter, header, columns))]
        events.sort(key=lambda e: (e.time, e.seq))
    else:
        events = list(iter_events(source, delimiter, header, columns))
    universe = NodeUniverse()
    for e in events:
        universe.observe(e)
    return events, universe


def write_events(events: Iterable[Event], dest: str | Path | IO[str], delimiter: str = ",",
                 comments: Iterable[str] = ()) -> None:
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            write_events(events, fh, delimiter, comments)
        return
    for c in comments:
        dest.write(f"# {c}\n")
    for e in events:
        dest.write(f"{e.source}{delimiter}{e.target}{delimiter}{e.time}\n")
