"""Event sampling SE(p) and case-control sampling SR_i(m).

Event inclusion uses a PCG64 stream seeded through
:class:`numpy.random.SeedSequence`; event ``i`` is kept when ``U_i < p`` for a
fixed uniform ``U_i``, so samples for two values of ``p`` under one seed are
nested. Controls of event ``seq`` come from a BLAKE2b counter stream keyed by
``(seed, seq)``; they do not depend on ``p`` or on which other events were
sampled.
"""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

RNG_ALGORITHM = "pcg64+blake2b-ctr"

OK, CLAMPED, DEGENERATE = "ok", "clamped", "degenerate"


@dataclass(frozen=True)
class SampleConfig:
    p: float = 1e-4
    m: int = 5
    seed: int = 0
    rng_algorithm: str = RNG_ALGORITHM

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise ValueError(f"p must lie in (0, 1], got {self.p}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")
        if self.rng_algorithm != RNG_ALGORITHM:
            raise ValueError(f"unsupported rng {self.rng_algorithm!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def echo(self) -> dict:
        return {"seed": self.seed, "p": self.p, "m": self.m, "rng": self.rng_algorithm}


@dataclass
class Stratum:
    event_seq: int
    case: tuple[int, int]
    controls: list[tuple[int, int]] = field(default_factory=list)
    risk_set_size: int = 0
    status: str = OK


def _generator(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


class EventSampler:
    """Sequential inclusion decisions for events 0, 1, 2, ..."""

    def __init__(self, cfg: SampleConfig, block: int = 1 << 14):
        self.p = cfg.p
        self._rng = _generator(cfg.seed, 0)
        self._block = block
        self._buf: list[bool] = []
        self._pos = 0

    def next(self) -> bool:
        if self._pos == len(self._buf):
            self._buf = (self._rng.random(self._block) < self.p).tolist()
            self._pos = 0
        self._pos += 1
        return self._buf[self._pos - 1]


def sample_events(n: int, cfg: SampleConfig) -> np.ndarray:
    """Boolean inclusion vector of length ``n``; each entry is True with probability p."""
    if cfg.p == 1:
        return np.ones(n, dtype=bool)
    sampler = EventSampler(cfg)
    return np.array([sampler.next() for _ in range(n)], dtype=bool)


class DyadStream:
    """Counter-mode BLAKE2b stream of 64-bit words keyed by ``(seed, seq)``."""

    _WORDS = struct.Struct("<8Q")

    def __init__(self, seed: int, seq: int):
        self._key = f"{seed}:{seq}:".encode()
        self._block = 0
        self._words: tuple[int, ...] = ()
        self._pos = 0

    def word(self) -> int:
        if self._pos == len(self._words):
            digest = hashlib.blake2b(self._key + str(self._block).encode(), digest_size=64).digest()
            self._words = self._WORDS.unpack(digest)
            self._block += 1
            self._pos = 0
        self._pos += 1
        return self._words[self._pos - 1]

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` by rejection, exactly unbiased."""
        limit = (1 << 64) - (1 << 64) % n
        while True:
            x = self.word()
            if x < limit:
                return x % n


def control_stream(cfg: SampleConfig, seq: int) -> DyadStream:
    return DyadStream(cfg.seed, seq)


def sample_controls(n_users: int, n_articles: int, case: tuple[int, int], m: int,
                    rng: DyadStream) -> tuple[list[tuple[int, int]], str]:
    """Draw ``m`` distinct non-case dyads uniformly from the ``n_users x n_articles`` risk set.

    Returns ``(controls, status)``. If fewer than ``m`` non-case dyads exist
    all of them are returned with status ``"clamped"``; a risk set holding
    only the case gives ``([], "degenerate")``.
    """
    available = n_users * n_articles - 1
    cu, ca = case
    if not (0 <= cu < n_users and 0 <= ca < n_articles):
        raise ValueError(f"case {case} outside the {n_users}x{n_articles} risk set")
    if available <= 0:
        return [], DEGENERATE
    if m >= available:
        controls = [(u, a) for u in range(n_users) for a in range(n_articles) if (u, a) != case]
        return controls, CLAMPED if m > available else OK
    if 2 * m > available:
        # dense regime: partial Fisher-Yates over the non-case flat indices
        case_flat = cu * n_articles + ca
        pool = list(range(available))
        for i in range(m):
            j = i + rng.below(available - i)
            pool[i], pool[j] = pool[j], pool[i]
        flat = [f + (f >= case_flat) for f in pool[:m]]
        return [(f // n_articles, f % n_articles) for f in flat], OK
    chosen: list[tuple[int, int]] = []
    seen = {case}
    while len(chosen) < m:
        dyad = (rng.below(n_users), rng.below(n_articles))
        if dyad not in seen:
            seen.add(dyad)
            chosen.append(dyad)
    return chosen, OK


def draw_stratum(seq: int, case: tuple[int, int], n_users: int, n_articles: int,
                 cfg: SampleConfig) -> Stratum:
    controls, status = sample_controls(n_users, n_articles, case, cfg.m, control_stream(cfg, seq))
    if status == DEGENERATE:
        log.debug("event %d: risk set holds only the case", seq)
    return Stratum(seq, case, controls, n_users * n_articles, status)
