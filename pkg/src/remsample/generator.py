"""Desk-scale simulation of event streams from a known model.

Every user and article is in the risk set from the start. At each step the
five statistics are evaluated for every dyad and the next event dyad is
drawn with probability proportional to ``exp(theta . s)``; events are spaced
by a fixed time step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from remsample.estimator import StrataDesign
from remsample.events import Event, NodeUniverse
from remsample.network import DecayConfig
from remsample.statistics import STAT_NAMES


@dataclass(frozen=True)
class SimConfig:
    n_users: int = 30
    n_articles: int = 30
    theta: tuple[float, ...] = (1.0, 0.8, 0.6, 0.3, -0.1)
    n_events: int = 1000
    time_step: int | None = None  # default: halflife / 50
    decay: DecayConfig = field(default_factory=DecayConfig)
    seed: int = 0
    start_time: int = 0
    max_risk_set: int = 10**6

    def __post_init__(self):
        if self.n_users < 1 or self.n_articles < 1 or self.n_users * self.n_articles < 2:
            raise ValueError("need at least two dyads")
        if len(self.theta) != len(STAT_NAMES):
            raise ValueError(f"theta must have {len(STAT_NAMES)} entries")
        if self.time_step is not None and self.time_step <= 0:
            raise ValueError("time_step must be positive")

    @property
    def step(self) -> int:
        if self.time_step is not None:
            return int(self.time_step)
        return max(1, int(round(self.decay.halflife / 50)))

    def echo(self) -> dict:
        return {"n_users": self.n_users, "n_articles": self.n_articles,
                "theta": " ".join(repr(float(x)) for x in self.theta), "n_events": self.n_events,
                "time_step": self.step, "halflife": self.decay.halflife,
                "epsilon": self.decay.prune_epsilon, "seed": self.seed, "start_time": self.start_time}


@dataclass
class Simulation:
    events: list[Event]
    universe: NodeUniverse
    case: np.ndarray  # flat dyad index u * n_articles + a of each event
    stats: np.ndarray | None = None  # (n_events, n_users * n_articles, 5)

    def exhaustive_design(self) -> StrataDesign:
        """Full-risk-set strata (every dyad at every event)."""
        if self.stats is None:
            raise ValueError("simulate(..., record=True) is required")
        return StrataDesign.from_blocks(self.stats, self.case)


@numba.njit(cache=True)
def _run(n_u, n_a, theta, n_events, start, step, halflife, eps, uniforms, record):
    value = np.zeros((n_u, n_a))
    last = np.zeros((n_u, n_a))
    w = np.zeros((n_u, n_a))
    cyc = np.zeros((n_u, n_a))
    case = np.empty(n_events, np.int64)
    out = np.zeros((n_events if record else 0, n_u * n_a, 5))
    s = np.zeros((n_u * n_a, 5))
    row_nz = np.empty((n_u, n_a), np.int64)
    col_nz = np.empty((n_a, n_u), np.int64)
    deg_u = np.zeros(n_u, np.int64)
    deg_a = np.zeros(n_a, np.int64)
    out_sum = np.zeros(n_u)
    in_sum = np.zeros(n_a)
    eta = np.empty(n_u * n_a)
    for i in range(n_events):
        t = start + i * step
        deg_u[:] = 0
        deg_a[:] = 0
        out_sum[:] = 0.0
        in_sum[:] = 0.0
        for u in range(n_u):
            for a in range(n_a):
                x = 0.0
                if value[u, a] > 0.0:
                    x = value[u, a] * 2.0 ** ((last[u, a] - t) / halflife)
                    if x < eps:
                        x = 0.0
                        value[u, a] = 0.0
                w[u, a] = x
                if x > 0.0:
                    row_nz[u, deg_u[u]] = a
                    deg_u[u] += 1
                    col_nz[a, deg_a[a]] = u
                    deg_a[a] += 1
                    out_sum[u] += x
                    in_sum[a] += x
        cyc.fill(0.0)
        # enumerate three-paths u - a2 - u2 - a with all three weights non-zero
        for u in range(n_u):
            for j in range(deg_u[u]):
                a2 = row_nz[u, j]
                x = w[u, a2]
                for l in range(deg_a[a2]):
                    u2 = col_nz[a2, l]
                    if u2 == u:
                        continue
                    xz = min(x, w[u2, a2])
                    for r in range(deg_u[u2]):
                        a = row_nz[u2, r]
                        if a != a2:
                            cyc[u, a] += min(xz, w[u2, a])
        top = -np.inf
        for u in range(n_u):
            act = np.log1p(out_sum[u])
            for a in range(n_a):
                pop = np.log1p(in_sum[a])
                d = u * n_a + a
                s[d, 0] = np.log1p(w[u, a])
                s[d, 1] = pop
                s[d, 2] = act
                s[d, 3] = np.log1p(cyc[u, a])
                s[d, 4] = pop * act
                e = 0.0
                for k in range(5):
                    e += theta[k] * s[d, k]
                eta[d] = e
                if e > top:
                    top = e
        total = 0.0
        for d in range(n_u * n_a):
            eta[d] = np.exp(eta[d] - top)
            total += eta[d]
        target = uniforms[i] * total
        acc = 0.0
        pick = n_u * n_a - 1
        for d in range(n_u * n_a):
            acc += eta[d]
            if acc > target:
                pick = d
                break
        case[i] = pick
        if record:
            out[i] = s
        u = pick // n_a
        a = pick % n_a
        value[u, a] = w[u, a] + 1.0
        last[u, a] = t
    return case, out


def simulate(cfg: SimConfig, record: bool = False) -> Simulation:
    """Generate ``cfg.n_events`` events; with ``record`` keep every dyad's statistics."""
    n_dyads = cfg.n_users * cfg.n_articles
    if n_dyads > cfg.max_risk_set:
        raise ValueError(f"risk set of {n_dyads} dyads exceeds max_risk_set={cfg.max_risk_set}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
    uniforms = rng.random(cfg.n_events)
    case, stats = _run(cfg.n_users, cfg.n_articles, np.asarray(cfg.theta, dtype=float), cfg.n_events,
                       cfg.start_time, cfg.step, float(cfg.decay.halflife), float(cfg.decay.prune_epsilon),
                       uniforms, record)
    universe = NodeUniverse.closed([f"u{i}" for i in range(cfg.n_users)],
                                   [f"a{j}" for j in range(cfg.n_articles)])
    users, articles = universe.users, universe.articles
    events = [Event(users[c // cfg.n_articles], articles[c % cfg.n_articles], cfg.start_time + i * cfg.step, i)
              for i, c in enumerate(case.tolist())]
    return Simulation(events, universe, case, stats if record else None)
