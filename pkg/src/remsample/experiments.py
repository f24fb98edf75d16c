"""Sampling-variability experiments and diagnostic tables.

Four designs are supported: repeated sampling with fixed ``(p, m)``,
halving ``p``, doubling ``m``, and trading ``m`` against ``p`` under a fixed
expected number of observations ``(m + 1) * p``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import IO, NamedTuple, Sequence

import numpy as np

from remsample.estimator import EstimationError, FitResult, fit, short_name
from remsample.events import Event, NodeUniverse
from remsample.network import DecayConfig
from remsample.replay import ObservationTable, fmt, replay
from remsample.sampling import SampleConfig
from remsample.statistics import STAT_NAMES

log = logging.getLogger(__name__)

KINDS = ("fixed", "vary_p", "vary_m", "fixed_budget")
DEFAULT_INDICES = {"fixed": (0,), "vary_p": tuple(range(1, 11)), "vary_m": tuple(range(0, 8)),
                   "fixed_budget": tuple(range(1, 9))}
DEFAULT_REPLICATES = {"fixed": 100, "vary_p": 10, "vary_m": 10, "fixed_budget": 10}
ZERO = 1e-12


def _exact(x) -> Fraction:
    return Fraction(repr(x)) if isinstance(x, float) else Fraction(x)


@dataclass(frozen=True)
class DesignSpec:
    """Grid of sample parameters with a number of replicates per cell.

    ``p_fixed`` is the event probability of the vary_m design (default
    ``p0 / 10``) and ``budget`` the constant ``(m + 1) * p`` of the
    fixed_budget design (default ``p0 * (m0 + 1)``).
    """

    kind: str = "fixed"
    p0: float = 1e-4
    m0: int = 5
    replicates: int | None = None
    seed: int = 0
    indices: tuple[int, ...] | None = None
    p_fixed: float | None = None
    budget: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown design {self.kind!r}; expected one of {KINDS}")
        if self.replicates is not None and self.replicates < 1:
            raise ValueError("replicates must be positive")

    @property
    def n_replicates(self) -> int:
        return self.replicates if self.replicates is not None else DEFAULT_REPLICATES[self.kind]

    def echo(self) -> dict:
        return {"design": self.kind, "p0": self.p0, "m0": self.m0, "replicates": self.n_replicates,
                "seed": self.seed, "indices": " ".join(map(str, self.cells_indices())),
                "p_fixed": self.p_fixed, "budget": self.budget}

    def cells_indices(self) -> tuple[int, ...]:
        return tuple(self.indices) if self.indices is not None else DEFAULT_INDICES[self.kind]


class Cell(NamedTuple):
    position: int
    index: int
    p: float
    m: int


def design_cells(spec: DesignSpec) -> list[Cell]:
    p0 = _exact(spec.p0)
    cells = []
    for pos, i in enumerate(spec.cells_indices()):
        if spec.kind == "fixed":
            p, m = p0, spec.m0
        elif spec.kind == "vary_p":
            p, m = p0 / 2**i, spec.m0
        elif spec.kind == "vary_m":
            p = _exact(spec.p_fixed) if spec.p_fixed is not None else p0 / 10
            m = 2**i
        else:
            budget = _exact(spec.budget) if spec.budget is not None else p0 * (spec.m0 + 1)
            m = 2**i
            p = budget / (m + 1)
        cells.append(Cell(pos, i, float(p), int(m)))
    return cells


def replicate_seed(root: int, cell_position: int, replicate: int) -> int:
    ss = np.random.SeedSequence(root, spawn_key=(cell_position, replicate))
    return int(ss.generate_state(1, np.uint64)[0])


class SummaryRow(NamedTuple):
    effect: str
    quantity: str
    min: float
    q1: float
    median: float
    mean: float
    q3: float
    max: float
    sd: float
    n: int


def summarize(values: Sequence[float], effect: str = "", quantity: str = "") -> SummaryRow:
    """Seven-number summary; quartiles interpolate order statistics at 1 + (n-1)q.

    ``sd`` uses the n-1 denominator and is NaN for a single value.
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("cannot summarize an empty list")
    q1, med, q3 = np.percentile(x, [25, 50, 75], method="linear")
    sd = float(np.std(x, ddof=1)) if x.size > 1 else float("nan")
    return SummaryRow(effect, quantity, float(x.min()), float(q1), float(med), float(x.mean()),
                      float(q3), float(x.max()), sd, int(x.size))


@dataclass
class DensityReport:
    names: tuple[str, ...]
    all: np.ndarray
    events: np.ndarray
    controls: np.ndarray
    counts: np.ndarray  # nonzero counts: rows = (all, events, controls), cols = statistics
    totals: np.ndarray  # (n_all, n_events, n_controls)
    threshold: float = 1e-3

    @property
    def flagged(self) -> list[str]:
        low = (self.events < self.threshold) | (self.controls < self.threshold)
        return [n for n, f in zip(self.names, low) if f]

    def merged(self, other: "DensityReport") -> "DensityReport":
        return _density_from_counts(self.names, self.counts + other.counts,
                                    self.totals + other.totals, self.threshold)

    def write(self, dest: IO[str]) -> None:
        dest.write("statistic,density_obs,density_events,density_controls\n")
        for i, n in enumerate(self.names):
            dest.write(f"{n},{fmt(self.all[i])},{fmt(self.events[i])},{fmt(self.controls[i])}\n")


def _density_from_counts(names, counts, totals, threshold) -> DensityReport:
    with np.errstate(invalid="ignore", divide="ignore"):
        dens = counts / totals[:, None].astype(float)
    return DensityReport(tuple(names), dens[0], dens[1], dens[2], counts, totals, threshold)


def density_diagnostic(table: ObservationTable, threshold: float = 1e-3,
                       warn: bool = True) -> DensityReport:
    """Share of rows with a non-zero value, over all rows, cases and controls."""
    if len(table) == 0:
        raise ValueError("empty observation table")
    nz = np.abs(table.stats) >= ZERO
    case = table.is_case
    counts = np.vstack([nz.sum(axis=0), nz[case].sum(axis=0), nz[~case].sum(axis=0)])
    totals = np.array([len(table), int(case.sum()), int((~case).sum())])
    report = _density_from_counts(STAT_NAMES, counts, totals, threshold)
    if warn:
        for name in report.flagged:
            log.warning("near-degenerate statistic %r: non-zero density among events or controls "
                        "below %g; inspect its distribution separately for events and controls",
                        name, threshold)
    return report


def covariance_diagnostic(data, names: Sequence[str] = STAT_NAMES) -> np.ndarray:
    """Matrix with correlations above, variances on and covariances below the diagonal.

    Correlations involving a constant column are NaN.
    """
    X = data.stats if isinstance(data, ObservationTable) else np.asarray(data, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least two rows for sample moments")
    cov = np.cov(X, rowvar=False, ddof=1)
    var = np.diag(cov)
    const = var <= 0
    for i in np.flatnonzero(const):
        log.warning("statistic %r is constant; correlation undefined", names[i])
    with np.errstate(invalid="ignore", divide="ignore"):
        sd = np.where(const, np.nan, np.sqrt(np.where(const, 1.0, var)))
        corr = cov / np.outer(sd, sd)
    out = np.tril(cov)
    iu = np.triu_indices(len(var), 1)
    out[iu] = corr[iu]
    return out


def write_covariance(matrix: np.ndarray, dest: IO[str], names: Sequence[str] = STAT_NAMES) -> None:
    dest.write("," + ",".join(names) + "\n")
    for i, n in enumerate(names):
        cells = ["" if np.isnan(v) else fmt(v) for v in matrix[i]]
        dest.write(n + "," + ",".join(cells) + "\n")


# -- running designs ----------------------------------------------------------

@dataclass
class ReplicateResult:
    cell: Cell
    replicate: int
    seed: int
    n_strata: int
    result: FitResult | None = None
    error: str | None = None
    density: DensityReport | None = None

    @property
    def ok(self) -> bool:
        return self.result is not None


@dataclass
class CellSummary:
    cell: Cell
    rows: list[SummaryRow] = field(default_factory=list)
    n_ok: int = 0
    n_failed: int = 0

    @property
    def status(self) -> str:
        if self.n_ok == 0:
            return "all_failed"
        return "ok" if self.n_failed == 0 else "partial"


@dataclass
class DesignResult:
    spec: DesignSpec
    cells: list[Cell]
    replicates: list[ReplicateResult]
    summaries: list[CellSummary]

    def for_cell(self, position: int) -> list[ReplicateResult]:
        return [r for r in self.replicates if r.cell.position == position]

    def write_summary(self, dest: IO[str]) -> None:
        dest.write("cell,index,p,m,effect,quantity,min,q1,median,mean,q3,max,sd,n\n")
        for cs in self.summaries:
            c = cs.cell
            for r in cs.rows:
                nums = ",".join("" if np.isnan(v) else fmt(v) for v in r[2:9])
                dest.write(f"{c.position},{c.index},{fmt(c.p)},{c.m},{short_name(r.effect)},"
                           f"{r.quantity},{nums},{r.n}\n")

    def write_replicates(self, dest: IO[str]) -> None:
        names = STAT_NAMES
        head = ["cell", "index", "p", "m", "replicate", "seed", "n_strata", "status"]
        head += [f"{q}.{n}" for q in ("theta", "se", "z") for n in names]
        head += ["loglik", "aic", "n_obs", "error"]
        dest.write(",".join(head) + "\n")
        for r in self.replicates:
            c = r.cell
            row = [str(c.position), str(c.index), fmt(c.p), str(c.m), str(r.replicate), str(r.seed),
                   str(r.n_strata)]
            if r.ok:
                f = r.result
                row += ["ok"] + [fmt(v) for v in (*f.theta, *f.se, *f.z)]
                row += [fmt(f.loglik), fmt(f.aic), str(f.n_obs), ""]
            else:
                row += ["failed"] + [""] * (3 * len(names) + 3) + [r.error.replace(",", ";")]
            dest.write(",".join(row) + "\n")

    def write_boxplot(self, dest: IO[str]) -> None:
        """Per cell and effect: quartiles of the estimates plus 1.5 IQR fences and whisker ends."""
        dest.write("cell,index,p,m,effect,min,q1,median,q3,max,lower_fence,upper_fence,"
                   "whisker_low,whisker_high\n")
        for c in self.cells:
            fits = [r.result for r in self.for_cell(c.position) if r.ok]
            if not fits:
                continue
            for j, name in enumerate(STAT_NAMES):
                v = np.array([f.theta[j] for f in fits])
                q1, med, q3 = np.percentile(v, [25, 50, 75])
                lo, hi = q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1)
                inside = v[(v >= lo) & (v <= hi)]
                nums = [v.min(), q1, med, q3, v.max(), lo, hi, inside.min(), inside.max()]
                dest.write(f"{c.position},{c.index},{fmt(c.p)},{c.m},{short_name(name)},"
                           + ",".join(fmt(x) for x in nums) + "\n")

    def write(self, out_dir: str | Path, comments: Sequence[str] = ()) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, writer in (("summary.csv", self.write_summary), ("replicates.csv", self.write_replicates),
                             ("boxplot.csv", self.write_boxplot)):
            with open(out / name, "w", encoding="utf-8", newline="") as fh:
                for c in comments:
                    fh.write(f"# {c}\n")
                writer(fh)


def summarize_cell(cell: Cell, reps: Sequence[ReplicateResult]) -> CellSummary:
    fits = [r.result for r in reps if r.ok]
    cs = CellSummary(cell, n_ok=len(fits), n_failed=len(reps) - len(fits))
    if not fits:
        log.warning("cell %d (p=%g, m=%d): all %d replicates failed", cell.index, cell.p, cell.m, len(reps))
        return cs
    for j, name in enumerate(fits[0].names):
        for q, attr in (("par", "theta"), ("se", "se"), ("z", "z")):
            cs.rows.append(summarize([getattr(f, attr)[j] for f in fits], name, q))
    return cs


def _run_group(events, decay, population, items, fit_kwargs, cutoff):
    configs = [SampleConfig(cell.p, cell.m, seed) for cell, _, seed in items]
    tables = replay(events, configs, decay, population, cutoff) if configs else []
    out = []
    for (cell, rep, seed), table in zip(items, tables):
        rr = ReplicateResult(cell, rep, seed, table.n_strata)
        rr.density = density_diagnostic(table, warn=False) if len(table) else None
        try:
            rr.result = fit(table, **fit_kwargs)
        except (EstimationError, ValueError, np.linalg.LinAlgError) as exc:
            rr.error = f"{type(exc).__name__}: {exc}"
        out.append(rr)
    return out


def run_design(events: Sequence[Event], spec: DesignSpec, decay: DecayConfig | None = None,
               population: NodeUniverse | None = None, workers: int = 1,
               fit_kwargs: dict | None = None, four_cycle_cutoff: int = 10**6,
               density_threshold: float = 1e-3) -> DesignResult:
    """Sample, replay, fit and summarize every replicate of every cell of ``spec``.

    Replicates are split into ``workers`` groups, each served by one replay
    pass; results are ordered by (cell, replicate) whatever the grouping.
    Failed fits are kept with their error message.
    """
    events = list(events)
    decay = decay or DecayConfig()
    cells = design_cells(spec)
    items = [(c, r, replicate_seed(spec.seed, c.position, r))
             for c in cells for r in range(spec.n_replicates)]
    fit_kwargs = fit_kwargs or {}
    workers = max(1, min(workers, len(items)))
    if workers == 1:
        results = _run_group(events, decay, population, items, fit_kwargs, four_cycle_cutoff)
    else:
        groups = [items[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(_run_group, events, decay, population, g, fit_kwargs, four_cycle_cutoff)
                       for g in groups]
            results = [r for fut in futures for r in fut.result()]
    results.sort(key=lambda r: (r.cell.position, r.replicate))
    summaries = [summarize_cell(c, [r for r in results if r.cell.position == c.position]) for c in cells]

    densities = [r.density for r in results if r.density is not None]
    if densities:
        total = densities[0]
        for d in densities[1:]:
            total = total.merged(d)
        total.threshold = density_threshold
        for name in total.flagged:
            log.warning("near-degenerate statistic %r across all samples; check its distribution "
                        "separately for sampled events and sampled controls", name)
    return DesignResult(spec, cells, results, summaries)
