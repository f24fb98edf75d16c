"""Maximum sampled partial likelihood (conditional logit over strata).

Each stratum contributes ``theta . x_case - log sum_j exp(theta . x_j)``.
The maximizer is found by Newton-Raphson with step halving; standard errors
come from the inverse observed information at the optimum.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Sequence

import numba
import numpy as np
from scipy.optimize import linprog

from remsample.statistics import SHORT_NAMES, STAT_NAMES

log = logging.getLogger(__name__)

class EstimationError(ValueError):
    def __init__(self, message: str, coordinates: Sequence[str] = ()):
        self.coordinates = tuple(coordinates)
        if coordinates:
            message = f"{message} (coordinates: {', '.join(coordinates)})"
        super().__init__(message)


class SeparationError(EstimationError):
    """The likelihood increases without bound along some direction."""


class NonIdentifiableError(EstimationError):
    """The likelihood is flat along some direction."""


@dataclass
class StrataDesign:
    """Design matrix grouped into strata.

    Rows ``offsets[s]:offsets[s+1]`` form stratum ``s`` and ``case[s]`` is the
    row index of its case.
    """

    X: np.ndarray
    offsets: np.ndarray
    case: np.ndarray
    names: tuple[str, ...] = STAT_NAMES
    n_dropped: int = 0

    @property
    def n_strata(self) -> int:
        return len(self.case)

    @property
    def n_obs(self) -> int:
        return len(self.X)

    @property
    def k(self) -> int:
        return self.X.shape[1]

    @classmethod
    def from_rows(cls, stratum, is_case, X, names=STAT_NAMES) -> "StrataDesign":
        """Group rows by stratum id, validating one case per stratum.

        Strata with no controls carry no information and are dropped.
        """
        stratum = np.asarray(stratum)
        is_case = np.asarray(is_case, dtype=bool)
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if len(stratum) and np.any(np.diff(stratum) < 0) and not _contiguous(stratum):
            order = np.argsort(stratum, kind="stable")
            stratum, is_case, X = stratum[order], is_case[order], X[order]
        starts = np.flatnonzero(np.r_[True, stratum[1:] != stratum[:-1]]) if len(stratum) else np.zeros(0, int)
        offsets = np.r_[starts, len(stratum)].astype(np.int64)
        n_cases = np.add.reduceat(is_case.astype(np.int64), starts) if len(starts) else np.zeros(0, int)
        bad = np.flatnonzero(n_cases != 1)
        if len(bad):
            s = stratum[starts[bad[0]]]
            raise ValueError(f"stratum {s} has {n_cases[bad[0]]} cases; exactly one is required")
        sizes = np.diff(offsets)
        keep = sizes >= 2
        n_dropped = int(np.count_nonzero(~keep))
        if n_dropped:
            log.warning("dropping %d strata without controls", n_dropped)
            rows = np.repeat(keep, sizes)
            stratum, is_case, X = stratum[rows], is_case[rows], X[rows]
            sizes = sizes[keep]
            offsets = np.r_[0, np.cumsum(sizes)].astype(np.int64)
        case = np.flatnonzero(is_case)
        return cls(np.ascontiguousarray(X), offsets, case, tuple(names), n_dropped)

    @classmethod
    def from_blocks(cls, X: np.ndarray, case: np.ndarray, names=STAT_NAMES) -> "StrataDesign":
        """Equal-size strata from an ``(S, D, k)`` array and per-stratum case positions."""
        S, D, k = X.shape
        if D < 2:
            raise ValueError("strata need at least one control")
        offsets = np.arange(0, (S + 1) * D, D, dtype=np.int64)
        return cls(X.reshape(S * D, k), offsets, offsets[:-1] + np.asarray(case, dtype=np.int64),
                   tuple(names))

    def differences(self) -> np.ndarray:
        """Rows ``x_case - x_control`` for every control."""
        sizes = np.diff(self.offsets)
        diff = np.repeat(self.X[self.case], sizes, axis=0) - self.X
        mask = np.ones(len(self.X), dtype=bool)
        mask[self.case] = False
        return diff[mask]


def _contiguous(stratum: np.ndarray) -> bool:
    starts = np.r_[True, stratum[1:] != stratum[:-1]]
    return len(np.unique(stratum)) == np.count_nonzero(starts)


def _as_design(data) -> StrataDesign:
    if isinstance(data, StrataDesign):
        return data
    return data.design()


@numba.njit(cache=True)
def _strata_kernel(X, offsets, case, theta, want_hess):
    k = X.shape[1]
    ll = 0.0
    grad = np.zeros(k)
    hess = np.zeros((k, k))
    mean = np.zeros(k)
    dev = np.zeros(k)
    size = 0
    for s in range(len(case)):
        size = max(size, offsets[s + 1] - offsets[s])
    w = np.empty(size)
    for s in range(len(case)):
        r0, r1 = offsets[s], offsets[s + 1]
        top = -np.inf
        for r in range(r0, r1):
            e = 0.0
            for j in range(k):
                e += X[r, j] * theta[j]
            w[r - r0] = e
            if e > top:
                top = e
        eta_case = w[case[s] - r0]
        den = 0.0
        for i in range(r1 - r0):
            w[i] = np.exp(w[i] - top)
            den += w[i]
        ll += eta_case - top - np.log(den)
        mean[:] = 0.0
        for r in range(r0, r1):
            p = w[r - r0] / den
            w[r - r0] = p
            for j in range(k):
                mean[j] += p * X[r, j]
        for j in range(k):
            grad[j] += X[case[s], j] - mean[j]
        if want_hess:
            for r in range(r0, r1):
                p = w[r - r0]
                for j in range(k):
                    dev[j] = X[r, j] - mean[j]
                for j in range(k):
                    pj = p * dev[j]
                    for l in range(j + 1):
                        hess[j, l] -= pj * dev[l]
    for j in range(k):
        for l in range(j):
            hess[l, j] = hess[j, l]
    return ll, grad, hess


def loglik_grad_hess(data, theta, hessian: bool = True):
    """Log sampled partial likelihood, its gradient and Hessian at ``theta``.

    Softmax weights are formed after subtracting the stratum maximum, so
    large linear predictors do not overflow.
    """
    d = _as_design(data)
    theta = np.ascontiguousarray(theta, dtype=float)
    if theta.shape != (d.k,):
        raise ValueError(f"theta must have length {d.k}")
    return _strata_kernel(d.X, d.offsets, d.case, theta, hessian)


def find_separation(data, tol: float = 1e-8) -> np.ndarray | None:
    """Direction ``v`` with ``(x_case - x_j) . v >= 0`` for all controls and > 0 for some.

    Returns None when no such direction exists, i.e. when the likelihood is
    bounded above.
    """
    d = _as_design(data)
    D = d.differences()
    if len(D) == 0:
        return None
    scale = np.abs(D).max(axis=0)
    scale[scale == 0] = 1.0
    D = np.unique(D / scale, axis=0)
    D = D[np.any(np.abs(D) > 1e-12, axis=1)]
    if len(D) == 0:
        return None
    res = linprog(-D.sum(axis=0), A_ub=-D, b_ub=np.zeros(len(D)),
                  bounds=[(-1, 1)] * D.shape[1], method="highs")
    if res.status != 0:
        return None
    v = res.x
    margins = D @ v
    if margins.min() < -tol or margins.max() <= tol:
        return None
    return v / scale


@dataclass
class FitResult:
    names: tuple[str, ...]
    theta: np.ndarray
    se: np.ndarray
    z: np.ndarray
    loglik: float
    loglik_null: float
    n_events: int
    n_obs: int
    converged: bool
    iterations: int
    n_dropped: int = 0
    ridge: float = 0.0
    cov: np.ndarray = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return len(self.theta)

    @property
    def aic(self) -> float:
        return 2 * self.k - 2 * self.loglik

    @property
    def r2(self) -> float:
        """Cox-Snell pseudo R-squared."""
        return 1 - math.exp(-2 * (self.loglik - self.loglik_null) / self.n_events)

    @property
    def r2_max(self) -> float:
        return 1 - math.exp(2 * self.loglik_null / self.n_events)

    @property
    def p_values(self) -> np.ndarray:
        return np.array([math.erfc(abs(z) / math.sqrt(2)) for z in self.z])

    def as_dict(self) -> dict:
        out = {}
        for q, vals in (("theta", self.theta), ("se", self.se), ("z", self.z)):
            for name, v in zip(self.names, vals):
                out[f"{q}.{name}"] = float(v)
        out.update(loglik=self.loglik, loglik_null=self.loglik_null, aic=self.aic, r2=self.r2,
                   r2_max=self.r2_max, n_events=self.n_events, n_obs=self.n_obs,
                   n_dropped=self.n_dropped, converged=int(self.converged),
                   iterations=self.iterations, ridge=self.ridge)
        return out

    def write(self, dest: str | Path | IO[str], comments: Sequence[str] = ()) -> None:
        if isinstance(dest, (str, Path)):
            with open(dest, "w", encoding="utf-8", newline="") as fh:
                self.write(fh, comments)
            return
        for c in comments:
            dest.write(f"# {c}\n")
        dest.write("name,value\n")
        for key, v in self.as_dict().items():
            dest.write(f"{key},{v if isinstance(v, int) else format(v, '.17g')}\n")

    @classmethod
    def read(cls, source: str | Path | IO[str]) -> "FitResult":
        if isinstance(source, (str, Path)):
            with open(source, encoding="utf-8") as fh:
                return cls.read(fh)
        values = {}
        for line in source:
            line = line.strip()
            if not line or line.startswith("#") or line == "name,value":
                continue
            key, _, v = line.partition(",")
            values[key] = v
        names = tuple(k[6:] for k in values if k.startswith("theta."))
        get = lambda q: np.array([float(values[f"{q}.{n}"]) for n in names])  # noqa: E731
        return cls(names, get("theta"), get("se"), get("z"), float(values["loglik"]),
                   float(values["loglik_null"]), int(values["n_events"]), int(values["n_obs"]),
                   bool(int(values["converged"])), int(values["iterations"]),
                   int(values.get("n_dropped", 0)), float(values.get("ridge", 0.0)))

    def report(self) -> str:
        """Estimates with standard errors in brackets and significance stars."""
        lines = []
        width = max(len(n) for n in self.names + ("Num. events",)) + 2
        for name, th, se, p in zip(self.names, self.theta, self.se, self.p_values):
            stars = "***" if p < 0.001 else "**" if p < 0.01 else "*" if p < 0.05 else ""
            lines.append(f"{name:<{width}}{th:10.3f} ({se:.3f}) {stars}".rstrip())
        rule = "-" * (width + 24)
        lines += [rule,
                  f"{'AIC':<{width}}{self.aic:,.3f}",
                  f"{'R^2':<{width}}{self.r2:.3f}",
                  f"{'Max. R^2':<{width}}{self.r2_max:.3f}",
                  f"{'Num. events':<{width}}{self.n_events:,}",
                  f"{'Num. obs.':<{width}}{self.n_obs:,}",
                  rule,
                  "*** p < 0.001, ** p < 0.01, * p < 0.05"]
        return "\n".join([rule] + lines)


def _named(names, mask):
    return [n for n, flag in zip(names, mask) if flag]


def fit(data, tol: float = 1e-6, ll_tol: float = 1e-9, max_iter: int = 100, ridge: float = 0.0,
        max_norm: float = 500.0, max_condition: float = 1e12) -> FitResult:
    """Newton-Raphson maximization of the sampled partial likelihood.

    Raises :class:`SeparationError` when the likelihood has no maximum and
    :class:`NonIdentifiableError` when the information matrix is singular at
    a stationary point. ``ridge`` subtracts ``ridge * |theta|^2`` from the
    objective; it is off by default.
    """
    d = _as_design(data)
    if d.n_strata == 0:
        raise ValueError("no strata to fit")
    k = d.k
    names = d.names

    def objective(theta):
        ll, g, h = loglik_grad_hess(d, theta)
        if ridge:
            return ll - ridge * theta @ theta, g - 2 * ridge * theta, h - 2 * ridge * np.eye(k), ll
        return ll, g, h, ll

    theta = np.zeros(k)
    obj, g, h, ll = objective(theta)
    ll_null = ll
    delta = math.inf
    converged = False
    it = 0
    step = np.zeros(k)
    while True:
        info = -h
        evals, evecs = np.linalg.eigh(info)
        top = evals.max()
        singular = top <= 0 or evals.min() <= top / max_condition
        if not singular:
            step = evecs @ ((evecs.T @ g) / evals)
        small_grad = np.abs(g).max() < tol
        if small_grad and abs(delta) < ll_tol:
            converged = True
            break
        if singular:
            null = np.abs(evecs[:, evals <= max(top, 0) / max_condition]).max(axis=1) > 1e-3 \
                if top > 0 else np.ones(k, dtype=bool)
            if small_grad:
                raise NonIdentifiableError("information matrix is singular", _named(names, null))
            v = find_separation(d)
            if v is not None:
                raise SeparationError("likelihood is monotone", _named(names, np.abs(v) > 1e-6))
            raise NonIdentifiableError("information matrix is singular", _named(names, null))
        if it >= max_iter:
            break
        it += 1
        t = 1.0
        for _ in range(60):
            cand = theta + t * step
            c_obj, c_g, c_h, c_ll = objective(cand)
            if np.isfinite(c_obj) and c_obj >= obj - 1e-12 * max(1.0, abs(obj)):
                break
            t *= 0.5
        else:
            break
        delta = c_obj - obj
        theta, obj, g, h, ll = cand, c_obj, c_g, c_h, c_ll
        if np.abs(theta).max() > max_norm:
            raise SeparationError(f"|theta| exceeded {max_norm}", _named(names, np.abs(theta) > max_norm / 2))

    if converged and np.abs(step).max() > 1e-4 * max(1.0, np.abs(theta).max()):
        # flat ascent direction at a numerically stationary point
        v = find_separation(d)
        if v is not None:
            raise SeparationError("likelihood is monotone", _named(names, np.abs(v) > 1e-6))
    if not converged:
        log.warning("Newton-Raphson did not converge after %d iterations", it)
    cov = np.linalg.inv(-h)
    se = np.sqrt(np.diag(cov))
    return FitResult(names, theta, se, theta / se, float(ll), float(ll_null), d.n_strata, d.n_obs,
                     converged, it, d.n_dropped, ridge, cov)


def short_name(name: str) -> str:
    return SHORT_NAMES.get(name, name)
