"""Censored log-linear fit of quantile vectors and its bootstrap.

The uncensored part of a quantile vector is fit by ordinary least squares
``ln AS(Q, N) = B - A * N``.  The number of skills at which the fitted line
reaches an audience of one is ``B / A``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._seeding import derived_rng, thread_count
from .errors import DegenerateFitError, FitError, NonDecayingFitError, UnstableEstimateError
from .methodology import (N_MAX, SCENARIOS, QuantileVector, SampleMatrix, Scenario,
                          build_matrix, quantile_vector)
from .oracle import OracleConfig
from .population import Population

MIN_UNCENSORED_POINTS = 3
MAX_DEGENERATE_FRACTION = 0.2


@dataclass
class FitResult:
    A: float
    B: float
    n_p: float
    r_squared: float
    used_points: list[tuple[int, float]]
    n_asymp: int | None = None
    q: float | None = None
    ci_low: float | None = None
    ci_high: float | None = None
    replicates: int = 0
    failed_replicates: int = 0

    def to_dict(self) -> dict:
        return {
            "A": self.A,
            "B": self.B,
            "n_p": self.n_p,
            "ci": None if self.ci_low is None else [self.ci_low, self.ci_high],
            "r2": self.r_squared,
            "n_asymp": self.n_asymp,
            "points_used": len(self.used_points),
        }


@dataclass(frozen=True)
class EstimatorConfig:
    bootstrap_iterations: int = 1000
    quantiles: tuple[float, ...] = (50, 75, 90)
    min_uncensored_points: int = MIN_UNCENSORED_POINTS
    seed: int = 42

    def __post_init__(self):
        from .errors import ConfigError
        if self.bootstrap_iterations < 1:
            raise ConfigError("bootstrap_iterations must be at least 1")
        if self.min_uncensored_points < 3:
            raise ConfigError("min_uncensored_points must be at least 3")
        for q in self.quantiles:
            if not 0 < q < 100:
                raise ConfigError(f"quantile {q} outside (0, 100)")


def fit_points(points, min_points: int = MIN_UNCENSORED_POINTS) -> tuple[float, float, float]:
    """OLS of ln(AS) on N.  Returns (A, B, R^2)."""
    if len(points) < min_points:
        raise DegenerateFitError(
            f"{len(points)} uncensored points; at least {min_points} needed")
    x = np.array([p[0] for p in points], dtype=float)
    y = np.log(np.array([p[1] for p in points], dtype=float))
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    if sxx == 0:
        raise DegenerateFitError("all points share one N")
    slope = float(((x - xm) * (y - ym)).sum()) / sxx
    intercept = ym - slope * xm
    A = -slope
    if not A > 0:
        raise NonDecayingFitError(f"fitted slope {slope:.4g} does not decay")
    resid = y - (intercept - A * x)
    ss_tot = float(((y - ym) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return A, float(intercept), min(max(r2, 0.0), 1.0)


def fit_np(vec: QuantileVector, floor: int | None = None,
           min_points: int = MIN_UNCENSORED_POINTS) -> FitResult:
    """Fit the entries of ``vec`` strictly above ``floor`` (defaults to the vector's floor)."""
    floor = vec.floor if floor is None else floor
    used = [(n, v) for n, v in vec.points() if v > floor]
    A, B, r2 = fit_points(used, min_points)
    n_asymp = None
    if floor > 0:
        n_asymp = next((n for n, v in vec.points() if v <= floor), None)
    return FitResult(A, B, B / A, r2, used, n_asymp=n_asymp, q=vec.q)


class _ResampleQuantiles:
    """Type-7 quantiles of per-N samples under user-resampling weights.

    Resampling users with replacement is a multiplicity vector ``w``; the
    k-th order statistic of the expanded sample is found by a search on the
    cumulative weights of the sorted values, so no sample is materialized.
    """

    def __init__(self, matrix: SampleMatrix):
        rep = matrix.reported
        self.n_users = rep.shape[0]
        self.columns = []
        for n in range(N_MAX):
            col = rep[:, n]
            rows = np.flatnonzero(col > 0)
            order = np.argsort(col[rows], kind="stable")
            self.columns.append((rows[order], col[rows[order]].astype(float)))

    def vectors(self, weights: np.ndarray, qs, floor: int) -> list[QuantileVector]:
        fracs = np.asarray(qs, dtype=float) / 100.0
        per_q: list[list[float | None]] = [[] for _ in qs]
        for rows, vals in self.columns:
            if rows.size == 0:
                for lst in per_q:
                    lst.append(None)
                continue
            cw = np.cumsum(weights[rows])
            total = int(cw[-1])
            if total == 0:
                for lst in per_q:
                    lst.append(None)
                continue
            h = (total - 1) * fracs
            lo = np.floor(h)
            lo_val = vals[np.searchsorted(cw, lo, side="right")]
            hi_val = vals[np.searchsorted(cw, np.minimum(lo + 1, total - 1), side="right")]
            res = lo_val + (h - lo) * (hi_val - lo_val)
            for lst, v in zip(per_q, res):
                lst.append(float(v))
        return [QuantileVector(q, tuple(lst), floor) for q, lst in zip(qs, per_q)]


def bootstrap_matrix(matrix: SampleMatrix, cfg: EstimatorConfig) -> dict[float, FitResult]:
    """Point fits plus percentile CIs for every quantile in ``cfg``.

    Replicate ``i`` resamples users with a generator seeded from
    (cfg.seed, i), so the result does not depend on the worker count.
    Quantiles whose point fit fails map to the raised error instead.
    """
    floor = matrix.oracle_cfg.floor if matrix.oracle_cfg.censored else 0
    qs = tuple(cfg.quantiles)
    results: dict[float, FitResult | FitError] = {}
    for q in qs:
        try:
            results[q] = fit_np(quantile_vector(matrix, q), floor, cfg.min_uncensored_points)
        except FitError as exc:
            results[q] = exc
    live = [q for q in qs if isinstance(results[q], FitResult)]
    if not live:
        return results

    engine = _ResampleQuantiles(matrix)
    n = engine.n_users

    def replicate(i):
        rng = derived_rng(cfg.seed, "bootstrap", i)
        w = np.bincount(rng.integers(0, n, size=n), minlength=n)
        out = []
        for vec in engine.vectors(w, live, floor):
            try:
                out.append(fit_np(vec, floor, cfg.min_uncensored_points).n_p)
            except FitError:
                out.append(math.nan)
        return out

    iters = range(cfg.bootstrap_iterations)
    threads = thread_count()
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            reps = list(ex.map(replicate, iters, chunksize=16))
    else:
        reps = [replicate(i) for i in iters]
    reps = np.array(reps, dtype=float).reshape(len(iters), len(live))

    for j, q in enumerate(live):
        col = reps[:, j]
        ok = col[~np.isnan(col)]
        failed = col.size - ok.size
        if failed > MAX_DEGENERATE_FRACTION * col.size:
            results[q] = UnstableEstimateError(
                f"{failed}/{col.size} bootstrap replicates failed to fit "
                f"({failed / col.size:.1%})")
            continue
        res = results[q]
        lo, hi = np.percentile(ok, [2.5, 97.5])
        res.ci_low, res.ci_high = float(lo), float(hi)
        res.replicates = int(col.size)
        res.failed_replicates = int(failed)
    return results


def bootstrap_np(pop: Population, scenario: Scenario, q: float,
                 cfg: EstimatorConfig, oracle_cfg: OracleConfig) -> FitResult:
    """Point estimate and 95% bootstrap CI of ``n_p`` for one scenario and quantile."""
    matrix = build_matrix(pop, scenario, oracle_cfg, cfg.seed)
    sub = EstimatorConfig(cfg.bootstrap_iterations, (q,), cfg.min_uncensored_points, cfg.seed)
    res = bootstrap_matrix(matrix, sub)[q]
    if isinstance(res, Exception):
        raise res
    return res


@dataclass
class ScenarioCell:
    scenario: Scenario
    q: float
    result: FitResult | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        d = {"scenario": self.scenario.name, "Q": self.q}
        if self.result is not None:
            d.update(self.result.to_dict())
            d["error"] = None
        else:
            d.update({"A": None, "B": None, "n_p": None, "ci": None, "r2": None,
                      "n_asymp": None, "points_used": 0, "error": self.error})
        return d


@dataclass
class ScenarioTable:
    cells: list[ScenarioCell] = field(default_factory=list)

    def get(self, scenario: Scenario, q: float) -> ScenarioCell:
        for c in self.cells:
            if c.scenario == scenario and c.q == q:
                return c
        raise KeyError((scenario.name, q))

    def to_json(self) -> str:
        return json.dumps([c.to_dict() for c in self.cells], indent=2) + "\n"

    def to_csv(self) -> str:
        """Wide layout: one row per scenario, (n_p, CI, R^2) per quantile."""
        qs = sorted({c.q for c in self.cells})
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["scenario"]
        for q in qs:
            header += [f"N_P(Q={_fmt_q(q)})", "ci_low", "ci_high", "r2"]
        w.writerow(header)
        for sc in dict.fromkeys(c.scenario for c in self.cells):
            row = [sc.name]
            for q in qs:
                res = self.get(sc, q).result
                if res is None:
                    row += ["", "", "", ""]
                else:
                    row += [_num(res.n_p), _num(res.ci_low), _num(res.ci_high),
                            _num(res.r_squared)]
            w.writerow(row)
        return buf.getvalue()


def _fmt_q(q: float) -> str:
    return str(int(q)) if float(q).is_integer() else str(q)


def _num(x) -> str:
    return "" if x is None else f"{x:.4f}"


def run_scenarios(pop: Population, cfg: EstimatorConfig, oracle_cfg: OracleConfig,
                  scenarios=SCENARIOS, matrices: dict | None = None) -> ScenarioTable:
    """Bootstrap fits for every (scenario, quantile) pair; failures become annotated cells.

    ``matrices`` caches sample matrices by scenario; missing entries are
    built with ``cfg.seed`` and stored.
    """
    table = ScenarioTable()
    matrices = {} if matrices is None else matrices
    for sc in scenarios:
        matrix = matrices.get(sc)
        if matrix is None:
            matrix = matrices[sc] = build_matrix(pop, sc, oracle_cfg, cfg.seed)
        if len(matrix) == 0:
            results = {q: DegenerateFitError("no eligible users") for q in cfg.quantiles}
        else:
            results = bootstrap_matrix(matrix, cfg)
        for q in cfg.quantiles:
            res = results[q]
            if isinstance(res, Exception):
                table.cells.append(ScenarioCell(sc, q, error=f"{type(res).__name__}: {res}"))
            else:
                table.cells.append(ScenarioCell(sc, q, result=res))
    return table
