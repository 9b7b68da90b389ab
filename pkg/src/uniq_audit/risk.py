"""Success probability of nanotargeting, affected-user estimates, per-user risk."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import isotonic_regression

from .errors import ConfigError, DegenerateFitError, FitError, UnstableEstimateError
from .estimator import MIN_UNCENSORED_POINTS, fit_np
from .methodology import (N_MAX, SampleMatrix, Scenario, Selection, _plan, build_matrix,
                          is_eligible, quantile_vectors)
from .oracle import AudienceSpec, OracleConfig, index_for
from .population import Population

GRID = tuple(range(1, 100))
MAX_FAILED_GRID_FRACTION = 0.5


@dataclass
class SuccessCurve:
    """p_success for N = 1..50 under one scenario.

    ``grid`` keeps the (P, n_p) pairs the curve was inverted from;
    ``extrapolated[N-1]`` marks N outside the range of fitted n_p values.
    """

    scenario: Scenario
    p: np.ndarray
    extrapolated: np.ndarray
    grid: list[tuple[float, float]] = field(default_factory=list)
    failed_grid: int = 0

    def at(self, n: int) -> float:
        n = min(max(int(n), 1), N_MAX)
        return float(self.p[n - 1])

    def n_p(self, prob: float) -> float:
        """Skills needed for uniqueness with probability ``prob``, read off the grid."""
        ps = np.array([g[0] for g in self.grid])
        ns = np.array([g[1] for g in self.grid])
        return float(np.interp(prob, ps, ns))

    def rows(self) -> list[tuple[int, float, bool]]:
        return [(n, float(self.p[n - 1]), bool(self.extrapolated[n - 1]))
                for n in range(1, N_MAX + 1)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "p_success", "extrapolated"])
        for n, p, ext in self.rows():
            w.writerow([n, f"{p:.6f}", int(ext)])
        return buf.getvalue()


def curve_from_matrix(matrix: SampleMatrix, grid=GRID,
                      min_points: int = MIN_UNCENSORED_POINTS,
                      below: str = "anchor") -> SuccessCurve:
    """Invert n_p(P) over a quantile grid, then force monotonicity in N.

    A quantile whose vector reaches the floor before ``min_points`` entries
    is collapsed rather than unstable: those users are already near-unique
    at small N.  Only the remaining failures count towards the unstable-grid
    limit.
    For N below the smallest fitted n_p, ``below="anchor"`` interpolates
    towards the trivial point (N=0, P=0); ``below="clamp"`` holds the
    probability of the smallest fitted n_p.  Above the largest fitted n_p
    the curve is held at that point's probability.
    """
    floor = matrix.oracle_cfg.floor if matrix.oracle_cfg.censored else 0
    pairs = []
    failed = unstable = 0
    for vec in quantile_vectors(matrix, grid):
        try:
            pairs.append((vec.q / 100.0, fit_np(vec, floor, min_points).n_p))
        except DegenerateFitError:
            failed += 1
            if floor <= 0 or all(v is None or v > floor for v in vec.values):
                unstable += 1
        except FitError:
            failed += 1
            unstable += 1
    if unstable > MAX_FAILED_GRID_FRACTION * len(grid) or not pairs:
        raise UnstableEstimateError(
            f"{unstable}/{len(grid)} grid quantiles gave unstable fits for {matrix.scenario}")

    return curve_from_grid(matrix.scenario, pairs, below=below, failed=failed)


def curve_from_grid(scenario: Scenario, pairs, below: str = "anchor",
                    failed: int = 0) -> SuccessCurve:
    """Success curve from (P, n_p) pairs."""
    if below not in ("anchor", "clamp"):
        raise ConfigError(f"unknown low-end rule {below!r}")
    pairs = [(float(p), float(n)) for p, n in pairs]
    if not pairs:
        raise UnstableEstimateError("no fitted grid points")
    ps = np.array([p for p, _ in pairs])
    ns = np.array([n for _, n in pairs])
    order = np.argsort(ns, kind="stable")
    ns_sorted, ps_sorted = ns[order], ps[order]
    lo, hi = ns_sorted[0], ns_sorted[-1]
    if below == "anchor" and lo > 0:
        ns_sorted = np.concatenate([[0.0], ns_sorted])
        ps_sorted = np.concatenate([[0.0], ps_sorted])
    n_axis = np.arange(1, N_MAX + 1, dtype=float)
    raw = np.interp(n_axis, ns_sorted, ps_sorted)
    p = np.clip(isotonic_regression(raw, increasing=True).x, 0.0, 1.0)
    extrapolated = (n_axis < lo) | (n_axis > hi)
    return SuccessCurve(scenario, p, extrapolated, sorted(pairs), failed)


def success_curve(pop: Population, scenario: Scenario, oracle_cfg: OracleConfig,
                  seed: int = 42, grid=GRID, below: str = "anchor") -> SuccessCurve:
    return curve_from_matrix(build_matrix(pop, scenario, oracle_cfg, seed), grid,
                             below=below)


# ground truth ------------------------------------------------------------------


@dataclass
class UniquenessTable:
    """Per-N eligible users and how many of them are unique by brute force."""

    scenario: Scenario
    eligible: np.ndarray
    unique: np.ndarray

    def probability(self, n: int) -> float | None:
        e = int(self.eligible[n - 1])
        return None if e == 0 else int(self.unique[n - 1]) / e


def uniqueness_table(pop: Population, scenario: Scenario, seed: int = 42) -> UniquenessTable:
    """Brute-force uniqueness of every eligible user at every N.

    Each user's spec is (location if used) + the first N skills of the same
    selection plan the estimator uses.  Prefix specs are nested, so the
    smallest unique N is found by bisection over exact oracle queries.
    """
    index = index_for(pop)
    eligible = np.zeros(N_MAX, dtype=np.int64)
    first_unique = np.zeros(N_MAX + 2, dtype=np.int64)
    for user in pop.users:
        if not is_eligible(user, scenario):
            continue
        plan = _plan(user, scenario, index, seed)
        k = len(plan)
        eligible[:k] += 1
        location = user.location if scenario.use_location else None

        def unique_at(n):
            return index.count(AudienceSpec(location, frozenset(plan[:n]))) == 1

        if not unique_at(k):
            continue
        lo, hi = 1, k
        while lo < hi:
            mid = (lo + hi) // 2
            if unique_at(mid):
                hi = mid
            else:
                lo = mid + 1
        first_unique[lo] += 1
        first_unique[k + 1] -= 1
    # difference array over N: unique for N in [first, k]
    unique = np.cumsum(first_unique)[1:N_MAX + 1]
    return UniquenessTable(scenario, eligible, unique)


def uniqueness_ground_truth(pop: Population, scenario: Scenario, n: int,
                            seed: int = 42) -> float | None:
    """Fraction of users with >= n skills made unique by location + n plan skills.

    Returns ``None`` when no user is eligible at ``n``.
    """
    return uniqueness_table(pop, scenario, seed).probability(n)


# affected population -----------------------------------------------------------


@dataclass(frozen=True)
class AffectedEstimate:
    p_uniqueness: float
    n_required: int
    frac_with_n_or_more: float
    base: int
    affected_count: float
    affected_pct: float

    def to_dict(self) -> dict:
        return {
            "p_uniqueness": self.p_uniqueness,
            "n_required": self.n_required,
            "frac_with_n_or_more": self.frac_with_n_or_more,
            "base": self.base,
            "affected_count": self.affected_count,
            "affected_millions": round(self.affected_count / 1e6, 2),
            "affected_pct": round(self.affected_pct, 1),
        }


def estimate_affected(p: float, n_required: int, frac: float, base: int) -> AffectedEstimate:
    """Users exposed = P(unique with N skills) x share listing >= N skills x user base.

    ``affected_pct`` is in percent.
    """
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"probability {p} outside [0, 1]")
    if not 0.0 <= frac <= 1.0:
        raise ConfigError(f"fraction {frac} outside [0, 1]")
    if base <= 0 or n_required < 0:
        raise ConfigError("base must be positive and n_required non-negative")
    count = p * frac * base
    return AffectedEstimate(p, int(n_required), frac, int(base), count, 100.0 * count / base)


def fraction_with_at_least(pop: Population, n: int) -> float:
    """Share of skill-reporting users listing ``n`` skills or more."""
    counts = [len(u.skills) for u in pop.users if u.skills]
    if not counts:
        return 0.0
    return sum(c >= n for c in counts) / len(counts)


def affected_from_curve(pop: Population, curve: SuccessCurve,
                        probabilities=(0.7, 0.75, 0.8, 0.85, 0.9, 0.95),
                        base: int | None = None) -> list[AffectedEstimate]:
    base = pop.total_base if base is None else base
    out = []
    for p in probabilities:
        n_req = math.ceil(curve.n_p(p))
        out.append(estimate_affected(p, n_req, fraction_with_at_least(pop, n_req), base))
    return out


def affected_csv(rows: list[AffectedEstimate]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p_uniqueness", "n_required", "frac_with_n_or_more",
                "affected_millions", "affected_pct"])
    for r in rows:
        w.writerow([f"{r.p_uniqueness:g}", r.n_required, f"{r.frac_with_n_or_more:.4f}",
                    f"{r.affected_count / 1e6:.2f}", f"{r.affected_pct:.1f}"])
    return buf.getvalue()


# per-user risk -----------------------------------------------------------------


@dataclass(frozen=True)
class UserRisk:
    user_id: str
    n_skills: int
    p_success: float
    targetable: bool


def user_risk(pop: Population, user_id: str, curve: SuccessCurve) -> UserRisk:
    """Risk of a campaign using all of the user's listed skills.

    Users without skills are reported as not targetable with risk 0.
    """
    if curve.scenario.selection is not Selection.RANDOM:
        raise ConfigError("per-user risk is read off the random-selection curve")
    user = pop.user(user_id)
    k = len(user.skills)
    if k == 0:
        return UserRisk(user_id, 0, 0.0, False)
    return UserRisk(user_id, k, curve.at(min(k, N_MAX)), True)


__all__ = [
    "AffectedEstimate", "SuccessCurve", "UniquenessTable", "UserRisk",
    "affected_csv", "affected_from_curve", "curve_from_grid", "curve_from_matrix", "estimate_affected",
    "fraction_with_at_least", "success_curve", "uniqueness_ground_truth",
    "uniqueness_table", "user_risk",
]
