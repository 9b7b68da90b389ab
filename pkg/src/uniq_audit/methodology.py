"""Per-N audience-size samples and their quantile vectors.

For every eligible user a selection plan fixes the order in which the user's
skills are added to the audience definition.  Audience sizes for N = 1..50
are the sizes of the nested prefixes of that plan, optionally intersected
with the user's location.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._seeding import derived_rng, thread_count
from .errors import ConfigError
from .oracle import EXACT, AudienceIndex, OracleConfig, index_for
from .population import MAX_SKILLS, Population, UserProfile

N_MAX = MAX_SKILLS


class Selection(enum.Enum):
    RANDOM = "R"
    LEAST_POPULAR = "LP"


@dataclass(frozen=True)
class Scenario:
    use_location: bool
    selection: Selection

    @property
    def name(self) -> str:
        return ("Lo_" if self.use_location else "Sk_") + self.selection.value

    @classmethod
    def parse(cls, text: str) -> "Scenario":
        key = text.strip().lower()
        for sc in SCENARIOS:
            if sc.name.lower() == key:
                return sc
        raise ConfigError(f"unknown scenario {text!r}; expected one of "
                         + ", ".join(s.name.lower() for s in SCENARIOS))

    def __str__(self) -> str:
        return self.name


SK_R = Scenario(False, Selection.RANDOM)
SK_LP = Scenario(False, Selection.LEAST_POPULAR)
LO_R = Scenario(True, Selection.RANDOM)
LO_LP = Scenario(True, Selection.LEAST_POPULAR)
SCENARIOS = (SK_R, SK_LP, LO_R, LO_LP)


def is_eligible(user: UserProfile, scenario: Scenario) -> bool:
    if not user.skills:
        return False
    return user.location is not None or not scenario.use_location


def plan_selection(user: UserProfile, scenario: Scenario, pop: Population,
                   seed: int) -> tuple[str, ...] | None:
    """Order in which ``user``'s skills are added; ``None`` for zero-skill users.

    Random plans are a permutation seeded from (seed, user id).  Least-popular
    plans sort by worldwide audience size, breaking ties by skill id.
    """
    if not user.skills:
        return None
    return _plan(user, scenario, index_for(pop), seed)


def _plan(user: UserProfile, scenario: Scenario, index: AudienceIndex,
          seed: int) -> tuple[str, ...]:
    if scenario.selection is Selection.RANDOM:
        if len(user.skills) == 1:
            return user.skills
        perm = derived_rng(seed, "plan", user.id).permutation(len(user.skills))
        return tuple(user.skills[i] for i in perm)
    return tuple(sorted(user.skills, key=lambda s: (index.skill_size(s), s)))


@dataclass
class SampleMatrix:
    """Exact per-user audience sizes for N = 1..50 plus the reporting config.

    ``exact[i, N-1]`` is the true audience size for user ``user_ids[i]`` with
    N skills, or 0 when the user lists fewer than N skills.
    """

    scenario: Scenario
    user_ids: list[str]
    exact: np.ndarray
    oracle_cfg: OracleConfig

    @property
    def reported(self) -> np.ndarray:
        """Sizes as the ads manager would report them (0 still means absent)."""
        rep = self.exact.copy()
        if self.oracle_cfg.censored:
            present = rep > 0
            rep[present & (rep < self.oracle_cfg.floor)] = self.oracle_cfg.floor
        return rep

    def samples(self, n: int) -> np.ndarray:
        col = self.reported[:, n - 1]
        return col[col > 0]

    def sample_counts(self) -> np.ndarray:
        return (self.exact > 0).sum(axis=0)

    def __len__(self) -> int:
        return len(self.user_ids)


def _user_row(user: UserProfile, scenario: Scenario, index: AudienceIndex,
              seed: int) -> np.ndarray:
    row = np.zeros(N_MAX, dtype=np.int64)
    plan = _plan(user, scenario, index, seed)
    current = index.location_bits(user.location) if scenario.use_location else -1
    for k, skill in enumerate(plan):
        current &= index.skill_bits(skill)
        size = current.bit_count()
        if size == 1:
            row[k:len(plan)] = 1
            break
        row[k] = size
    return row


def build_matrix(pop: Population, scenario: Scenario,
                 oracle_cfg: OracleConfig = EXACT, seed: int = 0) -> SampleMatrix:
    """Query the audience size of every nested plan prefix for every eligible user."""
    index = index_for(pop)
    users = [u for u in pop.users if is_eligible(u, scenario)]

    def work(chunk):
        return [_user_row(u, scenario, index, seed) for u in chunk]

    threads = thread_count()
    if threads > 1 and len(users) > 1000:
        size = -(-len(users) // (threads * 4))
        chunks = [users[i:i + size] for i in range(0, len(users), size)]
        with ThreadPoolExecutor(threads) as ex:
            rows = [r for part in ex.map(work, chunks) for r in part]
    else:
        rows = work(users)
    exact = np.vstack(rows) if rows else np.zeros((0, N_MAX), dtype=np.int64)
    return SampleMatrix(scenario, [u.id for u in users], exact, oracle_cfg)


@dataclass(frozen=True)
class QuantileVector:
    """AS(Q, N) for N = 1..50; ``None`` where no user lists N skills."""

    q: float
    values: tuple[float | None, ...]
    floor: int = 0

    def points(self) -> list[tuple[int, float]]:
        return [(n, v) for n, v in enumerate(self.values, start=1) if v is not None]

    @property
    def n_asymp(self) -> int | None:
        """Smallest N whose value sits on the reporting floor."""
        if self.floor <= 0:
            return None
        for n, v in self.points():
            if v <= self.floor:
                return n
        return None


def quantile_vector(matrix: SampleMatrix, q: float) -> QuantileVector:
    """Type-7 (linear interpolation) percentile ``q`` of each per-N sample vector."""
    if not 0 < q < 100:
        raise ConfigError("quantile must lie strictly between 0 and 100")
    rep = matrix.reported
    values = []
    for n in range(1, N_MAX + 1):
        col = rep[:, n - 1]
        col = col[col > 0]
        values.append(float(np.quantile(col, q / 100.0, method="linear")) if col.size else None)
    floor = matrix.oracle_cfg.floor if matrix.oracle_cfg.censored else 0
    return QuantileVector(q, tuple(values), floor)


def quantile_rows(matrix: SampleMatrix, quantiles) -> list[tuple[int, float, float]]:
    """(N, Q, AS) plot-data rows."""
    rows = []
    for q in quantiles:
        for n, v in quantile_vector(matrix, q).points():
            rows.append((n, q, v))
    return rows


def quantile_vectors(matrix: SampleMatrix, quantiles) -> list[QuantileVector]:
    """Same as :func:`quantile_vector` for many quantiles in one pass."""
    qs = list(quantiles)
    for q in qs:
        if not 0 < q < 100:
            raise ConfigError("quantile must lie strictly between 0 and 100")
    rep = matrix.reported
    table: list[list[float | None]] = [[] for _ in qs]
    for n in range(N_MAX):
        col = rep[:, n]
        col = col[col > 0]
        if col.size:
            vals = np.quantile(col, np.asarray(qs, dtype=float) / 100.0, method="linear")
            for lst, v in zip(table, vals):
                lst.append(float(v))
        else:
            for lst in table:
                lst.append(None)
    floor = matrix.oracle_cfg.floor if matrix.oracle_cfg.censored else 0
    return [QuantileVector(q, tuple(v), floor) for q, v in zip(qs, table)]
