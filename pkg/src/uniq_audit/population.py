"""Synthetic and ingested user populations.

A population is a frozen collection of profiles (id, optional location,
ordered skill list) together with the skill and location catalogs the
profiles were drawn from.  Populations serialize to JSON lines with a
leading ``{"_meta": ...}`` header.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy import stats

from ._seeding import derived_rng
from .errors import ConfigError, DataError

MAX_SKILLS = 50
DEFAULT_TOTAL_BASE = 970_000_000


@dataclass(frozen=True)
class UserProfile:
    id: str
    location: str | None
    skills: tuple[str, ...]

    def __post_init__(self):
        if len(self.skills) > MAX_SKILLS:
            raise DataError(
                f"user {self.id!r} lists {len(self.skills)} skills; "
                f"profiles hold at most {MAX_SKILLS}"
            )
        if len(set(self.skills)) != len(self.skills):
            raise DataError(f"user {self.id!r} lists a skill twice")

    def to_record(self) -> dict:
        return {"id": self.id, "location": self.location, "skills": list(self.skills)}


@dataclass(frozen=True)
class GeneratorConfig:
    """Parameters of the synthetic population generator.

    The defaults are calibrated so that a 100k-user population has a median
    of 15 listed skills, about a quarter of users with no skills and about
    30% listing more than 25.  The popularity exponents are steep enough
    that a floor of 30 censors the audience-size quantiles much as a floor
    of 300 does at platform scale.
    """

    n_users: int = 100_000
    n_skills: int = 5_000
    skill_popularity_exponent: float = 2.0
    n_locations: int = 200
    location_popularity_exponent: float = 3.0
    p_zero_skills: float = 0.25
    p_no_location: float = 0.01
    # log-normal over 1..50, discretized on unit bins and renormalized
    skill_count_mu: float = 3.6
    skill_count_sigma: float = 1.6
    seed: int = 42
    total_base: int = DEFAULT_TOTAL_BASE

    def validate(self) -> None:
        for name in ("n_users", "n_skills", "n_locations", "total_base"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("skill_popularity_exponent", "location_popularity_exponent",
                     "skill_count_sigma"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("p_zero_skills", "p_no_location"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {p}")
        if not math.isfinite(self.skill_count_mu):
            raise ConfigError("skill_count_mu must be finite")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class Population:
    users: tuple[UserProfile, ...]
    skill_catalog: tuple[str, ...]
    skill_weights: tuple[float, ...]
    location_catalog: tuple[str, ...]
    location_weights: tuple[float, ...]
    seed: int | None = None
    total_base: int = DEFAULT_TOTAL_BASE
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        seen = set()
        skills = set(self.skill_catalog)
        locations = set(self.location_catalog)
        for u in self.users:
            if u.id in seen:
                raise DataError(f"duplicate user id {u.id!r}")
            seen.add(u.id)
            if u.location is not None and u.location not in locations:
                raise DataError(f"user {u.id!r}: location {u.location!r} not in catalog")
            missing = [s for s in u.skills if s not in skills]
            if missing:
                raise DataError(f"user {u.id!r}: skills {missing} not in catalog")

    def __len__(self) -> int:
        return len(self.users)

    @property
    def zero_skill_ids(self) -> list[str]:
        """Users retained in the population but excluded from the analysis."""
        return [u.id for u in self.users if not u.skills]

    @cached_property
    def _positions(self) -> dict[str, int]:
        return {u.id: i for i, u in enumerate(self.users)}

    def index_of(self) -> dict[str, int]:
        return dict(self._positions)

    def user(self, user_id: str) -> UserProfile:
        return self.users[self._positions[user_id]]

    # serialization --------------------------------------------------------

    def header(self) -> dict:
        meta = {
            "seed": self.seed,
            "total_base": self.total_base,
            "n_users": len(self.users),
            "skill_catalog": list(self.skill_catalog),
            "skill_weights": list(self.skill_weights),
            "location_catalog": list(self.location_catalog),
            "location_weights": list(self.location_weights),
        }
        meta.update({k: v for k, v in self.meta.items() if k not in meta})
        return {"_meta": meta}

    def iter_lines(self) -> Iterable[str]:
        yield _dumps(self.header())
        for u in self.users:
            yield _dumps(u.to_record())

    def dumps(self) -> str:
        return "".join(line + "\n" for line in self.iter_lines())

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line in self.iter_lines():
                fh.write(line)
                fh.write("\n")


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


# generation ---------------------------------------------------------------


def zipf_weights(n: int, exponent: float) -> np.ndarray:
    """Normalized Zipf weights for ranks 1..n."""
    w = np.arange(1, n + 1, dtype=float) ** -exponent
    return w / w.sum()


def skill_count_pmf(mu: float, sigma: float) -> np.ndarray:
    """P(count = k) for k = 1..50 under the discretized, truncated log-normal."""
    edges = np.arange(0.5, MAX_SKILLS + 1.0, 1.0)
    cdf = stats.lognorm.cdf(edges, s=sigma, scale=math.exp(mu))
    pmf = np.diff(cdf)
    total = pmf.sum()
    if total <= 0:
        raise ConfigError("skill-count law puts no mass on 1..50")
    return pmf / total


def _first_unique(cand: np.ndarray) -> np.ndarray:
    """Mask of first occurrences along each row."""
    srt = np.argsort(cand, axis=1, kind="stable")
    sc = np.take_along_axis(cand, srt, axis=1)
    dup = np.zeros(sc.shape, dtype=bool)
    dup[:, 1:] = sc[:, 1:] == sc[:, :-1]
    first = np.empty(sc.shape, dtype=bool)
    np.put_along_axis(first, srt, ~dup, axis=1)
    return first


def _draw_skill_sets(rng: np.random.Generator, weights: np.ndarray,
                     counts: np.ndarray, block: int = 2048) -> list[list[int]]:
    """Popularity-weighted draws without replacement, in draw order.

    Draws with replacement and keeps first occurrences, which is the same
    law as successive weighted draws from the remaining items.  Rows that
    come up short are completed by an exact Gumbel top-k over the rest.
    """
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    n_items = len(weights)
    log_w = np.log(weights)
    out: list[list[int]] = []
    for start in range(0, len(counts), block):
        ks = counts[start:start + block]
        width = max(8 * int(ks.max(initial=0)), 1)
        cand = np.searchsorted(cum, rng.random((len(ks), width)), side="right")
        cand = np.minimum(cand, n_items - 1)
        first = _first_unique(cand)
        for row, k in enumerate(ks):
            k = int(k)
            picked = cand[row][first[row]][:k].tolist()
            if len(picked) < k:
                keys = log_w + rng.gumbel(size=n_items)
                keys[picked] = -np.inf
                rest = np.argpartition(-keys, k - len(picked) - 1)[:k - len(picked)]
                rest = rest[np.argsort(-keys[rest], kind="stable")]
                picked += rest.tolist()
            out.append(picked)
    return out


def generate(config: GeneratorConfig) -> Population:
    """Draw a population from ``config``; identical configs give identical output."""
    config.validate()
    rng = derived_rng(config.seed, "population")

    skill_ids = tuple(f"s{i:05d}" for i in range(1, config.n_skills + 1))
    loc_ids = tuple(f"L{i:04d}" for i in range(1, config.n_locations + 1))
    skill_w = zipf_weights(config.n_skills, config.skill_popularity_exponent)
    loc_w = zipf_weights(config.n_locations, config.location_popularity_exponent)

    n = config.n_users
    pmf = skill_count_pmf(config.skill_count_mu, config.skill_count_sigma)
    counts = rng.choice(np.arange(1, MAX_SKILLS + 1), size=n, p=pmf)
    counts[rng.random(n) < config.p_zero_skills] = 0
    counts = np.minimum(counts, config.n_skills)
    loc_idx = rng.choice(config.n_locations, size=n, p=loc_w)
    no_loc = rng.random(n) < config.p_no_location

    drawn = _draw_skill_sets(rng, skill_w, counts)
    users = []
    for i in range(n):
        skills = tuple(skill_ids[j] for j in drawn[i])
        location = None if no_loc[i] else loc_ids[loc_idx[i]]
        users.append(UserProfile(f"u{i:07d}", location, skills))

    return Population(
        users=tuple(users),
        skill_catalog=skill_ids,
        skill_weights=tuple(float(x) for x in skill_w),
        location_catalog=loc_ids,
        location_weights=tuple(float(x) for x in loc_w),
        seed=config.seed,
        total_base=config.total_base,
        meta={"generator": config.to_dict()},
    )


# ingestion ----------------------------------------------------------------


def _parse_record(obj, lineno: int) -> UserProfile:
    if not isinstance(obj, dict):
        raise DataError(f"line {lineno}: expected a JSON object")
    uid = obj.get("id")
    if not isinstance(uid, str) or not uid:
        raise DataError(f"line {lineno}: 'id' must be a non-empty string")
    location = obj.get("location")
    if location is not None and not isinstance(location, str):
        raise DataError(f"line {lineno}: 'location' must be a string or null")
    skills = obj.get("skills", [])
    if not isinstance(skills, list) or not all(isinstance(s, str) for s in skills):
        raise DataError(f"line {lineno}: 'skills' must be a list of strings")
    try:
        return UserProfile(uid, location, tuple(skills))
    except DataError as exc:
        raise DataError(f"line {lineno}: {exc}") from None


def ingest(path, format: str = "jsonl") -> Population:
    """Load profiles from a JSON-lines file.

    A leading ``_meta`` header (as written by :meth:`Population.save`)
    restores catalogs, seed and user base; otherwise catalogs are inferred
    from the records with weights proportional to observed frequency.
    """
    if format != "jsonl":
        raise ConfigError(f"unsupported profile format {format!r}")
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")

    meta = None
    users: list[UserProfile] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            if isinstance(obj, dict) and "_meta" in obj:
                if users or meta is not None:
                    raise DataError(f"line {lineno}: '_meta' header must come first")
                meta = obj["_meta"]
                continue
            user = _parse_record(obj, lineno)
            if user.id in seen:
                raise DataError(f"line {lineno}: duplicate id {user.id!r}")
            seen.add(user.id)
            users.append(user)

    if not users and meta is None:
        warnings.warn(f"{path} holds no profiles; population is empty", stacklevel=2)

    if meta is not None and "skill_catalog" in meta:
        extra = {k: v for k, v in meta.items()
                 if k not in {"seed", "total_base", "n_users", "skill_catalog",
                              "skill_weights", "location_catalog", "location_weights"}}
        return Population(
            users=tuple(users),
            skill_catalog=tuple(meta["skill_catalog"]),
            skill_weights=tuple(meta["skill_weights"]),
            location_catalog=tuple(meta["location_catalog"]),
            location_weights=tuple(meta["location_weights"]),
            seed=meta.get("seed"),
            total_base=meta.get("total_base", DEFAULT_TOTAL_BASE),
            meta=extra,
        )

    skills, skill_w = _empirical_catalog(s for u in users for s in u.skills)
    locs, loc_w = _empirical_catalog(u.location for u in users if u.location is not None)
    meta = meta or {}
    return Population(
        users=tuple(users),
        skill_catalog=skills,
        skill_weights=skill_w,
        location_catalog=locs,
        location_weights=loc_w,
        seed=meta.get("seed"),
        total_base=meta.get("total_base", DEFAULT_TOTAL_BASE),
    )


def _empirical_catalog(items: Iterable[str]) -> tuple[tuple[str, ...], tuple[float, ...]]:
    counts: dict[str, int] = {}
    for item in items:
        counts[item] = counts.get(item, 0) + 1
    total = sum(counts.values())
    keys = tuple(sorted(counts))
    return keys, tuple(counts[k] / total for k in keys)


# summaries ----------------------------------------------------------------


@dataclass
class DistributionSummary:
    n_users: int
    n_with_skills: int
    zero_skill_fraction: float
    median_skills: float
    frac_above_25: float
    unique_skills: int
    skill_mentions: int
    mean_users_per_skill: float
    skill_count_cdf: list[tuple[int, float]]
    skill_audience: dict[str, int]
    location_audience: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "n_users": self.n_users,
            "n_with_skills": self.n_with_skills,
            "zero_skill_fraction": self.zero_skill_fraction,
            "median_skills": self.median_skills,
            "frac_above_25": self.frac_above_25,
            "unique_skills": self.unique_skills,
            "skill_mentions": self.skill_mentions,
            "mean_users_per_skill": self.mean_users_per_skill,
            "skill_count_cdf": [list(p) for p in self.skill_count_cdf],
            "skill_audience": self.skill_audience,
            "location_audience": self.location_audience,
        }

    def skill_cdf_rows(self) -> list[tuple[int, float]]:
        """(count, CDF) rows for the skills-per-user plot."""
        return list(self.skill_count_cdf)

    def audience_cdf_rows(self, which: str = "skill") -> list[tuple[int, float]]:
        """(audience size, CDF) rows over skills or locations."""
        sizes = sorted((self.skill_audience if which == "skill"
                        else self.location_audience).values())
        n = len(sizes)
        rows = []
        for i, s in enumerate(sizes, start=1):
            if i == n or sizes[i] != s:
                rows.append((s, i / n))
        return rows


def summarize(pop: Population) -> DistributionSummary:
    counts = np.array([len(u.skills) for u in pop.users], dtype=int)
    n = len(counts)
    skill_aud: dict[str, int] = {}
    loc_aud: dict[str, int] = {}
    for u in pop.users:
        for s in u.skills:
            skill_aud[s] = skill_aud.get(s, 0) + 1
        if u.location is not None:
            loc_aud[u.location] = loc_aud.get(u.location, 0) + 1
    mentions = int(counts.sum())
    # shape statistics describe users who list skills; zero-skill share is separate
    listed = counts[counts > 0]
    hist = np.bincount(counts, minlength=MAX_SKILLS + 1)
    cdf = np.cumsum(hist) / n if n else np.zeros(MAX_SKILLS + 1)
    return DistributionSummary(
        n_users=n,
        n_with_skills=int((counts > 0).sum()),
        zero_skill_fraction=float((counts == 0).mean()) if n else 0.0,
        median_skills=float(np.median(listed)) if listed.size else 0.0,
        frac_above_25=float((listed > 25).mean()) if listed.size else 0.0,
        unique_skills=len(skill_aud),
        skill_mentions=mentions,
        mean_users_per_skill=mentions / len(skill_aud) if skill_aud else 0.0,
        skill_count_cdf=[(k, float(cdf[k])) for k in range(MAX_SKILLS + 1)],
        skill_audience=dict(sorted(skill_aud.items())),
        location_audience=dict(sorted(loc_aud.items())),
    )
