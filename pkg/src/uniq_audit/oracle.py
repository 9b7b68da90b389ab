"""Audience-size queries with AND semantics and a reporting floor."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .population import Population

DEFAULT_FLOOR = 300


@dataclass(frozen=True)
class AudienceSpec:
    """Targeting predicate: optional location AND every listed skill."""

    location: str | None = None
    skills: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if not isinstance(self.skills, frozenset):
            object.__setattr__(self, "skills", frozenset(self.skills))

    @property
    def is_empty(self) -> bool:
        return self.location is None and not self.skills


@dataclass(frozen=True)
class OracleConfig:
    floor: int = DEFAULT_FLOOR
    censored: bool = True

    def __post_init__(self):
        if self.floor < 0:
            raise ConfigError("floor must be non-negative")

    def report(self, count: int) -> int:
        """Value shown for a true count under this configuration."""
        if self.censored and count < self.floor:
            return self.floor
        return count


EXACT = OracleConfig(floor=0, censored=False)


class AudienceIndex:
    """Inverted skill and location indexes over one population.

    Postings hold user positions (indices into ``pop.users``).  Intersection
    always starts from the smallest posting list.
    """

    def __init__(self, pop: Population):
        self.pop = pop
        self.ids = [u.id for u in pop.users]
        skills: dict[str, set[int]] = {}
        locations: dict[str, set[int]] = {}
        for i, u in enumerate(pop.users):
            for s in u.skills:
                skills.setdefault(s, set()).add(i)
            if u.location is not None:
                locations.setdefault(u.location, set()).add(i)
        self.skill_postings = {k: frozenset(v) for k, v in skills.items()}
        self.location_postings = {k: frozenset(v) for k, v in locations.items()}
        self._everyone = frozenset(range(len(pop.users)))
        self._skill_bits: dict[str, int] | None = None
        self._location_bits: dict[str, int] | None = None

    def _build_bits(self) -> None:
        n = len(self.ids)

        def pack(postings):
            out = {}
            for key, members in postings.items():
                mask = np.zeros(n, dtype=bool)
                mask[np.fromiter(members, dtype=np.int64, count=len(members))] = True
                out[key] = int.from_bytes(np.packbits(mask, bitorder="little").tobytes(),
                                          "little")
            return out

        self._skill_bits = pack(self.skill_postings)
        self._location_bits = pack(self.location_postings)

    def skill_bits(self, skill: str) -> int:
        """Posting list of ``skill`` as an integer bitset over user positions."""
        if self._skill_bits is None:
            self._build_bits()
        return self._skill_bits.get(skill, 0)

    def location_bits(self, location: str) -> int:
        if self._location_bits is None:
            self._build_bits()
        return self._location_bits.get(location, 0)

    def skill_size(self, skill: str) -> int:
        return len(self.skill_postings.get(skill, ()))

    def location_size(self, location: str) -> int:
        return len(self.location_postings.get(location, ()))

    def postings(self, spec: AudienceSpec) -> list[frozenset[int]]:
        lists = []
        if spec.location is not None:
            lists.append(self.location_postings.get(spec.location, frozenset()))
        for s in spec.skills:
            lists.append(self.skill_postings.get(s, frozenset()))
        return lists

    def match(self, spec: AudienceSpec) -> frozenset[int]:
        lists = self.postings(spec)
        if not lists:
            return self._everyone
        lists.sort(key=len)
        result = lists[0]
        for other in lists[1:]:
            if not result:
                break
            result = result & other
        return frozenset(result)

    def count(self, spec: AudienceSpec) -> int:
        if spec.is_empty:
            return len(self.ids)
        bits = -1 if spec.location is None else self.location_bits(spec.location)
        for s in spec.skills:
            if not bits:
                break
            bits &= self.skill_bits(s)
        return bits.bit_count()

    def audience_size(self, spec: AudienceSpec, cfg: OracleConfig = EXACT) -> int:
        return cfg.report(self.count(spec))

    def matched_users(self, spec: AudienceSpec) -> set[str]:
        return {self.ids[i] for i in self.match(spec)}


_INDEX_CACHE: dict[int, AudienceIndex] = {}


def index_for(pop: Population) -> AudienceIndex:
    """Shared index for ``pop`` (populations are immutable)."""
    key = id(pop)
    idx = _INDEX_CACHE.get(key)
    if idx is None or idx.pop is not pop:
        idx = AudienceIndex(pop)
        _INDEX_CACHE.clear()
        _INDEX_CACHE[key] = idx
    return idx


def audience_size(pop: Population, spec: AudienceSpec, cfg: OracleConfig = OracleConfig()) -> int:
    """Number of matching users, reported as ``cfg.floor`` when censored below it.

    An empty true count is also reported as the floor in censored mode.
    """
    return index_for(pop).audience_size(spec, cfg)


def matched_users(pop: Population, spec: AudienceSpec) -> set[str]:
    return index_for(pop).matched_users(spec)
