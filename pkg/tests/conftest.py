from __future__ import annotations

import pytest

from uniq_audit.population import GeneratorConfig, Population, UserProfile, generate

DESK_FLOOR = 30


def make_pop(rows, seed=None) -> Population:
    """Population from ``(id, location, skills)`` rows with uniform catalogs."""
    users = tuple(UserProfile(uid, loc, tuple(skills)) for uid, loc, skills in rows)
    skills = sorted({s for u in users for s in u.skills})
    locations = sorted({u.location for u in users if u.location is not None})
    return Population(
        users,
        tuple(skills), tuple(1.0 / len(skills) for _ in skills) if skills else (),
        tuple(locations), tuple(1.0 / len(locations) for _ in locations) if locations else (),
        seed=seed,
    )


@pytest.fixture
def tiny_pop():
    return make_pop([
        ("u1", "Madrid", ["python", "sql", "chess"]),
        ("u2", "Madrid", ["python", "sql"]),
        ("u3", "Madrid", ["python"]),
        ("u4", "Paris", ["python", "sql", "chess", "golf"]),
        ("u5", "Paris", []),
        ("u6", None, ["python", "golf"]),
    ])


@pytest.fixture(scope="session")
def pop_2k():
    return generate(GeneratorConfig(n_users=2_000, seed=7))


@pytest.fixture(scope="session")
def pop_10k():
    return generate(GeneratorConfig(n_users=10_000, seed=42))


@pytest.fixture(scope="session")
def desk_pop():
    """The frozen 100k-user population at default settings, seed 42."""
    return generate(GeneratorConfig())
