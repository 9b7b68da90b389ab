import json

import numpy as np
import pytest
from scipy import stats

from uniq_audit.errors import ConfigError, DataError
from uniq_audit.population import (GeneratorConfig, Population, UserProfile, generate, ingest,
                                   skill_count_pmf, summarize, zipf_weights)

from conftest import make_pop


def test_profile_rejects_51_skills():
    with pytest.raises(DataError, match="at most 50"):
        UserProfile("x", None, tuple(f"s{i}" for i in range(51)))


def test_profile_rejects_duplicate_skill():
    with pytest.raises(DataError, match="twice"):
        UserProfile("x", None, ("a", "a"))


def test_population_rejects_duplicate_ids():
    with pytest.raises(DataError, match="duplicate"):
        make_pop([("a", None, ["x"]), ("a", None, ["y"])])


def test_population_rejects_skill_outside_catalog():
    with pytest.raises(DataError, match="not in catalog"):
        Population((UserProfile("a", None, ("x",)),), ("y",), (1.0,), (), ())


@pytest.mark.parametrize("field,value", [
    ("n_users", 0), ("n_skills", -1), ("p_zero_skills", 1.5), ("p_no_location", -0.1),
    ("skill_popularity_exponent", 0.0), ("skill_count_sigma", 0.0),
])
def test_generator_config_validation(field, value):
    with pytest.raises(ConfigError):
        generate(GeneratorConfig(**{"n_users": 10, field: value}))


def test_all_zero_skills():
    pop = generate(GeneratorConfig(n_users=500, p_zero_skills=1.0, seed=3))
    assert all(not u.skills for u in pop.users)
    assert len(pop.zero_skill_ids) == 500


def test_generation_is_byte_identical_per_seed():
    cfg = GeneratorConfig(n_users=3_000, seed=7)
    assert generate(cfg).dumps() == generate(cfg).dumps()
    assert generate(cfg).dumps() != generate(GeneratorConfig(n_users=3_000, seed=8)).dumps()


def test_profiles_respect_cap_and_uniqueness(pop_10k):
    for u in pop_10k.users:
        assert len(u.skills) <= 50
        assert len(set(u.skills)) == len(u.skills)


def test_popularity_rank_correlation(pop_10k):
    s = summarize(pop_10k)
    weights = np.array(pop_10k.skill_weights)
    freq = np.array([s.skill_audience.get(k, 0) for k in pop_10k.skill_catalog])
    # skills expected fewer than 5 times only contribute sampling noise and ties at 0
    resolvable = weights * s.skill_mentions >= 5
    assert resolvable.sum() >= 100
    rho = stats.spearmanr(weights[resolvable], freq[resolvable]).statistic
    assert rho > 0.9


def test_skill_count_pmf_is_normalized():
    cfg = GeneratorConfig()
    pmf = skill_count_pmf(cfg.skill_count_mu, cfg.skill_count_sigma)
    assert pmf.shape == (50,)
    assert pmf.sum() == pytest.approx(1.0)
    assert (pmf > 0).all()


def test_default_skill_count_law_targets():
    cfg = GeneratorConfig()
    cdf = np.cumsum(skill_count_pmf(cfg.skill_count_mu, cfg.skill_count_sigma))
    assert cdf[13] < 0.5 <= cdf[14]  # median 15
    assert abs((1 - cdf[24]) - 0.30) <= 0.01


def test_zipf_weights():
    w = zipf_weights(4, 1.0)
    assert w.sum() == pytest.approx(1.0)
    assert w[0] / w[1] == pytest.approx(2.0)


def test_small_catalog_still_draws_distinct_skills():
    pop = generate(GeneratorConfig(n_users=300, n_skills=12, p_zero_skills=0.0, seed=1))
    for u in pop.users:
        assert len(u.skills) <= 12
        assert len(set(u.skills)) == len(u.skills)


@pytest.mark.slow
def test_desk_calibration(desk_pop):
    counts = np.array([len(u.skills) for u in desk_pop.users])
    nonzero = counts[counts > 0]
    assert abs(np.median(nonzero) - 15) <= 2
    assert abs((counts == 0).mean() - 0.25) <= 0.03
    assert abs((nonzero > 25).mean() - 0.30) <= 0.05


# ingestion -------------------------------------------------------------------


def _write_lines(path, objs):
    path.write_text("".join(json.dumps(o) + "\n" for o in objs), encoding="utf-8")
    return path


def test_ingest_single_record(tmp_path):
    p = _write_lines(tmp_path / "p.jsonl", [{"id": "a", "location": "ES", "skills": ["x", "y"]}])
    pop = ingest(p)
    assert len(pop) == 1
    assert set(pop.skill_catalog) == {"x", "y"}
    assert pop.location_catalog == ("ES",)


def test_ingest_rejects_51_skills_with_line_number(tmp_path):
    p = _write_lines(tmp_path / "p.jsonl", [
        {"id": "a", "location": None, "skills": ["x"]},
        {"id": "b", "location": None, "skills": [f"s{i}" for i in range(51)]},
    ])
    with pytest.raises(DataError, match=r"line 2: .*at most 50"):
        ingest(p)


def test_ingest_malformed_json_names_line(tmp_path):
    p = tmp_path / "p.jsonl"
    p.write_text('{"id": "a", "skills": []}\n{"id": \n', encoding="utf-8")
    with pytest.raises(DataError, match="line 2"):
        ingest(p)


def test_ingest_duplicate_id(tmp_path):
    p = _write_lines(tmp_path / "p.jsonl", [{"id": "a", "skills": []}, {"id": "a", "skills": []}])
    with pytest.raises(DataError, match="line 2: duplicate"):
        ingest(p)


def test_ingest_empty_file_warns(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("", encoding="utf-8")
    with pytest.warns(UserWarning, match="no profiles"):
        pop = ingest(p)
    assert len(pop) == 0


def test_ingest_keeps_zero_skill_users(tmp_path):
    p = _write_lines(tmp_path / "p.jsonl", [{"id": "a", "location": "X", "skills": []},
                                            {"id": "b", "location": "X", "skills": ["k"]}])
    assert ingest(p).zero_skill_ids == ["a"]


def test_ingest_missing_file(tmp_path):
    with pytest.raises(DataError):
        ingest(tmp_path / "nope.jsonl")


def test_save_ingest_round_trip(tmp_path, pop_2k):
    path = tmp_path / "pop.jsonl"
    pop_2k.save(path)
    back = ingest(path)
    assert back == pop_2k
    assert back.dumps() == pop_2k.dumps()


# summaries -------------------------------------------------------------------


def test_summary_of_single_user():
    s = summarize(make_pop([("a", "L", ["x", "y", "z"])]))
    assert s.unique_skills == 3
    cdf = dict(s.skill_count_cdf)
    assert cdf[2] == 0.0
    assert cdf[3] == 1.0


def test_mean_users_per_skill_matches_mentions():
    rows = [("a", None, ["x", "y"]), ("b", None, ["x"]), ("c", None, ["x", "z"])]
    s = summarize(make_pop(rows))
    assert s.skill_mentions == 5
    assert s.mean_users_per_skill == pytest.approx(5 / 3)


def test_aggregate_mean_users_per_skill():
    # 3352 users, 8533 unique skills appearing 78794 times
    assert round(78794 / 8533) == 9
