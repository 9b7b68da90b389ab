"""Simulated ad campaigns under minimum-audience policies.

A campaign targets the users matching an :class:`AudienceSpec`.  Under the
``ENFORCED`` policy the platform refuses audiences smaller than the floor;
``CLIENT_SIDE_ONLY`` reproduces a platform whose only check lives in the
browser and can be skipped.  Delivery is a per-user daily Bernoulli draw
with at most one impression per day.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from ._seeding import derived_rng
from .errors import ConfigError
from .methodology import LO_R, _plan
from .oracle import AudienceSpec, OracleConfig, index_for
from .population import Population
from .risk import SuccessCurve


class PolicyMode(enum.Enum):
    ENFORCED = "enforced"
    CLIENT_SIDE_ONLY = "clientside"


@dataclass(frozen=True)
class ActivityModel:
    p_impression: float = 0.9
    target_click: float = 1.0
    bystander_click: float = 0.01

    def __post_init__(self):
        for name in ("p_impression", "target_click", "bystander_click"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True)
class CampaignConfig:
    spec: AudienceSpec
    policy: PolicyMode = PolicyMode.CLIENT_SIDE_ONLY
    duration_days: int = 3
    budget: float = 10.0
    cost_per_impression: float = 0.05
    activity: ActivityModel = ActivityModel()
    target_id: str | None = None
    campaign_id: str = "c0"
    seed: int = 42

    def __post_init__(self):
        if self.duration_days < 1:
            raise ConfigError("duration_days must be at least 1")
        if self.budget < 0 or self.cost_per_impression < 0:
            raise ConfigError("budget and cost_per_impression must be non-negative")


@dataclass
class CampaignOutcome:
    campaign_id: str
    launched: bool
    status: str
    audience_reported: int
    impressions: int = 0
    clicks: int = 0
    per_user_log: dict[str, dict[str, int]] = field(default_factory=dict)
    backend_clicks: list[tuple[float, str]] = field(default_factory=list)
    cost: float = 0.0
    target_id: str | None = None

    @property
    def nanotarget_success(self) -> bool:
        return (self.target_id is not None and len(self.per_user_log) == 1
                and self.target_id in self.per_user_log)

    @property
    def target_impressions(self) -> int:
        return self.per_user_log.get(self.target_id, {}).get("impressions", 0)

    def to_dict(self) -> dict:
        return {
            "campaign_id": self.campaign_id,
            "launched": self.launched,
            "status": self.status,
            "audience_reported": self.audience_reported,
            "platform_report": {"impressions": self.impressions, "clicks": self.clicks},
            "user_report": {"impressions": self.target_impressions},
            "backend_log": {"clicks": len(self.backend_clicks),
                            "events": [[round(t, 6), c] for t, c in self.backend_clicks]},
            "cost": round(self.cost, 2),
            "reached_users": len(self.per_user_log),
            "target_id": self.target_id,
            "nanotarget_success": self.nanotarget_success,
        }


def launch(pop: Population, cfg: CampaignConfig,
           oracle_cfg: OracleConfig = OracleConfig()) -> CampaignOutcome:
    """Try to launch ``cfg`` and simulate its delivery."""
    index = index_for(pop)
    members = sorted(index.match(cfg.spec))
    true_size = len(members)
    reported = oracle_cfg.report(true_size)
    if cfg.policy is PolicyMode.ENFORCED and true_size < oracle_cfg.floor:
        return CampaignOutcome(cfg.campaign_id, False, "audience too small", reported,
                               target_id=cfg.target_id)

    out = CampaignOutcome(cfg.campaign_id, True, "completed", reported,
                          target_id=cfg.target_id)
    if not members:
        return out

    rng = derived_rng(cfg.seed, "campaign", cfg.campaign_id)
    ids = [index.ids[i] for i in members]
    shown = rng.random((len(ids), cfg.duration_days)) < cfg.activity.p_impression
    click_u = rng.random((len(ids), cfg.duration_days))
    when = rng.random((len(ids), cfg.duration_days))
    click_p = np.array([cfg.activity.target_click if uid == cfg.target_id
                        else cfg.activity.bystander_click for uid in ids])

    spent = 0.0
    for day in range(cfg.duration_days):
        for row in np.flatnonzero(shown[:, day]):
            if spent + cfg.cost_per_impression > cfg.budget + 1e-9:
                break
            spent += cfg.cost_per_impression
            log = out.per_user_log.setdefault(ids[row], {"impressions": 0, "clicks": 0})
            log["impressions"] += 1
            out.impressions += 1
            if click_u[row, day] < click_p[row]:
                log["clicks"] += 1
                out.clicks += 1
                out.backend_clicks.append((day + float(when[row, day]), cfg.campaign_id))
    out.backend_clicks.sort()
    out.cost = spent
    return out


def expected_successes(p: float, campaigns: int) -> float:
    if not 0.0 <= p <= 1.0 or campaigns < 0:
        raise ConfigError("p must lie in [0, 1] and campaigns be non-negative")
    return p * campaigns


def target_spec(pop: Population, target_id: str, n_skills: int, seed: int) -> AudienceSpec:
    """Location plus the first ``n_skills`` of the target's random selection plan."""
    user = pop.user(target_id)
    if n_skills > len(user.skills):
        raise ConfigError(f"{target_id} lists {len(user.skills)} skills; "
                          f"cannot select {n_skills}")
    plan = _plan(user, LO_R, index_for(pop), seed)
    return AudienceSpec(user.location, frozenset(plan[:n_skills]))


@dataclass(frozen=True)
class ExperimentPlan:
    targets: tuple[str, ...]
    skill_counts: tuple[int, ...] = (7, 10, 13, 16, 19)
    repetitions: int = 1
    seed: int = 42


@dataclass
class ExperimentReport:
    campaigns: list[dict]
    summary: list[dict]

    def to_json(self) -> str:
        return json.dumps({"campaigns": self.campaigns, "summary": self.summary},
                          indent=2) + "\n"

    def observed(self, n_skills: int) -> int:
        for row in self.summary:
            if row["skills"] == n_skills:
                return row["observed"]
        raise KeyError(n_skills)


def run_experiment(pop: Population, plan: ExperimentPlan, curve: SuccessCurve | None,
                   oracle_cfg: OracleConfig = OracleConfig(),
                   activity: ActivityModel = ActivityModel(),
                   duration_days: int = 3, budget: float = 10.0) -> ExperimentReport:
    """One client-side-only campaign per (target, skill count, repetition)."""
    for t in plan.targets:
        user = pop.user(t)
        if user.location is None:
            raise ConfigError(f"{t} lists no location")
        if max(plan.skill_counts) > len(user.skills):
            raise ConfigError(f"{t} lists only {len(user.skills)} skills")

    rows = []
    for t in plan.targets:
        for k in plan.skill_counts:
            for r in range(plan.repetitions):
                spec = target_spec(pop, t, k, plan.seed if r == 0 else plan.seed + r)
                cid = f"{t}-{k}-{r}"
                cfg = CampaignConfig(spec, PolicyMode.CLIENT_SIDE_ONLY, duration_days, budget,
                                     activity=activity, target_id=t, campaign_id=cid,
                                     seed=plan.seed)
                res = launch(pop, cfg, oracle_cfg)
                rows.append({
                    "uid": t, "skills": k, "repetition": r,
                    "linkedin_impressions": res.impressions,
                    "linkedin_clicks": res.clicks,
                    "user_impressions": res.target_impressions,
                    "backend_clicks": len(res.backend_clicks),
                    "cost": round(res.cost, 2),
                    "success": res.nanotarget_success,
                })

    n_runs = len(plan.targets) * plan.repetitions
    summary = []
    for k in plan.skill_counts:
        observed = sum(1 for r in rows if r["skills"] == k and r["success"])
        p = curve.at(k) if curve is not None else None
        summary.append({
            "skills": k,
            "campaigns": n_runs,
            "model_probability": None if p is None else round(p, 4),
            "expected": None if p is None else round(expected_successes(p, n_runs), 4),
            "observed": observed,
        })
    return ExperimentReport(rows, summary)
