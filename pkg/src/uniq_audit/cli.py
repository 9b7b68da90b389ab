"""Command-line entry point: ``uniq-audit <command> [options]``.

Every command that writes files also writes ``<command>.manifest.json`` next
to its outputs, recording the configuration, seeds and SHA-256 digests of
inputs and outputs.  Exit codes: 0 success, 2 configuration error, 3 data
error, 4 fit error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .campaign import (ActivityModel, CampaignConfig, ExperimentPlan, PolicyMode, launch,
                       run_experiment, target_spec)
from .errors import AuditError, ConfigError, DataError
from .estimator import EstimatorConfig, bootstrap_matrix, fit_np, run_scenarios
from .methodology import (LO_LP, LO_R, SCENARIOS, QuantileVector, Scenario, build_matrix,
                          quantile_rows)
from .oracle import AudienceSpec, OracleConfig, audience_size
from .population import GeneratorConfig, generate, ingest, summarize
from .risk import (affected_csv, affected_from_curve, curve_from_matrix, estimate_affected,
                   uniqueness_table, user_risk)

log = logging.getLogger("uniq_audit")

DESK_FLOOR = 30


# helpers ------------------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


def _write_manifest(out_dir: Path, command: str, args: argparse.Namespace,
                    inputs: list[Path], outputs: list[Path]) -> Path:
    config = {k: v for k, v in sorted(vars(args).items())
              if k not in {"func", "command", "out"} and not k.startswith("_")}
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "seed": getattr(args, "seed", None),
        "inputs": {p.name: _sha256(p) for p in inputs},
        "outputs": {p.relative_to(out_dir).as_posix(): _sha256(p)
                    for p in sorted(outputs)},
    }
    return _write(out_dir / f"{command}.manifest.json", _json(manifest))


def _parse_list(text: str, cast=str) -> list:
    try:
        return [cast(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse list {text!r}: {exc}") from None


def _scenario(text: str) -> Scenario:
    try:
        return Scenario.parse(text)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _oracle_cfg(args) -> OracleConfig:
    if getattr(args, "exact", False):
        return OracleConfig(floor=0, censored=False)
    return OracleConfig(floor=args.floor, censored=True)


def _load(args):
    return ingest(args.population)


def _gen_config(args) -> GeneratorConfig:
    base = GeneratorConfig()
    return GeneratorConfig(
        n_users=args.users if args.users is not None else base.n_users,
        n_skills=args.skills if args.skills is not None else base.n_skills,
        n_locations=args.locations if args.locations is not None else base.n_locations,
        skill_popularity_exponent=(args.skill_exponent if args.skill_exponent is not None
                                   else base.skill_popularity_exponent),
        location_popularity_exponent=(args.location_exponent
                                      if args.location_exponent is not None
                                      else base.location_popularity_exponent),
        seed=args.seed,
    )


# commands -----------------------------------------------------------------------


def cmd_generate(args) -> int:
    pop = generate(_gen_config(args))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    pop.save(out)
    _write_manifest(out.parent, "generate", args, [], [out])
    print(f"wrote {len(pop)} profiles to {out}")
    return 0


def _summary_files(pop, out_dir: Path) -> list[Path]:
    s = summarize(pop)
    return [
        _write(out_dir / "summary.json", _json(s.to_dict())),
        _write(out_dir / "skill_count_cdf.csv", _csv(["skills", "cdf"], s.skill_cdf_rows())),
        _write(out_dir / "skill_audience_cdf.csv",
               _csv(["audience_size", "cdf"], s.audience_cdf_rows("skill"))),
        _write(out_dir / "location_audience_cdf.csv",
               _csv(["audience_size", "cdf"], s.audience_cdf_rows("location"))),
    ]


def cmd_summarize(args) -> int:
    pop = _load(args)
    out_dir = Path(args.out)
    files = _summary_files(pop, out_dir)
    _write_manifest(out_dir, "summarize", args, [Path(args.population)], files)
    print(f"wrote {len(files)} files to {out_dir}")
    return 0


def cmd_audience(args) -> int:
    pop = _load(args)
    skills = _parse_list(args.skills) if args.skills else []
    spec = AudienceSpec(args.location, frozenset(skills))
    print(audience_size(pop, spec, _oracle_cfg(args)))
    return 0


def _read_vector(path: Path, q: float) -> QuantileVector:
    values: list[float | None] = [None] * 50
    with open(path, encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"N", "AS"} <= set(reader.fieldnames):
            raise DataError(f"{path}: expected columns N,AS")
        for lineno, row in enumerate(reader, start=2):
            try:
                n, v = int(row["N"]), float(row["AS"])
            except (TypeError, ValueError):
                raise DataError(f"{path}: line {lineno}: bad N/AS values") from None
            if not 1 <= n <= 50 or v <= 0:
                raise DataError(f"{path}: line {lineno}: N must be 1..50 and AS positive")
            values[n - 1] = v
    return QuantileVector(q, tuple(values))


def cmd_fit(args) -> int:
    if args.vector:
        vec = _read_vector(Path(args.vector), args.quantile)
        res = fit_np(vec, args.floor)
        payload = {"Q": args.quantile, **res.to_dict(),
                   "used_points": [[n, v] for n, v in res.used_points]}
        inputs = [Path(args.vector)]
    elif args.population:
        pop = _load(args)
        sc = _scenario(args.scenario)
        cfg = EstimatorConfig(args.bootstrap, (args.quantile,), seed=args.seed)
        matrix = build_matrix(pop, sc, _oracle_cfg(args), args.seed)
        res = bootstrap_matrix(matrix, cfg)[args.quantile]
        if isinstance(res, Exception):
            raise res
        payload = {"scenario": sc.name, "Q": args.quantile, **res.to_dict()}
        inputs = [Path(args.population)]
    else:
        raise ConfigError("fit needs --vector or --population")
    text = _json(payload)
    if args.out:
        out = _write(Path(args.out), text)
        _write_manifest(out.parent, "fit", args, inputs, [out])
    sys.stdout.write(text)
    return 0


def _scenario_files(pop, out_dir: Path, args, scenarios=SCENARIOS, matrices=None):
    cfg = EstimatorConfig(args.bootstrap, tuple(_parse_list(args.quantiles, float)),
                          seed=args.seed)
    matrices = {} if matrices is None else matrices
    table = run_scenarios(pop, cfg, _oracle_cfg(args), scenarios, matrices)
    files = [_write(out_dir / "scenarios.json", table.to_json()),
             _write(out_dir / "table1.csv", table.to_csv())]
    for sc in scenarios:
        matrix = matrices[sc]
        rows = [(n, _qfmt(q), f"{v:.4f}") for n, q, v in quantile_rows(matrix, cfg.quantiles)]
        files.append(_write(out_dir / f"quantiles_{sc.name.lower()}.csv",
                            _csv(["N", "Q", "AS"], rows)))
        counts = matrix.sample_counts()
        files.append(_write(out_dir / f"vector_lengths_{sc.name.lower()}.csv",
                            _csv(["N", "samples"], [(n + 1, int(c)) for n, c in enumerate(counts)])))
    return table, files


def _qfmt(q: float) -> str:
    return str(int(q)) if float(q).is_integer() else str(q)


def cmd_scenarios(args) -> int:
    pop = _load(args)
    out_dir = Path(args.out)
    scen = [_scenario(s) for s in _parse_list(args.scenario)] if args.scenario else SCENARIOS
    _, files = _scenario_files(pop, out_dir, args, scen)
    _write_manifest(out_dir, "scenarios", args, [Path(args.population)], files)
    print(f"wrote {len(files)} files to {out_dir}")
    return 0


def _curve_files(pop, out_dir: Path, sc: Scenario, args, matrix=None):
    if matrix is None:
        matrix = build_matrix(pop, sc, _oracle_cfg(args), args.seed)
    curve = curve_from_matrix(matrix)
    truth = uniqueness_table(pop, sc, args.seed)
    rows = []
    for n, p, ext in curve.rows():
        gt = truth.probability(n)
        rows.append((n, f"{p:.6f}", int(ext), int(truth.eligible[n - 1]),
                     "" if gt is None else f"{gt:.6f}"))
    name = sc.name.lower()
    files = [
        _write(out_dir / f"curve_{name}.csv",
               _csv(["N", "p_success", "extrapolated", "eligible", "ground_truth"], rows)),
        _write(out_dir / f"curve_grid_{name}.csv",
               _csv(["P", "n_p"], [(f"{p:.2f}", f"{n:.6f}") for p, n in curve.grid])),
    ]
    return curve, files


def cmd_curve(args) -> int:
    pop = _load(args)
    out_dir = Path(args.out)
    curve, files = _curve_files(pop, out_dir, _scenario(args.scenario), args)
    _write_manifest(out_dir, "curve", args, [Path(args.population)], files)
    print(curve.to_csv(), end="")
    return 0


def cmd_affected(args) -> int:
    if args.population:
        pop = _load(args)
        sc = _scenario(args.scenario)
        curve = curve_from_matrix(build_matrix(pop, sc, _oracle_cfg(args), args.seed))
        rows = affected_from_curve(pop, curve, base=args.base)
        text = affected_csv(rows)
        inputs = [Path(args.population)]
    else:
        if args.p is None or args.n is None or args.frac is None:
            raise ConfigError("affected needs --p, --n and --frac (or --population)")
        est = estimate_affected(args.p, args.n, args.frac, args.base or 970_000_000)
        text = affected_csv([est])
        inputs = []
    if args.out:
        out = _write(Path(args.out), text)
        _write_manifest(out.parent, "affected", args, inputs, [out])
    sys.stdout.write(text)
    return 0


def cmd_campaign(args) -> int:
    pop = _load(args)
    spec = target_spec(pop, args.target, args.skills_count, args.seed)
    cfg = CampaignConfig(
        spec,
        PolicyMode(args.policy),
        duration_days=args.days,
        budget=args.budget,
        activity=ActivityModel(p_impression=args.p_impression),
        target_id=args.target,
        campaign_id=f"{args.target}-{args.skills_count}",
        seed=args.seed,
    )
    outcome = launch(pop, cfg, OracleConfig(args.floor, True))
    text = _json(outcome.to_dict())
    if args.out:
        out = _write(Path(args.out), text)
        _write_manifest(out.parent, "campaign", args, [Path(args.population)], [out])
    sys.stdout.write(text)
    return 0


def _pick_targets(pop, n: int, min_skills: int, seed: int) -> list[str]:
    from ._seeding import derived_rng
    pool = [u.id for u in pop.users if u.location is not None and len(u.skills) >= min_skills]
    if len(pool) < n:
        raise DataError(f"only {len(pool)} users list a location and >= {min_skills} skills")
    idx = derived_rng(seed, "targets").choice(len(pool), size=n, replace=False)
    return [pool[i] for i in sorted(idx)]


def _experiment_files(pop, out_dir: Path, args, curve=None):
    counts = tuple(_parse_list(args.skill_counts, int))
    targets = (_parse_list(args.targets) if args.targets
               else _pick_targets(pop, args.n_targets, max(counts), args.seed))
    if curve is None:
        curve = curve_from_matrix(build_matrix(pop, LO_R, _oracle_cfg(args), args.seed))
    report = run_experiment(pop, ExperimentPlan(tuple(targets), counts, seed=args.seed),
                            curve, OracleConfig(args.floor, True))
    table4 = _csv(
        ["uid", "skills", "linkedin_impressions", "linkedin_clicks", "user_impressions",
         "backend_clicks", "cost", "success"],
        [(r["uid"], r["skills"], r["linkedin_impressions"], r["linkedin_clicks"],
          r["user_impressions"], r["backend_clicks"], f"{r['cost']:.2f}", int(r["success"]))
         for r in report.campaigns])
    table3 = _csv(["skills", "model_probability", "expected", "observed"],
                  [(s["skills"], s["model_probability"], s["expected"], s["observed"])
                   for s in report.summary])
    return report, [_write(out_dir / "experiment.json", report.to_json()),
                    _write(out_dir / "table4.csv", table4),
                    _write(out_dir / "table3.csv", table3)]


def cmd_experiment(args) -> int:
    pop = _load(args)
    out_dir = Path(args.out)
    _, files = _experiment_files(pop, out_dir, args)
    _write_manifest(out_dir, "experiment", args, [Path(args.population)], files)
    print(f"wrote {len(files)} files to {out_dir}")
    return 0


def cmd_pipeline(args) -> int:
    """generate -> summarize -> scenarios -> curves -> affected -> experiment."""
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    pop_path = out_dir / "population.jsonl"
    pop = generate(_gen_config(args))
    pop.save(pop_path)
    files = [pop_path]
    log.info("population: %d users", len(pop))
    files += _summary_files(pop, out_dir / "summary")
    matrices = {}
    _, f = _scenario_files(pop, out_dir / "scenarios", args, matrices=matrices)
    files += f
    log.info("scenarios done")
    curves = {}
    for sc in (LO_R, LO_LP):
        curves[sc], f = _curve_files(pop, out_dir / "curves", sc, args, matrices[sc])
        files += f
        log.info("curve %s done", sc)
    files.append(_write(out_dir / "affected" / "table2.csv",
                        affected_csv(affected_from_curve(pop, curves[LO_R]))))
    risks = [user_risk(pop, u.id, curves[LO_R]) for u in pop.users]
    files.append(_write(out_dir / "affected" / "user_risk.csv", _csv(
        ["user_id", "n_skills", "p_success", "targetable"],
        [(r.user_id, r.n_skills, f"{r.p_success:.6f}", int(r.targetable)) for r in risks])))
    log.info("affected-user estimates done")
    _, f = _experiment_files(pop, out_dir / "experiment", args, curves[LO_R])
    files += f
    _write_manifest(out_dir, "pipeline", args, [], files)
    print(f"wrote {len(files)} files to {out_dir}")
    return 0


# parser -------------------------------------------------------------------------


def _add_common(p, population=True, floor=True, seed=True):
    if population:
        p.add_argument("--population", required=True, help="profile file (JSON lines)")
    if floor:
        p.add_argument("--floor", type=int, default=DESK_FLOOR,
                       help=f"reporting floor (default {DESK_FLOOR})")
    if seed:
        p.add_argument("--seed", type=int, default=42)


def _add_generator(p):
    p.add_argument("--users", type=int)
    p.add_argument("--skills", type=int)
    p.add_argument("--locations", type=int)
    p.add_argument("--skill-exponent", type=float)
    p.add_argument("--location-exponent", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uniq-audit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw a synthetic population")
    _add_generator(p)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("summarize", help="skill-count and audience distributions")
    _add_common(p, floor=False, seed=False)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("audience", help="audience size of one targeting spec")
    _add_common(p, seed=False)
    p.add_argument("--location")
    p.add_argument("--skills", default="")
    p.add_argument("--exact", action="store_true", help="report the true count")
    p.set_defaults(func=cmd_audience)

    p = sub.add_parser("fit", help="log-linear fit of a quantile vector")
    p.add_argument("--vector", help="CSV with columns N,AS")
    p.add_argument("--population")
    p.add_argument("--scenario", default="lo_r")
    p.add_argument("--quantile", type=float, default=75.0)
    p.add_argument("--bootstrap", type=int, default=1000)
    p.add_argument("--floor", type=int, default=0)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("scenarios", help="n_p table over scenarios and quantiles")
    _add_common(p)
    p.add_argument("--scenario", help="comma list; default all four")
    p.add_argument("--quantiles", default="50,75,90")
    p.add_argument("--bootstrap", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scenarios)

    p = sub.add_parser("curve", help="success probability by number of skills")
    _add_common(p)
    p.add_argument("--scenario", default="lo_r")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("affected", help="users exposed to nanotargeting")
    p.add_argument("--p", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--frac", type=float)
    p.add_argument("--base", type=int)
    p.add_argument("--population")
    p.add_argument("--scenario", default="lo_r")
    p.add_argument("--floor", type=int, default=DESK_FLOOR)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out")
    p.set_defaults(func=cmd_affected)

    p = sub.add_parser("campaign", help="simulate one nanotargeting campaign")
    _add_common(p)
    p.add_argument("--target", required=True)
    p.add_argument("--skills-count", type=int, required=True)
    p.add_argument("--policy", choices=[m.value for m in PolicyMode], default="clientside")
    p.add_argument("--days", type=int, default=3)
    p.add_argument("--budget", type=float, default=10.0)
    p.add_argument("--p-impression", type=float, default=0.9)
    p.add_argument("--out")
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("experiment", help="proof-of-concept campaign series")
    _add_common(p)
    p.add_argument("--targets", help="comma list of user ids")
    p.add_argument("--n-targets", type=int, default=3)
    p.add_argument("--skill-counts", default="7,10,13,16,19")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("pipeline", help="run every stage into one directory")
    _add_generator(p)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--floor", type=int, default=DESK_FLOOR)
    p.add_argument("--quantiles", default="50,75,90")
    p.add_argument("--bootstrap", type=int, default=1000)
    p.add_argument("--n-targets", type=int, default=3)
    p.add_argument("--targets")
    p.add_argument("--skill-counts", default="7,10,13,16,19")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except AuditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyError as exc:
        print(f"error: unknown user {exc}", file=sys.stderr)
        return DataError.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
