"""Builders for the committed golden files; shared by test_golden.py and regen_golden.py."""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

from uniq_audit.cli import main
from uniq_audit.estimator import EstimatorConfig, run_scenarios
from uniq_audit.oracle import OracleConfig
from uniq_audit.population import GeneratorConfig, generate, summarize

GOLDEN = Path(__file__).parent / "golden"

PIPELINE_ARGS = ["pipeline", "--users", "3000", "--floor", "3", "--bootstrap", "50",
                 "--seed", "42"]


def summary_10k() -> str:
    s = summarize(generate(GeneratorConfig(n_users=10_000, seed=42)))
    return json.dumps(s.to_dict(), indent=2) + "\n"


def scenarios_2k() -> str:
    pop = generate(GeneratorConfig(n_users=2_000, seed=7))
    return run_scenarios(pop, EstimatorConfig(50, seed=7), OracleConfig(3)).to_json()


def pipeline_small() -> dict[str, str]:
    """Files of a small pipeline run: the manifest plus the human-readable tables."""
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "run"
        main([*PIPELINE_ARGS, "--out", str(out)])
        keep = ["pipeline.manifest.json", "scenarios/table1.csv", "affected/table2.csv",
                "experiment/table3.csv", "experiment/experiment.json"]
        return {name: (out / name).read_text(encoding="utf-8") for name in keep}


def all_cases() -> dict[str, str]:
    files = {"summary_10k.json": summary_10k(), "scenarios_2k.json": scenarios_2k()}
    for name, text in pipeline_small().items():
        files["pipeline_small/" + name] = text
    return files
