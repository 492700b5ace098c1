"""Run artifacts: solution JSON, CSV tables, YAML configs, run manifests.

All floating-point output is written with 12 significant digits and LF line
endings so that byte-level comparison of re-runs is meaningful.
"""

from __future__ import annotations

import csv
import io as _io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .core import ModelSpec, PopulationState, StationaryPolicy
from .equilibrium import MfeSolution

FLOAT_FMT = ".12g"


def _round12(value):
    """Recursively normalize floats to 12 significant digits for JSON."""
    if isinstance(value, float):
        return float(format(value, FLOAT_FMT))
    if isinstance(value, dict):
        return {k: _round12(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round12(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_round12(float(v)) for v in value.tolist()]
    if isinstance(value, (np.floating,)):
        return float(format(float(value), FLOAT_FMT))
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def solution_to_dict(sol: MfeSolution, model: Optional[ModelSpec] = None) -> dict:
    """JSON-ready record of an MfeSolution.

    The policy is stored as state label -> action value and the population as
    state label -> probability, so the record is readable without the model;
    indices are stored alongside for exact reconstruction.
    """
    m_star = sol.m_star
    if isinstance(m_star, np.ndarray):
        m_star = m_star.tolist()
    record = {
        "model": sol.model_name,
        "algorithm": sol.algorithm,
        "m_star": m_star,
        "residual": sol.residual,
        "consistency_residual": sol.consistency_residual,
        "converged": sol.converged,
        "stop_reason": sol.stop_reason,
        "iterations": sol.iterations,
        "wall_time": sol.wall_time,
        "seeds": sol.seeds,
        "config": sol.config,
        "trace": sol.trace,
        "policy_actions": sol.policy.actions.tolist() if sol.policy is not None else None,
        "population": sol.population.probs.tolist() if sol.population is not None else None,
    }
    if model is not None and sol.policy is not None:
        vals = model.action_space.values
        record["policy"] = {
            str(label): vals[a]
            for label, a in zip(model.state_space.labels, sol.policy.actions)
        }
        record["population_by_state"] = {
            str(label): float(p)
            for label, p in zip(model.state_space.labels, sol.population.probs)
        }
    return _round12(record)


def solution_to_json(sol: MfeSolution, model: Optional[ModelSpec] = None) -> str:
    return json.dumps(solution_to_dict(sol, model), indent=2, sort_keys=True) + "\n"


def solution_from_dict(record: dict) -> MfeSolution:
    m_star = record["m_star"]
    if isinstance(m_star, list):
        m_star = np.array(m_star, dtype=float)
    policy = None
    if record.get("policy_actions") is not None:
        policy = StationaryPolicy(np.array(record["policy_actions"], dtype=int), m_star)
    population = None
    if record.get("population") is not None:
        population = PopulationState(np.array(record["population"], dtype=float))
    return MfeSolution(
        m_star=m_star,
        policy=policy,
        population=population,
        residual=float(record["residual"]),
        consistency_residual=float(record["consistency_residual"]),
        algorithm=record["algorithm"],
        trace=record.get("trace", []),
        seeds=record.get("seeds", {}),
        wall_time=float(record.get("wall_time", 0.0)),
        converged=bool(record["converged"]),
        stop_reason=record.get("stop_reason", ""),
        iterations=int(record.get("iterations", 0)),
        model_name=record["model"],
        config=record.get("config", {}),
    )


def load_solution(path: str | Path) -> MfeSolution:
    with open(path) as fh:
        return solution_from_dict(json.load(fh))


def policy_to_csv(model: ModelSpec, policy: StationaryPolicy) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["state_label", "action_value"])
    vals = model.action_space.values
    for label, a in zip(model.state_space.labels, policy.actions):
        writer.writerow([str(label), format(float(vals[a]), FLOAT_FMT)])
    return buf.getvalue()


def qtable_to_csv(model: ModelSpec, qtable) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["state_label", "action_value", "q"])
    vals = model.action_space.values
    for x, label in enumerate(model.state_space.labels):
        for a in model.action_space.feasible_at(x):
            writer.writerow(
                [str(label), format(float(vals[a]), FLOAT_FMT), format(float(qtable.q[x, a]), FLOAT_FMT)]
            )
    return buf.getvalue()


def direct_policy_to_csv(model: ModelSpec, direct) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["state_label", "action_value", "prob"])
    vals = model.action_space.values
    for x, label in enumerate(model.state_space.labels):
        for a in model.action_space.feasible_at(x):
            writer.writerow(
                [str(label), format(float(vals[a]), FLOAT_FMT), format(float(direct.probs[x, a]), FLOAT_FMT)]
            )
    return buf.getvalue()


def learning_trace_to_csv(trace) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["episode", "mean_reward", "epsilon"])
    for episode, mean_reward, epsilon in trace:
        writer.writerow([episode, format(float(mean_reward), FLOAT_FMT), format(float(epsilon), FLOAT_FMT)])
    return buf.getvalue()


def solver_trace_to_csv(trace: list) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    keys = ["iter", "m", "f", "lo", "hi", "kind"]
    writer.writerow(keys)
    for entry in trace:
        row = []
        for key in keys:
            v = entry.get(key, "")
            if isinstance(v, float):
                v = format(v, FLOAT_FMT)
            elif isinstance(v, list):
                v = ";".join(format(float(x), FLOAT_FMT) for x in v)
            row.append(v)
        writer.writerow(row)
    return buf.getvalue()


def load_config(path: str | Path) -> dict:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"config {path} must be a mapping at the top level")
    return data


def set_by_path(config: dict, dotted: str, value) -> None:
    """Apply a --set style override: dotted path into nested dicts."""
    parts = dotted.split(".")
    node = config
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise KeyError(f"cannot descend into {part!r} in {dotted!r}")
    node[parts[-1]] = value


@dataclass
class RunManifest:
    """Everything needed to reproduce and audit a CLI run."""

    command: str
    config_path: str
    config: dict
    seed: Optional[int]
    out_dir: str
    artifacts: list = field(default_factory=list)
    versions: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def to_json(self) -> str:
        from . import __version__

        record = {
            "command": self.command,
            "config_path": self.config_path,
            "config": self.config,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "artifacts": sorted(self.artifacts),
            "versions": {
                "mfekit": __version__,
                "numpy": np.__version__,
                "python": sys.version.split()[0],
                **self.versions,
            },
            "timings": self.timings,
        }
        return json.dumps(_round12(record), indent=2, sort_keys=True) + "\n"


def write_artifact(out_dir: Path, name: str, content: str, manifest: RunManifest) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(content)
    manifest.artifacts.append(name)
    return path
