"""JSON problem/scenario loading and trajectory CSV output.

Problem files (all indices 1-based)::

    {
      "agents": [{"dim": 2, "hessian": [[...]], "linear": [...],
                  "constant": 0.0}, ...],
      "ineq":   [{"agent": 1, "row": 1, "coeffs": [...], "offset": 0.0}, ...],
      "eq":     [{"agent": 2, "row": 1, "coeffs": [...], "offset": 0.0}, ...],
      "edges":  [[1, 2], [2, 3], ...],
      "m_ineq": 1,            // optional; defaults to the largest row index
      "q_eq": 1,              // optional; likewise
      "weights": [{"constraint": 1, "matrix": [[...]]}]   // optional custom
    }

Scenario files for the closed-loop demo::

    {"dt": 0.01, "horizon": 20.0, "inner_iterations": 10,
     "gamma": 0.01, "solver": "distributed", "warm_start": false}

Unknown keys are rejected by name so config typos fail loudly.
"""

from __future__ import annotations

import json

import numpy as np

from .cbf import CbfScenario, ClosedLoopResult, line_consensus_scenario
from .exceptions import ConfigError
from .graph import Graph, WeightMatrix
from .problem import AgentObjective, CouplingConstraints, ProblemSpec

_PROBLEM_KEYS = {"agents", "ineq", "eq", "edges", "m_ineq", "q_eq", "weights"}
_AGENT_KEYS = {"dim", "hessian", "linear", "constant"}
_ROW_KEYS = {"agent", "row", "coeffs", "offset"}
_SCENARIO_KEYS = {"dt", "horizon", "inner_iterations", "gamma", "solver",
                  "warm_start"}


def _reject_unknown(mapping: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


def load_problem(path) -> tuple[ProblemSpec, dict[int, WeightMatrix] | None]:
    """Parse a problem file; returns the problem and optional custom weights."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return problem_from_dict(data, where=str(path))


def problem_from_dict(data: dict, where: str = "problem"):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: top level must be an object")
    _reject_unknown(data, _PROBLEM_KEYS, where)
    if "agents" not in data or not data["agents"]:
        raise ConfigError(f"{where}: 'agents' must list at least one agent")

    objectives = []
    for k, spec in enumerate(data["agents"], start=1):
        _reject_unknown(spec, _AGENT_KEYS, f"{where}: agents[{k}]")
        try:
            dim = int(spec["dim"])
            obj = AgentObjective(
                np.array(spec["hessian"], dtype=float),
                np.array(spec["linear"], dtype=float),
                float(spec.get("constant", 0.0)),
            )
        except KeyError as exc:
            raise ConfigError(f"{where}: agents[{k}] missing key {exc}") from exc
        if obj.dim != dim:
            raise ConfigError(
                f"{where}: agents[{k}] declares dim={dim} but hessian is "
                f"{obj.dim}x{obj.dim}"
            )
        objectives.append(obj)
    n = len(objectives)

    ineq_entries = data.get("ineq", [])
    eq_entries = data.get("eq", [])
    for name, entries in (("ineq", ineq_entries), ("eq", eq_entries)):
        for k, row in enumerate(entries):
            _reject_unknown(row, _ROW_KEYS, f"{where}: {name}[{k}]")
            for key in ("agent", "row", "coeffs", "offset"):
                if key not in row:
                    raise ConfigError(f"{where}: {name}[{k}] missing '{key}'")
    m_ineq = int(data.get("m_ineq", max((r["row"] for r in ineq_entries), default=0)))
    q_eq = int(data.get("q_eq", max((r["row"] for r in eq_entries), default=0)))

    cons = CouplingConstraints(n, m_ineq, q_eq)
    for row in ineq_entries:
        cons.add_ineq_row(int(row["agent"]), int(row["row"]),
                          np.array(row["coeffs"], dtype=float), float(row["offset"]))
    for row in eq_entries:
        cons.add_eq_row(int(row["agent"]), int(row["row"]),
                        np.array(row["coeffs"], dtype=float), float(row["offset"]))

    graph = Graph.from_edges(n, data.get("edges", []))
    problem = ProblemSpec(tuple(objectives), cons, graph)

    custom = None
    if "weights" in data:
        custom = {}
        for k, entry in enumerate(data["weights"]):
            _reject_unknown(entry, {"constraint", "matrix"}, f"{where}: weights[{k}]")
            custom[int(entry["constraint"])] = np.array(entry["matrix"], dtype=float)
    return problem, custom


def load_scenario(path) -> CbfScenario:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return scenario_from_dict(data, where=str(path))


def scenario_from_dict(data: dict, where: str = "scenario") -> CbfScenario:
    _reject_unknown(data, _SCENARIO_KEYS, where)
    casts = {"dt": float, "horizon": float, "inner_iterations": int,
             "gamma": float, "solver": str, "warm_start": bool}
    overrides = {k: cast(data[k]) for k, cast in casts.items() if k in data}
    scenario, _, _ = line_consensus_scenario(**overrides)
    return scenario


def _fmt(x: float) -> str:
    return "%.17g" % x


def emit_trajectory(result: ClosedLoopResult, path) -> None:
    """One row per instant: time, positions, barrier values, applied inputs.

    The final instant has no applied input; its input cells and feasibility
    flag are empty.
    """
    steps, n = result.inputs.shape[0], result.positions.shape[1]
    k = result.barrier_values.shape[1]
    header = ["t"]
    header += [f"z{i}{ax}" for i in range(1, n + 1) for ax in ("x", "y")]
    header += [f"g{j}" for j in range(1, k + 1)]
    header += [f"u{i}{ax}" for i in range(1, n + 1) for ax in ("x", "y")]
    header.append("applied_feasible")

    lines = [",".join(header)]
    for s in range(steps + 1):
        cells = [_fmt(result.times[s])]
        cells += [_fmt(v) for v in result.positions[s].reshape(-1)]
        cells += [_fmt(v) for v in result.barrier_values[s]]
        if s < steps:
            cells += [_fmt(v) for v in result.inputs[s].reshape(-1)]
            cells.append(str(int(result.applied_worst_violation[s] <= 1e-8)))
        else:
            cells += [""] * (2 * n + 1)
        lines.append(",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
