"""Problem data: separable quadratic objectives plus coupling constraints.

The problem solved throughout the package is

    minimize   sum_i  1/2 x_i' H_i x_i + c_i' x_i + const_i
    subject to sum_i (A_i x_i + b_i) <= 0      (m_ineq rows)
               sum_i (E_i x_i + g_i)  = 0      (q_eq rows),

with each agent i owning its block x_i.  Constraint rows are stored sparsely
per agent: an agent holds a row only if it participates in it (nonzero
coefficients or a nonzero offset share).  Inequality rows are indexed
1..m_ineq, equality rows 1..q_eq; a single "constraint index"
l in 1..m_ineq+q_eq addresses inequalities first, then equalities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatchError, RankDeficiencyError, ValidationError


@dataclass(frozen=True)
class AgentObjective:
    """One agent's quadratic cost 1/2 x'Hx + c'x + constant (H symmetric PSD)."""

    hessian: np.ndarray
    linear: np.ndarray
    constant: float = 0.0

    def __post_init__(self):
        h = np.asarray(self.hessian, dtype=float)
        c = np.asarray(self.linear, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise DimensionMismatchError(f"hessian must be square, got {h.shape}")
        if c.shape != (h.shape[0],):
            raise DimensionMismatchError(
                f"linear term {c.shape} does not match hessian {h.shape}"
            )
        if not np.allclose(h, h.T, atol=1e-12, rtol=0):
            raise ValidationError("hessian must be symmetric")
        object.__setattr__(self, "hessian", h)
        object.__setattr__(self, "linear", c)
        if np.linalg.eigvalsh(h).min() < -1e-10:
            raise ValidationError("hessian must be positive semidefinite")

    @property
    def dim(self) -> int:
        return self.hessian.shape[0]

    def value(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.hessian @ x + self.linear @ x + self.constant)

    def curvature_range(self) -> tuple[float, float]:
        """(smallest, largest) eigenvalue of the Hessian."""
        eigs = np.linalg.eigvalsh(self.hessian)
        return float(eigs[0]), float(eigs[-1])


class CouplingConstraints:
    """Sparse per-agent rows of the coupled inequality/equality constraints."""

    def __init__(self, n_agents: int, m_ineq: int, q_eq: int,
                 ineq_rows=None, eq_rows=None):
        self.n_agents = n_agents
        self.m_ineq = m_ineq
        self.q_eq = q_eq
        # rows[i-1][index] = (coeffs, offset); rows with zero coefficients and
        # zero offset are dropped, so storage equals participation.
        self._ineq = [dict() for _ in range(n_agents)]
        self._eq = [dict() for _ in range(n_agents)]
        for agent, m, coeffs, offset in (ineq_rows or []):
            self.add_ineq_row(agent, m, coeffs, offset)
        for agent, q, coeffs, offset in (eq_rows or []):
            self.add_eq_row(agent, q, coeffs, offset)

    def _add(self, store, agent, index, limit, kind, coeffs, offset):
        if not 1 <= index <= limit:
            raise ValidationError(f"{kind} row {index} out of range 1..{limit}")
        if not 1 <= agent <= self.n_agents:
            raise ValidationError(f"agent {agent} out of range 1..{self.n_agents}")
        coeffs = np.asarray(coeffs, dtype=float)
        offset = float(offset)
        if index in store[agent - 1]:
            raise ValidationError(f"duplicate {kind} row {index} for agent {agent}")
        if offset != 0.0 or np.any(coeffs != 0.0):
            store[agent - 1][index] = (coeffs, offset)

    def add_ineq_row(self, agent: int, m: int, coeffs, offset: float) -> None:
        self._add(self._ineq, agent, m, self.m_ineq, "inequality", coeffs, offset)

    def add_eq_row(self, agent: int, q: int, coeffs, offset: float) -> None:
        self._add(self._eq, agent, q, self.q_eq, "equality", coeffs, offset)

    def ineq_row(self, agent: int, m: int):
        return self._ineq[agent - 1].get(m)

    def eq_row(self, agent: int, q: int):
        return self._eq[agent - 1].get(q)

    def row(self, agent: int, l: int):
        """Row addressed by combined constraint index (inequalities first)."""
        if l <= self.m_ineq:
            return self.ineq_row(agent, l)
        return self.eq_row(agent, l - self.m_ineq)

    def agent_rows(self, agent: int) -> tuple[dict, dict]:
        """(inequality rows, equality rows) of one agent, keyed by row index."""
        return self._ineq[agent - 1], self._eq[agent - 1]


@dataclass(frozen=True)
class ProblemSpec:
    """Objectives, coupling constraints and the communication graph."""

    objectives: tuple[AgentObjective, ...]
    constraints: CouplingConstraints
    graph: "Graph"

    def __post_init__(self):
        n = len(self.objectives)
        if self.graph.n_agents != n or self.constraints.n_agents != n:
            raise DimensionMismatchError(
                "objectives, constraints and graph disagree on the agent count"
            )
        for i in range(1, n + 1):
            d = self.objectives[i - 1].dim
            ineq, eq = self.constraints.agent_rows(i)
            for idx, (coeffs, _) in {**ineq, **eq}.items():
                if coeffs.shape != (d,):
                    raise DimensionMismatchError(
                        f"agent {i} row {idx}: coefficients {coeffs.shape} "
                        f"do not match block dimension {d}"
                    )

    @property
    def n_agents(self) -> int:
        return len(self.objectives)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(obj.dim for obj in self.objectives)

    def block_slices(self) -> tuple[slice, ...]:
        """Slices of each agent's block inside the stacked primal vector."""
        out, start = [], 0
        for d in self.dims:
            out.append(slice(start, start + d))
            start += d
        return tuple(out)

    def split(self, x: np.ndarray) -> list[np.ndarray]:
        return [x[s] for s in self.block_slices()]


def objective_value(problem: ProblemSpec, x: np.ndarray) -> float:
    """Total separable objective at a stacked primal vector."""
    return math.fsum(
        obj.value(xi) for obj, xi in zip(problem.objectives, problem.split(x))
    )


def aggregate_violation(problem: ProblemSpec, x: np.ndarray):
    """Stacked constraint residuals at x.

    Returns (ineq, eq): ineq[m-1] = sum_i A_i^[m] x_i + b_i^[m] (feasible when
    <= 0), eq[q-1] = sum_i E_i^[q] x_i + g_i^[q] (feasible when = 0).  Affine
    in x by construction.
    """
    cons = problem.constraints
    ineq = np.zeros(cons.m_ineq)
    eq = np.zeros(cons.q_eq)
    for i, xi in enumerate(problem.split(x), start=1):
        ineq_rows, eq_rows = cons.agent_rows(i)
        for m, (coeffs, offset) in ineq_rows.items():
            ineq[m - 1] += coeffs @ xi + offset
        for q, (coeffs, offset) in eq_rows.items():
            eq[q - 1] += coeffs @ xi + offset
    return ineq, eq


def max_violation(problem: ProblemSpec, x: np.ndarray) -> tuple[float, float]:
    """(max positive inequality residual, max absolute equality residual)."""
    ineq, eq = aggregate_violation(problem, x)
    worst_ineq = float(np.max(ineq, initial=0.0))
    worst_eq = float(np.max(np.abs(eq), initial=0.0))
    return max(worst_ineq, 0.0), worst_eq


# ---------------------------------------------------------------------------
# regularity checks and the dual-gradient Lipschitz estimate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AgentRankInfo:
    agent: int
    n_rows: int
    full_row_rank: bool
    sigma_min: float
    sigma_max: float
    gram_min: float  # smallest eigenvalue of (stacked rows)(stacked rows)'


@dataclass(frozen=True)
class LicqReport:
    agents: tuple[AgentRankInfo, ...]

    @property
    def all_full_rank(self) -> bool:
        return all(a.full_row_rank for a in self.agents)

    def failures(self) -> tuple[int, ...]:
        return tuple(a.agent for a in self.agents if not a.full_row_rank)


def stacked_rows(problem: ProblemSpec, agent: int) -> np.ndarray:
    """Agent's constraint coefficient rows stacked (inequalities then equalities)."""
    ineq_rows, eq_rows = problem.constraints.agent_rows(agent)
    d = problem.objectives[agent - 1].dim
    rows = [ineq_rows[m][0] for m in sorted(ineq_rows)]
    rows += [eq_rows[q][0] for q in sorted(eq_rows)]
    if not rows:
        return np.zeros((0, d))
    return np.vstack(rows)


def validate_licq(problem: ProblemSpec, rank_tol: float = 1e-9) -> LicqReport:
    """Check each agent's stacked constraint rows for full row rank.

    Full row rank of every agent's stack guarantees local subproblems are
    feasible for arbitrary offsets and that their multipliers are unique.
    """
    infos = []
    for i in range(1, problem.n_agents + 1):
        rows = stacked_rows(problem, i)
        k = rows.shape[0]
        if k == 0:
            infos.append(AgentRankInfo(i, 0, True, math.inf, 0.0, math.inf))
            continue
        sv = np.linalg.svd(rows, compute_uv=False)
        smax = float(sv[0])
        smin = float(sv[-1]) if k <= rows.shape[1] else 0.0
        ok = k <= rows.shape[1] and smin > rank_tol * max(1.0, smax)
        infos.append(AgentRankInfo(i, k, ok, smin, smax, smin ** 2))
    return LicqReport(tuple(infos))


def operator_norms(topology, weights) -> dict[int, float]:
    """Spectral norm of I - P per constraint (0 for empty participant sets)."""
    out = {}
    for l in range(1, topology.n_constraints + 1):
        k = len(topology.participants_of(l))
        if k == 0:
            out[l] = 0.0
        else:
            gap = np.eye(k) - weights[l].entries
            out[l] = float(np.max(np.abs(np.linalg.eigvalsh(gap))))
    return out


def lipschitz_bound(problem: ProblemSpec, topology, weights,
                    licq: LicqReport | None = None) -> float:
    """Upper bound on the Lipschitz constant of the dual-function gradient.

    Per agent, the multiplier map y -> (multipliers of agent i) is Lipschitz
    with constant at most

        max_{l in agent's constraints} ||I - P^[l]||_2
            * sqrt(curv_i / lambda_min(rows_i rows_i')),

    where curv_i is the largest Hessian eigenvalue; the full gradient then
    inherits

        bound = max_i above * max_l (||I - P^[l]||_2 sqrt(|V^[l]|))
                            * sqrt(m_ineq + q_eq).

    Requires every agent strongly convex (positive-definite Hessians) and
    full-row-rank stacked constraint rows.
    """
    if licq is None:
        licq = validate_licq(problem)
    if not licq.all_full_rank:
        raise RankDeficiencyError(
            f"agents {licq.failures()} have rank-deficient constraint rows"
        )
    norms = operator_norms(topology, weights)

    per_agent = 0.0
    for info, obj in zip(licq.agents, problem.objectives):
        if info.n_rows == 0:
            continue
        lo, hi = obj.curvature_range()
        if lo <= 1e-12 * max(1.0, hi):
            raise ValidationError(
                f"agent {info.agent}: Hessian not positive definite; "
                "the gradient Lipschitz bound needs strong convexity"
            )
        reach = max(norms[l] for l in topology.constraints_of(info.agent))
        per_agent = max(per_agent, reach * math.sqrt(hi / info.gram_min))

    network = max(
        (norms[l] * math.sqrt(len(topology.participants_of(l)))
         for l in range(1, topology.n_constraints + 1)),
        default=0.0,
    )
    return per_agent * network * math.sqrt(topology.n_constraints)
