"""Slack allocations, their optimal cost, and its gradient.

Replacing each coupled row  sum_i (A_i x_i + b_i) <= 0  by per-agent rows

    A_i^[l] x_i + sum_j p_ij (y_i^[l] - y_j^[l]) + b_i^[l]  <= 0

(one slack coordinate per participant, consensus-weighted gaps) decouples the
agents: for a fixed slack allocation ``y`` every agent solves its own QP, and
summing the optimal costs gives a convex function of ``y`` whose minimum over
all allocations equals the coupled optimum.  The gradient of that function in
the coordinate (l, i) is the consensus gap of the participants' multipliers,

    d/dy_i^[l]  =  sum_{j in N_i^[l]} p_ij (mu_i^[l] - mu_j^[l]),

computable by agent i from one-hop multiplier exchange alone.  Because the
weight matrices are symmetric, each gradient block sums to zero, so slack
updates preserve the property that summing the per-agent rows reproduces the
original coupled constraint — every slack allocation yields a conservative
(violation-free) primal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DisconnectedSubgraphError, ValidationError
from .local_qp import KktSolution, assemble_subproblem, solve_kkt
from .problem import aggregate_violation, objective_value


@dataclass(frozen=True)
class SlackLayout:
    """Flat indexing of per-constraint slack blocks, participants ascending."""

    constraints: tuple[int, ...]
    participants: tuple[tuple[int, ...], ...]
    starts: tuple[int, ...]
    size: int

    @classmethod
    def from_topology(cls, topology) -> "SlackLayout":
        constraints = tuple(range(1, topology.n_constraints + 1))
        participants = tuple(topology.participants_of(l) for l in constraints)
        starts, total = [], 0
        for members in participants:
            starts.append(total)
            total += len(members)
        layout = cls(constraints, participants, tuple(starts), total)
        object.__setattr__(layout, "_index", {
            (l, i): layout.starts[l - 1] + a
            for l, members in zip(constraints, participants)
            for a, i in enumerate(members)
        })
        return layout

    def index(self, l: int, agent: int) -> int:
        return self._index[(l, agent)]

    def block(self, l: int) -> slice:
        start = self.starts[l - 1]
        return slice(start, start + len(self.participants[l - 1]))


@dataclass
class SlackState:
    """One slack value per (constraint, participant), flat storage."""

    layout: SlackLayout
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.layout.size,):
            raise ValidationError(
                f"slack vector has length {self.values.shape}, "
                f"layout expects {self.layout.size}"
            )

    @classmethod
    def zeros(cls, layout: SlackLayout) -> "SlackState":
        return cls(layout, np.zeros(layout.size))

    def block(self, l: int) -> np.ndarray:
        return self.values[self.layout.block(l)]

    def value(self, l: int, agent: int) -> float:
        return float(self.values[self.layout.index(l, agent)])

    def copy(self) -> "SlackState":
        return SlackState(self.layout, self.values.copy())


def direct_views(slack: SlackState, topology) -> list[dict]:
    """Per-agent {(constraint, neighbor): slack value} mappings, unmediated."""
    views = [dict() for _ in range(topology.n_agents)]
    for l in slack.layout.constraints:
        for i in topology.participants_of(l):
            view = views[i - 1]
            for j in topology.neighborhood(l, i):
                view[(l, j)] = slack.value(l, j)
    return views


def solve_all_agents(slack: SlackState, problem, topology, weights,
                     views: list | None = None) -> list[KktSolution]:
    """Solve every agent's subproblem at the given slack allocation.

    ``views`` may supply transport-mediated neighborhood views; by default
    values are read directly from the slack state.
    """
    if views is None:
        views = direct_views(slack, topology)
    return [
        solve_kkt(assemble_subproblem(i, problem, topology, weights, views[i - 1]))
        for i in range(1, problem.n_agents + 1)
    ]


def total_objective(problem, solutions: list[KktSolution]) -> float:
    """Sum of the agents' objective values at their subproblem optima."""
    return float(sum(
        obj.value(sol.x) for obj, sol in zip(problem.objectives, solutions)
    ))


def stacked_primal(solutions: list[KktSolution]) -> np.ndarray:
    return np.concatenate([sol.x for sol in solutions])


def allocation_objective(slack: SlackState, problem, topology, weights) -> float:
    """Optimal total cost of the decoupled problem at one slack allocation."""
    return total_objective(problem, solve_all_agents(slack, problem, topology, weights))


def multiplier_coordinate(l: int, agent: int, topology, weights, mult_view) -> float:
    """Consensus gap of the multipliers: one gradient coordinate, one-hop data."""
    w = weights[l]
    own = mult_view[(l, agent)]
    gap = 0.0
    for j in topology.neighborhood(l, agent):
        if j != agent:
            gap += w.weight(agent, j) * (own - mult_view[(l, j)])
    return gap


def gradient_block(l: int, topology, weights, multipliers: dict[int, float]) -> np.ndarray:
    """Gradient of the allocation cost w.r.t. constraint l's slack block.

    ``multipliers`` maps each participant to its row-l multiplier.  Equals
    (I - P^[l])' applied to the stacked multipliers; assembled coordinatewise
    with the same arithmetic an agent uses locally, so central and one-hop
    evaluations agree exactly.
    """
    members = topology.participants_of(l)
    view = {(l, i): multipliers[i] for i in members}
    return np.array([
        multiplier_coordinate(l, i, topology, weights, view) for i in members
    ])


def assemble_gradient(solutions: list[KktSolution], topology, weights,
                      layout: SlackLayout, views: list | None = None) -> np.ndarray:
    """Full allocation-cost gradient from the agents' multipliers.

    ``views`` may supply transport-mediated multiplier views (built from the
    MULTIPLIER_EXCHANGE phase); by default multipliers are read directly from
    the solutions.
    """
    m_ineq = topology.m_ineq
    if views is None:
        views = [dict() for _ in range(topology.n_agents)]
        for l in layout.constraints:
            for i in topology.participants_of(l):
                for j in topology.neighborhood(l, i):
                    views[i - 1][(l, j)] = solutions[j - 1].multiplier(l, m_ineq)
    grad = np.zeros(layout.size)
    for l in layout.constraints:
        for i in topology.participants_of(l):
            grad[layout.index(l, i)] = multiplier_coordinate(
                l, i, topology, weights, views[i - 1]
            )
    return grad


def feasible_slack_from_primal(x: np.ndarray, problem, topology, weights,
                               feas_tol: float = 1e-9) -> SlackState:
    """Slack allocation whose per-agent rows reproduce a feasible primal.

    For each constraint the per-participant residuals r are redistributed to
    their mean via the minimum-norm solution of (I - P) y = mean(r) - r.
    Errors when x violates the coupled constraints or when the consensus
    system is inconsistent (disconnected participants).
    """
    ineq, eq = aggregate_violation(problem, x)
    if np.max(ineq, initial=0.0) > feas_tol or np.max(np.abs(eq), initial=0.0) > feas_tol:
        raise ValidationError(
            "primal point violates the coupled constraints; no slack "
            "allocation can certify it"
        )
    layout = SlackLayout.from_topology(topology)
    state = SlackState.zeros(layout)
    cons = problem.constraints
    blocks = problem.split(x)
    for l in layout.constraints:
        members = topology.participants_of(l)
        if not members:
            continue
        residual = np.array([
            cons.row(i, l)[0] @ blocks[i - 1] + cons.row(i, l)[1] for i in members
        ])
        rhs = residual.mean() - residual
        gap = np.eye(len(members)) - weights[l].entries
        y_block, *_ = np.linalg.lstsq(gap, rhs, rcond=None)
        if np.max(np.abs(gap @ y_block - rhs), initial=0.0) > 1e-8 * (1.0 + np.abs(rhs).max()):
            raise DisconnectedSubgraphError(
                f"constraint {l}: consensus system inconsistent; participants "
                "are not connected"
            )
        state.values[layout.block(l)] = y_block
    return state


def finite_difference_gradient(slack: SlackState, problem, topology, weights,
                               base_step: float = 1e-5):
    """Central-difference gradient of the allocation cost, with kink flags.

    Per coordinate the step is ``base_step * (1 + |y_k|)``.  A coordinate is
    flagged when its forward and backward one-sided differences disagree by
    more than 1e-3 — the signature of probing across an active-set boundary —
    and should be excluded from comparisons against the analytic gradient.
    Only the agents in the perturbed coordinate's neighborhood are re-solved
    per probe.
    """
    layout = slack.layout
    base_solutions = solve_all_agents(slack, problem, topology, weights)
    base_costs = np.array([
        obj.value(sol.x) for obj, sol in zip(problem.objectives, base_solutions)
    ])
    total = float(base_costs.sum())

    def probe(values, affected) -> float:
        # Re-solve only the agents whose offsets see the perturbed coordinate.
        cost = total - base_costs[[i - 1 for i in affected]].sum()
        for i in affected:
            view = {
                (l, j): values[layout.index(l, j)]
                for l in topology.constraints_of(i)
                for j in topology.neighborhood(l, i)
            }
            sub = assemble_subproblem(i, problem, topology, weights, view)
            cost += problem.objectives[i - 1].value(solve_kkt(sub).x)
        return cost

    grad = np.zeros(layout.size)
    flagged = np.zeros(layout.size, dtype=bool)
    for l in layout.constraints:
        for agent in topology.participants_of(l):
            k = layout.index(l, agent)
            h = base_step * (1.0 + abs(slack.values[k]))
            affected = topology.neighborhood(l, agent)
            up = slack.values.copy()
            up[k] += h
            down = slack.values.copy()
            down[k] -= h
            f_up = probe(up, affected)
            f_down = probe(down, affected)
            grad[k] = (f_up - f_down) / (2.0 * h)
            forward = (f_up - total) / h
            backward = (total - f_down) / h
            if abs(forward - backward) > 1e-3:
                flagged[k] = True
    return grad, flagged
