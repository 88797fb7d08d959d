"""First-order methods on the slack allocation.

Both methods repeat the same two-phase round: exchange slack values, solve
the per-agent subproblems, exchange multipliers, form the consensus-gap
gradient.  They differ in the update:

* ``ada`` — accelerated dual averaging with weights gamma_t = gamma (t + 1),
  cumulative weight Gamma_t = gamma t (t + 3) / 2.  Round 1 evaluates at the
  supplied start and initializes the accumulator z and running average to
  -gamma_1 * gradient; later rounds evaluate at the extrapolation
  (1 - gamma_t/Gamma_t) * average + (gamma_t/Gamma_t) * z, subtract
  gamma_t * gradient from z, and re-average.  With gamma at most
  1 / (2 * gradient Lipschitz bound) the averaged objective converges at an
  O(1/t^2) rate.

* ``pgd`` — projected gradient onto the box [-C, C] with the diminishing
  steps sqrt(2 Theta) / (G sqrt(t + 1)), Theta = 2 C^2 (slack dimension);
  needs no strong convexity, converges at O(1/sqrt(t)) on the best iterate.

Every evaluated allocation yields a primal block vector satisfying the
coupled constraints, so feasibility holds at all rounds, not just in the
limit.  Monitoring evaluations (the running average, round 0, the final
iterate) bypass the transport and are free of message cost.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .local_qp import assemble_subproblem, solve_kkt
from .problem import lipschitz_bound, max_violation
from .simnet import DirectTransport, Phase, SimnetTransport
from .slack import (
    SlackLayout,
    SlackState,
    assemble_gradient,
    solve_all_agents,
    stacked_primal,
    total_objective,
)
from .trace import RoundRecord, RunTrace

logger = logging.getLogger("couplesolve")


@dataclass(frozen=True)
class AdaConfig:
    """Accelerated dual averaging: base step gamma > 0, round budget."""

    gamma: float
    rounds: int
    grad_tolerance: float | None = None

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValidationError("gamma must be positive")
        if self.rounds < 0:
            raise ValidationError("rounds must be nonnegative")


@dataclass(frozen=True)
class PgdConfig:
    """Projected gradient: box half-width C, gradient bound G, round budget."""

    box_bound: float
    grad_bound: float
    rounds: int
    grad_tolerance: float | None = None

    def __post_init__(self):
        if self.box_bound <= 0 or self.grad_bound <= 0:
            raise ValidationError("box_bound and grad_bound must be positive")
        if self.rounds < 0:
            raise ValidationError("rounds must be nonnegative")


def ada_schedule(t: int, gamma: float) -> tuple[float, float]:
    """(round weight gamma_t, cumulative weight Gamma_t) for round t >= 1."""
    return gamma * (t + 1), gamma * t * (t + 3) / 2.0


def half_squared_diameter(box_bound: float, size: int) -> float:
    """Theta = max ||u - v||^2 / 2 over the box [-C, C]^size."""
    return 2.0 * box_bound * box_bound * size


def pgd_stepsize(t: int, theta: float, grad_bound: float) -> float:
    """Diminishing step sqrt(2 Theta) / (G sqrt(t + 1)) for round t >= 1."""
    return math.sqrt(2.0 * theta) / (grad_bound * math.sqrt(t + 1.0))


@dataclass
class AdaState:
    point: np.ndarray        # allocation where the gradient was last evaluated
    accumulator: np.ndarray  # weighted sum of negative gradients
    average: np.ndarray      # weighted running average (the output sequence)
    round: int


@dataclass
class PgdState:
    point: np.ndarray
    round: int


@dataclass
class RunResult:
    trace: RunTrace
    final_state: AdaState | PgdState
    output_slack: SlackState
    output_primal: np.ndarray
    output_solutions: list
    converged: bool
    box_active: bool | None
    messages: int


class _RoundEngine:
    """Shared evaluation/gradient plumbing over a transport."""

    def __init__(self, problem, topology, weights, layout, transport, hook=None):
        self.problem = problem
        self.topology = topology
        self.weights = weights
        self.layout = layout
        self.transport = transport
        self.hook = hook

    def _by_constraint(self, flat):
        layout = self.layout
        return {
            l: {i: flat[layout.index(l, i)] for i in members}
            for l, members in zip(layout.constraints, layout.participants)
        }

    def evaluate(self, flat, round_index):
        views = self.transport.gather(Phase.SLACK_EXCHANGE, self._by_constraint(flat))
        if self.hook is not None:
            self.hook(views, round_index)
        return [
            solve_kkt(assemble_subproblem(
                i, self.problem, self.topology, self.weights, views[i - 1]
            ))
            for i in range(1, self.problem.n_agents + 1)
        ]

    def gradient(self, solutions):
        m_ineq = self.topology.m_ineq
        values = {
            l: {i: solutions[i - 1].multiplier(l, m_ineq) for i in members}
            for l, members in zip(self.layout.constraints, self.layout.participants)
        }
        views = self.transport.gather(Phase.MULTIPLIER_EXCHANGE, values)
        return assemble_gradient(
            solutions, self.topology, self.weights, self.layout, views
        )

    def monitor(self, flat):
        """Transport-free evaluation for trace metrics."""
        state = SlackState(self.layout, flat)
        return solve_all_agents(state, self.problem, self.topology, self.weights)


def ada_round(state: AdaState, engine: _RoundEngine, config: AdaConfig):
    """Advance one round; returns (new state, solutions at the new point, gradient)."""
    t = state.round + 1
    gamma_t, big_gamma_t = ada_schedule(t, config.gamma)
    if t == 1:
        point = state.point
    else:
        theta = gamma_t / big_gamma_t
        point = (1.0 - theta) * state.average + theta * state.accumulator
    solutions = engine.evaluate(point, t)
    grad = engine.gradient(solutions)
    if t == 1:
        accumulator = -gamma_t * grad
        average = accumulator.copy()
    else:
        accumulator = state.accumulator - gamma_t * grad
        average = (1.0 - theta) * state.average + theta * accumulator
    return AdaState(point, accumulator, average, t), solutions, grad


def pgd_round(state: PgdState, engine: _RoundEngine, config: PgdConfig, theta: float):
    """Advance one round; returns (new state, solutions at the consumed point, gradient)."""
    t = state.round + 1
    solutions = engine.evaluate(state.point, t)
    grad = engine.gradient(solutions)
    step = pgd_stepsize(t, theta, config.grad_bound)
    point = np.clip(state.point - step * grad, -config.box_bound, config.box_bound)
    return PgdState(point, t), solutions, grad


def _dual_errors(topology, weights, solutions):
    m_ineq = topology.m_ineq
    out = []
    for l in range(1, topology.n_constraints + 1):
        members = topology.participants_of(l)
        if not members:
            out.append(0.0)
            continue
        mults = np.array([solutions[i - 1].multiplier(l, m_ineq) for i in members])
        gap = np.eye(len(members)) - weights[l].entries
        out.append(float(np.linalg.norm(gap @ mults)))
    return tuple(out)


def _warn_on_gamma(problem, topology, weights, config):
    try:
        bound = lipschitz_bound(problem, topology, weights)
    except ValidationError:
        logger.info(
            "gradient Lipschitz bound unavailable (problem not strongly "
            "convex); consider algorithm 'pgd'"
        )
        return
    if bound > 0 and config.gamma > 1.0 / (2.0 * bound) * (1 + 1e-12):
        logger.warning(
            "gamma=%g exceeds 1/(2*lipschitz)=%g; convergence guarantee void",
            config.gamma, 1.0 / (2.0 * bound),
        )


def run(problem, topology, weights, config, *, initial_slack=None, oracle=None,
        transport="simnet", slack_phase_hook=None, check_gamma=True) -> RunResult:
    """Run one algorithm to its round budget (or early gradient-norm stop).

    ``transport`` is "simnet", "direct", or a transport instance.  ``oracle``
    (a centralized solution) enables the objective-error trace column.  The
    trace carries one row per iterate, row 0 being the start.
    """
    layout = SlackLayout.from_topology(topology)
    if isinstance(transport, str):
        transport = {
            "simnet": lambda: SimnetTransport(topology),
            "direct": lambda: DirectTransport(topology),
        }[transport]()
    engine = _RoundEngine(problem, topology, weights, layout, transport,
                          hook=slack_phase_hook)

    is_ada = isinstance(config, AdaConfig)
    if is_ada and check_gamma:
        _warn_on_gamma(problem, topology, weights, config)

    if initial_slack is None:
        start = np.zeros(layout.size)
    else:
        start = np.asarray(initial_slack.values, dtype=float).copy()
    if not is_ada:
        start = np.clip(start, -config.box_bound, config.box_bound)

    f_star = oracle.value if oracle is not None else math.nan
    msgs_per_round = 2 * transport.messages_per_phase
    n_cons = topology.n_constraints
    records = []
    converged = False

    def metrics(solutions):
        phi = total_objective(problem, solutions)
        vi, ve = max_violation(problem, stacked_primal(solutions))
        return phi, vi, ve, _dual_errors(topology, weights, solutions)

    if is_ada:
        state = AdaState(start, np.zeros(layout.size), np.zeros(layout.size), 0)
        sol0 = engine.monitor(start)
        phi, vi, ve, dual = metrics(sol0)
        records.append(RoundRecord(0, phi, math.nan, math.nan, vi, ve, dual, 0))
        hat_solutions = sol0
        for t in range(1, config.rounds + 1):
            state, solutions, grad = ada_round(state, engine, config)
            phi, vi, ve, dual = metrics(solutions)
            hat_solutions = engine.monitor(state.average)
            phi_hat, vi_hat, ve_hat, _ = metrics(hat_solutions)
            records.append(RoundRecord(
                t, phi, phi_hat, phi_hat - f_star,
                max(vi, vi_hat), max(ve, ve_hat), dual, t * msgs_per_round,
            ))
            if (config.grad_tolerance is not None
                    and np.abs(grad).max(initial=0.0) <= config.grad_tolerance):
                converged = True
                break
        output_flat = state.average if state.round else start
        output_solutions = hat_solutions
        box_active = None
    else:
        theta = half_squared_diameter(config.box_bound, layout.size)
        state = PgdState(start, 0)
        output_solutions = None
        for t in range(1, config.rounds + 1):
            new_state, solutions, grad = pgd_round(state, engine, config, theta)
            phi, vi, ve, dual = metrics(solutions)
            records.append(RoundRecord(
                t - 1, phi, math.nan, phi - f_star, vi, ve, dual,
                (t - 1) * msgs_per_round,
            ))
            if (config.grad_tolerance is not None
                    and np.abs(grad).max(initial=0.0) <= config.grad_tolerance):
                converged = True
                output_solutions = solutions
                break
            state = new_state
        if output_solutions is None:
            # Final iterate never served a later round; evaluate it for the trace.
            output_solutions = engine.monitor(state.point)
            phi, vi, ve, dual = metrics(output_solutions)
            records.append(RoundRecord(
                state.round, phi, math.nan, phi - f_star, vi, ve, dual,
                state.round * msgs_per_round,
            ))
        output_flat = state.point
        box_active = bool(
            np.any(np.abs(output_flat) >= config.box_bound * (1 - 1e-12))
        )
        if box_active:
            logger.warning(
                "projection box is active at the final allocation; enlarge "
                "box_bound for a valid optimum certificate"
            )

    return RunResult(
        trace=RunTrace(n_cons, tuple(records)),
        final_state=state,
        output_slack=SlackState(layout, output_flat),
        output_primal=stacked_primal(output_solutions),
        output_solutions=output_solutions,
        converged=converged,
        box_active=box_active,
        messages=transport.messages,
    )


def estimate_gradient_bound(problem, topology, weights, box_bound: float,
                            interior_samples: int = 50, seed: int = 0) -> float:
    """Sampled bound on the allocation-cost gradient norm over the box.

    Evaluates the gradient at all box corners (capped at 2^10 corners) plus
    uniform interior samples, and doubles the largest norm seen.
    """
    layout = SlackLayout.from_topology(topology)
    n = layout.size
    if n == 0:
        return 1.0
    rng = np.random.default_rng(seed)
    points = []
    if n <= 10:
        for mask in range(2 ** n):
            corner = np.array([
                box_bound if mask >> k & 1 else -box_bound for k in range(n)
            ])
            points.append(corner)
    else:
        signs = rng.integers(0, 2, size=(2 ** 10, n)) * 2 - 1
        points.extend(box_bound * signs.astype(float))
    points.extend(rng.uniform(-box_bound, box_bound, size=(interior_samples, n)))

    worst = 0.0
    for flat in points:
        state = SlackState(layout, flat)
        solutions = solve_all_agents(state, problem, topology, weights)
        grad = assemble_gradient(solutions, topology, weights, layout)
        worst = max(worst, float(np.linalg.norm(grad)))
    return 2.0 * worst


def default_box_bound(problem, topology, weights, oracle=None) -> float:
    """10x the largest offset magnitude / optimal slack magnitude."""
    from .slack import feasible_slack_from_primal

    cons = problem.constraints
    scale = 0.0
    for i in range(1, problem.n_agents + 1):
        ineq, eq = cons.agent_rows(i)
        for _, off in list(ineq.values()) + list(eq.values()):
            scale = max(scale, abs(off))
    if oracle is not None:
        star = feasible_slack_from_primal(oracle.x, problem, topology, weights)
        if star.values.size:
            scale = max(scale, float(np.abs(star.values).max()))
    return 10.0 * max(scale, 1e-6)
