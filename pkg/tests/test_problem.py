import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import couplesolve as cs
from couplesolve.exceptions import RankDeficiencyError, ValidationError
from couplesolve.problem import stacked_rows


def test_objective_value_and_curvature():
    obj = cs.AgentObjective(np.diag([2.0, 4.0]), np.array([1.0, 0.0]), 3.0)
    assert obj.value(np.array([1.0, 1.0])) == pytest.approx(3 + 1 + 3)
    lo, hi = obj.curvature_range()
    assert lo == pytest.approx(2.0)
    assert hi == pytest.approx(4.0)


def test_asymmetric_hessian_rejected():
    with pytest.raises(ValidationError):
        cs.AgentObjective(np.array([[1.0, 0.5], [0.0, 1.0]]), np.zeros(2))


def test_indefinite_hessian_rejected():
    with pytest.raises(ValidationError):
        cs.AgentObjective(np.array([[-1.0]]), np.zeros(1))


def test_linear_term_length_checked():
    with pytest.raises(ValidationError):
        cs.AgentObjective(np.eye(2), np.zeros(3))


def test_duplicate_row_rejected():
    cons = cs.CouplingConstraints(2, m_ineq=1, q_eq=0)
    cons.add_ineq_row(1, 1, [1.0], 0.0)
    with pytest.raises(ValidationError):
        cons.add_ineq_row(1, 1, [2.0], 0.0)


def test_row_index_range_checked():
    cons = cs.CouplingConstraints(2, m_ineq=1, q_eq=1)
    with pytest.raises(ValidationError):
        cons.add_ineq_row(1, 2, [1.0], 0.0)
    with pytest.raises(ValidationError):
        cons.add_eq_row(1, 0, [1.0], 0.0)
    with pytest.raises(ValidationError):
        cons.add_ineq_row(3, 1, [1.0], 0.0)


def test_all_zero_row_dropped():
    cons = cs.CouplingConstraints(1, m_ineq=1, q_eq=0)
    cons.add_ineq_row(1, 1, [0.0, 0.0], 0.0)
    ineq, eq = cons.agent_rows(1)
    assert ineq == {} and eq == {}


def test_combined_row_lookup(toy):
    problem, _, _ = toy
    coeffs, offset = problem.constraints.row(1, 1)  # equality is constraint 1
    assert coeffs.tolist() == [1.0]
    assert offset == -1.0


def test_dimension_cross_checks(toy):
    problem, _, _ = toy
    obj = cs.AgentObjective(np.eye(2), np.zeros(2))
    cons = cs.CouplingConstraints(2, m_ineq=0, q_eq=1)
    cons.add_eq_row(1, 1, [1.0], -1.0)  # one coeff for a 2-dim agent
    graph = cs.Graph.from_edges(2, [(1, 2)])
    with pytest.raises(ValidationError):
        cs.ProblemSpec((obj, obj), cons, graph)


def test_graph_size_must_match_agent_count():
    obj = cs.AgentObjective(np.eye(1), np.zeros(1))
    cons = cs.CouplingConstraints(2, m_ineq=0, q_eq=0)
    graph = cs.Graph.from_edges(3, [(1, 2), (2, 3)])
    with pytest.raises(ValidationError):
        cs.ProblemSpec((obj, obj), cons, graph)


def test_block_slices_and_split():
    objs = (
        cs.AgentObjective(np.eye(2), np.zeros(2)),
        cs.AgentObjective(np.eye(3), np.zeros(3)),
    )
    cons = cs.CouplingConstraints(2, m_ineq=0, q_eq=0)
    graph = cs.Graph.from_edges(2, [(1, 2)])
    problem = cs.ProblemSpec(objs, cons, graph)
    x = np.arange(5.0)
    blocks = problem.split(x)
    assert blocks[0].tolist() == [0.0, 1.0]
    assert blocks[1].tolist() == [2.0, 3.0, 4.0]


def test_toy_objective_and_violation(toy):
    problem, _, _ = toy
    assert cs.objective_value(problem, np.array([1.0, 1.0])) == pytest.approx(1.0)
    ineq, eq = cs.aggregate_violation(problem, np.array([0.0, 2.0]))
    assert ineq.size == 0
    assert eq[0] == pytest.approx(0.0)
    vi, ve = cs.max_violation(problem, np.array([0.0, 0.0]))
    assert vi == 0.0
    assert ve == pytest.approx(2.0)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 1))
@settings(max_examples=50, deadline=None)
def test_aggregate_residual_is_affine(a, b, w):
    # residuals of a convex combination are the convex combination of the
    # residuals; this is what makes every interpolated allocation feasible
    obj = cs.AgentObjective(np.eye(1), np.zeros(1))
    cons = cs.CouplingConstraints(2, m_ineq=1, q_eq=0)
    cons.add_ineq_row(1, 1, [2.0], 0.5)
    cons.add_ineq_row(2, 1, [-1.0], 1.5)
    graph = cs.Graph.from_edges(2, [(1, 2)])
    problem = cs.ProblemSpec((obj, obj), cons, graph)
    xa = np.array([a, b])
    xb = np.array([b, a])
    ra, _ = cs.aggregate_violation(problem, xa)
    rb, _ = cs.aggregate_violation(problem, xb)
    rc, _ = cs.aggregate_violation(problem, w * xa + (1 - w) * xb)
    assert rc[0] == pytest.approx(w * ra[0] + (1 - w) * rb[0], abs=1e-9)


def test_licq_report_toy(toy):
    problem, _, _ = toy
    report = cs.validate_licq(problem)
    assert report.all_full_rank
    assert report.failures() == ()
    assert report.agents[0].gram_min == pytest.approx(1.0)


def test_licq_detects_dependent_rows():
    obj = cs.AgentObjective(np.eye(2), np.zeros(2))
    cons = cs.CouplingConstraints(1, m_ineq=2, q_eq=0)
    cons.add_ineq_row(1, 1, [1.0, 1.0], 0.0)
    cons.add_ineq_row(1, 2, [2.0, 2.0], 0.0)  # same direction
    graph = cs.Graph(1, frozenset())
    problem = cs.ProblemSpec((obj,), cons, graph)
    report = cs.validate_licq(problem)
    assert report.failures() == (1,)


def test_licq_more_rows_than_dims_fails():
    obj = cs.AgentObjective(np.eye(1), np.zeros(1))
    cons = cs.CouplingConstraints(1, m_ineq=2, q_eq=0)
    cons.add_ineq_row(1, 1, [1.0], 0.0)
    cons.add_ineq_row(1, 2, [-1.0], 0.0)
    graph = cs.Graph(1, frozenset())
    problem = cs.ProblemSpec((obj,), cons, graph)
    assert cs.validate_licq(problem).failures() == (1,)


def test_agent_without_rows_passes_licq():
    obj = cs.AgentObjective(np.eye(1), np.zeros(1))
    cons = cs.CouplingConstraints(2, m_ineq=1, q_eq=0)
    cons.add_ineq_row(1, 1, [1.0], 0.0)
    graph = cs.Graph.from_edges(2, [(1, 2)])
    problem = cs.ProblemSpec((obj, obj), cons, graph)
    report = cs.validate_licq(problem)
    assert report.all_full_rank
    assert report.agents[1].n_rows == 0
    assert stacked_rows(problem, 2).shape == (0, 1)


def test_operator_norms_toy(toy):
    problem, topology, weights = toy
    norms = cs.operator_norms(topology, weights)
    # equal-split two-agent averaging: I - P has eigenvalues {0, 1}
    assert norms[1] == pytest.approx(1.0)


def test_lipschitz_bound_toy(toy):
    problem, topology, weights = toy
    assert cs.lipschitz_bound(problem, topology, weights) == pytest.approx(
        math.sqrt(2.0))


def test_lipschitz_needs_strong_convexity(toy):
    _, topology, weights = toy
    obj = cs.AgentObjective(np.diag([1.0, 0.0]), np.zeros(2))
    cons = cs.CouplingConstraints(2, m_ineq=0, q_eq=1)
    cons.add_eq_row(1, 1, [1.0, 0.0], -1.0)
    cons.add_eq_row(2, 1, [1.0, 0.0], -1.0)
    graph = cs.Graph.from_edges(2, [(1, 2)])
    problem = cs.ProblemSpec((obj, obj), cons, graph)
    topo = cs.induce_topology(problem, graph)
    w = cs.build_weights(topo)
    with pytest.raises(ValidationError):
        cs.lipschitz_bound(problem, topo, w)


def test_lipschitz_refuses_rank_deficient_rows():
    obj = cs.AgentObjective(np.eye(2), np.zeros(2))
    cons = cs.CouplingConstraints(2, m_ineq=2, q_eq=0)
    cons.add_ineq_row(1, 1, [1.0, 1.0], 0.0)
    cons.add_ineq_row(1, 2, [2.0, 2.0], 0.0)
    cons.add_ineq_row(2, 1, [1.0, 0.0], 0.0)
    cons.add_ineq_row(2, 2, [0.0, 1.0], 0.0)
    graph = cs.Graph.from_edges(2, [(1, 2)])
    problem = cs.ProblemSpec((obj, obj), cons, graph)
    topo = cs.induce_topology(problem, graph)
    w = cs.build_weights(topo)
    with pytest.raises(RankDeficiencyError):
        cs.lipschitz_bound(problem, topo, w)
