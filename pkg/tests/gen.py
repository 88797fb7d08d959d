"""Random problem instances for the test suite.

Two families:

* ``strongly_convex_instance`` — every Hessian is positive definite and each
  agent's constraint block has orthonormal rows scaled so that the row Gram
  dominates the Hessian spectrum.  That keeps the closed-form gradient
  Lipschitz bound valid, so the accelerated method's rate guarantee applies
  with gamma = 1 / (2 * bound).
* ``reduced_space_instance`` — rank-deficient (PSD) Hessians whose kernel
  directions are pinned by singleton equality rows, leaving the objective
  positive definite on the feasible subspace.  These exercise the projected
  method, which needs no strong convexity.

Both produce feasible problems by construction: offsets are balanced around
a sampled anchor point (with a strict margin on inequality rows).
"""

from __future__ import annotations

import numpy as np

from couplesolve import (
    AgentObjective,
    CouplingConstraints,
    Graph,
    ProblemSpec,
    build_weights,
    induce_topology,
)


def _random_connected_graph(rng: np.random.Generator, n: int) -> Graph:
    """Uniform random spanning tree order + a few extra chords."""
    order = rng.permutation(np.arange(1, n + 1))
    edges = set()
    for k in range(1, n):
        j = int(order[k])
        i = int(order[int(rng.integers(0, k))])
        edges.add((min(i, j), max(i, j)))
    for _ in range(int(rng.integers(0, n))):
        i, j = (int(v) for v in rng.integers(1, n + 1, size=2))
        if i != j:
            edges.add((min(i, j), max(i, j)))
    return Graph.from_edges(n, sorted(edges))


def _grow_participants(rng, graph, capacity, target_size):
    """Connected participant set among agents with spare row capacity."""
    candidates = [i for i in range(1, graph.n_agents + 1) if capacity[i] > 0]
    if not candidates:
        return []
    root = int(rng.choice(candidates))
    chosen = {root}
    while len(chosen) < target_size:
        frontier = sorted(
            j
            for i in chosen
            for j in graph.neighborhood(i)
            if j not in chosen and capacity[j] > 0
        )
        if not frontier:
            break
        chosen.add(int(rng.choice(frontier)))
    return sorted(chosen)


def _scaled_orthonormal_rows(rng, n_rows: int, dim: int, scale: float):
    """n_rows x dim block with rows forming a scaled orthonormal family."""
    raw = rng.standard_normal((dim, max(n_rows, 1)))
    q, _ = np.linalg.qr(raw)
    return scale * q[:, :n_rows].T


def strongly_convex_instance(seed: int):
    """Feasible instance with PD Hessians; returns (problem, topology, weights).

    3-10 agents with 1-4 dims each, 1-4 coupling rows total.  Hessian
    eigenvalues lie in [0.5, 2]; constraint rows are orthonormal scaled by
    1.5, so each row Gram is 2.25 * I and dominates the Hessian.  Every
    participant set is grown connected inside the communication graph and
    honors the agents' row capacity (rows per agent <= dim).
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 11))
    dims = [int(d) for d in rng.integers(1, 5, size=n)]
    graph = _random_connected_graph(rng, n)

    total = int(rng.integers(1, 5))
    m_ineq = int(rng.integers(0, total + 1))
    q_eq = total - m_ineq

    objectives = []
    for d in dims:
        basis, _ = np.linalg.qr(rng.standard_normal((d, d)))
        eigs = rng.uniform(0.5, 2.0, size=d)
        hessian = basis @ np.diag(eigs) @ basis.T
        hessian = 0.5 * (hessian + hessian.T)
        objectives.append(AgentObjective(hessian, rng.uniform(-1, 1, size=d)))

    capacity = {i: dims[i - 1] for i in range(1, n + 1)}
    rows = {}  # (l, agent) -> coeff placeholder, filled below
    participants = {}
    for l in range(1, total + 1):
        # At least one multi-agent constraint, else the allocation is inert
        # and step-size rules based on the gradient Lipschitz bound divide
        # by zero.
        size = int(rng.integers(2 if l == 1 else 1, n + 1))
        members = _grow_participants(rng, graph, capacity, size)
        if not members:  # all capacity consumed; retry with a fresh seed
            return strongly_convex_instance(seed + 7919)
        participants[l] = members
        for i in members:
            capacity[i] -= 1

    # One scaled-orthonormal block per agent across all its rows.
    agent_rows = {i: [l for l in range(1, total + 1) if i in participants[l]]
                  for i in range(1, n + 1)}
    for i, ls in agent_rows.items():
        if not ls:
            continue
        block = _scaled_orthonormal_rows(rng, len(ls), dims[i - 1], 1.5)
        for r, l in enumerate(ls):
            rows[(l, i)] = block[r]

    # Anchor point: equality rows balance exactly, inequalities keep a margin.
    anchor = {i: rng.uniform(-1, 1, size=dims[i - 1]) for i in range(1, n + 1)}
    cons = CouplingConstraints(n, m_ineq, q_eq)
    for l in range(1, total + 1):
        members = participants[l]
        raw = {i: rng.uniform(-0.5, 0.5) for i in members}
        aggregate = sum(float(rows[(l, i)] @ anchor[i]) + raw[i] for i in members)
        shift = (-aggregate - rng.uniform(0.2, 1.0) if l <= m_ineq else -aggregate)
        first = members[0]
        raw[first] += shift
        for i in members:
            if l <= m_ineq:
                cons.add_ineq_row(i, l, rows[(l, i)], raw[i])
            else:
                cons.add_eq_row(i, l - m_ineq, rows[(l, i)], raw[i])

    problem = ProblemSpec(tuple(objectives), cons, graph)
    topology = induce_topology(problem, graph)
    return problem, topology, build_weights(topology)


def reduced_space_instance(seed: int):
    """Feasible instance with singular Hessians; returns (problem, topology, weights).

    Each agent is planar with Hessian diag(h, 0); a per-agent equality row
    pins the flat coordinate so every subproblem stays bounded, and one or
    two inequality rows couple the agents along a line graph.  The stacked
    objective is PD on the feasible subspace even though no agent is
    strongly convex.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 7))
    graph = Graph.from_edges(n, [(i, i + 1) for i in range(1, n)])

    objectives = []
    for _ in range(n):
        h = float(rng.uniform(0.5, 2.0))
        objectives.append(
            AgentObjective(np.diag([h, 0.0]), rng.uniform(-1, 1, size=2))
        )

    two_spans = n >= 4 and rng.random() < 0.5
    if two_spans:
        split = int(rng.integers(2, n - 1))
        spans = [list(range(1, split + 1)), list(range(split + 1, n + 1))]
    else:
        spans = [list(range(1, n + 1))]
    m_ineq = len(spans)

    cons = CouplingConstraints(n, m_ineq, q_eq=n)
    pinned = rng.uniform(-1, 1, size=n)
    for i in range(1, n + 1):
        cons.add_eq_row(i, i, [0.0, 1.0], -float(pinned[i - 1]))

    anchor = np.column_stack([rng.uniform(-1, 1, size=n), pinned])
    for m, members in enumerate(spans, start=1):
        coeffs = {}
        for i in members:
            a1 = float(rng.uniform(0.5, 1.5)) * (1 if rng.random() < 0.5 else -1)
            coeffs[i] = np.array([a1, float(rng.uniform(-1, 1))])
        raw = {i: float(rng.uniform(-0.5, 0.5)) for i in members}
        aggregate = sum(float(coeffs[i] @ anchor[i - 1]) + raw[i] for i in members)
        raw[members[0]] += -aggregate - float(rng.uniform(0.2, 1.0))
        for i in members:
            cons.add_ineq_row(i, m, coeffs[i], raw[i])

    problem = ProblemSpec(tuple(objectives), cons, graph)
    topology = induce_topology(problem, graph)
    return problem, topology, build_weights(topology)
