"""Communication graph, per-constraint participant topology, consensus weights.

Each coupling constraint only involves a subset of agents (its participants).
All information exchange for that constraint happens on the subgraph induced
by its participants, so the solver needs, per constraint: the participant
set, the induced edge set, per-agent neighborhoods (closed, i.e. including
the agent itself), and a symmetric doubly-stochastic weight matrix supported
on the induced edges.  Metropolis-Hastings weights are the default:

    p_ij = 1 / (1 + max(deg(i), deg(j)))   for induced edges {i, j},
    p_ii = 1 - sum_{j != i} p_ij,

where degrees are taken inside the induced subgraph.  Agent indices are
1-based throughout the public API.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    DisconnectedSubgraphError,
    ValidationError,
    WeightMatrixError,
)


@dataclass(frozen=True)
class Graph:
    """Undirected communication graph on agents 1..n_agents."""

    n_agents: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        if self.n_agents < 1:
            raise ValidationError("graph needs at least one agent")
        for i, j in self.edges:
            if not (1 <= i < j <= self.n_agents):
                raise ValidationError(
                    f"edge ({i}, {j}) out of range or not canonical (i < j)"
                )

    @classmethod
    def from_edges(cls, n_agents: int, edges) -> "Graph":
        """Build from any iterable of pairs; orientation and duplicates ignored."""
        canonical = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValidationError(f"self-loop on agent {i}")
            canonical.add((min(i, j), max(i, j)))
        return cls(n_agents, frozenset(canonical))

    def neighborhood(self, i: int) -> tuple[int, ...]:
        """Closed neighborhood of agent i (includes i), ascending."""
        out = {i}
        for a, b in self.edges:
            if a == i:
                out.add(b)
            elif b == i:
                out.add(a)
        return tuple(sorted(out))

    def degree(self, i: int) -> int:
        return len(self.neighborhood(i)) - 1


def _connected(nodes: tuple[int, ...], edges) -> bool:
    # BFS over the given edge set restricted to `nodes`.
    if len(nodes) <= 1:
        return True
    adjacency = {v: set() for v in nodes}
    for a, b in edges:
        if a in adjacency and b in adjacency:
            adjacency[a].add(b)
            adjacency[b].add(a)
    seen = {nodes[0]}
    frontier = [nodes[0]]
    while frontier:
        v = frontier.pop()
        for w in adjacency[v]:
            if w not in seen:
                seen.add(w)
                frontier.append(w)
    return len(seen) == len(nodes)


@dataclass(frozen=True)
class ConstraintTopology:
    """Participant sets, induced edges and closed neighborhoods per constraint.

    Constraints are indexed 1..n_constraints with inequalities first:
    constraint l <= m_ineq is inequality row l, constraint l > m_ineq is
    equality row l - m_ineq.
    """

    n_agents: int
    m_ineq: int
    q_eq: int
    participants: tuple[tuple[int, ...], ...]
    induced_edges: tuple[frozenset[tuple[int, int]], ...]
    agent_ineq_sets: tuple[tuple[int, ...], ...]
    agent_eq_sets: tuple[tuple[int, ...], ...]
    _neighborhoods: dict = field(repr=False)

    @property
    def n_constraints(self) -> int:
        return self.m_ineq + self.q_eq

    def participants_of(self, l: int) -> tuple[int, ...]:
        return self.participants[l - 1]

    def edges_of(self, l: int) -> frozenset[tuple[int, int]]:
        return self.induced_edges[l - 1]

    def neighborhood(self, l: int, i: int) -> tuple[int, ...]:
        """Closed neighborhood of agent i inside constraint l's subgraph."""
        return self._neighborhoods[(l, i)]

    def constraints_of(self, i: int) -> tuple[int, ...]:
        """All constraint indices (inequalities then shifted equalities) of agent i."""
        ineq = self.agent_ineq_sets[i - 1]
        eq = tuple(self.m_ineq + q for q in self.agent_eq_sets[i - 1])
        return ineq + eq


def induce_topology(problem, graph: Graph) -> ConstraintTopology:
    """Compute participant sets, induced subgraphs and neighborhoods.

    An agent participates in a constraint row iff its coefficient row is
    nonzero or its offset contribution is nonzero.  Deterministic: all sets
    are stored in ascending order, independent of edge insertion order.
    """
    cons = problem.constraints
    m_ineq, q_eq = cons.m_ineq, cons.q_eq
    n = graph.n_agents

    participants = []
    for l in range(1, m_ineq + q_eq + 1):
        members = []
        for i in range(1, n + 1):
            row = cons.row(i, l)
            if row is not None:
                coeffs, offset = row
                if offset != 0.0 or np.any(coeffs != 0.0):
                    members.append(i)
        participants.append(tuple(members))

    induced = []
    neighborhoods = {}
    for l, members in enumerate(participants, start=1):
        member_set = set(members)
        edges = frozenset(
            (a, b) for a, b in graph.edges if a in member_set and b in member_set
        )
        induced.append(edges)
        for i in members:
            close = {i}
            for a, b in edges:
                if a == i:
                    close.add(b)
                elif b == i:
                    close.add(a)
            neighborhoods[(l, i)] = tuple(sorted(close))

    agent_ineq = tuple(
        tuple(m for m in range(1, m_ineq + 1) if i in participants[m - 1])
        for i in range(1, n + 1)
    )
    agent_eq = tuple(
        tuple(q for q in range(1, q_eq + 1) if i in participants[m_ineq + q - 1])
        for i in range(1, n + 1)
    )
    return ConstraintTopology(
        n_agents=n,
        m_ineq=m_ineq,
        q_eq=q_eq,
        participants=tuple(participants),
        induced_edges=tuple(induced),
        agent_ineq_sets=agent_ineq,
        agent_eq_sets=agent_eq,
        _neighborhoods=neighborhoods,
    )


@dataclass(frozen=True)
class ConnectivityReport:
    """Per-constraint connectivity of the induced subgraphs."""

    connected: tuple[bool, ...]

    @property
    def all_connected(self) -> bool:
        return all(self.connected)

    def failures(self) -> tuple[int, ...]:
        return tuple(l for l, ok in enumerate(self.connected, start=1) if not ok)


def check_connectivity(topology: ConstraintTopology) -> ConnectivityReport:
    """Check that every constraint's participants induce a connected subgraph.

    Empty and singleton participant sets count as connected.
    """
    flags = tuple(
        _connected(topology.participants_of(l), topology.edges_of(l))
        for l in range(1, topology.n_constraints + 1)
    )
    return ConnectivityReport(flags)


# ---------------------------------------------------------------------------
# consensus weight matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightMatrix:
    """Symmetric doubly-stochastic weights on one constraint's subgraph.

    ``entries[a, b]`` is the weight between the a-th and b-th participant in
    ascending agent order.  Positive exactly on closed-neighborhood pairs.
    """

    constraint_index: int
    participants: tuple[int, ...]
    entries: np.ndarray

    def __post_init__(self):
        k = len(self.participants)
        if self.entries.shape != (k, k):
            raise WeightMatrixError(
                f"constraint {self.constraint_index}: weight matrix shape "
                f"{self.entries.shape} does not match {k} participants"
            )
        object.__setattr__(
            self, "_pos", {i: a for a, i in enumerate(self.participants)}
        )

    def position(self, i: int) -> int:
        return self._pos[i]

    def weight(self, i: int, j: int) -> float:
        return float(self.entries[self.position(i), self.position(j)])

    def validate(self, topology: ConstraintTopology, tol: float = 1e-12) -> None:
        """Raise WeightMatrixError unless all structural invariants hold."""
        p = self.entries
        k = len(self.participants)
        if k == 0:
            return
        if np.any(p < -tol):
            raise WeightMatrixError("negative weight entry")
        if not np.allclose(p, p.T, atol=tol, rtol=0):
            raise WeightMatrixError("weight matrix is not symmetric")
        if np.max(np.abs(p.sum(axis=1) - 1.0)) > tol:
            raise WeightMatrixError("weight matrix rows do not sum to 1")
        l = self.constraint_index
        for a, i in enumerate(self.participants):
            hood = topology.neighborhood(l, i)
            for b, j in enumerate(self.participants):
                inside = j in hood
                if inside and p[a, b] <= 0:
                    raise WeightMatrixError(
                        f"constraint {l}: weight ({i},{j}) should be positive"
                    )
                if not inside and p[a, b] != 0:
                    raise WeightMatrixError(
                        f"constraint {l}: nonzero weight ({i},{j}) off the subgraph"
                    )
        if not null_range_check(self):
            raise WeightMatrixError(
                f"constraint {l}: kernel of I - P is not spanned by the ones vector"
            )


def metropolis_weights(l: int, topology: ConstraintTopology) -> WeightMatrix:
    """Metropolis-Hastings weights on constraint l's induced subgraph."""
    members = topology.participants_of(l)
    k = len(members)
    entries = np.zeros((k, k))
    degree = {
        i: len(topology.neighborhood(l, i)) - 1 for i in members
    }
    pos = {i: a for a, i in enumerate(members)}
    for i, j in sorted(topology.edges_of(l)):
        w = 1.0 / (1.0 + max(degree[i], degree[j]))
        entries[pos[i], pos[j]] = w
        entries[pos[j], pos[i]] = w
    for a in range(k):
        entries[a, a] = 1.0 - (entries[a].sum() - entries[a, a])
    return WeightMatrix(l, members, entries)


def build_weights(topology: ConstraintTopology) -> dict[int, WeightMatrix]:
    """Metropolis weights for every constraint, keyed by constraint index."""
    report = check_connectivity(topology)
    if not report.all_connected:
        raise DisconnectedSubgraphError(
            f"constraints {report.failures()} induce disconnected subgraphs"
        )
    return {
        l: metropolis_weights(l, topology)
        for l in range(1, topology.n_constraints + 1)
    }


def null_range_check(weights: WeightMatrix, tol: float = 1e-10) -> bool:
    """True iff the kernel of I - P is exactly the span of the ones vector.

    Checked via the rank of I - P: for k participants the rank must be k - 1
    (singular values above ``tol``).  Trivially true for k <= 1.
    """
    k = len(weights.participants)
    if k <= 1:
        return True
    gap = np.eye(k) - weights.entries
    rank = int(np.sum(np.linalg.svd(gap, compute_uv=False) > tol))
    return rank == k - 1
