"""DAGs, structural causal models and do-operator surgery."""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

from .expr import Expr, format_number, free_vars, noise_terms


class ScmError(ValueError):
    """Invalid model, node or intervention."""


class CycleError(ScmError):
    def __init__(self, nodes):
        self.nodes = tuple(nodes)
        super().__init__("graph has a cycle through " + ", ".join(self.nodes))


# -- domains ---------------------------------------------------------------


@dataclass(frozen=True)
class Discrete:
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def index(self, value) -> int:
        for i, v in enumerate(self.values):
            if abs(v - float(value)) <= 1e-9:
                return i
        raise ScmError(f"value {format_number(value)} is not in domain {self}")

    def __contains__(self, value) -> bool:
        return any(abs(v - float(value)) <= 1e-9 for v in self.values)

    def __len__(self):
        return len(self.values)

    def __str__(self):
        return "{" + ", ".join(format_number(v) for v in self.values) + "}"


@dataclass(frozen=True)
class Continuous:
    def __str__(self):
        return "real"


REAL = Continuous()


# -- mechanisms ------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteCpt:
    """Conditional probability table.

    ``table`` maps a tuple of parent values (ordered as ``parents``) to a pmf
    listed in the order of the node's domain values. Construction puts the
    parents in sorted order so equal tables compare equal.
    """

    parents: tuple
    table: Mapping

    def __post_init__(self):
        parents = tuple(self.parents)
        order = sorted(range(len(parents)), key=lambda i: parents[i])
        rows = {}
        for key, pmf in dict(self.table).items():
            key = tuple(float(k) for k in (key if isinstance(key, tuple) else (key,)))
            if len(key) != len(parents):
                raise ScmError(f"CPT row {key} does not match parents {parents}")
            rows[tuple(key[i] for i in order)] = tuple(float(p) for p in pmf)
        object.__setattr__(self, "parents", tuple(parents[i] for i in order))
        object.__setattr__(self, "table", MappingProxyType(dict(sorted(rows.items()))))

    def __eq__(self, other):
        return isinstance(other, DiscreteCpt) and self.parents == other.parents and dict(self.table) == dict(other.table)

    def __hash__(self):
        return hash((self.parents, tuple(self.table.items())))


@dataclass(frozen=True)
class LinearGaussian:
    """``node = intercept + sum(weights[p] * p) + noise_std * N(0, 1)``."""

    weights: Mapping
    intercept: float = 0.0
    noise_std: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "weights", MappingProxyType({k: float(v) for k, v in sorted(dict(self.weights).items())}))
        object.__setattr__(self, "intercept", float(self.intercept))
        object.__setattr__(self, "noise_std", float(self.noise_std))

    @property
    def parents(self):
        return tuple(self.weights)

    def __eq__(self, other):
        return (
            isinstance(other, LinearGaussian)
            and dict(self.weights) == dict(other.weights)
            and self.intercept == other.intercept
            and self.noise_std == other.noise_std
        )

    def __hash__(self):
        return hash((tuple(self.weights.items()), self.intercept, self.noise_std))


@dataclass(frozen=True)
class Deterministic:
    """``node = expr(parents, noise...)`` with noise terms written inline."""

    expr: Expr

    @property
    def parents(self):
        return free_vars(self.expr)

    @property
    def noise(self):
        return noise_terms(self.expr)


@dataclass(frozen=True)
class Constant:
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))

    @property
    def parents(self):
        return ()


Mechanism = DiscreteCpt | LinearGaussian | Deterministic | Constant


def parents_of(mechanism) -> tuple:
    return tuple(sorted(mechanism.parents))


# -- graph -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Dag:
    nodes: tuple
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", frozenset(tuple(e) for e in self.edges))

    def __eq__(self, other):
        return isinstance(other, Dag) and set(self.nodes) == set(other.nodes) and self.edges == other.edges

    def __hash__(self):
        return hash((frozenset(self.nodes), self.edges))

    def parents(self, node) -> tuple:
        return tuple(sorted(s for s, t in self.edges if t == node))

    def children(self, node) -> tuple:
        return tuple(sorted(t for s, t in self.edges if s == node))

    def descendants(self, node) -> set:
        kids = {}
        for s, t in self.edges:
            kids.setdefault(s, []).append(t)
        seen, stack = set(), [node]
        while stack:
            for nxt in kids.get(stack.pop(), ()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return seen


@dataclass(frozen=True)
class Structure:
    order: tuple
    parents: Mapping
    children: Mapping


def structure_query(dag: Dag) -> Structure:
    """Topological order (ties broken by name), parents and children maps.

    Raises CycleError on cyclic input.
    """
    nodes = set(dag.nodes)
    parents = {n: [] for n in dag.nodes}
    children = {n: [] for n in dag.nodes}
    for s, t in dag.edges:
        if s not in nodes or t not in nodes:
            raise ScmError(f"edge ({s}, {t}) references an undeclared node")
        parents[t].append(s)
        children[s].append(t)
    indegree = {n: len(parents[n]) for n in dag.nodes}
    heap = [n for n, d in indegree.items() if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        n = heapq.heappop(heap)
        order.append(n)
        for c in children[n]:
            indegree[c] -= 1
            if indegree[c] == 0:
                heapq.heappush(heap, c)
    if len(order) != len(nodes):
        raise CycleError(sorted(n for n, d in indegree.items() if d > 0))
    return Structure(
        order=tuple(order),
        parents=MappingProxyType({n: tuple(sorted(p)) for n, p in parents.items()}),
        children=MappingProxyType({n: tuple(sorted(c)) for n, c in children.items()}),
    )


# -- scm -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Scm:
    dag: Dag
    mechanisms: Mapping
    domains: Mapping

    def __post_init__(self):
        object.__setattr__(self, "mechanisms", MappingProxyType(dict(self.mechanisms)))
        object.__setattr__(self, "domains", MappingProxyType(dict(self.domains)))

    @classmethod
    def from_mechanisms(cls, mechanisms: Mapping, domains: Mapping | None = None) -> "Scm":
        """Build an SCM whose edges are read off the mechanisms' parent sets."""
        domains = dict(domains or {})
        for node in mechanisms:
            domains.setdefault(node, REAL)
        edges = {(p, node) for node, mech in mechanisms.items() for p in mech.parents}
        return cls(Dag(tuple(mechanisms), frozenset(edges)), mechanisms, domains)

    @property
    def nodes(self) -> tuple:
        return self.dag.nodes

    def order(self) -> tuple:
        return structure_query(self.dag).order

    def is_discrete(self, node) -> bool:
        return isinstance(self.domains[node], Discrete)

    def __eq__(self, other):
        return (
            isinstance(other, Scm)
            and self.dag == other.dag
            and dict(self.mechanisms) == dict(other.mechanisms)
            and dict(self.domains) == dict(other.domains)
        )

    def __hash__(self):
        return hash(self.dag)


@dataclass(frozen=True)
class StructuralError:
    kind: str
    message: str
    nodes: tuple = ()

    def __str__(self):
        return f"{self.kind}: {self.message}"


def validate(scm: Scm) -> list:
    """Every violated invariant of the graph, mechanisms and domains; [] when valid."""
    errors = []
    dag = scm.dag
    names = list(dag.nodes)
    declared = set(names)

    for name, count in _counts(names).items():
        if count > 1:
            errors.append(StructuralError("duplicate-node", f"node {name} declared {count} times", (name,)))
    for s, t in sorted(dag.edges):
        if s == t:
            errors.append(StructuralError("self-loop", f"edge ({s}, {t}) is a self-loop", (s,)))
        for end in (s, t):
            if end not in declared:
                errors.append(StructuralError("unknown-node", f"edge ({s}, {t}) references undeclared node {end}", (end,)))
    for cycle in _cycles(dag):
        errors.append(StructuralError("cycle", "cycle through " + ", ".join(cycle), tuple(cycle)))

    for node in names:
        if node not in scm.mechanisms:
            errors.append(StructuralError("missing-mechanism", f"node {node} has no mechanism", (node,)))
        if node not in scm.domains:
            errors.append(StructuralError("missing-domain", f"node {node} has no domain", (node,)))
    for node in scm.mechanisms:
        if node not in declared:
            errors.append(StructuralError("unknown-node", f"mechanism for undeclared node {node}", (node,)))

    for node in names:
        mech = scm.mechanisms.get(node)
        domain = scm.domains.get(node)
        if mech is None or domain is None:
            continue
        graph_parents = set(dag.parents(node))
        mech_parents = set(mech.parents)
        if graph_parents != mech_parents:
            errors.append(
                StructuralError(
                    "parent-mismatch",
                    f"node {node}: mechanism uses {sorted(mech_parents)} but graph parents are {sorted(graph_parents)}",
                    (node,),
                )
            )
        errors.extend(_check_mechanism(scm, node, mech, domain))
    return errors


def _counts(items):
    out = {}
    for item in items:
        out[item] = out.get(item, 0) + 1
    return out


def _cycles(dag: Dag) -> list:
    """Node sets of strongly connected components that contain a cycle."""
    adj = {}
    for s, t in dag.edges:
        if s != t:
            adj.setdefault(s, []).append(t)
    index, low, on_stack, stack, found = {}, {}, set(), [], []
    counter = itertools.count()

    def strongconnect(v):
        index[v] = low[v] = next(counter)
        stack.append(v)
        on_stack.add(v)
        for w in adj.get(v, ()):
            if w not in index:
                strongconnect(w)
                low[v] = min(low[v], low[w])
            elif w in on_stack:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            comp = []
            while True:
                w = stack.pop()
                on_stack.discard(w)
                comp.append(w)
                if w == v:
                    break
            if len(comp) > 1:
                found.append(sorted(comp))

    for v in sorted(set(adj) | {t for ts in adj.values() for t in ts}):
        if v not in index:
            strongconnect(v)
    return sorted(found)


def _check_mechanism(scm, node, mech, domain) -> list:
    errs = []
    if isinstance(mech, DiscreteCpt):
        if not isinstance(domain, Discrete):
            return [StructuralError("domain-kind", f"node {node} has a CPT but a continuous domain", (node,))]
        parent_domains = []
        for p in mech.parents:
            pd = scm.domains.get(p)
            if not isinstance(pd, Discrete):
                errs.append(StructuralError("domain-kind", f"CPT of {node} conditions on non-discrete parent {p}", (node, p)))
                return errs
            parent_domains.append(pd.values)
        expected = set(itertools.product(*parent_domains))
        present = set(mech.table)
        for key in sorted(expected - present):
            errs.append(StructuralError("cpt-coverage", f"CPT of {node} has no row for {_fmt_row(mech.parents, key)}", (node,)))
        for key in sorted(present - expected):
            errs.append(StructuralError("cpt-coverage", f"CPT of {node} has a row for out-of-domain {_fmt_row(mech.parents, key)}", (node,)))
        for key, pmf in mech.table.items():
            if len(pmf) != len(domain):
                errs.append(StructuralError("cpt-shape", f"CPT of {node} row {_fmt_row(mech.parents, key)} has {len(pmf)} entries for {len(domain)} values", (node,)))
                continue
            if any(p < 0 or not math.isfinite(p) for p in pmf):
                errs.append(StructuralError("cpt-normalization", f"CPT of {node} row {_fmt_row(mech.parents, key)} has a negative or non-finite entry", (node,)))
            total = math.fsum(pmf)
            if abs(total - 1.0) > 1e-9:
                errs.append(StructuralError("cpt-normalization", f"CPT of {node} row {_fmt_row(mech.parents, key)} sums to {total:.12g}", (node,)))
    elif isinstance(mech, LinearGaussian):
        if isinstance(domain, Discrete):
            errs.append(StructuralError("domain-kind", f"node {node} is linear-Gaussian but has a discrete domain", (node,)))
        if not (mech.noise_std >= 0 and math.isfinite(mech.noise_std)):
            errs.append(StructuralError("negative-std", f"node {node} has noise std {mech.noise_std}", (node,)))
        if not all(math.isfinite(w) for w in list(mech.weights.values()) + [mech.intercept]):
            errs.append(StructuralError("non-finite", f"node {node} has non-finite coefficients", (node,)))
    elif isinstance(mech, Deterministic):
        for term in mech.noise:
            problem = term.check()
            if problem:
                errs.append(StructuralError("bad-noise", f"node {node}: {problem}", (node,)))
    elif isinstance(mech, Constant):
        if not math.isfinite(mech.value):
            errs.append(StructuralError("non-finite", f"node {node} constant is not finite", (node,)))
        elif isinstance(domain, Discrete) and mech.value not in domain:
            errs.append(StructuralError("value-domain", f"node {node} constant {format_number(mech.value)} is outside {domain}", (node,)))
    else:
        errs.append(StructuralError("mechanism-kind", f"node {node} has unsupported mechanism {type(mech).__name__}", (node,)))
    return errs


def _fmt_row(parents, key) -> str:
    if not parents:
        return "()"
    return ", ".join(f"{p}={format_number(v)}" for p, v in zip(parents, key))


def check_valid(scm: Scm) -> Scm:
    errors = validate(scm)
    if errors:
        raise ScmError("invalid model: " + "; ".join(str(e) for e in errors))
    return scm


def do_surgery(scm: Scm, interventions: Mapping) -> Scm:
    """Replace each intervened node's mechanism by a constant and cut its incoming edges."""
    mechanisms = dict(scm.mechanisms)
    for node, value in interventions.items():
        if node not in scm.mechanisms:
            raise ScmError(f"cannot intervene on unknown node {node!r}")
        domain = scm.domains[node]
        if isinstance(domain, Discrete) and value not in domain:
            raise ScmError(f"do({node}={format_number(value)}) is outside the domain {domain}")
        if isinstance(domain, Discrete):
            value = domain.values[domain.index(value)]
        mechanisms[node] = Constant(value)
    edges = frozenset(e for e in scm.dag.edges if e[1] not in interventions)
    return Scm(Dag(scm.dag.nodes, edges), mechanisms, scm.domains)
