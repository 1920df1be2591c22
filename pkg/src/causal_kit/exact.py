"""Exact enumeration over discrete SCMs.

The joint is the product of one factor per node, built over the full
assignment grid. Marginals and conditionals are sums over axes of that grid.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .expr import BinOp, Num, Var, enumerate_expr, format_number
from .scm import (
    Constant,
    Deterministic,
    Discrete,
    DiscreteCpt,
    LinearGaussian,
    Scm,
    ScmError,
    check_valid,
    do_surgery,
    structure_query,
)

MAX_ENTRIES = 1 << 24
SNAP_ATOL = 1e-9


class InferenceError(ValueError):
    pass


class ZeroProbabilityError(InferenceError):
    """Evidence has probability zero, so the conditional is undefined."""


@dataclass(frozen=True, eq=False)
class DistTable:
    """Probabilities over the cross-product of ``domains``; axis i is ``variables[i]``."""

    variables: tuple
    domains: tuple
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "domains", tuple(tuple(float(v) for v in d) for d in self.domains))
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.shape != tuple(len(d) for d in self.domains):
            raise InferenceError(f"table shape {probs.shape} does not match domains")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    def total(self) -> float:
        return float(self.probs.sum())

    def axis(self, name) -> int:
        try:
            return self.variables.index(name)
        except ValueError:
            raise InferenceError(f"variable {name!r} is not in the table ({', '.join(self.variables)})") from None

    def value_index(self, name, value) -> int:
        dom = self.domains[self.axis(name)]
        for i, v in enumerate(dom):
            if abs(v - float(value)) <= SNAP_ATOL:
                return i
        raise InferenceError(f"{format_number(value)} is not a value of {name}")

    def prob(self, assignment: dict) -> float:
        """Probability of a full or partial assignment (unnamed variables summed out)."""
        marg = query(self, list(assignment), {}, normalize=False)
        return float(marg.probs[tuple(marg.value_index(k, v) for k, v in assignment.items())])

    def items(self):
        """(assignment tuple, probability) pairs in row-major order."""
        for idx in np.ndindex(*self.probs.shape):
            yield tuple(self.domains[i][j] for i, j in enumerate(idx)), float(self.probs[idx])

    def expectation(self, name) -> float:
        if len(self.variables) != 1 or self.variables[0] != name:
            table = query(self, [name], {})
        else:
            table = self
        return float(np.dot(np.asarray(table.domains[0]), table.probs))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(list(self.variables) + ["prob"]) + "\n")
        for key, p in self.items():
            buf.write(",".join([format_number(v) for v in key] + [repr(p)]) + "\n")
        return buf.getvalue()

    def to_dict(self) -> dict:
        def nest(axis, index):
            if axis == len(self.variables):
                return float(self.probs[tuple(index)])
            return {format_number(v): nest(axis + 1, index + [i]) for i, v in enumerate(self.domains[axis])}

        return {"variables": list(self.variables), "probabilities": nest(0, [])}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def allclose(self, other: "DistTable", atol=1e-12) -> bool:
        if set(self.variables) != set(other.variables):
            return False
        aligned = other.probs.transpose([other.variables.index(v) for v in self.variables])
        return aligned.shape == self.probs.shape and bool(np.allclose(self.probs, aligned, rtol=0, atol=atol))


@dataclass(frozen=True)
class Query:
    target: tuple
    evidence: dict = field(default_factory=dict)
    interventions: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "target", tuple(self.target))
        sets = [set(self.target), set(self.evidence), set(self.interventions)]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise InferenceError("target, evidence and interventions must not share variables")


def node_factor(scm: Scm, node) -> tuple:
    """Return ``(axes, array)`` with ``array[parent values..., node value] = p(node | parents)``."""
    mech = scm.mechanisms[node]
    domain = scm.domains[node]
    if not isinstance(domain, Discrete):
        raise InferenceError(f"node {node} is continuous; exact enumeration needs discrete domains (discretize it first)")
    parents = tuple(mech.parents) if not isinstance(mech, Deterministic) else tuple(sorted(mech.parents))
    pdoms = []
    for p in parents:
        pd = scm.domains[p]
        if not isinstance(pd, Discrete):
            raise InferenceError(f"parent {p} of {node} is continuous")
        pdoms.append(pd)
    k = len(domain)

    if isinstance(mech, DiscreteCpt):
        arr = np.zeros([len(d) for d in pdoms] + [k])
        for key, pmf in mech.table.items():
            idx = tuple(d.index(v) for d, v in zip(pdoms, key))
            arr[idx] = pmf
        return parents + (node,), arr
    if isinstance(mech, Constant):
        arr = np.zeros(k)
        arr[domain.index(mech.value)] = 1.0
        return (node,), arr
    if isinstance(mech, LinearGaussian):
        if mech.noise_std != 0.0:
            raise InferenceError(f"node {node} has Gaussian noise; exact enumeration needs discrete noise")
        expr = Num(mech.intercept)
        for p, w in mech.weights.items():
            expr = BinOp("+", expr, BinOp("*", Num(w), Var(p)))
        values, probs = enumerate_expr(expr, {p: d.values for p, d in zip(parents, pdoms)}, MAX_ENTRIES)
    elif isinstance(mech, Deterministic):
        if not all(t.discrete for t in mech.noise):
            raise InferenceError(f"node {node} has continuous noise; exact enumeration needs discrete noise")
        values, probs = enumerate_expr(mech.expr, {p: d.values for p, d in zip(parents, pdoms)}, MAX_ENTRIES)
    else:
        raise InferenceError(f"unsupported mechanism for {node}")

    dom = np.asarray(domain.values)
    hits = np.abs(values[..., None] - dom) <= SNAP_ATOL  # [..parents, noise, k]
    if not np.all(hits.any(axis=-1)):
        bad = values[~hits.any(axis=-1)]
        raise InferenceError(f"node {node} can take value {format_number(bad.flat[0])}, outside its domain {domain}")
    first = hits & (np.cumsum(hits, axis=-1) == 1)  # one domain value per outcome
    arr = np.einsum("...mk,m->...k", first.astype(np.float64), probs)
    return parents + (node,), arr


def joint_table(scm: Scm) -> DistTable:
    """p(all nodes) as the product of per-node factors, in topological order."""
    check_valid(scm)
    order = structure_query(scm.dag).order
    for node in order:
        if not isinstance(scm.domains[node], Discrete):
            raise InferenceError(f"node {node} is continuous; exact enumeration needs discrete domains (discretize it first)")
    sizes = [len(scm.domains[n]) for n in order]
    if math.prod(sizes) > MAX_ENTRIES:
        raise InferenceError(f"joint has {math.prod(sizes)} entries, above the cap of {MAX_ENTRIES}")
    pos = {n: i for i, n in enumerate(order)}
    joint = np.ones(sizes)
    for node in order:
        axes, arr = node_factor(scm, node)
        perm = sorted(range(len(axes)), key=lambda i: pos[axes[i]])
        arr = arr.transpose(perm)
        shape = [1] * len(order)
        for i in perm:
            shape[pos[axes[i]]] = arr.shape[perm.index(i)]
        joint = joint * arr.reshape(shape)
    return DistTable(order, [scm.domains[n].values for n in order], joint)


def query(table: DistTable, target, evidence: dict | None = None, *, normalize=True) -> DistTable:
    """p(target | evidence): slice on evidence, sum out the rest, renormalize."""
    target = list(target)
    evidence = dict(evidence or {})
    if len(set(target)) != len(target):
        raise InferenceError("target lists a variable twice")
    if set(target) & set(evidence):
        raise InferenceError("target and evidence overlap")
    index = [slice(None)] * len(table.variables)
    for name, value in evidence.items():
        index[table.axis(name)] = table.value_index(name, value)
    kept = [v for v in table.variables if v not in evidence]
    sliced = table.probs[tuple(index)]
    drop = tuple(i for i, v in enumerate(kept) if v not in target)
    marg = sliced.sum(axis=drop) if drop else sliced
    remaining = [v for v in kept if v in target]
    marg = marg.transpose([remaining.index(v) for v in target])
    if normalize:
        z = marg.sum()
        if not z > 0.0:
            shown = ", ".join(f"{k}={format_number(v)}" for k, v in evidence.items())
            raise ZeroProbabilityError(f"evidence {shown} has probability zero")
        marg = marg / z
    return DistTable(target, [table.domains[table.axis(v)] for v in target], marg)


def interventional_query(scm: Scm, q: Query) -> DistTable:
    """p(target | evidence ; do(interventions)) by surgery then enumeration."""
    surgered = do_surgery(scm, q.interventions) if q.interventions else scm
    return query(joint_table(surgered), q.target, q.evidence)


def ate_exact(scm: Scm, action, outcome, treated=1, control=0, condition: dict | None = None) -> float:
    """E[outcome | do(action=treated), condition] - E[outcome | do(action=control), condition]."""
    for name in (action, outcome, *(condition or {})):
        if name not in scm.mechanisms:
            raise ScmError(f"unknown node {name!r}")
    if float(treated) == float(control):
        do_surgery(scm, {action: treated})  # still validates the value
        return 0.0
    hi = interventional_query(scm, Query((outcome,), dict(condition or {}), {action: treated})).expectation(outcome)
    lo = interventional_query(scm, Query((outcome,), dict(condition or {}), {action: control})).expectation(outcome)
    return hi - lo


def discretize_normal(mean: float, std: float, points: int = 7) -> list:
    """Equal-mass grid approximation of N(mean, std): ``(value, prob)`` pairs.

    Each of ``points`` quantile bins is represented by its conditional mean, so
    the grid reproduces the mean exactly and slightly understates the variance.
    """
    from scipy.stats import norm

    edges = norm.ppf(np.linspace(0.0, 1.0, points + 1))
    pdf = norm.pdf(edges)
    centres = (pdf[:-1] - pdf[1:]) * points  # E[Z | bin] for equal-mass bins
    return [(mean + std * float(c), 1.0 / points) for c in centres]
