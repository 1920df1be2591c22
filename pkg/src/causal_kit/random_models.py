"""Seeded generators of random models used by the fixture set and property tests."""
from __future__ import annotations

import itertools

import numpy as np

from .expr import BinOp, Call, Neg, Noise, Num, Var, enumerate_expr
from .scm import REAL, Constant, Dag, Deterministic, Discrete, DiscreteCpt, LinearGaussian, Scm


def _pmf(gen, k: int, low: float = 0.0) -> tuple:
    # rounded so printed tables stay short; the last entry absorbs rounding
    p = gen.dirichlet(np.ones(k)) * (1.0 - k * low) + low
    p = np.round(p, 3)
    p[-1] = round(1.0 - float(p[:-1].sum()), 3)
    if p[-1] < 0:
        return _pmf(gen, k, low)
    return tuple(float(v) for v in p)


def _cpt(gen, parents, domains, k, low=0.0):
    keys = itertools.product(*(domains[p].values for p in parents))
    return DiscreteCpt(tuple(parents), {key: _pmf(gen, k, low) for key in keys})


def _num(gen, nonzero=False) -> Num:
    v = float(gen.integers(-20, 21)) / 4.0
    if nonzero and v == 0.0:
        v = 1.5
    return Num(v)


def _random_expr(gen, parents, depth=0):
    roll = gen.random()
    if depth >= 3 or roll < 0.3:
        if parents and gen.random() < 0.7:
            return Var(str(gen.choice(parents)))
        if gen.random() < 0.2:
            return Noise("bernoulli", (round(float(gen.random()), 2),))
        return _num(gen)
    if roll < 0.7:
        op = str(gen.choice(["+", "-", "*", "<", ">=", "=="]))
        return BinOp(op, _random_expr(gen, parents, depth + 1), _random_expr(gen, parents, depth + 1))
    if roll < 0.8:
        return BinOp("/", _random_expr(gen, parents, depth + 1), _num(gen, nonzero=True))
    if roll < 0.9:
        return Neg(_random_expr(gen, parents, depth + 1))
    fn = str(gen.choice(["min", "max", "ind"]))
    if fn == "ind":
        return Call("ind", (BinOp(">", _random_expr(gen, parents, depth + 1), _num(gen)),))
    return Call(fn, (_random_expr(gen, parents, depth + 1), _random_expr(gen, parents, depth + 1)))


def _snap(values) -> tuple:
    out = []
    for v in sorted(float(x) for x in np.unique(values)):
        if not out or abs(v - out[-1]) > 1e-9:
            out.append(v)
    return tuple(out)


def random_scm(seed: int, max_nodes: int = 6) -> Scm:
    """Mixed model: tables, linear-Gaussian, expression and constant nodes."""
    gen = np.random.default_rng(seed)
    n = int(gen.integers(1, max_nodes + 1))
    names = []
    mechs, domains = {}, {}
    for i in range(n):
        name = f"v{i}" + ("'" if gen.random() < 0.2 else "")
        discrete = [p for p in names if isinstance(domains[p], Discrete)]
        kind = str(gen.choice(["cpt", "gauss", "expr", "point"], p=[0.4, 0.25, 0.3, 0.05]))
        if kind == "cpt":
            parents = [str(p) for p in gen.permutation(discrete)[: int(gen.integers(0, 3))]] if discrete else []
            k = int(gen.integers(2, 4))
            domains[name] = Discrete(tuple(float(v) for v in range(k)))
            mechs[name] = _cpt(gen, parents, domains, k)
        elif kind == "gauss":
            parents = [str(p) for p in gen.permutation(names)[: int(gen.integers(0, 3))]] if names else []
            weights = {p: _num(gen).value for p in parents}
            mechs[name] = LinearGaussian(weights, _num(gen).value, abs(_num(gen, nonzero=True).value))
            domains[name] = REAL
        elif kind == "expr":
            expr = _random_expr(gen, names)
            mech = Deterministic(expr)
            inputs = mech.parents
            if all(isinstance(domains[p], Discrete) for p in inputs):
                values, _ = enumerate_expr(expr, {p: domains[p].values for p in inputs})
                domains[name] = Discrete(_snap(values))
            else:
                domains[name] = REAL
            mechs[name] = mech
        else:
            v = _num(gen).value
            mechs[name] = Constant(v)
            domains[name] = Discrete((v,))
        names.append(name)
    return Scm.from_mechanisms(mechs, domains)


def random_binary_dag(seed: int, max_nodes: int = 5, edge_prob: float = 0.5):
    """Random binary Bayesian network plus a random (source, target, observed) query.

    CPT entries are kept inside [0.1, 0.9] so that d-connected pairs are
    dependent with overwhelming probability.
    """
    gen = np.random.default_rng(seed)
    n = int(gen.integers(2, max_nodes + 1))
    names = [f"n{i}" for i in gen.permutation(n)]
    binary = Discrete((0.0, 1.0))
    domains = {v: binary for v in names}
    mechs = {}
    for i, v in enumerate(names):
        parents = [names[j] for j in range(i) if gen.random() < edge_prob]
        mechs[v] = DiscreteCpt(tuple(parents), {
            key: (1.0 - q, q)
            for key in itertools.product((0.0, 1.0), repeat=len(parents))
            for q in [round(float(gen.uniform(0.1, 0.9)), 3)]
        })
    scm = Scm.from_mechanisms(mechs, domains)
    u, v = (str(x) for x in gen.choice(names, size=2, replace=False))
    rest = [x for x in names if x not in (u, v)]
    observed = tuple(sorted(x for x in rest if gen.random() < 0.4))
    return scm, u, v, observed


def confounder_graph(index: int, seed: int = 64) -> Scm:
    """Binary x -> a, x -> y, a -> y with random tables.

    Every 8th graph (index % 8 == 7) has an x -> a table whose rows are equal,
    so the action does not depend on x. Otherwise the two rows of p(a=1 | x)
    differ by at least 0.2. For each action, p(y=1 | a, x) differs across x
    by at least 0.2 as well.
    """
    gen = np.random.default_rng([seed, index])
    b = Discrete((0.0, 1.0))
    px = round(float(gen.uniform(0.2, 0.8)), 3)
    if index % 8 == 7:
        q = round(float(gen.uniform(0.1, 0.9)), 3)
        qa = (q, q)
    else:
        while True:
            qa = tuple(round(float(v), 3) for v in gen.uniform(0.05, 0.95, size=2))
            if abs(qa[0] - qa[1]) >= 0.2:
                break
    qy = {}
    for a in (0.0, 1.0):
        while True:
            q0, q1 = (round(float(v), 3) for v in gen.uniform(0.05, 0.95, size=2))
            if abs(q0 - q1) >= 0.2:
                break
        qy[(a, 0.0)], qy[(a, 1.0)] = q0, q1
    mechs = {
        "x": DiscreteCpt((), {(): (1.0 - px, px)}),
        "a": DiscreteCpt(("x",), {(x,): (1.0 - q, q) for x, q in zip((0.0, 1.0), qa)}),
        "y": DiscreteCpt(("a", "x"), {key: (1.0 - q, q) for key, q in qy.items()}),
    }
    return Scm(Dag(("a", "x", "y"), (("x", "a"), ("x", "y"), ("a", "y"))), mechs, {"x": b, "a": b, "y": b})


def confounder_fixtures(count: int = 64, seed: int = 64) -> list:
    return [confounder_graph(i, seed) for i in range(count)]


def binary_covariate_scm(seed: int, n_covariates: int = 2) -> Scm:
    """Binary action and outcome with up to three binary confounders and overlap everywhere."""
    gen = np.random.default_rng(seed)
    b = Discrete((0.0, 1.0))
    xs = [f"x{i}" for i in range(n_covariates)]
    mechs = {x: DiscreteCpt((), {(): _pmf(gen, 2, 0.2)}) for x in xs}
    domains = {x: b for x in xs}
    domains.update({"a": b, "y": b})
    mechs["a"] = _cpt(gen, xs, domains, 2, low=0.15)
    mechs["y"] = _cpt(gen, ["a", *xs], domains, 2, low=0.05)
    return Scm.from_mechanisms(mechs, domains)
