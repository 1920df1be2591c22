"""Arithmetic expressions for deterministic mechanisms.

Expressions are immutable trees. Noise terms (``normal(0, 1)`` and friends)
appear inline; each occurrence is an independent exogenous draw, numbered by
its position in a left-to-right traversal.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

BINARY_OPS = ("+", "-", "*", "/", "<", "<=", ">", ">=", "==", "!=")
COMPARISONS = ("<", "<=", ">", ">=", "==", "!=")
FUNCTIONS = {"min": 2, "max": 2, "ind": 1}
DISTRIBUTIONS = ("normal", "bernoulli", "uniform", "point")


class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    fn: str
    args: tuple


@dataclass(frozen=True)
class Noise(Expr):
    """An exogenous draw: ``dist`` is one of DISTRIBUTIONS, ``params`` are literals."""

    dist: str
    params: tuple

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    def check(self) -> str | None:
        """Return a problem description, or None when the parameters are usable."""
        p = self.params
        if self.dist not in DISTRIBUTIONS:
            return f"unknown distribution {self.dist!r}"
        if not all(math.isfinite(v) for v in p):
            return f"{self.dist} parameters must be finite"
        if self.dist == "normal":
            if len(p) != 2:
                return "normal takes (mean, std)"
            if p[1] < 0:
                return "normal std must be >= 0"
        elif self.dist == "bernoulli":
            if len(p) != 1:
                return "bernoulli takes (p)"
            if not 0.0 <= p[0] <= 1.0:
                return "bernoulli p must lie in [0, 1]"
        elif self.dist == "uniform":
            if len(p) == 0:
                return "uniform needs at least one value"
        elif self.dist == "point":
            if len(p) != 1:
                return "point takes (value)"
        return None

    @property
    def discrete(self) -> bool:
        return self.dist != "normal" or self.params[1] == 0.0

    def support(self) -> list[tuple[float, float]]:
        """(value, probability) pairs for discrete noise."""
        if self.dist == "bernoulli":
            q = self.params[0]
            return [(0.0, 1.0 - q), (1.0, q)]
        if self.dist == "uniform":
            k = len(self.params)
            return [(v, 1.0 / k) for v in self.params]
        if self.dist == "point":
            return [(self.params[0], 1.0)]
        if self.dist == "normal" and self.params[1] == 0.0:
            return [(self.params[0], 1.0)]
        raise ValueError(f"{self.dist} noise has no finite support")

    def transform(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms in (0, 1) to draws from this distribution."""
        p = self.params
        if self.dist == "normal":
            return p[0] + p[1] * ndtri(u)
        if self.dist == "bernoulli":
            return (u < p[0]).astype(np.float64)
        if self.dist == "uniform":
            vals = np.asarray(p, dtype=np.float64)
            idx = np.minimum((u * len(vals)).astype(np.int64), len(vals) - 1)
            return vals[idx]
        return np.full(u.shape, p[0])


def walk(expr: Expr):
    """Pre-order, left-to-right traversal."""
    stack = [expr]
    while stack:
        e = stack.pop()
        yield e
        if isinstance(e, Neg):
            stack.append(e.operand)
        elif isinstance(e, BinOp):
            stack.append(e.right)
            stack.append(e.left)
        elif isinstance(e, Call):
            stack.extend(reversed(e.args))


def free_vars(expr: Expr) -> tuple[str, ...]:
    return tuple(sorted({e.name for e in walk(expr) if isinstance(e, Var)}))


def noise_terms(expr: Expr) -> list[Noise]:
    return [e for e in walk(expr) if isinstance(e, Noise)]


def evaluate(expr: Expr, env: dict, noise: list, shape=()) -> np.ndarray:
    """Vectorised evaluation; ``noise`` holds one array per noise term, in walk order."""
    counter = itertools.count()

    def ev(e):
        if isinstance(e, Num):
            return np.full(shape, e.value, dtype=np.float64)
        if isinstance(e, Var):
            return np.asarray(env[e.name], dtype=np.float64)
        if isinstance(e, Noise):
            return np.asarray(noise[next(counter)], dtype=np.float64)
        if isinstance(e, Neg):
            return -ev(e.operand)
        if isinstance(e, Call):
            args = [ev(a) for a in e.args]
            if e.fn == "min":
                return np.minimum(args[0], args[1])
            if e.fn == "max":
                return np.maximum(args[0], args[1])
            return (args[0] > 0).astype(np.float64)
        left = ev(e.left)
        right = ev(e.right)
        op = e.op
        if op == "+":
            return left + right
        if op == "-":
            return left - right
        if op == "*":
            return left * right
        if op == "/":
            return left / right
        if op == "<":
            return (left < right).astype(np.float64)
        if op == "<=":
            return (left <= right).astype(np.float64)
        if op == ">":
            return (left > right).astype(np.float64)
        if op == ">=":
            return (left >= right).astype(np.float64)
        if op == "==":
            return (left == right).astype(np.float64)
        return (left != right).astype(np.float64)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = ev(expr)
    return np.broadcast_to(out, shape).astype(np.float64) if shape else out


def affine_gaussian(expr: Expr):
    """Decompose ``expr`` as intercept + sum(w * parent) + Gaussian noise.

    Returns ``(weights, intercept, std)`` or None when the expression is not of
    that shape. Used to recognise mechanisms equivalent to a linear-Gaussian one.
    """

    def lin(e):
        # (const, {var: coef}, [(coef, noise)])
        if isinstance(e, Num):
            return e.value, {}, []
        if isinstance(e, Var):
            return 0.0, {e.name: 1.0}, []
        if isinstance(e, Noise):
            if e.dist != "normal":
                return None
            return 0.0, {}, [(1.0, e)]
        if isinstance(e, Neg):
            inner = lin(e.operand)
            return None if inner is None else _scale(inner, -1.0)
        if isinstance(e, BinOp) and e.op in "+-":
            a, b = lin(e.left), lin(e.right)
            if a is None or b is None:
                return None
            if e.op == "-":
                b = _scale(b, -1.0)
            coefs = dict(a[1])
            for k, v in b[1].items():
                coefs[k] = coefs.get(k, 0.0) + v
            return a[0] + b[0], coefs, a[2] + b[2]
        if isinstance(e, BinOp) and e.op in "*/":
            a, b = lin(e.left), lin(e.right)
            if a is None or b is None:
                return None
            if e.op == "*":
                if not a[1] and not a[2]:
                    return _scale(b, a[0])
                if not b[1] and not b[2]:
                    return _scale(a, b[0])
                return None
            if not b[1] and not b[2] and b[0] != 0.0:
                return _scale(a, 1.0 / b[0])
            return None
        return None

    out = lin(expr)
    if out is None:
        return None
    const, coefs, noises = out
    mean = const + sum(c * n.params[0] for c, n in noises)
    var = sum((c * n.params[1]) ** 2 for c, n in noises)
    return coefs, mean, math.sqrt(var)


def enumerate_expr(expr: Expr, domains: dict, max_cells: int = 1 << 24):
    """Evaluate ``expr`` on every combination of parent values and noise outcomes.

    ``domains`` maps each free variable to its finite list of values. Returns
    ``(values, probs)`` where ``values`` has one axis per parent (sorted by
    name) plus a trailing axis over joint noise outcomes with weights ``probs``.
    """
    parents = sorted(domains)
    terms = noise_terms(expr)
    supports = [t.support() for t in terms]
    n_combos = math.prod(len(s) for s in supports)
    sizes = [len(domains[p]) for p in parents]
    if math.prod(sizes) * n_combos > max_cells:
        raise ValueError(f"expression has more than {max_cells} parent/noise combinations")
    combos = list(itertools.product(*supports))
    probs = np.array([math.prod(p for _, p in c) for c in combos], dtype=np.float64)
    ndim = len(parents) + 1
    env = {}
    for axis, name in enumerate(parents):
        shape = [1] * ndim
        shape[axis] = sizes[axis]
        env[name] = np.asarray(domains[name], dtype=np.float64).reshape(shape)
    noise = []
    for j in range(len(terms)):
        shape = [1] * ndim
        shape[-1] = n_combos
        noise.append(np.array([c[j][0] for c in combos], dtype=np.float64).reshape(shape))
    values = evaluate(expr, env, noise, tuple(sizes) + (n_combos,))
    return values, probs


def _scale(parts, k):
    const, coefs, noises = parts
    return const * k, {n: v * k for n, v in coefs.items()}, [(c * k, z) for c, z in noises]


# -- printing -------------------------------------------------------------

_LEVEL = {"<": 1, "<=": 1, ">": 1, ">=": 1, "==": 1, "!=": 1, "+": 2, "-": 2, "*": 3, "/": 3}


def format_number(value: float) -> str:
    value = float(value)
    if value.is_integer() and abs(value) < 2.0 ** 53:
        text = str(int(value))
        return "-0" if text == "0" and math.copysign(1.0, value) < 0 else text
    return repr(value)


def to_source(expr: Expr) -> str:
    """Render an expression so that parsing the text rebuilds the same tree."""
    if isinstance(expr, Num):
        return format_number(expr.value)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Noise):
        return f"{expr.dist}({', '.join(format_number(p) for p in expr.params)})"
    if isinstance(expr, Call):
        return f"{expr.fn}({', '.join(to_source(a) for a in expr.args)})"
    if isinstance(expr, Neg):
        inner = to_source(expr.operand)
        if isinstance(expr.operand, (Var, Call, Noise)):
            return "-" + inner
        return f"-({inner})"
    level = _LEVEL[expr.op]
    left = to_source(expr.left)
    right = to_source(expr.right)
    if _level_of(expr.left) < level or (level == 1 and _level_of(expr.left) == 1):
        left = f"({left})"
    if _level_of(expr.right) <= level:
        right = f"({right})"
    return f"{left} {expr.op} {right}"


def _level_of(expr: Expr) -> int:
    if isinstance(expr, BinOp):
        return _LEVEL[expr.op]
    return 9
