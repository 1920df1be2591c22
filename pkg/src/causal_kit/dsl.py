"""Text format for structural causal models.

One declaration per node::

    # comments run to end of line
    var x : {0, 1} ~ bernoulli(0.5);
    var a : {0, 1} cpt | x=0 -> 0.8, 0.2
                       | x=1 -> 0.2, 0.8;
    var z ~ normal(1 + 2 * x, 0.5);
    var y : real := 1 * (a > 0) * max(0, z + normal(0, 1));

``~ normal(mean, std)`` declares a linear-Gaussian node (``mean`` must be affine
in earlier nodes). ``~ bernoulli(p)`` and ``~ uniform(v1, ...)`` declare root
tables, ``~ point(v)`` a constant. ``:=`` gives an arbitrary expression in which
noise terms are written inline. ``cpt`` lists one pmf per parent assignment, in
domain order; the parent set is read from the row keys. Every name must be
declared before it is used, so a file always describes an acyclic graph.
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass

import numpy as np

from .expr import (
    COMPARISONS,
    DISTRIBUTIONS,
    FUNCTIONS,
    BinOp,
    Call,
    Neg,
    Noise,
    Num,
    Var,
    affine_gaussian,
    enumerate_expr,
    format_number,
    noise_terms,
    to_source,
    walk,
)
from .scm import (
    REAL,
    Constant,
    Dag,
    Deterministic,
    Discrete,
    DiscreteCpt,
    LinearGaussian,
    Scm,
    structure_query,
    validate,
)

RESERVED = frozenset({"var", "cpt", "real"}) | frozenset(FUNCTIONS) | frozenset(DISTRIBUTIONS)
ERROR_KINDS = ("syntax", "unknown-symbol", "duplicate-definition", "domain-mismatch", "cpt-shape")
MAX_DEPTH = 100
# bound on inferred-domain enumeration; larger expressions default to a real domain
_MAX_INFER = 100_000


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    length: int = 1

    def __str__(self):
        return f"{self.line}:{self.column}"


@dataclass(frozen=True)
class ParseError:
    span: SourceSpan
    kind: str
    message: str

    def __str__(self):
        return f"{self.span}: {self.kind}: {self.message}"


class ScmParseError(ValueError):
    """Raised by parse_scm; ``errors`` holds every diagnostic found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(str(e) for e in self.errors))


# -- lexer -----------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*'*)
  | (?P<op>:=|->|<=|>=|==|!=|[;:~{}(),|+\-*/<>=])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # num | name | op | eof
    text: str
    span: SourceSpan


def _lex(text: str, errors: list) -> list:
    tokens = []
    pos, line, line_start = 0, 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN.match(text, pos)
        if m is None:
            errors.append(ParseError(SourceSpan(line, pos - line_start + 1), "syntax", f"unexpected character {text[pos]!r}"))
            pos += 1
            continue
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind in ("num", "name", "op"):
            tokens.append(_Tok(kind, m.group(), SourceSpan(line, pos - line_start + 1, m.end() - pos)))
        pos = m.end()
    tokens.append(_Tok("eof", "", _last_char_span(text)))
    return tokens


def _last_char_span(text: str) -> SourceSpan:
    if not text:
        return SourceSpan(1, 1)
    head = text[:-1]
    line = head.count("\n") + 1
    return SourceSpan(line, len(head) - (head.rfind("\n") + 1) + 1)


# -- parser ----------------------------------------------------------------


class _Bail(Exception):
    pass


_UNKNOWN = object()  # domain placeholder for a node whose declaration failed


class _Parser:
    def __init__(self, tokens, errors):
        self.toks = tokens
        self.pos = 0
        self.errors = errors
        self.symbols = {}
        self.mechanisms = {}
        self.domains = {}
        self.decl_spans = {}
        self.depth = 0
        self.current = None

    # token helpers
    def peek(self, offset=0) -> _Tok:
        return self.toks[min(self.pos + offset, len(self.toks) - 1)]

    def next(self) -> _Tok:
        tok = self.peek()
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at(self, text) -> bool:
        tok = self.peek()
        return tok.kind in ("op", "name") and tok.text == text

    def accept(self, text) -> bool:
        if self.at(text):
            self.next()
            return True
        return False

    def expect(self, text, what=None) -> _Tok:
        if self.at(text):
            return self.next()
        self.fail(self.peek(), f"expected {what or repr(text)}")

    def fail(self, tok, message, kind="syntax"):
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        self.errors.append(ParseError(tok.span, kind, f"{message}, found {found}"))
        raise _Bail()

    def report(self, tok, kind, message):
        self.errors.append(ParseError(tok.span, kind, message))

    def sync(self):
        while True:
            tok = self.next()
            if tok.kind == "eof" or (tok.kind == "op" and tok.text == ";"):
                return

    # grammar
    def parse_file(self):
        if self.peek().kind == "eof":
            self.errors.append(ParseError(SourceSpan(1, 1), "syntax", "expected at least one declaration"))
            return
        while self.peek().kind != "eof":
            try:
                self.declaration()
            except _Bail:
                self.sync()
            except RecursionError:
                self.errors.append(ParseError(self.peek().span, "syntax", "expression nested too deeply"))
                self.sync()
            finally:
                if self.current is not None and self.current not in self.symbols:
                    # keep later references from cascading into unknown-symbol errors
                    self.symbols[self.current] = _UNKNOWN
                self.current = None

    def declaration(self):
        tok = self.peek()
        if not self.at("var"):
            if tok.kind == "name" and tok.text == "edges":
                self.fail(tok, "explicit edge blocks are not supported; parents are read from mechanisms")
            self.fail(tok, "expected 'var'")
        self.next()
        name_tok = self.next()
        if name_tok.kind != "name" or name_tok.text in RESERVED:
            self.pos -= name_tok.kind != "eof"
            self.fail(name_tok, "expected a variable name")
        name = name_tok.text
        duplicate = name in self.symbols
        if duplicate:
            self.report(name_tok, "duplicate-definition", f"variable {name} is already declared")
        else:
            self.current = name
            self.decl_spans[name] = name_tok.span

        domain = None
        if self.accept(":"):
            domain = self.domain()

        head = self.peek()
        if self.accept("~"):
            result = self.distribution(name, domain)
        elif self.accept(":="):
            expr = self.expr()
            result = self.deterministic(name, domain, expr, head)
        elif self.accept("cpt"):
            result = self.cpt(name, domain, head)
        else:
            self.fail(head, "expected '~', ':=' or 'cpt'")
        self.expect(";", "';'")
        if duplicate or result is None:
            return
        mech, dom = result
        self.symbols[name] = dom
        self.mechanisms[name] = mech
        self.domains[name] = dom

    def domain(self):
        if self.accept("real"):
            return REAL
        open_tok = self.expect("{", "'{' or 'real'")
        values = [self.signed_number()]
        while self.accept(","):
            values.append(self.signed_number())
        self.expect("}", "',' or '}'")
        if len(set(values)) != len(values):
            self.report(open_tok, "domain-mismatch", "domain lists a value more than once")
            return None
        return Discrete(values)

    def signed_number(self) -> float:
        neg = self.accept("-")
        tok = self.peek()
        if tok.kind != "num":
            self.fail(tok, "expected a number")
        self.next()
        value = float(tok.text)
        if not math.isfinite(value):
            self.fail(tok, "number is out of range")
        return -value if neg else value

    def literal_args(self):
        self.expect("(", "'('")
        args = []
        if not self.at(")"):
            args.append(self.signed_number())
            while self.accept(","):
                args.append(self.signed_number())
        self.expect(")", "',' or ')'")
        return args

    # declaration bodies return (mechanism, domain) or None after a reported error

    def distribution(self, name, domain):
        tok = self.next()
        if tok.kind != "name":
            self.pos -= tok.kind != "eof"
            self.fail(tok, "expected a distribution name")
        dist = tok.text
        if dist not in DISTRIBUTIONS:
            self.report(tok, "unknown-symbol", f"unknown distribution {dist!r}; expected one of {', '.join(DISTRIBUTIONS)}")
            self.literal_args()
            return None
        if dist == "normal":
            self.expect("(", "'('")
            mean = self.expr()
            self.expect(",", "','")
            std = self.signed_number()
            self.expect(")", "')'")
            if noise_terms(mean):
                self.report(tok, "syntax", "the mean of '~ normal' cannot contain noise terms; use ':='")
                return None
            lin = affine_gaussian(mean)
            if lin is None:
                self.report(tok, "syntax", "the mean of '~ normal' must be affine in its parents; use ':=' for other forms")
                return None
            if std < 0:
                self.report(tok, "domain-mismatch", "normal std must be >= 0")
                return None
            if domain is not None and domain is not REAL:
                self.report(tok, "domain-mismatch", f"linear-Gaussian node {name} needs a real domain")
                return None
            if not self.parents_known(lin[0]):
                return None
            return LinearGaussian(lin[0], lin[1], std), REAL

        params = self.literal_args()
        noise = Noise(dist, params)
        problem = noise.check()
        if problem:
            kind = "domain-mismatch" if "must" in problem else "syntax"
            self.report(tok, kind, problem)
            return None
        if dist == "point":
            value = params[0]
            if domain is None:
                domain = Discrete([value])
            elif domain is not REAL and value not in domain:
                self.report(tok, "domain-mismatch", f"{format_number(value)} is not in the domain of {name}")
                return None
            return Constant(value), domain
        # bernoulli / uniform: a root table
        support = noise.support()
        if domain is None:
            domain = Discrete(sorted({v for v, _ in support}))
        if domain is REAL:
            self.report(tok, "domain-mismatch", f"{dist} gives a discrete node; {name} is declared real")
            return None
        pmf = [0.0] * len(domain)
        for value, p in support:
            if value not in domain:
                self.report(tok, "domain-mismatch", f"{format_number(value)} is not in the domain of {name}")
                return None
            pmf[domain.index(value)] += p
        return DiscreteCpt((), {(): tuple(pmf)}), domain

    def parents_known(self, names) -> bool:
        return all(self.symbols.get(p, _UNKNOWN) is not _UNKNOWN for p in names)

    def deterministic(self, name, domain, expr, head):
        parents = sorted({e.name for e in _walk_vars(expr)})
        if not self.parents_known(parents):
            return None
        for term in noise_terms(expr):
            problem = term.check()
            if problem:
                self.report(head, "domain-mismatch" if "must" in problem else "syntax", problem)
                return None
        mech = Deterministic(expr)
        discrete_inputs = all(isinstance(self.symbols[p], Discrete) for p in parents) and all(t.discrete for t in noise_terms(expr))
        if domain is REAL:
            return mech, REAL
        if not discrete_inputs:
            if domain is None:
                return mech, REAL
            # comparisons and ind() only ever yield 0 or 1
            if _boolean(expr) and 0.0 in domain and 1.0 in domain:
                return mech, domain
            self.report(head, "domain-mismatch", f"{name} has a discrete domain but depends on continuous parents or noise")
            return None
        size = math.prod(len(self.symbols[p]) for p in parents) * math.prod(len(t.support()) for t in noise_terms(expr))
        if size > _MAX_INFER:
            if domain is None:
                return mech, REAL
            return mech, domain
        values, _ = enumerate_expr(expr, {p: self.symbols[p].values for p in parents})
        flat = np.unique(values)
        if not np.all(np.isfinite(flat)):
            self.report(head, "domain-mismatch", f"{name} evaluates to a non-finite value for some parent assignment")
            return None
        if domain is None:
            return mech, Discrete(_snap_unique(flat))
        for v in flat:
            if v not in domain:
                self.report(head, "domain-mismatch", f"{name} can take the value {format_number(v)}, which is outside {domain}")
                return None
        return mech, domain

    def cpt(self, name, domain, head):
        rows = []  # (first token, {parent: value}, pmf)
        if not self.at("|"):
            self.fail(self.peek(), "expected '|' starting a table row")
        while self.accept("|"):
            row_tok = self.peek()
            assignment = {}
            order = []
            if not self.at("->"):
                while True:
                    ptok = self.next()
                    if ptok.kind != "name" or ptok.text in RESERVED:
                        self.pos -= ptok.kind != "eof"
                        self.fail(ptok, "expected a parent name")
                    self.expect("=", "'='")
                    value = self.signed_number()
                    if ptok.text in assignment:
                        self.report(ptok, "duplicate-definition", f"parent {ptok.text} appears twice in one row")
                    assignment[ptok.text] = (value, ptok)
                    order.append(ptok.text)
                    if not self.accept(","):
                        break
            self.expect("->", "'->'")
            pmf = [self.signed_number()]
            while self.accept(","):
                pmf.append(self.signed_number())
            rows.append((row_tok, assignment, pmf))

        ok = True
        parent_names = sorted(rows[0][1])
        for row_tok, assignment, _ in rows:
            if sorted(assignment) != parent_names:
                self.report(row_tok, "cpt-shape", f"every row must assign the same parents ({', '.join(parent_names) or 'none'})")
                return None
        for p in parent_names:
            tok = rows[0][1][p][1]
            if p == name:
                self.report(tok, "unknown-symbol", f"{name} cannot be its own parent")
                ok = False
            elif p not in self.symbols:
                self.report(tok, "unknown-symbol", f"unknown variable {p}; variables must be declared before use")
                ok = False
            elif self.symbols[p] is _UNKNOWN:
                ok = False
            elif not isinstance(self.symbols[p], Discrete):
                self.report(tok, "domain-mismatch", f"table parent {p} must have a discrete domain")
                ok = False
        if not ok:
            return None
        width = len(rows[0][2]) if domain is None else len(domain)
        if domain is REAL:
            self.report(head, "domain-mismatch", f"a table node needs a discrete domain; {name} is declared real")
            return None
        if domain is None:
            domain = Discrete(range(width))

        table = {}
        for row_tok, assignment, pmf in rows:
            key = []
            for p in parent_names:
                value, ptok = assignment[p]
                pdom = self.symbols[p]
                if value not in pdom:
                    self.report(ptok, "domain-mismatch", f"{format_number(value)} is not in the domain of {p}")
                    ok = False
                    continue
                key.append(pdom.values[pdom.index(value)])
            key = tuple(key)
            if len(pmf) != len(domain):
                self.report(row_tok, "cpt-shape", f"row has {len(pmf)} probabilities but {name} has {len(domain)} values")
                ok = False
                continue
            if any(p < 0 for p in pmf) or abs(math.fsum(pmf) - 1.0) > 1e-9:
                self.report(row_tok, "cpt-shape", f"row probabilities must be nonnegative and sum to 1, got sum {math.fsum(pmf):.12g}")
                ok = False
            if key in table:
                self.report(row_tok, "duplicate-definition", f"row {_fmt_assignment(parent_names, key)} is listed twice")
                ok = False
            table[key] = tuple(pmf)
        if not ok:
            return None
        grid = itertools.product(*(self.symbols[p].values for p in parent_names))
        missing = [k for k in grid if k not in table]
        for key in missing:
            self.report(head, "cpt-shape", f"table of {name} has no row for {_fmt_assignment(parent_names, key)}")
        if missing:
            return None
        return DiscreteCpt(tuple(parent_names), table), domain

    # expressions
    def expr(self):
        self.depth += 1
        try:
            if self.depth > MAX_DEPTH:
                self.fail(self.peek(), "expression nested too deeply")
            left = self.additive()
            while self.peek().kind == "op" and self.peek().text in COMPARISONS:
                op = self.next().text
                left = BinOp(op, left, self.additive())
            return left
        finally:
            self.depth -= 1

    def additive(self):
        left = self.term()
        while self.at("+") or self.at("-"):
            op = self.next().text
            left = BinOp(op, left, self.term())
        return left

    def term(self):
        left = self.unary()
        while self.at("*") or self.at("/"):
            op = self.next().text
            left = BinOp(op, left, self.unary())
        return left

    def unary(self):
        if self.at("-"):
            self.next()
            if self.peek().kind == "num":
                return Num(-self.number())
            self.depth += 1
            try:
                if self.depth > MAX_DEPTH:
                    self.fail(self.peek(), "expression nested too deeply")
                return Neg(self.unary())
            finally:
                self.depth -= 1
        return self.atom()

    def number(self) -> float:
        tok = self.next()
        value = float(tok.text)
        if not math.isfinite(value):
            self.fail(tok, "number is out of range")
        return value

    def atom(self):
        tok = self.peek()
        if tok.kind == "num":
            return Num(self.number())
        if self.accept("("):
            inner = self.expr()
            self.expect(")", "')'")
            return inner
        if tok.kind != "name":
            self.fail(tok, "expected an expression")
        self.next()
        if self.at("("):
            if tok.text in DISTRIBUTIONS:
                return Noise(tok.text, self.literal_args())
            self.next()
            args = []
            if not self.at(")"):
                args.append(self.expr())
                while self.accept(","):
                    args.append(self.expr())
            self.expect(")", "',' or ')'")
            if tok.text not in FUNCTIONS:
                self.report(tok, "unknown-symbol", f"unknown function {tok.text!r}; expected one of {', '.join(FUNCTIONS)}")
                return Num(0.0)
            if len(args) != FUNCTIONS[tok.text]:
                self.report(tok, "syntax", f"{tok.text} takes {FUNCTIONS[tok.text]} argument(s), got {len(args)}")
                return Num(0.0)
            return Call(tok.text, tuple(args))
        if tok.text in RESERVED:
            self.pos -= 1
            self.fail(tok, "expected an expression")
        if tok.text == self.current:
            self.report(tok, "unknown-symbol", f"{tok.text} cannot refer to itself")
        elif tok.text not in self.symbols:
            self.report(tok, "unknown-symbol", f"unknown variable {tok.text}; variables must be declared before use")
        return Var(tok.text)


def _boolean(expr) -> bool:
    return (isinstance(expr, BinOp) and expr.op in COMPARISONS) or (isinstance(expr, Call) and expr.fn == "ind")


def _walk_vars(expr):
    return (e for e in walk(expr) if isinstance(e, Var))


def _snap_unique(values) -> list:
    out = []
    for v in sorted(float(x) for x in values):
        if not out or abs(v - out[-1]) > 1e-9:
            out.append(v)
    return out


def _fmt_assignment(names, key) -> str:
    if not names:
        return "the empty assignment"
    return ", ".join(f"{n}={format_number(v)}" for n, v in zip(names, key))


def collect_errors(source) -> list:
    """Every diagnostic for ``source``; an empty list means it parses."""
    return _parse(source)[1]


def parse_scm(source) -> Scm:
    """Parse model text (``str`` or UTF-8 ``bytes``).

    Raises
    ------
    ScmParseError
        With every independent diagnostic; no partial model is returned.
    """
    scm, errors = _parse(source)
    if errors:
        raise ScmParseError(errors)
    return scm


def _parse(source):
    errors = []
    if isinstance(source, (bytes, bytearray)):
        try:
            text = bytes(source).decode("utf-8")
        except UnicodeDecodeError as exc:
            head = bytes(source[: exc.start]).decode("utf-8", errors="replace")
            line = head.count("\n") + 1
            col = len(head) - (head.rfind("\n") + 1) + 1
            return None, [ParseError(SourceSpan(line, col), "syntax", "source is not valid UTF-8")]
    else:
        text = source
    tokens = _lex(text, errors)
    parser = _Parser(tokens, errors)
    parser.parse_file()
    if errors:
        errors.sort(key=lambda e: (e.span.line, e.span.column))
        return None, errors
    scm = Scm.from_mechanisms(parser.mechanisms, parser.domains)
    for problem in validate(scm):
        node = problem.nodes[0] if problem.nodes else None
        span = parser.decl_spans.get(node, SourceSpan(1, 1))
        kind = "cpt-shape" if problem.kind.startswith("cpt") else "domain-mismatch" if "domain" in problem.kind else "syntax"
        errors.append(ParseError(span, kind, problem.message))
    if errors:
        return None, errors
    return scm, []


# -- serializer ------------------------------------------------------------


def serialize_scm(scm: Scm) -> str:
    """Deterministic text for ``scm``: nodes in topological order, ties by name."""
    order = structure_query(scm.dag).order
    lines = []
    for node in order:
        mech = scm.mechanisms[node]
        domain = scm.domains[node]
        head = f"var {node} : {domain}"
        if isinstance(mech, DiscreteCpt):
            rows = []
            for key, pmf in mech.table.items():
                lhs = ", ".join(f"{p}={format_number(v)}" for p, v in zip(mech.parents, key))
                rhs = ", ".join(format_number(p) for p in pmf)
                rows.append(f"| {lhs} -> {rhs}" if lhs else f"| -> {rhs}")
            lines.append(f"{head} cpt " + "\n    ".join(rows) + ";")
        elif isinstance(mech, LinearGaussian):
            terms = [format_number(mech.intercept)] if mech.intercept != 0.0 or not mech.weights else []
            terms += [f"{format_number(w)} * {p}" for p, w in mech.weights.items()]
            lines.append(f"{head} ~ normal({' + '.join(terms)}, {format_number(mech.noise_std)});")
        elif isinstance(mech, Deterministic):
            lines.append(f"{head} := {to_source(mech.expr)};")
        elif isinstance(mech, Constant):
            lines.append(f"{head} ~ point({format_number(mech.value)});")
        else:
            raise TypeError(f"cannot serialize mechanism {type(mech).__name__}")
    return "\n".join(lines) + "\n"


def load_scm(path) -> Scm:
    with open(path, "rb") as fh:
        return parse_scm(fh.read())


__all__ = [
    "ERROR_KINDS",
    "ParseError",
    "ScmParseError",
    "SourceSpan",
    "collect_errors",
    "load_scm",
    "parse_scm",
    "serialize_scm",
]
