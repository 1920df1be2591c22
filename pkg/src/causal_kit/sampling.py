"""Datasets, ancestral and rejection sampling, smoothed frequency tables."""
from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from . import rng as rngmod
from .exact import DistTable, InferenceError
from .expr import evaluate, format_number
from .scm import Constant, Deterministic, Discrete, DiscreteCpt, LinearGaussian, Scm, ScmError, check_valid

# rows drawn per batch while rejection sampling
_BATCH = 65536


class DatasetError(ValueError):
    pass


class BudgetExhausted(RuntimeError):
    """Rejection sampling hit ``max_draws`` before collecting enough rows."""

    def __init__(self, accepted, wanted, draws):
        self.accepted, self.wanted, self.draws = accepted, wanted, draws
        super().__init__(
            f"accepted {accepted} of {wanted} rows within {draws} draws; "
            "the evidence may have (near) zero probability"
        )


@dataclass(eq=False)
class Dataset:
    """Column-oriented table. ``data[name]`` is a float array, NaN marks a missing value."""

    columns: tuple
    data: dict
    provenance: list = field(default_factory=list)
    domains: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.columns = tuple(self.columns)
        if len(set(self.columns)) != len(self.columns):
            raise DatasetError("duplicate column names")
        data = {}
        lengths = set()
        for c in self.columns:
            if c not in self.data:
                raise DatasetError(f"missing data for column {c!r}")
            arr = np.asarray(self.data[c], dtype=np.float64)
            if arr.ndim != 1:
                raise DatasetError(f"column {c!r} must be one-dimensional")
            data[c] = arr
            lengths.add(arr.shape[0])
        if len(lengths) > 1:
            raise DatasetError(f"columns have different lengths {sorted(lengths)}")
        self.data = data
        self.provenance = list(self.provenance)
        self.domains = dict(self.domains)

    def __len__(self):
        return next(iter(self.data.values())).shape[0] if self.data else 0

    @property
    def n_rows(self) -> int:
        return len(self)

    @property
    def rows(self) -> list:
        return list(zip(*(self.data[c].tolist() for c in self.columns)))

    def __getitem__(self, name) -> np.ndarray:
        return self.column(name)

    def column(self, name) -> np.ndarray:
        if name not in self.data:
            raise DatasetError(f"unknown column {name!r}; available: {', '.join(self.columns)}")
        return self.data[name]

    def take(self, index, note=None) -> "Dataset":
        index = np.asarray(index)
        prov = self.provenance + ([note] if note else [])
        return Dataset(self.columns, {c: self.data[c][index] for c in self.columns}, prov, self.domains)

    def with_columns(self, **cols) -> "Dataset":
        data = dict(self.data)
        data.update(cols)
        names = self.columns + tuple(c for c in cols if c not in self.columns)
        return Dataset(names, data, self.provenance, self.domains)

    def equals(self, other: "Dataset") -> bool:
        return (
            self.columns == other.columns
            and all(np.array_equal(self.data[c], other.data[c], equal_nan=True) for c in self.columns)
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        for line in self.provenance:
            for part in str(line).splitlines() or [""]:
                buf.write(f"# {part}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        cols = [self.data[c] for c in self.columns]
        for i in range(len(self)):
            writer.writerow(["" if math.isnan(col[i]) else format_number(col[i]) for col in cols])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text: str, source="<string>") -> "Dataset":
        provenance = []
        lines = text.splitlines()
        i = 0
        while i < len(lines) and lines[i].startswith("#"):
            provenance.append(lines[i][1:].strip())
            i += 1
        reader = csv.reader(lines[i:])
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{source}: no header row") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header) or not all(header):
            raise DatasetError(f"{source}: header must hold distinct, non-empty names")
        values = [[] for _ in header]
        for lineno, row in enumerate(reader, start=i + 2):
            if not row or all(not cell.strip() for cell in row) and len(row) <= 1:
                continue
            if len(row) != len(header):
                raise DatasetError(f"{source}:{lineno}: expected {len(header)} values, found {len(row)}")
            for j, cell in enumerate(row):
                cell = cell.strip()
                try:
                    values[j].append(float(cell) if cell else math.nan)
                except ValueError:
                    raise DatasetError(f"{source}:{lineno}: {cell!r} in column {header[j]!r} is not a number") from None
        return cls(header, {h: np.array(v, dtype=np.float64) for h, v in zip(header, values)}, provenance)

    @classmethod
    def read_csv(cls, path) -> "Dataset":
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise DatasetError(f"{path}: {exc.strerror or exc}") from None
        return cls.from_csv(text, str(path))


def scm_digest(scm: Scm) -> str:
    from .dsl import serialize_scm

    return hashlib.sha256(serialize_scm(scm).encode("utf-8")).hexdigest()[:16]


def _draw_rows(scm: Scm, start: int, stop: int, seed: int) -> dict:
    """Values of every node for rows ``[start, stop)``; each node has its own streams."""
    n = stop - start
    values = {}
    for node in scm.order():
        mech = scm.mechanisms[node]
        if isinstance(mech, Constant):
            values[node] = np.full(n, mech.value)
        elif isinstance(mech, LinearGaussian):
            out = np.full(n, mech.intercept)
            for p, w in mech.weights.items():
                out = out + w * values[p]
            u = rngmod.stream(seed, node, "normal", start=start, stop=stop)
            values[node] = out + mech.noise_std * ndtri(u)
        elif isinstance(mech, Deterministic):
            terms = mech.noise
            noise = [t.transform(rngmod.stream(seed, node, "noise", j, start=start, stop=stop)) for j, t in enumerate(terms)]
            values[node] = evaluate(mech.expr, {p: values[p] for p in mech.parents}, noise, (n,))
        elif isinstance(mech, DiscreteCpt):
            values[node] = _draw_cpt(scm, node, mech, rngmod.stream(seed, node, "cpt", start=start, stop=stop), values)
        else:
            raise ScmError(f"cannot sample mechanism {type(mech).__name__} of {node}")
    return values


def _draw_cpt(scm, node, mech, u, values) -> np.ndarray:
    domain = scm.domains[node]
    pdoms = [scm.domains[p] for p in mech.parents]
    sizes = [len(d) for d in pdoms]
    cum = np.zeros((max(math.prod(sizes), 1), len(domain)))
    for key, pmf in mech.table.items():
        flat = 0
        for d, v in zip(pdoms, key):
            flat = flat * len(d) + d.index(v)
        cum[flat] = np.cumsum(pmf)
    cum[:, -1] = np.inf  # rounding in the cumulative sum must never leave u unassigned
    row = np.zeros(u.shape[0], dtype=np.int64)
    for d, p in zip(pdoms, mech.parents):
        idx = _value_indices(d, values[p], p)
        row = row * len(d) + idx
    pick = (u[:, None] >= cum[row]).sum(axis=1)
    return np.asarray(domain.values)[pick]


def _value_indices(domain: Discrete, column: np.ndarray, name) -> np.ndarray:
    vals = np.asarray(domain.values)
    diff = np.abs(column[:, None] - vals[None, :])
    idx = diff.argmin(axis=1)
    if column.size and not np.all(diff[np.arange(column.size), idx] <= 1e-9):
        raise ScmError(f"values of {name} fall outside its domain {domain}")
    return idx


def ancestral_sample(scm: Scm, n: int, rng=None, *, start: int = 0) -> Dataset:
    """Draw ``n`` rows by visiting nodes in topological order.

    Row ``i`` depends only on ``(seed, node, i)``, so ``start`` lets callers
    produce any slice of the stream, and samples for a node do not change when
    unrelated nodes are added.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    check_valid(scm)
    spec = rngmod.as_spec(rng)
    values = _draw_rows(scm, start, start + n, spec.seed)
    columns = scm.order()
    prov = [f"ancestral_sample n={n} start={start} seed={spec.seed} rng={spec.algorithm} scm={scm_digest(scm)}"]
    return Dataset(columns, values, prov, {c: scm.domains[c] for c in columns})


@dataclass(frozen=True)
class Interval:
    """Predicate ``low <= x <= high``; either bound may be infinite."""

    low: float = -math.inf
    high: float = math.inf

    def __call__(self, column: np.ndarray) -> np.ndarray:
        return (column >= self.low) & (column <= self.high)

    def __str__(self):
        return f"[{format_number(self.low) if math.isfinite(self.low) else '-inf'}, {format_number(self.high) if math.isfinite(self.high) else 'inf'}]"


def _matches(values: dict, evidence: dict) -> np.ndarray:
    ok = None
    for node, pred in evidence.items():
        col = values[node]
        hit = pred(col) if isinstance(pred, Interval) else np.abs(col - float(pred)) <= 1e-9
        ok = hit if ok is None else ok & hit
    return ok


def rejection_condition(scm: Scm, evidence: dict, n_accepted: int, rng=None, max_draws: int = 10_000_000) -> Dataset:
    """Keep the first ``n_accepted`` ancestral rows that satisfy every predicate.

    Evidence values are equality tests (within 1e-9) or Interval instances.
    Rows are examined in stream order, so with always-true evidence the result
    equals ``ancestral_sample``.
    """
    check_valid(scm)
    for node in evidence:
        if node not in scm.mechanisms:
            raise ScmError(f"unknown evidence node {node!r}")
    spec = rngmod.as_spec(rng)
    kept = {node: [] for node in scm.order()}
    accepted = 0
    drawn = 0
    last = -1
    while accepted < n_accepted and drawn < max_draws:
        stop = min(drawn + _BATCH, max_draws)
        values = _draw_rows(scm, drawn, stop, spec.seed)
        mask = _matches(values, evidence) if evidence else np.ones(stop - drawn, dtype=bool)
        hits = np.flatnonzero(mask)[: n_accepted - accepted]
        for node in kept:
            kept[node].append(values[node][hits])
        if hits.size:
            last = drawn + int(hits[-1])
        accepted += hits.size
        drawn = stop
    if accepted < n_accepted:
        raise BudgetExhausted(accepted, n_accepted, drawn)
    used = last + 1 if n_accepted else 0
    rate = accepted / used if used else float("nan")
    data = {k: (np.concatenate(v) if v else np.empty(0)) for k, v in kept.items()}
    shown = ", ".join(f"{k}={v if isinstance(v, Interval) else format_number(v)}" for k, v in evidence.items())
    prov = [
        f"rejection_condition n={n_accepted} seed={spec.seed} rng={spec.algorithm} scm={scm_digest(scm)}",
        f"evidence: {shown or 'none'}",
        f"draws={used} acceptance_rate={rate!r}",
    ]
    return Dataset(scm.order(), data, prov, dict(scm.domains), {"acceptance_rate": rate, "draws": used})


def fit_table(data: Dataset, variables, smoothing: float = 0.0, domains: dict | None = None) -> DistTable:
    """Smoothed frequency table: ``(count(c) + a) / (N + a * cells)``."""
    if smoothing < 0 or not math.isfinite(smoothing):
        raise ValueError("smoothing must be a finite value >= 0")
    variables = list(variables)
    doms = []
    for v in variables:
        col = data.column(v)
        dom = (domains or {}).get(v) or data.domains.get(v)
        if dom is None:
            if col.size and not np.all(np.isfinite(col) & (col == np.round(col))):
                raise InferenceError(f"column {v} is not discrete; pass its domain explicitly")
            dom = Discrete(sorted(set(col.tolist())))
        if not isinstance(dom, Discrete):
            raise InferenceError(f"column {v} is continuous")
        doms.append(dom)
    shape = [len(d) for d in doms]
    if 0 in shape:
        raise InferenceError("cannot fit a table over an empty domain")
    counts = np.zeros(math.prod(shape))
    n = len(data)
    if n:
        flat = np.zeros(n, dtype=np.int64)
        for v, d in zip(variables, doms):
            flat = flat * len(d) + _value_indices(d, data.column(v), v)
        counts = np.bincount(flat, minlength=counts.size).astype(np.float64)
    total = n + smoothing * counts.size
    if total == 0:
        raise InferenceError("no rows and no smoothing: the table is undefined")
    probs = (counts + smoothing) / total
    return DistTable(variables, [d.values for d in doms], probs.reshape(shape))
