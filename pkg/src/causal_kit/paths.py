"""Path enumeration, middle-node roles and d-separation."""
from __future__ import annotations

from dataclasses import dataclass

from .scm import Dag, ScmError

MAX_PATH_NODES = 16

CHAIN = "chain-mediator"
FORK = "fork-confounder"
COLLIDER = "collider"


@dataclass(frozen=True)
class PathStep:
    node: str
    role: str
    blocks: bool


@dataclass(frozen=True)
class Path:
    nodes: tuple
    forward: tuple  # forward[i] is True when the i-th edge points nodes[i] -> nodes[i+1]
    steps: tuple
    open: bool
    causal: bool

    @property
    def status(self) -> str:
        return "open" if self.open else "blocked"

    def render(self) -> str:
        parts = [self.nodes[0]]
        for fwd, node in zip(self.forward, self.nodes[1:]):
            parts.append("->" if fwd else "<-")
            parts.append(node)
        return " ".join(parts)


@dataclass(frozen=True)
class PathReport:
    source: str
    target: str
    observed: frozenset
    paths: tuple

    @property
    def d_separated(self) -> bool:
        return not any(p.open for p in self.paths)

    def open_paths(self) -> list:
        return [p for p in self.paths if p.open]

    def causal_paths(self) -> list:
        return [p for p in self.paths if p.causal]


def classify_paths(dag: Dag, u, v, observed=()) -> PathReport:
    """Enumerate all simple paths between ``u`` and ``v`` ignoring edge direction.

    A non-collider middle node blocks when observed; a collider blocks unless it
    or one of its descendants is observed.
    """
    nodes = set(dag.nodes)
    observed = frozenset(observed)
    for name in [u, v, *sorted(observed)]:
        if name not in nodes:
            raise ScmError(f"unknown node {name!r}")
    if u == v:
        raise ScmError("source and target must differ")
    if u in observed or v in observed:
        raise ScmError("source and target must not be observed")
    if len(nodes) > MAX_PATH_NODES:
        raise ScmError(f"path enumeration is limited to graphs with at most {MAX_PATH_NODES} nodes, got {len(nodes)}")

    neighbours = {n: set() for n in nodes}
    for s, t in dag.edges:
        neighbours[s].add(t)
        neighbours[t].add(s)
    edges = dag.edges
    opened_by = {n: ({n} | dag.descendants(n)) & observed for n in nodes}

    found = []

    def extend(path, visited):
        last = path[-1]
        for nxt in sorted(neighbours[last]):
            if nxt in visited:
                continue
            if nxt == v:
                found.append(tuple(path + [nxt]))
            else:
                visited.add(nxt)
                extend(path + [nxt], visited)
                visited.discard(nxt)

    extend([u], {u})

    paths = []
    for seq in found:
        forward = tuple((a, b) in edges for a, b in zip(seq, seq[1:]))
        steps = []
        for i in range(1, len(seq) - 1):
            into = forward[i - 1]  # previous edge points into seq[i]
            out = forward[i]  # next edge leaves seq[i]
            if into and not out:
                role = COLLIDER
                blocks = not opened_by[seq[i]]
            else:
                role = FORK if (not into and out) else CHAIN
                blocks = seq[i] in observed
            steps.append(PathStep(seq[i], role, blocks))
        is_open = not any(s.blocks for s in steps)
        paths.append(Path(seq, forward, tuple(steps), is_open, is_open and all(forward)))
    paths.sort(key=lambda p: (len(p.nodes), p.nodes))
    return PathReport(u, v, observed, tuple(paths))


def d_separated(dag: Dag, u, v, observed=()) -> bool:
    return classify_paths(dag, u, v, observed).d_separated
