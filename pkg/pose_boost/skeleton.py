# pose_boost/skeleton.py
"""
Joint dependency graphs.

Graph files are plain text, one directive per line::

    name body16            # optional label, used to find shipped extra links
    root 0
    joint 0 pelvis
    edge 0 1 physical      # physical | symmetrical | extra

Everything after ``#`` is a comment. Indices are 0-based. The forward pass
walks edges as stored; the backward pass walks every edge reversed.
"""
from __future__ import annotations

import functools
import heapq
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Literal, Sequence

from pose_boost.errors import GraphError

log = logging.getLogger(__name__)

EdgeKind = Literal["physical", "symmetrical", "extra"]
Direction = Literal["forward", "backward"]
Profile = Literal["default", "extended"]
VariantKind = Literal[
    "simple_sequence",
    "physical_only",
    "symmetrical_only",
    "graphical_forward_only",
    "bidirectional",
    "extended",
]

EDGE_KINDS: tuple[str, ...] = ("physical", "symmetrical", "extra")
VARIANT_KINDS: tuple[str, ...] = (
    "simple_sequence",
    "physical_only",
    "symmetrical_only",
    "graphical_forward_only",
    "bidirectional",
    "extended",
)
SHIPPED_GRAPHS: tuple[str, ...] = ("body16", "hand21")

# Incident-link caps per validation profile: (non-root joints, root joint).
DEGREE_CAPS: dict[str, tuple[int, int]] = {
    "default": (4, 5),
    "extended": (8, 8),
}


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    kind: EdgeKind = "physical"


@dataclass(frozen=True)
class SkeletonGraph:
    names: tuple[str, ...]
    edges: tuple[Edge, ...]
    root: int = 0
    name: str = ""

    @property
    def num_joints(self) -> int:
        return len(self.names)

    def degrees(self) -> list[int]:
        deg = [0] * self.num_joints
        for e in self.edges:
            deg[e.src] += 1
            deg[e.dst] += 1
        return deg

    def max_degree(self) -> int:
        return max(self.degrees(), default=0)

    def count(self, kind: EdgeKind) -> int:
        return sum(1 for e in self.edges if e.kind == kind)

    def with_edges(self, edges: Iterable[Edge]) -> "SkeletonGraph":
        return SkeletonGraph(self.names, tuple(edges), self.root, self.name)

    def relabel(self, perm: Sequence[int]) -> "SkeletonGraph":
        """Rename joint ``j`` to ``perm[j]``."""
        if sorted(perm) != list(range(self.num_joints)):
            raise GraphError(f"not a permutation of {self.num_joints} joints: {list(perm)}")
        names = [""] * self.num_joints
        for old, new in enumerate(perm):
            names[new] = self.names[old]
        edges = tuple(Edge(perm[e.src], perm[e.dst], e.kind) for e in self.edges)
        return SkeletonGraph(tuple(names), edges, perm[self.root], self.name)


@dataclass(frozen=True)
class PassOrder:
    """Evaluation schedule of one direction: a topological sequence and N_j per joint."""

    direction: Direction
    sequence: tuple[int, ...]
    preds: tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class GraphVariant:
    """A graph plus the directions the recurrence runs over it."""

    kind: str
    graph: SkeletonGraph
    directions: tuple[Direction, ...]


# ---- parsing -------------------------------------------------------------------


def _parse_int(token: str, where: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise GraphError(f"expected an integer, got {token!r}", where) from None


def _parse_lines(text: str, source: str, edges_only: bool = False) -> tuple[dict[int, str], list[tuple[Edge, str]], int | None, str]:
    joints: dict[int, str] = {}
    edges: list[tuple[Edge, str]] = []
    root: int | None = None
    name = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        parts = line.split()
        directive = parts[0]
        if directive == "edge" and len(parts) == 4:
            kind = parts[3]
            if kind not in EDGE_KINDS:
                raise GraphError(f"unknown edge kind {kind!r}", where)
            src, dst = _parse_int(parts[1], where), _parse_int(parts[2], where)
            if src == dst:
                raise GraphError(f"self-loop on joint {src}", where)
            edges.append((Edge(src, dst, kind), where))  # type: ignore[arg-type]
        elif edges_only:
            raise GraphError(f"only edge lines are allowed here, got {directive!r}", where)
        elif directive == "joint" and len(parts) == 3:
            idx = _parse_int(parts[1], where)
            if idx in joints:
                raise GraphError(f"joint {idx} declared twice", where)
            joints[idx] = parts[2]
        elif directive == "root" and len(parts) == 2:
            root = _parse_int(parts[1], where)
        elif directive == "name" and len(parts) == 2:
            name = parts[1]
        else:
            raise GraphError(f"cannot parse line {raw.strip()!r}", where)
    return joints, edges, root, name


def parse_graph(text: str, source: str = "<string>", strict: bool = True) -> SkeletonGraph:
    """
    Parse a graph description.

    Index ranges, self-loops and duplicate links always raise. With `strict`
    a forward cycle or a joint unreachable from the root raises too; without
    it those are left for `validate` to report.
    """
    joints, located_edges, root, name = _parse_lines(text, source)
    n = len(joints)
    if sorted(joints) != list(range(n)):
        raise GraphError(f"joint indices must be 0..{n - 1} without gaps", source)
    if root is None:
        raise GraphError("missing root directive", source)
    if not 0 <= root < n:
        raise GraphError(f"root {root} out of range for {n} joints", source)
    seen: set[tuple[int, int]] = set()
    for edge, where in located_edges:
        for idx in (edge.src, edge.dst):
            if not 0 <= idx < n:
                raise GraphError(f"joint index {idx} out of range for {n} joints", where)
        key = (min(edge.src, edge.dst), max(edge.src, edge.dst))
        if key in seen:
            raise GraphError(f"duplicate link between {key[0]} and {key[1]}", where)
        seen.add(key)
    graph = SkeletonGraph(
        names=tuple(joints[i] for i in range(n)),
        edges=tuple(e for e, _ in located_edges),
        root=root,
        name=name,
    )
    if not strict:
        return graph
    cycle = find_cycle(graph)
    if cycle:
        raise GraphError("forward orientation has a cycle: " + " -> ".join(map(str, cycle)), source)
    unreachable = unreachable_joints(graph)
    if unreachable:
        raise GraphError(f"joints unreachable from root {graph.root}: {unreachable}", source)
    return graph


def load_graph(path: Path | str, strict: bool = True) -> SkeletonGraph:
    p = Path(path)
    if not p.exists():
        raise GraphError(f"graph file not found: {p}")
    graph = parse_graph(p.read_text(encoding="utf-8"), source=str(p), strict=strict)
    log.debug("Loaded graph %s with %d joints and %d edges", p, graph.num_joints, len(graph.edges))
    return graph


def dumps_graph(graph: SkeletonGraph) -> str:
    lines = []
    if graph.name:
        lines.append(f"name {graph.name}")
    lines.append(f"root {graph.root}")
    lines.extend(f"joint {i} {n}" for i, n in enumerate(graph.names))
    lines.extend(f"edge {e.src} {e.dst} {e.kind}" for e in graph.edges)
    return "\n".join(lines) + "\n"


def save_graph(graph: SkeletonGraph, path: Path | str) -> Path:
    p = Path(path)
    p.write_text(dumps_graph(graph), encoding="utf-8")
    return p


def _shipped_text(filename: str) -> str:
    return resources.files("pose_boost").joinpath("graphs", filename).read_text(encoding="utf-8")


def shipped_graph(name: str) -> SkeletonGraph:
    if name not in SHIPPED_GRAPHS:
        raise GraphError(f"no shipped graph named {name!r}; choose from {SHIPPED_GRAPHS}")
    return parse_graph(_shipped_text(f"{name}.graph"), source=f"<shipped {name}>")


def resolve_graph(ref: str) -> SkeletonGraph:
    """A shipped graph name or a path to a graph file."""
    return shipped_graph(ref) if ref in SHIPPED_GRAPHS else load_graph(ref)


def shipped_extra_edges(name: str) -> tuple[Edge, ...]:
    if name not in SHIPPED_GRAPHS:
        raise GraphError(f"no shipped extra links for graph {name!r}")
    source = f"<shipped {name}_extra>"
    _, located, _, _ = _parse_lines(_shipped_text(f"{name}_extra.graph"), source, edges_only=True)
    return tuple(e for e, _ in located)


# ---- structure -------------------------------------------------------------------


def _adjacency(n: int, edges: Iterable[Edge], reverse: bool) -> list[list[int]]:
    adj: list[list[int]] = [[] for _ in range(n)]
    for e in edges:
        a, b = (e.dst, e.src) if reverse else (e.src, e.dst)
        adj[a].append(b)
    for row in adj:
        row.sort()
    return adj


def find_cycle(graph: SkeletonGraph) -> list[int]:
    """A forward-orientation cycle as a closed joint list, or [] for a DAG."""
    n = graph.num_joints
    adj = _adjacency(n, graph.edges, reverse=False)
    color = [0] * n  # 0 unvisited, 1 on stack, 2 done
    parent = [-1] * n
    for start in range(n):
        if color[start]:
            continue
        stack = [(start, iter(adj[start]))]
        color[start] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = 2
                stack.pop()
            elif color[nxt] == 0:
                parent[nxt] = node
                color[nxt] = 1
                stack.append((nxt, iter(adj[nxt])))
            elif color[nxt] == 1:
                cycle = [nxt]
                cur = node
                while cur != nxt:
                    cycle.append(cur)
                    cur = parent[cur]
                cycle.append(nxt)
                cycle.reverse()
                return cycle
    return []


def unreachable_joints(graph: SkeletonGraph) -> list[int]:
    adj = _adjacency(graph.num_joints, graph.edges, reverse=False)
    seen = {graph.root}
    frontier = [graph.root]
    while frontier:
        node = frontier.pop()
        for nxt in adj[node]:
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return [j for j in range(graph.num_joints) if j not in seen]


@functools.lru_cache(maxsize=64)
def pass_order(graph: SkeletonGraph, direction: Direction) -> PassOrder:
    """Topological schedule for one direction, ties broken by ascending joint index."""
    if direction not in ("forward", "backward"):
        raise ValueError(f"unknown direction {direction!r}")
    n = graph.num_joints
    reverse = direction == "backward"
    succ = _adjacency(n, graph.edges, reverse=reverse)
    preds = _adjacency(n, graph.edges, reverse=not reverse)
    indegree = [len(p) for p in preds]
    ready = [j for j in range(n) if indegree[j] == 0]
    heapq.heapify(ready)
    sequence: list[int] = []
    while ready:
        j = heapq.heappop(ready)
        sequence.append(j)
        for k in succ[j]:
            indegree[k] -= 1
            if indegree[k] == 0:
                heapq.heappush(ready, k)
    if len(sequence) != n:
        raise GraphError(f"{direction} orientation is not acyclic")
    return PassOrder(direction, tuple(sequence), tuple(tuple(p) for p in preds))


def validate(graph: SkeletonGraph, profile: Profile = "default") -> list[str]:
    """List every violated constraint; an empty list means the graph is valid."""
    if profile not in DEGREE_CAPS:
        return [f"unknown validation profile {profile!r}"]
    report: list[str] = []
    n = graph.num_joints
    if not 0 <= graph.root < n:
        report.append(f"root {graph.root} out of range for {n} joints")
        return report
    seen: set[tuple[int, int]] = set()
    for e in graph.edges:
        if not (0 <= e.src < n and 0 <= e.dst < n):
            report.append(f"edge {e.src}->{e.dst} has an out-of-range index")
            continue
        if e.src == e.dst:
            report.append(f"self-loop on joint {e.src}")
        key = (min(e.src, e.dst), max(e.src, e.dst))
        if key in seen:
            report.append(f"duplicate link between {key[0]} and {key[1]}")
        seen.add(key)
    if report:
        return report
    cycle = find_cycle(graph)
    if cycle:
        report.append("cycle: " + " -> ".join(map(str, cycle)))
    unreachable = unreachable_joints(graph)
    if unreachable:
        report.append(f"unreachable from root {graph.root}: {unreachable}")
    joint_cap, root_cap = DEGREE_CAPS[profile]
    for j, d in enumerate(graph.degrees()):
        cap = root_cap if j == graph.root else joint_cap
        if d > cap:
            report.append(f"joint {j} ({graph.names[j]}) has {d} links, cap is {cap} under {profile}")
    return report


def variant(
    graph: SkeletonGraph, kind: str, extra_edges: Sequence[Edge] | None = None
) -> GraphVariant:
    """Derive one of the connection variants used in the ablations."""
    both: tuple[Direction, ...] = ("forward", "backward")
    fwd: tuple[Direction, ...] = ("forward",)
    base = [e for e in graph.edges if e.kind in ("physical", "symmetrical")]
    if kind == "simple_sequence":
        chain = [Edge(j, j + 1, "physical") for j in range(graph.num_joints - 1)]
        return GraphVariant(kind, SkeletonGraph(graph.names, tuple(chain), 0, graph.name), fwd)
    if kind == "physical_only":
        return GraphVariant(kind, graph.with_edges(e for e in graph.edges if e.kind == "physical"), fwd)
    if kind == "symmetrical_only":
        return GraphVariant(kind, graph.with_edges(e for e in graph.edges if e.kind == "symmetrical"), fwd)
    if kind == "graphical_forward_only":
        return GraphVariant(kind, graph.with_edges(base), fwd)
    if kind == "bidirectional":
        return GraphVariant(kind, graph.with_edges(base), both)
    if kind == "extended":
        extras = tuple(extra_edges) if extra_edges is not None else shipped_extra_edges(graph.name)
        present = {(min(e.src, e.dst), max(e.src, e.dst)) for e in base}
        merged = list(base)
        for e in extras:
            key = (min(e.src, e.dst), max(e.src, e.dst))
            if key not in present:
                merged.append(Edge(e.src, e.dst, "extra"))
                present.add(key)
        return GraphVariant(kind, graph.with_edges(merged), both)
    raise GraphError(f"unknown graph variant {kind!r}; choose from {VARIANT_KINDS}")
