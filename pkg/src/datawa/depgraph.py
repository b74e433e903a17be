"""Worker dependency graph, chordal completion by maximum cardinality search,
and recursive tree construction with independent sibling subtrees."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .seqplan import WorkerCatalog


@dataclass
class WDG:
    """Undirected simple graph over worker ids."""

    adj: dict[int, set[int]] = field(default_factory=dict)

    @classmethod
    def from_edges(cls, nodes: Iterable[int], edges: Iterable[tuple[int, int]]) -> "WDG":
        g = cls({n: set() for n in nodes})
        for u, v in edges:
            if u == v:
                continue
            g.adj.setdefault(u, set()).add(v)
            g.adj.setdefault(v, set()).add(u)
        return g

    @property
    def nodes(self) -> list[int]:
        return sorted(self.adj)

    def edges(self) -> list[tuple[int, int]]:
        return sorted((u, v) for u in self.adj for v in self.adj[u] if u < v)

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.adj.get(u, ())

    def subgraph(self, nodes: Iterable[int]) -> "WDG":
        keep = set(nodes)
        return WDG({u: self.adj[u] & keep for u in keep})

    def components(self) -> list[list[int]]:
        """Connected components, each sorted, ordered by smallest member."""
        seen: set[int] = set()
        out = []
        for start in self.nodes:
            if start in seen:
                continue
            comp, stack = [], [start]
            seen.add(start)
            while stack:
                u = stack.pop()
                comp.append(u)
                for v in self.adj[u]:
                    if v not in seen:
                        seen.add(v)
                        stack.append(v)
            out.append(sorted(comp))
        return out


def build_wdg(workers: Iterable[int], catalogs: Mapping[int, WorkerCatalog]) -> WDG:
    """Edge between two workers iff their reachable task sets intersect."""
    ids = sorted(workers)
    g = WDG({w: set() for w in ids})
    for i, u in enumerate(ids):
        ru = catalogs[u].reachable
        if not ru:
            continue
        for v in ids[i + 1:]:
            if not ru.isdisjoint(catalogs[v].reachable):
                g.adj[u].add(v)
                g.adj[v].add(u)
    return g


@dataclass
class CliqueSet:
    cliques: list[frozenset[int]]
    fill_edges: list[tuple[int, int]]
    order: list[int]

    def chordal_graph(self, g: WDG) -> WDG:
        return WDG.from_edges(g.nodes, g.edges() + self.fill_edges)


def mcs_order(g: WDG) -> list[int]:
    """Maximum cardinality search visiting order; ties go to the lowest id."""
    weight = {v: 0 for v in g.adj}
    visited: list[int] = []
    left = set(g.adj)
    while left:
        v = min(left, key=lambda u: (-weight[u], u))
        visited.append(v)
        left.remove(v)
        for u in g.adj[v]:
            if u in left:
                weight[u] += 1
    return visited


def mcs_partition(g: WDG) -> CliqueSet:
    """Chordal completion along the reversed MCS order and its maximal cliques.

    Vertices are eliminated last-visited first; the not-yet-eliminated
    neighbours of each eliminated vertex are joined into a clique (fill
    edges). Each vertex plus its later neighbours is a clique of the
    completed graph; the maximal ones are returned.
    """
    order = mcs_order(g)
    elim = order[::-1]
    pos = {v: i for i, v in enumerate(elim)}
    adj = {v: set(n) for v, n in g.adj.items()}
    fill: list[tuple[int, int]] = []
    candidates = []
    for v in elim:
        later = sorted(u for u in adj[v] if pos[u] > pos[v])
        for a, b in itertools.combinations(later, 2):
            if b not in adj[a]:
                adj[a].add(b)
                adj[b].add(a)
                fill.append((min(a, b), max(a, b)))
        candidates.append(frozenset([v, *later]))
    cliques = [c for c in candidates
               if not any(c < other for other in candidates)]
    uniq = sorted(set(cliques), key=lambda c: sorted(c))
    return CliqueSet(uniq, sorted(fill), order)


@dataclass
class TreeNode:
    workers: tuple[int, ...]
    children: list["TreeNode"] = field(default_factory=list)
    node_id: int = 0

    def walk(self) -> Iterable["TreeNode"]:
        yield self
        for c in self.children:
            yield from c.walk()

    def all_workers(self) -> list[int]:
        return [w for n in self.walk() for w in n.workers]

    def to_dict(self) -> dict:
        return {"node_id": self.node_id, "workers": list(self.workers),
                "children": [c.to_dict() for c in self.children]}

    def to_text(self, indent: int = 0) -> str:
        lines = ["  " * indent + f"[{self.node_id}] " + ", ".join(map(str, self.workers))]
        for c in self.children:
            lines.append(c.to_text(indent + 1))
        return "\n".join(lines)


@dataclass
class DependencyTree:
    roots: list[TreeNode]

    def nodes(self) -> list[TreeNode]:
        return [n for r in self.roots for n in r.walk()]

    def to_json(self) -> str:
        return json.dumps({"trees": [r.to_dict() for r in self.roots]}, indent=2)

    def to_text(self) -> str:
        return "\n".join(r.to_text() for r in self.roots)


def _pick_root(g: WDG, cliques: list[frozenset[int]]) -> frozenset[int]:
    best_key, best = None, None
    for c in cliques:
        n_comp = len(g.subgraph(set(g.adj) - c).components())
        key = (-n_comp, len(c), sorted(c))
        if best_key is None or key < best_key:
            best_key, best = key, c
    assert best is not None
    return best


def build_tree(g: WDG, x: CliqueSet | None = None) -> TreeNode:
    """Recursive tree over a connected worker graph.

    The clique whose removal leaves the most components becomes the root
    (ties: smaller clique, then smaller sorted ids); every residual
    component is decomposed again and hung below it. Each worker lands in
    exactly one node, and sibling subtrees share no graph edge because they
    come from different components.
    """
    if not g.adj:
        raise ValueError("build_tree needs a non-empty graph")
    if x is None:
        x = mcs_partition(g)
    root = _pick_root(g, x.cliques)
    node = TreeNode(tuple(sorted(root)))
    rest = g.subgraph(set(g.adj) - root)
    for comp in rest.components():
        sub = rest.subgraph(comp)
        node.children.append(build_tree(sub, mcs_partition(sub)))
    return node


def build_forest(g: WDG) -> DependencyTree:
    """One tree per connected component, numbered depth-first."""
    roots = []
    for comp in g.components():
        sub = g.subgraph(comp)
        roots.append(build_tree(sub, mcs_partition(sub)))
    tree = DependencyTree(roots)
    for i, n in enumerate(tree.nodes()):
        n.node_id = i
    return tree
