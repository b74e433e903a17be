"""Brute-force reference implementations the tests compare against.

Nothing here imports the planner, tree builder or search modules, so
agreement with them is evidence rather than a tautology.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

from datawa.core import Location, Task, TravelModel, Worker, arrival_times, validate_sequence


def valid_orderings(worker: Worker, tasks: list[Task], t_now: float, model: TravelModel,
                    max_len: int):
    """Every valid ordered sequence up to ``max_len``, by plain enumeration."""
    for r in range(1, max_len + 1):
        for perm in itertools.permutations(tasks, r):
            if validate_sequence(worker, perm, t_now, model):
                yield perm


def feasible_sets(worker, tasks, t_now, model, max_len) -> set[frozenset[int]]:
    out = {frozenset()}
    for perm in valid_orderings(worker, tasks, t_now, model, max_len):
        out.add(frozenset(t.id for t in perm))
    return out


def min_completion(worker, subset: list[Task], t_now, model) -> float | None:
    """Earliest completion over all valid orderings of exactly ``subset``."""
    best = None
    for perm in itertools.permutations(subset):
        if validate_sequence(worker, perm, t_now, model):
            c = arrival_times(worker, perm, t_now, model)[-1]
            best = c if best is None else min(best, c)
    return best


def joint_optimum(workers, tasks: dict[int, Task], t_now, model, max_len) -> int:
    """Maximum number of tasks over all joint, disjoint per-worker choices."""
    ws = sorted(workers, key=lambda w: w.id)
    options = [sorted(feasible_sets(w, list(tasks.values()), t_now, model, max_len), key=sorted)
               for w in ws]

    @lru_cache(maxsize=None)
    def best(i: int, left: frozenset[int]) -> int:
        if i == len(ws):
            return 0
        return max(len(s) + best(i + 1, left - s) for s in options[i] if s <= left)

    return best(0, frozenset(tasks))


def induced_chordless_cycle(adj: dict[int, set[int]], min_len: int = 4):
    """A node set inducing a cycle of length >= ``min_len``, or None.

    Exhaustive over node subsets; only meant for graphs of a dozen nodes.
    """
    nodes = sorted(adj)
    for r in range(min_len, len(nodes) + 1):
        for sub in itertools.combinations(nodes, r):
            keep = set(sub)
            deg = {v: len(adj[v] & keep) for v in sub}
            if any(d != 2 for d in deg.values()):
                continue
            # 2-regular; a cycle iff connected
            seen, stack = {sub[0]}, [sub[0]]
            while stack:
                u = stack.pop()
                for v in adj[u] & keep:
                    if v not in seen:
                        seen.add(v)
                        stack.append(v)
            if len(seen) == r:
                return sub
    return None


def random_graph(rng: np.random.Generator, n: int, p: float) -> dict[int, set[int]]:
    adj = {i: set() for i in range(1, n + 1)}
    for u, v in itertools.combinations(range(1, n + 1), 2):
        if rng.random() < p:
            adj[u].add(v)
            adj[v].add(u)
    return adj


def loc(x: float, y: float) -> Location:
    return Location(x, y)
