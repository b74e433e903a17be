"""Exact tree search, experience collection, the task value function, and
value-guided search over the dependency tree."""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from . import binio
from .core import Task, TravelModel
from .depgraph import TreeNode
from .seqplan import EMPTY, PlannedSequence, SequenceCatalog

FEATURE_SCHEMA_VERSION = 1
FEATURE_NAMES = (
    "n_workers", "n_tasks", "slack_mean", "slack_min", "slack_max",
    "availability", "seq_len", "seq_completion", "seq_distance",
    "seq_coverage", "n_competitors",
)
N_FEATURES = len(FEATURE_NAMES)


class TrainingFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class State:
    """Remaining workers (this node's unprocessed ones plus its children's) and open tasks."""

    workers: tuple[int, ...]
    tasks: frozenset[int]


@dataclass
class SearchContext:
    tasks: Mapping[int, Task]
    catalogs: SequenceCatalog
    t_now: float
    model: TravelModel = field(default_factory=TravelModel)


@dataclass(frozen=True)
class FeatureScales:
    n_workers: float = 10.0
    n_tasks: float = 20.0
    slack: float = 60.0
    availability: float = 3600.0
    seq_len: float = 4.0
    seq_time: float = 60.0
    seq_distance: float = 1.0
    n_competitors: float = 10.0


def featurize(st: State, worker_id: int, q: PlannedSequence, ctx: SearchContext,
              scales: FeatureScales = FeatureScales()) -> np.ndarray:
    """Fixed-length encoding of a (state, worker, sequence) triple.

    Task-set statistics use the open tasks that some worker of the state can
    reach, so tasks belonging to unrelated parts of the map do not dilute them.
    """
    cats = ctx.catalogs
    reach_union: set[int] = set()
    for u in st.workers:
        reach_union |= cats[u].reachable
    rel = [t for t in sorted(st.tasks & reach_union)]
    slack = np.array([ctx.tasks[t].exp_time - ctx.t_now for t in rel]) if rel else np.zeros(1)
    qs = set(q.tasks)
    competitors = sum(1 for u in st.workers
                      if u != worker_id and not cats[u].reachable.isdisjoint(qs)) if qs else 0
    worker = cats[worker_id].worker
    return np.array([
        len(st.workers) / scales.n_workers,
        len(rel) / scales.n_tasks,
        float(slack.mean()) / scales.slack,
        float(slack.min()) / scales.slack,
        float(slack.max()) / scales.slack,
        worker.availability(ctx.t_now) / scales.availability,
        len(q) / scales.seq_len,
        ((q.completion - ctx.t_now) if q.tasks else 0.0) / scales.seq_time,
        q.distance / scales.seq_distance,
        len(q) / len(rel) if rel else 0.0,
        competitors / scales.n_competitors,
    ])


# ---------------------------------------------------------------- experience

class Experience:
    """Ring buffer of ``(features, opt)`` tuples."""

    def __init__(self, capacity: int = 1_000_000):
        self.capacity = capacity
        self._x: deque[np.ndarray] = deque(maxlen=capacity)
        self._y: deque[float] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._y)

    def append(self, features: np.ndarray, opt: float) -> None:
        self._x.append(np.asarray(features, dtype=float))
        self._y.append(float(opt))

    def extend(self, other: "Experience") -> None:
        for x, y in zip(other._x, other._y):
            self.append(x, y)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if not self._y:
            return np.zeros((0, N_FEATURES)), np.zeros(0)
        return np.stack(list(self._x)), np.array(self._y)

    def save(self, path: str | Path) -> None:
        x, y = self.arrays()
        header = {"kind": "experience", "count": len(y), "n_features": N_FEATURES,
                  "feature_names": list(FEATURE_NAMES),
                  "schema_version": FEATURE_SCHEMA_VERSION, "capacity": self.capacity}
        binio.write_arrays(path, header, {"features": x, "opt": y})

    @classmethod
    def load(cls, path: str | Path) -> "Experience":
        header, arrays = binio.read_arrays(path)
        if header.get("kind") != "experience":
            raise ValueError(f"{path}: not an experience file")
        if header.get("schema_version") != FEATURE_SCHEMA_VERSION:
            raise ValueError(f"{path}: feature schema {header.get('schema_version')} "
                             f"!= {FEATURE_SCHEMA_VERSION}")
        exp = cls(header.get("capacity", 1_000_000))
        for x, y in zip(arrays["features"], arrays["opt"]):
            exp.append(x, y)
        return exp


# ---------------------------------------------------------------- exact search

def _children_workers(node: TreeNode) -> tuple[int, ...]:
    return tuple(w for c in node.children for w in c.workers)


class ExactSearch:
    """Depth-first search for the maximum number of assignable tasks in a subtree.

    Values are memoised on (node, unprocessed workers, open tasks relevant
    to the subtree). With ``all_workers`` every unprocessed worker is tried
    first at each level, as in the textbook search; otherwise only the
    lowest id is, which reaches the same optimum with far fewer branches.
    """

    def __init__(self, ctx: SearchContext, experience: Experience | None = None,
                 all_workers: bool = True, scales: FeatureScales = FeatureScales()):
        self.ctx = ctx
        self.experience = experience
        self.all_workers = all_workers
        self.scales = scales
        self.expansions = 0
        self.records: dict[tuple, float] = {}
        self._memo: dict[tuple, int] = {}
        self._scope: dict[int, frozenset[int]] = {}

    def _subtree_tasks(self, node: TreeNode) -> frozenset[int]:
        key = id(node)
        if key not in self._scope:
            acc: set[int] = set()
            for n in node.walk():
                for w in n.workers:
                    acc |= self.ctx.catalogs[w].reachable
            self._scope[key] = frozenset(acc)
        return self._scope[key]

    def value(self, node: TreeNode, s: frozenset[int], w_n: Sequence[int]) -> int:
        self.expansions += 1
        w_n = tuple(sorted(w_n))
        s = frozenset(s) & self._subtree_tasks(node)
        key = (id(node), w_n, s)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        if not w_n:
            opt = sum(self.value(c, s, c.workers) for c in node.children)
        else:
            opt = 0
            st = State(tuple(sorted(w_n + _children_workers(node))), s)
            branch = w_n if self.all_workers else w_n[:1]
            for w in branch:
                rest = tuple(u for u in w_n if u != w)
                for q in self.ctx.catalogs[w].usable(s):
                    v = self.value(node, s - q.task_set, rest) + len(q)
                    self.records[(st, w, q.tasks)] = v
                    if self.experience is not None:
                        self.experience.append(featurize(st, w, q, self.ctx, self.scales), v)
                    opt = max(opt, v)
        self._memo[key] = opt
        return opt

    def plan(self, node: TreeNode, s: frozenset[int],
             w_n: Sequence[int] | None = None) -> list[tuple[int, PlannedSequence]]:
        """An optimal assignment inside the subtree, rebuilt from memoised values."""
        w_n = tuple(sorted(node.workers if w_n is None else w_n))
        s = frozenset(s)
        if not w_n:
            out = []
            for c in node.children:
                out += self.plan(c, s, c.workers)
            return out
        w, rest = w_n[0], w_n[1:]
        best_key, best_q = None, EMPTY
        for q in self.ctx.catalogs[w].usable(s):
            v = self.value(node, s - q.task_set, rest) + len(q)
            key = (-v, -len(q), q.completion or 0.0, q.tasks)
            if best_key is None or key < best_key:
                best_key, best_q = key, q
        return [(w, best_q)] + self.plan(node, s - best_q.task_set, rest)


def dfsearch(node: TreeNode, s: Iterable[int], w_n: Sequence[int] | None,
             ctx: SearchContext, experience: Experience | None = None,
             all_workers: bool = True) -> tuple[int, Experience]:
    """Optimal assigned-task count of a subtree plus the explored experience."""
    exp = experience if experience is not None else Experience()
    search = ExactSearch(ctx, exp, all_workers=all_workers)
    opt = search.value(node, frozenset(s), node.workers if w_n is None else w_n)
    return opt, exp


# ---------------------------------------------------------------- value function

class Scorer(Protocol):
    def __call__(self, st: State, worker_id: int, candidates: Sequence[PlannedSequence],
                 ctx: SearchContext) -> np.ndarray: ...


@dataclass(frozen=True)
class TVFHyper:
    hidden: int = 32
    epochs: int = 200
    batch_size: int = 64
    lr: float = 0.01
    momentum: float = 0.9
    holdout: float = 0.1
    seed: int = 0


@dataclass
class ValueParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    scales: FeatureScales = field(default_factory=FeatureScales)
    hyper: TVFHyper = field(default_factory=TVFHyper)

    def predict(self, x: np.ndarray) -> np.ndarray:
        h = np.maximum(np.asarray(x, dtype=float) @ self.w1 + self.b1, 0.0)
        return (h @ self.w2 + self.b2).ravel()

    def __call__(self, st: State, worker_id: int, candidates: Sequence[PlannedSequence],
                 ctx: SearchContext) -> np.ndarray:
        x = np.stack([featurize(st, worker_id, q, ctx, self.scales) for q in candidates])
        return self.predict(x)

    def arrays(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        header = {"kind": "tvf", "schema_version": FEATURE_SCHEMA_VERSION,
                  "scales": asdict(self.scales), "hyper": asdict(self.hyper)}
        binio.write_arrays(path, header, self.arrays())
        Path(str(path) + ".json").write_text(
            json.dumps({**header, **(extra or {})}, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "ValueParams":
        header, a = binio.read_arrays(path)
        if header.get("kind") != "tvf":
            raise ValueError(f"{path}: not a TVF parameter file")
        if header.get("schema_version") != FEATURE_SCHEMA_VERSION:
            raise ValueError(f"{path}: incompatible feature schema")
        return cls(a["w1"], a["b1"], a["w2"], a["b2"],
                   FeatureScales(**header["scales"]), TVFHyper(**header["hyper"]))


def init_value_params(hyper: TVFHyper = TVFHyper(), n_in: int = N_FEATURES,
                      scales: FeatureScales = FeatureScales()) -> ValueParams:
    rng = np.random.default_rng(hyper.seed)
    return ValueParams(rng.normal(0.0, math.sqrt(2.0 / n_in), (n_in, hyper.hidden)),
                       np.zeros(hyper.hidden),
                       rng.normal(0.0, math.sqrt(1.0 / hyper.hidden), (hyper.hidden, 1)),
                       np.zeros(1), scales, hyper)


def _mse_grad(p: ValueParams, x: np.ndarray, y: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    pre = x @ p.w1 + p.b1
    h = np.maximum(pre, 0.0)
    err = (h @ p.w2 + p.b2).ravel() - y
    n = len(y)
    g_out = (2.0 / n) * err[:, None]
    g_h = (g_out @ p.w2.T) * (pre > 0)
    return float(np.mean(err ** 2)), {
        "w2": h.T @ g_out, "b2": g_out.sum(axis=0),
        "w1": x.T @ g_h, "b1": g_h.sum(axis=0),
    }


def _mse(p: ValueParams, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean((p.predict(x) - y) ** 2)) if len(y) else float("nan")


@dataclass
class TVFTrainResult:
    params: ValueParams
    train_loss: list[float]
    holdout_loss: list[float]
    best_epoch: int


def train_tvf(u: Experience, hyper: TVFHyper = TVFHyper(),
              scales: FeatureScales = FeatureScales()) -> TVFTrainResult:
    """Regress recorded ``opt`` on features with squared loss.

    Mini-batches are drawn uniformly with replacement from the replay
    buffer. An epoch that raises the full training loss is rolled back and
    the step size halved. The parameters with the lowest held-out loss are
    returned.
    """
    x, y = u.arrays()
    if len(y) < hyper.batch_size:
        raise ValueError(f"need at least {hyper.batch_size} experience tuples, have {len(y)}")
    rng = np.random.default_rng(hyper.seed)
    perm = rng.permutation(len(y))
    n_hold = int(round(hyper.holdout * len(y)))
    hold, train = perm[:n_hold], perm[n_hold:]
    xt, yt, xh, yh = x[train], y[train], x[hold], y[hold]

    p = init_value_params(hyper, x.shape[1], scales)
    p.b2[:] = yt.mean()
    vel = {k: np.zeros_like(v) for k, v in p.arrays().items()}
    lr = hyper.lr
    steps = max(1, len(yt) // hyper.batch_size)
    cur = _mse(p, xt, yt)
    best = (_mse(p, xh, yh) if n_hold else cur, -1, _clone(p))
    train_curve, hold_curve = [], []
    for epoch in range(hyper.epochs):
        backup = _clone(p)
        for _ in range(steps):
            idx = rng.integers(0, len(yt), hyper.batch_size)
            loss, g = _mse_grad(p, xt[idx], yt[idx])
            if not math.isfinite(loss):
                raise TrainingFailure(f"epoch {epoch}: non-finite loss")
            for k, arr in p.arrays().items():
                vel[k] = hyper.momentum * vel[k] - lr * g[k]
                arr += vel[k]
        new = _mse(p, xt, yt)
        if not math.isfinite(new):
            raise TrainingFailure(f"epoch {epoch}: non-finite loss")
        if new > cur:
            p = backup
            lr *= 0.5
            vel = {k: np.zeros_like(v) for k, v in p.arrays().items()}
        else:
            cur = new
        train_curve.append(cur)
        h = _mse(p, xh, yh) if n_hold else cur
        hold_curve.append(h)
        if h < best[0]:
            best = (h, epoch, _clone(p))
    return TVFTrainResult(best[2], train_curve, hold_curve, best[1])


def _clone(p: ValueParams) -> ValueParams:
    return ValueParams(p.w1.copy(), p.b1.copy(), p.w2.copy(), p.b2.copy(), p.scales, p.hyper)


class TableScorer:
    """Exact action values recorded by :class:`ExactSearch`, used as a scorer."""

    def __init__(self, records: Mapping[tuple, float]):
        self.records = dict(records)

    def __call__(self, st, worker_id, candidates, ctx) -> np.ndarray:
        return np.array([self.records[(st, worker_id, q.tasks)] for q in candidates], dtype=float)


# ---------------------------------------------------------------- guided search

@dataclass
class GuidedSearch:
    ctx: SearchContext
    scorer: Scorer
    expansions: int = 0
    evaluations: int = 0

    def run(self, node: TreeNode, s: frozenset[int],
            w_n: Sequence[int] | None = None) -> list[tuple[int, PlannedSequence]]:
        self.expansions += 1
        w_n = tuple(sorted(node.workers if w_n is None else w_n))
        s = frozenset(s)
        if not w_n:
            out = []
            for c in node.children:
                out += self.run(c, s, c.workers)
            return out
        w = w_n[0]
        # the state's task view is the subtree's reachable scope, as in the exact search
        scope: set[int] = set()
        for n in node.walk():
            for u in n.workers:
                scope |= self.ctx.catalogs[u].reachable
        st = State(tuple(sorted(w_n + _children_workers(node))), s & frozenset(scope))
        cands = self.ctx.catalogs[w].usable(s)
        scores = np.asarray(self.scorer(st, w, cands, self.ctx), dtype=float)
        self.evaluations += 1
        best = max(range(len(cands)), key=lambda i: (scores[i], _neg_tuple(cands[i].tasks)))
        q = cands[best]
        return [(w, q)] + self.run(node, s - q.task_set, w_n[1:])


def _neg_tuple(t: tuple[int, ...]) -> tuple:
    # larger key for lexicographically smaller sequences
    return tuple(-v for v in t) + (math.inf,)


def dfsearch_tvf(node: TreeNode, s: Iterable[int], w_n: Sequence[int] | None,
                 ctx: SearchContext, scorer: Scorer) -> list[tuple[int, PlannedSequence]]:
    return GuidedSearch(ctx, scorer).run(node, frozenset(s), w_n)
