"""Dynamic dependency graph network for next-window demand per grid cell.

Pipeline for one input window (``M`` cells, ``P`` history vectors of ``k``
slots each):

1. each cell's history is flattened into a chronological slot sequence and
   passed through gated dilated causal convolution layers; the final
   layer's last ``k`` positions, flattened over channels, are the cell's
   feature row ``Z0`` (exactly ``k`` wide with one channel);
2. the latest vector of every cell is embedded twice and turned into a
   row-stochastic adjacency ``A = softmax(tanh(M1 M2^T + M2 M1^T))``;
3. ``A`` is symmetrically normalised with self loops and ``Z0`` is
   propagated with personalised-PageRank steps, the last followed by ReLU;
4. an affine head and a logistic give ``k`` probabilities per cell.

Gradients are written out by hand for each stage; everything is float64
numpy and deterministic for a given seed.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import binio
from .core import Origin, Task
from .grid_demand import GridSpec, TaskSeries, average_precision

log = logging.getLogger(__name__)

MATERIALIZE_THRESHOLD = 0.85


class ModelShapeError(ValueError):
    pass


class TrainingError(RuntimeError):
    def __init__(self, epoch: int, msg: str = "non-finite loss"):
        super().__init__(f"epoch {epoch}: {msg}")
        self.epoch = epoch


@dataclass(frozen=True)
class DemandConfig:
    k: int = 12
    P: int = 24
    n_cells: int = 16
    embed_dim: int = 16
    channels: int = 8
    kernel: int = 3
    dilations: tuple[int, ...] = (1, 2)
    alpha: float = 0.1
    hops: int = 3

    def __post_init__(self) -> None:
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.hops < 1:
            raise ValueError("hops must be >= 1")


@dataclass
class ModelParams:
    cfg: DemandConfig
    arrays: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def copy(self) -> "ModelParams":
        return ModelParams(self.cfg, {n: a.copy() for n, a in self.arrays.items()})

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        header = {"kind": "ddgnn", "config": _cfg_to_json(self.cfg)}
        binio.write_arrays(path, header, self.arrays)
        sidecar = {"config": _cfg_to_json(self.cfg), **(extra or {})}
        Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "ModelParams":
        header, arrays = binio.read_arrays(path)
        if header.get("kind") != "ddgnn":
            raise ValueError(f"{path}: not a demand model file")
        return cls(_cfg_from_json(header["config"]), arrays)


def _cfg_to_json(cfg: DemandConfig) -> dict:
    d = asdict(cfg)
    d["dilations"] = list(cfg.dilations)
    return d


def _cfg_from_json(d: dict) -> DemandConfig:
    d = dict(d)
    d["dilations"] = tuple(d["dilations"])
    return DemandConfig(**d)


def param_names(cfg: DemandConfig) -> list[str]:
    names = ["emb1_w", "emb1_b", "emb2_w", "emb2_b"]
    for l in range(len(cfg.dilations)):
        names += [f"conv{l}_f1", f"conv{l}_b1", f"conv{l}_f2", f"conv{l}_b2"]
    return names + ["out_w", "out_b"]


def init_params(cfg: DemandConfig, seed: int = 0, scale: float = 1.0) -> ModelParams:
    rng = np.random.default_rng(seed)
    a: dict[str, np.ndarray] = {}
    k, E, C, K = cfg.k, cfg.embed_dim, cfg.channels, cfg.kernel
    for e in ("emb1", "emb2"):
        a[f"{e}_w"] = rng.normal(0.0, scale / math.sqrt(k), (k, E))
        a[f"{e}_b"] = np.zeros(E)
    c_in = 1
    for l in range(len(cfg.dilations)):
        std = scale / math.sqrt(c_in * K)
        a[f"conv{l}_f1"] = rng.normal(0.0, std, (C, c_in, K))
        a[f"conv{l}_b1"] = np.zeros(C)
        a[f"conv{l}_f2"] = rng.normal(0.0, std, (C, c_in, K))
        a[f"conv{l}_b2"] = np.zeros(C)
        c_in = C
    a["out_w"] = rng.normal(0.0, scale / math.sqrt(C * k), (C * k, k))
    a["out_b"] = np.zeros(k)
    return ModelParams(cfg, a)


def zero_params(cfg: DemandConfig) -> ModelParams:
    p = init_params(cfg)
    return ModelParams(cfg, {n: np.zeros_like(v) for n, v in p.arrays.items()})


# ---------------------------------------------------------------- primitives

def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _shift(x: np.ndarray, s: int) -> np.ndarray:
    """Delay along the last axis by ``s`` with zero fill."""
    if s == 0:
        return x
    out = np.zeros_like(x)
    if s < x.shape[-1]:
        out[..., s:] = x[..., :-s]
    return out


def _unshift(g: np.ndarray, s: int) -> np.ndarray:
    """Adjoint of :func:`_shift`."""
    if s == 0:
        return g
    out = np.zeros_like(g)
    if s < g.shape[-1]:
        out[..., :-s] = g[..., s:]
    return out


def dilated_causal_conv(x: Sequence[float], f: Sequence[float], d: int) -> np.ndarray:
    """``y[j] = sum_i f[i] * x[j - i*d]`` with zeros before the start."""
    x = np.asarray(x, dtype=float)
    y = np.zeros_like(x)
    for i, fi in enumerate(np.asarray(f, dtype=float)):
        y += fi * _shift(x, i * d)
    return y


def _conv(h: np.ndarray, f: np.ndarray, d: int) -> np.ndarray:
    # h (..., C_in, J), f (C_out, C_in, K) -> (..., C_out, J)
    out = None
    for i in range(f.shape[2]):
        term = np.einsum("oc,...cj->...oj", f[:, :, i], _shift(h, i * d))
        out = term if out is None else out + term
    return out


def _conv_backward(h: np.ndarray, f: np.ndarray, d: int,
                   gy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gh = np.zeros_like(h)
    gf = np.zeros_like(f)
    lead = tuple(range(h.ndim - 2))
    for i in range(f.shape[2]):
        hs = _shift(h, i * d)
        gf[:, :, i] = np.tensordot(gy, hs, axes=(lead + (-1,), lead + (-1,)))
        gh += _unshift(np.einsum("oc,...oj->...cj", f[:, :, i], gy), i * d)
    return gh, gf


def _row_softmax(s: np.ndarray) -> np.ndarray:
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def learn_adjacency(cells_now: np.ndarray, p: ModelParams) -> np.ndarray:
    """Row-stochastic adjacency from the latest demand vector of each cell."""
    c = np.asarray(cells_now, dtype=float)
    m1 = c @ p["emb1_w"] + p["emb1_b"]
    m2 = c @ p["emb2_w"] + p["emb2_b"]
    u = m1 @ np.swapaxes(m2, -1, -2) + m2 @ np.swapaxes(m1, -1, -2)
    return _row_softmax(np.tanh(u))


def normalize_adjacency(a: np.ndarray) -> np.ndarray:
    """``D^-1/2 (A + I) D^-1/2`` with ``D_ii = 1 + sum_j A_ij``."""
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    deg = 1.0 + a.sum(axis=-1)
    inv = 1.0 / np.sqrt(deg)
    return (a + np.eye(n)) * inv[..., :, None] * inv[..., None, :]


def appnp(z0: np.ndarray, a_hat: np.ndarray, alpha: float, hops: int) -> np.ndarray:
    """``hops`` propagation steps ``Z <- alpha Z0 + (1-alpha) A_hat Z``; ReLU on the last."""
    z = np.asarray(z0, dtype=float)
    for _ in range(hops):
        z = alpha * z0 + (1.0 - alpha) * (a_hat @ z)
    return np.maximum(z, 0.0)


def gated_temporal(history: np.ndarray, p: ModelParams) -> np.ndarray:
    """Feature vector of one cell from its ``(P, k)`` history."""
    h = np.asarray(history, dtype=float).reshape(1, -1)
    for l, d in enumerate(p.cfg.dilations):
        a = _conv(h, p[f"conv{l}_f1"], d) + p[f"conv{l}_b1"][:, None]
        g = _conv(h, p[f"conv{l}_f2"], d) + p[f"conv{l}_b2"][:, None]
        h = np.tanh(a) * _sigmoid(g)
    return h[:, -p.cfg.k:].ravel()


# ---------------------------------------------------------------- model

def _check_shape(x: np.ndarray, cfg: DemandConfig) -> None:
    if x.ndim != 4 or x.shape[1] != cfg.n_cells or x.shape[3] != cfg.k:
        raise ModelShapeError(
            f"expected (batch, {cfg.n_cells}, P, {cfg.k}) input, got {x.shape}")


def _forward(x: np.ndarray, p: ModelParams) -> tuple[np.ndarray, dict]:
    cfg = p.cfg
    B, M, P, k = x.shape
    cache: dict = {"x": x, "layers": []}
    h = x.reshape(B, M, 1, P * k)
    for l, d in enumerate(cfg.dilations):
        a = _conv(h, p[f"conv{l}_f1"], d) + p[f"conv{l}_b1"][:, None]
        g = _conv(h, p[f"conv{l}_f2"], d) + p[f"conv{l}_b2"][:, None]
        ta, sg = np.tanh(a), _sigmoid(g)
        cache["layers"].append((h, ta, sg))
        h = ta * sg
    z0 = h[..., -k:].reshape(B, M, -1)
    cache["h_last_shape"] = h.shape

    c = x[:, :, -1, :]
    m1 = c @ p["emb1_w"] + p["emb1_b"]
    m2 = c @ p["emb2_w"] + p["emb2_b"]
    u = m1 @ np.swapaxes(m2, -1, -2) + m2 @ np.swapaxes(m1, -1, -2)
    t = np.tanh(u)
    adj = _row_softmax(t)
    deg = 1.0 + adj.sum(axis=-1)
    inv = 1.0 / np.sqrt(deg)
    a_hat = (adj + np.eye(M)) * inv[..., :, None] * inv[..., None, :]
    cache.update(c=c, m1=m1, m2=m2, t=t, adj=adj, deg=deg, inv=inv, a_hat=a_hat)

    alpha = cfg.alpha
    zs = [z0]
    z = z0
    for _ in range(cfg.hops):
        z = alpha * z0 + (1.0 - alpha) * (a_hat @ z)
        zs.append(z)
    out = np.maximum(z, 0.0)
    logits = out @ p["out_w"] + p["out_b"]
    cache.update(zs=zs, out=out)
    return logits, cache


def _backward(g_logits: np.ndarray, cache: dict, p: ModelParams) -> dict[str, np.ndarray]:
    cfg = p.cfg
    grads: dict[str, np.ndarray] = {}
    out = cache["out"]
    grads["out_w"] = np.einsum("bmf,bmk->fk", out, g_logits)
    grads["out_b"] = g_logits.sum(axis=(0, 1))
    g_z = (g_logits @ p["out_w"].T) * (cache["zs"][-1] > 0)

    alpha = cfg.alpha
    a_hat = cache["a_hat"]
    zs = cache["zs"]
    g_ahat = np.zeros_like(a_hat)
    g_z0 = np.zeros_like(zs[0])
    for h in range(cfg.hops, 0, -1):
        g_z0 += alpha * g_z
        g_ahat += (1.0 - alpha) * g_z @ np.swapaxes(zs[h - 1], -1, -2)
        g_z = (1.0 - alpha) * np.swapaxes(a_hat, -1, -2) @ g_z
    g_z0 += g_z

    # normalisation: a_hat_ij = (A + I)_ij * inv_i * inv_j, inv = deg^-1/2
    inv, deg, adj = cache["inv"], cache["deg"], cache["adj"]
    gi = g_ahat * a_hat
    g_deg = -0.5 * (gi.sum(axis=-1) + gi.sum(axis=-2)) / deg
    g_adj = g_ahat * inv[..., :, None] * inv[..., None, :] + g_deg[..., :, None]

    g_t = adj * (g_adj - (g_adj * adj).sum(axis=-1, keepdims=True))
    g_u = g_t * (1.0 - cache["t"] ** 2)
    g_sym = g_u + np.swapaxes(g_u, -1, -2)
    g_m1 = g_sym @ cache["m2"]
    g_m2 = g_sym @ cache["m1"]
    c = cache["c"]
    grads["emb1_w"] = np.einsum("bmk,bme->ke", c, g_m1)
    grads["emb1_b"] = g_m1.sum(axis=(0, 1))
    grads["emb2_w"] = np.einsum("bmk,bme->ke", c, g_m2)
    grads["emb2_b"] = g_m2.sum(axis=(0, 1))

    g_h = np.zeros(cache["h_last_shape"])
    g_h[..., -cfg.k:] = g_z0.reshape(g_h.shape[:-1] + (cfg.k,))
    for l in range(len(cfg.dilations) - 1, -1, -1):
        d = cfg.dilations[l]
        h_in, ta, sg = cache["layers"][l]
        g_a = g_h * sg * (1.0 - ta ** 2)
        g_g = g_h * ta * sg * (1.0 - sg)
        gh1, gf1 = _conv_backward(h_in, p[f"conv{l}_f1"], d, g_a)
        gh2, gf2 = _conv_backward(h_in, p[f"conv{l}_f2"], d, g_g)
        grads[f"conv{l}_f1"] = gf1
        grads[f"conv{l}_f2"] = gf2
        grads[f"conv{l}_b1"] = g_a.sum(axis=tuple(range(g_a.ndim - 2)) + (g_a.ndim - 1,))
        grads[f"conv{l}_b2"] = g_g.sum(axis=tuple(range(g_g.ndim - 2)) + (g_g.ndim - 1,))
        g_h = gh1 + gh2
    return grads


def predict_proba(history: np.ndarray, p: ModelParams) -> np.ndarray:
    """Probabilities for a ``(M, P, k)`` history or a ``(B, M, P, k)`` batch."""
    x = np.asarray(history, dtype=float)
    single = x.ndim == 3
    if single:
        x = x[None]
    _check_shape(x, p.cfg)
    logits, _ = _forward(x, p)
    prob = _sigmoid(logits)
    return prob[0] if single else prob


@dataclass
class Prediction:
    probs: np.ndarray
    window_start: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape


def forward(series: TaskSeries, p: ModelParams) -> Prediction:
    """Forecast the vector following the last one in ``series``."""
    if series.k != p.cfg.k:
        raise ModelShapeError(f"series k={series.k} but model k={p.cfg.k}")
    probs = predict_proba(series.data, p)
    return Prediction(probs, series.t_start(series.P))


def loss_and_grad(x: np.ndarray, y: np.ndarray,
                  p: ModelParams) -> tuple[float, dict[str, np.ndarray]]:
    """Mean per-dimension binary cross-entropy and its gradient."""
    _check_shape(x, p.cfg)
    logits, cache = _forward(x, p)
    n = logits.size
    loss = float(np.mean(np.logaddexp(0.0, logits) - y * logits))
    g_logits = (_sigmoid(logits) - y) / n
    return loss, _backward(g_logits, cache, p)


def loss_only(x: np.ndarray, y: np.ndarray, p: ModelParams) -> float:
    logits, _ = _forward(x, p)
    return float(np.mean(np.logaddexp(0.0, logits) - y * logits))


# ---------------------------------------------------------------- training

@dataclass(frozen=True)
class TrainHyper:
    epochs: int = 200
    lr: float = 0.01
    batch_size: int = 16
    seed: int = 0
    init_scale: float = 1.0


@dataclass
class CurveRow:
    epoch: int
    train_loss: float
    val_ap: float


@dataclass
class TrainResult:
    params: ModelParams
    curve: list[CurveRow] = field(default_factory=list)
    best_epoch: int = -1

    def write_curve(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_AP"])
            for r in self.curve:
                w.writerow([r.epoch, repr(r.train_loss), repr(r.val_ap)])


def make_windows(series: TaskSeries, P: int) -> tuple[np.ndarray, np.ndarray]:
    """Sliding ``(history, next vector)`` pairs over a series."""
    data = series.data
    n = data.shape[1] - P
    if n <= 0:
        return np.zeros((0, data.shape[0], P, data.shape[2])), np.zeros((0, data.shape[0], data.shape[2]))
    xs = np.stack([data[:, s:s + P] for s in range(n)])
    ys = np.stack([data[:, s + P] for s in range(n)])
    return xs, ys


def evaluate_ap(p: ModelParams, xs: np.ndarray, ys: np.ndarray) -> float:
    if len(xs) == 0 or ys.sum() == 0:
        return float("nan")
    return average_precision(predict_proba(xs, p).ravel(), ys.ravel())


def persistence_ap(xs: np.ndarray, ys: np.ndarray) -> float:
    """AP of repeating each cell's last observed vector."""
    return average_precision(xs[:, :, -1, :].ravel(), ys.ravel())


def train_demand(train_series: TaskSeries, val_series: TaskSeries, cfg: DemandConfig,
                 hyper: TrainHyper = TrainHyper()) -> TrainResult:
    """Mini-batch SGD on BCE; keeps the parameters of the best validation-AP epoch."""
    if train_series.n_cells != cfg.n_cells or train_series.k != cfg.k:
        raise ModelShapeError("training series does not match the model config")
    xs, ys = make_windows(train_series, cfg.P)
    vx, vy = make_windows(val_series, cfg.P)
    if len(xs) == 0:
        raise ValueError(f"training series needs more than P={cfg.P} vectors")
    rng = np.random.default_rng(hyper.seed)
    p = init_params(cfg, seed=hyper.seed, scale=hyper.init_scale)
    # start the output bias at the base-rate logit; sparse targets otherwise
    # spend most early steps moving it
    rate = float(np.clip(ys.mean(), 1e-3, 1 - 1e-3))
    p.arrays["out_b"][:] = math.log(rate / (1.0 - rate))
    result = TrainResult(p.copy())
    best_ap = -math.inf
    for epoch in range(hyper.epochs):
        order = rng.permutation(len(xs))
        for start in range(0, len(order), hyper.batch_size):
            idx = np.sort(order[start:start + hyper.batch_size])
            loss, grads = loss_and_grad(xs[idx], ys[idx], p)
            if not math.isfinite(loss):
                raise TrainingError(epoch)
            for name, g in grads.items():
                p.arrays[name] -= hyper.lr * g
        train_loss = loss_only(xs, ys, p)
        if not math.isfinite(train_loss):
            raise TrainingError(epoch)
        val_ap = evaluate_ap(p, vx, vy)
        result.curve.append(CurveRow(epoch, train_loss, val_ap))
        score = val_ap if math.isfinite(val_ap) else -train_loss
        if score > best_ap:
            best_ap = score
            result.params = p.copy()
            result.best_epoch = epoch
    return result


# ---------------------------------------------------------------- output

def materialize_predictions(pred: Prediction | np.ndarray, threshold: float, grid: GridSpec,
                            window_start: float, dt: float, default_valid: float,
                            next_id: int = -1) -> list[Task]:
    """One predicted task per (cell, slot) whose probability exceeds ``threshold``.

    Ids count downward from ``next_id`` so they never collide with real ids.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    probs = pred.probs if isinstance(pred, Prediction) else np.asarray(pred)
    out = []
    tid = next_id
    for i, j in zip(*np.nonzero(probs > threshold)):
        pub = window_start + j * dt
        out.append(Task(tid, grid.centroid(int(i) + 1), pub, pub + default_valid,
                        Origin.PREDICTED))
        tid -= 1
    return out


def copy_params(p: ModelParams) -> ModelParams:
    return copy.deepcopy(p)
