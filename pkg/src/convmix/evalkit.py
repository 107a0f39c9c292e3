"""Downstream evaluation: separability index, K-Means + agreement metrics,
and classification probes on frozen embeddings.

All routines are deterministic given their seed and run in float64. K-Means
and the probes are self-contained (no sklearn dependency); the test suite
cross-checks them against independent oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .densemath import (
    Adam,
    kmeanspp_centers,
    pairwise_sqdist,
    seeded_rng,
    softmax,
    entropy_terms,
)
from .errors import (
    DegenerateLabels,
    EmptyInput,
    EmptySplit,
    LengthMismatch,
    ShapeMismatch,
)


# --- cluster separability ------------------------------------------------------


@dataclass
class CHDetail:
    score: float
    between: float
    within: float
    degenerate: bool            # True when the within-variance is exactly zero


def calinski_harabasz_detail(z: np.ndarray, labels: np.ndarray) -> CHDetail:
    """Variance-ratio criterion [B/(K-1)] / [W/(n-K)] over label groups."""
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels)
    if len(labels) != z.shape[0]:
        raise LengthMismatch("one label per row required")
    uniq, inv = np.unique(labels, return_inverse=True)
    k = len(uniq)
    n = z.shape[0]
    if k < 2:
        raise DegenerateLabels("need at least 2 non-empty groups")
    if n <= k:
        raise DegenerateLabels(f"need more points ({n}) than groups ({k})")
    overall = z.mean(axis=0)
    between = 0.0
    within = 0.0
    for g in range(k):
        pts = z[inv == g]
        mu = pts.mean(axis=0)
        between += len(pts) * float(((mu - overall) ** 2).sum())
        within += float(((pts - mu) ** 2).sum())
    if within == 0.0:
        return CHDetail(score=math.inf, between=between, within=0.0, degenerate=True)
    score = (between / (k - 1)) / (within / (n - k))
    return CHDetail(score=score, between=between, within=within, degenerate=False)


def calinski_harabasz(z: np.ndarray, labels: np.ndarray) -> float:
    """Calinski-Harabasz score; +inf sentinel when groups have zero spread."""
    return calinski_harabasz_detail(z, labels).score


# --- K-Means ---------------------------------------------------------------------


@dataclass
class ClusteringResult:
    assignment: np.ndarray
    inertia: float
    iterations: int


def _lloyd(z: np.ndarray, k: int, rng: np.random.Generator,
           max_iter: int, tol: float) -> ClusteringResult:
    n = z.shape[0]
    centers = kmeanspp_centers(z, k, rng)
    prev_inertia = math.inf
    assign = np.zeros(n, dtype=np.int64)
    for it in range(1, max_iter + 1):
        sq = pairwise_sqdist(z, centers)
        assign = np.argmin(sq, axis=1)
        costs = sq[np.arange(n), assign]

        # deterministic repair: an empty cluster takes the point currently
        # farthest from its own centroid; donors must keep at least one point
        counts = np.bincount(assign, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            candidates = np.where(counts[assign] > 1, costs, -np.inf)
            far = int(np.argmax(candidates))
            counts[assign[far]] -= 1
            counts[empty] += 1
            assign[far] = empty
            costs[far] = 0.0

        inertia = 0.0
        for c in range(k):
            pts = z[assign == c]
            centers[c] = pts.mean(axis=0)
            inertia += float(((pts - centers[c]) ** 2).sum())
        # Lloyd never increases inertia beyond float rounding
        assert inertia <= prev_inertia * (1.0 + 1e-12) + 1e-12, \
            f"inertia increased at iteration {it}"
        if prev_inertia - inertia <= tol * max(prev_inertia, 1e-30):
            return ClusteringResult(assignment=assign, inertia=inertia, iterations=it)
        prev_inertia = inertia
    return ClusteringResult(assignment=assign, inertia=prev_inertia, iterations=max_iter)


def kmeans(z: np.ndarray, k: int, restarts: int = 10, seed: int = 0,
           max_iter: int = 300, tol: float = 1e-6) -> ClusteringResult:
    """Best-of-restarts K-Means with k-means++ seeding; deterministic by seed."""
    z = np.asarray(z, dtype=np.float64)
    if z.size == 0:
        raise EmptyInput("cannot cluster an empty matrix")
    if k > z.shape[0]:
        raise ShapeMismatch(f"k={k} exceeds {z.shape[0]} points")
    rng = seeded_rng(seed)
    best: ClusteringResult | None = None
    for _ in range(max(1, restarts)):
        run = _lloyd(z, k, rng, max_iter, tol)
        if best is None or run.inertia < best.inertia:
            best = run
    return best


# --- clustering agreement ---------------------------------------------------------


def _contingency(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _canonical_partition(x: np.ndarray) -> list[int]:
    """Labels renumbered by first appearance; equal lists = equal partitions."""
    seen: dict = {}
    return [seen.setdefault(v, len(seen)) for v in x.tolist()]


def nmi(a, b) -> float:
    """Normalized mutual information, arithmetic-mean normalization."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1 or len(a) == 0:
        raise LengthMismatch("need equal-length non-empty label vectors")
    if _canonical_partition(a) == _canonical_partition(b):
        return 1.0      # identical partitions, exactly
    table = _contingency(a, b).astype(np.float64)
    n = table.sum()
    pij = table / n
    pa = pij.sum(axis=1)
    pb = pij.sum(axis=0)
    ha = -entropy_terms(pa).sum()
    hb = -entropy_terms(pb).sum()
    if ha == 0.0 and hb == 0.0:
        # both labelings are single-cluster partitions, hence identical
        return 1.0
    if ha == 0.0 or hb == 0.0:
        return 0.0
    outer = pa[:, None] * pb[None, :]
    nz = pij > 0
    mi = float((pij[nz] * np.log(pij[nz] / outer[nz])).sum())
    mi = max(mi, 0.0)
    return float(mi / (0.5 * (ha + hb)))


def ari(a, b) -> float:
    """Adjusted Rand index from pair counts."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1 or len(a) == 0:
        raise LengthMismatch("need equal-length non-empty label vectors")
    table = _contingency(a, b)
    comb2 = lambda x: x * (x - 1) / 2.0
    sum_ij = comb2(table).sum()
    sum_a = comb2(table.sum(axis=1)).sum()
    sum_b = comb2(table.sum(axis=0)).sum()
    total = comb2(len(a))
    if total == 0:
        return 1.0
    expected = sum_a * sum_b / total
    maximum = 0.5 * (sum_a + sum_b)
    if maximum == expected:
        # both partitions trivial (all-singletons or single-cluster): identical
        return 1.0
    return float((sum_ij - expected) / (maximum - expected))


# --- classification probes --------------------------------------------------------


@dataclass
class ProbeConfig:
    hidden: int = 64
    lr: float = 0.01
    weight_decay: float = 5e-4
    epochs: int = 500
    patience: int = 50
    seed: int = 0


@dataclass
class ProbeReport:
    kind: str
    accuracy: dict[str, float]
    trace: list[float] = field(default_factory=list)
    best_epoch: int = 0


def _xent_loss_grads(params, x, y, num_classes, weight_decay, hidden):
    """Cross-entropy loss and analytic gradients for the probe networks.

    With hidden=0 the probe is a single affine layer; otherwise one tanh
    hidden layer. Weight decay applies to weight matrices only.
    """
    n = x.shape[0]
    if hidden:
        a1 = x @ params["w1"] + params["b1"]
        u = np.tanh(a1)
        scores = u @ params["w2"] + params["b2"]
    else:
        scores = x @ params["w1"] + params["b1"]
    probs = softmax(scores, axis=1)
    nll = -np.log(np.maximum(probs[np.arange(n), y], 1e-300)).mean()
    reg = 0.5 * weight_decay * sum(float((params[k] ** 2).sum())
                                   for k in params if k.startswith("w"))
    loss = float(nll + reg)

    gs = probs.copy()
    gs[np.arange(n), y] -= 1.0
    gs /= n
    grads = {}
    if hidden:
        grads["w2"] = u.T @ gs + weight_decay * params["w2"]
        grads["b2"] = gs.sum(axis=0)
        gu = gs @ params["w2"].T
        ga1 = gu * (1.0 - u * u)
        grads["w1"] = x.T @ ga1 + weight_decay * params["w1"]
        grads["b1"] = ga1.sum(axis=0)
    else:
        grads["w1"] = x.T @ gs + weight_decay * params["w1"]
        grads["b1"] = gs.sum(axis=0)
    return loss, grads


def _probe_predict(params, x, hidden):
    if hidden:
        u = np.tanh(x @ params["w1"] + params["b1"])
        scores = u @ params["w2"] + params["b2"]
    else:
        scores = x @ params["w1"] + params["b1"]
    return np.argmax(scores, axis=1)


def _run_probe(kind, z, labels, split, config: ProbeConfig) -> ProbeReport:
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    train = np.asarray(split["train"], dtype=np.int64)
    val = np.asarray(split.get("val", []), dtype=np.int64)
    test = np.asarray(split.get("test", []), dtype=np.int64)
    if len(train) == 0:
        raise EmptySplit("probe requires a non-empty train split")
    for part in (train, val, test):
        if len(part) and (part.min() < 0 or part.max() >= z.shape[0]):
            raise EmptySplit("split index out of range")
        if len(part) and np.any(labels[part] < 0):
            raise EmptySplit("split contains unlabeled nodes")

    num_classes = int(labels[labels >= 0].max()) + 1
    dim = z.shape[1]
    hidden = config.hidden if kind == "mlp" else 0
    rng = seeded_rng(config.seed)
    if hidden:
        params = {
            "w1": rng.normal(0, 1.0 / np.sqrt(dim), size=(dim, hidden)),
            "b1": np.zeros(hidden),
            "w2": rng.normal(0, 1.0 / np.sqrt(hidden), size=(hidden, num_classes)),
            "b2": np.zeros(num_classes),
        }
    else:
        params = {
            "w1": rng.normal(0, 1.0 / np.sqrt(dim), size=(dim, num_classes)),
            "b1": np.zeros(num_classes),
        }

    opt = Adam(lr=config.lr)
    xt, yt = z[train], labels[train]
    best_val = -1.0
    best_epoch = 0
    best_params = {k: v.copy() for k, v in params.items()}
    since_improve = 0
    trace = []
    for epoch in range(config.epochs):
        loss, grads = _xent_loss_grads(params, xt, yt, num_classes,
                                       config.weight_decay, hidden)
        trace.append(loss)
        opt.step(params, grads)
        if len(val):
            pred = _probe_predict(params, z[val], hidden)
            acc = float(np.mean(pred == labels[val]))
            # ties refresh the snapshot: a plateau at the best accuracy keeps
            # the most-trained parameters and does not trigger the patience
            if acc >= best_val:
                best_val = acc
                best_epoch = epoch
                best_params = {k: v.copy() for k, v in params.items()}
                since_improve = 0
            else:
                since_improve += 1
                if since_improve >= config.patience:
                    break
    if len(val):
        params = best_params
    else:
        best_epoch = len(trace) - 1

    accuracy = {}
    for name, idx in (("train", train), ("val", val), ("test", test)):
        if len(idx):
            pred = _probe_predict(params, z[idx], hidden)
            accuracy[name] = float(np.mean(pred == labels[idx]))
    return ProbeReport(kind=kind, accuracy=accuracy, trace=trace, best_epoch=best_epoch)


def mlp_probe(z, labels, split, config: ProbeConfig | None = None) -> ProbeReport:
    """One-hidden-layer classifier on frozen embeddings."""
    return _run_probe("mlp", z, labels, split, config or ProbeConfig())


def linear_probe(z, labels, split, config: ProbeConfig | None = None) -> ProbeReport:
    """Single affine layer + softmax cross-entropy on frozen embeddings."""
    return _run_probe("linear", z, labels, split, config or ProbeConfig())
