"""Step 2: refine the intermediate embeddings for cluster separability.

A two-layer feed-forward network with a fixed skip connection maps the
Step 1 embeddings H to the final embeddings Z = f(H) + H. Nearest-neighbor
pairs are built once from H and frozen; training minimizes

    L_dist = exp( sum_+ d(z_i, z_j) / (tau |P+|) - sum_- d(z_k, z_l) / (tau |P-|) )

pulling neighbor pairs together and pushing all other pairs apart. The
negative set is the exact complement of the neighbor pairs for graphs up to
`neg_exact_threshold` nodes and a fresh uniform sample of `neg_sample` pairs
per epoch above that. The output layer starts at zero so training begins
exactly at Z = H. The nonlinearity is tanh, keeping the loss smooth for the
finite-difference gradient checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .densemath import Adam, pairwise_euclidean, seeded_rng
from .errors import (
    ComplementEmpty,
    EmptyPairSet,
    NonFiniteLoss,
    ShapeMismatch,
)


@dataclass
class RefinerParams:
    """Two affine layers (d -> h -> d) with tanh in between."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        d, h = self.w1.shape
        if self.b1.shape != (h,) or self.w2.shape != (h, d) or self.b2.shape != (d,):
            raise ShapeMismatch("refiner layer shapes are inconsistent")

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


def init_refiner(dim: int, hidden: int, rng: np.random.Generator) -> RefinerParams:
    """Scaled-normal first layer, zero output layer (identity start)."""
    scale = 1.0 / np.sqrt(dim)
    return RefinerParams(
        w1=rng.normal(0.0, scale, size=(dim, hidden)),
        b1=np.zeros(hidden),
        w2=np.zeros((hidden, dim)),
        b2=np.zeros(dim),
    )


@dataclass
class NeighborPairs:
    """Frozen positive pairs from KNN in the H space."""

    positives: np.ndarray               # (P, 2) with pair[0] < pair[1]
    neighbor_lists: list[np.ndarray]    # per-node neighbor ids
    num_nodes: int
    k: int

    def positive_keys(self) -> np.ndarray:
        """Unordered pairs encoded as i * n + j (i < j) for fast membership."""
        return self.positives[:, 0] * self.num_nodes + self.positives[:, 1]


def knn_pairs(h: np.ndarray, k: int, block: int = 2048) -> NeighborPairs:
    """Euclidean k-nearest-neighbor pairs of the rows of h.

    Distance ties break toward the lower node index; the per-node lists are
    merged into one deduplicated set of unordered pairs. Distances are
    computed in row blocks so memory stays at block x n.
    """
    from .densemath import pairwise_sqdist

    n = h.shape[0]
    if n < 2:
        raise ShapeMismatch("need at least 2 nodes for neighbor pairs")
    k_eff = min(k, n - 1)
    cols = np.arange(n)
    lists: list[np.ndarray] = []
    rows = []
    for start in range(0, n, block):
        stop = min(start + block, n)
        d = pairwise_sqdist(h[start:stop], h)
        d[np.arange(stop - start), np.arange(start, stop)] = np.inf
        for r in range(stop - start):
            order = np.lexsort((cols, d[r]))[:k_eff]
            lists.append(np.sort(order))
            rows.append(order)
    src = np.repeat(np.arange(n), k_eff)
    dst = np.concatenate(rows)
    lo = np.minimum(src, dst)
    hi = np.maximum(src, dst)
    keys = np.unique(lo * n + hi)
    positives = np.stack([keys // n, keys % n], axis=1)
    return NeighborPairs(positives=positives, neighbor_lists=lists,
                         num_nodes=n, k=k_eff)


def sample_negatives(pairs: NeighborPairs, count: int,
                     rng: np.random.Generator, max_rounds: int = 200) -> np.ndarray:
    """Uniform non-neighbor pairs, rejecting self-pairs and positives."""
    n = pairs.num_nodes
    total = n * (n - 1) // 2
    if total <= len(pairs.positives):
        raise ComplementEmpty("every node pair is a neighbor pair")
    pos_keys = pairs.positive_keys()            # sorted by construction
    out = []
    need = count
    for _ in range(max_rounds):
        if need <= 0:
            break
        batch = need * 3 + 16
        i = rng.integers(0, n, size=batch)
        j = rng.integers(0, n, size=batch)
        lo = np.minimum(i, j)
        hi = np.maximum(i, j)
        keys = lo * n + hi
        keep = (lo != hi) & ~np.isin(keys, pos_keys, assume_unique=False)
        sel = np.stack([lo[keep], hi[keep]], axis=1)[:need]
        out.append(sel)
        need -= len(sel)
    if need > 0:
        raise ComplementEmpty("could not sample enough complement pairs")
    return np.concatenate(out)


def refine_forward(h: np.ndarray, params: RefinerParams,
                   return_hidden: bool = False):
    """Z = f(H) + H with f = tanh two-layer network."""
    if h.shape[1] != params.w1.shape[0]:
        raise ShapeMismatch(f"H has dim {h.shape[1]}, refiner expects {params.w1.shape[0]}")
    a1 = h @ params.w1 + params.b1
    u = np.tanh(a1)
    f = u @ params.w2 + params.b2
    z = f + h
    if return_hidden:
        return z, u
    return z


def _mean_pair_distance(z: np.ndarray, pairs: np.ndarray,
                        chunk: int = 16384) -> float:
    total = 0.0
    for start in range(0, len(pairs), chunk):
        part = pairs[start:start + chunk]
        total += float(np.linalg.norm(z[part[:, 0]] - z[part[:, 1]], axis=1).sum())
    return total / len(pairs)


def loss_refine(z: np.ndarray, positives: np.ndarray, negatives: np.ndarray,
                tau: float) -> float:
    """Exponential distance loss over explicit positive/negative pair lists."""
    if len(positives) == 0 or len(negatives) == 0:
        raise EmptyPairSet("both pair sets must be non-empty")
    if tau <= 0:
        raise ShapeMismatch("temperature must be positive")
    return float(np.exp((_mean_pair_distance(z, positives)
                         - _mean_pair_distance(z, negatives)) / tau))


@dataclass
class Step2Config:
    knn: int = 10
    tau: float = 1.0
    hidden: int | None = None           # default: embedding dimension
    epochs: int = 200
    lr: float = 1e-3
    neg_exact_threshold: int = 3000
    neg_sample: int | None = None       # pairs per epoch above threshold; default 10n
    seed: int = 0


@dataclass
class Step2Result:
    embeddings: np.ndarray              # Z
    params: RefinerParams
    pairs: NeighborPairs
    trace: dict[str, list[float]] = field(default_factory=dict)


def _loss_grad_exact(z, u, h, params, pos_mask_weight, counts, tau):
    """Loss and parameter gradients with the exact complement negative set.

    pos_mask_weight is a symmetric (n, n) matrix holding, for every ordered
    pair, the per-pair weight difference between positives and the uniform
    complement term (see train_step2). counts = (|P+|, |P-|).
    """
    n = z.shape[0]
    p_pos, p_neg = counts
    d = pairwise_euclidean(z, z)
    iu = np.triu_indices(n, k=1)
    total = d[iu].sum()
    pos_sum = (d * pos_mask_weight).sum() / 2.0     # mask weight is 1 on positives
    g = (pos_sum / p_pos - (total - pos_sum) / p_neg) / tau
    loss = float(np.exp(g))

    # per-unordered-pair loss weight: positives get (1/p+ + 1/p-), the rest -1/p-
    w = pos_mask_weight * (1.0 / p_pos + 1.0 / p_neg)
    w -= 1.0 / p_neg
    np.fill_diagonal(w, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        uu = np.where(d > 0, w / np.maximum(d, 1e-300), 0.0)
    gz = (loss / tau) * (uu.sum(axis=1)[:, None] * z - uu @ z)
    grads = _backprop(gz, u, h, params)
    return loss, grads


def _loss_grad_sampled(z, u, h, params, positives, negatives, tau,
                       chunk: int = 16384):
    """Loss and gradients with explicit pair lists, O(|pairs| d) in chunks."""
    loss = loss_refine(z, positives, negatives, tau)
    gz = np.zeros_like(z)
    for sign, arr in ((1.0, positives), (-1.0, negatives)):
        coef = sign * loss / (tau * len(arr))
        for start in range(0, len(arr), chunk):
            part = arr[start:start + chunk]
            diff = z[part[:, 0]] - z[part[:, 1]]
            dist = np.linalg.norm(diff, axis=1)
            unit = np.where(dist[:, None] > 0,
                            diff / np.maximum(dist, 1e-300)[:, None], 0.0)
            np.add.at(gz, part[:, 0], coef * unit)
            np.add.at(gz, part[:, 1], -coef * unit)
    return loss, _backprop(gz, u, h, params)


def _backprop(gz, u, h, params):
    """Gradients of the refiner parameters given dL/dZ (skip path excluded)."""
    gw2 = u.T @ gz
    gb2 = gz.sum(axis=0)
    gu = gz @ params.w2.T
    ga1 = gu * (1.0 - u * u)
    gw1 = h.T @ ga1
    gb1 = ga1.sum(axis=0)
    return {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2}


def train_step2(h: np.ndarray, config: Step2Config) -> Step2Result:
    """Train the refiner on frozen H; returns final Z and the loss trace."""
    n, dim = h.shape
    rng = seeded_rng(config.seed)
    hidden = config.hidden if config.hidden is not None else dim
    params = init_refiner(dim, hidden, rng)
    pairs = knn_pairs(h, config.knn)

    exact = n <= config.neg_exact_threshold
    total_pairs = n * (n - 1) // 2
    if exact and total_pairs == len(pairs.positives):
        raise ComplementEmpty("KNN pairs cover every node pair")
    if exact:
        pos_w = np.zeros((n, n))
        pos_w[pairs.positives[:, 0], pairs.positives[:, 1]] = 1.0
        pos_w[pairs.positives[:, 1], pairs.positives[:, 0]] = 1.0
        counts = (len(pairs.positives), total_pairs - len(pairs.positives))
    m_neg = config.neg_sample if config.neg_sample is not None else 10 * n

    opt = Adam(lr=config.lr)
    pdict = params.as_dict()
    trace: dict[str, list[float]] = {"total": []}

    for epoch in range(config.epochs):
        z, u = refine_forward(h, params, return_hidden=True)
        if exact:
            loss, grads = _loss_grad_exact(z, u, h, params, pos_w, counts, config.tau)
        else:
            negatives = sample_negatives(pairs, m_neg, rng)
            loss, grads = _loss_grad_sampled(z, u, h, params,
                                             pairs.positives, negatives, config.tau)
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"L_dist became non-finite at epoch {epoch}", epoch=epoch)
        trace["total"].append(loss)
        opt.step(pdict, grads)

    z_final = refine_forward(h, params)
    return Step2Result(embeddings=z_final, params=params, pairs=pairs, trace=trace)
