"""Step 1: learn how much graph convolution to use.

Three convolution bases (raw features, 1-hop, 2-hop) are mixed by softmax
weights alpha = softmax(c). The three logits and a set of learnable cluster
centroids are jointly optimized to minimize

    L_clus = L1 + L2 + lambda * L3

where L1 sharpens per-node cluster assignments (mean assignment entropy),
L2 keeps the mean assignment distribution near uniform (negative entropy of
the marginal), and L3 = exp(mean intra-cluster distance - mean inter-cluster
distance) pushes hard-assigned clusters apart. Pair membership for L3 comes
from the hard argmax assignment and is treated as non-differentiable; only
the distances carry gradient.

All gradients are computed analytically (verified against central
differences in the test suite). For graphs up to `pair_exact_threshold`
nodes L3 uses every node pair; the trainer then caches the six cross-Gram
matrices of the bases so each epoch costs O(n^2) elementwise work instead
of an O(n^2 d) matrix product. Larger graphs fall back to sampling
`pair_sample` pairs of each kind per epoch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .densemath import (
    Adam,
    entropy_terms,
    kmeanspp_centers,
    seeded_rng,
    softmax,
    softmax_vjp,
)
from .errors import DegenerateClustering, NonFiniteLoss, ShapeMismatch
from .graphstore import ConvBases, Graph, compute_conv_bases

NUM_BASES = 3


@dataclass
class ConvWeights:
    """Raw mixing logits c and their softmax image alpha."""

    logits: np.ndarray

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        if self.logits.shape != (NUM_BASES,):
            raise ShapeMismatch(f"expected {NUM_BASES} logits, got {self.logits.shape}")

    @property
    def alphas(self) -> np.ndarray:
        return softmax(self.logits)


@dataclass
class ClusterHead:
    """Learnable centroid vectors, one row per cluster."""

    centroids: np.ndarray

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        if self.centroids.ndim != 2 or self.centroids.shape[0] < 2:
            raise ShapeMismatch("need a (C >= 2, d) centroid matrix")

    @property
    def num_clusters(self) -> int:
        return self.centroids.shape[0]


@dataclass
class Assignment:
    """Soft assignment matrix P and the hard argmax labels."""

    probs: np.ndarray
    hard: np.ndarray


@dataclass
class Step1Config:
    clusters: int
    lam: float = 1.0
    epochs: int = 300
    # centroids must adapt at least as fast as the mixing logits, or the
    # entropy terms drag alpha toward the largest-scale basis before the
    # cluster structure can steer it
    lr_logits: float = 0.01
    lr_centroids: float = 0.05
    pair_sample: int | None = None      # pairs of each kind per epoch; default 10n
    pair_exact_threshold: int = 3000
    seed: int = 0

    def __post_init__(self):
        if self.clusters < 2:
            raise ShapeMismatch("need at least 2 clusters")
        if self.lam < 0:
            raise ShapeMismatch("lambda must be nonnegative")
        if self.epochs < 1:
            raise ShapeMismatch("epochs must be >= 1")


@dataclass
class Step1Result:
    weights: ConvWeights
    head: ClusterHead
    embeddings: np.ndarray              # H, the intermediate embeddings
    assignment: Assignment
    trace: dict[str, list[float]] = field(default_factory=dict)


def forward_embed(bases: ConvBases, alphas) -> np.ndarray:
    """Mix the convolution bases: X* = a0*b0 + a1*b1 + a2*b2.

    Zero-weight terms are skipped so that alpha = (1, 0, 0) reproduces the
    raw features bit for bit.
    """
    a = np.asarray(alphas, dtype=np.float64)
    if a.shape != (NUM_BASES,):
        raise ShapeMismatch(f"expected {NUM_BASES} weights, got {a.shape}")
    terms = [(w, b) for w, b in zip(a, bases.as_list()) if w != 0.0]
    if not terms:
        return np.zeros_like(bases.b0)
    if len(terms) == 1 and terms[0][0] == 1.0:
        return terms[0][1].copy()
    out = terms[0][0] * terms[0][1]
    for w, b in terms[1:]:
        out += w * b
    return out


def assignment_probs(xstar: np.ndarray, head: ClusterHead) -> Assignment:
    """Per-node softmax over cluster logits <x*_i, t_c>."""
    if xstar.shape[1] != head.centroids.shape[1]:
        raise ShapeMismatch(
            f"embedding dim {xstar.shape[1]} vs centroid dim {head.centroids.shape[1]}")
    scores = xstar @ head.centroids.T
    probs = softmax(scores, axis=1)
    return Assignment(probs=probs, hard=np.argmax(probs, axis=1))


def loss_sharpness(probs: np.ndarray) -> float:
    """L1: mean per-node assignment entropy (0 for one-hot rows)."""
    return float(-entropy_terms(probs).sum() / probs.shape[0])


def loss_balance(probs: np.ndarray) -> float:
    """L2: negative entropy of the marginal assignment; -log C at uniform."""
    marginal = probs.mean(axis=0)
    return float(entropy_terms(marginal).sum())


def separation_pair_masks(hard: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Boolean (n, n) masks of intra- and inter-cluster ordered pairs (no diag)."""
    same = hard[:, None] == hard[None, :]
    eye = np.eye(len(hard), dtype=bool)
    intra = same & ~eye
    inter = ~same
    if not intra.any() or not inter.any():
        raise DegenerateClustering(
            "need at least one intra-cluster and one inter-cluster pair")
    return intra, inter


def loss_separation(xstar: np.ndarray, hard: np.ndarray,
                    pairs: tuple[np.ndarray, np.ndarray] | None = None) -> float:
    """L3 = exp(mean intra-cluster distance - mean inter-cluster distance).

    With pairs=None every node pair is enumerated; otherwise `pairs` is a
    (positive, negative) tuple of (m, 2) index arrays, e.g. from
    `sample_separation_pairs`.
    """
    if pairs is None:
        from .densemath import pairwise_euclidean

        intra, inter = separation_pair_masks(hard)
        d = pairwise_euclidean(xstar, xstar)
        m_pos = d[intra].sum() / intra.sum()
        m_neg = d[inter].sum() / inter.sum()
    else:
        pos, neg = pairs
        if len(pos) == 0 or len(neg) == 0:
            raise DegenerateClustering("a sampled pair class is empty")
        m_pos = float(np.linalg.norm(xstar[pos[:, 0]] - xstar[pos[:, 1]], axis=1).mean())
        m_neg = float(np.linalg.norm(xstar[neg[:, 0]] - xstar[neg[:, 1]], axis=1).mean())
    return float(np.exp(m_pos - m_neg))


def sample_separation_pairs(hard: np.ndarray, count: int,
                            rng: np.random.Generator,
                            max_rounds: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Uniformly sample `count` intra- and `count` inter-cluster node pairs."""
    n = len(hard)
    counts = np.bincount(hard)
    if (counts > 0).sum() < 2:
        raise DegenerateClustering("hard assignment uses fewer than 2 clusters")
    if not np.any(counts > 1):
        raise DegenerateClustering("no intra-cluster pair exists")
    pos_rows, neg_rows = [], []
    pos_need, neg_need = count, count
    for _ in range(max_rounds):
        if pos_need <= 0 and neg_need <= 0:
            break
        batch = max(pos_need, neg_need) * 4 + 16
        i = rng.integers(0, n, size=batch)
        j = rng.integers(0, n, size=batch)
        ok = i != j
        same = hard[i] == hard[j]
        if pos_need > 0:
            sel = ok & same
            pos_rows.append(np.stack([i[sel], j[sel]], axis=1)[:pos_need])
            pos_need -= len(pos_rows[-1])
        if neg_need > 0:
            sel = ok & ~same
            neg_rows.append(np.stack([i[sel], j[sel]], axis=1)[:neg_need])
            neg_need -= len(neg_rows[-1])
    if pos_need > 0 or neg_need > 0:
        raise DegenerateClustering("pair sampling failed to fill both classes")
    return np.concatenate(pos_rows), np.concatenate(neg_rows)


# --- joint objective with analytic gradients ----------------------------------


def step1_objective(bases: ConvBases, logits: np.ndarray, centroids: np.ndarray,
                    lam: float, pairs=None, w_sharp: float = 1.0,
                    w_balance: float = 1.0):
    """Loss and analytic gradients of w_sharp*L1 + w_balance*L2 + lam*L3.

    Reference implementation used for gradient checks and small graphs; the
    trainer's Gram-cached path must agree with this to float precision. The
    per-term coefficients exist so each loss can be gradient-checked alone.
    Returns (loss, parts, grad_logits, grad_centroids).
    """
    n = bases.b0.shape[0]
    alphas = softmax(logits)
    xstar = sum(a * b for a, b in zip(alphas, bases.as_list()))
    scores = xstar @ centroids.T
    probs = softmax(scores, axis=1)
    hard = np.argmax(probs, axis=1)

    l1 = loss_sharpness(probs)
    l2 = loss_balance(probs)

    safe_log = lambda p: np.log(np.maximum(p, 1e-300))
    marginal = probs.mean(axis=0)
    grad_p = (-w_sharp * (safe_log(probs) + 1.0)
              + w_balance * (safe_log(marginal) + 1.0)[None, :]) / n
    grad_scores = softmax_vjp(probs, grad_p)
    grad_centroids = grad_scores.T @ xstar
    grad_x = grad_scores @ centroids

    if lam == 0.0:
        l3 = 0.0
    elif pairs is None:
        from .densemath import pairwise_euclidean

        intra, inter = separation_pair_masks(hard)
        d = pairwise_euclidean(xstar, xstar)
        m_pos = d[intra].sum() / intra.sum()
        m_neg = d[inter].sum() / inter.sum()
        l3 = float(np.exp(m_pos - m_neg))
        # weight per ordered pair: +1/|intra| on intra, -1/|inter| on inter,
        # all scaled by lam * L3; zero-distance pairs contribute nothing
        w = np.zeros((n, n))
        w[intra] = 1.0 / intra.sum()
        w[inter] = -1.0 / inter.sum()
        with np.errstate(divide="ignore"):
            u = np.where(d > 0, w / np.maximum(d, 1e-300), 0.0)
        # each unordered pair appears twice in the ordered masks, which halves
        # the per-pair weight; both orientations hit row i, hence the factor 2
        grad_x += lam * l3 * 2.0 * (u.sum(axis=1)[:, None] * xstar - u @ xstar)
    else:
        pos, neg = pairs
        diff_p = xstar[pos[:, 0]] - xstar[pos[:, 1]]
        diff_n = xstar[neg[:, 0]] - xstar[neg[:, 1]]
        d_p = np.linalg.norm(diff_p, axis=1)
        d_n = np.linalg.norm(diff_n, axis=1)
        m_pos = d_p.mean()
        m_neg = d_n.mean()
        l3 = float(np.exp(m_pos - m_neg))
        g3 = np.zeros_like(xstar)
        unit_p = np.where(d_p[:, None] > 0, diff_p / np.maximum(d_p, 1e-300)[:, None], 0.0)
        unit_n = np.where(d_n[:, None] > 0, diff_n / np.maximum(d_n, 1e-300)[:, None], 0.0)
        np.add.at(g3, pos[:, 0], unit_p / len(pos))
        np.add.at(g3, pos[:, 1], -unit_p / len(pos))
        np.add.at(g3, neg[:, 0], -unit_n / len(neg))
        np.add.at(g3, neg[:, 1], unit_n / len(neg))
        grad_x += lam * l3 * g3

    grad_alphas = np.array([float((grad_x * b).sum()) for b in bases.as_list()])
    grad_logits = softmax_vjp(alphas, grad_alphas)
    loss = w_sharp * l1 + w_balance * l2 + lam * l3
    parts = {"l1": l1, "l2": l2, "l3": l3, "total": loss}
    return loss, parts, grad_logits, grad_centroids


class _ExactSeparation:
    """Gram cache for the all-pairs separation term.

    Pairwise squared distances of X*(alpha) decompose over the base
    cross-Grams: d2_ij = sum_{k<=l} g_kl (w_kl_i + w_kl_j - S_kl_ij) with
    g_kk = a_k^2, g_kl = 2 a_k a_l, S_kl = B_k B_l^T + B_l B_k^T and
    w_kl = diag(B_k B_l^T). Caching the six (S_kl, w_kl) pairs removes every
    per-epoch O(n^2 d) product from L3 and its alpha-gradient.
    """

    def __init__(self, bases: ConvBases):
        blist = bases.as_list()
        self.n = blist[0].shape[0]
        self.idx = [(k, l) for k in range(NUM_BASES) for l in range(k, NUM_BASES)]
        self.s: list[np.ndarray] = []
        self.w: list[np.ndarray] = []
        for k, l in self.idx:
            m = blist[k] @ blist[l].T
            self.w.append(np.ascontiguousarray(np.diag(m)))
            self.s.append(m + m.T)

    def _coeff(self, alphas, k, l):
        return alphas[k] * alphas[k] if k == l else 2.0 * alphas[k] * alphas[l]

    def sqdist(self, alphas: np.ndarray) -> np.ndarray:
        d2 = np.zeros((self.n, self.n))
        wsum = np.zeros(self.n)
        for (k, l), s, w in zip(self.idx, self.s, self.w):
            g = self._coeff(alphas, k, l)
            d2 -= g * s
            wsum += g * w
        d2 += wsum[:, None]
        d2 += wsum[None, :]
        np.maximum(d2, 0.0, out=d2)
        np.fill_diagonal(d2, 0.0)
        return d2

    def loss_and_alpha_grad(self, alphas: np.ndarray, hard: np.ndarray):
        """L3 over all pairs plus dL3/dalpha, never touching X* explicitly."""
        intra, inter = separation_pair_masks(hard)
        d = np.sqrt(self.sqdist(alphas))
        m_pos = d[intra].sum() / intra.sum()
        m_neg = d[inter].sum() / inter.sum()
        l3 = float(np.exp(m_pos - m_neg))
        # r_ij = dL3/dd2_ij = L3 * (+-1/count) / (2 d_ij)
        r = np.zeros((self.n, self.n))
        with np.errstate(divide="ignore", invalid="ignore"):
            inv2d = np.where(d > 0, 0.5 / np.maximum(d, 1e-300), 0.0)
        r[intra] = inv2d[intra] / intra.sum()
        r[inter] = -inv2d[inter] / inter.sum()
        row = r.sum(axis=1)
        col = r.sum(axis=0)
        grad_alphas = np.zeros(NUM_BASES)
        # dd2/dg_kl contracted with r: <row + col, w_kl> - <r, S_kl>_F
        for (k, l), s, w in zip(self.idx, self.s, self.w):
            contraction = float((row + col) @ w - (r * s).sum())
            if k == l:
                grad_alphas[k] += 2.0 * alphas[k] * contraction
            else:
                grad_alphas[k] += 2.0 * alphas[l] * contraction
                grad_alphas[l] += 2.0 * alphas[k] * contraction
        return l3, l3 * grad_alphas


def train_step1(graph_or_bases: Graph | ConvBases, config: Step1Config) -> Step1Result:
    """Optimize (logits, centroids) to minimize L_clus; return alpha*, H, P.

    Deterministic given config.seed. Raises NonFiniteLoss (with the epoch)
    if the objective leaves the finite range, and propagates
    DegenerateClustering if the hard assignment collapses.
    """
    bases = (graph_or_bases if isinstance(graph_or_bases, ConvBases)
             else compute_conv_bases(graph_or_bases))
    n = bases.b0.shape[0]
    rng = seeded_rng(config.seed)

    logits = np.zeros(NUM_BASES)
    x0 = forward_embed(bases, softmax(logits))
    centroids = kmeanspp_centers(x0, config.clusters, rng)

    exact = n <= config.pair_exact_threshold
    sep = _ExactSeparation(bases) if exact and config.lam != 0.0 else None
    m_pairs = config.pair_sample if config.pair_sample is not None else 10 * n

    opt_logits = Adam(lr=config.lr_logits)
    opt_centroids = Adam(lr=config.lr_centroids)
    trace: dict[str, list[float]] = {"l1": [], "l2": [], "l3": [], "total": []}

    blist = bases.as_list()
    safe_log = lambda p: np.log(np.maximum(p, 1e-300))

    for epoch in range(config.epochs):
        alphas = softmax(logits)
        xstar = sum(a * b for a, b in zip(alphas, blist))
        scores = xstar @ centroids.T
        if not np.all(np.isfinite(scores)):
            raise NonFiniteLoss(f"cluster scores became non-finite at epoch {epoch}",
                                epoch=epoch)
        probs = softmax(scores, axis=1)
        hard = np.argmax(probs, axis=1)

        l1 = loss_sharpness(probs)
        l2 = loss_balance(probs)
        marginal = probs.mean(axis=0)
        grad_p = (-(safe_log(probs) + 1.0) + (safe_log(marginal) + 1.0)[None, :]) / n
        grad_scores = softmax_vjp(probs, grad_p)
        grad_centroids = grad_scores.T @ xstar
        grad_x = grad_scores @ centroids
        grad_alphas = np.array([float((grad_x * b).sum()) for b in blist])

        if config.lam == 0.0:
            l3 = 0.0
        else:
            if exact:
                l3, g3_alpha = sep.loss_and_alpha_grad(alphas, hard)
            else:
                pairs = sample_separation_pairs(hard, m_pairs, rng)
                l3, g3_alpha = _sampled_l3_alpha_grad(blist, xstar, pairs)
            grad_alphas += config.lam * g3_alpha

        loss = l1 + l2 + config.lam * l3
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"L_clus became non-finite at epoch {epoch}", epoch=epoch)
        trace["l1"].append(l1)
        trace["l2"].append(l2)
        trace["l3"].append(l3)
        trace["total"].append(loss)

        grad_logits = softmax_vjp(alphas, grad_alphas)
        opt_logits.step({"c": logits}, {"c": grad_logits})
        opt_centroids.step({"t": centroids}, {"t": grad_centroids})

    weights = ConvWeights(logits=logits)
    embeddings = forward_embed(bases, weights.alphas)
    head = ClusterHead(centroids=centroids)
    final_assignment = assignment_probs(embeddings, head)
    return Step1Result(weights=weights, head=head, embeddings=embeddings,
                       assignment=final_assignment, trace=trace)


def _sampled_l3_alpha_grad(blist, xstar, pairs, chunk: int = 16384):
    """L3 over sampled pairs and its alpha-gradient, O(|pairs| d) in chunks."""
    pos, neg = pairs
    out_grad = np.zeros(NUM_BASES)
    means = []
    for sign, arr in zip((1.0, -1.0), (pos, neg)):
        dist_sum = 0.0
        for start in range(0, len(arr), chunk):
            part = arr[start:start + chunk]
            diff = xstar[part[:, 0]] - xstar[part[:, 1]]
            d = np.linalg.norm(diff, axis=1)
            dist_sum += float(d.sum())
            inv = np.where(d > 0, 1.0 / np.maximum(d, 1e-300), 0.0) / len(arr)
            for k, b in enumerate(blist):
                bdiff = b[part[:, 0]] - b[part[:, 1]]
                out_grad[k] += sign * float(((diff * bdiff).sum(axis=1) * inv).sum())
        means.append(dist_sum / len(arr))
    l3 = float(np.exp(means[0] - means[1]))
    return l3, l3 * out_grad
