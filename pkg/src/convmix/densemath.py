"""Dense numerics shared by the training and evaluation modules.

Everything runs in float64 on numpy arrays. Randomness always flows through
an explicit numpy Generator seeded with PCG64, so identical seeds reproduce
identical streams on every platform; `seeded_rng` is the single constructor
used across the package.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import DegenerateInput, LengthMismatch, NonFiniteGradient, ShapeMismatch

# Probabilities are clipped here before entering a log; softmax output can
# underflow to exactly 0 for extreme logits.
_LOG_FLOOR = 1e-300


def seeded_rng(seed: int) -> np.random.Generator:
    """Deterministic random stream: numpy Generator over the PCG64 bit stream."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def derive_seed(master: int, label: str) -> int:
    """Stable per-component seed from (master seed, component label).

    SHA-256 of the label:master string, truncated to 63 bits so the result
    stays a non-negative Python int everywhere.
    """
    digest = hashlib.sha256(f"{label}:{int(master)}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Stable softmax (max-subtracted) along `axis`."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax_vjp(probs: np.ndarray, grad_probs: np.ndarray) -> np.ndarray:
    """Backprop through a row-wise softmax.

    Given p = softmax(s) and dL/dp, returns dL/ds = p * (g - <g, p>) row-wise.
    Works for a single vector or a batch of rows.
    """
    inner = np.sum(probs * grad_probs, axis=-1, keepdims=True)
    return probs * (grad_probs - inner)


def pairwise_sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between rows of a and rows of b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeMismatch(f"incompatible shapes {a.shape} vs {b.shape}")
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    # the gram expansion can go slightly negative from rounding
    np.maximum(sq, 0.0, out=sq)
    return sq


def pairwise_euclidean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix; entry (i, j) = ||a_i - b_j||_2.

    When `a is b` the diagonal is forced to exactly zero.
    """
    d = np.sqrt(pairwise_sqdist(a, b))
    if a is b:
        np.fill_diagonal(d, 0.0)
    return d


class Adam:
    """Adam optimizer over a dict of named parameter arrays.

    Standard first/second-moment update with bias correction. State is kept
    per parameter name; `step` mutates the arrays in place and is fully
    deterministic given the gradient sequence.
    """

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for k, g in grads.items():
            if params[k].shape != g.shape:
                raise ShapeMismatch(f"param {k}: {params[k].shape} vs grad {g.shape}")
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(f"non-finite gradient for {k}")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(params[k])
                self.v[k] = np.zeros_like(params[k])
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            params[k] -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def finite_diff_check(loss_fn, params: dict[str, np.ndarray],
                      analytic: dict[str, np.ndarray], eps: float = 1e-6) -> float:
    """Max relative error between analytic gradients and central differences.

    `loss_fn(params) -> float` is evaluated at +/- eps per coordinate; the
    error for a coordinate is |analytic - numeric| / max(1, |analytic|).
    Intended for small instances only (cost is 2 evaluations per coordinate).
    """
    worst = 0.0
    for key, arr in params.items():
        flat = arr.ravel()
        ana = analytic[key].ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn(params)
            flat[i] = orig - eps
            down = loss_fn(params)
            flat[i] = orig
            numeric = (up - down) / (2.0 * eps)
            err = abs(ana[i] - numeric) / max(1.0, abs(ana[i]))
            if err > worst:
                worst = err
    return worst


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """Ranks starting at 1; ties get the average of the ranks they span."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    """Spearman rank correlation: Pearson correlation of average ranks."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"need equal-length vectors, got {x.shape} vs {y.shape}")
    if len(x) < 2:
        raise LengthMismatch("need at least 2 observations")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateInput("constant input has no rank correlation")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    return float((rx @ ry) / np.sqrt((rx @ rx) * (ry @ ry)))


def entropy_terms(p: np.ndarray) -> np.ndarray:
    """Elementwise p * log(p) with the 0 * log 0 = 0 convention."""
    p = np.asarray(p, dtype=np.float64)
    return p * np.log(np.maximum(p, _LOG_FLOOR)) * (p > 0)


def kmeanspp_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: iteratively pick centers with probability ~ D^2."""
    n = x.shape[0]
    if k > n:
        raise ShapeMismatch(f"cannot pick {k} centers from {n} points")
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = x[first]
    closest = pairwise_sqdist(x, centers[0:1]).ravel()
    for c in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # all remaining points coincide with a chosen center
            idx = int(rng.integers(n))
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(closest), r))
            idx = min(idx, n - 1)
        centers[c] = x[idx]
        np.minimum(closest, pairwise_sqdist(x, centers[c:c + 1]).ravel(), out=closest)
    return centers
