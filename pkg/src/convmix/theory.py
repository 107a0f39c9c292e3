"""Synthetic two-class model: closed-form separability, a Monte-Carlo
oracle, the ordering-equivalence grid check, and the proxy-correlation
experiment on real graphs.

Model: two equal-size classes with scalar features drawn N(+mu, sigma^2)
and N(-mu, sigma^2). Every node has n neighbors, n0 of its own class, and
its embedding mixes its own feature with the neighbor mean:

    z = (1 - w) x + (w / n) sum_{j in N} x_j,   w in [0, 1].

Treating neighbor features as independent draws, z given class 0 is
Gaussian with mean m(w) = mu [(1 - w) + w (n0 - n1) / n] and variance
s^2(w) = (1 - w)^2 sigma^2 + w^2 sigma^2 / n; class 1 mirrors to -m(w).
Class separability is the Bayes accuracy Phi(|m|/s); latent-class
separability is the variance-ratio 4 m^2 / s^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .convselect import forward_embed
from .densemath import derive_seed, seeded_rng, spearman
from .errors import (
    InfeasibleDegreeSequence,
    InvalidArgument,
    RetriesExhausted,
    ShapeMismatch,
    UnlabeledEndpoint,
)
from .evalkit import ProbeConfig, calinski_harabasz, kmeans, linear_probe
from .graphstore import Graph, adjacency_from_edges, compute_conv_bases


@dataclass
class SyntheticConfig:
    n: int                  # neighbors per node
    n0: int                 # same-class neighbors
    mu: float = 1.0
    sigma: float = 1.0
    w: float = 0.0
    num_nodes: int = 500

    def __post_init__(self):
        if not 0 <= self.n0 <= self.n:
            raise ShapeMismatch("need 0 <= n0 <= n")
        if self.sigma <= 0:
            raise ShapeMismatch("sigma must be positive")
        if not 0.0 <= self.w <= 1.0:
            raise ShapeMismatch("w must lie in [0, 1]")
        if self.num_nodes % 2:
            raise ShapeMismatch("num_nodes must be even")

    @property
    def n1(self) -> int:
        return self.n - self.n0


def class_mean(cfg: SyntheticConfig) -> float:
    """Conditional mean of z for a class-0 node."""
    neighbor_part = (cfg.n0 - cfg.n1) / cfg.n if cfg.n else 0.0
    return cfg.mu * ((1.0 - cfg.w) + cfg.w * neighbor_part)


def class_var(cfg: SyntheticConfig) -> float:
    """Conditional variance of z (same for both classes)."""
    own = (1.0 - cfg.w) ** 2 * cfg.sigma**2
    nbr = (cfg.w**2) * cfg.sigma**2 / cfg.n if cfg.n else 0.0
    return own + nbr


def cs_closed_form(cfg: SyntheticConfig) -> float:
    """Bayes accuracy of the optimal classifier on z: Phi(|m| / s)."""
    m = class_mean(cfg)
    s2 = class_var(cfg)
    if s2 == 0.0:
        return 1.0 if m != 0.0 else 0.5
    return float(ndtr(abs(m) / math.sqrt(s2)))


def lcs_closed_form(cfg: SyntheticConfig) -> float:
    """Variance-ratio separability (2m)^2 / s^2; +inf when s = 0."""
    m = class_mean(cfg)
    s2 = class_var(cfg)
    if s2 == 0.0:
        return math.inf if m != 0.0 else 0.0
    return 4.0 * m * m / s2


@dataclass(frozen=True)
class SeparabilityPair:
    """Closed-form class separability and its latent-class counterpart."""

    cs: float
    lcs: float


def separability_pair(cfg: SyntheticConfig) -> SeparabilityPair:
    return SeparabilityPair(cs=cs_closed_form(cfg), lcs=lcs_closed_form(cfg))


def cs_monte_carlo(cfg: SyntheticConfig, samples: int, seed: int = 0,
                   chunk: int = 200_000) -> float:
    """Estimate the Bayes accuracy by simulating the generative model.

    Every sample draws its own feature and n fresh neighbor features. The
    classifier exploits only the model's symmetry (class-1 conditional is
    the mirror of class-0): the boundary sits at zero and the orientation is
    taken from the empirical class-conditional mean, so the estimate never
    consumes the closed-form moments it is meant to verify.
    """
    rng = seeded_rng(seed)
    half = samples // 2
    sizes = (half, samples - half)
    zs: list[np.ndarray] = [np.empty(0), np.empty(0)]
    for cls, size in enumerate(sizes):
        own_mu = cfg.mu if cls == 0 else -cfg.mu
        parts = []
        done = 0
        while done < size:
            b = min(chunk, size - done)
            own = rng.normal(own_mu, cfg.sigma, size=b)
            if cfg.n:
                same = rng.normal(own_mu, cfg.sigma, size=(b, cfg.n0))
                other = rng.normal(-own_mu, cfg.sigma, size=(b, cfg.n1))
                nbr_mean = np.concatenate([same, other], axis=1).mean(axis=1)
            else:
                nbr_mean = np.zeros(b)
            parts.append((1.0 - cfg.w) * own + cfg.w * nbr_mean)
            done += b
        zs[cls] = np.concatenate(parts)
    orient = 1.0 if zs[0].mean() >= 0.0 else -1.0
    correct = int((orient * zs[0] > 0).sum()) + int((orient * zs[1] < 0).sum())
    return correct / samples


# --- ordering-equivalence check ---------------------------------------------------


@dataclass
class Theorem1Report:
    n: int
    n0: int
    step: float
    region: tuple[float, float]
    grid: list[float]
    cases: int
    violations: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def valid_region_lower(n: int, n0: int) -> float:
    """Lower end of the w-region where the ordering equivalence is claimed."""
    if n0 == n:
        return 0.0
    return max((n - 2 * n0) / (2 * (n - n0)), 0.0)


def theorem1_check(n: int, n0: int, step: float, mu: float = 1.0,
                   sigma: float = 1.0, tie_tol: float = 1e-12) -> Theorem1Report:
    """Grid check: CS and LCS order every (w, w') pair identically.

    The grid covers the claimed valid region (all of [0, 1] when n0 = n)
    with the given step; differences below tie_tol count as ties.
    """
    if not 0.0 < step <= 0.5:
        raise InvalidArgument("grid step must lie in (0, 0.5]")
    lower = valid_region_lower(n, n0)
    grid = []
    w = lower
    while w < 1.0 - 1e-12:
        grid.append(round(w, 12))
        w += step
    grid.append(1.0)

    cs = []
    lcs = []
    for w in grid:
        pair = separability_pair(
            SyntheticConfig(n=n, n0=n0, mu=mu, sigma=sigma, w=w, num_nodes=2))
        cs.append(pair.cs)
        lcs.append(pair.lcs)

    violations = []
    cases = 0
    for i in range(len(grid)):
        for j in range(i + 1, len(grid)):
            cases += 1
            dcs = cs[i] - cs[j]
            dlcs = lcs[i] - lcs[j]
            if abs(dcs) <= tie_tol or abs(dlcs) <= tie_tol:
                continue
            if (dcs > 0) != (dlcs > 0):
                violations.append({
                    "w": grid[i], "w_prime": grid[j],
                    "cs": (cs[i], cs[j]), "lcs": (lcs[i], lcs[j]),
                })
    return Theorem1Report(n=n, n0=n0, step=step, region=(lower, 1.0),
                          grid=grid, cases=cases, violations=violations)


@dataclass
class OracleCell:
    n0: int
    w: float
    closed_form: float
    monte_carlo: float

    @property
    def abs_err(self) -> float:
        return abs(self.closed_form - self.monte_carlo)


def oracle_grid(n: int = 4, samples: int = 1_000_000, seed: int = 0,
                mu: float = 1.0, sigma: float = 1.0) -> list[OracleCell]:
    """Closed form vs Monte Carlo over the (n0, w) grid used for acceptance."""
    cells = []
    ws = [0.0, 0.25, 0.5, 0.75, 1.0]
    for n0 in range(n + 1):
        for w in ws:
            cfg = SyntheticConfig(n=n, n0=n0, mu=mu, sigma=sigma, w=w, num_nodes=2)
            mc = cs_monte_carlo(cfg, samples, seed=derive_seed(seed, f"mc-{n0}-{w}"))
            cells.append(OracleCell(n0=n0, w=w,
                                    closed_form=cs_closed_form(cfg), monte_carlo=mc))
    return cells


# --- synthetic graph generation -----------------------------------------------------


def _pair_stubs_within(nodes: np.ndarray, per_node: int, existing: set,
                       rng: np.random.Generator, retries: int) -> set[tuple[int, int]]:
    """Configuration-model pairing inside one class.

    Rejected pairs (self-loops, repeats) return their stubs to the pool and
    the leftovers are reshuffled; an attempt that stalls restarts from
    scratch, up to `retries` attempts.
    """
    all_stubs = list(np.repeat(nodes, per_node))
    for _ in range(retries):
        edges: set[tuple[int, int]] = set()
        stubs = list(all_stubs)
        stalled = False
        while stubs and not stalled:
            rng.shuffle(stubs)
            leftovers = []
            it = iter(stubs)
            for a, b in zip(it, it):
                if a > b:
                    a, b = b, a
                key = (int(a), int(b))
                if a == b or key in edges or key in existing:
                    leftovers.extend((a, b))
                else:
                    edges.add(key)
            stalled = len(leftovers) == len(stubs)
            stubs = leftovers
        if not stubs:
            return edges
    raise RetriesExhausted("intra-class stub pairing failed after retries")


def _pair_stubs_across(left: np.ndarray, right: np.ndarray, per_node: int,
                       existing: set, rng: np.random.Generator,
                       retries: int) -> set[tuple[int, int]]:
    """Bipartite stub pairing between the two classes, same repair scheme."""
    all_l = list(np.repeat(left, per_node))
    all_r = list(np.repeat(right, per_node))
    for _ in range(retries):
        edges: set[tuple[int, int]] = set()
        ls, rs = list(all_l), list(all_r)
        stalled = False
        while ls and not stalled:
            rng.shuffle(ls)
            rng.shuffle(rs)
            keep_l, keep_r = [], []
            for a, b in zip(ls, rs):
                key = (int(a), int(b))
                if key in edges or key in existing:
                    keep_l.append(a)
                    keep_r.append(b)
                else:
                    edges.add(key)
            stalled = len(keep_l) == len(ls)
            ls, rs = keep_l, keep_r
        if not ls:
            return edges
    raise RetriesExhausted("cross-class stub pairing failed after retries")


def gen_synthetic(cfg: SyntheticConfig, seed: int = 0, retries: int = 100) -> Graph:
    """Generate a graph where every node has exactly n0 same-class and
    n1 cross-class neighbors, with class-conditional Gaussian features."""
    half = cfg.num_nodes // 2
    if cfg.n0 > half - 1:
        raise InfeasibleDegreeSequence(
            f"n0={cfg.n0} exceeds available same-class partners ({half - 1})")
    if cfg.n1 > half:
        raise InfeasibleDegreeSequence(
            f"n1={cfg.n1} exceeds available cross-class partners ({half})")
    if (half * cfg.n0) % 2:
        raise InfeasibleDegreeSequence(
            f"odd number of intra-class stubs ({half} nodes x n0={cfg.n0})")

    rng = seeded_rng(seed)
    class0 = np.arange(half)
    class1 = np.arange(half, cfg.num_nodes)
    edges: set[tuple[int, int]] = set()
    if cfg.n0:
        edges.update(_pair_stubs_within(class0, cfg.n0, edges, rng, retries))
        edges.update(_pair_stubs_within(class1, cfg.n0, edges, rng, retries))
    if cfg.n1:
        edges.update(_pair_stubs_across(class0, class1, cfg.n1, edges, rng, retries))

    edge_arr = np.asarray(sorted(edges), dtype=np.int64).reshape(-1, 2)
    features = np.empty((cfg.num_nodes, 1))
    features[:half, 0] = rng.normal(cfg.mu, cfg.sigma, size=half)
    features[half:, 0] = rng.normal(-cfg.mu, cfg.sigma, size=half)
    labels = np.concatenate([np.zeros(half, dtype=np.int64),
                             np.ones(half, dtype=np.int64)])
    graph = Graph(
        num_nodes=cfg.num_nodes,
        adjacency=adjacency_from_edges(cfg.num_nodes, edge_arr),
        features=features,
        labels=labels,
        name=f"synthetic-n{cfg.n}-n0{cfg.n0}",
        num_classes=2,
    )
    graph.validate()
    return graph


# --- proxy-correlation experiment ----------------------------------------------------


@dataclass
class ProxyResult:
    pairs: list[tuple[float, float]]    # (separability index, probe accuracy)
    rho: float
    ch_mode: str
    train_frac: float
    low_trials: bool


def proxy_experiment(graph: Graph, trials: int, train_frac: float = 0.1,
                     seed: int = 0, ch_mode: str = "kmeans",
                     kmeans_restarts: int = 3,
                     probe_config: ProbeConfig | None = None) -> ProxyResult:
    """Correlation between the separability index and probe accuracy across
    randomly mixed convolution weights.

    Per trial: three uniform scalars are normalized to sum to one, the
    embedding Z is mixed accordingly, the index is the Calinski-Harabasz
    score of Z (over K-Means clusters with K = #classes by default, or over
    true labels with ch_mode="labels"), and accuracy comes from a linear
    probe on a fixed train_frac split. Returns all pairs plus Spearman rho.
    """
    if graph.labels is None or np.any(graph.labels < 0):
        raise UnlabeledEndpoint("proxy experiment needs fully labeled nodes")
    if ch_mode not in ("kmeans", "labels"):
        raise InvalidArgument(f"unknown ch_mode {ch_mode!r}")
    labels = graph.labels
    num_classes = len(np.unique(labels))
    if num_classes < 2:
        raise UnlabeledEndpoint("need at least 2 classes")

    bases = compute_conv_bases(graph)
    split_rng = seeded_rng(derive_seed(seed, "proxy-split"))
    order = split_rng.permutation(graph.num_nodes)
    n_train = max(1, int(round(train_frac * graph.num_nodes)))
    split = {"train": order[:n_train], "val": np.empty(0, dtype=np.int64),
             "test": order[n_train:]}
    pconf = probe_config or ProbeConfig(epochs=200)

    chs = []
    accs = []
    for t in range(trials):
        arng = seeded_rng(derive_seed(seed, f"proxy-alpha-{t}"))
        draws = arng.random(3)
        while draws.sum() == 0.0:
            draws = arng.random(3)
        alphas = draws / draws.sum()
        z = forward_embed(bases, alphas)
        if ch_mode == "kmeans":
            cl = kmeans(z, num_classes, restarts=kmeans_restarts,
                        seed=derive_seed(seed, f"proxy-kmeans-{t}"))
            ch = calinski_harabasz(z, cl.assignment)
        else:
            ch = calinski_harabasz(z, labels)
        report = linear_probe(z, labels, split, pconf)
        chs.append(ch)
        accs.append(report.accuracy["test"])
    rho = spearman(chs, accs)
    return ProxyResult(pairs=list(zip(chs, accs)), rho=rho, ch_mode=ch_mode,
                       train_frac=train_frac, low_trials=trials < 10)
