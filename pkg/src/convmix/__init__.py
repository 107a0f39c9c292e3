"""Unsupervised node embeddings with a learned degree of graph convolution.

Two training steps: mixing weights over {X, norm(A)X, norm(A^2)X} are
learned through a clustering objective, then a skip-connected refiner
sharpens the resulting embeddings. Includes the synthetic separability
model, its Monte-Carlo oracle, and the downstream evaluation kit.
"""

from .convselect import (
    Assignment,
    ClusterHead,
    ConvWeights,
    Step1Config,
    Step1Result,
    assignment_probs,
    forward_embed,
    loss_balance,
    loss_separation,
    loss_sharpness,
    train_step1,
)
from .densemath import (
    Adam,
    derive_seed,
    finite_diff_check,
    pairwise_euclidean,
    seeded_rng,
    softmax,
    spearman,
)
from .evalkit import (
    ClusteringResult,
    ProbeConfig,
    ProbeReport,
    ari,
    calinski_harabasz,
    kmeans,
    linear_probe,
    mlp_probe,
    nmi,
)
from .graphstore import (
    ConvBases,
    Graph,
    compute_conv_bases,
    edge_homophily,
    load_dataset,
    row_normalize,
    save_dataset,
    two_hop_normalized,
)
from .refine import (
    NeighborPairs,
    RefinerParams,
    Step2Config,
    Step2Result,
    knn_pairs,
    loss_refine,
    refine_forward,
    sample_negatives,
    train_step2,
)
from .theory import (
    SeparabilityPair,
    SyntheticConfig,
    cs_closed_form,
    cs_monte_carlo,
    gen_synthetic,
    lcs_closed_form,
    proxy_experiment,
    separability_pair,
    theorem1_check,
)

__version__ = "0.1.0"
