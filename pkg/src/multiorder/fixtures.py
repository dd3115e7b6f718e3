"""Small seeded problems for gradient checks and smoke tests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import HeteroGraph
from .metapath import FirstOrderSet, SubsetEnumeration, build_first_order_set, enumerate_subsets
from .model import ModelParams, init_params
from .semantic import SemanticAdjacency, build_semantic_adjacency
from .synth import SynthConfig, generate_synthetic

GRADCHECK_SYNTH = SynthConfig(
    n=12,
    n_classes=3,
    relations=("informative", "noisy", "noisy"),
    aux_size=6,
    p_in=0.6,
    p_out=0.1,
    p_noise=0.3,
    n_features=5,
    feature_noise=1.0,
    split_ratios=(0.5, 0.25, 0.25),
)

# Two "cross" relations: each first-order meta-path joins nodes whose label
# matches the other's hidden group, so class signal appears only in products
# of two meta-paths.
ORDER2_SYNTH = SynthConfig(relations=("cross", "cross"), feature_noise=2.0)


@dataclass
class Problem:
    graph: HeteroGraph
    first: FirstOrderSet
    enumeration: SubsetEnumeration
    sem: SemanticAdjacency
    params: ModelParams


def gradcheck_problem(seed: int = 0, k: int = 3) -> Problem:
    """12 target nodes, 3 meta-paths, 5 features, 3 classes.

    Parameters are moved off their initial values so that no softmax sits at
    a symmetric point.
    """
    g = generate_synthetic(GRADCHECK_SYNTH, seed)
    first = build_first_order_set(g, g.metapaths)
    enumeration = enumerate_subsets(first.L)
    sem = build_semantic_adjacency(g.features, k)
    params = init_params(enumeration, g.features.shape[1], g.num_classes, seed)
    rng = np.random.default_rng(seed + 1000)
    params.beta_logits = rng.normal(size=params.beta_logits.shape)
    params.alpha_logits = [a + rng.normal(size=a.shape) for a in params.alpha_logits]
    return Problem(g, first, enumeration, sem, params)
