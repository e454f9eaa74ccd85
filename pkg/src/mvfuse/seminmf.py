"""Single-layer semi-NMF: x ~ z @ h with h >= 0 and z unconstrained.

The h step is the multiplicative rule of Ding et al. (2010), which never
increases ||x - z h||_F^2; the z step is the exact least-squares refit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mvfuse.linalg import as_matrix, neg_part, pinv, pos_part
from mvfuse.metrics import kmeans

# Additive guard for the denominators of all multiplicative updates.
EPS = 1e-10

# Restart count for the k-means seeding of init_layer.
INIT_KMEANS_RESTARTS = 10


@dataclass
class LayerFactors:
    z: np.ndarray  # d x l basis, mixed signs allowed
    h: np.ndarray  # l x n representation, entrywise >= 0


def multiplicative_step(x, basis, h):
    """One Ding-style update of h toward min ||x - basis @ h||, keeping h >= 0.

    Entries of h that are exactly zero stay zero.
    """
    a = basis.T @ x
    gram = basis.T @ basis
    num = pos_part(a) + neg_part(gram) @ h
    den = neg_part(a) + pos_part(gram) @ h + EPS
    return h * np.sqrt(num / den)


def init_layer(x, width: int, seed: int = 0) -> LayerFactors:
    """Seed one layer from k-means on the columns of x.

    h is the cluster indicator matrix plus a 0.2 offset (strictly positive,
    so no row is all zero), and z is the least-squares basis for that h.
    """
    x = as_matrix(x, "x")
    d, n = x.shape
    if not 1 <= width <= min(d, n):
        raise ValueError(f"layer width must satisfy 1 <= width <= min(d, n) = {min(d, n)}, got {width}")
    labels = kmeans(x.T, width, restarts=INIT_KMEANS_RESTARTS, seed=seed)
    h = np.full((width, n), 0.2)
    h[labels, np.arange(n)] += 1.0
    z = x @ pinv(h)
    return LayerFactors(z=z, h=h)


def fit_layer(x, width: int, iters: int = 50, seed: int = 0) -> LayerFactors:
    """Alternate the exact z refit and the multiplicative h step."""
    if iters < 0:
        raise ValueError("iters must be >= 0")
    factors = init_layer(x, width, seed=seed)
    z, h = factors.z, factors.h
    for _ in range(iters):
        z = x @ pinv(h)
        h = multiplicative_step(x, z, h)
    return LayerFactors(z=z, h=h)
