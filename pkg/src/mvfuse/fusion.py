"""Consensus partition, per-view rotations, and the two weight vectors.

The consensus h is a row-orthonormal k x n matrix chasing every view's
partition through a per-view rotation w; alpha weights reconstruction
quality, beta weights alignment quality.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from mvfuse.deep import reconstruction_loss
from mvfuse.linalg import as_matrix, procrustes_max


@dataclass
class FusionState:
    h: np.ndarray        # k x n consensus, h @ h.T == I
    w: list              # per-view k x k rotations, w @ w.T == I
    alpha: np.ndarray    # view weights on reconstruction, simplex
    beta: np.ndarray     # view weights on alignment, unit l2 norm, >= 0

    def residuals(self) -> dict:
        """Constraint violations, all ~0 for a healthy state."""
        k = self.h.shape[0]
        eye = np.eye(k)
        return {
            "h": float(np.linalg.norm(self.h @ self.h.T - eye)),
            "w": [float(np.linalg.norm(w @ w.T - eye)) for w in self.w],
            "alpha": float(abs(self.alpha.sum() - 1.0)),
            "beta": float(abs(np.linalg.norm(self.beta) - 1.0)),
        }


def update_consensus(partitions, rotations, beta, prev_h):
    """Best row-orthonormal h for the weighted alignment sum.

    Maximizes tr(h @ sum_v beta_v partition_v.T @ rotation_v). Returns
    (h, degenerate); on a rank-deficient alignment sum the previous h is
    returned unchanged when one is supplied.
    """
    if len(partitions) == 0 or len(partitions) != len(rotations):
        raise ValueError("need one partition and one rotation per view")
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (len(partitions),):
        raise ValueError(f"beta must have one weight per view, got shape {beta.shape}")
    k, n = partitions[0].shape
    u = np.zeros((n, k))
    for b, hm, w in zip(beta, partitions, rotations):
        if hm.shape != (k, n):
            raise ValueError(f"partition shape {hm.shape} does not match {(k, n)}")
        if w.shape != (k, k):
            raise ValueError(f"rotation shape {w.shape} does not match {(k, k)}")
        u += b * (hm.T @ w)
    h, degenerate = procrustes_max(u)
    if degenerate and prev_h is not None:
        return prev_h, True
    return h, degenerate


def update_rotation(partition, consensus, beta_v: float):
    """Best orthonormal rotation aligning one view's partition to the consensus.

    Maximizes tr(w.T @ q) for q = beta_v partition @ consensus.T; by the same
    trace argument as the consensus step, w is p @ qt from the SVD of q.
    Returns (w, degenerate); callers keep their previous w on a degenerate q.
    """
    partition = as_matrix(partition, "partition")
    consensus = as_matrix(consensus, "consensus")
    if partition.shape != consensus.shape:
        raise ValueError(
            f"partition {partition.shape} and consensus {consensus.shape} must match"
        )
    q = beta_v * (partition @ consensus.T)
    h, degenerate = procrustes_max(q)
    return h.T, degenerate


def update_alpha(losses) -> np.ndarray:
    """Reconstruction weights minimizing sum_v alpha_v^2 loss_v on the simplex.

    The minimizer weights each view by the inverse of its loss. Views with
    exactly zero loss take all the weight, split equally among themselves.
    """
    losses = np.asarray(losses, dtype=np.float64)
    if losses.ndim != 1 or losses.size == 0:
        raise ValueError("losses must be a non-empty 1-d array")
    if np.any(losses < 0) or not np.all(np.isfinite(losses)):
        raise ValueError("losses must be finite and >= 0")
    if not np.any(losses > 0):
        raise ValueError("at least one loss must be > 0")
    inv = np.zeros_like(losses)
    positive = losses > 0
    with np.errstate(divide="ignore", over="ignore"):
        inv[positive] = 1.0 / losses[positive]
    exact = ~positive | ~np.isfinite(inv)  # zero (or subnormal) loss: limit case
    if np.any(exact):
        alpha = exact.astype(np.float64)
        return alpha / alpha.sum()
    return inv / inv.sum()


def update_beta(partitions, rotations, consensus) -> np.ndarray:
    """Alignment weights maximizing sum_v beta_v f_v on the non-negative unit sphere.

    f_v = tr(partition_v.T @ rotation_v @ consensus). Negative components are
    clamped to zero before normalizing; if no view aligns positively the
    weights fall back to uniform and a warning is issued.
    """
    f = np.array(
        [float(np.sum(hm * (w @ consensus))) for hm, w in zip(partitions, rotations)]
    )
    clamped = np.maximum(f, 0.0)
    norm = np.linalg.norm(clamped)
    if norm == 0.0:
        warnings.warn(
            "no view aligns positively with the consensus; using uniform beta",
            RuntimeWarning,
            stacklevel=2,
        )
        v = len(f)
        return np.full(v, 1.0 / np.sqrt(v))
    return clamped / norm


def objective(views, state: FusionState, lam: float) -> float:
    """Weighted reconstruction cost minus lam times the weighted alignment trace."""
    recon = sum(
        a * a * reconstruction_loss(vf) for a, vf in zip(state.alpha, views)
    )
    align = sum(
        b * float(np.sum(state.h * (w.T @ vf.h[-1])))
        for b, w, vf in zip(state.beta, state.w, views)
    )
    return float(recon - lam * align)
