"""End-to-end fit: pretrain, alternate the seven update blocks, cluster.

One outer iteration runs, in order: the consensus step, a full fine-tuning
sweep of every view (basis refits, representation steps, partition step),
the per-view rotation steps, the alpha step, and the beta step. The joint
objective is recorded after the beta step; the loop stops when its relative
change falls below tol or after max_iter iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from mvfuse.data import MultiViewDataset
from mvfuse.deep import (
    fix_partition_gauge,
    pretrain_view,
    reconstruction_loss,
    sweep_view,
    validate_layer_dims,
)
from mvfuse.fusion import (
    FusionState,
    objective,
    update_alpha,
    update_beta,
    update_consensus,
    update_rotation,
)
from mvfuse.linalg import NumericalError
from mvfuse.metrics import accuracy, kmeans, nmi, purity

# Residuals beyond this are treated as numerical failure, not logged quietly.
RESIDUAL_LIMIT = 1e-6

# Offset between the derived pretraining seeds of consecutive views.
VIEW_SEED_STRIDE = 1000


@dataclass
class HyperParams:
    lam: float
    dims: list
    max_iter: int = 150
    tol: float = 1e-6
    kmeans_restarts: int = 50
    pretrain_iters: int = 50
    seed: int = 0
    warmup_hm: bool = False

    def validate(self) -> "HyperParams":
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.kmeans_restarts < 1:
            raise ValueError("kmeans_restarts must be >= 1")
        if self.pretrain_iters < 0:
            raise ValueError("pretrain_iters must be >= 0")
        return self


@dataclass
class IterationRecord:
    objective: float
    recon_losses: np.ndarray       # per-view ||x - rebuilt||^2
    alpha: np.ndarray
    beta: np.ndarray
    h_residual: float              # ||h h^T - I||_F
    w_residuals: np.ndarray        # per-view ||w w^T - I||_F
    alpha_residual: float          # |sum(alpha) - 1|
    beta_residual: float           # |  ||beta|| - 1|
    min_h_entry: float             # min over every layer of every view
    consensus_degenerate: bool
    rotation_degenerate: np.ndarray


@dataclass
class FitResult:
    h: np.ndarray                  # final k x n consensus
    labels: np.ndarray             # k-means clustering of the consensus columns
    history: list = field(default_factory=list)
    iterations_run: int = 0
    scores: dict | None = None     # acc/nmi/pur when ground truth is known

    @property
    def objectives(self) -> np.ndarray:
        return np.array([rec.objective for rec in self.history])


def check_convergence(objectives, tol: float) -> bool:
    """Relative change of the last two objective values fell below tol."""
    if len(objectives) < 2:
        raise ValueError("need at least two objective values")
    prev, last = objectives[-2], objectives[-1]
    return abs(last - prev) / max(abs(prev), 1e-12) < tol


def init_state(dataset: MultiViewDataset, hp: HyperParams):
    """Pretrain every view, then start fusion from neutral weights.

    Rotations start at identity, alpha uniform, beta uniform on the unit
    sphere; the initial consensus comes from one consensus step over the
    pretrained partitions.
    """
    hp.validate()
    dataset.validate()
    dims = validate_layer_dims(
        hp.dims, dataset.k, [x.shape[0] for x in dataset.views], dataset.n
    )
    views = [
        pretrain_view(x, dims, seed=hp.seed + VIEW_SEED_STRIDE * (v + 1), iters=hp.pretrain_iters)
        for v, x in enumerate(dataset.views)
    ]
    for vf in views:
        fix_partition_gauge(vf)
    nviews = len(views)
    k = dataset.k
    w = [np.eye(k) for _ in range(nviews)]
    alpha = np.full(nviews, 1.0 / nviews)
    beta = np.full(nviews, 1.0 / np.sqrt(nviews))
    h, _ = update_consensus([vf.h[-1] for vf in views], w, beta, prev_h=None)
    return views, FusionState(h=h, w=w, alpha=alpha, beta=beta)


def _record(views, state, obj, losses, consensus_degenerate, rotation_degenerate, it):
    res = state.residuals()
    rec = IterationRecord(
        objective=obj,
        recon_losses=losses,
        alpha=state.alpha.copy(),
        beta=state.beta.copy(),
        h_residual=res["h"],
        w_residuals=np.array(res["w"]),
        alpha_residual=res["alpha"],
        beta_residual=res["beta"],
        min_h_entry=min(float(h.min()) for vf in views for h in vf.h),
        consensus_degenerate=consensus_degenerate,
        rotation_degenerate=np.array(rotation_degenerate),
    )
    worst = max(rec.h_residual, rec.w_residuals.max(), rec.alpha_residual, rec.beta_residual)
    if worst > RESIDUAL_LIMIT or rec.min_h_entry < 0:
        raise NumericalError(
            f"iteration {it}, constraint check: residual {worst:.3e}, "
            f"min representation entry {rec.min_h_entry:.3e}"
        )
    return rec


def fit(dataset: MultiViewDataset, hp: HyperParams) -> FitResult:
    """Run the full alternating optimization and cluster the consensus.

    Returns the final consensus, k-means labels of its columns (best inertia
    over hp.kmeans_restarts restarts), the per-iteration history, and --
    when the dataset carries ground truth -- acc/nmi/pur scores. Numerical
    failure in any block aborts with the iteration and block named.
    """
    views, state = init_state(dataset, hp)
    history = []
    objectives = []
    for it in range(hp.max_iter):
        stage = "consensus"
        try:
            state.h, consensus_degenerate = update_consensus(
                [vf.h[-1] for vf in views], state.w, state.beta, prev_h=state.h
            )
            stage = "view sweep"
            for v, vf in enumerate(views):
                sweep_view(
                    vf, state.h, state.w[v], state.alpha[v], state.beta[v],
                    hp.lam, warmup_hm=hp.warmup_hm,
                )
            stage = "rotation"
            rotation_degenerate = []
            for v, vf in enumerate(views):
                w_new, degenerate = update_rotation(vf.h[-1], state.h, state.beta[v])
                if not degenerate:
                    state.w[v] = w_new
                rotation_degenerate.append(degenerate)
            stage = "alpha"
            losses = np.array([reconstruction_loss(vf) for vf in views])
            if np.any(losses > 0):
                state.alpha = update_alpha(losses)
            # else: every view reconstructs exactly; any alpha is optimal, keep it
            stage = "beta"
            state.beta = update_beta([vf.h[-1] for vf in views], state.w, state.h)
            stage = "objective"
            obj = objective(views, state, hp.lam)
        except NumericalError as exc:
            raise NumericalError(f"iteration {it}, {stage} block: {exc}") from exc
        history.append(
            _record(views, state, obj, losses, consensus_degenerate, rotation_degenerate, it)
        )
        objectives.append(obj)
        if len(objectives) >= 2 and check_convergence(objectives, hp.tol):
            break
    labels = kmeans(
        state.h.T, dataset.k, restarts=hp.kmeans_restarts, seed=hp.seed
    )
    scores = None
    if dataset.truth is not None:
        scores = {
            "acc": accuracy(labels, dataset.truth),
            "nmi": nmi(labels, dataset.truth),
            "pur": purity(labels, dataset.truth),
        }
    return FitResult(
        h=state.h,
        labels=labels,
        history=history,
        iterations_run=len(history),
        scores=scores,
    )
