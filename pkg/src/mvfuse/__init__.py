"""Multi-view clustering via layered semi-NMF and consensus partition alignment."""

from mvfuse.data import MultiViewDataset, generate_synthetic, load_dataset
from mvfuse.metrics import accuracy, kmeans, nmi, purity
from mvfuse.pipeline import FitResult, HyperParams, fit

__version__ = "0.1.0"

__all__ = [
    "FitResult",
    "HyperParams",
    "MultiViewDataset",
    "accuracy",
    "fit",
    "generate_synthetic",
    "kmeans",
    "load_dataset",
    "nmi",
    "purity",
]
