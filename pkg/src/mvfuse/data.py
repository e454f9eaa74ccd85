"""Datasets on disk: manifests, matrix files, normalization, synthetic data.

A dataset is a directory holding one matrix file per view plus a JSON
manifest. Matrices are stored features x samples (d x n) in either of two
bit-exact interchange forms:

* text (".txt"): first line "rows cols", then one whitespace-delimited row
  per line, entries printed with 17 significant digits;
* binary (".mvm"): 16-byte header -- the 8-byte magic "MVMATRIX", then
  little-endian uint32 rows and cols -- followed by row-major little-endian
  float64 entries.

Readers sniff the magic, so either format may appear under any name.

The manifest carries: name, k, sample_count, one {path, dim} entry per view,
an optional truth path (one integer label per line), and the normalization
scheme applied at load time.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from mvfuse.linalg import as_matrix

MAGIC = b"MVMATRIX"

NORMALIZATION_SCHEMES = ("l2-sample", "minmax-feature")


@dataclass
class MultiViewDataset:
    views: list               # d_v x n float64 matrices, shared sample axis
    truth: np.ndarray | None  # n ground-truth labels in [0, k), or None
    k: int
    name: str = "dataset"

    @property
    def n(self) -> int:
        return self.views[0].shape[1]

    @property
    def num_views(self) -> int:
        return len(self.views)

    def validate(self) -> "MultiViewDataset":
        if self.k < 2:
            raise ValueError(f"dataset {self.name!r}: need k >= 2, got {self.k}")
        if not self.views:
            raise ValueError(f"dataset {self.name!r}: no views")
        n = self.views[0].shape[1]
        for i, x in enumerate(self.views):
            x = as_matrix(x, f"view {i}")
            if x.shape[1] != n:
                raise ValueError(
                    f"dataset {self.name!r}: view {i} has {x.shape[1]} samples, expected {n}"
                )
            self.views[i] = x
        if self.truth is not None:
            truth = np.asarray(self.truth, dtype=np.int64)
            if truth.shape != (n,):
                raise ValueError(
                    f"dataset {self.name!r}: truth has shape {truth.shape}, expected ({n},)"
                )
            if truth.min() < 0 or truth.max() >= self.k:
                raise ValueError(
                    f"dataset {self.name!r}: truth labels must lie in [0, {self.k})"
                )
            self.truth = truth
        return self


@dataclass
class Manifest:
    name: str
    k: int
    sample_count: int
    views: list = field(default_factory=list)  # {"path": str, "dim": int} per view
    truth: str | None = None
    normalization: str = "l2-sample"

    @classmethod
    def load(cls, path) -> "Manifest":
        path = Path(path)
        if not path.is_file():
            raise ValueError(f"manifest not found: {path}")
        raw = json.loads(path.read_text())
        for key in ("name", "k", "sample_count", "views"):
            if key not in raw:
                raise ValueError(f"manifest {path}: missing field {key!r}")
        m = cls(
            name=str(raw["name"]),
            k=int(raw["k"]),
            sample_count=int(raw["sample_count"]),
            views=[{"path": str(v["path"]), "dim": int(v["dim"])} for v in raw["views"]],
            truth=raw.get("truth"),
            normalization=raw.get("normalization", "l2-sample"),
        )
        if m.normalization not in NORMALIZATION_SCHEMES:
            raise ValueError(
                f"manifest {path}: unknown normalization {m.normalization!r}, "
                f"expected one of {NORMALIZATION_SCHEMES}"
            )
        return m

    def save(self, path) -> None:
        payload = {
            "name": self.name,
            "k": self.k,
            "sample_count": self.sample_count,
            "views": self.views,
            "truth": self.truth,
            "normalization": self.normalization,
        }
        if self.truth is None:
            del payload["truth"]
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def write_matrix_text(path, a) -> None:
    a = as_matrix(a)
    rows = [f"{a.shape[0]} {a.shape[1]}"]
    rows += [" ".join(f"{v:.17g}" for v in row) for row in a]
    Path(path).write_text("\n".join(rows) + "\n")


def write_matrix_binary(path, a) -> None:
    a = as_matrix(a)
    header = MAGIC + struct.pack("<II", a.shape[0], a.shape[1])
    Path(path).write_bytes(header + np.ascontiguousarray(a, dtype="<f8").tobytes())


def write_matrix(path, a) -> None:
    """Write text for a ".txt" suffix, the binary blob otherwise."""
    if str(path).endswith(".txt"):
        write_matrix_text(path, a)
    else:
        write_matrix_binary(path, a)


def read_matrix(path) -> np.ndarray:
    """Read either matrix format, sniffing the binary magic."""
    path = Path(path)
    if not path.is_file():
        raise ValueError(f"matrix file not found: {path}")
    blob = path.read_bytes()
    if blob[: len(MAGIC)] == MAGIC:
        if len(blob) < 16:
            raise ValueError(f"{path}: truncated binary header")
        rows, cols = struct.unpack("<II", blob[8:16])
        expect = 16 + 8 * rows * cols
        if len(blob) != expect:
            raise ValueError(f"{path}: expected {expect} bytes for {rows}x{cols}, got {len(blob)}")
        a = np.frombuffer(blob[16:], dtype="<f8").reshape(rows, cols)
        return as_matrix(a.astype(np.float64), str(path))
    lines = blob.decode("utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty matrix file")
    try:
        rows, cols = (int(t) for t in lines[0].split())
    except ValueError as exc:
        raise ValueError(f"{path}: header must be 'rows cols', got {lines[0]!r}") from exc
    body = " ".join(lines[1 : rows + 1])
    values = np.array(body.split(), dtype=np.float64)
    if values.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} values, got {values.size}")
    return as_matrix(values.reshape(rows, cols), str(path))


def write_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.int64)
    Path(path).write_text("\n".join(str(v) for v in labels) + "\n")


def read_labels(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise ValueError(f"label file not found: {path}")
    tokens = path.read_text().split()
    if not tokens:
        raise ValueError(f"{path}: empty label file")
    try:
        return np.array([int(t) for t in tokens], dtype=np.int64)
    except ValueError as exc:
        raise ValueError(f"{path}: labels must be integers") from exc


def normalize(x, scheme: str = "l2-sample") -> np.ndarray:
    """Per-view normalization.

    "l2-sample" scales every column (sample) to unit l2 norm, leaving
    all-zero columns untouched; "minmax-feature" maps every row (feature)
    onto [0, 1], sending constant rows to zero.
    """
    x = as_matrix(x)
    if scheme == "l2-sample":
        norms = np.linalg.norm(x, axis=0, keepdims=True)
        return x / np.where(norms == 0.0, 1.0, norms)
    if scheme == "minmax-feature":
        lo = x.min(axis=1, keepdims=True)
        span = x.max(axis=1, keepdims=True) - lo
        out = (x - lo) / np.where(span == 0.0, 1.0, span)
        out[np.broadcast_to(span == 0.0, out.shape)] = 0.0
        return out
    raise ValueError(f"unknown normalization scheme {scheme!r}, expected one of {NORMALIZATION_SCHEMES}")


def normalize_dataset(ds: MultiViewDataset, scheme: str = "l2-sample") -> MultiViewDataset:
    return MultiViewDataset(
        views=[normalize(x, scheme) for x in ds.views],
        truth=ds.truth,
        k=ds.k,
        name=ds.name,
    ).validate()


def load_dataset(manifest_path, normalization: str | None = None) -> MultiViewDataset:
    """Load and normalize the dataset a manifest describes.

    The manifest's scheme applies unless `normalization` overrides it. Every
    view is checked against its declared dimension and the shared sample
    count; failures name the offending view.
    """
    manifest = Manifest.load(manifest_path)
    base = Path(manifest_path).parent
    scheme = normalization or manifest.normalization
    views = []
    for i, entry in enumerate(manifest.views):
        vpath = base / entry["path"]
        if not vpath.is_file():
            raise ValueError(f"view {i} ({entry['path']}): file not found at {vpath}")
        x = read_matrix(vpath)
        if x.shape != (entry["dim"], manifest.sample_count):
            raise ValueError(
                f"view {i} ({entry['path']}): expected {entry['dim']}x{manifest.sample_count}, "
                f"got {x.shape[0]}x{x.shape[1]}"
            )
        views.append(normalize(x, scheme))
    truth = None
    if manifest.truth is not None:
        truth = read_labels(base / manifest.truth)
    return MultiViewDataset(
        views=views, truth=truth, k=manifest.k, name=manifest.name
    ).validate()


def save_dataset(
    ds: MultiViewDataset,
    out_dir,
    fmt: str = "binary",
    normalization: str = "l2-sample",
) -> Path:
    """Write views, truth, and manifest under out_dir; returns the manifest path.

    Matrices are stored raw; the manifest's normalization tag tells loaders
    what to apply.
    """
    if fmt not in ("binary", "text"):
        raise ValueError(f"fmt must be 'binary' or 'text', got {fmt!r}")
    if normalization not in NORMALIZATION_SCHEMES:
        raise ValueError(f"unknown normalization scheme {normalization!r}")
    ds.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    suffix = ".mvm" if fmt == "binary" else ".txt"
    entries = []
    for i, x in enumerate(ds.views):
        fname = f"view{i}{suffix}"
        write_matrix(out_dir / fname, x)
        entries.append({"path": fname, "dim": int(x.shape[0])})
    truth_name = None
    if ds.truth is not None:
        truth_name = "truth.txt"
        write_labels(out_dir / truth_name, ds.truth)
    manifest = Manifest(
        name=ds.name,
        k=ds.k,
        sample_count=ds.n,
        views=entries,
        truth=truth_name,
        normalization=normalization,
    )
    manifest_path = out_dir / "manifest.json"
    manifest.save(manifest_path)
    return manifest_path


def generate_synthetic(
    n: int,
    k: int,
    view_dims,
    noise_sigma: float = 0.1,
    seed: int = 0,
    nuisance_dim: int = 0,
    nuisance_scale: float = 1.0,
    name: str = "synth",
) -> MultiViewDataset:
    """Planted multi-view clustering data.

    Balanced labels (cluster sizes within one of n/k) drive a k x n indicator
    that every view observes through its own random linear map, plus isotropic
    Gaussian noise of scale noise_sigma. With nuisance_dim > 0 each view also
    receives a private rank-nuisance_dim component of scale nuisance_scale --
    structure that is real but carries no cluster signal, and differs per view.
    """
    if k < 2:
        raise ValueError(f"need k >= 2, got {k}")
    if n < 5 * k:
        raise ValueError(f"need n >= 5k = {5 * k}, got {n}")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    if nuisance_dim < 0:
        raise ValueError("nuisance_dim must be >= 0")
    rng = np.random.default_rng(seed)
    counts = np.full(k, n // k)
    counts[: n % k] += 1
    labels = np.repeat(np.arange(k), counts)
    rng.shuffle(labels)
    indicator = np.zeros((k, n))
    indicator[labels, np.arange(n)] = 1.0
    views = []
    for d in view_dims:
        d = int(d)
        if d < 1:
            raise ValueError(f"view dims must be positive, got {d}")
        x = rng.standard_normal((d, k)) @ indicator
        if nuisance_dim > 0:
            if nuisance_dim > d:
                raise ValueError(f"nuisance_dim {nuisance_dim} exceeds view dim {d}")
            # Orthonormal basis plus sqrt(d/q) scaling makes nuisance_scale the
            # per-sample nuisance-to-signal energy ratio, independent of d.
            directions = np.linalg.qr(rng.standard_normal((d, nuisance_dim)))[0]
            codes = rng.standard_normal((nuisance_dim, n))
            gain = nuisance_scale * np.sqrt(d / nuisance_dim)
            x = x + gain * (directions @ codes)
        if noise_sigma > 0:
            x = x + noise_sigma * rng.standard_normal((d, n))
        views.append(x)
    return MultiViewDataset(views=views, truth=labels, k=k, name=name).validate()
