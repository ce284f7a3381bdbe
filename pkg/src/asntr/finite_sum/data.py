"""Dataset containers, IDX/CSV readers, normalization and synthetic generators."""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import IdxDimensionError, IdxMagicError, IdxTruncatedError
from .problems import QuadraticProblem

NORMALIZATIONS = ("raw", "zero-one", "z-score", "zero-center")

LABEL_MAGIC = 0x00000801
IMAGE_MAGIC = 0x00000803


@dataclass
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    normalization: str = "raw"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        if self.targets.ndim == 1:
            self.targets = self.targets[:, None]
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if self.features.shape[0] != self.targets.shape[0]:
            raise ValueError("features and targets disagree on the number of samples")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")

    def __len__(self):
        return self.features.shape[0]

    def subset(self, idx) -> "Dataset":
        n = len(self)
        meta = {k: (v[idx] if isinstance(v, np.ndarray) and v.shape[:1] == (n,) else v)
                for k, v in self.meta.items()}
        return Dataset(self.features[idx], self.targets[idx], self.normalization, meta)


def one_hot(labels, n_classes=None) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.intp).ravel()
    if labels.size and labels.min() < 0:
        raise ValueError("labels must be non-negative")
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if labels.size else 0
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


# -- IDX ---------------------------------------------------------------------

def _read_bytes(path):
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def read_idx(path) -> np.ndarray:
    """Parse an unsigned-byte IDX file (labels 0x801 or images 0x803)."""
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise IdxTruncatedError(f"{path}: file shorter than the 4-byte magic number")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic not in (LABEL_MAGIC, IMAGE_MAGIC):
        raise IdxMagicError(f"{path}: bad magic number 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxTruncatedError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    expected = int(np.prod(dims))
    payload = len(raw) - header
    if payload < expected:
        raise IdxTruncatedError(f"{path}: expected {expected} data bytes, found {payload}")
    if payload > expected:
        raise IdxDimensionError(f"{path}: {payload - expected} trailing bytes beyond dims {dims}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(path, n_classes=None) -> Dataset:
    """Load one IDX file.

    Image files become flattened features rescaled to [0, 1] with an empty
    target block; label files become one-hot targets with an empty feature block.
    """
    arr = read_idx(path)
    if arr.ndim == 1:
        targets = one_hot(arr, n_classes)
        return Dataset(np.zeros((arr.shape[0], 0)), targets, "raw", {"labels": arr.astype(int)})
    feats = arr.reshape(arr.shape[0], -1).astype(float) / 255.0
    return Dataset(feats, np.zeros((arr.shape[0], 0)), "zero-one",
                   {"image_shape": tuple(arr.shape[1:])})


def load_idx_pair(images_path, labels_path, n_classes=None) -> Dataset:
    images = load_idx(images_path)
    labels = load_idx(labels_path, n_classes)
    if len(images) != len(labels):
        raise IdxDimensionError(
            f"{len(images)} images in {images_path} but {len(labels)} labels in {labels_path}")
    meta = {**images.meta, **labels.meta}
    return Dataset(images.features, labels.targets, "zero-one", meta)


# -- CSV ---------------------------------------------------------------------

def load_csv(path, one_hot_targets=False, n_classes=None) -> Dataset:
    """Header row required; columns whose name starts with ``target`` are targets."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV file")
    header = [h.strip() for h in rows[0]]
    tcols = [i for i, h in enumerate(header) if h.startswith("target")]
    fcols = [i for i, h in enumerate(header) if not h.startswith("target")]
    if not tcols:
        raise ValueError(f"{path}: no column named target*")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric entry ({exc})") from None
    if data.size == 0:
        raise ValueError(f"{path}: no data rows")
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: rows do not match header width")
    targets = data[:, tcols]
    if one_hot_targets:
        if len(tcols) != 1:
            raise ValueError("one-hot encoding needs exactly one target column")
        targets = one_hot(targets[:, 0].astype(int), n_classes)
    return Dataset(data[:, fcols], targets, "raw")


# -- normalization -----------------------------------------------------------

def normalize(kind: str, train: Dataset, test: Dataset | None = None, pixel_max: float = 255.0):
    """Apply ``kind`` using statistics of the training split only.

    ``zero-one`` divides by ``pixel_max`` (a no-op for data already tagged zero-one).
    ``z-score`` and ``zero-center`` first apply zero-one rescaling to raw data,
    mirroring the image pipelines where pixel rescaling precedes standardization.
    """
    if kind not in NORMALIZATIONS:
        raise ValueError(f"unknown normalization {kind!r}")
    if kind == "raw":
        return train, test

    def rescaled(ds, force):
        if ds is None:
            return None
        if ds.normalization == "raw" and (force or ds.meta.get("pixels")):
            return ds.features / pixel_max
        return ds.features

    Xtr, Xte = rescaled(train, kind == "zero-one"), rescaled(test, kind == "zero-one")
    if kind == "zero-center":
        mu = Xtr.mean(axis=0)
        Xtr, Xte = Xtr - mu, None if Xte is None else Xte - mu
    elif kind == "z-score":
        mu = Xtr.mean(axis=0)
        sd = Xtr.std(axis=0)
        const = sd <= 1e-12 * np.maximum(1.0, np.abs(mu))
        sd_safe = np.where(const, 1.0, sd)

        def z(X):
            out = (X - mu) / sd_safe
            out[:, const] = 0.0
            return out
        Xtr, Xte = z(Xtr), None if Xte is None else z(Xte)
    out_train = Dataset(Xtr, train.targets, kind, dict(train.meta))
    out_test = None if test is None else Dataset(Xte, test.targets, kind, dict(test.meta))
    return out_train, out_test


def train_test_split(ds: Dataset, n_test: int, seed: int):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(ds))
    return ds.subset(np.sort(perm[n_test:])), ds.subset(np.sort(perm[:n_test]))


# -- synthetic generators ----------------------------------------------------

def make_blobs(n_samples, dim, seed, n_classes=3, separation=4.0, sigma=1.0):
    """Gaussian clusters whose means are pairwise ``separation * sigma`` apart.

    Means sit on scaled coordinate axes when ``dim >= n_classes``; labels are
    balanced and shuffled.
    """
    rng = np.random.default_rng(seed)
    if dim >= n_classes:
        means = np.zeros((n_classes, dim))
        means[np.arange(n_classes), np.arange(n_classes)] = separation * sigma / np.sqrt(2.0)
        if n_classes == 2:
            means -= means.mean(axis=0)
    else:
        means = rng.normal(size=(n_classes, dim))
        means *= separation * sigma / np.sqrt(2.0) / np.linalg.norm(means, axis=1, keepdims=True)
    labels = rng.permutation(np.arange(n_samples) % n_classes)
    X = means[labels] + sigma * rng.normal(size=(n_samples, dim))
    return Dataset(X, one_hot(labels, n_classes), "raw",
                   {"labels": labels, "means": means, "sigma": sigma})


def make_rotation_regression(n_samples, dim, seed, noise=8.0):
    """Rendered bars on a square pixel grid, rotated by an angle in [-45, 45] degrees.

    Pixel intensities are in [0, 255]; the target is the rotation angle.
    ``dim`` pixels are taken row-major from a ceil(sqrt(dim))-sided grid.
    """
    rng = np.random.default_rng(seed)
    side = int(np.ceil(np.sqrt(dim)))
    angles = rng.uniform(-45.0, 45.0, size=n_samples)
    c = (side - 1) / 2.0
    yy, xx = np.mgrid[0:side, 0:side]
    xx = (xx - c).ravel()[:dim]
    yy = (c - yy).ravel()[:dim]
    theta = np.deg2rad(angles)[:, None] + np.pi / 2  # upright bar at angle 0
    # distance of each pixel to the line through the centre with direction theta
    dist = np.abs(xx[None, :] * np.sin(theta) - yy[None, :] * np.cos(theta))
    along = np.abs(xx[None, :] * np.cos(theta) + yy[None, :] * np.sin(theta))
    width = max(side / 10.0, 0.6)
    img = 255.0 * np.exp(-0.5 * (dist / width) ** 2) * (along <= 0.4 * side)
    img = np.clip(img + noise * rng.normal(size=img.shape), 0.0, 255.0)
    return Dataset(img, angles[:, None], "raw", {"pixels": True, "side": side})


def make_quadratic(n_samples, dim, seed, indefinite=False, cond=10.0, spread=1.0):
    """Random finite-sum quadratic.

    Each A_i = Q diag(l_i) Q^T with a shared orthogonal Q; eigenvalues of the mean
    lie in [1, cond]. With ``indefinite`` the individual A_i get negative
    eigenvalues while their mean stays positive definite.
    """
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    base = np.geomspace(1.0, cond, dim)
    jitter = rng.uniform(0.5, 1.5, size=(n_samples, dim))
    lam = base[None, :] * jitter
    if indefinite:
        flip = rng.uniform(size=(n_samples, dim)) < 0.3
        lam = np.where(flip, -lam, lam)
    lam *= base[None, :] / lam.mean(axis=0)[None, :]
    A = np.einsum("ij,bj,kj->bik", Q, lam, Q)
    A = 0.5 * (A + np.swapaxes(A, 1, 2))
    centers = spread * rng.normal(size=(n_samples, dim))
    ds = Dataset(centers, np.zeros((n_samples, 0)), "raw", {"kind": "quadratic"})
    return ds, QuadraticProblem(centers, A)


def generate_synthetic(kind, n_samples, dim, seed, **options):
    """Return ``(dataset, problem_or_None)`` for ``kind`` in
    {"blobs-classification", "rotation-regression", "quadratic"}."""
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    if kind == "blobs-classification":
        return make_blobs(n_samples, dim, seed, **options), None
    if kind == "rotation-regression":
        return make_rotation_regression(n_samples, dim, seed, **options), None
    if kind == "quadratic":
        return make_quadratic(n_samples, dim, seed, **options)
    raise ValueError(f"unknown synthetic kind {kind!r}")
