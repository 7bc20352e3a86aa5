"""Multi-view dataset ingestion, synthesis, missing-mask generation, and
conflict injection.

Directory format: manifest.json {name, V, K, dims, N}, view_1.csv ..
view_V.csv (one row per sample), labels.csv (one integer per row), and an
optional mask.csv (N rows of V comma-separated 0/1 entries). Every sample
must keep at least one observed view.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "MultiViewDataset",
    "CorruptionSpec",
    "DataError",
    "DomainError",
    "load_dataset",
    "save_dataset",
    "generate_missing_mask",
    "inject_conflict",
    "synthesize_dataset",
    "split",
]


class DataError(ValueError):
    """Malformed dataset on disk or inconsistent components."""


class DomainError(ValueError):
    """Request outside the feasible domain (e.g. unreachable missing rate)."""


@dataclass(frozen=True)
class MultiViewDataset:
    views: list  # V arrays of shape (N, d_v)
    labels: np.ndarray  # (N,) ints in [0, K)
    mask: np.ndarray  # (N, V) in {0, 1}
    n_classes: int
    name: str = "dataset"

    def __post_init__(self):
        views = [np.asarray(v, dtype=np.float64) for v in self.views]
        labels = np.asarray(self.labels, dtype=np.int64)
        mask = np.asarray(self.mask, dtype=np.int64)
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "mask", mask)
        n = labels.shape[0]
        for v, arr in enumerate(views):
            if arr.ndim != 2 or arr.shape[0] != n:
                raise DataError(f"view {v + 1} row count {arr.shape[0]} != label count {n}")
        if mask.shape != (n, len(views)):
            raise DataError(f"mask shape {mask.shape} != ({n}, {len(views)})")
        if not np.all((mask == 0) | (mask == 1)):
            raise DataError("mask entries must be 0 or 1")
        bad = np.where(mask.sum(axis=1) == 0)[0]
        if bad.size:
            raise DataError(f"rows {bad[:5].tolist()} have no observed view; every sample needs at least one")
        if np.any(labels < 0) or np.any(labels >= self.n_classes):
            raise DataError("labels must lie in [0, n_classes)")

    @property
    def n_samples(self) -> int:
        return self.labels.shape[0]

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def view_dims(self) -> list[int]:
        return [v.shape[1] for v in self.views]

    def one_hot(self) -> np.ndarray:
        out = np.zeros((self.n_samples, self.n_classes))
        out[np.arange(self.n_samples), self.labels] = 1.0
        return out

    def take(self, idx: np.ndarray, name: str | None = None) -> "MultiViewDataset":
        return MultiViewDataset(
            [v[idx] for v in self.views],
            self.labels[idx],
            self.mask[idx],
            self.n_classes,
            name or self.name,
        )

    def missing_rate(self) -> float:
        return float((1 - self.mask).sum() / self.mask.size)


@dataclass(frozen=True)
class CorruptionSpec:
    eta: float = 0.0
    conflict_fraction: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.eta < 1.0:
            raise DomainError("eta must lie in [0, 1)")
        if not 0.0 <= self.conflict_fraction <= 1.0:
            raise DomainError("conflict_fraction must lie in [0, 1]")


def load_dataset(path) -> MultiViewDataset:
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"missing manifest: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"unreadable manifest {manifest_path}: {exc}") from exc
    n_views = int(manifest["V"])
    n_classes = int(manifest["K"])
    views = []
    for v in range(1, n_views + 1):
        f = root / f"view_{v}.csv"
        if not f.exists():
            raise DataError(f"manifest declares {n_views} views but {f} is missing")
        try:
            views.append(np.loadtxt(f, delimiter=",", dtype=np.float64, ndmin=2))
        except ValueError as exc:
            raise DataError(f"non-numeric cell in {f}: {exc}") from exc
    labels_path = root / "labels.csv"
    if not labels_path.exists():
        raise DataError(f"missing labels file: {labels_path}")
    labels = np.loadtxt(labels_path, delimiter=",", dtype=np.int64, ndmin=1)
    mask_path = root / "mask.csv"
    if mask_path.exists():
        mask = np.loadtxt(mask_path, delimiter=",", dtype=np.int64, ndmin=2)
    else:
        mask = np.ones((labels.shape[0], n_views), dtype=np.int64)
    dims = manifest.get("dims")
    if dims is not None and [v.shape[1] for v in views] != list(dims):
        raise DataError(f"view dimensions {[v.shape[1] for v in views]} != manifest dims {dims}")
    return MultiViewDataset(views, labels, mask, n_classes, manifest.get("name", root.name))


def save_dataset(ds: MultiViewDataset, path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "name": ds.name,
        "V": ds.n_views,
        "K": ds.n_classes,
        "dims": ds.view_dims,
        "N": ds.n_samples,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    for v, arr in enumerate(ds.views, start=1):
        np.savetxt(root / f"view_{v}.csv", arr, delimiter=",", fmt="%.17g")
    np.savetxt(root / "labels.csv", ds.labels, fmt="%d")
    np.savetxt(root / "mask.csv", ds.mask, delimiter=",", fmt="%d")


def generate_missing_mask(n: int, v: int, eta: float, seed: int) -> np.ndarray:
    """Mask with exactly round(eta * v * n) zeros, each row keeping >= 1 one.

    Zeros are placed along a random permutation of all cells, skipping any
    cell whose row is down to its last observed view.
    """
    if not 0.0 <= eta <= (v - 1) / v + 1e-12:
        raise DomainError(f"eta={eta} infeasible for V={v}: must be in [0, {(v - 1) / v:.4f}]")
    n_zeros = int(round(eta * v * n))
    mask = np.ones((n, v), dtype=np.int64)
    if n_zeros == 0:
        return mask
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    order = rng.permutation(n * v)
    remaining = np.full(n, v)
    placed = 0
    for cell in order:
        row, col = divmod(int(cell), v)
        if remaining[row] > 1:
            mask[row, col] = 0
            remaining[row] -= 1
            placed += 1
            if placed == n_zeros:
                break
    return mask


def inject_conflict(
    ds: MultiViewDataset, fraction: float, seed: int
) -> tuple[MultiViewDataset, list[dict]]:
    """Replace one view of round(fraction * N) rows with a different-class donor's view.

    Labels are untouched. Returns the corrupted dataset and a provenance log
    of {row, view, donor} records.
    """
    if len(np.unique(ds.labels)) < 2:
        raise DomainError("conflict injection needs at least two classes present")
    n_corrupt = int(round(fraction * ds.n_samples))
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    victims = rng.choice(ds.n_samples, size=n_corrupt, replace=False)
    views = [v.copy() for v in ds.views]
    log: list[dict] = []
    for row in victims:
        view = int(rng.integers(ds.n_views))
        while True:
            donor = int(rng.integers(ds.n_samples))
            if ds.labels[donor] != ds.labels[row]:
                break
        views[view][row] = ds.views[view][donor]
        log.append({"row": int(row), "view": view, "donor": donor})
    out = MultiViewDataset(views, ds.labels, ds.mask, ds.n_classes, ds.name)
    return out, log


def synthesize_dataset(
    n: int, v: int, k: int, d: int, separation: float, seed: int, name: str = "synthetic"
) -> MultiViewDataset:
    """Gaussian blobs: one random mean of norm ``separation`` per (class, view),
    unit covariance, balanced classes; views share the class but draw
    independent noise."""
    if n < k * v:
        raise DomainError("need at least K*V samples")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    means = rng.standard_normal((k, v, d))
    norms = np.linalg.norm(means, axis=2, keepdims=True)
    norms[norms == 0.0] = 1.0
    means = means / norms * separation
    per_class = np.full(k, n // k)
    per_class[: n % k] += 1
    labels = np.repeat(np.arange(k), per_class)
    views = []
    for view in range(v):
        arr = means[labels, view] + rng.standard_normal((n, d))
        views.append(arr)
    mask = np.ones((n, v), dtype=np.int64)
    return MultiViewDataset(views, labels, mask, k, name)


def split(ds: MultiViewDataset, test_fraction: float, seed: int) -> tuple[MultiViewDataset, MultiViewDataset]:
    """Stratified disjoint train/test split."""
    if not 0.0 < test_fraction < 1.0:
        raise DomainError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    test_idx: list[np.ndarray] = []
    for c in range(ds.n_classes):
        rows = np.where(ds.labels == c)[0]
        if rows.size and rows.size < 2:
            raise DataError(f"class {c} has {rows.size} sample(s); cannot stratify")
        rows = rng.permutation(rows)
        n_test = int(round(test_fraction * rows.size))
        test_idx.append(rows[:n_test])
    test_rows = np.sort(np.concatenate(test_idx))
    is_test = np.zeros(ds.n_samples, dtype=bool)
    is_test[test_rows] = True
    train = ds.take(np.where(~is_test)[0], f"{ds.name}-train")
    test = ds.take(test_rows, f"{ds.name}-test")
    return train, test


def augmentation_mask(
    source_mask: np.ndarray, eta: float, rng: np.random.Generator
) -> np.ndarray:
    """Fresh training mask at rate ``eta`` applied only to source-observed entries.

    An entry missing in the source data can never become observed; the
    returned mask is elementwise <= source_mask and keeps >= 1 observed view
    per row.
    """
    source_mask = np.asarray(source_mask)
    n, v = source_mask.shape
    if eta <= 0.0:
        return source_mask.copy()
    drop = rng.random(source_mask.shape) < eta
    out = source_mask * (1 - drop.astype(np.int64))
    dead = out.sum(axis=1) == 0
    if np.any(dead):
        # restore one source-observed view per dead row, chosen by the rng
        for row in np.where(dead)[0]:
            candidates = np.where(source_mask[row] == 1)[0]
            out[row, rng.choice(candidates)] = 1
    return out
