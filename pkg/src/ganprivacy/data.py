"""Dataset ingestion, train/holdout splitting, and attack-pool construction.

Builtin sources:

* ``mnist`` / ``fashion-mnist`` -- loaded from the on-disk cache described
  below.  The cache directory (``$GANPRIVACY_CACHE`` or
  ``~/.cache/ganprivacy``) may contain either a ready ``<name>.gpds`` file or
  the standard raw files (``<name>.npz`` with x_train/y_train/x_test/y_test
  arrays, or the four IDX ubyte files, optionally gzipped), which are imported
  into the cache on first use.  Nothing is downloaded.
* ``digits`` -- scikit-learn's bundled handwritten-digit scans (1797 samples,
  10 classes) upscaled to 28x28.  Fully offline; the default corpus for
  desk-scale runs on machines without the MNIST files.

Any other source is treated as a directory of PNG/JPEG files; immediate
subdirectories, when present, are read as class labels in sorted order.

Cache file layout (``.gpds``): magic ``GPDS``, then five little-endian uint32
words (version, count, height, width, channels), one ``has_labels`` byte,
``count`` label bytes when present, and ``count*H*W*C`` row-major pixel bytes.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_MAGIC = b"GPDS"
_CACHE_VERSION = 1
_BUILTIN_GRIDS = ("mnist", "fashion-mnist")

_IDX_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


class DataError(ValueError):
    """Raised for unreadable, missing, or malformed dataset sources."""


@dataclass(frozen=True)
class LabeledDataset:
    """Images in [0, 1] with optional integer class labels."""

    images: np.ndarray  # (N, H, W, C) float32 in [0, 1]
    labels: np.ndarray | None  # (N,) int64 or None
    name: str

    def __post_init__(self):
        imgs = np.asarray(self.images, dtype=np.float32)
        if imgs.ndim != 4:
            raise DataError(f"images must be (N, H, W, C), got shape {imgs.shape}")
        if imgs.size and (imgs.min() < 0.0 or imgs.max() > 1.0):
            raise DataError("pixel values must lie in [0, 1]")
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (len(imgs),):
                raise DataError("labels must be one integer per image")
            if labels.size and labels.min() < 0:
                raise DataError("labels must be nonnegative")
        object.__setattr__(self, "images", imgs)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.images)

    @property
    def sample_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    @property
    def num_classes(self) -> int | None:
        if self.labels is None:
            return None
        return int(self.labels.max()) + 1 if len(self.labels) else 0


@dataclass(frozen=True)
class SplitIndices:
    """Disjoint train/holdout index lists covering a dataset."""

    train_idx: np.ndarray
    holdout_idx: np.ndarray
    seed: int

    def __post_init__(self):
        tr = np.asarray(self.train_idx, dtype=np.int64)
        ho = np.asarray(self.holdout_idx, dtype=np.int64)
        if np.intersect1d(tr, ho).size:
            raise DataError("train and holdout indices overlap")
        object.__setattr__(self, "train_idx", tr)
        object.__setattr__(self, "holdout_idx", ho)

    @property
    def n_train(self) -> int:
        return len(self.train_idx)

    def validate_for(self, dataset_size: int) -> None:
        joined = np.concatenate([self.train_idx, self.holdout_idx])
        if not np.array_equal(np.sort(joined), np.arange(dataset_size)):
            raise DataError("split does not partition the dataset indices")


@dataclass(frozen=True)
class AttackPool:
    """The full data pool with ground-truth membership bits."""

    samples: np.ndarray
    membership: np.ndarray  # bool per sample, True iff used for training
    n_train: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float32)
        membership = np.asarray(self.membership, dtype=bool)
        if len(samples) != len(membership):
            raise DataError("membership length must match sample count")
        if int(membership.sum()) != self.n_train:
            raise DataError("membership bits do not sum to n_train")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "membership", membership)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def prior(self) -> float:
        return self.n_train / len(self.samples)


def cache_dir() -> Path:
    root = os.environ.get("GANPRIVACY_CACHE")
    if root:
        return Path(root)
    return Path.home() / ".cache" / "ganprivacy"


def write_cache(path: Path, images_u8: np.ndarray, labels: np.ndarray | None) -> None:
    """Write the documented binary cache layout."""

    images_u8 = np.ascontiguousarray(images_u8, dtype=np.uint8)
    n, h, w, c = images_u8.shape
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<5I", _CACHE_VERSION, n, h, w, c))
        if labels is None:
            f.write(struct.pack("<B", 0))
        else:
            f.write(struct.pack("<B", 1))
            f.write(np.asarray(labels, dtype=np.uint8).tobytes())
        f.write(images_u8.tobytes())


def read_cache(path: Path) -> tuple[np.ndarray, np.ndarray | None]:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise DataError(f"{path}: not a ganprivacy dataset cache")
        version, n, h, w, c = struct.unpack("<5I", f.read(20))
        if version != _CACHE_VERSION:
            raise DataError(f"{path}: unsupported cache version {version}")
        (has_labels,) = struct.unpack("<B", f.read(1))
        labels = None
        if has_labels:
            labels = np.frombuffer(f.read(n), dtype=np.uint8).astype(np.int64)
        raw = f.read(n * h * w * c)
        if len(raw) != n * h * w * c:
            raise DataError(f"{path}: truncated pixel payload")
        images = np.frombuffer(raw, dtype=np.uint8).reshape(n, h, w, c)
    return images, labels


def _read_idx(path: Path) -> np.ndarray:
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        data = f.read()
    magic, = struct.unpack(">I", data[:4])
    ndim = magic & 0xFF
    dims = struct.unpack(f">{ndim}I", data[4 : 4 + 4 * ndim])
    return np.frombuffer(data[4 + 4 * ndim :], dtype=np.uint8).reshape(dims)


def _find_raw(directory: Path, stem: str) -> Path | None:
    for suffix in ("", ".gz"):
        p = directory / (stem + suffix)
        if p.exists():
            return p
    return None


def _import_builtin(name: str, directory: Path) -> tuple[np.ndarray, np.ndarray]:
    """Assemble a builtin dataset from raw files dropped into the cache dir."""

    npz = directory / f"{name}.npz"
    if npz.exists():
        with np.load(npz) as z:
            images = np.concatenate([z["x_train"], z["x_test"]])
            labels = np.concatenate([z["y_train"], z["y_test"]])
        return images[..., None] if images.ndim == 3 else images, labels

    idx_dir = directory / name if (directory / name).is_dir() else directory
    found = {key: _find_raw(idx_dir, stem) for key, stem in _IDX_FILES.items()}
    if all(found.values()):
        images = np.concatenate([_read_idx(found["train_images"]), _read_idx(found["test_images"])])
        labels = np.concatenate([_read_idx(found["train_labels"]), _read_idx(found["test_labels"])])
        return images[..., None], labels

    raise DataError(
        f"builtin dataset {name!r} is not cached and no raw files were found; "
        f"place {name}.gpds, {name}.npz, or the four IDX ubyte files under {directory}"
    )


def _load_builtin_grid(name: str, directory: Path) -> LabeledDataset:
    cached = directory / f"{name}.gpds"
    if cached.exists():
        images_u8, labels = read_cache(cached)
    else:
        images_u8, labels = _import_builtin(name, directory)
        write_cache(cached, images_u8, labels)
    return LabeledDataset(images=images_u8.astype(np.float32) / 255.0, labels=labels, name=name)


def _load_digits() -> LabeledDataset:
    from PIL import Image
    from sklearn.datasets import load_digits as _sk_digits

    bunch = _sk_digits()
    small = (bunch.images / 16.0 * 255.0).round().astype(np.uint8)
    upscaled = np.stack(
        [np.asarray(Image.fromarray(img).resize((28, 28), Image.BILINEAR)) for img in small]
    )
    return LabeledDataset(
        images=upscaled[..., None].astype(np.float32) / 255.0,
        labels=bunch.target.astype(np.int64),
        name="digits",
    )


def _load_folder(path: Path, resize, grayscale: bool) -> LabeledDataset:
    from PIL import Image, UnidentifiedImageError

    exts = {".png", ".jpg", ".jpeg"}
    subdirs = sorted(p for p in path.iterdir() if p.is_dir())
    if subdirs:
        files = [(p, ci) for ci, d in enumerate(subdirs) for p in sorted(d.iterdir()) if p.suffix.lower() in exts]
        labeled = True
    else:
        files = [(p, 0) for p in sorted(path.iterdir()) if p.suffix.lower() in exts]
        labeled = False
    if not files:
        raise DataError(f"empty dataset: no image files under {path}")

    images, labels = [], []
    for p, label in files:
        try:
            with Image.open(p) as im:
                im = im.convert("L" if grayscale else "RGB")
                if resize is not None:
                    im = im.resize((resize[1], resize[0]), Image.BILINEAR)
                arr = np.asarray(im, dtype=np.uint8)
        except (UnidentifiedImageError, OSError) as exc:
            raise DataError(f"unreadable image file {p}: {exc}") from exc
        if arr.ndim == 2:
            arr = arr[..., None]
        images.append(arr)
        labels.append(label)
    shapes = {img.shape for img in images}
    if len(shapes) > 1:
        raise DataError(f"images have mixed shapes {sorted(shapes)}; pass a resize option")
    stack = np.stack(images).astype(np.float32) / 255.0
    return LabeledDataset(
        images=stack,
        labels=np.asarray(labels, dtype=np.int64) if labeled else None,
        name=path.name,
    )


def load_dataset(source: str, resize=None, grayscale: bool = False, cache: Path | None = None) -> LabeledDataset:
    """Load a builtin dataset by name or a directory of image files."""

    if source == "digits":
        return _load_digits()
    if source in _BUILTIN_GRIDS:
        return _load_builtin_grid(source, cache or cache_dir())
    path = Path(source)
    if path.is_dir():
        return _load_folder(path, resize, grayscale)
    raise DataError(
        f"unknown dataset source {source!r}: not a builtin "
        f"({', '.join((*_BUILTIN_GRIDS, 'digits'))}) and not a directory"
    )


def subsample(dataset: LabeledDataset, n: int) -> LabeledDataset:
    """First-n subsample in canonical order (desk-scale reduction knob)."""

    if n <= 0:
        raise DataError("subsample size must be positive")
    if n >= len(dataset):
        return dataset
    labels = dataset.labels[:n] if dataset.labels is not None else None
    return LabeledDataset(images=dataset.images[:n], labels=labels, name=dataset.name)


def make_split(dataset: LabeledDataset, train_fraction: float, seed: int) -> SplitIndices:
    """Uniform random split without replacement, reproducible from the seed."""

    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(dataset)
    if n == 0:
        raise DataError("cannot split an empty dataset")
    n_train = int(round(train_fraction * n))
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    return SplitIndices(
        train_idx=np.sort(perm[:n_train]),
        holdout_idx=np.sort(perm[n_train:]),
        seed=seed,
    )


def build_attack_pool(dataset: LabeledDataset, split: SplitIndices) -> AttackPool:
    """Tag every dataset sample with its ground-truth membership bit."""

    n = len(dataset)
    split.validate_for(n)
    if split.n_train == 0 or len(split.holdout_idx) == 0:
        raise DataError("degenerate split: one side is empty")
    membership = np.zeros(n, dtype=bool)
    membership[split.train_idx] = True
    return AttackPool(samples=dataset.images, membership=membership, n_train=split.n_train)
