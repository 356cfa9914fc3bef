"""Datasets: synthetic shifted domain pairs, IDX digit files, batching."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Dataset",
    "DomainPair",
    "SyntheticShiftSpec",
    "IdxError",
    "IdxMagicError",
    "IdxTruncatedError",
    "IdxCountMismatchError",
    "gen_shifted_gaussians",
    "gen_two_moons_shift",
    "read_idx",
    "write_idx",
    "load_idx",
    "batches",
    "Standardizer",
]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray | None
    c: int
    name: str = ""

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, order="C")
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError(f"X must be a non-empty 2-D array, got shape {X.shape}")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        if self.y is not None:
            y = np.array(self.y, dtype=np.int64).ravel()
            if y.shape[0] != X.shape[0]:
                raise ValueError(f"{y.shape[0]} labels for {X.shape[0]} rows")
            if y.min() < 0 or y.max() >= self.c:
                raise ValueError(f"labels must lie in [0, {self.c})")
            y.setflags(write=False)
            object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def unlabeled(self) -> UnlabeledView:
        """The only view handed to target adaptation: features, no labels."""
        return UnlabeledView(self.X, self.c, self.name)

    def with_X(self, X: np.ndarray) -> Dataset:
        return Dataset(X, self.y, self.c, self.name)


@dataclass(frozen=True)
class UnlabeledView:
    X: np.ndarray
    c: int
    name: str = ""

    @property
    def n(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class DomainPair:
    source: Dataset
    target: Dataset  # labels retained for evaluation only


@dataclass(frozen=True)
class SyntheticShiftSpec:
    c: int = 3
    n_per_class: int = 200
    radius: float = 3.0
    std: float = 0.8
    rotation: float = math.pi / 4
    translation: tuple[float, float] = (0.5, -0.5)
    std_inflation: float = 1.2
    seed: int = 0

    def __post_init__(self):
        if self.radius <= 0 or self.std <= 0 or self.std_inflation <= 0:
            raise ValueError("radius, std and std_inflation must be > 0")
        if self.c < 2 or self.n_per_class < 1:
            raise ValueError("need c >= 2 and n_per_class >= 1")
        object.__setattr__(self, "translation", tuple(float(t) for t in self.translation))


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def gen_shifted_gaussians(spec: SyntheticShiftSpec) -> DomainPair:
    """c isotropic blobs on a circle; the target rotates, translates and widens them."""
    rng = np.random.default_rng(spec.seed)
    angles = 2 * np.pi * np.arange(spec.c) / spec.c
    means = spec.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    y = np.repeat(np.arange(spec.c), spec.n_per_class)

    Xs = means[y] + spec.std * rng.standard_normal((y.size, 2))
    t_means = means @ _rotation(spec.rotation).T + np.asarray(spec.translation)
    Xt = t_means[y] + spec.std * spec.std_inflation * rng.standard_normal((y.size, 2))
    return DomainPair(Dataset(Xs, y, spec.c, "source"), Dataset(Xt, y.copy(), spec.c, "target"))


def _moons(n: int, noise: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n_out = n // 2
    n_in = n - n_out
    t_out = np.linspace(0, np.pi, n_out)
    t_in = np.linspace(0, np.pi, n_in)
    X = np.concatenate([
        np.stack([np.cos(t_out), np.sin(t_out)], axis=1),
        np.stack([1 - np.cos(t_in), 0.5 - np.sin(t_in)], axis=1),
    ])
    y = np.concatenate([np.zeros(n_out, np.int64), np.ones(n_in, np.int64)])
    return X + noise * rng.standard_normal(X.shape), y


def gen_two_moons_shift(n: int, noise: float = 0.1, rotation: float = math.pi / 6,
                        seed: int = 0) -> DomainPair:
    """Two interleaved half circles; the target is a fresh draw rotated about the data centre."""
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = np.random.default_rng(seed)
    Xs, ys = _moons(n, noise, rng)
    Xt, yt = _moons(n, noise, rng)
    centre = np.array([0.5, 0.25])
    Xt = (Xt - centre) @ _rotation(rotation).T + centre
    return DomainPair(Dataset(Xs, ys, 2, "source"), Dataset(Xt, yt, 2, "target"))


# ---------------------------------------------------------------- IDX


class IdxError(ValueError):
    pass


class IdxMagicError(IdxError):
    pass


class IdxTruncatedError(IdxError):
    pass


class IdxCountMismatchError(IdxError):
    pass


def read_idx(path, expected_magic: int | None = None) -> np.ndarray:
    """Read an unsigned-byte IDX file into an array shaped by its header."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise IdxTruncatedError(f"{path}: file shorter than the 4-byte magic")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic >> 8 != 0x08 or not 1 <= magic & 0xFF <= 3:
        raise IdxMagicError(f"{path}: unsupported magic 0x{magic:08x}")
    if expected_magic is not None and magic != expected_magic:
        raise IdxMagicError(f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxTruncatedError(f"{path}: header truncated")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = math.prod(dims)
    payload = raw[header:]
    if len(payload) < size:
        raise IdxTruncatedError(f"{path}: payload has {len(payload)} bytes, header declares {size}")
    return np.frombuffer(payload, dtype=np.uint8, count=size).reshape(dims).copy()


def write_idx(path, array: np.ndarray) -> None:
    a = np.asarray(array)
    if a.dtype != np.uint8:
        raise ValueError("IDX writer only supports uint8 payloads")
    if not 1 <= a.ndim <= 3:
        raise ValueError("IDX arrays must have 1 to 3 dimensions")
    header = struct.pack(">I", 0x0800 | a.ndim) + struct.pack(f">{a.ndim}I", *a.shape)
    Path(path).write_bytes(header + np.ascontiguousarray(a).tobytes())


def load_idx(path_images, path_labels, c: int = 10, name: str = "") -> Dataset:
    images = read_idx(path_images, IDX_IMAGES_MAGIC)
    labels = read_idx(path_labels, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise IdxCountMismatchError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    X = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(X, labels.astype(np.int64), c, name or Path(path_images).stem)


# ---------------------------------------------------------------- batching


def batches(ds, batch_size: int, shuffle_seed: int, epoch: int) -> list[np.ndarray]:
    """Index slices of a seeded permutation for (shuffle_seed, epoch); last batch may be short.

    ``ds`` is anything with an ``n`` attribute, or the row count itself.
    """
    n = ds if isinstance(ds, (int, np.integer)) else ds.n
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.random.default_rng([shuffle_seed, epoch]).permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


@dataclass(frozen=True)
class Standardizer:
    """Per-dimension standardization fitted on one dataset (the source)."""

    mean: np.ndarray
    std: np.ndarray = field(repr=False)

    @classmethod
    def fit(cls, X: np.ndarray) -> Standardizer:
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 0, std, 1.0))

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std
