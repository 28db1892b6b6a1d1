"""Binary feature store (``LPF1``) and synthetic feature generation.

Layout, all integers little-endian int32::

    b"LPF1" version w h d n_classes
    per class: name_length name(utf-8) image_count
    float32 tensor data in (class, image, position, channel) order
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List

import numpy as np

from .core import FeatureTensor

MAGIC = b"LPF1"
VERSION = 1
BACKGROUND_NORM = 0.25
BACKGROUND_SCENES = 8
BACKGROUND_JITTER = 0.3


class FormatError(ValueError):
    def __init__(self, message: str, offset: int = None):
        if offset is not None:
            message = f"{message} at byte offset {offset}"
        super().__init__(message)
        self.offset = offset


@dataclass
class FeatureStore:
    """Feature tensors grouped by class.

    ``tensors[j]`` is a float32 array of shape ``(n_j, w, h, d)``.
    """

    class_names: List[str]
    tensors: List[np.ndarray]

    def __post_init__(self):
        self.tensors = [np.ascontiguousarray(t, dtype=np.float32) for t in self.tensors]
        if not self.class_names:
            raise FormatError("store needs at least one class")
        if len(self.class_names) != len(self.tensors):
            raise FormatError("one tensor block per class is required")
        shapes = {t.shape[1:] for t in self.tensors}
        if len(shapes) != 1 or any(t.ndim != 4 for t in self.tensors):
            raise FormatError(f"all tensors must share one (w, h, d) shape, got {sorted(shapes)}")
        for name, block in zip(self.class_names, self.tensors):
            if not np.all(np.isfinite(block)):
                raise FormatError(f"class {name!r} has non-finite values")

    @property
    def shape(self) -> tuple:
        return self.tensors[0].shape[1:]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def counts(self) -> List[int]:
        return [len(t) for t in self.tensors]

    def tensor(self, cls: int, image: int) -> FeatureTensor:
        return FeatureTensor(self.tensors[cls][image])

    def __eq__(self, other):
        if not isinstance(other, FeatureStore):
            return NotImplemented
        return self.class_names == other.class_names and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.tensors, other.tensors)
        ) and len(self.tensors) == len(other.tensors)


def dumps(store: FeatureStore) -> bytes:
    w, h, d = store.shape
    parts = [MAGIC, struct.pack("<5i", VERSION, w, h, d, store.num_classes)]
    for name, block in zip(store.class_names, store.tensors):
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<i", len(encoded)) + encoded + struct.pack("<i", len(block)))
    for block in store.tensors:
        parts.append(block.astype("<f4", copy=False).tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> FeatureStore:
    view = memoryview(buf)
    pos = 0

    def take(n: int, what: str):
        nonlocal pos
        if pos + n > len(view):
            raise FormatError(f"truncated {what}: need {n} bytes, {len(view) - pos} left", pos)
        out = view[pos:pos + n]
        pos += n
        return out

    if bytes(take(4, "magic")) != MAGIC:
        raise FormatError("bad magic", 0)
    version, w, h, d, n_classes = struct.unpack("<5i", take(20, "header"))
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if min(w, h, d) < 1 or n_classes < 1:
        raise FormatError(f"invalid header w={w} h={h} d={d} classes={n_classes}", 8)

    names, counts = [], []
    for _ in range(n_classes):
        start = pos
        (length,) = struct.unpack("<i", take(4, "name length"))
        if length < 0:
            raise FormatError("negative name length", start)
        try:
            names.append(bytes(take(length, "class name")).decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise FormatError(f"class name is not utf-8: {exc}", start + 4) from None
        (count,) = struct.unpack("<i", take(4, "image count"))
        if count < 0:
            raise FormatError("negative image count", pos - 4)
        counts.append(count)

    per_image = w * h * d
    blocks = []
    for count in counts:
        raw = take(4 * count * per_image, "tensor data")
        blocks.append(np.frombuffer(raw, dtype="<f4").reshape(count, w, h, d).astype(np.float32))
    if pos != len(view):
        raise FormatError(f"{len(view) - pos} trailing bytes", pos)
    return FeatureStore(names, blocks)


def write_store(store: FeatureStore, path) -> None:
    if not isinstance(store, FeatureStore):
        raise TypeError("expected a FeatureStore")
    Path(path).write_bytes(dumps(store))


def read_store(path) -> FeatureStore:
    return loads(Path(path).read_bytes())


def _unit(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def synth_generate(classes: int, images_per_class: int, w: int, h: int, d: int,
                   clutter_fraction: float, noise: float, seed: int = 0,
                   spread: float = 1.0, local_spread: float = 0.3) -> FeatureStore:
    """Random class manifolds on a cluttered background.

    Each class has a unit object direction and a random 2-d subspace;
    each image has its own latent point ``z`` in that subspace. Object
    positions hold unit vectors ``normalize(direction + spread * B (z +
    local_spread * z_r) + noise * gaussian)``, so images of a class lie on
    a 2-d manifold and positions scatter around their image's point. Background positions, a
    ``clutter_fraction`` share of each image placed at random, hold
    norm-0.25 vectors scattered around one of a few background scenes
    shared by every class; each image picks its scene at random.
    """
    if classes < 1 or images_per_class < 1 or min(w, h) < 1:
        raise ValueError("classes, images_per_class, w and h must be positive")
    if d < 4:
        raise ValueError("d must be at least 4")
    if not 0 <= clutter_fraction < 1:
        raise ValueError("clutter_fraction must lie in [0, 1)")
    if noise < 0 or not math.isfinite(noise):
        raise ValueError("noise must be a finite nonnegative number")

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    positions = w * h
    n_object = math.ceil((1 - clutter_fraction) * positions)
    scenes = _unit(rng.standard_normal((BACKGROUND_SCENES, d)))

    names, blocks = [], []
    for c in range(classes):
        direction = _unit(rng.standard_normal(d))
        basis, _ = np.linalg.qr(rng.standard_normal((d, 2)))
        block = np.empty((images_per_class, positions, d))
        for i in range(images_per_class):
            latent = rng.standard_normal(2) + local_spread * rng.standard_normal((n_object, 2))
            offsets = latent @ basis.T
            obj = direction + spread * offsets + noise * rng.standard_normal((n_object, d))
            scene = scenes[rng.integers(BACKGROUND_SCENES)]
            bg = scene + BACKGROUND_JITTER / np.sqrt(d) * rng.standard_normal((positions - n_object, d))
            vectors = np.vstack([_unit(obj), BACKGROUND_NORM * _unit(bg)])
            block[i] = vectors[rng.permutation(positions)]
        names.append(f"class{c:03d}")
        blocks.append(block.reshape(images_per_class, w, h, d))
    return FeatureStore(names, blocks)
