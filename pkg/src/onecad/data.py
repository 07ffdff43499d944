"""Datasets: MNIST IDX files, netpbm directories and seeded synthetic shapes."""

import gzip
import itertools
import string
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import BadMagic, BadImage, ConfigError, CountMismatch, DataError, TruncatedFile
from .glyphfont import check_renderable
from .metrics import normalize_label

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

DIGIT_WORDS = ("zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine")
SHAPES = ("square", "circle", "triangle", "cross")


@dataclass
class LabeledImage:
    pixels: np.ndarray
    label: str


def _open(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx(path, expect_magic=None):
    """Parse an unsigned-byte IDX file into a ``uint8`` array."""
    with _open(path) as fh:
        data = fh.read()
    if len(data) < 4:
        raise TruncatedFile(f"{path}: shorter than the IDX header")
    (magic,) = struct.unpack(">I", data[:4])
    if expect_magic is not None and magic != expect_magic:
        raise BadMagic(f"{path}: magic 0x{magic:08x}, expected 0x{expect_magic:08x}")
    if magic >> 8 != 0x08:
        raise BadMagic(f"{path}: magic 0x{magic:08x} is not an unsigned-byte IDX file")
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(data) < head:
        raise TruncatedFile(f"{path}: truncated dimension header")
    dims = struct.unpack(f">{ndim}I", data[4:head])
    size = int(np.prod(dims, dtype=np.int64))
    if len(data) - head < size:
        raise TruncatedFile(f"{path}: {len(data) - head} payload bytes, expected {size}")
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=head).reshape(dims)


def write_idx(path, array):
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = struct.pack(">I", 0x0800 | array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    payload = header + array.tobytes()
    path = Path(path)
    if path.suffix == ".gz":
        # no name and mtime=0 keep the gzip header byte-stable
        with open(path, "wb") as raw, gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as fh:
            fh.write(payload)
    else:
        path.write_bytes(payload)


def digit_label(d, style="word"):
    return DIGIT_WORDS[d] if style == "word" else str(d)


def load_idx(images_path, labels_path, label_style="word", limit=None):
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.ndim != 3:
        raise DataError(f"{images_path}: expected 3 dimensions, got {images.ndim}")
    if labels.ndim != 1:
        raise DataError(f"{labels_path}: expected 1 dimension, got {labels.ndim}")
    if images.shape[0] != labels.shape[0]:
        raise CountMismatch(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if labels.size and labels.max() > 9:
        raise DataError(f"{labels_path}: label {labels.max()} is not a digit")
    n = images.shape[0] if limit is None else min(limit, images.shape[0])
    return [LabeledImage(images[i] / 255.0, digit_label(int(labels[i]), label_style)) for i in range(n)]


def _shape_mask(kind, yy, xx, cy, cx, r):
    dy, dx = yy - cy, xx - cx
    if kind == "square":
        return (np.abs(dx) <= r) & (np.abs(dy) <= r)
    if kind == "circle":
        return dx * dx + dy * dy <= r * r
    if kind == "triangle":
        depth = (dy + r) / (2 * r)
        return (depth >= 0) & (depth <= 1) & (np.abs(dx) <= r * depth)
    if kind == "cross":
        t = r / 3
        return ((np.abs(dx) <= t) & (np.abs(dy) <= r)) | ((np.abs(dy) <= t) & (np.abs(dx) <= r))
    raise ValueError(kind)


def gen_shapes(n, seed=0, side=224, noise=0.1):
    """``n`` single-shape images, classes balanced up to rounding, fully determined by ``seed``."""
    if n < 1:
        raise ConfigError("gen_shapes needs n >= 1")
    rng = np.random.default_rng(seed)
    kinds = [SHAPES[i % len(SHAPES)] for i in range(n)]
    kinds = [kinds[i] for i in rng.permutation(n)]
    yy, xx = np.mgrid[0:side, 0:side] + 0.5
    out = []
    for kind in kinds:
        img = rng.uniform(0.0, noise, size=(side, side))
        r = rng.uniform(0.18, 0.35) * side
        cy, cx = rng.uniform(r, side - r, size=2)
        img[_shape_mask(kind, yy, xx, cy, cx, r)] = rng.uniform(0.6, 1.0)
        out.append(LabeledImage(img, kind))
    return out


def split(dataset, fraction, seed=0):
    """Seeded shuffle, then the first ``round(fraction * n)`` items train."""
    if not 0 < fraction < 1:
        raise ConfigError(f"split fraction must lie in (0, 1), got {fraction}")
    items = list(dataset)
    perm = np.random.default_rng(seed).permutation(len(items))
    k = int(round(fraction * len(items)))
    return [items[i] for i in perm[:k]], [items[i] for i in perm[k:]]


def read_pnm(path):
    try:
        with Image.open(path) as im:
            arr = np.asarray(im)
    except OSError as exc:
        raise BadImage(f"cannot read {path}: {exc}") from None
    if arr.dtype == np.uint16:
        return arr / 65535.0
    return arr / 255.0


def write_pnm(path, canvas):
    """Write a ``(C, H, W)`` or ``(H, W)`` array in [0, 1] as binary PGM (1 channel) or PPM (3)."""
    arr = np.asarray(canvas, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[0] if arr.shape[0] == 1 else arr.transpose(1, 2, 0)
    px = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(px).save(path, format="PPM")


def load_netpbm_dir(directory, labels_file="labels.tsv"):
    """Images listed in ``labels_file`` as ``filename<TAB>label`` lines."""
    directory = Path(directory)
    sidecar = directory / labels_file
    if not sidecar.exists():
        raise DataError(f"missing label sidecar {sidecar}")
    out = []
    for lineno, line in enumerate(sidecar.read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            name, label = line.split("\t", 1)
        except ValueError:
            raise DataError(f"{sidecar}:{lineno}: expected filename<TAB>label") from None
        out.append(LabeledImage(read_pnm(directory / name), normalize_label(label)))
    return out


@dataclass(frozen=True)
class Vocabulary:
    labels: tuple
    max_len: int

    @classmethod
    def build(cls, labels, label_cells, font):
        seen = tuple(dict.fromkeys(labels))
        vocab = cls(seen, max((len(s) for s in seen), default=0))
        vocab.check(label_cells, font)
        return vocab

    def check(self, label_cells, font):
        for s in self.labels:
            check_renderable(s, font, label_cells)

    def __len__(self):
        return len(self.labels)


def fit_label(label, label_cells):
    """Normalize and cut a label to the cells available on the canvas."""
    return normalize_label(label)[:label_cells]


def fit_dataset(dataset, label_cells, font):
    """Relabel a dataset for ``label_cells`` and verify the result is still unambiguous."""
    originals = {}
    out = []
    for item in dataset:
        short = fit_label(item.label, label_cells)
        if originals.setdefault(short, item.label) != item.label:
            raise ConfigError(f"labels {originals[short]!r} and {item.label!r} collide when cut to {label_cells} cells")
        out.append(LabeledImage(item.pixels, short))
    vocab = Vocabulary.build(sorted(originals), label_cells, font)
    return out, vocab


def synthetic_vocabulary(size, max_len, letters=string.ascii_lowercase):
    """The first ``size`` strings over ``letters`` in length-then-lexicographic order."""
    out = []
    for length in range(1, max_len + 1):
        for combo in itertools.product(letters, repeat=length):
            out.append("".join(combo))
            if len(out) == size:
                return out
    raise ConfigError(f"only {len(out)} strings of length <= {max_len} exist over {len(letters)} letters")


def load_dataset(spec):
    """Build a dataset from a ``{"kind": ...}`` mapping (shapes, idx or netpbm)."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    try:
        if kind == "shapes":
            return gen_shapes(int(spec.get("n", 400)), int(spec.get("seed", 0)), int(spec.get("side", 224)))
        if kind == "idx":
            limit = spec.get("limit")
            return load_idx(spec["images"], spec["labels"], spec.get("label_style", "word"),
                            None if limit is None else int(limit))
        if kind == "netpbm":
            return load_netpbm_dir(spec["dir"], spec.get("labels_file", "labels.tsv"))
    except KeyError as exc:
        raise ConfigError(f"dataset spec of kind {kind!r} is missing {exc}") from None
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from None
    raise ConfigError(f"unknown dataset kind {kind!r}")
