"""Canvas composition, the patch grid and the label-row mask."""

from dataclasses import asdict, dataclass

import numpy as np

from .errors import BadImage, ConfigError, DimensionMismatch
from .glyphfont import render_text

CANVAS_BACKGROUND = 0.0


@dataclass(frozen=True)
class CanvasLayout:
    canvas_side: int = 368
    patch_size: int = 16
    image_size: int = 224
    image_origin: tuple = (72, 16)
    label_origin: tuple = (16, 304)
    label_cells: int = 10
    channels: int = 1
    cell_width: int = 16
    cell_height: int = 32

    def __post_init__(self):
        object.__setattr__(self, "image_origin", tuple(int(v) for v in self.image_origin))
        object.__setattr__(self, "label_origin", tuple(int(v) for v in self.label_origin))
        self.validate()

    @classmethod
    def large(cls):
        return cls()

    @classmethod
    def desk(cls):
        """128-px canvas, 8x8 grid, 96-px image above a 6-cell label strip."""
        return cls(canvas_side=128, image_size=96, image_origin=(16, 0), label_origin=(16, 96), label_cells=6)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_dict(self):
        d = asdict(self)
        d["image_origin"] = list(self.image_origin)
        d["label_origin"] = list(self.label_origin)
        return d

    def validate(self):
        p, s = self.patch_size, self.canvas_side
        if p <= 0 or s <= 0 or s % p:
            raise ConfigError(f"canvas_side {s} must be a positive multiple of patch_size {p}")
        if self.channels not in (1, 3):
            raise ConfigError(f"channels must be 1 or 3, got {self.channels}")
        if self.cell_height % p:
            raise ConfigError(f"label strip height {self.cell_height} is not a multiple of patch_size {p}")
        lx, ly = self.label_origin
        if lx % p or ly % p:
            raise ConfigError(f"label_origin {self.label_origin} is not patch-aligned")
        if self.label_cells < 1:
            raise ConfigError("label_cells must be >= 1")
        sw, sh = self.strip_width, self.cell_height
        if lx < 0 or ly < 0 or lx + sw > s or ly + sh > s:
            raise ConfigError("label strip does not fit inside the canvas")
        ix, iy = self.image_origin
        n = self.image_size
        if n < 1 or ix < 0 or iy < 0 or ix + n > s or iy + n > s:
            raise ConfigError("image slot does not fit inside the canvas")
        if ix < lx + sw and lx < ix + n and iy < ly + sh and ly < iy + n:
            raise ConfigError("image slot overlaps the label strip")

    @property
    def grid(self):
        return self.canvas_side // self.patch_size

    @property
    def n_patches(self):
        return self.grid ** 2

    @property
    def patch_dim(self):
        return self.patch_size ** 2 * self.channels

    @property
    def strip_width(self):
        return self.label_cells * self.cell_width


@dataclass
class ComposedSample:
    canvas: np.ndarray
    masked_patch_ids: np.ndarray
    target: np.ndarray
    label: str


def label_row_patches(layout):
    """Indices of every patch in every grid row the label strip touches."""
    p, g = layout.patch_size, layout.grid
    y0 = layout.label_origin[1]
    y1 = y0 + layout.cell_height
    rows = range(y0 // p, (y1 - 1) // p + 1)
    return np.array([r * g + c for r in rows for c in range(g)], dtype=np.int64)


def visible_patches(layout, masked_ids=None):
    if masked_ids is None:
        masked_ids = label_row_patches(layout)
    keep = np.ones(layout.n_patches, dtype=bool)
    keep[np.asarray(masked_ids, dtype=np.int64)] = False
    return np.flatnonzero(keep)


def resize_bilinear(image, size):
    """Corner-aligned bilinear resize of an ``(H, W, C)`` array to ``(size, size, C)``."""
    h, w = image.shape[:2]

    def axis(n_in):
        if size == 1 or n_in == 1:
            pos = np.zeros(size)
        else:
            pos = np.arange(size) * ((n_in - 1) / (size - 1))
        lo = np.minimum(np.floor(pos).astype(np.int64), n_in - 1)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, fy = axis(h)
    x0, x1, fx = axis(w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = image[y0][:, x0] * (1 - fx) + image[y0][:, x1] * fx
    bot = image[y1][:, x0] * (1 - fx) + image[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def _as_hwc(image, channels):
    img = np.asarray(image, dtype=np.float64)
    if img.size == 0:
        raise BadImage("input image is empty")
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise BadImage(f"expected an HxW or HxWxC image, got shape {img.shape}")
    if img.shape[2] == channels:
        return img
    if img.shape[2] == 1:
        return np.repeat(img, channels, axis=2)
    if channels == 1:
        return img.mean(axis=2, keepdims=True)
    raise BadImage(f"cannot map {img.shape[2]} image channels onto {channels}")


def compose(image, label, layout, font):
    """Paint the resized image and the rendered label onto a blank canvas."""
    if (font.cell_width, font.cell_height) != (layout.cell_width, layout.cell_height):
        raise DimensionMismatch("font cell size does not match the layout")
    strip = render_text(label, font, layout.label_cells)
    img = np.clip(resize_bilinear(_as_hwc(image, layout.channels), layout.image_size), 0.0, 1.0)
    c, s = layout.channels, layout.canvas_side
    canvas = np.full((c, s, s), CANVAS_BACKGROUND)
    ix, iy = layout.image_origin
    n = layout.image_size
    canvas[:, iy:iy + n, ix:ix + n] = img.transpose(2, 0, 1)
    lx, ly = layout.label_origin
    canvas[:, ly:ly + layout.cell_height, lx:lx + layout.strip_width] = strip
    return ComposedSample(canvas=canvas, masked_patch_ids=label_row_patches(layout),
                          target=canvas.copy(), label=label)


def apply_mask(canvas, layout, masked_ids, fill=0.0):
    """Copy of ``canvas`` with the given patches overwritten by ``fill``."""
    seq = patchify(canvas, layout)
    seq[np.asarray(masked_ids, dtype=np.int64)] = fill
    return unpatchify(seq, layout)


def patchify(canvas, layout):
    """``(C, S, S)`` canvas to a row-major ``(g*g, p*p*C)`` patch sequence.

    Each patch vector is ordered (row, column, channel). A leading batch axis
    is carried through.
    """
    canvas = np.asarray(canvas)
    c, s, p, g = layout.channels, layout.canvas_side, layout.patch_size, layout.grid
    if canvas.shape[-3:] != (c, s, s):
        raise DimensionMismatch(f"canvas shape {canvas.shape} does not match layout ({c}, {s}, {s})")
    lead = canvas.shape[:-3]
    x = canvas.reshape(*lead, c, g, p, g, p)
    nd = len(lead)
    order = tuple(range(nd)) + tuple(nd + i for i in (1, 3, 2, 4, 0))
    return x.transpose(order).reshape(*lead, g * g, p * p * c).copy()


def unpatchify(seq, layout):
    """Inverse of :func:`patchify`."""
    seq = np.asarray(seq)
    c, p, g = layout.channels, layout.patch_size, layout.grid
    if seq.shape[-2:] != (g * g, p * p * c):
        raise DimensionMismatch(f"patch sequence shape {seq.shape} does not match layout ({g * g}, {p * p * c})")
    lead = seq.shape[:-2]
    x = seq.reshape(*lead, g, g, p, p, c)
    nd = len(lead)
    order = tuple(range(nd)) + tuple(nd + i for i in (4, 0, 2, 1, 3))
    return x.transpose(order).reshape(*lead, c, g * p, g * p).copy()


def patch_strip(canvas, layout):
    """Lay all patches side by side: ``(C, p, g*g*p)``, e.g. 16x8464 for the 368-px layout."""
    c, p, g = layout.channels, layout.patch_size, layout.grid
    seq = patchify(canvas, layout).reshape(g * g, p, p, c)
    return seq.transpose(3, 1, 0, 2).reshape(c, p, g * g * p)


def crop_label_strip(canvas, layout, font=None):
    """The ``cell_height x strip_width`` label rectangle, channels averaged."""
    canvas = np.asarray(canvas, dtype=np.float64)
    if canvas.ndim == 2:
        canvas = canvas[None]
    if font is not None and (font.cell_width, font.cell_height) != (layout.cell_width, layout.cell_height):
        raise DimensionMismatch("font cell size does not match the layout")
    lx, ly = layout.label_origin
    region = canvas[..., ly:ly + layout.cell_height, lx:lx + layout.strip_width]
    return region.mean(axis=-3)
