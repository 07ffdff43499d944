"""Reading predicted label text back out of a reconstruction.

The decoder is nearest-template matching over the known font: each cell is
contrast-normalized and compared against every (likewise normalized) glyph
by mean squared difference.
"""

from dataclasses import dataclass, field

import numpy as np

from .canvas import compose, crop_label_strip, label_row_patches, patchify, unpatchify
from .errors import BadStripShape
from .glyphfont import BLANK, scale_brightness, split_cells
from .nn import no_grad

DEFAULT_BRIGHTNESS = 0.7
# cells whose max-min intensity falls below this carry no ink and read as blank
MIN_CONTRAST = 0.2


@dataclass
class Prediction:
    raw_strip: np.ndarray
    decoded: str
    per_cell_scores: list = field(default_factory=list)


def normalize_cells(cells, min_contrast=MIN_CONTRAST):
    """Stretch each ``(h, w)`` cell to span [0, 1]; flat cells become background."""
    cells = np.asarray(cells, dtype=np.float64)
    lo = cells.min(axis=(-2, -1), keepdims=True)
    span = cells.max(axis=(-2, -1), keepdims=True) - lo
    out = (cells - lo) / np.maximum(span, 1e-6)
    return np.where(span < min_contrast, 1.0, out)


class TemplateReader:
    """Strip-to-text decoder bound to one font."""

    def __init__(self, font, min_contrast=MIN_CONTRAST):
        self.font = font
        self.min_contrast = min_contrast
        # codepoint order makes argmin break ties toward the lowest codepoint
        self.chars = sorted(font.alphabet, key=ord)
        self.templates = normalize_cells(np.stack([font.glyphs[c] for c in self.chars]), min_contrast)

    def scores(self, strip):
        strip = np.asarray(strip, dtype=np.float64)
        h, w = self.font.cell_height, self.font.cell_width
        if strip.ndim != 2 or strip.shape[0] != h or strip.shape[1] == 0 or strip.shape[1] % w:
            raise BadStripShape(f"strip shape {strip.shape} is not {h} x (k * {w})")
        cells = normalize_cells(split_cells(strip, w), self.min_contrast)
        diff = cells[:, None] - self.templates[None]
        return np.mean(diff * diff, axis=(2, 3))

    def __call__(self, strip):
        return self.read(strip)

    def read(self, strip):
        mse = self.scores(strip)
        best = np.argmin(mse, axis=1)
        winners = [(self.chars[j], float(mse[i, j])) for i, j in enumerate(best)]
        text = "".join(ch for ch, _ in winners).rstrip(BLANK)
        return Prediction(raw_strip=np.asarray(strip, dtype=np.float64), decoded=text, per_cell_scores=winners)


def decode_strip(strip, font, min_contrast=MIN_CONTRAST):
    return TemplateReader(font, min_contrast).read(strip)


def reconstruct_canvases(model, patches, layout, masked_ids=None):
    """Run the model without gradients and return clipped ``(B, C, S, S)`` canvases."""
    if masked_ids is None:
        masked_ids = label_row_patches(layout)
    with no_grad():
        pred = model(patches, masked_ids).data
    return np.clip(unpatchify(pred.astype(np.float64), layout), 0.0, 1.0)


def read_canvases(canvases, layout, reader, brightness=DEFAULT_BRIGHTNESS):
    preds = []
    for strip in crop_label_strip(canvases, layout):
        p = reader(scale_brightness(strip, brightness))
        if not isinstance(p, Prediction):
            p = Prediction(raw_strip=strip, decoded=str(p))
        preds.append(p)
    return preds


def infer_batch(model, patches, layout, font, brightness=DEFAULT_BRIGHTNESS, reader=None):
    """Decode the label rows predicted for a ``(B, L, P)`` batch of patch sequences.

    ``reader`` may be any callable mapping a strip to a :class:`Prediction`
    or a plain string; the template reader for ``font`` is used by default.
    """
    reader = reader or TemplateReader(font)
    canvases = reconstruct_canvases(model, patches, layout)
    return read_canvases(canvases, layout, reader, brightness)


def infer(model, image, font, layout, brightness=DEFAULT_BRIGHTNESS, reader=None):
    """Compose ``image`` with an empty label, reconstruct, crop and decode."""
    sample = compose(image, "", layout, font)
    patches = patchify(sample.canvas, layout)[None]
    return infer_batch(model, patches, layout, font, brightness, reader)[0]
