"""Monospace bitmap font used both to paint labels and to read them back.

Strips are plain 2-D float arrays (height = ``cell_height``, width a multiple
of ``cell_width``) with a light background (1.0) and dark strokes (0.0).

Font asset layout (all integers little-endian)::

    magic        4 bytes   b"OCFN"
    version      uint16    1
    cell_width   uint16
    cell_height  uint16
    glyph_count  uint16
    glyph_count records of:
        codepoint  uint32
        pixels     cell_height * cell_width uint8, row-major, value / 255
"""

import functools
import struct
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DataError, InvalidFactor, LabelTooLong, UnknownGlyph

ALPHABET = tuple("abcdefghijklmnopqrstuvwxyz0123456789 _-")
BLANK = " "

FONT_MAGIC = b"OCFN"
FONT_VERSION = 1
_HEADER = struct.Struct("<4sHHHH")
_CODEPOINT = struct.Struct("<I")


@dataclass(frozen=True, eq=False)
class GlyphFont:
    cell_width: int
    cell_height: int
    glyphs: dict
    alphabet: tuple = ALPHABET

    def __post_init__(self):
        shape = (self.cell_height, self.cell_width)
        frozen = {}
        for ch in self.alphabet:
            if ch not in self.glyphs:
                raise DataError(f"font has no glyph for {ch!r}")
            g = np.array(self.glyphs[ch], dtype=np.float64)
            if g.shape != shape:
                raise DataError(f"glyph {ch!r} has shape {g.shape}, expected {shape}")
            if g.min() < 0.0 or g.max() > 1.0:
                raise DataError(f"glyph {ch!r} has intensities outside [0, 1]")
            g.setflags(write=False)
            frozen[ch] = g
        object.__setattr__(self, "glyphs", frozen)
        object.__setattr__(self, "alphabet", tuple(self.alphabet))

    def stack(self):
        """All glyphs as a ``(len(alphabet), cell_height, cell_width)`` array."""
        return np.stack([self.glyphs[ch] for ch in self.alphabet])


def glyph_for(font, ch):
    try:
        return font.glyphs[ch]
    except KeyError:
        raise UnknownGlyph(ch) from None


def check_renderable(label, font, n_cells=None):
    for ch in label:
        if ch not in font.glyphs:
            raise UnknownGlyph(ch)
    if n_cells is not None and len(label) > n_cells:
        raise LabelTooLong(f"label {label!r} has {len(label)} characters, only {n_cells} cells available")


def render_text(label, font, n_cells=10):
    """Rasterize ``label`` left-aligned into ``n_cells`` glyph cells."""
    check_renderable(label, font, n_cells)
    h, w = font.cell_height, font.cell_width
    strip = np.empty((h, n_cells * w))
    blank = font.glyphs[BLANK]
    for i in range(n_cells):
        glyph = font.glyphs[label[i]] if i < len(label) else blank
        strip[:, i * w:(i + 1) * w] = glyph
    return strip


def scale_brightness(strip, factor):
    """Multiply every pixel by ``factor`` and clamp to [0, 1]."""
    if not factor > 0:
        raise InvalidFactor(f"brightness factor must be > 0, got {factor}")
    return np.clip(np.asarray(strip, dtype=np.float64) * factor, 0.0, 1.0)


def split_cells(strip, cell_width):
    """Reshape a strip into ``(n_cells, height, cell_width)``."""
    h, width = strip.shape
    return strip.reshape(h, width // cell_width, cell_width).transpose(1, 0, 2)


def read_font(path):
    data = Path(path).read_bytes()
    return _parse_font(data)


def _parse_font(data):
    if len(data) < _HEADER.size:
        raise DataError("font asset is truncated")
    magic, version, cw, ch, count = _HEADER.unpack_from(data, 0)
    if magic != FONT_MAGIC:
        raise DataError(f"bad font magic {magic!r}")
    if version != FONT_VERSION:
        raise DataError(f"unsupported font version {version}")
    record = _CODEPOINT.size + cw * ch
    if len(data) != _HEADER.size + count * record:
        raise DataError("font asset size does not match its header")
    glyphs = {}
    order = []
    off = _HEADER.size
    for _ in range(count):
        (cp,) = _CODEPOINT.unpack_from(data, off)
        px = np.frombuffer(data, dtype=np.uint8, count=cw * ch, offset=off + _CODEPOINT.size)
        glyphs[chr(cp)] = px.reshape(ch, cw) / 255.0
        order.append(chr(cp))
        off += record
    return GlyphFont(cell_width=cw, cell_height=ch, glyphs=glyphs, alphabet=tuple(order))


def write_font(font, path):
    parts = [_HEADER.pack(FONT_MAGIC, FONT_VERSION, font.cell_width, font.cell_height, len(font.alphabet))]
    for ch in font.alphabet:
        px = np.rint(font.glyphs[ch] * 255.0).astype(np.uint8)
        parts.append(_CODEPOINT.pack(ord(ch)) + px.tobytes())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(parts))


@functools.lru_cache(maxsize=None)
def default_font():
    """The bundled 16x32 font."""
    data = resources.files("onecad").joinpath("assets/glyphs16x32.bin").read_bytes()
    return _parse_font(data)
