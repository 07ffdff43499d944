#!/usr/bin/env python3
"""Regenerate the bundled 16x32 glyph asset from the 5x8 source patterns below.

Each pattern cell becomes a 3x3 block, so a glyph occupies 15x24 pixels
placed at column 1, row 4 of the 16x32 cell. Strokes are written as 0,
background as 255.

    python scripts/build_font.py [--out src/onecad/assets/glyphs16x32.bin]
"""

import argparse
from pathlib import Path

import numpy as np

from onecad.glyphfont import ALPHABET, GlyphFont, write_font

SCALE = 3
X_OFFSET = 1
Y_OFFSET = 4

PATTERNS = {
    "a": """
        .....
        .....
        .###.
        ....#
        .####
        #...#
        .####
        .....""",
    "b": """
        #....
        #....
        #.##.
        ##..#
        #...#
        #...#
        ####.
        .....""",
    "c": """
        .....
        .....
        .###.
        #....
        #....
        #...#
        .###.
        .....""",
    "d": """
        ....#
        ....#
        .##.#
        #..##
        #...#
        #...#
        .####
        .....""",
    "e": """
        .....
        .....
        .###.
        #...#
        #####
        #....
        .###.
        .....""",
    "f": """
        ..##.
        .#..#
        .#...
        ###..
        .#...
        .#...
        .#...
        .....""",
    "g": """
        .....
        .....
        .####
        #...#
        #...#
        .####
        ....#
        .###.""",
    "h": """
        #....
        #....
        #.##.
        ##..#
        #...#
        #...#
        #...#
        .....""",
    "i": """
        ..#..
        .....
        .##..
        ..#..
        ..#..
        ..#..
        .###.
        .....""",
    "j": """
        ...#.
        .....
        ..##.
        ...#.
        ...#.
        ...#.
        #..#.
        .##..""",
    "k": """
        #....
        #....
        #..#.
        #.#..
        ##...
        #.#..
        #..#.
        .....""",
    "l": """
        .##..
        ..#..
        ..#..
        ..#..
        ..#..
        ..#..
        .###.
        .....""",
    "m": """
        .....
        .....
        ##.#.
        #.#.#
        #.#.#
        #...#
        #...#
        .....""",
    "n": """
        .....
        .....
        #.##.
        ##..#
        #...#
        #...#
        #...#
        .....""",
    "o": """
        .....
        .....
        .###.
        #...#
        #...#
        #...#
        .###.
        .....""",
    "p": """
        .....
        .....
        ####.
        #...#
        #...#
        ####.
        #....
        #....""",
    "q": """
        .....
        .....
        .####
        #...#
        #...#
        .####
        ....#
        ....#""",
    "r": """
        .....
        .....
        #.##.
        ##..#
        #....
        #....
        #....
        .....""",
    "s": """
        .....
        .....
        .####
        #....
        .###.
        ....#
        ####.
        .....""",
    "t": """
        .#...
        .#...
        ###..
        .#...
        .#...
        .#..#
        ..##.
        .....""",
    "u": """
        .....
        .....
        #...#
        #...#
        #...#
        #..##
        .##.#
        .....""",
    "v": """
        .....
        .....
        #...#
        #...#
        #...#
        .#.#.
        ..#..
        .....""",
    "w": """
        .....
        .....
        #...#
        #...#
        #.#.#
        #.#.#
        .#.#.
        .....""",
    "x": """
        .....
        .....
        #...#
        .#.#.
        ..#..
        .#.#.
        #...#
        .....""",
    "y": """
        .....
        .....
        #...#
        #...#
        #...#
        .####
        ....#
        .###.""",
    "z": """
        .....
        .....
        #####
        ...#.
        ..#..
        .#...
        #####
        .....""",
    "0": """
        .###.
        #...#
        #..##
        #.#.#
        ##..#
        #...#
        .###.
        .....""",
    "1": """
        ..#..
        .##..
        ..#..
        ..#..
        ..#..
        ..#..
        .###.
        .....""",
    "2": """
        .###.
        #...#
        ....#
        ...#.
        ..#..
        .#...
        #####
        .....""",
    "3": """
        #####
        ...#.
        ..#..
        ...#.
        ....#
        #...#
        .###.
        .....""",
    "4": """
        ...#.
        ..##.
        .#.#.
        #..#.
        #####
        ...#.
        ...#.
        .....""",
    "5": """
        #####
        #....
        ####.
        ....#
        ....#
        #...#
        .###.
        .....""",
    "6": """
        ..##.
        .#...
        #....
        ####.
        #...#
        #...#
        .###.
        .....""",
    "7": """
        #####
        ....#
        ...#.
        ..#..
        .#...
        .#...
        .#...
        .....""",
    "8": """
        .###.
        #...#
        #...#
        .###.
        #...#
        #...#
        .###.
        .....""",
    "9": """
        .###.
        #...#
        #...#
        .####
        ....#
        ...#.
        .##..
        .....""",
    " ": """
        .....
        .....
        .....
        .....
        .....
        .....
        .....
        .....""",
    "_": """
        .....
        .....
        .....
        .....
        .....
        .....
        .....
        #####""",
    "-": """
        .....
        .....
        .....
        #####
        .....
        .....
        .....
        .....""",
}


def pattern_to_bitmap(pattern, cell_width=16, cell_height=32):
    rows = [r.strip() for r in pattern.strip().splitlines()]
    assert len(rows) == 8 and all(len(r) == 5 for r in rows), rows
    ink = np.array([[c == "#" for c in r] for r in rows])
    ink = np.kron(ink, np.ones((SCALE, SCALE), dtype=bool))
    bitmap = np.ones((cell_height, cell_width))
    h, w = ink.shape
    bitmap[Y_OFFSET:Y_OFFSET + h, X_OFFSET:X_OFFSET + w][ink] = 0.0
    return bitmap


def build():
    glyphs = {ch: pattern_to_bitmap(PATTERNS[ch]) for ch in ALPHABET}
    return GlyphFont(cell_width=16, cell_height=32, glyphs=glyphs, alphabet=ALPHABET)


def main():
    default = Path(__file__).resolve().parents[1] / "src" / "onecad" / "assets" / "glyphs16x32.bin"
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=default)
    args = parser.parse_args()
    font = build()
    write_font(font, args.out)
    print(f"wrote {len(font.alphabet)} glyphs to {args.out}")


if __name__ == "__main__":
    main()
