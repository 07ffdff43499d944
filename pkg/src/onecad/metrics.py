"""Word/prefix accuracies and the label-capacity arithmetic."""

import csv
import io
import json
from dataclasses import dataclass

from .errors import EmptyLabel

MODES = ("fw", "ftc", "fc")


def normalize_label(s):
    return "_".join(s.strip().lower().split(" "))


def match(pred, label, mode):
    """Whether one prediction counts as correct under ``mode`` (fw, ftc or fc)."""
    pred, label = normalize_label(pred), normalize_label(label)
    if not label:
        raise EmptyLabel("label is empty after normalization")
    if not pred:
        return False
    mode = mode.lower()
    if mode == "fw":
        return pred == label
    if mode == "ftc":
        k = min(2, len(label))
        return pred[:k] == label[:k]
    if mode == "fc":
        return pred[0] == label[0]
    raise ValueError(f"unknown accuracy mode {mode!r}")


def accuracy(pairs, mode):
    pairs = list(pairs)
    if not pairs:
        return 0.0
    return sum(match(p, l, mode) for p, l in pairs) / len(pairs)


@dataclass
class EvalReport:
    pairs: list
    fw: float
    ftc: float
    fc: float
    n: int

    @classmethod
    def from_pairs(cls, pairs):
        pairs = [(p, l) for p, l in pairs]
        return cls(pairs=pairs, n=len(pairs), **{m: accuracy(pairs, m) for m in MODES})

    def summary(self):
        return f"n={self.n} FW={self.fw:.4f} FTC={self.ftc:.4f} FC={self.fc:.4f}"

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pred", "label", "fw", "ftc", "fc"])
        for p, l in self.pairs:
            w.writerow([p, l] + [int(match(p, l, m)) for m in MODES])
        w.writerow(["# summary", f"n={self.n}", f"{self.fw:.6f}", f"{self.ftc:.6f}", f"{self.fc:.6f}"])
        return buf.getvalue()

    def to_json(self):
        doc = {"n": self.n, "fw": self.fw, "ftc": self.ftc, "fc": self.fc,
               "pairs": [{"pred": p, "label": l} for p, l in self.pairs]}
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def capacity(n_patches, alphabet_size):
    """Distinct strings representable by ``n_patches`` cells over an alphabet."""
    if n_patches < 1 or alphabet_size < 1:
        raise ValueError("capacity needs n_patches >= 1 and alphabet_size >= 1")
    return int(alphabet_size) ** int(n_patches)


def label_pixels(n_patches, patch_size):
    """Output pixels spent on the label."""
    if n_patches < 0 or patch_size < 0:
        raise ValueError("label_pixels needs non-negative arguments")
    return int(n_patches) * int(patch_size) ** 2


def one_hot_params(features, classes):
    """Weights in a dense ``features -> classes`` output layer (bias excluded)."""
    if features < 1 or classes < 1:
        raise ValueError("one_hot_params needs features >= 1 and classes >= 1")
    return int(features) * int(classes)
