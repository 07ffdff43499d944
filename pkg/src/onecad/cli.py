"""Command-line entry point.

Every failure is reported on stderr as one line, ``error[CODE]: message``,
and the process exits with the status attached to the error class (see the
README for the table).
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import metrics
from .canvas import apply_mask, compose
from .config import from_mapping, parse_override, read_config_file, set_path
from .data import SHAPES, Vocabulary, fit_dataset, gen_shapes, load_dataset, read_pnm, synthetic_vocabulary, write_pnm
from .decode import infer
from .errors import OneCadError
from .glyphfont import default_font
from .mae import MaeModel, load_checkpoint, param_count
from .train import checkpoint_config, run_eval, train

OUTPUT_ROOT_ENV = "ONECAD_OUTPUT_ROOT"


class UsageError(OneCadError):
    code = "USAGE"
    exit_status = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _out_dir(args, default_name):
    if getattr(args, "out", None):
        return Path(args.out)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / default_name


def parse_dataset_spec(text):
    """``kind:key=value,key=value`` to a dataset mapping, e.g. ``shapes:n=400,seed=1``."""
    kind, _, rest = text.partition(":")
    spec = {"kind": kind}
    for part in filter(None, rest.split(",")):
        key, value = parse_override(part)
        spec[key] = value
    return spec


def build_config(args):
    mapping = read_config_file(args.config) if getattr(args, "config", None) else {}
    if getattr(args, "preset", None):
        mapping["preset"] = args.preset
    for text in getattr(args, "set", None) or []:
        set_path(mapping, *parse_override(text))
    flags = {
        "seed": "train.seed",
        "epochs": "train.epochs",
        "label_cells": "layout.label_cells",
        "brightness": "brightness",
    }
    for attr, key in flags.items():
        value = getattr(args, attr, None)
        if value is not None:
            set_path(mapping, key, value)
    if getattr(args, "data", None):
        mapping["data"] = parse_dataset_spec(args.data)
        if not getattr(args, "test_data", None) and mapping["data"]["kind"] != "shapes":
            # the default held-out set is synthetic shapes; drop it for other data
            mapping["test_data"] = {}
    if getattr(args, "test_data", None):
        mapping["test_data"] = parse_dataset_spec(args.test_data)
    return from_mapping(mapping)


def _add_config_flags(p):
    p.add_argument("--config", help="TOML or JSON run configuration")
    p.add_argument("--preset", choices=("desk", "large"))
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override, e.g. optim.max_lr=3e-4")
    p.add_argument("--seed", type=int)
    p.add_argument("--label-cells", type=int)
    p.add_argument("--brightness", type=float)


def cmd_train(args):
    cfg = build_config(args)
    out = _out_dir(args, f"train-seed{cfg.train.seed}")
    result = train(cfg, out, resume=args.resume,
                   progress=lambda epoch, rows: print(f"epoch {epoch}/{cfg.train.epochs} done", flush=True))
    print(f"checkpoint {result.checkpoint}")
    if result.val_report is not None:
        print(result.val_report.summary())
    return 0


def cmd_eval(args):
    cfg = checkpoint_config(args.checkpoint)
    model, _, _ = load_checkpoint(args.checkpoint)
    font = default_font()
    spec = parse_dataset_spec(args.data) if args.data else cfg.test_data
    if not spec:
        raise UsageError("the run has no test set; pass --data")
    items, _ = fit_dataset(load_dataset(spec), cfg.layout.label_cells, font)
    if args.limit:
        items = items[:args.limit]
    brightness = cfg.brightness if args.brightness is None else args.brightness
    out = _out_dir(args, "eval")
    rep = run_eval(model, items, cfg.layout, font, out, brightness, args.batch_size)
    print(rep.summary())
    print(f"wrote {out / 'eval.csv'}")
    return 0


def cmd_infer(args):
    cfg = checkpoint_config(args.checkpoint)
    model, _, _ = load_checkpoint(args.checkpoint)
    font = default_font()
    brightness = cfg.brightness if args.brightness is None else args.brightness
    pred = infer(model, read_pnm(args.image), font, cfg.layout, brightness)
    print(pred.decoded)
    for i, (ch, score) in enumerate(pred.per_cell_scores):
        print(f"cell {i}\t{ch!r}\t{score:.6f}")
    if args.dump_strip:
        prefix = Path(args.dump_strip)
        write_pnm(prefix.with_name(prefix.name + "_raw.pgm"), pred.raw_strip / brightness)
        write_pnm(prefix.with_name(prefix.name + "_bright.pgm"), pred.raw_strip)
    return 0


def cmd_compose_preview(args):
    cfg = build_config(args)
    layout, font = cfg.layout, default_font()
    sample = compose(read_pnm(args.image), metrics.normalize_label(args.label), layout, font)
    out = _out_dir(args, "preview")
    ext = "pgm" if layout.channels == 1 else "ppm"
    files = {
        "composed": sample.canvas,
        "masked": apply_mask(sample.canvas, layout, sample.masked_patch_ids),
        "target": sample.target,
    }
    for name, arr in files.items():
        path = out / f"{name}.{ext}"
        write_pnm(path, arr)
        print(path)
    return 0


def cmd_capacity(args):
    rows = [
        ("capacity", f"{args.alphabet_size}^{args.n_patches}", metrics.capacity(args.n_patches, args.alphabet_size)),
        ("label_pixels", f"{args.n_patches}*{args.patch_size}^2", metrics.label_pixels(args.n_patches, args.patch_size)),
        ("one_hot_params", f"{args.features}*{args.classes}", metrics.one_hot_params(args.features, args.classes)),
    ]
    print("quantity\texpression\tvalue\tscientific")
    for name, expr, value in rows:
        print(f"{name}\t{expr}\t{value}\t{float(value):.4e}")
    return 0


def cmd_describe(args):
    """Report the model built for a vocabulary of a given size; no class count reaches the model."""
    cfg = build_config(args)
    font = default_font()
    vocab = Vocabulary.build(synthetic_vocabulary(args.vocab_size, cfg.layout.label_cells),
                             cfg.layout.label_cells, font)
    model = MaeModel(cfg.model, seed=cfg.train.seed)
    doc = {
        "vocab_size": len(vocab),
        "max_label_len": vocab.max_len,
        "param_count": param_count(cfg.model),
        "instantiated_params": int(sum(p.data.size for p in model.parameters())),
        "shapes": {name: list(p.shape) for name, p in model.named_parameters()},
    }
    print(json.dumps(doc, sort_keys=True))
    return 0


def cmd_dataset_gen(args):
    out = _out_dir(args, "shapes")
    out.mkdir(parents=True, exist_ok=True)
    items = gen_shapes(args.n, args.seed, args.side)
    lines = []
    for i, item in enumerate(items):
        name = f"{i:06d}.pgm"
        write_pnm(out / name, item.pixels)
        lines.append(f"{name}\t{item.label}")
    (out / "labels.tsv").write_text("\n".join(lines) + "\n")
    print(f"wrote {len(items)} images to {out}")
    return 0


def make_parser():
    parser = _Parser(prog="onecad", description="Classify images by painting and reading back their label text.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("train", help="train a model")
    _add_config_flags(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--data", help="dataset spec, e.g. shapes:n=400,seed=0 or idx:images=...,labels=...")
    p.add_argument("--test-data", help="held-out dataset spec scored after each epoch when val_fraction is 0")
    p.add_argument("--out")
    p.add_argument("--resume", action="store_true", help="continue from the latest checkpoint in --out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="dataset spec (defaults to the run's test_data)")
    p.add_argument("--brightness", type=float)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--limit", type=int)
    p.add_argument("--seed", type=int, help="accepted for symmetry; evaluation is deterministic")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="decode the label for one PGM/PPM image")
    p.add_argument("image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--brightness", type=float)
    p.add_argument("--dump-strip", metavar="PREFIX", help="write the cropped strip before/after brightness as PGM")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("compose-preview", help="write composed, masked and target canvases")
    p.add_argument("image")
    p.add_argument("label")
    _add_config_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compose_preview)

    p = sub.add_parser("capacity", help="label-capacity and output-layer arithmetic")
    p.add_argument("--n-patches", type=int, default=10)
    p.add_argument("--alphabet-size", type=int, default=26)
    p.add_argument("--patch-size", type=int, default=16)
    p.add_argument("--features", type=int, default=4096)
    p.add_argument("--classes", type=int, default=10_000_000)
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("describe", help="print parameter count and shapes for a vocabulary size")
    _add_config_flags(p)
    p.add_argument("--vocab-size", type=int, required=True)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("dataset", help="dataset utilities")
    dsub = p.add_subparsers(dest="dataset_command", parser_class=_Parser)
    dsub.required = True
    g = dsub.add_parser("gen", help=f"generate synthetic shapes ({', '.join(SHAPES)}) as a PGM directory")
    g.add_argument("--n", type=int, default=400)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--side", type=int, default=224)
    g.add_argument("--out")
    g.set_defaults(func=cmd_dataset_gen)
    return parser


def main(argv=None):
    try:
        args = make_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        return args.func(args)
    except OneCadError as exc:
        print(f"error[{exc.code}]: {' '.join(str(exc).split())}", file=sys.stderr)
        return exc.exit_status
    except OSError as exc:
        print(f"error[IO]: {' '.join(str(exc).split())}", file=sys.stderr)
        return 7


if __name__ == "__main__":
    sys.exit(main())
