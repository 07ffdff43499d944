"""Training and evaluation loops."""

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import from_mapping
from .canvas import apply_mask, compose, label_row_patches, patchify, unpatchify
from .data import fit_dataset, load_dataset, split
from .decode import TemplateReader, read_canvases, reconstruct_canvases
from .errors import CheckpointError
from .glyphfont import default_font
from .mae import MaeModel, batch_loss, load_checkpoint, read_checkpoint, save_checkpoint
from .metrics import EvalReport
from .optim import OptimState, Schedule, adamw_step, clip_grad_norm, lr_at
from . import report

log = logging.getLogger(__name__)

METRICS_HEADER = ("step", "epoch", "loss", "lr", "fw", "ftc", "fc")
LATEST = "latest"


def encode(items, layout, font, dtype=np.float32, workers=1):
    """Compose every item and return the ``(N, L, P)`` patch array."""
    def one(item):
        return patchify(compose(item.pixels, item.label, layout, font).canvas, layout)

    if not items:
        return np.zeros((0, layout.n_patches, layout.patch_dim), dtype=dtype)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            seqs = list(pool.map(one, items))
    else:
        seqs = [one(item) for item in items]
    return np.stack(seqs).astype(dtype)


def encode_blank(items, layout, font, dtype=np.float32):
    """Patch arrays for inference: image only, label strip left empty."""
    return np.stack([patchify(compose(it.pixels, "", layout, font).canvas, layout) for it in items]).astype(dtype)


@dataclass
class TrainResult:
    model: object
    checkpoint: Path
    rows: list
    val_report: object = None


def _fmt(v):
    return "" if v is None else f"{v:.9g}" if isinstance(v, float) else str(v)


def _row(step, epoch, loss=None, lr=None, report_=None):
    fw, ftc, fc = (report_.fw, report_.ftc, report_.fc) if report_ is not None else (None, None, None)
    return {k: _fmt(v) for k, v in zip(METRICS_HEADER, (step, epoch, loss, lr, fw, ftc, fc))}


def evaluate(model, items, layout, font, brightness=0.7, batch_size=64, reader=None, keep=0):
    """Reconstruct the label rows for ``items`` and score the decoded text.

    Returns the report and, when ``keep`` > 0, the first ``keep`` masked
    inputs and reconstructions for plotting.
    """
    reader = reader or TemplateReader(font)
    dtype = getattr(model, "dtype", np.float32)
    masked = label_row_patches(layout)
    preds, shown_in, shown_out = [], [], []
    for start in range(0, len(items), batch_size):
        chunk = items[start:start + batch_size]
        patches = encode_blank(chunk, layout, font, dtype)
        canvases = reconstruct_canvases(model, patches, layout, masked)
        preds.extend(p.decoded for p in read_canvases(canvases, layout, reader, brightness))
        while len(shown_in) < keep and len(shown_in) < start + len(chunk):
            i = len(shown_in) - start
            shown_in.append(apply_mask(unpatchify(patches[i].astype(np.float64), layout), layout, masked))
            shown_out.append(canvases[i])
    rep = EvalReport.from_pairs(zip(preds, [it.label for it in items]))
    return rep, shown_in, shown_out


def prepare_data(config, font):
    """Training items plus the held-out items scored after each epoch.

    With ``val_fraction`` 0 every item trains and the run's test set is
    scored instead; it never feeds back into training.
    """
    items = load_dataset(config.data)
    items, vocab = fit_dataset(items, config.layout.label_cells, font)
    if config.train.val_fraction > 0 and len(items) > 1:
        train_items, val_items = split(items, 1.0 - config.train.val_fraction, config.train.seed)
    elif config.test_data:
        train_items = items
        val_items, _ = fit_dataset(load_dataset(config.test_data), config.layout.label_cells, font)
    else:
        train_items, val_items = items, []
    return train_items, val_items, vocab


def _write_rows(path, rows, mode="w"):
    with open(path, mode, newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRICS_HEADER, lineterminator="\n")
        if mode == "w":
            w.writeheader()
        w.writerows(rows)


def read_metrics(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def latest_checkpoint(out_dir):
    marker = Path(out_dir) / LATEST
    if not marker.exists():
        return None
    return Path(out_dir) / marker.read_text().strip()


def train(config, out_dir, resume=False, font=None, items=None, progress=None):
    """Run the full training loop, writing checkpoints, metrics and figures to ``out_dir``.

    ``items`` may supply ``(train, val)`` lists directly instead of reading
    ``config.data``.
    """
    config.validate()
    font = font or default_font()
    out = Path(out_dir)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    (out / "effective_config.json").write_text(config.to_json() + "\n")
    tc, oc = config.train, config.optim
    layout = config.layout
    if items is None:
        train_items, val_items, _ = prepare_data(config, font)
    else:
        train_items, val_items = items
    dtype = np.dtype(tc.precision)
    X = encode(train_items, layout, font, dtype, tc.workers)
    masked = label_row_patches(layout)
    n = len(train_items)
    steps_per_epoch = math.ceil(n / tc.batch_size) if n else 0
    schedule = Schedule(oc.max_lr, oc.min_lr, max(tc.epochs * steps_per_epoch, 1), oc.warmup_fraction)

    model = MaeModel(config.model, seed=tc.seed, dtype=dtype)
    hyper = dict(beta1=oc.beta1, beta2=oc.beta2, eps=oc.eps, weight_decay=oc.weight_decay)
    state = OptimState.for_params(model.named_parameters(), **hyper)
    start_epoch, step = 0, 0
    metrics_path = out / "metrics.csv"
    rows = []
    if resume and latest_checkpoint(out) is not None:
        model, state, start_epoch, step = _restore(latest_checkpoint(out), dtype, hyper)
        rows = [r for r in read_metrics(metrics_path) if int(r["epoch"]) <= start_epoch]
        log.info("resuming from epoch %d (step %d)", start_epoch, step)
    _write_rows(metrics_path, rows)

    extra = {"run": config.to_dict()}
    ckpt = None
    if tc.epochs == 0:
        ckpt = _save(out, model, extra, 0, 0, state if tc.save_optim else None)
    val_report = None
    params = model.parameters()
    named = list(model.named_parameters())
    for epoch in range(start_epoch, tc.epochs):
        order = np.random.default_rng([tc.seed, epoch]).permutation(n)
        new_rows = []
        for b in range(steps_per_epoch):
            idx = np.sort(order[b * tc.batch_size:(b + 1) * tc.batch_size])
            batch = X[idx]
            loss = batch_loss(model(batch, masked), batch, masked, tc.loss_scope)
            loss.backward()
            clip_grad_norm(params, oc.clip_norm)
            lr = lr_at(schedule, step)
            adamw_step(named, state, lr)
            step += 1
            if step % tc.log_every == 0:
                new_rows.append(_row(step, epoch + 1, loss.item(), lr))
        if val_items and (epoch + 1) % tc.eval_every == 0:
            val_report, _, _ = evaluate(model, val_items, layout, font, config.brightness)
            new_rows.append(_row(step, epoch + 1, report_=val_report))
            log.info("epoch %d: %s", epoch + 1, val_report.summary())
        _write_rows(metrics_path, new_rows, mode="a")
        rows.extend(new_rows)
        ckpt = _save(out, model, extra, epoch + 1, step, state if tc.save_optim else None)
        if progress is not None:
            progress(epoch + 1, rows)
    if ckpt is None:
        ckpt = latest_checkpoint(out)
    report.plot_training(rows, out / "training.png")
    return TrainResult(model=model, checkpoint=ckpt, rows=rows, val_report=val_report)


def _save(out, model, extra, epoch, step, state):
    name = f"epoch_{epoch:04d}.ocad"
    path = out / "checkpoints" / name
    save_checkpoint(path, model, {**extra, "epoch": epoch, "step": step}, state)
    (out / LATEST).write_text(f"checkpoints/{name}\n")
    return path


def _restore(path, dtype, hyper):
    model, cfg, tensors = load_checkpoint(path, dtype=dtype)
    if "optim_step" not in cfg:
        raise CheckpointError(f"{path} has no optimizer state; train with save_optim to resume")
    state = OptimState(**hyper, step=cfg["optim_step"])
    for name, p in model.named_parameters():
        state.m[name] = tensors[f"optim.m/{name}"].astype(dtype)
        state.v[name] = tensors[f"optim.v/{name}"].astype(dtype)
    return model, state, int(cfg["epoch"]), int(cfg["step"])


def run_eval(model, items, layout, font, out_dir, brightness=0.7, batch_size=64, reader=None):
    """Evaluate and write ``eval.csv``, ``eval.json`` and the two figures."""
    rep, shown_in, shown_out = evaluate(model, items, layout, font, brightness, batch_size, reader, keep=8)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval.csv").write_text(rep.to_csv())
    (out / "eval.json").write_text(rep.to_json() + "\n")
    report.plot_accuracy(rep, out / "accuracy.png")
    k = len(shown_in)
    report.plot_reconstructions(shown_in, shown_out, [it.label for it in items[:k]],
                                [p for p, _ in rep.pairs[:k]], out / "reconstructions.png")
    return rep


def checkpoint_config(path):
    """The run configuration a checkpoint was trained with."""
    cfg, _ = read_checkpoint(path)
    if "run" not in cfg:
        raise CheckpointError(f"{path} carries no run configuration")
    return from_mapping(cfg["run"])
