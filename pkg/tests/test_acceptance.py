"""Acceptance suite: one PASS/FAIL line per criterion on the terminal.

Run with ``pytest tests/test_acceptance.py -v``. The desk-scale learning
criterion trains three models and takes the longest.
"""

import json
import math
import time

import numpy as np
import pytest

from onecad.canvas import CanvasLayout, crop_label_strip, label_row_patches, patch_strip, patchify, unpatchify
from onecad.cli import main
from onecad.config import from_mapping
from onecad.data import fit_dataset, gen_shapes
from onecad.decode import TemplateReader
from onecad.glyphfont import default_font, render_text, scale_brightness
from onecad.metrics import EvalReport, capacity, label_pixels, one_hot_params
from onecad.train import evaluate, train
from conftest import gradcheck
from test_mae import full_loss_fd_error
from test_nn import OPS, TRIALS
from vocab import combined

SEEDS = (0, 1, 2)
PRIMARY_SEED = 0


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        return ok
    return emit


def test_1_capacity_arithmetic(report):
    t0 = time.perf_counter()
    checks = {
        "capacity(10,26)": capacity(10, 26) == 141_167_095_653_376,
        "capacity(20,26)": 1.9e28 <= capacity(20, 26) <= 2.0e28,
        "label_pixels(20,16)": label_pixels(20, 16) == 5120,
        "label_pixels(10,16)": label_pixels(10, 16) == 2560,
        "one_hot_params(4096,1e7)": one_hot_params(4096, 10**7) == 40_960_000_000,
    }
    elapsed = time.perf_counter() - t0
    ok = all(checks.values()) and elapsed < 1.0
    failed = [k for k, v in checks.items() if not v]
    assert report(1, ok, f"capacity/pixel/one-hot arithmetic exact; failed={failed}; {elapsed * 1e3:.2f} ms")


def test_2_geometry(report):
    t0 = time.perf_counter()
    layout, font = CanvasLayout.large(), default_font()
    rng = np.random.default_rng(2)
    canvas = rng.random((1, 368, 368))
    round_trips = sum(np.array_equal(unpatchify(patchify(c, layout), layout), c)
                      for c in (rng.random((1, 368, 368)) for _ in range(100)))
    got = {
        "grid": layout.grid, "patches": layout.n_patches, "masked": len(label_row_patches(layout)),
        "crop": crop_label_strip(canvas, layout, font).shape, "strip": patch_strip(canvas, layout).shape[1:],
        "round_trips": round_trips,
    }
    want = {"grid": 23, "patches": 529, "masked": 46, "crop": (32, 160), "strip": (16, 8464), "round_trips": 100}
    elapsed = time.perf_counter() - t0
    ok = got == want and elapsed < 10
    assert report(2, ok, f"{got}; {elapsed:.2f} s")


def test_3_ocr_round_trip(report):
    t0 = time.perf_counter()
    font = default_font()
    reader = TemplateReader(font)
    words = combined(10)
    hits = {}
    for b in (1.0, 0.7):
        hits[b] = sum(reader(scale_brightness(render_text(w, font, 10), b)).decoded == w for w in words)
    elapsed = time.perf_counter() - t0
    ok = all(h == len(words) for h in hits.values()) and elapsed < 10
    assert report(3, ok, f"{hits[1.0]}/{len(words)} at brightness 1.0, {hits[0.7]}/{len(words)} at 0.7; {elapsed:.2f} s")


def test_4_gradients(report):
    t0 = time.perf_counter()
    font = default_font()
    worst = {}
    for name, (op, make) in sorted(OPS.items()):
        rng = np.random.default_rng(len(name))
        worst[name] = max(gradcheck(op, make(rng), h=1e-6, seed=t) for t in range(TRIALS))
    tiny = CanvasLayout(canvas_side=64, patch_size=16, image_size=32, image_origin=(16, 0),
                        label_origin=(16, 32), label_cells=2)
    for scope in ("masked", "full"):
        worst[f"mae_loss_{scope}"] = full_loss_fd_error(tiny, font, scope, trials=TRIALS)
    elapsed = time.perf_counter() - t0
    top = max(worst, key=worst.get)
    ok = worst[top] < 1e-4 and elapsed < 120
    assert report(4, ok, f"{len(worst)} checks x {TRIALS} trials, worst {top} rel err {worst[top]:.2e}; {elapsed:.1f} s")


def test_5_class_agnostic(report, capsys):
    docs = {}
    for size in (2, 10, 100, 10**6):
        assert main(["describe", "--vocab-size", str(size)]) == 0
        docs[size] = json.loads(capsys.readouterr().out)
    counts = {k: d["param_count"] for k, d in docs.items()}
    same = all(d["shapes"] == docs[2]["shapes"] and d["param_count"] == docs[2]["param_count"]
               == d["instantiated_params"] for d in docs.values())
    assert report(5, same, f"param_count per vocabulary size {counts}; shapes identical={same}")


def _shapes(seed, font, label_cells):
    tr, _ = fit_dataset(gen_shapes(400, seed, 224), label_cells, font)
    te, _ = fit_dataset(gen_shapes(100, 1000 + seed, 224), label_cells, font)
    return tr, te


@pytest.mark.slow
def test_6a_overfit(report, tmp_path):
    font = default_font()
    cfg = from_mapping({"preset": "desk", "train": {"epochs": 250, "eval_every": 1000}})
    tr, _ = _shapes(PRIMARY_SEED, font, cfg.layout.label_cells)
    subset = tr[:32]
    steps = cfg.train.epochs * math.ceil(len(subset) / cfg.train.batch_size)
    res = train(cfg, tmp_path, items=(subset, []))
    rep, _, _ = evaluate(res.model, subset, cfg.layout, font, cfg.brightness)
    ok = rep.fw == 1.0 and steps <= 500
    assert report("6a", ok, f"train FW {rep.fw:.2%} on a 32-sample subset after {steps} steps")


@pytest.mark.slow
def test_6b_generalization(report, tmp_path):
    font = default_font()
    results = {}
    for seed in SEEDS:
        cfg = from_mapping({"preset": "desk", "train": {"seed": seed, "eval_every": 1000}})
        tr, te = _shapes(seed, font, cfg.layout.label_cells)
        t0 = time.process_time()
        res = train(cfg, tmp_path / f"s{seed}", items=(tr, []))
        rep, _, _ = evaluate(res.model, te, cfg.layout, font, cfg.brightness)
        results[seed] = (rep.fw, (time.process_time() - t0) / 60)
    primary_ok = results[PRIMARY_SEED][0] >= 0.90
    seeds_ok = all(fw >= 0.85 for fw, _ in results.values())
    budget_ok = all(minutes <= 30 for _, minutes in results.values())
    detail = ", ".join(f"seed {s}: FW {fw:.0%} in {m:.1f} CPU-min" for s, (fw, m) in results.items())
    assert report("6b", primary_ok and seeds_ok and budget_ok,
                  f"{detail} (need >=90% on seed {PRIMARY_SEED}, >=85% on all, <=30 CPU-min each)")


def test_7_metric_ordering(report):
    rng = np.random.default_rng(7)
    alphabet = np.array(list("abcdeno_"))

    def word(lo):
        return "".join(rng.choice(alphabet, size=rng.integers(lo, 6)))

    pairs = [(word(0), word(1)) for _ in range(1000)]
    rep = EvalReport.from_pairs(pairs)
    singles = [EvalReport.from_pairs([p]) for p in pairs]
    ok = rep.fw <= rep.ftc <= rep.fc and all(r.fw <= r.ftc <= r.fc for r in singles)
    # published FW/FTC pairs obey the same ordering
    published = [(87.66, 87.91), (81.01, 82.60), (45.06, 51.34), (90.50, 92.00)]
    ok = ok and all(a <= b for a, b in published)
    assert report(7, ok, f"1000 random pairs: FW {rep.fw:.3f} <= FTC {rep.ftc:.3f} <= FC {rep.fc:.3f}")


def test_8_reproducibility(report, tmp_path):
    args = ["train", "--epochs", "2", "--data", "shapes:n=24,seed=5,side=64",
            "--test-data", "shapes:n=8,seed=6,side=64", "--set", "train.batch_size=8",
            "--set", "train.save_optim=true"]
    for run in ("a", "b"):
        assert main(args + ["--out", str(tmp_path / run)]) == 0
    files = ["metrics.csv", "checkpoints/epoch_0001.ocad", "checkpoints/epoch_0002.ocad"]
    same = {f: (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files}
    assert report(8, all(same.values()), f"byte-identical across two runs: {same}")


def test_9_scope_statement(report):
    statement = ("published accuracies (MNIST 87.66%, CIFAR10 81.01%, CIFAR100 45.06%, COVIDx 90.50%) "
                 "come from a 112M-parameter pretrained model trained for days on GPUs and are not "
                 "reproduced here; criteria 1-8 stand in at desk scale")
    assert report(9, True, statement)
