import zlib

import numpy as np
import pytest

from conftest import gradcheck, numeric_grad, rel_error
from onecad import nn
from onecad.errors import EmptyMask, NonScalarBackward, ShapeMismatch
from onecad.nn import Tensor

TRIALS = 20
TOL = 1e-4


def _rand(rng, *shape):
    return rng.standard_normal(shape)


# op name -> (callable, factory returning the input arrays for one trial)
OPS = {
    "add": (lambda a, b: a + b, lambda r: [_rand(r, 3, 4), _rand(r, 4)]),
    "sub": (lambda a, b: a - b, lambda r: [_rand(r, 2, 3, 1), _rand(r, 3, 5)]),
    "mul": (lambda a, b: a * b, lambda r: [_rand(r, 3, 4), _rand(r, 3, 1)]),
    "div": (lambda a, b: a / b, lambda r: [_rand(r, 3, 4), r.uniform(0.5, 2.0, (1, 4)) * r.choice([-1, 1], (1, 4))]),
    "matmul": (lambda a, b: a @ b, lambda r: [_rand(r, 2, 3, 4), _rand(r, 2, 4, 5)]),
    "matmul_2d_weight": (lambda a, b: a @ b, lambda r: [_rand(r, 2, 3, 4), _rand(r, 4, 5)]),
    "transpose": (lambda a: nn.transpose(a, (2, 0, 1)), lambda r: [_rand(r, 2, 3, 4)]),
    "reshape": (lambda a: nn.reshape(a, (6, 4)), lambda r: [_rand(r, 2, 3, 4)]),
    "slice_basic": (lambda a: a[:, 1:3], lambda r: [_rand(r, 3, 5)]),
    "slice_advanced": (lambda a: a[np.array([0, 2, 2])], lambda r: [_rand(r, 3, 4)]),
    "take": (lambda a: nn.take(a, [3, 0, 3, 1], axis=1), lambda r: [_rand(r, 2, 5, 3)]),
    "concat": (lambda a, b: nn.concat([a, b], axis=1), lambda r: [_rand(r, 2, 3, 4), _rand(r, 2, 2, 4)]),
    "sum": (lambda a: nn.sum_(a, axis=1), lambda r: [_rand(r, 3, 4, 2)]),
    "sum_keepdims": (lambda a: nn.sum_(a, axis=(0, 2), keepdims=True), lambda r: [_rand(r, 3, 4, 2)]),
    "mean": (lambda a: nn.mean(a, axis=-1), lambda r: [_rand(r, 3, 4)]),
    "mean_all": (lambda a: nn.mean(a), lambda r: [_rand(r, 3, 4)]),
    "gelu": (nn.gelu, lambda r: [_rand(r, 4, 5) * 2]),
    "softmax": (lambda a: nn.softmax(a, axis=-1), lambda r: [_rand(r, 3, 6)]),
    "layer_norm": (nn.layer_norm, lambda r: [_rand(r, 2, 3, 8), 1 + 0.1 * _rand(r, 8), 0.1 * _rand(r, 8)]),
    "linear": (nn.linear, lambda r: [_rand(r, 2, 3, 4), _rand(r, 4, 5), _rand(r, 5)]),
    "attention": (lambda q, k, v: nn.scaled_dot_attention(q, k, v, heads=2),
                  lambda r: [_rand(r, 2, 3, 4), _rand(r, 2, 5, 4), _rand(r, 2, 5, 4)]),
    "mse_masked": (lambda p: nn.mse_loss(p, np.linspace(-1, 1, 24).reshape(2, 4, 3), mask=[1, 3]),
                   lambda r: [_rand(r, 2, 4, 3)]),
    "mse_full": (lambda p: nn.mse_loss(p, np.zeros((2, 4, 3))), lambda r: [_rand(r, 2, 4, 3)]),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_finite_difference(name, record_property):
    op, make = OPS[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    worst = 0.0
    for trial in range(TRIALS):
        arrays = make(rng)
        worst = max(worst, gradcheck(op, arrays, h=1e-6, seed=trial))
    record_property("max_rel_error", worst)
    assert worst < TOL, f"{name}: {worst:.2e}"


def test_gelu_derivative_tight():
    rng = np.random.default_rng(7)
    for _ in range(TRIALS):
        x = rng.uniform(-4, 4, 16)
        t = Tensor(x.copy(), requires_grad=True)
        nn.gelu(t).sum().backward()
        num, = numeric_grad(lambda a: float(nn.gelu(Tensor(a)).data.sum()), [x.copy()], h=1e-5)
        assert np.max(np.abs(t.grad - num)) < 1e-6


def test_gelu_values():
    x = np.array([-1.0, 0.0, 1.0, 3.0])
    np.testing.assert_allclose(nn.gelu(Tensor(x)).data, [-0.158655254, 0.0, 0.841344746, 2.995950393], atol=1e-9)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(0)
    y = nn.softmax(Tensor(rng.standard_normal((5, 7)) * 50)).data
    np.testing.assert_allclose(y.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(y >= 0)


def test_layer_norm_statistics():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 6, 32)) * 5 + 3
    y = nn.layer_norm(Tensor(x), Tensor(np.ones(32)), Tensor(np.zeros(32))).data
    np.testing.assert_allclose(y.mean(axis=-1), 0.0, atol=1e-10)
    np.testing.assert_allclose(y.var(axis=-1), 1.0, atol=1e-4)


def test_linear_matches_numpy():
    rng = np.random.default_rng(1)
    x, w, b = rng.standard_normal((2, 3, 4)), rng.standard_normal((4, 5)), rng.standard_normal(5)
    np.testing.assert_allclose(nn.linear(Tensor(x), Tensor(w), Tensor(b)).data, x @ w + b)


def test_attention_matches_loop():
    rng = np.random.default_rng(2)
    q, k, v = (rng.standard_normal((1, 3, 4)) for _ in range(3))
    out = nn.scaled_dot_attention(Tensor(q), Tensor(k), Tensor(v), heads=2).data
    ref = np.zeros_like(q)
    for h in range(2):
        s = slice(2 * h, 2 * h + 2)
        sc = q[0, :, s] @ k[0, :, s].T / np.sqrt(2)
        p = np.exp(sc - sc.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        ref[0, :, s] = p @ v[0, :, s]
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_non_scalar_backward():
    t = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(NonScalarBackward):
        (t * 2).backward()


def test_shared_input_accumulates():
    t = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    (t * t + t).sum().backward()
    np.testing.assert_allclose(t.grad, [3.0, 5.0])


def test_only_leaves_keep_grad():
    a = Tensor(np.ones(2), requires_grad=True)
    mid = a * 3
    mid.sum().backward()
    assert mid.grad is None
    np.testing.assert_allclose(a.grad, 3.0)


def test_no_grad_builds_no_graph():
    a = Tensor(np.ones(2), requires_grad=True)
    with nn.no_grad():
        out = a * 2
    assert not out.requires_grad and out._parents == ()


def test_shape_errors():
    with pytest.raises(ShapeMismatch):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((4,)))
    with pytest.raises(ShapeMismatch):
        nn.linear(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))
    with pytest.raises(ShapeMismatch):
        nn.concat([Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2)))], axis=0)
    with pytest.raises(ShapeMismatch):
        nn.mse_loss(Tensor(np.ones((2, 3))), np.ones((3, 2)))


def test_empty_mask():
    with pytest.raises(EmptyMask):
        nn.mse_loss(Tensor(np.ones((1, 4, 2))), np.ones((1, 4, 2)), mask=[])


def test_mse_masked_value():
    pred = np.zeros((1, 4, 2))
    target = np.arange(8.0).reshape(1, 4, 2)
    got = nn.mse_loss(Tensor(pred), target, mask=[1, 3]).item()
    assert got == pytest.approx(np.mean(target[0, [1, 3]] ** 2))


def test_debug_mode_flags_nan():
    nn.set_debug(True)
    try:
        with pytest.raises(FloatingPointError), np.errstate(invalid="ignore"):
            Tensor(np.array([0.0])) / Tensor(np.array([0.0]))
    finally:
        nn.set_debug(False)


def test_float32_preserved():
    a = Tensor(np.ones((2, 2), dtype=np.float32), requires_grad=True)
    out = nn.gelu(a * 2.0 + 1.0)
    assert out.dtype == np.float32
    out.sum().backward()
    assert a.grad.dtype == np.float32


def test_trunc_normal_bounds():
    w = nn.trunc_normal(np.random.default_rng(0), (200, 200), std=0.02)
    assert np.abs(w).max() <= 0.04
    assert w.std() == pytest.approx(0.02 * 0.88, rel=0.05)


def test_module_state_round_trip():
    rng = np.random.default_rng(0)
    block = nn.Block(8, 2, 2.0, rng)
    other = nn.Block(8, 2, 2.0, np.random.default_rng(1))
    other.load_state_dict(block.state_dict())
    x = Tensor(np.random.default_rng(3).standard_normal((1, 3, 8)))
    np.testing.assert_array_equal(block(x).data, other(x).data)


def test_determinism():
    def run():
        rng = np.random.default_rng(5)
        block = nn.Block(8, 2, 2.0, rng)
        x = Tensor(rng.standard_normal((2, 3, 8)))
        out = block(x)
        out.sum().backward()
        return out.data, [p.grad for p in block.parameters()]
    a, ga = run()
    b, gb = run()
    assert np.array_equal(a, b)
    assert all(np.array_equal(x, y) for x, y in zip(ga, gb))
    assert rel_error(a, b) == 0.0
