import numpy as np
import pytest

from onecad.canvas import CanvasLayout
from onecad.glyphfont import default_font
from onecad.nn import Tensor


@pytest.fixture(scope="session")
def font():
    return default_font()


@pytest.fixture
def large_layout():
    return CanvasLayout.large()


@pytest.fixture
def desk_layout():
    return CanvasLayout.desk()


@pytest.fixture
def tiny_layout():
    # 64-px canvas, 4x4 grid, label strip of 2 cells on the bottom two rows
    return CanvasLayout(canvas_side=64, patch_size=16, image_size=32, image_origin=(16, 0),
                        label_origin=(16, 32), label_cells=2)


def numeric_grad(f, arrays, h=1e-6):
    """Central differences of scalar ``f(*arrays)`` with respect to every array entry."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = a[i]
            a[i] = old + h
            up = f(*arrays)
            a[i] = old - h
            down = f(*arrays)
            a[i] = old
            g[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def rel_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(a - b) / denom


def gradcheck(op, arrays, h=1e-6, seed=0):
    """Compare reverse-mode gradients of ``sum(op(...) * R)`` against central differences.

    Returns the worst relative error over all inputs.
    """
    rng = np.random.default_rng(seed)
    probe = Tensor(np.asarray(op(*[Tensor(a) for a in arrays]).data))
    weights = rng.standard_normal(probe.shape)

    def scalar(*arrs):
        return float(np.sum(op(*[Tensor(a) for a in arrs]).data * weights))

    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = op(*tensors)
    (out * weights).sum().backward()
    numeric = numeric_grad(scalar, [a.copy() for a in arrays], h)
    return max(rel_error(t.grad, n) for t, n in zip(tensors, numeric))
