import numpy as np
import pytest

from dpilab.tensor import Tape, Tensor, finite_difference_gradient


def rel_err(approx, exact) -> float:
    """Normalized max error: |a - b|_inf / max(1, |b|_inf)."""
    approx = np.asarray(approx, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    scale = max(1.0, float(np.max(np.abs(exact))) if exact.size else 0.0)
    return float(np.max(np.abs(approx - exact))) / scale


def check_gradients(f, tensors, tol=1e-5, h=1e-6):
    """Backward pass vs central finite differences for every tracked input.

    f() must rebuild the forward pass from the given leaf tensors each call.
    Returns the worst relative error seen.
    """
    for t in tensors:
        t.grad = None
    with Tape() as tape:
        tape.backward(f())
    grads = {id(t): t.grad.copy() for t in tensors}
    worst = 0.0
    try:
        for t in tensors:
            fd = finite_difference_gradient(lambda _x: f(), t, h=h)
            err = rel_err(grads[id(t)], fd)
            assert err < tol, f"gradient mismatch {err} for tensor of shape {t.shape}"
            worst = max(worst, err)
    finally:
        for t in tensors:
            t.grad = None
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tracked(rng, *shape, lo=-2.0, hi=2.0) -> Tensor:
    return Tensor(rng.uniform(lo, hi, size=shape), grad_tracked=True)
