import numpy as np
import pytest

from ffcnet.dtypes import precision


@pytest.fixture(autouse=True)
def f64_default():
    # numerical checks run in double precision; tests that exercise the f32
    # training path switch inside their own body
    with precision("f64"):
        yield


def numeric_grad(loss_fn, arr, eps=1e-6):
    """Central-difference gradient of a scalar function w.r.t. arr, in place.

    loss_fn takes no arguments and must read arr afresh on every call.
    """
    grad = np.zeros_like(arr)
    flat = arr.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        up = loss_fn()
        flat[i] = keep - eps
        down = loss_fn()
        flat[i] = keep
        gflat[i] = (up - down) / (2 * eps)
    return grad


def rel_err(got, want, floor=1e-12):
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    denom = max(float(np.max(np.abs(want))), floor)
    return float(np.max(np.abs(got - want))) / denom
